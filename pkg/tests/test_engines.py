import math

import numpy as np
import pytest

from opecs.core import PSI, Bet, Config, Interval, LogSample, region
from opecs.engines import (
    DoublyHedgedCS,
    ScalarCS,
    ScalarSide,
    TwoSidedCS,
    VectorProcess,
    ci_from_permutations,
    control_variate,
    exact_log_wealth,
    first_decision,
    mirror_sample,
    running_intersection,
    scalar_bet,
)

CFG = Config(alpha=0.05, w_max=2.0)


def make_stream(n, seed, kind="plain", w_max=2.0):
    """Structurally consistent synthetic logs: two actions, behavior picks
    the first with probability 1/2, target with probability p1."""
    rng = np.random.default_rng(seed)
    p1 = 0.5 * w_max  # w on the first action; must stay <= w_max
    out = []
    for _ in range(n):
        took_first = rng.random() < 0.5
        w = p1 / 0.5 if took_first else (1.0 - p1) / 0.5
        mu = 0.7 if took_first else 0.3
        r = float(rng.random() < mu)
        if kind == "predictor":
            q1, q2 = rng.random(), rng.random()
            q_taken = q1 if took_first else q2
            q_bar = p1 * q1 + (1.0 - p1) * q2
            out.append(LogSample(w, r, control_variate(w, q_taken, q_bar)))
        else:
            out.append(LogSample(w, r))
    return out


def outcomes(s, kind):
    u1 = s.w - 1.0
    if kind == "plain":
        return u1, s.w * s.r
    if kind == "predictor":
        return u1, s.w * s.r - s.c
    return u1, s.r * u1


class TestVectorProcess:
    def test_initial_step_rejects_nothing(self):
        proc = VectorProcess(CFG)
        assert proc.bet == Bet(0.0, 0.0)
        assert proc.step(2.0, 1.0) == 0.0
        assert proc.n == 1

    @pytest.mark.parametrize("kind", ["plain", "predictor", "gated"])
    def test_stats_match_direct_recomputation(self, kind):
        stream = make_stream(300, seed=5, kind=kind)
        proc = VectorProcess(CFG, kind)
        bets = []
        for s in stream:
            bets.append(proc.bet)
            proc.step(s.w, s.r, s.c)
        u1 = np.array([outcomes(s, kind)[0] for s in stream])
        u2 = np.array([outcomes(s, kind)[1] for s in stream])
        l1 = np.array([b.lambda1 for b in bets])
        l2 = np.array([b.lambda2 for b in bets])
        a = l1 * u1 + l2 * u2
        q0, q1, q2 = proc.bound_coefficients()
        assert math.isclose(q0, np.sum(a) + PSI * np.sum(a * a), abs_tol=1e-9)
        assert math.isclose(
            q1, -2.0 * PSI * np.sum(a * l2) - np.sum(l2), abs_tol=1e-9
        )
        assert math.isclose(q2, PSI * np.sum(l2 * l2), abs_tol=1e-9)
        for v in (proc.v_lower, 0.25, 0.9):
            a11, a12, a22, b1, b2 = proc.objective_at(v)
            assert math.isclose(a11, np.sum(u1 * u1), abs_tol=1e-9)
            assert math.isclose(a12, np.sum(u1 * (u2 - v)), abs_tol=1e-9)
            assert math.isclose(a22, np.sum((u2 - v) ** 2), abs_tol=1e-9)
            assert math.isclose(b1, np.sum(u1), abs_tol=1e-9)
            assert math.isclose(b2, np.sum(u2 - v), abs_tol=1e-9)

    @pytest.mark.parametrize("kind", ["plain", "predictor", "gated"])
    def test_bound_never_exceeds_exact_wealth(self, kind):
        stream = make_stream(400, seed=13, kind=kind)
        proc = VectorProcess(CFG, kind)
        bets = []
        for s in stream:
            bets.append(proc.bet)
            proc.step(s.w, s.r, s.c)
        q0, q1, q2 = proc.bound_coefficients()
        lo = -1.0 if kind == "gated" else 0.0
        for v in np.arange(lo, 1.0 + 1e-9, 0.01):
            exact = exact_log_wealth(bets, stream, float(v), kind)
            bound = q0 + q1 * v + q2 * v * v
            assert exact >= bound - 1e-9, (kind, v)

    @pytest.mark.parametrize("kind", ["plain", "predictor", "gated"])
    def test_v_lower_monotone_and_bets_feasible(self, kind):
        stream = make_stream(500, seed=21, kind=kind)
        proc = VectorProcess(CFG, kind)
        if kind == "plain":
            reg = region("C", CFG)
        elif kind == "gated":
            reg = region("G", CFG)
        else:
            reg = None  # predictor region checked through the process itself
        last = proc.v_lower
        for s in stream:
            v = proc.step(s.w, s.r, s.c)
            assert v >= last
            last = v
            if reg is not None:
                assert reg.contains(proc.bet.lambda1, proc.bet.lambda2, tol=1e-9)
            else:
                for h1, h2, d in proc._hp:
                    assert h1 * proc.bet.lambda1 + h2 * proc.bet.lambda2 >= d - 1e-9

    def test_oracle_agreement_constant_stream(self):
        # 100 samples of (w=1, r=1): compare against a per-candidate exact
        # wealth tracker using the same bets, grid step 0.005.
        proc = VectorProcess(CFG)
        grid = np.arange(0.0, 1.0 + 1e-12, 0.005)
        logk = np.zeros_like(grid)
        rejected = np.zeros_like(grid, dtype=bool)
        thr = math.log(2.0 / CFG.alpha)
        for _ in range(100):
            b = proc.bet
            logk += np.log(1.0 + b.lambda1 * 0.0 + b.lambda2 * (1.0 - grid))
            rejected |= logk >= thr
            proc.step(1.0, 1.0)
        oracle = grid[rejected][-1] if rejected.any() else 0.0
        assert abs(proc.v_lower - oracle) <= 0.005

    def test_oracle_agreement_all_zero_weights(self):
        proc = VectorProcess(CFG)
        grid = np.arange(0.0, 1.0 + 1e-12, 0.005)
        logk = np.zeros_like(grid)
        rejected = np.zeros_like(grid, dtype=bool)
        thr = math.log(2.0 / CFG.alpha)
        for _ in range(200):
            b = proc.bet
            logk += np.log(1.0 - b.lambda1 + b.lambda2 * (0.0 - grid))
            rejected |= logk >= thr
            proc.step(0.0, 0.0)
        oracle = grid[rejected][-1] if rejected.any() else 0.0
        assert abs(proc.v_lower - oracle) <= 0.005

    def test_weight_above_cap_rejected(self):
        proc = VectorProcess(CFG)
        with pytest.raises(ValueError):
            proc.step(2.5, 0.0)

    def test_predictor_requires_control_variate(self):
        proc = VectorProcess(CFG, "predictor")
        with pytest.raises(ValueError):
            proc.step(1.0, 0.5)

    def test_predictor_guard_fires_on_inconsistent_data(self):
        # Bet is feasible for the predictor polygon, but the sample's c is
        # impossible for any two-action structure with w = w_max, so the
        # multiplier dips below 1/2 at v = 1.
        proc = VectorProcess(CFG, "predictor")
        proc._l1, proc._l2 = 0.1, 0.3
        with pytest.raises(ValueError, match="multiplier"):
            proc.step(2.0, 0.0, c=1.5)


class TestMirror:
    def test_plain(self):
        m = mirror_sample(LogSample(2.0, 0.3))
        assert (m.w, m.r, m.c) == (2.0, 0.7, None)

    def test_predictor(self):
        m = mirror_sample(LogSample(2.0, 1.0, 0.3), "predictor")
        assert (m.w, m.r) == (2.0, 0.0)
        assert math.isclose(m.c, 0.7)

    def test_fixed_point(self):
        m = mirror_sample(LogSample(1.0, 0.5))
        assert (m.w, m.r) == (1.0, 0.5)

    def test_predictor_missing_c(self):
        with pytest.raises(ValueError):
            mirror_sample(LogSample(1.0, 0.5), "predictor")

    @pytest.mark.parametrize("kind", ["plain", "predictor", "gated"])
    def test_minus_engine_is_plus_on_mirrored_stream(self, kind):
        stream = make_stream(200, seed=3, kind=kind)
        cs = TwoSidedCS(CFG, kind)
        solo = VectorProcess(CFG, kind)
        for s in stream:
            cs.update(s)
            m = mirror_sample(s, kind)
            solo.step(m.w, m.r, m.c)
        assert solo.v_lower == cs.minus.v_lower
        assert solo.bound_coefficients() == cs.minus.bound_coefficients()
        assert solo.bet == cs.minus.bet


class TestTwoSided:
    def test_intervals_nested(self):
        cs = TwoSidedCS(CFG)
        prev = Interval(0.0, 1.0)
        for s in make_stream(400, seed=2):
            iv = cs.update(s)
            assert iv.lo >= prev.lo - 1e-12 and iv.hi <= prev.hi + 1e-12
            prev = iv
        assert prev.width() < 1.0

    def test_empty_stream(self):
        cs = TwoSidedCS(CFG)
        assert list(cs.run([])) == []
        assert cs.interval() == Interval(0.0, 1.0)

    def test_gated_identity_policy_contains_zero(self):
        cs = TwoSidedCS(CFG, "gated")
        rng = np.random.default_rng(0)
        for _ in range(500):
            iv = cs.update(LogSample(1.0, float(rng.random() < 0.5)))
            assert iv.contains(0.0)

    def test_gated_initial_interval(self):
        cs = TwoSidedCS(CFG, "gated")
        assert cs.interval() == Interval(-1.0, 1.0)


class TestScalar:
    def test_bet_frozen_example(self):
        assert math.isclose(scalar_bet(1.5, 2.25), 0.4, abs_tol=1e-15)

    def test_bet_degenerate(self):
        assert scalar_bet(0.0, 0.0) == 0.0
        assert scalar_bet(-3.0, 5.0) == 0.0
        assert scalar_bet(5.0, 1e-9) == 1.0 - 1e-6

    def test_bet_matches_ternary_search(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            sx = rng.normal(scale=5.0)
            sx2 = rng.uniform(0.0, 20.0)
            got = scalar_bet(sx, sx2)
            lo_b, hi_b = 0.0, 1.0 - 1e-6
            for _ in range(80):
                m1 = lo_b + (hi_b - lo_b) / 3
                m2 = hi_b - (hi_b - lo_b) / 3
                f1 = m1 * sx + (math.log1p(-m1) + m1) * sx2
                f2 = m2 * sx + (math.log1p(-m2) + m2) * sx2
                if f1 < f2:
                    lo_b = m1
                else:
                    hi_b = m2
            assert abs(got - 0.5 * (lo_b + hi_b)) <= 1e-6

    def test_side_stats_match_recomputation(self):
        rng = np.random.default_rng(31)
        side = ScalarSide(alpha=0.05)
        ys, lams = [], []
        for _ in range(300):
            y = float(rng.choice([0.0, 0.5, 2.0]) * (rng.random() < 0.5))
            lams.append(side._lam)
            side.step(y)
            ys.append(y)
        y = np.array(ys)
        lam = np.array(lams)
        u = np.log1p(-lam) + lam
        q0, q1, q2 = side.bound_coefficients()
        assert math.isclose(q0, np.sum(lam * y) + np.sum(u * y * y), abs_tol=1e-9)
        assert math.isclose(q1, -(np.sum(lam) + 2 * np.sum(u * y)), abs_tol=1e-9)
        assert math.isclose(q2, np.sum(u), abs_tol=1e-9)

    def test_side_bound_sound(self):
        rng = np.random.default_rng(17)
        side = ScalarSide(alpha=0.05)
        ys, lams = [], []
        for _ in range(400):
            y = float(rng.random() < 0.4)
            lams.append(side._lam)
            side.step(y)
            ys.append(y)
        q0, q1, q2 = side.bound_coefficients()
        for v in np.arange(0.0, 1.0 + 1e-9, 0.01):
            exact = sum(
                math.log1p(l * (y - v)) for l, y in zip(lams, ys)
            )
            assert exact >= q0 + q1 * v + q2 * v * v - 1e-9

    def test_two_sided_monotone(self):
        cs = ScalarCS(CFG)
        prev = Interval(0.0, 1.0)
        for s in make_stream(500, seed=8):
            iv = cs.update(s)
            assert iv.lo >= prev.lo - 1e-12 and iv.hi <= prev.hi + 1e-12
            prev = iv
        assert prev.width() < 1.0


class TestControlVariate:
    def test_values(self):
        assert control_variate(2.0, 1.0, 1.0) == 1.0
        assert control_variate(2.0, 0.0, 0.0) == 0.0
        assert math.isclose(control_variate(2.0, 0.5, 0.7), 0.3)

    def test_range_errors(self):
        with pytest.raises(ValueError):
            control_variate(2.0, 1.5, 0.5)
        with pytest.raises(ValueError):
            control_variate(2.0, 0.5, -0.1)
        with pytest.raises(ValueError):
            control_variate(-1.0, 0.5, 0.5)


class TestDoublyHedged:
    def test_threshold_and_nesting(self):
        dh = DoublyHedgedCS(CFG)
        assert math.isclose(dh.plain.plus.threshold, math.log(4.0 / 0.05))
        for s in make_stream(300, seed=44, kind="predictor"):
            iv = dh.update(s)
            comp_a = dh.plain.interval()
            comp_b = dh.pred.interval()
            assert iv.lo >= max(comp_a.lo, comp_b.lo) - 1e-12
            assert iv.hi <= min(comp_a.hi, comp_b.hi) + 1e-12

    def test_requires_control_variate(self):
        with pytest.raises(ValueError):
            DoublyHedgedCS(CFG).update(LogSample(1.0, 0.5))

    def test_zero_variate_wealth_equals_plain(self):
        # With c = 0 and the same bets, predictor and plain wealth coincide.
        stream = [LogSample(2.0, 1.0, 0.0), LogSample(0.0, 0.0, 0.0)]
        bets = [Bet(0.1, 0.2), Bet(0.05, 0.1)]
        for v in (0.0, 0.4, 1.0):
            assert math.isclose(
                exact_log_wealth(bets, stream, v, "plain"),
                exact_log_wealth(bets, stream, v, "predictor"),
                abs_tol=1e-15,
            )


class TestExactWealth:
    def test_zero_bets(self):
        stream = make_stream(10, seed=1)
        assert exact_log_wealth([Bet(0.0, 0.0)] * 10, stream, 0.3) == 0.0

    def test_single_step(self):
        got = exact_log_wealth([Bet(0.0, 0.5)], [LogSample(2.0, 1.0)], 0.5)
        assert math.isclose(got, math.log(1.75), abs_tol=1e-15)

    def test_nonpositive_multiplier(self):
        with pytest.raises(ValueError):
            exact_log_wealth([Bet(0.0, 1.0)], [LogSample(0.0, 0.0)], 1.0, "plain")

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            exact_log_wealth([Bet(0.0, 0.0)], [], 0.5)


class TestRunningIntersection:
    def test_spec_sequences(self):
        got = list(running_intersection([Interval(0.0, 0.9), Interval(0.1, 1.0)]))
        assert got == [Interval(0.0, 0.9), Interval(0.1, 0.9)]
        const = [Interval(0.2, 0.4)] * 3
        assert list(running_intersection(const)) == const
        got = list(running_intersection([Interval(0.2, 0.4), Interval(0.5, 0.6)]))
        assert got[0] == Interval(0.2, 0.4)
        assert got[1].empty

    def test_empty_input(self):
        assert list(running_intersection([])) == []


class TestPermutationCI:
    def test_k1_matches_single_pass(self):
        # With one permutation the batch interval is the solve against that
        # single pass's final statistics; the streaming interval may be
        # tighter because it keeps the running max over time.
        batch = make_stream(150, seed=12)
        got = ci_from_permutations(batch, CFG, k=1, seed=77)
        order = np.random.default_rng(77).permutation(len(batch))
        cs = TwoSidedCS(CFG)
        for idx in order:
            last = cs.update(batch[idx])
        thr = math.log(2.0 / CFG.alpha)
        from opecs.core import Interval, largest_root_at_threshold

        unit = Interval(0.0, 1.0)
        lo = largest_root_at_threshold(*cs.plus.bound_coefficients(), thr, unit)
        lm = largest_root_at_threshold(*cs.minus.bound_coefficients(), thr, unit)
        assert math.isclose(got.lo, 0.0 if lo is None else lo, abs_tol=1e-12)
        assert math.isclose(got.hi, 1.0 - (0.0 if lm is None else lm), abs_tol=1e-12)
        assert got.lo <= last.lo + 1e-12 and got.hi >= last.hi - 1e-12

    def test_multiple_permutations_valid_interval(self):
        batch = make_stream(400, seed=9)
        iv = ci_from_permutations(batch, CFG, k=4, seed=5)
        assert 0.0 <= iv.lo <= iv.hi <= 1.0
        assert iv.width() < 1.0

    def test_errors(self):
        batch = make_stream(5, seed=0)
        with pytest.raises(ValueError):
            ci_from_permutations(batch, CFG, k=0, seed=1)
        with pytest.raises(ValueError):
            ci_from_permutations([], CFG, k=1, seed=1)


def test_first_decision():
    ivs = [Interval(-0.5, 0.5), Interval(-0.1, 0.4), Interval(0.05, 0.3)]
    assert first_decision(ivs) == (3, "deploy")
    ivs = [Interval(-0.5, 0.5), Interval(-0.4, -0.05)]
    assert first_decision(ivs) == (2, "discard")
    assert first_decision([Interval(-0.5, 0.5)] * 4) is None
    assert first_decision([]) is None
