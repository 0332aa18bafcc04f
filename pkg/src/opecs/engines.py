"""Streaming confidence-sequence engines: the vector betting process and its
reward-predictor and deployment-gate variants, the scalar betting process,
mirroring, running intersection, and permutation-averaged batch intervals.

Every engine keeps O(1) state: wealth is tracked only through quadratic
lower-bound statistics, never through a per-candidate table.
"""
from __future__ import annotations

import math
from typing import Iterable, Iterator

import numpy as np

from .core import (
    PSI,
    Bet,
    Config,
    FeasibleRegion,
    Interval,
    LogSample,
    _largest_root_raw,
    region,
)
from .qp import _argmax_warm, region_geometry

__all__ = [
    "VectorProcess",
    "TwoSidedCS",
    "DoublyHedgedCS",
    "ScalarSide",
    "ScalarCS",
    "mirror_sample",
    "running_intersection",
    "exact_log_wealth",
    "scalar_bet",
    "ci_from_permutations",
    "first_decision",
]

_KINDS = ("plain", "predictor", "gated")


def _engine_region(kind: str, cfg: Config) -> FeasibleRegion:
    """Betting polygon valid for every candidate value of the kind's range."""
    if kind == "plain":
        return region("C", cfg)
    if kind == "predictor":
        # Predictor corners with nonnegative lambda2, so rejection of one
        # candidate extends to everything below it.
        planes = region("Cq", cfg).halfplanes + ((0.0, 1.0, 0.0),)
        return FeasibleRegion.from_halfplanes(planes)
    if kind == "gated":
        return region("G", cfg)
    raise ValueError(f"unknown engine kind: {kind!r}")


class VectorProcess:
    """One-sided streaming process betting a pair (lambda1, lambda2) per step.

    Tracks compensated sums because sample counts reach 5e5 in the timing
    experiment. step() returns the running lower confidence limit: the
    largest candidate rejected so far.
    """

    __slots__ = (
        "cfg", "kind", "threshold", "dom_lo", "dom_hi",
        "_hp", "_edges", "_verts", "_geom", "_qhint",
        "n", "v_lower", "_l1", "_l2",
        "_sa", "_ca", "_sa2", "_ca2", "_sal2", "_cal2",
        "_sl2", "_cl2", "_sl22", "_cl22",
        "_su1", "_cu1", "_su2", "_cu2",
        "_su11", "_cu11", "_su12", "_cu12", "_su22", "_cu22",
        "_wmax_tol",
    )

    def __init__(self, cfg: Config, kind: str = "plain", threshold: float | None = None):
        if kind not in _KINDS:
            raise ValueError(f"unknown engine kind: {kind!r}")
        self.cfg = cfg
        self.kind = kind
        self.threshold = math.log(2.0 / cfg.alpha) if threshold is None else threshold
        reg = _engine_region(kind, cfg)
        self._hp = reg.halfplanes
        self._edges = reg.edges
        self._verts = reg.vertices
        self._geom = region_geometry(reg)
        self._qhint = ("int", -1)
        self.dom_lo = -1.0 if kind == "gated" else 0.0
        self.dom_hi = 1.0
        self.n = 0
        self.v_lower = self.dom_lo
        self._l1 = 0.0
        self._l2 = 0.0
        self._wmax_tol = cfg.w_max * (1.0 + 1e-12)
        for name in self.__slots__:
            if name.startswith(("_s", "_c")):
                setattr(self, name, 0.0)

    @property
    def bet(self) -> Bet:
        return Bet(self._l1, self._l2)

    def bound_coefficients(self) -> tuple[float, float, float]:
        """(q0, q1, q2) of the certified log-wealth lower bound
        q0 + q1*v + q2*v**2 as a function of the candidate value."""
        q0 = self._sa + PSI * self._sa2
        q1 = -2.0 * PSI * self._sal2 - self._sl2
        q2 = PSI * self._sl22
        return q0, q1, q2

    def objective_at(self, v: float):
        """Quadratic objective coefficients (a11, a12, a22, b1, b2) of the
        next-bet maximization instantiated at candidate v."""
        a11 = self._su11
        a12 = self._su12 - v * self._su1
        a22 = self._su22 - 2.0 * v * self._su2 + v * v * self.n
        return a11, a12, a22, self._su1, self._su2 - v * self.n

    def step(self, w: float, r: float, c: float | None = None) -> float:
        kind = self.kind
        if w > self._wmax_tol:
            raise ValueError(f"importance weight {w} exceeds w_max {self.cfg.w_max}")
        u1 = w - 1.0
        if kind == "plain":
            u2 = w * r
        elif kind == "predictor":
            if c is None:
                raise ValueError("predictor engine requires a control variate")
            u2 = w * r - c
            wm = self.cfg.w_max
            if u2 < -wm - 1e-9 or u2 > 2.0 * wm + 1e-9:
                raise ValueError(
                    f"control variate places wr-c={u2} outside [-w_max, 2*w_max]"
                )
        else:
            u2 = r * u1
        l1 = self._l1
        l2 = self._l2
        a = l1 * u1 + l2 * u2
        if kind == "predictor":
            # Quadratic bound validity needs every multiplier >= 1/2 across
            # the candidate range; affine in v, so the endpoints suffice.
            m_lo = 1.0 + a - l2 * self.dom_lo
            m_hi = 1.0 + a - l2 * self.dom_hi
            if m_lo < 0.5 - 1e-9 or m_hi < 0.5 - 1e-9:
                raise ValueError(
                    "control variate inconsistent with w_max: wealth multiplier "
                    f"fell below 1/2 on sample (w={w}, r={r}, c={c})"
                )
        # Compensated accumulation, one (sum, carry) pair per statistic.
        y = a - self._ca
        t = self._sa + y
        self._ca = (t - self._sa) - y
        self._sa = t
        x = a * a
        y = x - self._ca2
        t = self._sa2 + y
        self._ca2 = (t - self._sa2) - y
        self._sa2 = t
        x = a * l2
        y = x - self._cal2
        t = self._sal2 + y
        self._cal2 = (t - self._sal2) - y
        self._sal2 = t
        y = l2 - self._cl2
        t = self._sl2 + y
        self._cl2 = (t - self._sl2) - y
        self._sl2 = t
        x = l2 * l2
        y = x - self._cl22
        t = self._sl22 + y
        self._cl22 = (t - self._sl22) - y
        self._sl22 = t
        y = u1 - self._cu1
        t = self._su1 + y
        self._cu1 = (t - self._su1) - y
        self._su1 = t
        y = u2 - self._cu2
        t = self._su2 + y
        self._cu2 = (t - self._su2) - y
        self._su2 = t
        x = u1 * u1
        y = x - self._cu11
        t = self._su11 + y
        self._cu11 = (t - self._su11) - y
        self._su11 = t
        x = u1 * u2
        y = x - self._cu12
        t = self._su12 + y
        self._cu12 = (t - self._su12) - y
        self._su12 = t
        x = u2 * u2
        y = x - self._cu22
        t = self._su22 + y
        self._cu22 = (t - self._su22) - y
        self._su22 = t
        self.n += 1
        q0 = self._sa + PSI * self._sa2
        q1 = -2.0 * PSI * self._sal2 - self._sl2
        q2 = PSI * self._sl22
        hi = self.dom_hi
        v = self.v_lower
        # the bound is concave in v (q2 <= 0), so a crossing beyond v_lower
        # requires its peak over [v_lower, hi] to reach the threshold
        if q2 < 0.0:
            vpk = -0.5 * q1 / q2
            if vpk < v:
                vpk = v
            elif vpk > hi:
                vpk = hi
        else:
            vpk = hi if q1 >= 0.0 else v
        if q0 + q1 * vpk + q2 * vpk * vpk >= self.threshold:
            if q0 + q1 * hi + q2 * hi * hi >= self.threshold:
                v = hi
            else:
                root = _largest_root_raw(q0, q1, q2, self.threshold, self.dom_lo, hi)
                if root is not None and root > v:
                    v = root
        self.v_lower = v
        a11 = self._su11
        a12 = self._su12 - v * self._su1
        a22 = self._su22 - 2.0 * v * self._su2 + v * v * self.n
        self._l1, self._l2, self._qhint = _argmax_warm(
            a11, a12, a22, self._su1, self._su2 - v * self.n,
            self._geom, self._qhint,
        )
        return v


def mirror_sample(s: LogSample, kind: str = "plain") -> LogSample:
    """Reflected sample driving the upper-confidence-limit process."""
    if kind == "plain" or kind == "gated":
        return LogSample(s.w, 1.0 - s.r)
    if kind == "predictor":
        if s.c is None:
            raise ValueError("predictor mirror requires a control variate")
        return LogSample(s.w, 1.0 - s.r, s.w - 1.0 - s.c)
    raise ValueError(f"unknown engine kind: {kind!r}")


def _pair_interval(kind: str, lo_plus: float, lo_minus: float) -> Interval:
    """Map the two one-sided limits to a two-sided interval. The minus
    process bounds the mirrored parameter: 1-v for plain/predictor, -v for
    gated."""
    lo = lo_plus
    hi = (1.0 - lo_minus) if kind != "gated" else -lo_minus
    if lo > hi:
        return Interval(lo, hi, empty=True)
    return Interval(lo, hi)


class TwoSidedCS:
    """Hedged pair of one-sided processes emitting a confidence interval per
    observed sample. The emitted sequence is already its own running
    intersection: both limits are monotone."""

    def __init__(self, cfg: Config, kind: str = "plain", threshold: float | None = None):
        self.cfg = cfg
        self.kind = kind
        self.plus = VectorProcess(cfg, kind, threshold)
        self.minus = VectorProcess(cfg, kind, threshold)
        self._lo = self.plus.v_lower
        self._lm = self.minus.v_lower
        self._iv = _pair_interval(kind, self._lo, self._lm)

    def update(self, s: LogSample) -> Interval:
        kind = self.kind
        c = s.c
        if kind == "predictor":
            if c is None:
                raise ValueError("predictor engine requires a control variate")
            cm = s.w - 1.0 - c
        else:
            cm = None
        lo = self.plus.step(s.w, s.r, c)
        lm = self.minus.step(s.w, 1.0 - s.r, cm)
        # intervals are immutable, so the cached one is reused until a limit
        # actually moves
        if lo != self._lo or lm != self._lm:
            self._lo = lo
            self._lm = lm
            self._iv = _pair_interval(kind, lo, lm)
        return self._iv

    def interval(self) -> Interval:
        return _pair_interval(self.kind, self.plus.v_lower, self.minus.v_lower)

    def run(self, stream: Iterable[LogSample]) -> Iterator[Interval]:
        for s in stream:
            yield self.update(s)


class DoublyHedgedCS:
    """Four-way split across the plain and predictor hedged pairs, each
    eliminating candidates at threshold ln(4/alpha); tracks the better
    component at a ln 4 wealth cost."""

    def __init__(self, cfg: Config):
        self.cfg = cfg
        thr = math.log(4.0 / cfg.alpha)
        self.plain = TwoSidedCS(cfg, "plain", threshold=thr)
        self.pred = TwoSidedCS(cfg, "predictor", threshold=thr)

    def update(self, s: LogSample) -> Interval:
        if s.c is None:
            raise ValueError("doubly hedged engine requires a control variate")
        a = self.plain.update(s)
        b = self.pred.update(s)
        return _intersect(a, b)

    def interval(self) -> Interval:
        return _intersect(self.plain.interval(), self.pred.interval())

    def run(self, stream: Iterable[LogSample]) -> Iterator[Interval]:
        for s in stream:
            yield self.update(s)


def _intersect(a: Interval, b: Interval) -> Interval:
    lo = max(a.lo, b.lo)
    hi = min(a.hi, b.hi)
    if a.empty or b.empty or lo > hi:
        return Interval(lo, hi, empty=True)
    return Interval(lo, hi)


def running_intersection(intervals: Iterable[Interval]) -> Iterator[Interval]:
    """Cumulative intersection; nested by construction, flagged once empty."""
    lo = -math.inf
    hi = math.inf
    dead = False
    for iv in intervals:
        lo = max(lo, iv.lo)
        hi = min(hi, iv.hi)
        dead = dead or iv.empty or lo > hi
        yield Interval(lo, hi, empty=True) if dead else Interval(lo, hi)


def exact_log_wealth(
    bets: list[Bet], samples: list[LogSample], v: float, kind: str = "plain"
) -> float:
    """Sum of log wealth multipliers at candidate v; ground truth the
    quadratic statistics only bound from below. Bet i must have been chosen
    before sample i."""
    if len(bets) != len(samples):
        raise ValueError("need one bet per sample")
    total = 0.0
    for bet, s in zip(bets, samples):
        u1 = s.w - 1.0
        if kind == "plain":
            u2 = s.w * s.r
        elif kind == "predictor":
            if s.c is None:
                raise ValueError("predictor wealth requires a control variate")
            u2 = s.w * s.r - s.c
        elif kind == "gated":
            u2 = s.r * u1
        else:
            raise ValueError(f"unknown engine kind: {kind!r}")
        mult = 1.0 + bet.lambda1 * u1 + bet.lambda2 * (u2 - v)
        if mult <= 0.0:
            raise ValueError(f"non-positive wealth multiplier {mult} at v={v}")
        total += math.log(mult)
    return total


def scalar_bet(sum_xi: float, sum_xi2: float) -> float:
    """Closed-form maximizer of the scalar wealth lower bound, clipped to
    [0, 1-1e-6); zero whenever the ratio is undefined or negative."""
    if sum_xi2 <= 0.0 or sum_xi <= 0.0:
        return 0.0
    return min(sum_xi / (sum_xi + sum_xi2), 1.0 - 1e-6)


class ScalarSide:
    """One-sided scalar betting process on outcomes y in [0, y_max]; stakes a
    single fraction on y - v and never bets on w - 1."""

    __slots__ = ("threshold", "v_lower", "n", "_lam",
                 "_sc", "_cc", "_ss", "_cs", "_sq", "_cq",
                 "_st", "_ct", "_su", "_cu",
                 "_sy", "_cy", "_sy2", "_cy2")

    def __init__(self, alpha: float, threshold: float | None = None):
        self.threshold = math.log(2.0 / alpha) if threshold is None else threshold
        self.v_lower = 0.0
        self.n = 0
        self._lam = 0.0
        for name in self.__slots__[4:]:
            setattr(self, name, 0.0)

    def bound_coefficients(self) -> tuple[float, float, float]:
        q0 = self._sc + self._sq
        q1 = -(self._ss + 2.0 * self._st)
        q2 = self._su
        return q0, q1, q2

    def step(self, y: float) -> float:
        lam = self._lam
        u = math.log1p(-lam) + lam
        inc = lam * y
        t = self._sc + (inc - self._cc)
        self._cc = (t - self._sc) - (inc - self._cc)
        self._sc = t
        t = self._ss + (lam - self._cs)
        self._cs = (t - self._ss) - (lam - self._cs)
        self._ss = t
        y2 = y * y
        inc = u * y2
        t = self._sq + (inc - self._cq)
        self._cq = (t - self._sq) - (inc - self._cq)
        self._sq = t
        inc = u * y
        t = self._st + (inc - self._ct)
        self._ct = (t - self._st) - (inc - self._ct)
        self._st = t
        t = self._su + (u - self._cu)
        self._cu = (t - self._su) - (u - self._cu)
        self._su = t
        t = self._sy + (y - self._cy)
        self._cy = (t - self._sy) - (y - self._cy)
        self._sy = t
        t = self._sy2 + (y2 - self._cy2)
        self._cy2 = (t - self._sy2) - (y2 - self._cy2)
        self._sy2 = t
        self.n += 1
        q0 = self._sc + self._sq
        q1 = -(self._ss + 2.0 * self._st)
        q2 = self._su
        v = self.v_lower
        # concave in v (q2 <= 0); skip the root find unless the peak over
        # [v_lower, 1] reaches the threshold
        if q2 < 0.0:
            vpk = -0.5 * q1 / q2
            if vpk < v:
                vpk = v
            elif vpk > 1.0:
                vpk = 1.0
        else:
            vpk = 1.0 if q1 >= 0.0 else v
        if q0 + q1 * vpk + q2 * vpk * vpk >= self.threshold:
            if q0 + q1 + q2 >= self.threshold:
                v = 1.0
            else:
                root = _largest_root_raw(q0, q1, q2, self.threshold, 0.0, 1.0)
                if root is not None and root > v:
                    v = root
        self.v_lower = v
        sum_xi = self._sy - self.n * v
        sum_xi2 = self._sy2 - 2.0 * v * self._sy + self.n * v * v
        self._lam = scalar_bet(sum_xi, sum_xi2)
        return v


class ScalarCS:
    """Hedged pair of scalar processes; the importance-weight mean is never
    exploited, so intervals are valid but wider than the vector engine's."""

    def __init__(self, cfg: Config, threshold: float | None = None):
        self.cfg = cfg
        self.plus = ScalarSide(cfg.alpha, threshold)
        self.minus = ScalarSide(cfg.alpha, threshold)
        self._wmax_tol = cfg.w_max * (1.0 + 1e-12)
        self._lo = 0.0
        self._lm = 0.0
        self._iv = _pair_interval("plain", 0.0, 0.0)

    def update(self, s: LogSample) -> Interval:
        w = s.w
        if w > self._wmax_tol:
            raise ValueError(f"importance weight {w} exceeds w_max {self.cfg.w_max}")
        lo = self.plus.step(w * s.r)
        lm = self.minus.step(w * (1.0 - s.r))
        if lo != self._lo or lm != self._lm:
            self._lo = lo
            self._lm = lm
            self._iv = _pair_interval("plain", lo, lm)
        return self._iv

    def interval(self) -> Interval:
        return _pair_interval("plain", self.plus.v_lower, self.minus.v_lower)

    def run(self, stream: Iterable[LogSample]) -> Iterator[Interval]:
        for s in stream:
            yield self.update(s)


def control_variate(w: float, q_taken: float, q_bar: float) -> float:
    """Zero-mean correction w*q_taken - q_bar from a reward predictor; q_bar
    is the predictor's value under the target policy."""
    if not (0.0 <= q_taken <= 1.0):
        raise ValueError(f"q_taken must be in [0,1], got {q_taken}")
    if not (0.0 <= q_bar <= 1.0):
        raise ValueError(f"q_bar must be in [0,1], got {q_bar}")
    if not w >= 0.0:
        raise ValueError(f"importance weight must be >= 0, got {w}")
    return w * q_taken - q_bar


def ci_from_permutations(
    batch: list[LogSample], cfg: Config, k: int, seed: int, kind: str = "plain"
) -> Interval:
    """Batch confidence interval from k seeded uniform permutations of the
    data. Rejection is certified against the permutation-averaged lower
    bound, which by Jensen under-states the averaged wealth; the result is a
    fixed-sample interval, not an anytime sequence."""
    if k < 1:
        raise ValueError("need at least one permutation")
    if not batch:
        raise ValueError("empty batch")
    rng = np.random.default_rng(seed)
    n = len(batch)
    acc = {"plus": [0.0] * 5, "minus": [0.0] * 5}
    for _ in range(k):
        order = rng.permutation(n)
        plus = VectorProcess(cfg, kind)
        minus = VectorProcess(cfg, kind)
        for idx in order:
            s = batch[idx]
            plus.step(s.w, s.r, s.c)
            m = mirror_sample(s, kind)
            minus.step(m.w, m.r, m.c)
        for key, proc in (("plus", plus), ("minus", minus)):
            sums = acc[key]
            sums[0] += proc._sa
            sums[1] += proc._sa2
            sums[2] += proc._sal2
            sums[3] += proc._sl2
            sums[4] += proc._sl22
    thr = math.log(2.0 / cfg.alpha)
    dom_lo = -1.0 if kind == "gated" else 0.0
    limits = {}
    for key, sums in acc.items():
        sa, sa2, sal2, sl2, sl22 = (x / k for x in sums)
        q0 = sa + PSI * sa2
        q1 = -2.0 * PSI * sal2 - sl2
        q2 = PSI * sl22
        if q0 + q1 + q2 >= thr:
            limits[key] = 1.0
        else:
            root = _largest_root_raw(q0, q1, q2, thr, dom_lo, 1.0)
            limits[key] = dom_lo if root is None else root
    return _pair_interval(kind, limits["plus"], limits["minus"])


def first_decision(intervals: Iterable[Interval]) -> tuple[int, str] | None:
    """First time a difference interval excludes zero: ('deploy' when the
    lower limit is positive, 'discard' when the upper limit is negative);
    None if neither happens. Times are 1-based."""
    for t, iv in enumerate(intervals, start=1):
        if iv.empty:
            continue
        if iv.lo > 0.0:
            return t, "deploy"
        if iv.hi < 0.0:
            return t, "discard"
    return None
