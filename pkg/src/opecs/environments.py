"""Seeded synthetic environments: maximum-entropy (w, r) distributions fit to
moment targets, plus two-action constructions for reward-predictor and
policy-difference streams."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from .core import LogSample

DEFAULT_ATOMS: tuple[tuple[float, float], ...] = tuple(
    (w, r) for w in (0.0, 0.5, 2.0, 100.0) for r in (0.0, 1.0)
)


class InfeasibleMoments(ValueError):
    """Requested moment targets lie outside the support's achievable hull."""

_MOMENT_FNS = {
    "E[w]": lambda w, r: w,
    "E[w2]": lambda w, r: w * w,
    "E[wr]": lambda w, r: w * r,
}


@dataclass(frozen=True)
class MaxEntSpec:
    atoms: tuple[tuple[float, float], ...] = DEFAULT_ATOMS
    moments: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if len(set(self.atoms)) != len(self.atoms):
            raise ValueError("atoms must be distinct")
        for name, _ in self.moments:
            if name not in _MOMENT_FNS:
                raise ValueError(
                    f"unknown moment {name!r}; expected one of {sorted(_MOMENT_FNS)}")

    def features(self) -> np.ndarray:
        """Rows: atoms; columns: constrained statistics."""
        return np.array([
            [_MOMENT_FNS[name](w, r) for name, _ in self.moments]
            for w, r in self.atoms
        ])

    def targets(self) -> np.ndarray:
        return np.array([t for _, t in self.moments])


@dataclass(frozen=True)
class MaxEntDistribution:
    atoms: tuple[tuple[float, float], ...]
    probs: np.ndarray
    theta: np.ndarray
    spec: MaxEntSpec = field(repr=False, default=None)

    def __post_init__(self):
        if np.any(self.probs < 0.0) or abs(float(self.probs.sum()) - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")

    @property
    def w_max(self) -> float:
        return max(w for w, _ in self.atoms)

    def moment(self, name: str) -> float:
        fn = _MOMENT_FNS[name]
        return float(sum(p * fn(w, r) for (w, r), p in zip(self.atoms, self.probs)))

    @property
    def truth(self) -> float:
        return self.moment("E[wr]")


def _hull_range(spec: MaxEntSpec, j: int) -> tuple[float, float]:
    """Achievable range of moment j over distributions matching the others."""
    feats = spec.features()
    targets = spec.targets()
    others = [k for k in range(len(targets)) if k != j]
    a_eq = np.vstack([np.ones(len(spec.atoms)), feats[:, others].T])
    b_eq = np.concatenate([[1.0], targets[others]])
    out = []
    for sign in (1.0, -1.0):
        res = linprog(sign * feats[:, j], A_eq=a_eq, b_eq=b_eq,
                      bounds=(0.0, None), method="highs")
        out.append(sign * res.fun if res.success else math.nan)
    return out[0], out[1]


def maxent_fit(spec: MaxEntSpec, tol: float = 1e-10, max_iter: int = 500) -> MaxEntDistribution:
    """Maximum-entropy distribution on the atoms matching the target moments.

    Solves the convex dual by Newton with step halving from theta = 0. An LP
    feasibility pre-check turns hull violations into a message naming the
    offending moment and its achievable range."""
    k = len(spec.atoms)
    if not spec.moments:
        return MaxEntDistribution(
            atoms=spec.atoms, probs=np.full(k, 1.0 / k), theta=np.zeros(0), spec=spec)
    feats = spec.features()
    targets = spec.targets()
    a_eq = np.vstack([np.ones(k), feats.T])
    b_eq = np.concatenate([[1.0], targets])
    res = linprog(np.zeros(k), A_eq=a_eq, b_eq=b_eq, bounds=(0.0, None), method="highs")
    if not res.success:
        worst = None
        for j, (name, target) in enumerate(spec.moments):
            lo, hi = _hull_range(spec, j)
            if math.isnan(lo) or math.isnan(hi):
                continue  # the other constraints alone are infeasible
            if lo - 1e-9 <= target <= hi + 1e-9:
                continue
            gap = lo - target if target < lo else target - hi
            rel = gap / max(1.0, abs(lo) if target < lo else abs(hi))
            if worst is None or rel > worst[0]:
                worst = (rel, name, target, lo, hi)
        if worst is not None:
            _, name, target, lo, hi = worst
            raise InfeasibleMoments(
                f"moment target {name}={target} is infeasible on this support: "
                f"achievable range given the other constraints is "
                f"[{lo:.6g}, {hi:.6g}]"
            )
        raise InfeasibleMoments("moment targets are jointly infeasible on this support")
    # whitened features keep the dual Hessian conditioned (raw scales span
    # 1 to w_max^2)
    shift = feats.mean(axis=0)
    scale = feats.std(axis=0)
    scale[scale == 0.0] = 1.0
    fs = (feats - shift) / scale
    ts = (targets - shift) / scale
    theta = np.zeros(len(targets))

    def stats(th):
        scores = fs @ th
        p = np.exp(scores - logsumexp(scores))
        val = float(logsumexp(scores) - th @ ts)
        resid = float(np.max(np.abs(feats.T @ p - targets)))
        return val, resid, p

    val, resid, p = stats(theta)
    for _ in range(max_iter):
        if resid <= tol:
            break
        grad = fs.T @ p - ts
        centered = fs - p @ fs
        hess = centered.T @ (centered * p[:, None])
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(len(ts)), grad)
        except np.linalg.LinAlgError:
            step = grad
        moved = False
        for direction in (step, grad):
            tau = 1.0
            for _ in range(60):
                cand = theta - tau * direction
                cval, cresid, cp = stats(cand)
                if cval < val:
                    theta, val, resid, p = cand, cval, cresid, cp
                    moved = True
                    break
                tau *= 0.5
            if moved:
                break
        if not moved:
            # the dual value is flat at float resolution near the optimum
            # while Newton still shrinks the residual
            tau = 1.0
            for _ in range(60):
                cand = theta - tau * step
                cval, cresid, cp = stats(cand)
                if cresid < resid * (1.0 - 1e-6):
                    theta, val, resid, p = cand, cval, cresid, cp
                    moved = True
                    break
                tau *= 0.5
        if not moved:
            raise ValueError(
                "max-entropy solve stalled before reaching the target "
                "residual; targets may lie on the boundary of the "
                "achievable set")
    else:
        raise ValueError(
            f"max-entropy solve did not reach residual {tol} in "
            f"{max_iter} iterations; targets may lie on the boundary of the "
            "achievable set")
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    return MaxEntDistribution(atoms=spec.atoms, probs=p, theta=theta, spec=spec)


def sample_stream(dist: MaxEntDistribution, seed: int, n: int) -> Iterator[LogSample]:
    """IID draws from the fitted distribution; fully determined by (seed, n).

    Philox keyed by the seed keeps parallel environments uncorrelated under a
    shared master seed."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    idx = rng.choice(len(dist.atoms), size=n, p=dist.probs)
    atoms = dist.atoms
    for i in idx:
        w, r = atoms[i]
        yield LogSample(w=w, r=r)


def env_suite(kind: str, seed: int, n_envs: int = 200) -> list[tuple[MaxEntDistribution, float]]:
    """Environment collections used by the experiments.

    coverage: n_envs distributions with E[w]=1, E[w2]=10 and a truth E[wr]
    drawn uniformly on (0, 1). width: the four fixed (truth, E[w2])
    combinations in {0.05, 0.5} x {10, 50}."""
    if kind == "coverage":
        rng = np.random.Generator(np.random.Philox(key=seed))
        out = []
        for _ in range(n_envs):
            truth = float(rng.uniform(0.0, 1.0))
            spec = MaxEntSpec(moments=(
                ("E[w]", 1.0), ("E[w2]", 10.0), ("E[wr]", truth)))
            dist = maxent_fit(spec)
            out.append((dist, dist.truth))
        return out
    if kind == "width":
        out = []
        for truth in (0.05, 0.5):
            for w2 in (10.0, 50.0):
                spec = MaxEntSpec(moments=(
                    ("E[w]", 1.0), ("E[w2]", w2), ("E[wr]", truth)))
                dist = maxent_fit(spec)
                out.append((dist, dist.truth))
        return out
    raise ValueError(f"unknown suite kind: {kind!r}")


def synth_env(
    kind: str,
    seed: int,
    n: int,
    delta: float = 0.17,
    rho: float = 1.0,
    p_target: float = 0.5,
    mu1: float = 0.8,
    mu2: float | None = None,
) -> Iterator[LogSample]:
    """Two-action logged streams for the predictor and gated experiments.

    The behavior policy picks the target's action with probability p_target;
    the target policy is deterministic, so w is 1/p_target or 0.

    kind="gated": Bernoulli rewards with fixed per-action means chosen so the
    policy-difference mean E[w r - r] equals delta exactly.

    kind="predictor": each sample gets its own context, a pair of action
    reward means drawn uniformly on (0, 1); the truth E[w r] is 1/2. The
    sample carries the control variate of a reward model with alignment
    rho in [-1, 1]: rho > 0 predicts rho times the context's true means,
    rho = 0 is the zero predictor (c identically 0), and rho < 0 predicts
    pure per-sample noise of magnitude |rho|. In a two-action environment a
    context-free model's control variate is proportional to w - 1 and is
    absorbed by the unit-mean bet, so per-sample contexts are what make the
    predictor informative.
    """
    if not (0.0 < p_target <= 1.0):
        raise ValueError(f"p_target must be in (0, 1], got {p_target}")
    if kind == "gated":
        if mu2 is None:
            if p_target == 1.0:
                if delta != 0.0:
                    raise ValueError("delta must be 0 when w is identically 1")
                mu2 = mu1
            else:
                mu2 = mu1 - delta / (1.0 - p_target)
            if not (0.0 <= mu2 <= 1.0):
                lo = (mu1 - 1.0) * (1.0 - p_target)
                hi = mu1 * (1.0 - p_target)
                raise ValueError(
                    f"difference target {delta} is unachievable with mu1={mu1}, "
                    f"p_target={p_target}: achievable range is [{lo:.6g}, {hi:.6g}]")
    elif kind == "predictor":
        if not (-1.0 <= rho <= 1.0):
            raise ValueError(f"rho must be in [-1, 1], got {rho}")
    else:
        raise ValueError(f"unknown synthetic kind: {kind!r}")
    w_hit = 1.0 / p_target
    rng = np.random.Generator(np.random.Philox(key=seed))
    if kind == "gated":
        hits = rng.random(n) < p_target
        uu = rng.random(n)
        for i in range(n):
            w, mu = (w_hit, mu1) if hits[i] else (0.0, mu2)
            yield LogSample(w=w, r=float(uu[i] < mu))
        return
    hits = rng.random(n) < p_target
    mus = rng.random((n, 2))
    uu = rng.random(n)
    noise = rng.random((n, 2)) if rho < 0.0 else None
    for i in range(n):
        taken = 0 if hits[i] else 1
        w = w_hit if taken == 0 else 0.0
        r = float(uu[i] < mus[i, taken])
        if rho > 0.0:
            q_taken = rho * mus[i, taken]
            q_bar = rho * mus[i, 0]
        elif rho < 0.0:
            q_taken = -rho * noise[i, taken]
            q_bar = -rho * noise[i, 0]
        else:
            q_taken = q_bar = 0.0
        yield LogSample(w=w, r=r, c=w * q_taken - q_bar)
