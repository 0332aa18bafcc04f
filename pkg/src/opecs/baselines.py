"""Reference baselines traded against the streaming engine: exact hindsight
betting over the full history, a per-candidate grid of wealth processes, and
the asymptotic empirical-likelihood interval (pointwise, not anytime-valid).
"""
from __future__ import annotations

import logging
import math
from typing import Iterable, Iterator

import numpy as np
from scipy.optimize import brentq
from scipy.stats import chi2

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
from .engines import _pair_interval, mirror_sample
from .qp import _argmax_fast

_log = logging.getLogger(__name__)

_RAY_CAP = 1e3  # betting rays are truncated here; any smaller bet stays valid


def _max_tau_polygon(l1, l2, d1, d2, halfplanes):
    """Largest step fraction keeping l + tau*d inside the polygon."""
    tau = 1.0
    for a1, a2, d in halfplanes:
        drop = a1 * d1 + a2 * d2
        if drop < 0.0:
            slack = a1 * l1 + a2 * l2 - d
            tau = min(tau, slack / -drop)
    return max(tau, 0.0)


def _log_wealth(u1, u2v, l1, l2, wts=None):
    """Realized log wealth; wts are multiplicities of repeated samples."""
    m = 1.0 + l1 * u1 + l2 * u2v
    if np.any(m <= 0.0):
        return -np.inf, m
    logm = np.log(m)
    if wts is None:
        return float(np.sum(logm)), m
    return float(np.dot(wts, logm)), m


def _newton_max(u1, u2v, start, halfplanes=None, max_iter=30, wts=None):
    """Damped Newton ascent of sum(wts * log(1 + l1*u1 + l2*u2v)).

    Steps are shortened to keep every multiplier positive and, when a polygon
    is given, to keep the iterate feasible. Returns (l1, l2, value,
    converged); converged means the Newton decrement fell below 1e-10.
    """
    l1, l2 = start
    f, m = _log_wealth(u1, u2v, l1, l2, wts)
    if not np.isfinite(f):
        l1 = l2 = 0.0
        f, m = _log_wealth(u1, u2v, l1, l2, wts)
    for _ in range(max_iter):
        inv = 1.0 / m
        a = u1 * inv
        b = u2v * inv
        aw = a if wts is None else wts * a
        bw = b if wts is None else wts * b
        g1 = float(np.sum(aw))
        g2 = float(np.sum(bw))
        h11 = float(np.dot(aw, a))
        h12 = float(np.dot(aw, b))
        h22 = float(np.dot(bw, b))
        det = h11 * h22 - h12 * h12
        tr = h11 + h22
        if det <= 1e-14 * max(tr * tr, 1e-300):
            ridge = 1e-10 * max(tr, 1.0)
            h11 += ridge
            h22 += ridge
            det = h11 * h22 - h12 * h12
            if det <= 0.0:
                return l1, l2, f, False
        d1 = (h22 * g1 - h12 * g2) / det
        d2 = (h11 * g2 - h12 * g1) / det
        dec = g1 * d1 + g2 * d2
        if dec < 1e-10:
            return l1, l2, f, True
        # fraction-to-boundary for the log barrier
        dm = d1 * u1 + d2 * u2v
        bad = dm < 0.0
        tau = 1.0
        if np.any(bad):
            tau = min(tau, 0.99 * float(np.min(-m[bad] / dm[bad])))
        if halfplanes is not None:
            tau = min(tau, _max_tau_polygon(l1, l2, d1, d2, halfplanes))
        if tau <= 0.0:
            return l1, l2, f, False
        for _ in range(25):
            n1 = l1 + tau * d1
            n2 = l2 + tau * d2
            fn, mn = _log_wealth(u1, u2v, n1, n2, wts)
            if fn >= f:
                l1, l2, f, m = n1, n2, fn, mn
                break
            tau *= 0.5
        else:
            return l1, l2, f, True  # no ascent left at float resolution
    return l1, l2, f, False


def _face_max(u1, u2v, px, py, ex, ey, length, wts=None, s0=None):
    """Exact 1-D maximizer of the log wealth along one polygon face.

    s0 warm-starts the Newton iteration at a known-good position and skips
    the endpoint gradient probes.
    """
    hi = min(length, _RAY_CAP)
    z = u1 * ex + u2v * ey
    zw = z if wts is None else wts * z
    m0 = 1.0 + px * u1 + py * u2v

    def grad(s):
        return float(np.sum(zw / (m0 + s * z)))

    search = True
    if s0 is not None:
        s = min(max(s0, 1e-12 * hi), (1.0 - 1e-12) * hi)
    else:
        g_lo = grad(0.0)
        if g_lo <= 0.0:
            s = 0.0
            search = False
        else:
            m_hi = m0 + hi * z
            g_hi = grad(hi) if np.all(m_hi > 0.0) else -np.inf
            if g_hi >= 0.0:
                s = hi
                search = False
            else:
                s = 0.5 * hi
    if search:
        lo, up = 0.0, hi
        for _ in range(60):
            q = m0 + s * z
            if np.any(q <= 0.0):
                up = s
                s = 0.5 * (lo + up)
                continue
            g = float(np.sum(zw / q))
            if abs(g) < 1e-12:
                break
            if g > 0.0:
                lo = s
            else:
                up = s
            h = float(np.dot(zw / q, z / q))
            step = s + g / h
            s = step if lo < step < up else 0.5 * (lo + up)
            if up - lo < 1e-14 * max(1.0, hi):
                break
    l1 = px + s * ex
    l2 = py + s * ey
    f, _ = _log_wealth(u1, u2v, l1, l2, wts)
    return l1, l2, f


def ftl_exact_bet(
    hist: list[LogSample],
    v: float,
    reg: FeasibleRegion,
    kind: str = "plain",
    start: Bet | None = None,
) -> Bet:
    """Bet maximizing the realized log wealth over the whole history at
    candidate v, solved over the polygon to 1e-8. Falls back to the
    quadratic-bound bet with a warning if Newton stalls."""
    if not hist:
        return Bet(0.0, 0.0)
    counts: dict[tuple[float, float], float] = {}
    for s in hist:
        if kind == "plain":
            u2s = s.w * s.r
        elif kind == "gated":
            u2s = s.r * (s.w - 1.0)
        else:
            u2s = s.w * s.r - s.c
        key = (s.w - 1.0, u2s)
        counts[key] = counts.get(key, 0.0) + 1.0
    u1 = np.array([k[0] for k in counts])
    u2 = np.array([k[1] for k in counts])
    wts = np.array(list(counts.values()))
    l1, l2, _ = _solve_hindsight(
        u1, u2 - v, reg,
        (start.lambda1, start.lambda2) if start is not None else (0.0, 0.0),
        wts,
    )
    if l1 is None:
        _log.warning("hindsight bet solve stalled; using quadratic-bound bet")
        u2v = u2 - v
        wu1 = wts * u1
        wu2v = wts * u2v
        l1, l2 = _argmax_fast(
            float(np.dot(wu1, u1)), float(np.dot(wu1, u2v)),
            float(np.dot(wu2v, u2v)), float(np.sum(wu1)), float(np.sum(wu2v)),
            reg.halfplanes, reg.edges, reg.vertices,
        )
    return Bet(l1, l2)


def _grad2(u1, u2v, m, wts):
    inv = 1.0 / m
    a = u1 * inv
    b = u2v * inv
    if wts is None:
        return float(np.sum(a)), float(np.sum(b))
    return float(np.dot(wts, a)), float(np.dot(wts, b))


def _face_normal_in(reg, px, py, ex, ey):
    """Inward unit-scale normal of the halfplane this face lies on."""
    qx, qy = px + ex, py + ey
    for a1, a2, d in reg.halfplanes:
        tol = 1e-9 * (1.0 + abs(d))
        if abs(a1 * px + a2 * py - d) <= tol and abs(a1 * qx + a2 * qy - d) <= tol:
            return a1, a2
    return None


def _inward_dirs(reg, vx, vy):
    """Directions along the edges incident to a vertex, pointing into the
    polygon. The feasible cone at the vertex is spanned by them."""
    out = []
    for px, py, ex, ey, length in reg.edges:
        hi = min(length, _RAY_CAP)
        if abs(px - vx) + abs(py - vy) < 1e-12:
            out.append((ex, ey))
        elif abs(px + hi * ex - vx) + abs(py + hi * ey - vy) < 1e-12:
            out.append((-ex, -ey))
    return out


def _warm_solve(u1, u2v, reg, start, wts, hint):
    """Re-check last step's active set. Concavity makes any KKT point the
    global maximizer, so a passing check settles the solve without scanning
    the other faces. Returns None when the active set moved."""
    kind, idx = hint
    if kind == "int":
        l1, l2, f, ok = _newton_max(u1, u2v, start, reg.halfplanes, wts=wts)
        if ok and all(a1 * l1 + a2 * l2 > d + 1e-9 for a1, a2, d in reg.halfplanes):
            return l1, l2, hint
        return None
    if kind == "face":
        if idx >= len(reg.edges):
            return None
        px, py, ex, ey, length = reg.edges[idx]
        hi = min(length, _RAY_CAP)
        s0 = (start[0] - px) * ex + (start[1] - py) * ey
        if not 0.0 < s0 < hi:
            s0 = 0.5 * hi
        l1, l2, f = _face_max(u1, u2v, px, py, ex, ey, length, wts, s0=s0)
        if not np.isfinite(f):
            return None
        s = (l1 - px) * ex + (l2 - py) * ey
        eps = 1e-9 * max(1.0, hi)
        if not eps < s < hi - eps:
            return None
        norm = _face_normal_in(reg, px, py, ex, ey)
        if norm is None:
            return None
        g1, g2 = _grad2(u1, u2v, 1.0 + l1 * u1 + l2 * u2v, wts)
        if g1 * norm[0] + g2 * norm[1] <= 1e-8 * (1.0 + abs(g1) + abs(g2)):
            return l1, l2, hint
        return None
    if idx >= len(reg.vertices):
        return None
    vx, vy = reg.vertices[idx]
    m = 1.0 + vx * u1 + vy * u2v
    if np.any(m <= 0.0):
        return None
    dirs = _inward_dirs(reg, vx, vy)
    if len(dirs) < 2:
        return None
    g1, g2 = _grad2(u1, u2v, m, wts)
    tol = 1e-8 * (1.0 + abs(g1) + abs(g2))
    if all(g1 * ex + g2 * ey <= tol for ex, ey in dirs):
        return vx, vy, hint
    return None


def _solve_hindsight(u1, u2v, reg, start, wts=None, hint=None):
    """Interior Newton first; if it ends on the boundary (or stalls there),
    finish by exact per-face search plus vertices. Returns the maximizer and
    a (kind, index) tag naming its active face or vertex, usable as the next
    call's hint. Returns (None, None, None) only when nothing converged."""
    if hint is not None:
        got = _warm_solve(u1, u2v, reg, start, wts, hint)
        if got is not None:
            return got
    l1, l2, f, ok = _newton_max(u1, u2v, start, reg.halfplanes, wts=wts)
    if ok:
        interior = all(
            a1 * l1 + a2 * l2 > d + 1e-9 for a1, a2, d in reg.halfplanes
        )
        if interior:
            return l1, l2, ("int", -1)
    best = (l1, l2, f) if ok else (0.0, 0.0, 0.0)
    tag = ("int", -1)
    for i, (px, py, ex, ey, length) in enumerate(reg.edges):
        c1, c2, fv = _face_max(u1, u2v, px, py, ex, ey, length, wts)
        if fv > best[2]:
            best = (c1, c2, fv)
            tag = ("face", i)
    for j, (vx, vy) in enumerate(reg.vertices):
        fv, _ = _log_wealth(u1, u2v, vx, vy, wts)
        if fv > best[2]:
            best = (vx, vy, fv)
            tag = ("vtx", j)
    if not ok and not reg.edges:
        return None, None, None
    if tag[0] == "face":
        px, py, ex, ey, length = reg.edges[tag[1]]
        hi = min(length, _RAY_CAP)
        s = (best[0] - px) * ex + (best[1] - py) * ey
        eps = 1e-9 * max(1.0, hi)
        if not eps < s < hi - eps:
            for j, (vx, vy) in enumerate(reg.vertices):
                if abs(vx - best[0]) + abs(vy - best[1]) < 1e-9:
                    tag = ("vtx", j)
                    break
    return best[0], best[1], tag


class _Kahan:
    __slots__ = ("s", "c")

    def __init__(self):
        self.s = 0.0
        self.c = 0.0

    def add(self, x):
        y = x - self.c
        t = self.s + y
        self.c = (t - self.s) - y
        self.s = t


class HindsightSide:
    """One-sided process betting the exact in-hindsight optimum each step.

    Keeps the whole history (that is the point of the ablation); rejection
    still runs through the quadratic lower-bound statistics so the interval
    semantics match the streaming engine's.

    grouped=True collapses the history to distinct (u1, u2) pairs with
    multiplicities. The objective only sees the multiset, so the bets are
    unchanged up to float summation order; on finite-support streams this
    removes the per-step cost growth, which is why it stays off wherever
    that growth is the quantity being measured.
    """

    def __init__(
        self,
        cfg: Config,
        kind: str = "plain",
        threshold: float | None = None,
        exact_rejection: bool = False,
        grouped: bool = False,
    ):
        self.cfg = cfg
        self.kind = kind
        self.threshold = math.log(2.0 / cfg.alpha) if threshold is None else threshold
        self.exact_rejection = exact_rejection
        if kind == "plain":
            self._reg = region("C", cfg)
        elif kind == "gated":
            self._reg = region("G", cfg)
        else:
            planes = region("Cq", cfg).halfplanes + ((0.0, 1.0, 0.0),)
            self._reg = FeasibleRegion.from_halfplanes(planes)
        self.dom_lo = -1.0 if kind == "gated" else 0.0
        self.v_lower = self.dom_lo
        self.grouped = grouped
        self.n = 0
        self._cap = 256
        self._base = np.empty(self._cap)  # 1 + l1*u1 + l2*u2 at the bet in force
        self._bl2 = np.empty(self._cap)
        self._ru1 = np.empty(self._cap)
        self._ru2 = np.empty(self._cap)
        self._kidx: dict[tuple[float, float], int] = {}
        self._gu1: list[float] = []
        self._gu2: list[float] = []
        self._gw: list[float] = []
        self._logk = 0.0  # realized log wealth at v_lower (exact rejection)
        self._next_root_check = 0
        self._hint = None
        self._l1 = 0.0
        self._l2 = 0.0
        self._sums = [_Kahan() for _ in range(5)]
        self._stalls = 0

    @property
    def bet(self) -> Bet:
        return Bet(self._l1, self._l2)

    def bound_coefficients(self):
        sa, sa2, sal2, sl2, sl22 = (k.s for k in self._sums)
        return (
            sa + PSI * sa2,
            -2.0 * PSI * sal2 - sl2,
            PSI * sl22,
        )

    def _exact_logk(self, v: float) -> float:
        m = self._base[: self.n] - self._bl2[: self.n] * v
        if np.any(m <= 0.0):
            return -np.inf
        return float(np.sum(np.log(m)))

    def _exact_wealth_root(self, v_cur: float, hi: float) -> float | None:
        """Largest v with realized log wealth >= threshold; the wealth is
        nonincreasing in v because every region used here keeps lambda2 >= 0."""
        n = self.n
        base = self._base[:n]
        bl2 = self._bl2[:n]
        thr = self.threshold
        logk = self._exact_logk
        if logk(hi) >= thr:
            return hi
        if logk(v_cur) < thr:
            return None
        lo, up = v_cur, hi
        v = 0.5 * (lo + up)
        for _ in range(100):
            m = base - bl2 * v
            if np.any(m <= 0.0):
                up = v
                v = 0.5 * (lo + up)
                continue
            kv = float(np.sum(np.log(m))) - thr
            if kv >= 0.0:
                lo = v
            else:
                up = v
            if up - lo < 1e-10:
                break
            dk = -float(np.sum(bl2 / m))
            step = v - kv / dk if dk < 0.0 else up
            v = step if lo < step < up else 0.5 * (lo + up)
        return lo

    def step(self, w: float, r: float, c: float | None = None) -> float:
        u1 = w - 1.0
        if self.kind == "plain":
            u2 = w * r
        elif self.kind == "gated":
            u2 = r * u1
        else:
            u2 = w * r - c
        if self.n == self._cap:
            self._cap *= 2
            for name in ("_base", "_bl2", "_ru1", "_ru2"):
                setattr(self, name, np.resize(getattr(self, name), self._cap))
        if self.grouped:
            idx = self._kidx.get((u1, u2))
            if idx is None:
                self._kidx[(u1, u2)] = len(self._gu1)
                self._gu1.append(u1)
                self._gu2.append(u2)
                self._gw.append(1.0)
            else:
                self._gw[idx] += 1.0
        else:
            self._ru1[self.n] = u1
            self._ru2[self.n] = u2
        a = self._l1 * u1 + self._l2 * u2
        self._base[self.n] = 1.0 + a
        self._bl2[self.n] = self._l2
        self.n += 1
        ks = self._sums
        ks[0].add(a)
        ks[1].add(a * a)
        ks[2].add(a * self._l2)
        ks[3].add(self._l2)
        ks[4].add(self._l2 * self._l2)
        hi = 1.0
        v = self.v_lower
        if self.exact_rejection:
            mnew = self._base[self.n - 1] - self._bl2[self.n - 1] * v
            self._logk = -math.inf if mnew <= 0.0 else self._logk + math.log(mnew)
            # the root scan is O(n); after a scan ending at the crossing,
            # back off so noise around the threshold cannot re-trigger it
            # every step
            if self._logk >= self.threshold and self.n >= self._next_root_check:
                root = self._exact_wealth_root(v, hi)
                if root is not None and root > v:
                    v = root
                self._logk = self._exact_logk(v)
                self._next_root_check = self.n + max(1, self.n // 256)
        else:
            q0, q1, q2 = self.bound_coefficients()
            if q0 + q1 + q2 >= self.threshold:
                v = hi
            else:
                root = _largest_root_raw(q0, q1, q2, self.threshold, self.dom_lo, hi)
                if root is not None and root > v:
                    v = root
        self.v_lower = v
        if self.grouped:
            u1v = np.array(self._gu1)
            u2v = np.array(self._gu2) - v
            wts = np.array(self._gw)
        else:
            u1v = self._ru1[: self.n]
            u2v = self._ru2[: self.n] - v
            wts = None
        l1, l2, hint = _solve_hindsight(
            u1v, u2v, self._reg, (self._l1, self._l2), wts, self._hint
        )
        self._hint = hint
        if l1 is None:
            self._stalls += 1
            _log.warning("hindsight solve stalled at step %d; quadratic fallback", self.n)
            wu1 = u1v if wts is None else wts * u1v
            wu2v = u2v if wts is None else wts * u2v
            l1, l2 = _argmax_fast(
                float(np.dot(wu1, u1v)), float(np.dot(wu1, u2v)),
                float(np.dot(wu2v, u2v)), float(np.sum(wu1)), float(np.sum(wu2v)),
                self._reg.halfplanes, self._reg.edges, self._reg.vertices,
            )
        self._l1, self._l2 = l1, l2
        return v


class HindsightCS:
    """Hedged pair of exact-hindsight processes (the full-history ablation)."""

    def __init__(
        self,
        cfg: Config,
        kind: str = "plain",
        exact_rejection: bool = False,
        grouped: bool = False,
    ):
        self.cfg = cfg
        self.kind = kind
        self.plus = HindsightSide(cfg, kind, exact_rejection=exact_rejection, grouped=grouped)
        self.minus = HindsightSide(cfg, kind, exact_rejection=exact_rejection, grouped=grouped)

    def update(self, s: LogSample) -> Interval:
        lo = self.plus.step(s.w, s.r, s.c)
        m = mirror_sample(s, self.kind)
        lm = self.minus.step(m.w, m.r, m.c)
        return _pair_interval(self.kind, lo, lm)

    def interval(self) -> Interval:
        return _pair_interval(self.kind, self.plus.v_lower, self.minus.v_lower)

    def run(self, stream: Iterable[LogSample]) -> Iterator[Interval]:
        for s in stream:
            yield self.update(s)


class _GridGeometry:
    """Per-candidate betting polygons, one per grid value, vectorized.

    Region rows are a . l >= -1/2 with a in {(-1,-v), (W,-v), (W, wm-v)}.
    Faces and vertices depend only on the candidate array, so everything is
    precomputed once.
    """

    def __init__(self, vv: np.ndarray, w_max: float):
        n = vv.size
        big_w = w_max - 1.0
        rows = np.empty((3, 2, n))
        rows[0, 0], rows[0, 1] = -1.0, -vv
        rows[1, 0], rows[1, 1] = big_w, -vv
        rows[2, 0], rows[2, 1] = big_w, w_max - vv
        self.rows = rows
        self.faces = []
        for i in range(3):
            a1, a2 = rows[i, 0] * np.ones(n), rows[i, 1] * np.ones(n)
            nrm2 = a1 * a1 + a2 * a2
            dead = nrm2 < 1e-20  # vacuous row (zero normal): no face
            nrm2 = np.where(dead, 1.0, nrm2)
            px = -0.5 * a1 / nrm2
            py = -0.5 * a2 / nrm2
            nrm = np.sqrt(nrm2)
            ex = -a2 / nrm
            ey = a1 / nrm
            s_lo = np.full(n, -np.inf)
            s_hi = np.full(n, np.inf)
            for j in range(3):
                if j == i:
                    continue
                b1, b2 = rows[j, 0] * np.ones(n), rows[j, 1] * np.ones(n)
                coef = b1 * ex + b2 * ey
                rhs = -0.5 - (b1 * px + b2 * py)
                tol = 1e-12 * np.maximum(1.0, np.hypot(b1, b2))
                pos = coef > tol
                neg = coef < -tol
                flat = ~(pos | neg)
                with np.errstate(divide="ignore", invalid="ignore"):
                    bound = rhs / coef
                s_lo = np.where(pos, np.maximum(s_lo, bound), s_lo)
                s_hi = np.where(neg, np.minimum(s_hi, bound), s_hi)
                dead |= flat & (rhs > tol)
            dead |= s_lo > s_hi
            s_lo = np.clip(s_lo, -_RAY_CAP, _RAY_CAP)
            s_hi = np.clip(s_hi, -_RAY_CAP, _RAY_CAP)
            self.faces.append((px, py, ex, ey, s_lo, s_hi, dead))
        self.verts = []
        for i, j in ((0, 1), (0, 2), (1, 2)):
            a1, a2 = rows[i, 0], rows[i, 1]
            b1, b2 = rows[j, 0], rows[j, 1]
            det = a1 * b2 - a2 * b1
            ok = np.abs(det) > 1e-12
            safe = np.where(ok, det, 1.0)
            vx = (-0.5 * b2 + 0.5 * a2) / safe
            vy = (0.5 * b1 - 0.5 * a1) / safe
            k = 3 - i - j
            feas = rows[k, 0] * vx + rows[k, 1] * vy >= -0.5 - 1e-9
            self.verts.append((vx, vy, ok & feas))

    def argmax(self, a11, a12, a22, b1, b2):
        """Per-candidate maximizer of PSI*(l'Al) + l'b over each polygon;
        a11 and b1 are scalars, the rest are arrays over candidates."""
        cands_x = []
        cands_y = []
        vals = []
        two_psi = 2.0 * PSI
        det = a11 * a22 - a12 * a12
        tr2 = (a11 + a22) ** 2
        ok = det > 1e-12 * np.maximum(tr2, 1e-300)
        safe = np.where(ok, det, 1.0)
        scale = -1.0 / (two_psi * safe)
        ix = scale * (a22 * b1 - a12 * b2)
        iy = scale * (a11 * b2 - a12 * b1)
        feas = ok
        for i in range(3):
            feas = feas & (self.rows[i, 0] * ix + self.rows[i, 1] * iy >= -0.5 - 1e-12)
        cands_x.append(ix)
        cands_y.append(iy)
        vals.append(np.where(feas, self._value(a11, a12, a22, b1, b2, ix, iy), -np.inf))
        for px, py, ex, ey, s_lo, s_hi, dead in self.faces:
            qa = PSI * (a11 * ex * ex + 2.0 * a12 * ex * ey + a22 * ey * ey)
            slope = (
                two_psi * (px * (a11 * ex + a12 * ey) + py * (a12 * ex + a22 * ey))
                + b1 * ex + b2 * ey
            )
            with np.errstate(divide="ignore", invalid="ignore"):
                s_star = -slope / (2.0 * qa)
            s_star = np.where(qa < -1e-15, s_star, np.where(slope > 0.0, s_hi, s_lo))
            s_star = np.clip(s_star, s_lo, s_hi)
            fx = px + s_star * ex
            fy = py + s_star * ey
            val = np.where(dead, -np.inf, self._value(a11, a12, a22, b1, b2, fx, fy))
            cands_x.append(fx)
            cands_y.append(fy)
            vals.append(val)
        for vx, vy, okv in self.verts:
            val = np.where(okv, self._value(a11, a12, a22, b1, b2, vx, vy), -np.inf)
            cands_x.append(vx)
            cands_y.append(vy)
            vals.append(val)
        vals.append(np.zeros_like(a12))  # origin
        cands_x.append(np.zeros_like(a12))
        cands_y.append(np.zeros_like(a12))
        stack = np.vstack(vals)
        pick = np.argmax(stack, axis=0)
        cols = np.arange(a12.size)
        return (
            np.vstack(cands_x)[pick, cols],
            np.vstack(cands_y)[pick, cols],
        )

    @staticmethod
    def _value(a11, a12, a22, b1, b2, x, y):
        return PSI * (a11 * x * x + 2.0 * a12 * x * y + a22 * y * y) + b1 * x + b2 * y


class _GridSide:
    """All candidates' wealth processes for one direction, updated in lock
    step; every candidate is re-solved every step regardless of elimination
    status, so the per-step cost is flat in t."""

    def __init__(self, vv: np.ndarray, w_max: float):
        self.vv = vv
        self.geo = _GridGeometry(vv, w_max)
        n = vv.size
        self.logk = np.zeros(n)
        self.l1 = np.zeros(n)
        self.l2 = np.zeros(n)
        self.su1 = 0.0
        self.su2 = 0.0
        self.su11 = 0.0
        self.su12 = 0.0
        self.su22 = 0.0
        self.n = 0

    def step(self, u1: float, u2: float):
        self.logk += np.log1p(self.l1 * u1 + self.l2 * (u2 - self.vv))
        self.su1 += u1
        self.su2 += u2
        self.su11 += u1 * u1
        self.su12 += u1 * u2
        self.su22 += u2 * u2
        self.n += 1
        vv = self.vv
        a12 = self.su12 - vv * self.su1
        a22 = self.su22 - 2.0 * vv * self.su2 + vv * vv * self.n
        b2 = self.su2 - self.n * vv
        self.l1, self.l2 = self.geo.argmax(self.su11, a12, a22, self.su1, b2)


class GridCS:
    """Per-candidate hedged wealth over a uniform grid; a candidate is
    eliminated for good once its hedged wealth crosses 2/alpha, and the
    reported interval is the surviving hull widened by one grid step."""

    def __init__(self, cfg: Config, eps: float = 0.005):
        if not (0.0 < eps < 0.5):
            raise ValueError(f"grid step must be in (0, 0.5), got {eps}")
        self.cfg = cfg
        npts = round(1.0 / eps) + 1
        self.eps = 1.0 / (npts - 1)
        self.vv = np.linspace(0.0, 1.0, npts)
        self.plus = _GridSide(self.vv, cfg.w_max)
        self.minus = _GridSide(1.0 - self.vv, cfg.w_max)
        self.eliminated = np.zeros(npts, dtype=bool)
        self._thr = math.log(2.0 / cfg.alpha)
        self._wmax_tol = cfg.w_max * (1.0 + 1e-12)

    def update(self, s: LogSample) -> Interval:
        if s.w > self._wmax_tol:
            raise ValueError(f"importance weight {s.w} exceeds w_max {self.cfg.w_max}")
        u1 = s.w - 1.0
        self.plus.step(u1, s.w * s.r)
        self.minus.step(u1, s.w * (1.0 - s.r))
        self.eliminated |= np.logaddexp(self.plus.logk, self.minus.logk) >= self._thr
        return self.interval()

    def interval(self) -> Interval:
        alive = np.nonzero(~self.eliminated)[0]
        if alive.size == 0:
            return Interval(1.0, 0.0, empty=True)
        lo = max(0.0, self.vv[alive[0]] - self.eps)
        hi = min(1.0, self.vv[alive[-1]] + self.eps)
        return Interval(lo, hi)

    def run(self, stream: Iterable[LogSample]) -> Iterator[Interval]:
        for s in stream:
            yield self.update(s)


def grid_cs(stream: Iterable[LogSample], cfg: Config, eps: float = 0.005) -> Iterator[Interval]:
    return GridCS(cfg, eps).run(stream)


def el_asymptotic_ci(batch: list[LogSample], cfg: Config) -> Interval:
    """Empirical-likelihood interval for the weighted reward mean with the
    unit-mean weight constraint profiled out. Pointwise coverage at a fixed
    sample size only: NOT valid under optional stopping."""
    if not batch:
        raise ValueError("empty batch")
    w = np.array([s.w for s in batch])
    y = np.array([s.w * s.r for s in batch])
    u1 = w - 1.0
    if np.all(w == 1.0):
        lam1 = 0.0
    elif not (w.min() < 1.0 < w.max()):
        raise ValueError(
            "empirical likelihood is degenerate: the unit mean-weight "
            "constraint needs observed weights on both sides of 1 "
            f"(observed range [{w.min()}, {w.max()}])"
        )
    else:
        lo = -1.0 / u1.max() + 1e-12
        hi = -1.0 / u1.min() - 1e-12

        def score(lam):
            return float(np.sum(u1 / (1.0 + lam * u1)))

        lam1 = brentq(score, lo, hi, xtol=1e-12)
    m0 = 1.0 + lam1 * u1
    base = float(np.sum(np.log(m0)))
    p_hat = 1.0 / (len(batch) * m0)
    v_hat = float(np.sum(p_hat * y))
    quantile = float(chi2.ppf(1.0 - cfg.alpha, 1))

    def stat(v):
        _, _, val, _ = _newton_max(u1, y - v, (lam1, 0.0), None, max_iter=60)
        return 2.0 * (val - base)

    if stat(0.0) <= quantile:
        lo_end = 0.0
    else:
        lo_end = brentq(lambda v: stat(v) - quantile, 0.0, v_hat, xtol=1e-6)
    if stat(1.0) <= quantile:
        hi_end = 1.0
    else:
        hi_end = brentq(lambda v: stat(v) - quantile, v_hat, 1.0, xtol=1e-6)
    return Interval(lo_end, hi_end)
