"""Shared domain types, logarithm lower bounds, quadratic-root helpers and
feasible betting regions used by every wealth engine."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

# Curvature constant of the quadratic lower bound on ln(1+x) over x >= -1/2.
PSI = 2.0 - 4.0 * math.log(2.0)  # -0.7725887222397811

_INF = float("inf")


@dataclass(frozen=True, slots=True)
class Config:
    """Confidence level and importance-weight ceiling shared by all engines."""

    alpha: float
    w_max: float

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")
        if not self.w_max >= 1.0:
            raise ValueError(f"w_max must be >= 1, got {self.w_max}")


@dataclass(frozen=True, slots=True)
class LogSample:
    """One logged interaction reduced to importance weight, reward and an
    optional zero-mean control variate."""

    w: float
    r: float
    c: float | None = None

    def __post_init__(self) -> None:
        if not self.w >= 0.0:
            raise ValueError(f"importance weight must be >= 0, got {self.w}")
        if not (0.0 <= self.r <= 1.0):
            raise ValueError(f"reward must be in [0,1], got {self.r}")
        if self.c is not None and not self.c >= -1.0:
            raise ValueError(f"control variate must be >= -1, got {self.c}")


@dataclass(frozen=True, slots=True)
class Bet:
    """The pair of stakes risked per step: lambda1 on w-1, lambda2 on the
    value coordinate."""

    lambda1: float
    lambda2: float


@dataclass(frozen=True, slots=True)
class Interval:
    """A confidence interval [lo, hi]; ``empty`` flags a degenerate
    intersection where the endpoints have crossed."""

    lo: float
    hi: float
    empty: bool = False

    def __post_init__(self) -> None:
        if not self.empty and self.lo > self.hi:
            raise ValueError(f"interval endpoints crossed: [{self.lo}, {self.hi}]")

    def width(self) -> float:
        return 0.0 if self.empty else self.hi - self.lo

    def contains(self, v: float) -> bool:
        return (not self.empty) and self.lo <= v <= self.hi


def log1p_quad_lower(x: float) -> float:
    """Quadratic lower bound x + PSI*x**2 <= ln(1+x), valid for x >= -1/2
    with equality at x = 0 and x = -1/2."""
    if x < -0.5 - 1e-12:
        raise ValueError(f"quadratic log bound requires x >= -1/2, got {x}")
    return x + PSI * x * x


def fan_lower(lam: float, xi: float) -> float:
    """Scalar-bet lower bound lam*xi + (ln(1-lam)+lam)*xi**2 <= ln(1+lam*xi),
    valid for xi >= -1 and lam in [0,1), with equality at xi = -1."""
    if xi < -1.0 - 1e-12:
        raise ValueError(f"scalar bound requires xi >= -1, got {xi}")
    if not (0.0 <= lam < 1.0):
        raise ValueError(f"scalar bound requires lam in [0,1), got {lam}")
    return lam * xi + (math.log(1.0 - lam) + lam) * xi * xi


def _largest_root_raw(
    q0: float, q1: float, q2: float, thresh: float, lo: float, hi: float
) -> float | None:
    """Largest real root of q0 + q1*v + q2*v**2 = thresh inside [lo, hi],
    clamped to the interval; None if no real root lies there.

    Degenerate cases: |q2| below 1e-12 is treated as linear; a fully constant
    polynomial returns hi when it sits at or above the threshold everywhere
    and None otherwise.
    """
    p0 = q0 - thresh
    tol = 1e-9
    if abs(q2) < 1e-12:
        if abs(q1) < 1e-12:
            return hi if p0 >= 0.0 else None
        root = -p0 / q1
        if lo - tol <= root <= hi + tol:
            return min(max(root, lo), hi)
        return None
    disc = q1 * q1 - 4.0 * q2 * p0
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    # Numerically stable split: the large-magnitude root first.
    if q1 >= 0.0:
        big = -(q1 + sq) / 2.0
    else:
        big = -(q1 - sq) / 2.0
    ra = big / q2
    rb = p0 / big if big != 0.0 else ra
    best = None
    for root in (ra, rb):
        if lo - tol <= root <= hi + tol and (best is None or root > best):
            best = root
    if best is None:
        return None
    return min(max(best, lo), hi)


def largest_root_at_threshold(
    q0: float, q1: float, q2: float, thresh: float, domain: Interval
) -> float | None:
    """Largest real root of the quadratic q0 + q1*v + q2*v**2 = thresh clamped
    into ``domain``, or None when no real root intersects it."""
    return _largest_root_raw(q0, q1, q2, thresh, domain.lo, domain.hi)


@dataclass(frozen=True)
class FeasibleRegion:
    """Intersection of half-planes a1*l1 + a2*l2 >= d with precomputed
    polygon geometry.

    ``edges`` holds one entry per active face as (px, py, ex, ey, length)
    where length may be inf for a ray; ``vertices`` are the finite corner
    points. Both are derived once at construction.
    """

    halfplanes: tuple[tuple[float, float, float], ...]
    vertices: tuple[tuple[float, float], ...] = field(default=(), compare=False)
    edges: tuple[tuple[float, float, float, float, float], ...] = field(
        default=(), compare=False
    )

    @staticmethod
    def from_halfplanes(
        halfplanes: tuple[tuple[float, float, float], ...]
    ) -> "FeasibleRegion":
        verts, edges = _polygon_geometry(halfplanes)
        return FeasibleRegion(halfplanes=halfplanes, vertices=verts, edges=edges)

    def contains(self, l1: float, l2: float, tol: float = 1e-10) -> bool:
        for a1, a2, d in self.halfplanes:
            if a1 * l1 + a2 * l2 < d - tol:
                return False
        return True


def _polygon_geometry(halfplanes):
    """Clip each half-plane boundary line against the others to recover the
    polygon's faces and corner points. Rays are kept with infinite length."""
    edges = []
    vertices = []
    tol = 1e-9
    for i, (a1, a2, d) in enumerate(halfplanes):
        nrm = math.hypot(a1, a2)
        if nrm < tol:
            raise ValueError("degenerate half-plane with zero normal")
        px, py = a1 * d / (nrm * nrm), a2 * d / (nrm * nrm)
        ex, ey = -a2 / nrm, a1 / nrm
        s_lo, s_hi = -_INF, _INF
        alive = True
        for j, (b1, b2, e) in enumerate(halfplanes):
            if j == i:
                continue
            coef = b1 * ex + b2 * ey
            rhs = e - (b1 * px + b2 * py)
            if abs(coef) < 1e-14:
                if rhs > tol:
                    alive = False
                    break
                continue
            bound = rhs / coef
            if coef > 0.0:
                s_lo = max(s_lo, bound)
            else:
                s_hi = min(s_hi, bound)
        if not alive or s_lo > s_hi + tol:
            continue
        lo_fin = s_lo > -_INF
        hi_fin = s_hi < _INF
        if lo_fin:
            vertices.append((px + s_lo * ex, py + s_lo * ey))
        if hi_fin:
            vertices.append((px + s_hi * ex, py + s_hi * ey))
        if lo_fin and hi_fin:
            if s_hi - s_lo > tol:
                edges.append(
                    (px + s_lo * ex, py + s_lo * ey, ex, ey, s_hi - s_lo)
                )
        elif lo_fin:
            edges.append((px + s_lo * ex, py + s_lo * ey, ex, ey, _INF))
        elif hi_fin:
            edges.append((px + s_hi * ex, py + s_hi * ey, -ex, -ey, _INF))
        else:
            raise ValueError("unbounded half-plane boundary with no clipping")
    uniq: list[tuple[float, float]] = []
    for vx, vy in vertices:
        if not any(abs(vx - ux) < 1e-9 and abs(vy - uy) < 1e-9 for ux, uy in uniq):
            uniq.append((vx, vy))
    return tuple(uniq), tuple(edges)


def region(kind: str, cfg: Config, v: float | None = None, m: float | None = None) -> FeasibleRegion:
    """Feasible betting region by name.

    C, Cq and G are the fixed regions safe for every candidate value; Dv, Ev
    and Gv are the per-value corner constraint sets (Dv/Ev require v in
    [0,1]). Half-planes are encoded as a1*l1 + a2*l2 >= d.
    """
    wm = cfg.w_max
    big_w = wm - 1.0
    if kind == "C":
        planes = (
            (0.0, 1.0, 0.0),
            (-1.0, -1.0, -0.5),
            (big_w, -1.0, -0.5),
        )
    elif kind == "Cq":
        planes = (
            (-1.0, -1.0, -0.5),
            (-1.0, 1.0, -0.5),
            (big_w, -big_w - 1.0, -0.5),
            (big_w, big_w + 1.0, -0.5),
        )
    elif kind == "G":
        mm = 0.5 if m is None else m
        planes = (
            (0.0, 1.0, 0.0),
            (big_w, -1.0, mm - 1.0),
            (-1.0, -2.0, mm - 1.0),
        )
    elif kind == "Dv":
        if v is None or not (0.0 <= v <= 1.0):
            raise ValueError(f"Dv requires v in [0,1], got {v}")
        mm = 0.5 if m is None else m
        planes = (
            (-1.0, -v, mm - 1.0),
            (big_w, -v, mm - 1.0),
            (big_w, wm - v, mm - 1.0),
        )
    elif kind == "Ev":
        if v is None or not (0.0 <= v <= 1.0):
            raise ValueError(f"Ev requires v in [0,1], got {v}")
        mm = 0.5 if m is None else m
        vp = 1.0 - v
        planes = (
            (-1.0, -v, mm - 1.0),
            (-1.0, vp, mm - 1.0),
            (big_w, -big_w - v, mm - 1.0),
            (big_w, big_w + vp, mm - 1.0),
        )
    elif kind == "Gv":
        mm = 0.5 if m is None else m
        planes = (
            (-1.0, -2.0, mm - 1.0),
            (-1.0, 0.0, mm - 1.0),
            (big_w, -1.0, mm - 1.0),
            (big_w, big_w, mm - 1.0),
        )
    else:
        raise ValueError(f"unknown region kind: {kind!r}")
    # w_max = 1 can zero out a Dv/Ev row; a zero-normal row with d <= 0
    # constrains nothing and is dropped rather than rejected
    planes = tuple(p for p in planes if p[0] != 0.0 or p[1] != 0.0 or p[2] > 0.0)
    return FeasibleRegion.from_halfplanes(planes)
