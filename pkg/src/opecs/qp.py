"""Exact maximizer of the concave quadratic wealth lower bound over a
two-variable polygon of feasible bets."""
from __future__ import annotations

import logging
from dataclasses import dataclass

from .core import PSI, Bet, FeasibleRegion

_log = logging.getLogger(__name__)

_INF = float("inf")
_TINY = 1e-300


@dataclass(frozen=True)
class QuadObjective:
    """Coefficients of the objective PSI * l'Al + l'b with A symmetric PSD."""

    a11: float
    a12: float
    a22: float
    b1: float
    b2: float

    def __post_init__(self) -> None:
        scale = max(1.0, self.a11 + self.a22)
        if self.a11 < -1e-10 * scale or self.a22 < -1e-10 * scale:
            raise ValueError("objective matrix has a negative diagonal")
        det = self.a11 * self.a22 - self.a12 * self.a12
        if det < -1e-10 * scale * scale:
            raise ValueError("objective matrix is not positive semi-definite")

    def value(self, l1: float, l2: float) -> float:
        quad = self.a11 * l1 * l1 + 2.0 * self.a12 * l1 * l2 + self.a22 * l2 * l2
        return PSI * quad + self.b1 * l1 + self.b2 * l2


def _face_normal_in(halfplanes, px, py, ex, ey):
    """Inward normal of the halfplane a face lies on, or None."""
    qx, qy = px + ex, py + ey
    for a1, a2, d in halfplanes:
        tol = 1e-9 * (1.0 + abs(d))
        if abs(a1 * px + a2 * py - d) <= tol and abs(a1 * qx + a2 * qy - d) <= tol:
            return a1, a2
    return None


def region_geometry(reg: FeasibleRegion):
    """Polygon pieces plus per-face inward normals and per-vertex inward edge
    directions, packaged for the warm-started maximizer."""
    face_in = tuple(
        _face_normal_in(reg.halfplanes, px, py, ex, ey)
        for px, py, ex, ey, _ in reg.edges
    )
    vert_dirs = []
    for vx, vy in reg.vertices:
        dirs = []
        for px, py, ex, ey, ln in reg.edges:
            if abs(px - vx) + abs(py - vy) < 1e-12:
                dirs.append((ex, ey))
            elif ln != _INF and abs(px + ln * ex - vx) + abs(py + ln * ey - vy) < 1e-12:
                dirs.append((-ex, -ey))
        vert_dirs.append(tuple(dirs))
    return (reg.halfplanes, reg.edges, reg.vertices, face_in, tuple(vert_dirs))


def _argmax_tagged(
    a11: float,
    a12: float,
    a22: float,
    b1: float,
    b2: float,
    halfplanes,
    edges,
    vertices,
) -> tuple[float, float, tuple]:
    """Full enumeration over precomputed polygon geometry.

    Tries the unconstrained stationary point first; otherwise the exact
    per-face one-dimensional maxima plus all vertices. Ties go to the
    candidate of smallest norm so streaming traces are reproducible. The
    returned tag names the winner's active face or vertex for warm restarts.
    """
    two_psi = 2.0 * PSI
    tr = a11 + a22
    det = a11 * a22 - a12 * a12
    if det > 1e-12 * max(tr * tr, _TINY):
        # lam = -(2 psi A)^{-1} b; -1/(2 psi) > 0 since psi < 0.
        scale = -1.0 / (two_psi * det)
        l1 = scale * (a22 * b1 - a12 * b2)
        l2 = scale * (a11 * b2 - a12 * b1)
        ok = True
        for h1, h2, d in halfplanes:
            if h1 * l1 + h2 * l2 < d - 1e-12:
                ok = False
                break
        if ok:
            return l1, l2, ("int", -1)
    best_val = 0.0
    best_norm = 0.0
    best = (0.0, 0.0)  # origin is feasible in every region we build
    tag = ("int", -1)
    for i, (px, py, ex, ey, ln) in enumerate(edges):
        qa = PSI * (a11 * ex * ex + 2.0 * a12 * ex * ey + a22 * ey * ey)
        slope0 = (
            two_psi * (px * (a11 * ex + a12 * ey) + py * (a12 * ex + a22 * ey))
            + b1 * ex
            + b2 * ey
        )
        if qa < -1e-15:
            s = -slope0 / (2.0 * qa)
            if s < 0.0:
                s = 0.0
            elif s > ln:
                s = ln
        else:
            if slope0 > 1e-12 and ln == _INF:
                raise ValueError(
                    "objective is unbounded along a ray of the feasible region"
                )
            continue  # flat or linear face: endpoints are vertices
        l1 = px + s * ex
        l2 = py + s * ey
        quad = a11 * l1 * l1 + 2.0 * a12 * l1 * l2 + a22 * l2 * l2
        val = PSI * quad + b1 * l1 + b2 * l2
        nrm = l1 * l1 + l2 * l2
        if val > best_val + 1e-12 or (val > best_val - 1e-12 and nrm < best_norm - 1e-15):
            best_val = val
            best_norm = nrm
            best = (l1, l2)
            tag = ("face", i)
    for j, (l1, l2) in enumerate(vertices):
        quad = a11 * l1 * l1 + 2.0 * a12 * l1 * l2 + a22 * l2 * l2
        val = PSI * quad + b1 * l1 + b2 * l2
        nrm = l1 * l1 + l2 * l2
        if val > best_val + 1e-12 or (val > best_val - 1e-12 and nrm < best_norm - 1e-15):
            best_val = val
            best_norm = nrm
            best = (l1, l2)
            tag = ("vtx", j)
    if tag[0] == "face":
        # clamped face endpoints are polygon corners; retag so warm restarts
        # land on the vertex path
        for j, (vx, vy) in enumerate(vertices):
            if abs(vx - best[0]) + abs(vy - best[1]) < 1e-12:
                tag = ("vtx", j)
                break
    return best[0], best[1], tag


def _argmax_fast(
    a11: float,
    a12: float,
    a22: float,
    b1: float,
    b2: float,
    halfplanes,
    edges,
    vertices,
) -> tuple[float, float]:
    l1, l2, _ = _argmax_tagged(a11, a12, a22, b1, b2, halfplanes, edges, vertices)
    return l1, l2


def _argmax_warm(a11, a12, a22, b1, b2, geom, hint):
    """Verify last step's active set before scanning. A passing KKT check is
    the global maximizer by concavity; otherwise fall back to the full
    enumeration. Returns (l1, l2, tag)."""
    halfplanes, edges, vertices, face_in, vert_dirs = geom
    two_psi = 2.0 * PSI
    kind, idx = hint
    if kind == "int":
        tr = a11 + a22
        det = a11 * a22 - a12 * a12
        if det > 1e-12 * max(tr * tr, _TINY):
            scale = -1.0 / (two_psi * det)
            l1 = scale * (a22 * b1 - a12 * b2)
            l2 = scale * (a11 * b2 - a12 * b1)
            for h1, h2, d in halfplanes:
                if h1 * l1 + h2 * l2 < d - 1e-12:
                    break
            else:
                return l1, l2, hint
    elif kind == "face":
        px, py, ex, ey, ln = edges[idx]
        norm = face_in[idx]
        qa = PSI * (a11 * ex * ex + 2.0 * a12 * ex * ey + a22 * ey * ey)
        if norm is not None and qa < -1e-15:
            slope0 = (
                two_psi * (px * (a11 * ex + a12 * ey) + py * (a12 * ex + a22 * ey))
                + b1 * ex
                + b2 * ey
            )
            s = -slope0 / (2.0 * qa)
            if 0.0 < s < ln:
                l1 = px + s * ex
                l2 = py + s * ey
                g1 = two_psi * (a11 * l1 + a12 * l2) + b1
                g2 = two_psi * (a12 * l1 + a22 * l2) + b2
                if g1 * norm[0] + g2 * norm[1] <= 1e-12 * (1.0 + abs(g1) + abs(g2)):
                    return l1, l2, hint
    else:
        vx, vy = vertices[idx]
        dirs = vert_dirs[idx]
        if len(dirs) >= 2:
            g1 = two_psi * (a11 * vx + a12 * vy) + b1
            g2 = two_psi * (a12 * vx + a22 * vy) + b2
            tol = 1e-12 * (1.0 + abs(g1) + abs(g2))
            for dx, dy in dirs:
                if g1 * dx + g2 * dy > tol:
                    break
            else:
                return vx, vy, hint
    return _argmax_tagged(a11, a12, a22, b1, b2, halfplanes, edges, vertices)


def argmax_quadratic(obj: QuadObjective, reg: FeasibleRegion) -> Bet:
    """Feasible bet maximizing PSI * l'Al + l'b over the polygon ``reg``.

    Exact for the concave objective: the answer is either the unconstrained
    stationary point (when A is invertible and the point is feasible), a
    per-face stationary point, or a vertex. Singular A skips the inverse and
    relies on the face/vertex enumeration alone.
    """
    tr = obj.a11 + obj.a22
    det = obj.a11 * obj.a22 - obj.a12 * obj.a12
    if det <= 1e-12 * max(tr * tr, _TINY):
        _log.debug("singular objective matrix; using face/vertex enumeration")
    l1, l2 = _argmax_fast(
        obj.a11,
        obj.a12,
        obj.a22,
        obj.b1,
        obj.b2,
        reg.halfplanes,
        reg.edges,
        reg.vertices,
    )
    return Bet(l1, l2)
