"""Contact kinematics on NURBS boundary curves.

Surface evaluation bundles everything the contact terms need at one
parameter: position, tangent, curvature data and the oriented unit normal.
Closest-point projection runs a guarded Newton iteration seeded either from
a cached previous solution or from a coarse scan over every knot span.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nurbs import KnotVector, curve_basis


def perp(t: np.ndarray) -> np.ndarray:
    """Rotate a 2-vector by -90 degrees: (x, y) -> (y, -x)."""
    return np.array([t[1], -t[0]])


@dataclass
class SurfacePoint:
    """Curve evaluation at one parameter with first and second derivatives."""

    xi: float
    orient: float
    first: int            # index of the first supporting control point
    N: np.ndarray         # basis values, length degree+1
    Np: np.ndarray        # d/dxi
    Npp: np.ndarray       # d2/dxi2
    x: np.ndarray
    a1: np.ndarray        # dx/dxi
    a1p: np.ndarray       # d2x/dxi2

    @property
    def a11(self) -> float:
        return float(self.a1 @ self.a1)

    @property
    def jac(self) -> float:
        return float(np.sqrt(self.a11))

    @property
    def tangent(self) -> np.ndarray:
        return self.a1 / self.jac

    @property
    def normal(self) -> np.ndarray:
        return self.orient * perp(self.a1) / self.jac

    @property
    def b11(self) -> float:
        """Curvature measure n . a1,xi (signed by the orientation)."""
        return float(self.normal @ self.a1p)


def surface_point(kv: KnotVector, x_cp: np.ndarray, wts: np.ndarray,
                  xi: float, orient: float = 1.0) -> SurfacePoint:
    first, R = curve_basis(kv, wts, xi, nd=2)
    sl = slice(first, first + kv.degree + 1)
    xs = x_cp[sl]
    return SurfacePoint(
        xi=float(xi),
        orient=float(orient),
        first=first,
        N=R[0],
        Np=R[1],
        Npp=R[2],
        x=R[0] @ xs,
        a1=R[1] @ xs,
        a1p=R[2] @ xs,
    )


@dataclass
class Projection:
    """Result of projecting a point onto a curve.

    gap is the signed normal distance (negative means penetration).  When
    the projection clamps at a curve endpoint the orthogonality residual
    does not vanish; t_over records the tangential overshoot so level-set
    style queries can treat points beyond the edge as separated.
    """

    point: SurfacePoint
    gap: float
    t_over: float
    converged: bool
    clamped: bool

    @property
    def xi(self) -> float:
        return self.point.xi

    @property
    def phi(self) -> float:
        """Separation indicator: penetration only counts off the clamp."""
        if self.clamped:
            return max(self.gap, self.t_over)
        return self.gap

    @property
    def in_contact(self) -> bool:
        return self.converged and not self.clamped and self.gap < 0.0


def _newton_project(kv, x_cp, wts, x, orient, xi0, scale, max_iter=30):
    lo, hi = kv.start, kv.end
    xi = min(max(xi0, lo), hi)
    clamp_hits = 0
    sp = surface_point(kv, x_cp, wts, xi, orient)
    for _ in range(max_iter):
        r = x - sp.x
        f = float(r @ sp.a1)
        df = -(sp.a11 - float(r @ sp.a1p))
        if df == 0.0:
            break
        step = -f / df
        span = hi - lo
        step = min(max(step, -0.5 * span), 0.5 * span)
        xi_new = xi + step
        if xi_new <= lo or xi_new >= hi:
            xi_new = min(max(xi_new, lo), hi)
            clamp_hits = clamp_hits + 1 if xi_new == xi else 1
        else:
            clamp_hits = 0
        moved = abs(xi_new - xi)
        xi = xi_new
        sp = surface_point(kv, x_cp, wts, xi, orient)
        r = x - sp.x
        f = float(r @ sp.a1)
        if abs(f) <= 1e-12 * sp.jac * max(scale, np.linalg.norm(r)):
            return sp, True, False
        if clamp_hits >= 2:
            return sp, True, True
        if moved <= 1e-15 * (hi - lo):
            break
    converged = abs(float((x - sp.x) @ sp.a1)) <= 1e-8 * sp.jac * max(scale, 1e-30)
    clamped = xi <= lo or xi >= hi
    return sp, converged, clamped


def closest_point_projection(kv: KnotVector, x_cp: np.ndarray, wts: np.ndarray,
                             x: np.ndarray, orient: float = 1.0,
                             seed: float | None = None,
                             nsample: int = 8) -> Projection:
    """Project x onto the curve, returning gap and clamp information.

    With a seed, Newton starts there and the scan is used only as a
    fallback. Otherwise nsample points per knot span are scanned and the
    three nearest starts are polished; the converged result closest to x
    wins. If every Newton attempt fails (feet on repeated knots defeat it)
    or the polished answer is farther away than the best scanned sample
    (a wrong local minimum), a bisection-based bracketing search takes
    over, so a result is always produced. Endpoint clamping is reported
    rather than hidden.
    """
    scale = float(np.max(np.abs(x_cp)) + 1.0)

    def finish(sp: SurfacePoint, converged: bool, clamped: bool) -> Projection:
        r = x - sp.x
        gap = float(sp.normal @ r)
        t_over = abs(float(sp.tangent @ r)) if clamped else 0.0
        return Projection(point=sp, gap=gap, t_over=t_over,
                          converged=converged, clamped=clamped)

    if seed is not None:
        sp, ok, clamped = _newton_project(kv, x_cp, wts, x, orient, seed, scale)
        if ok:
            return finish(sp, ok, clamped)

    cands: list[tuple[float, float]] = []
    for a, b in kv.spans():
        for t in np.linspace(a, b, nsample, endpoint=False):
            first, R = curve_basis(kv, wts, t, nd=0)
            xt = R[0] @ x_cp[first : first + kv.degree + 1]
            cands.append((float(np.linalg.norm(x - xt)), float(t)))
    cands.append((float(np.linalg.norm(x - _eval(kv, x_cp, wts, kv.end))), kv.end))
    cands.sort(key=lambda c: c[0])

    best: Projection | None = None
    for _, t in cands[:3]:
        sp, ok, clamped = _newton_project(kv, x_cp, wts, x, orient, t, scale)
        pr = finish(sp, ok, clamped)
        if not ok:
            continue
        if best is None or abs(_dist(x, pr)) < abs(_dist(x, best)):
            best = pr
    # the nearest scanned sample is a curve point, so any answer farther
    # than it has fallen into the wrong local minimum
    if best is not None and _dist(x, best) <= cands[0][0] + 1e-12 * scale:
        return best
    sp, ok, clamped = _robust_project(kv, x_cp, wts, x, orient)
    pr = finish(sp, ok, clamped)
    if best is not None and _dist(x, best) <= _dist(x, pr):
        return best
    return pr


def _eval(kv, x_cp, wts, t):
    first, R = curve_basis(kv, wts, t, nd=0)
    return R[0] @ x_cp[first : first + kv.degree + 1]


def _eval1(kv, x_cp, wts, t):
    first, R = curve_basis(kv, wts, t, nd=1)
    sl = slice(first, first + kv.degree + 1)
    return R[0] @ x_cp[sl], R[1] @ x_cp[sl]


def _robust_project(kv, x_cp, wts, x, orient):
    """Bracketing fallback for projections Newton cannot handle.

    The orthogonality function f(t) = (x - c(t)) . c'(t) is continuous
    across repeated interior knots even though its slope jumps there (the
    classic trouble spot: a foot point sitting right on such a knot makes
    Newton oscillate between the two sides). Every sign change of f is
    pinned down by plain bisection and the closest of all located roots,
    the two curve endpoints and the coarse-scan minimum wins.
    """
    lo, hi = kv.start, kv.end
    grid: list[float] = []
    for a, b in kv.spans():
        grid.extend(np.linspace(a, b, 9)[:-1])
    grid.append(hi)
    fs = []
    d2 = []
    for t in grid:
        xt, at = _eval1(kv, x_cp, wts, t)
        r = x - xt
        fs.append(float(r @ at))
        d2.append(float(r @ r))
    cands = [lo, hi, grid[int(np.argmin(d2))]]
    tol = 1e-14 * (hi - lo)
    for i in range(len(grid) - 1):
        if (fs[i] < 0.0) == (fs[i + 1] < 0.0):
            continue
        a, b = grid[i], grid[i + 1]
        fa = fs[i]
        while b - a > tol:
            m = 0.5 * (a + b)
            xm, am = _eval1(kv, x_cp, wts, m)
            fm = float((x - xm) @ am)
            if (fm < 0.0) == (fa < 0.0):
                a, fa = m, fm
            else:
                b = m
        cands.append(0.5 * (a + b))
    best_t = min(cands,
                 key=lambda t: float(np.sum((x - _eval(kv, x_cp, wts, t)) ** 2)))
    sp = surface_point(kv, x_cp, wts, best_t, orient)
    return sp, True, best_t <= lo or best_t >= hi


def _dist(x, pr: Projection) -> float:
    return float(np.linalg.norm(x - pr.point.x))


@dataclass
class CurveView:
    """A boundary curve in its current configuration.

    Bundles the knot vector, current control point positions, weights and
    the outward-normal sign so contact routines can pass one handle around.
    """

    kv: KnotVector
    x: np.ndarray
    wts: np.ndarray
    orient: float = 1.0

    def at(self, xi: float) -> SurfacePoint:
        return surface_point(self.kv, self.x, self.wts, xi, self.orient)

    def project(self, x: np.ndarray, seed: float | None = None) -> Projection:
        return closest_point_projection(self.kv, self.x, self.wts, x,
                                        self.orient, seed=seed)
