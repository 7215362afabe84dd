"""NURBS basis evaluation for curves and tensor-product patches.

Basis values come from the Cox-de Boor recursion; first and second
derivatives of rational bases use the quotient rule on the homogeneous
form. Knot vectors are clamped (open). Geometry refinement is limited to
knot insertion, which preserves the shape exactly, so circles stay circles
under mesh refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NurbsError(ValueError):
    pass


@dataclass(frozen=True)
class KnotVector:
    degree: int
    knots: np.ndarray

    def __post_init__(self):
        kn = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", kn)
        p = self.degree
        if p < 1:
            raise NurbsError(f"degree must be >= 1, got {p}")
        if kn.ndim != 1 or len(kn) < 2 * (p + 1):
            raise NurbsError(f"knot vector too short for degree {p}: {len(kn)} knots")
        if np.any(np.diff(kn) < 0):
            raise NurbsError("knot vector must be non-decreasing")
        if not (np.all(kn[: p + 1] == kn[0]) and np.all(kn[-p - 1 :] == kn[-1])):
            raise NurbsError("knot vector must be clamped (open)")
        if kn[0] == kn[-1]:
            raise NurbsError("degenerate knot vector")

    @property
    def ncp(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def start(self) -> float:
        return float(self.knots[0])

    @property
    def end(self) -> float:
        return float(self.knots[-1])

    def find_span(self, u: float) -> int:
        p = self.degree
        kn = self.knots
        n = self.ncp - 1
        if u >= kn[n + 1]:
            return n
        if u <= kn[p]:
            return p
        lo, hi = p, n + 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if u < kn[mid]:
                hi = mid
            else:
                lo = mid
        return lo

    def basis(self, u: float) -> tuple[int, np.ndarray]:
        """Nonzero basis values at u: (span, N[p+1]) for functions span-p..span."""
        span = self.find_span(u)
        p = self.degree
        kn = self.knots
        N = np.empty(p + 1)
        left = np.empty(p + 1)
        right = np.empty(p + 1)
        N[0] = 1.0
        for j in range(1, p + 1):
            left[j] = u - kn[span + 1 - j]
            right[j] = kn[span + j] - u
            saved = 0.0
            for r in range(j):
                tmp = N[r] / (right[r + 1] + left[j - r])
                N[r] = saved + right[r + 1] * tmp
                saved = left[j - r] * tmp
            N[j] = saved
        return span, N

    def basis_derivs(self, u: float, nd: int = 2) -> tuple[int, np.ndarray]:
        """Nonzero basis values and derivatives: (span, ders[(nd+1), p+1])."""
        span = self.find_span(u)
        p = self.degree
        kn = self.knots
        ndu = np.empty((p + 1, p + 1))
        left = np.empty(p + 1)
        right = np.empty(p + 1)
        a = np.empty((2, p + 1))
        ders = np.zeros((nd + 1, p + 1))
        ndu[0, 0] = 1.0
        for j in range(1, p + 1):
            left[j] = u - kn[span + 1 - j]
            right[j] = kn[span + j] - u
            saved = 0.0
            for r in range(j):
                ndu[j, r] = right[r + 1] + left[j - r]
                tmp = ndu[r, j - 1] / ndu[j, r]
                ndu[r, j] = saved + right[r + 1] * tmp
                saved = left[j - r] * tmp
            ndu[j, j] = saved
        ders[0, :] = ndu[:, p]
        for r in range(p + 1):
            s1, s2 = 0, 1
            a[0, 0] = 1.0
            for k in range(1, nd + 1):
                d = 0.0
                rk = r - k
                pk = p - k
                if k > p:
                    ders[k, r] = 0.0
                    continue
                if r >= k:
                    a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                    d = a[s2, 0] * ndu[rk, pk]
                j1 = 1 if rk >= -1 else -rk
                j2 = k - 1 if r - 1 <= pk else p - r
                for j in range(j1, j2 + 1):
                    a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                    d += a[s2, j] * ndu[rk + j, pk]
                if r <= pk:
                    a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                    d += a[s2, k] * ndu[r, pk]
                ders[k, r] = d
                s1, s2 = s2, s1
        r = float(p)
        for k in range(1, nd + 1):
            ders[k, :] *= r
            r *= p - k
        return span, ders

    def breakpoints(self) -> np.ndarray:
        """Distinct knot values (element boundaries)."""
        return np.unique(self.knots)

    def spans(self) -> list[tuple[float, float]]:
        """Nonempty knot intervals (the elements of the parameter line)."""
        bp = self.breakpoints()
        return [(float(bp[i]), float(bp[i + 1])) for i in range(len(bp) - 1)]

    def greville(self) -> np.ndarray:
        p = self.degree
        return np.array([
            self.knots[i + 1 : i + p + 1].mean() for i in range(self.ncp)
        ])


def curve_point(kv: KnotVector, cp: np.ndarray, wts: np.ndarray, u: float,
                nd: int = 2) -> tuple[np.ndarray, ...]:
    """Point and up to two parametric derivatives of a rational curve.

    Returns (x,), (x, x') or (x, x', x'') as 2-vectors depending on nd.
    """
    p = kv.degree
    span, ders = kv.basis_derivs(u, nd)
    lo = span - p
    w_loc = wts[lo : span + 1]
    cw = cp[lo : span + 1] * w_loc[:, None]
    A = ders[: nd + 1] @ cw           # (nd+1, 2) homogeneous point derivatives
    W = ders[: nd + 1] @ w_loc        # (nd+1,)
    x = A[0] / W[0]
    out = [x]
    if nd >= 1:
        x1 = (A[1] - W[1] * x) / W[0]
        out.append(x1)
    if nd >= 2:
        x2 = (A[2] - 2.0 * W[1] * x1 - W[2] * x) / W[0]
        out.append(x2)
    return tuple(out)


def curve_basis(kv: KnotVector, wts: np.ndarray, u: float,
                nd: int = 2) -> tuple[int, np.ndarray]:
    """Rational basis values/derivatives of the nonzero functions at u.

    Returns (first_index, R[(nd+1), p+1]) so function first_index+j has value
    R[0, j], first derivative R[1, j], and so on.
    """
    p = kv.degree
    span, ders = kv.basis_derivs(u, nd)
    lo = span - p
    w_loc = wts[lo : span + 1]
    Nw = ders * w_loc[None, :]
    W = Nw.sum(axis=1)  # (nd+1,)
    R = np.empty_like(Nw[: nd + 1])
    R[0] = Nw[0] / W[0]
    if nd >= 1:
        R[1] = (Nw[1] - W[1] * R[0]) / W[0]
    if nd >= 2:
        R[2] = (Nw[2] - 2.0 * W[1] * R[1] - W[2] * R[0]) / W[0]
    return lo, R


def patch_basis(kv_u: KnotVector, kv_v: KnotVector, wts: np.ndarray,
                u: float, v: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bivariate rational basis with first derivatives.

    ``wts`` is flat over the control net with the u index running fastest.
    Returns (ids, R, dR) where dR[:, 0] = dR/du and dR[:, 1] = dR/dv for the
    (pu+1)(pv+1) nonzero functions.
    """
    pu, pv = kv_u.degree, kv_v.degree
    su, Du = kv_u.basis_derivs(u, 1)
    sv, Dv = kv_v.basis_derivs(v, 1)
    nu = kv_u.ncp
    iu = np.arange(su - pu, su + 1)
    iv = np.arange(sv - pv, sv + 1)
    ids = (iv[:, None] * nu + iu[None, :]).ravel()
    w_loc = wts[ids].reshape(pv + 1, pu + 1)
    B = (Dv[0][:, None] * Du[0][None, :]) * w_loc
    Bu = (Dv[0][:, None] * Du[1][None, :]) * w_loc
    Bv = (Dv[1][:, None] * Du[0][None, :]) * w_loc
    S = B.sum()
    Su = Bu.sum()
    Sv = Bv.sum()
    R = B / S
    dR = np.empty((len(ids), 2))
    dR[:, 0] = ((Bu - R.reshape(pv + 1, pu + 1) * Su) / S).ravel()
    dR[:, 1] = ((Bv - R.reshape(pv + 1, pu + 1) * Sv) / S).ravel()
    return ids, R.ravel(), dR


def insert_knot(kv: KnotVector, cp: np.ndarray, wts: np.ndarray,
                u: float) -> tuple[KnotVector, np.ndarray, np.ndarray]:
    """Insert one knot at u (Boehm), preserving the curve exactly."""
    if not (kv.start < u < kv.end):
        raise NurbsError(f"knot {u} outside the open parameter range")
    p = kv.degree
    kn = kv.knots
    k = kv.find_span(u)
    Pw = np.empty((len(cp), 3))
    Pw[:, :2] = cp * wts[:, None]
    Pw[:, 2] = wts
    n_new = len(cp) + 1
    Qw = np.empty((n_new, 3))
    Qw[: k - p + 1] = Pw[: k - p + 1]
    Qw[k + 1 :] = Pw[k:]
    for i in range(k - p + 1, k + 1):
        alpha = (u - kn[i]) / (kn[i + p] - kn[i])
        Qw[i] = alpha * Pw[i] + (1.0 - alpha) * Pw[i - 1]
    new_knots = np.insert(kn, k + 1, u)
    w_new = Qw[:, 2]
    cp_new = Qw[:, :2] / w_new[:, None]
    return KnotVector(p, new_knots), cp_new, w_new


def refine_uniform(kv: KnotVector, cp: np.ndarray, wts: np.ndarray,
                   levels: int = 1) -> tuple[KnotVector, np.ndarray, np.ndarray]:
    """Halve every nonempty span, repeated ``levels`` times."""
    for _ in range(levels):
        for a, b in kv.spans():
            kv, cp, wts = insert_knot(kv, cp, wts, 0.5 * (a + b))
    return kv, cp, wts


def refine_to_count(kv: KnotVector, cp: np.ndarray, wts: np.ndarray,
                    nel: int) -> tuple[KnotVector, np.ndarray, np.ndarray]:
    """Insert knots until the parameter line has ``nel`` equal-width elements.

    Requires the existing breakpoints to sit on the target uniform grid
    (true for the stock geometries, which start from uniform spans).
    """
    lo, hi = kv.start, kv.end
    targets = np.linspace(lo, hi, nel + 1)[1:-1]
    have = kv.breakpoints()
    for t in targets:
        if not np.any(np.isclose(have, t, rtol=0.0, atol=1e-12 * (hi - lo))):
            kv, cp, wts = insert_knot(kv, cp, wts, float(t))
            have = kv.breakpoints()
    if len(kv.spans()) != nel:
        raise NurbsError(
            f"cannot reach {nel} uniform elements from breakpoints {list(have)}"
        )
    return kv, cp, wts
