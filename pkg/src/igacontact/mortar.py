"""Mortar shape-function families and weighted nodal contact fields.

Six families are supported, built from the boundary basis N_A and the
reference-surface mass data. Starred families satisfy the partition of
unity; the unstarred ones integrate to one per function. All operators are
assembled once on the reference surface and never change with deformation.

family   values at xi (n = row of basis values)
gls      n L^-1                       global least squares
gls*     (n L^-1) * W                 rescaled to a partition of unity
lmls     n / W (per function)         lumped
lmls*    n                            the basis itself
lcls*    n_loc (L^e)^-1 diag(W^e)     element-local biorthogonal
lcls     lcls* values / W (global)    rescaled to unit integrals

The lcls/lcls* values are evaluated per supporting element and may jump
across element boundaries; at a breakpoint the right element wins (the last
element owns the curve end).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .kinematics import CurveView
from .nurbs import KnotVector, curve_basis
from .quadrature import ElementPartition, gauss_rule

MORTAR_KINDS = ("gls", "gls*", "lmls", "lmls*", "lcls", "lcls*")
PU_KINDS = ("gls*", "lmls*", "lcls*")


class MortarError(ValueError):
    pass


def _curve_jac(kv, x_cp, wts, xi) -> tuple[int, np.ndarray, float]:
    first, R = curve_basis(kv, wts, xi, nd=1)
    a1 = R[1] @ x_cp[first : first + kv.degree + 1]
    return first, R[0], float(np.hypot(a1[0], a1[1]))


@dataclass
class MortarOperators:
    """Reference-surface mass data plus per-family evaluation coefficients."""

    kind: str
    kv: KnotVector
    x_ref: np.ndarray                # reference boundary control points
    wts: np.ndarray
    n: int
    L: np.ndarray                    # global mass matrix, dense
    W: np.ndarray                    # diagonal weights, integral of each N_A
    spans: list[tuple[float, float]]
    elem_first: list[int]            # first supporting function per element
    elem_W: list[np.ndarray]
    elem_coef: list[np.ndarray]      # (L^e)^-1 diag(W^e) per element
    coef: np.ndarray | None          # global coefficient matrix (gls, gls*)

    @classmethod
    def build(cls, kv: KnotVector, x_ref: np.ndarray, wts: np.ndarray,
              kind: str, ngp: int | None = None) -> "MortarOperators":
        if kind not in MORTAR_KINDS:
            raise MortarError(f"unknown mortar kind {kind!r}")
        p = kv.degree
        n = kv.ncp
        rule = gauss_rule(max(ngp or 0, 2 * (p + 1)))
        L = np.zeros((n, n))
        W = np.zeros(n)
        spans = kv.spans()
        elem_first: list[int] = []
        elem_W: list[np.ndarray] = []
        elem_L: list[np.ndarray] = []
        for a, b in spans:
            xq, wq = rule.mapped(a, b)
            Le = np.zeros((p + 1, p + 1))
            We = np.zeros(p + 1)
            first = None
            for x, w in zip(xq, wq):
                f, N, jac = _curve_jac(kv, x_ref, wts, x)
                first = f if first is None else first
                Le += (w * jac) * np.outer(N, N)
                We += (w * jac) * N
            elem_first.append(first)
            elem_W.append(We)
            elem_L.append(Le)
            sl = slice(first, first + p + 1)
            L[sl, sl] += Le
            W[sl] += We
        if np.any(W <= 0.0):
            raise MortarError("degenerate surface: nonpositive basis weight")
        elem_coef = []
        for e, Le in enumerate(elem_L):
            try:
                elem_coef.append(np.linalg.solve(Le, np.diag(elem_W[e])))
            except np.linalg.LinAlgError:
                raise MortarError(f"singular element mass matrix (element {e})")
        coef = None
        if kind in ("gls", "gls*"):
            try:
                coef = np.linalg.inv(L)
            except np.linalg.LinAlgError:
                raise MortarError("singular surface mass matrix")
        return cls(kind=kind, kv=kv, x_ref=np.asarray(x_ref, float).copy(),
                   wts=np.asarray(wts, float), n=n, L=L, W=W,
                   spans=spans, elem_first=elem_first, elem_W=elem_W,
                   elem_coef=elem_coef, coef=coef)

    def ref_jac(self, xi: float) -> float:
        """Reference surface measure d(arc length)/d(xi) at xi."""
        _, _, jac = _curve_jac(self.kv, self.x_ref, self.wts, xi)
        return jac

    def _element_of(self, xi: float) -> int:
        for e, (a, b) in enumerate(self.spans):
            if xi < b or e == len(self.spans) - 1:
                return e
        return len(self.spans) - 1

    def basis_row(self, xi: float) -> np.ndarray:
        first, R = curve_basis(self.kv, self.wts, xi, nd=0)
        row = np.zeros(self.n)
        row[first : first + self.kv.degree + 1] = R[0]
        return row

    def row(self, xi: float) -> np.ndarray:
        """Mortar shape-function values M_A(xi) for every surface node."""
        p = self.kv.degree
        first, R = curve_basis(self.kv, self.wts, xi, nd=0)
        Nloc = R[0]
        row = np.zeros(self.n)
        sl = slice(first, first + p + 1)
        k = self.kind
        if k == "lmls*":
            row[sl] = Nloc
        elif k == "lmls":
            row[sl] = Nloc / self.W[sl]
        elif k in ("gls", "gls*"):
            full = np.zeros(self.n)
            full[sl] = Nloc
            row = full @ self.coef
            if k == "gls*":
                row = row * self.W
        else:  # lcls*, lcls
            e = self._element_of(xi)
            f = self.elem_first[e]
            loc = Nloc @ self.elem_coef[e]
            sl = slice(f, f + p + 1)
            row = np.zeros(self.n)
            row[sl] = loc
            if k == "lcls":
                row[sl] = row[sl] / self.W[sl]
        return row


def build_mortar_operators(kv: KnotVector, x_ref: np.ndarray, wts: np.ndarray,
                           kind: str, ngp: int | None = None) -> MortarOperators:
    return MortarOperators.build(kv, x_ref, wts, kind, ngp)


def mortar_shape_eval(ops: MortarOperators, xi: float) -> np.ndarray:
    return ops.row(xi)


@dataclass
class WeightedNodalField:
    """Per-node weighted gap, active flag and weighted pressure."""

    gap: np.ndarray
    chi: np.ndarray
    pressure: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "WeightedNodalField":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))


def weighted_nodal_gaps(slave: CurveView, master: CurveView,
                        ops: MortarOperators, ngp: int,
                        partitions: dict[int, ElementPartition] | None = None,
                        act_tol: float = 0.0) -> WeightedNodalField:
    """Integrate the raw gap against the mortar functions.

    Quadrature points whose projection clamps at a master endpoint
    contribute their separation indicator (positive) instead of the raw
    normal distance, so footprint edges register as open. Points with a
    failed projection are skipped. chi_A activates nodes whose weighted gap
    falls below act_tol.
    """
    rule = gauss_rule(ngp)
    out = WeightedNodalField.zeros(ops.n)
    for e, (a, b) in enumerate(ops.spans):
        if partitions is not None and e in partitions:
            xq, wq, _ = partitions[e].quadrature(rule)
        else:
            xq, wq = rule.mapped(a, b)
        for x, w in zip(xq, wq):
            pr = master.project(slave.at(x).x)
            if not pr.converged:
                continue
            out.gap += w * ops.ref_jac(x) * ops.row(x) * pr.phi
    out.chi = (out.gap < act_tol).astype(float)
    return out


def nodal_pressures_standard(field: WeightedNodalField, eps: float) -> WeightedNodalField:
    """Penalty pressures from weighted gaps: active nodes carry eps * gap."""
    return replace(field, pressure=eps * field.chi * field.gap)


def field_eval(ops: MortarOperators, values: np.ndarray, interpolant: str,
               xi: float) -> float:
    """Interpolate nodal values: 'mortar' uses M_A, 'smoothed' uses N_A."""
    if interpolant == "mortar":
        return float(ops.row(xi) @ values)
    if interpolant == "smoothed":
        return float(ops.basis_row(xi) @ values)
    raise MortarError(f"unknown interpolant {interpolant!r}")


def contact_potential_triple(slave: CurveView, master: CurveView,
                             ops: MortarOperators, eps: float,
                             ngp: int) -> tuple[float, float, float]:
    """The contact potential evaluated three ways on shared quadrature.

    Returns (sum_A p_A g_A, integral of p* g, integral of p g*). The three
    agree identically when the pointwise and nodal active sets coincide
    (fully penetrating configurations).
    """
    rule = gauss_rule(ngp)
    qps: list[tuple[float, float, float]] = []   # (xi, wbar, raw gap)
    for a, b in ops.spans:
        xq, wq = rule.mapped(a, b)
        for x, w in zip(xq, wq):
            pr = master.project(slave.at(x).x)
            if not pr.converged:
                continue
            qps.append((x, w * ops.ref_jac(x), pr.phi))
    gaps = WeightedNodalField.zeros(ops.n)
    for x, wbar, g in qps:
        gaps.gap += wbar * ops.row(x) * g
    gaps.chi = (gaps.gap < 0.0).astype(float)
    field = nodal_pressures_standard(gaps, eps)
    pi_nodal = float(field.pressure @ field.gap)
    pi_mortar_p = 0.0
    pi_mortar_g = 0.0
    for x, wbar, g in qps:
        row = ops.row(x)
        p_pt = eps * g if g < 0.0 else 0.0
        pi_mortar_p += wbar * float(row @ field.pressure) * g
        pi_mortar_g += wbar * p_pt * float(row @ gaps.gap)
    return pi_nodal, pi_mortar_p, pi_mortar_g
