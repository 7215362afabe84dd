"""Extended mortar machinery: level set, enrichment, least-squares pressures.

The contact boundary splits a surface element into a contacting and an open
part. Instead of modifying the mortar functions there, the pressure field is
enriched multiplicatively with the Heaviside of a level-set function (the
signed gap), and nodal pressures are recovered by a least-squares fit on the
contacting region:

    W_x p = lam,   W_x = integral of H M^T M,   lam = integral of H M^T p_raw

restricted to the active nodes (those whose support overlaps the contact
zone). The fit is what lets a discontinuous pressure be represented exactly
even when quadrature crosses the boundary, provided the boundary is resolved
(refined boundary quadrature).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import CurveView
from .mortar import MortarOperators
from .quadrature import ElementPartition, gauss_rule, plain_partition, rbq_partition


class ExtendedMortarError(RuntimeError):
    pass


def heaviside(phi: float) -> float:
    """Contact indicator: 1 where the level set is negative, else 0."""
    return 1.0 if phi < 0.0 else 0.0


def sign_step(phi: float) -> float:
    """Three-valued sign of the level set; equals 1 - 2 H off the zero set."""
    if phi > 0.0:
        return 1.0
    if phi < 0.0:
        return -1.0
    return 0.0


@dataclass
class LevelSetField:
    """Level-set samples at quadrature points plus located boundary roots."""

    xi: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    H: np.ndarray
    roots: dict[int, list[float]]
    partitions: dict[int, ElementPartition]


def level_set_eval(slave: CurveView, master: CurveView, ngp: int,
                   rbq: bool = True, act_shift: float = 0.0) -> LevelSetField:
    """Sample the signed gap over the slave surface and find its roots.

    Each slave element is scanned at the parent Gauss abscissae; elements
    with mixed signs get bisection-refined sub-partitions (when rbq is on),
    and every element's quadrature points are returned with phi, psi and the
    (activation-shifted) Heaviside value.
    """
    rule = gauss_rule(ngp)
    xs: list[float] = []
    phis: list[float] = []
    roots: dict[int, list[float]] = {}
    partitions: dict[int, ElementPartition] = {}

    def phi_of(t: float) -> float:
        return master.project(slave.at(t).x).phi

    for e, (a, b) in enumerate(slave.kv.spans()):
        part = rbq_partition(phi_of, a, b, nscan=max(ngp, 8)) if rbq \
            else plain_partition(a, b, True)
        if len(part.breaks) > 0:
            roots[e] = [float(r) for r in part.breaks]
            partitions[e] = part
        xq, wq, _ = part.quadrature(rule)
        for x in xq:
            xs.append(float(x))
            phis.append(phi_of(float(x)))
    phi = np.array(phis)
    return LevelSetField(
        xi=np.array(xs),
        phi=phi,
        psi=np.array([sign_step(p) for p in phi]),
        H=np.array([heaviside(p - act_shift) for p in phi]),
        roots=roots,
        partitions=partitions,
    )


@dataclass
class ExtendedState:
    """Least-squares pressure system on the contacting part of a surface.

    W_x and the active set are structural: they are built once per outer
    iteration and held fixed while the right-hand side lam refreshes with
    the deforming geometry (resolve).
    """

    Wx: np.ndarray
    h: np.ndarray          # nodal overlap indicator, negative where active
    active: np.ndarray     # bool mask
    lam: np.ndarray
    p_tilde: np.ndarray

    def resolve(self, wbar: np.ndarray, H: np.ndarray, Mrows: np.ndarray,
                pressure: np.ndarray) -> np.ndarray:
        """Refresh nodal pressures from new pointwise data, structure fixed."""
        self.lam = Mrows.T @ (wbar * H * pressure)
        self.p_tilde = np.zeros_like(self.lam)
        act = self.active
        if act.any():
            A = self.Wx[np.ix_(act, act)]
            try:
                self.p_tilde[act] = np.linalg.solve(A, self.lam[act])
            except np.linalg.LinAlgError:
                cond = np.linalg.cond(A)
                raise ExtendedMortarError(
                    f"singular active pressure system ({int(act.sum())} nodes, "
                    f"condition estimate {cond:.3e})"
                )
        return self.p_tilde


def build_extended_structure(wbar: np.ndarray, H: np.ndarray,
                             Mrows: np.ndarray,
                             guard_rel: float = 1e-12) -> ExtendedState:
    """Assemble W_x and the active set from Heaviside flags at points.

    A node activates when its Heaviside overlap integral is genuinely
    negative (beyond a relative roundoff guard). The right-hand side is
    left at zero; call resolve with pointwise pressures to solve.
    """
    wbar = np.asarray(wbar, float)
    Mrows = np.asarray(Mrows, float)
    wH = wbar * np.asarray(H, float)
    Wx = Mrows.T @ (wH[:, None] * Mrows)
    Wx = 0.5 * (Wx + Wx.T)
    h = -(Mrows.T @ wH)
    guard = guard_rel * max(float(np.max(np.abs(h), initial=0.0)), 1e-300)
    active = h < -guard
    n = Mrows.shape[1]
    return ExtendedState(Wx=Wx, h=h, active=active,
                         lam=np.zeros(n), p_tilde=np.zeros(n))


def assemble_extended_system(wbar: np.ndarray, phi: np.ndarray,
                             Mrows: np.ndarray, pressure: np.ndarray,
                             guard_rel: float = 1e-12,
                             act_shift: float = 0.0) -> ExtendedState:
    """Build and solve the extended least-squares system from point data.

    wbar are reference-measure quadrature weights, phi the level-set values,
    Mrows the (npoints, nnodes) mortar values at the points, and pressure
    the pointwise raw pressures.
    """
    H = np.array([heaviside(p - act_shift) for p in np.asarray(phi, float)])
    state = build_extended_structure(wbar, H, Mrows, guard_rel=guard_rel)
    state.resolve(np.asarray(wbar, float), H, np.asarray(Mrows, float),
                  np.asarray(pressure, float))
    return state


def extended_pressure_eval(state: ExtendedState, ops: MortarOperators,
                           xi: float, phi: float) -> float:
    """Pointwise extended mortar pressure H(phi) * sum M_A p_A."""
    if heaviside(phi) == 0.0:
        return 0.0
    return float(ops.row(xi) @ state.p_tilde)
