"""Load-stepped Newton solver over bulk, traction and contact terms.

The nonlinear solve at each load level alternates an outer structure pass
(projections, boundary partitions, Heaviside flags, active sets are
recomputed and frozen) with an inner Newton loop on the frozen structure,
damped by a backtracking line search. After a configurable number of outer
rounds the structure is hard-frozen. Steps that fail to converge are
bisected.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssemblyResult, ContactConfig, ContactError, ContactSystem
from .material import ElementInversion, NeoHookean, bulk_element, element_cauchy
from .mesh import Scene, build_dof_map
from .nurbs import curve_basis, patch_basis
from .quadrature import gauss_rule


class SolverError(RuntimeError):
    pass


class StepFailure(SolverError):
    pass


@dataclass
class SolverSettings:
    newton_tol: float = 1e-8
    max_iterations: int = 25
    outer_max: int = 5
    freeze_after: int = 3
    step_cut: float = 0.5
    max_cuts: int = 6
    backtracks: int = 7          # line-search halvings per Newton step


@dataclass
class StepRecord:
    s: float
    scheduled: bool
    iterations: int
    residuals: list[float]
    reactions: dict[tuple[str, str], np.ndarray]
    contact_force: np.ndarray
    balance: float
    active_nodes: list[int]
    wall: float


@dataclass
class SolveReport:
    steps: list[StepRecord] = field(default_factory=list)
    converged: bool = True
    message: str = ""

    @property
    def scheduled_steps(self) -> list[StepRecord]:
        return [r for r in self.steps if r.scheduled]


@dataclass
class _BulkElement:
    ids: np.ndarray
    R: np.ndarray        # (nqp, nloc) basis values
    dNdX: np.ndarray     # (nqp, nloc, 2)
    wdet: np.ndarray
    X_qp: np.ndarray     # (nqp, 2) reference positions


class Model:
    """A scene bound to a contact configuration, ready to solve."""

    def __init__(self, scene: Scene, config: ContactConfig,
                 settings: SolverSettings | None = None):
        self.scene = scene
        self.config = config
        self.settings = settings or SolverSettings()
        self.dofmap = build_dof_map(scene)
        self.X = np.vstack([b.X for b in scene.bodies])
        self.materials = {
            name: NeoHookean(E, nu) for name, (E, nu) in scene.materials.items()
        }
        self.bulk: list[tuple[int, NeoHookean, list[_BulkElement]]] = []
        for bi, body in enumerate(scene.bodies):
            if body.rigid:
                continue
            self.bulk.append((bi, self.materials[body.material],
                              self._build_bulk(body)))
        self.contact = ContactSystem(scene, config)
        self.f_traction_unit = self._build_tractions()
        # absolute convergence floor: a state whose forces are all at
        # rounding level (nothing loaded, nothing active) must count as
        # converged even though the relative test has no scale to work with
        e_ref = max((E for E, _ in scene.materials.values()), default=1.0)
        self.res_floor = 1e-10 * e_ref * scene.diameter()

    def _build_bulk(self, body) -> list[_BulkElement]:
        ru = gauss_rule(body.kv_u.degree + 1)
        rv = gauss_rule(body.kv_v.degree + 1)
        out = []
        for va, vb in body.kv_v.spans():
            for ua, ub in body.kv_u.spans():
                uq, uw = ru.mapped(ua, ub)
                vq, vw = rv.mapped(va, vb)
                Rs, dNdX, wdet, Xq, ids = [], [], [], [], None
                for j, v in enumerate(vq):
                    for i, u in enumerate(uq):
                        loc, R, dR = patch_basis(body.kv_u, body.kv_v,
                                                 body.wts, u, v)
                        ids = body.node_offset + loc
                        Xe = body.X[loc]
                        J = Xe.T @ dR
                        det = float(np.linalg.det(J))
                        if det <= 0.0:
                            raise SolverError(
                                f"body {body.name}: nonpositive reference "
                                f"jacobian at ({u:.4g}, {v:.4g})")
                        Rs.append(R)
                        dNdX.append(dR @ np.linalg.inv(J))
                        wdet.append(uw[i] * vw[j] * det)
                        Xq.append(R @ Xe)
                out.append(_BulkElement(ids=ids, R=np.array(Rs),
                                        dNdX=np.array(dNdX),
                                        wdet=np.array(wdet), X_qp=np.array(Xq)))
        return out

    def _build_tractions(self) -> np.ndarray:
        f = np.zeros((self.scene.nnodes, 2))
        for tr in self.scene.tractions:
            if tr.kind != "edge":
                continue
            body = self.scene.body(tr.body)
            loc = body.edge_nodes(tr.side)
            kv = body.edge_kv(tr.side)
            xs = body.X[loc]
            wts = body.wts[loc]
            rule = gauss_rule(kv.degree + 3)
            t_vec = np.array([tr.tx, tr.ty])
            for a, b in kv.spans():
                xq, wq = rule.mapped(a, b)
                for x, w in zip(xq, wq):
                    first, R = curve_basis(kv, wts, x, nd=1)
                    sl = slice(first, first + kv.degree + 1)
                    a1 = R[1] @ xs[sl]
                    wbar = w * float(np.hypot(a1[0], a1[1]))
                    nodes = body.node_offset + loc[sl]
                    np.add.at(f, nodes, wbar * np.outer(R[0], t_vec))
        return f

    # ----------------------------------------------------------- residual

    def external_force(self, s: float) -> np.ndarray:
        f = s * self.f_traction_unit
        for tr in self.scene.tractions:
            if tr.kind == "ledge":
                f = f + s * self.contact.ledge_load(
                    tr.body, tr.side, np.array([tr.tx, tr.ty]))
        return f

    def residual(self, u: np.ndarray, s: float, want_tangent: bool = True):
        nn = self.scene.nnodes
        f_int = np.zeros((nn, 2))
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        for bi, mat, elems in self.bulk:
            for el in elems:
                x_e = self.X[el.ids] + u[el.ids]
                fe, Ke = bulk_element(mat, el.dNdX, el.wdet, x_e,
                                      want_tangent=want_tangent)
                np.add.at(f_int, el.ids, fe)
                if want_tangent:
                    dofs = np.column_stack((2 * el.ids, 2 * el.ids + 1)).ravel()
                    rows.append(np.repeat(dofs, len(dofs)))
                    cols.append(np.tile(dofs, len(dofs)))
                    vals.append(Ke.ravel())
        con: AssemblyResult = self.contact.assemble(u, want_tangent=want_tangent)
        f_ext = self.external_force(s)
        r = f_int + con.f - f_ext
        if want_tangent:
            rows.append(con.rows)
            cols.append(con.cols)
            vals.append(con.vals)
            K = (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
        else:
            K = None
        scales = (float(np.abs(f_int).max(initial=0.0)),
                  float(np.abs(con.f).max(initial=0.0)),
                  float(np.abs(f_ext).max(initial=0.0)))
        return r, K, con, scales

    def _reduce(self, K_parts) -> sp.csc_matrix:
        rows, cols, vals = K_parts
        flat = self.dofmap.index.ravel()
        r = flat[rows]
        c = flat[cols]
        keep = (r >= 0) & (c >= 0)
        n = self.dofmap.ndof
        return sp.coo_matrix((vals[keep], (r[keep], c[keep])),
                             shape=(n, n)).tocsc()

    # --------------------------------------------------------------- solve

    def solve(self, u0: np.ndarray | None = None) -> tuple[np.ndarray, SolveReport]:
        u = np.zeros((self.scene.nnodes, 2)) if u0 is None else u0.copy()
        report = SolveReport()
        cfg = self.settings
        s_prev = 0.0
        for s_target in self.scene.steps:
            ds = s_target - s_prev
            cuts = 0
            s = s_prev
            while s < s_target - 1e-12:
                s_try = min(s + ds, s_target)
                backup = u.copy()
                try:
                    rec = self._solve_one(u, s_try,
                                          scheduled=abs(s_try - s_target) < 1e-12)
                    report.steps.append(rec)
                    s = s_try
                except (StepFailure, ElementInversion, ContactError) as e:
                    u = backup
                    cuts += 1
                    if cuts > cfg.max_cuts:
                        report.converged = False
                        report.message = (
                            f"step to s={s_try:.6g} failed after "
                            f"{cfg.max_cuts} cuts: {e}")
                        return u, report
                    ds *= cfg.step_cut
            s_prev = s_target
        return u, report

    def _solve_one(self, u: np.ndarray, s: float, scheduled: bool) -> StepRecord:
        t0 = time.perf_counter()
        cfg = self.settings
        self.dofmap.apply_prescribed(self.scene, u, s)
        residuals: list[float] = []
        iters = 0
        for outer in range(cfg.outer_max):
            changed = (self.contact.update_structures(u)
                       if outer < cfg.freeze_after else False)
            if outer > 0 and not changed:
                break
            iters += self._inner_newton(u, s, residuals)
        # end-of-step bookkeeping with refreshed structures so any
        # formulation-dependent inconsistency at the frozen state shows up
        self.contact.update_structures(u)
        r, _, con, _ = self.residual(u, s, want_tangent=False)
        reactions: dict[tuple[str, str], np.ndarray] = {}
        for d in self.scene.dirichlet:
            key = (d.body, d.side)
            if key not in reactions:
                body = self.scene.body(d.body)
                nodes = body.node_offset + body.edge_nodes(d.side)
                reactions[key] = r[nodes].sum(axis=0)
        for body in self.scene.bodies:
            if body.rigid:
                nodes = body.node_offset + np.arange(body.nnodes)
                reactions[(body.name, "rigid")] = r[nodes].sum(axis=0)
        balance = float(np.abs(con.body_force.sum(axis=0)).max(initial=0.0))
        return StepRecord(
            s=s, scheduled=scheduled, iterations=iters, residuals=residuals,
            reactions=reactions, contact_force=con.body_force.copy(),
            balance=balance,
            active_nodes=list(con.diagnostics.get("active_nodes", [])),
            wall=time.perf_counter() - t0,
        )

    def _inner_newton(self, u: np.ndarray, s: float,
                      residuals: list[float]) -> int:
        cfg = self.settings
        r, K_parts, _, scales = self.residual(u, s, want_tangent=True)
        for it in range(cfg.max_iterations):
            r_red = self.dofmap.gather_free(r)
            rnorm = float(np.abs(r_red).max(initial=0.0))
            residuals.append(rnorm)
            if rnorm <= max(cfg.newton_tol * max(scales), self.res_floor):
                return it + 1
            K = self._reduce(K_parts)
            try:
                du = spla.splu(K).solve(-r_red)
            except RuntimeError as e:
                raise StepFailure(f"linear solve failed: {e}") from None
            if not np.all(np.isfinite(du)):
                raise StepFailure("non-finite Newton update")
            red0 = self.dofmap.free_values(u)
            # Backtracking keeps one bad full step (overshoot into element
            # inversion, projection loss, a non-smooth kink) from killing the
            # whole load step. If no trial decreases the residual the least
            # bad one is taken anyway so the iteration can walk through
            # branch boundaries of the frozen contact state.
            alpha = 1.0
            accepted = False
            best_alpha, best_norm = 0.0, np.inf
            for _ in range(cfg.backtracks):
                self.dofmap.scatter_free(red0 + alpha * du, u)
                try:
                    r2, _, _, _ = self.residual(u, s, want_tangent=False)
                    n2 = float(np.abs(self.dofmap.gather_free(r2)).max(initial=0.0))
                except (ElementInversion, ContactError):
                    n2 = np.inf
                if n2 <= (1.0 - 1e-4 * alpha) * rnorm:
                    accepted = True
                    break
                if n2 < best_norm:
                    best_alpha, best_norm = alpha, n2
                alpha *= 0.5
            if not accepted:
                if not np.isfinite(best_norm):
                    raise StepFailure(
                        f"line search found no evaluable state at s={s:.6g}")
                self.dofmap.scatter_free(red0 + best_alpha * du, u)
            r, K_parts, _, scales = self.residual(u, s, want_tangent=True)
        residuals.append(float(np.abs(self.dofmap.gather_free(r)).max(initial=0.0)))
        raise StepFailure(
            f"no convergence in {cfg.max_iterations} iterations at s={s:.6g} "
            f"(last residual {residuals[-1]:.3e})")

    # ------------------------------------------------------------ fields

    def stress_field(self, u: np.ndarray) -> list[dict]:
        """Cauchy stress at every bulk quadrature point, per body."""
        out = []
        for bi, mat, elems in self.bulk:
            pos, cur, sig, szz = [], [], [], []
            for el in elems:
                x_e = self.X[el.ids] + u[el.ids]
                sigmas = element_cauchy(mat, el.dNdX, x_e)
                for q, s2 in enumerate(sigmas):
                    F = x_e.T @ el.dNdX[q]
                    pos.append(el.X_qp[q])
                    cur.append(el.R[q] @ x_e)
                    sig.append([s2[0, 0], s2[1, 1], s2[0, 1]])
                    szz.append(mat.out_of_plane_stress(F))
            out.append({
                "body": self.scene.bodies[bi].name,
                "X": np.array(pos),
                "x": np.array(cur),
                "sigma": np.array(sig),
                "sigma_zz": np.array(szz),
            })
        return out
