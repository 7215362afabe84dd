"""Contact residual and consistent tangent for every formulation.

One code path serves Gauss-point-to-segment (gpts), standard mortar (sm)
and extended mortar (xm) contact, in full-pass or two-half-pass form. The
slave surface carries the quadrature; every point projects onto the master.
Pointwise raw pressures feed either the force directly (gpts) or a nodal
stage (weighted pressures for sm, a least-squares fit for xm) that is then
interpolated back to the points.

Structure (Heaviside flags, nodal active sets, boundary partitions, the
extended mass matrix) is frozen between calls to update_structures; the
assembled tangent is exactly consistent with the residual under that
freezing, which is what the solver's outer loop relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import CurveView
from .mesh import Scene, Surface, contact_surface
from .mortar import MORTAR_KINDS, MortarOperators
from .quadrature import ElementPartition, gauss_rule, plain_partition, rbq_partition
from .xmortar import ExtendedState, build_extended_structure

FORMULATIONS = ("gpts", "sm", "xm")
PASS_MODES = ("full", "2hp")
PENALTY_MODES = ("nominal", "true")


class ContactError(RuntimeError):
    pass


@dataclass
class ContactConfig:
    formulation: str = "xm"
    pass_mode: str = "2hp"
    mortar: str = "lmls*"
    eps: float = 100.0
    ngp: int = 5
    rbq: bool = True
    penalty_mode: str = "nominal"
    activation_rel: float = 1e-12
    max_skip_fraction: float = 0.01

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")
        if self.pass_mode not in PASS_MODES:
            raise ValueError(f"pass mode must be one of {PASS_MODES}")
        if self.mortar not in MORTAR_KINDS:
            raise ValueError(f"mortar kind must be one of {MORTAR_KINDS}")
        if self.penalty_mode not in PENALTY_MODES:
            raise ValueError(f"penalty mode must be one of {PENALTY_MODES}")
        if self.eps <= 0 or self.ngp < 1:
            raise ValueError("eps must be positive and ngp at least 1")


@dataclass
class _QP:
    first_s: int
    N_s: np.ndarray
    N1_s: np.ndarray
    a1s: np.ndarray
    Js: float
    first_m: int
    N_m: np.ndarray
    N1_m: np.ndarray
    n: np.ndarray
    a1: np.ndarray
    a11: float
    b11: float
    g: float
    phi: float
    clamped: bool
    eps_eff: float
    p_raw: float


class _Pass:
    """One integration direction of a contact pair."""

    def __init__(self, slave: Surface, master: Surface, apply_master_rows: bool,
                 ops: MortarOperators | None):
        self.slave = slave
        self.master = master
        self.apply_master_rows = apply_master_rows
        self.ops = ops
        self.spans = slave.kv.spans()
        # frozen structure, filled by update
        self.qp_xi = np.zeros(0)
        self.qp_w = np.zeros(0)
        self.qp_refjac = np.zeros(0)
        self.qp_wbar = np.zeros(0)
        self.qp_H = np.zeros(0)
        self.qp_elem = np.zeros(0, dtype=int)
        self.qp_seed: np.ndarray | None = None
        self.qp_phi = np.zeros(0)
        self.Mrows = np.zeros((0, 0))
        self.chi = np.zeros(0)
        self.xstate: ExtendedState | None = None
        self.partitions: dict[int, ElementPartition] = {}
        self.p_tilde = np.zeros(0)
        self.signature: bytes = b""


def _dofs_of(nodes: np.ndarray) -> np.ndarray:
    return np.column_stack((2 * nodes, 2 * nodes + 1)).ravel()


@dataclass
class AssemblyResult:
    f: np.ndarray                        # (nnodes, 2) residual contribution
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    body_force: np.ndarray               # (nbodies, 2) per-body totals
    diagnostics: dict = field(default_factory=dict)


class ContactSystem:
    """All contact passes of a scene under one configuration."""

    def __init__(self, scene: Scene, config: ContactConfig):
        self.scene = scene
        self.config = config
        self.X = np.vstack([b.X for b in scene.bodies])
        self.act_tol = config.activation_rel * scene.diameter()
        self.rule = gauss_rule(config.ngp)
        self.passes: list[_Pass] = []
        for pair in scene.pairs:
            s = contact_surface(scene, pair.slave_body, pair.slave_side)
            m = contact_surface(scene, pair.master_body, pair.master_side)
            directions = [(s, m)]
            if config.pass_mode == "2hp":
                directions.append((m, s))
            for sl, ma in directions:
                ops = None
                if config.formulation in ("sm", "xm"):
                    ops = MortarOperators.build(
                        sl.kv, self.X[sl.nodes], sl.wts, config.mortar,
                        ngp=max(config.ngp, 2 * (sl.kv.degree + 1)))
                self.passes.append(
                    _Pass(sl, ma, config.pass_mode == "full", ops))

    # -------------------------------------------------------------- views

    def _view(self, surf: Surface, u: np.ndarray) -> CurveView:
        return CurveView(surf.kv, self.X[surf.nodes] + u[surf.nodes],
                         surf.wts, surf.orient)

    def _ref_view(self, surf: Surface) -> CurveView:
        return CurveView(surf.kv, self.X[surf.nodes], surf.wts, surf.orient)

    # ---------------------------------------------------------- structure

    def update_structures(self, u: np.ndarray) -> bool:
        """Recompute partitions, Heaviside flags and active sets at u.

        Returns True when any frozen structure changed. Projections here
        warm-start from the previous quadrature layout when one exists.
        """
        changed = False
        for ps in self.passes:
            sig = self._update_pass(ps, u)
            if sig != ps.signature:
                changed = True
            ps.signature = sig
        return changed

    def _update_pass(self, ps: _Pass, u: np.ndarray) -> bytes:
        cfg = self.config
        sv = self._view(ps.slave, u)
        mv = self._view(ps.master, u)
        rv = self._ref_view(ps.slave)
        old_xi, old_seed = ps.qp_xi, ps.qp_seed

        def seed_for(t: float):
            if old_seed is None or len(old_xi) == 0:
                return None
            i = int(np.clip(np.searchsorted(old_xi, t), 0, len(old_xi) - 1))
            return float(old_seed[i])

        def phi_eff(t: float) -> float:
            return mv.project(sv.at(t).x, seed=seed_for(t)).phi - self.act_tol

        xs: list[float] = []
        ws: list[float] = []
        elem: list[int] = []
        status: list[bool] = []
        parts: dict[int, ElementPartition] = {}
        nscan = min(max(cfg.ngp, 8), 33)
        for e, (a, b) in enumerate(ps.spans):
            if cfg.rbq:
                part = rbq_partition(phi_eff, a, b, nscan=nscan)
                if len(part.breaks):
                    parts[e] = part
            else:
                part = plain_partition(a, b, phi_eff(0.5 * (a + b)) < 0.0)
            xq, wq, inside = part.quadrature(self.rule)
            xs += [float(t) for t in xq]
            ws += [float(t) for t in wq]
            elem += [e] * len(xq)
            status += [bool(t) for t in inside]
        ps.partitions = parts
        ps.qp_xi = np.array(xs)
        ps.qp_w = np.array(ws)
        ps.qp_elem = np.array(elem, dtype=int)
        ps.qp_refjac = np.array([rv.at(t).jac for t in xs])
        ps.qp_wbar = ps.qp_w * ps.qp_refjac

        # project at the final points: seeds, level set, contact flags
        nq = len(xs)
        seed = np.zeros(nq)
        phi = np.zeros(nq)
        for i, t in enumerate(xs):
            pr = mv.project(sv.at(t).x, seed=seed_for(t))
            seed[i] = pr.xi
            phi[i] = pr.phi if pr.converged else np.inf
        ps.qp_seed = seed
        ps.qp_phi = phi
        if cfg.rbq:
            ps.qp_H = np.array([1.0 if s else 0.0 for s in status])
        else:
            ps.qp_H = (phi < self.act_tol).astype(float)

        if ps.ops is not None:
            ps.Mrows = np.array([ps.ops.row(t) for t in xs]) if nq else \
                np.zeros((0, ps.ops.n))
        if cfg.formulation == "sm":
            finite = np.isfinite(phi)
            gtil = ps.Mrows[finite].T @ (ps.qp_wbar[finite] * phi[finite])
            ps.chi = (gtil < self.act_tol * ps.ops.W).astype(float)
            ps.p_tilde = np.zeros(ps.ops.n)
        elif cfg.formulation == "xm":
            ps.xstate = build_extended_structure(ps.qp_wbar, ps.qp_H, ps.Mrows)
            ps.chi = ps.xstate.active.astype(float)
            ps.p_tilde = np.zeros(ps.ops.n)

        # Breaks are rounded coarsely in the signature: a boundary root that
        # drifts by less than a ppm of the parameter scale between outer
        # rounds does not warrant another re-solve on a rebuilt structure.
        breaks = np.concatenate([p.breaks for p in parts.values()]) \
            if parts else np.zeros(0)
        return b"".join([
            np.int64(nq).tobytes(),
            ps.qp_H.astype(np.int8).tobytes(),
            ps.chi.astype(np.int8).tobytes(),
            np.round(breaks, 6).tobytes(),
        ])

    # ----------------------------------------------------------- assembly

    def assemble(self, u: np.ndarray, want_tangent: bool = True) -> AssemblyResult:
        nn = self.scene.nnodes
        f = np.zeros((nn, 2))
        body_force = np.zeros((len(self.scene.bodies), 2))
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        diag = {"skipped": 0, "points": 0, "clamped_active": 0,
                "active_nodes": []}
        for ps in self.passes:
            self._assemble_pass(ps, u, want_tangent, f, body_force,
                                rows, cols, vals, diag)
        total = int(diag["points"])
        if total and diag["skipped"] > self.config.max_skip_fraction * total:
            raise ContactError(
                f"{diag['skipped']} of {total} projections failed")
        return AssemblyResult(
            f=f,
            rows=np.concatenate(rows) if rows else np.zeros(0, dtype=int),
            cols=np.concatenate(cols) if cols else np.zeros(0, dtype=int),
            vals=np.concatenate(vals) if vals else np.zeros(0),
            body_force=body_force,
            diagnostics=diag,
        )

    def _assemble_pass(self, ps: _Pass, u, want_tangent, f, body_force,
                       rows, cols, vals, diag):
        cfg = self.config
        sv = self._view(ps.slave, u)
        mv = self._view(ps.master, u)
        nq = len(ps.qp_xi)
        diag["points"] += nq
        if nq == 0:
            return
        true_mode = cfg.penalty_mode == "true"
        recs: list[_QP | None] = [None] * nq
        for i, xi in enumerate(ps.qp_xi):
            sp = sv.at(float(xi))
            pr = mv.project(sp.x, seed=float(ps.qp_seed[i]))
            ps.qp_seed[i] = pr.xi
            if not pr.converged:
                diag["skipped"] += 1
                continue
            if pr.clamped and ps.qp_H[i] > 0.0:
                diag["clamped_active"] += 1
            mp = pr.point
            Js = sp.jac / ps.qp_refjac[i]
            eps_eff = cfg.eps * (Js if true_mode else 1.0)
            recs[i] = _QP(
                first_s=sp.first, N_s=sp.N, N1_s=sp.Np, a1s=sp.a1, Js=Js,
                first_m=mp.first, N_m=mp.N, N1_m=mp.Np,
                n=mp.normal, a1=mp.a1, a11=mp.a11, b11=mp.b11,
                g=pr.gap, phi=pr.phi, clamped=pr.clamped,
                eps_eff=eps_eff, p_raw=eps_eff * pr.gap,
            )

        # nodal pressure stage
        if cfg.formulation == "sm":
            lam = np.zeros(ps.ops.n)
            for i, r in enumerate(recs):
                if r is not None:
                    lam += ps.qp_wbar[i] * r.eps_eff * r.phi * ps.Mrows[i]
            ps.p_tilde = ps.chi * lam
        elif cfg.formulation == "xm":
            p_raw = np.array([r.p_raw if r is not None else 0.0 for r in recs])
            ps.p_tilde = ps.xstate.resolve(ps.qp_wbar, ps.qp_H, ps.Mrows, p_raw)
            diag["active_nodes"].append(int(ps.xstate.active.sum()))

        nodal = cfg.formulation in ("sm", "xm")
        si = ps.slave.body_index
        mi = ps.master.body_index
        ps_dofs = None
        col_of = None
        Cmat = Dmat = None
        if nodal and want_tangent:
            ps_dofs = np.unique(np.concatenate([
                _dofs_of(ps.slave.nodes), _dofs_of(ps.master.nodes)]))
            col_of = {int(d): k for k, d in enumerate(ps_dofs)}
            Cmat = np.zeros((ps.ops.n, len(ps_dofs)))
            Dmat = np.zeros((ps.ops.n, len(ps_dofs)))

        ds = ps.slave.kv.degree + 1
        dm = ps.master.kv.degree + 1
        ncols = 2 * (ds + dm)
        for i, r in enumerate(recs):
            if r is None:
                continue
            wbar = ps.qp_wbar[i]
            if cfg.formulation == "gpts":
                p_star = ps.qp_H[i] * r.eps_eff * r.g
                gate = ps.qp_H[i]
            elif cfg.formulation == "sm":
                p_star = float(ps.Mrows[i] @ ps.p_tilde)
                gate = 1.0
            else:
                p_star = ps.qp_H[i] * float(ps.Mrows[i] @ ps.p_tilde)
                gate = ps.qp_H[i]

            snodes = ps.slave.nodes[r.first_s : r.first_s + ds]
            mnodes = ps.master.nodes[r.first_m : r.first_m + dm]
            if p_star != 0.0:
                fs = (wbar * p_star) * np.outer(r.N_s, r.n)
                np.add.at(f, snodes, fs)
                body_force[si] += fs.sum(axis=0)
                if ps.apply_master_rows:
                    fm = (-wbar * p_star) * np.outer(r.N_m, r.n)
                    np.add.at(f, mnodes, fm)
                    body_force[mi] += fm.sum(axis=0)
            if not want_tangent:
                continue

            dofs = np.concatenate([_dofs_of(snodes), _dofs_of(mnodes)])
            off = 2 * ds
            # variation rows over the local dof set
            F = np.zeros(ncols)       # raw gap
            X = np.zeros(ncols)       # master parameter
            Jr = np.zeros(ncols)      # relative surface stretch (slave side)
            Wr = np.zeros(ncols)      # n . dN_m, appears in normal variation
            for k in range(2):
                F[k:off:2] = r.N_s * r.n[k]
                F[off + k :: 2] = -r.N_m * r.n[k]
                X[k:off:2] = r.N_s * r.a1[k]
                X[off + k :: 2] = r.g * r.N1_m * r.n[k] - r.N_m * r.a1[k]
                Wr[off + k :: 2] = r.N1_m * r.n[k]
            cp = 1.0 / (r.a11 - r.g * r.b11)
            X *= cp
            if true_mode:
                a11s = float(r.a1s @ r.a1s)
                for k in range(2):
                    Jr[k:off:2] = r.N1_s * r.a1s[k] / a11s
            # normal variation: dn = Pmat @ dd
            Pmat = -np.outer(r.a1 / r.a11, r.b11 * X + Wr)

            block = np.zeros((ncols, ncols))
            if p_star != 0.0:
                S = np.zeros((ncols, 2))
                for k in range(2):
                    S[k:off:2, k] = r.N_s
                    if ps.apply_master_rows:
                        S[off + k :: 2, k] = -r.N_m
                block += (wbar * p_star) * (S @ Pmat)
                if ps.apply_master_rows:
                    block -= (wbar * p_star) * np.outer(Wr, X)

            Ff = F.copy()
            if not ps.apply_master_rows:
                Ff[off:] = 0.0
            drow = r.eps_eff * F
            if true_mode:
                drow = drow + r.p_raw * Jr
            if cfg.formulation == "gpts":
                block += (wbar * gate) * np.outer(Ff, drow)
            elif nodal:
                # nodal-stage coupling; off the clamp the weighted-gap
                # integrand phi coincides with g, so drow is its variation
                colidx = np.array([col_of[int(d)] for d in dofs])
                w_gate = wbar * gate
                Cmat[:, colidx] += np.outer(ps.Mrows[i], w_gate * Ff)
                Dmat[:, colidx] += np.outer(ps.Mrows[i], w_gate * drow)
            rows.append(np.repeat(dofs, ncols))
            cols.append(np.tile(dofs, ncols))
            vals.append(block.ravel())

        if nodal and want_tangent and Cmat is not None:
            if cfg.formulation == "sm":
                GD = ps.chi[:, None] * Dmat
            else:
                GD = np.zeros_like(Dmat)
                act = ps.xstate.active
                if act.any():
                    GD[act] = np.linalg.solve(
                        ps.xstate.Wx[np.ix_(act, act)], Dmat[act])
            K2 = Cmat.T @ GD
            rows.append(np.repeat(ps_dofs, len(ps_dofs)))
            cols.append(np.tile(ps_dofs, len(ps_dofs)))
            vals.append(K2.ravel())

    # --------------------------------------------------------- byproducts

    def ledge_load(self, body: str, side: str, t_vec: np.ndarray) -> np.ndarray:
        """Complement-of-contact traction on a slave surface.

        Integrates t_vec over the out-of-contact fraction of the surface at
        the frozen contact quadrature points, weight (1 - H). Together with
        the contact force this forms a partition of the full surface load.
        """
        for ps in self.passes:
            if ps.slave.body_name == body and ps.slave.side == side:
                f = np.zeros((self.scene.nnodes, 2))
                rv = self._ref_view(ps.slave)
                ds = ps.slave.kv.degree + 1
                for i, xi in enumerate(ps.qp_xi):
                    w = ps.qp_wbar[i] * (1.0 - ps.qp_H[i])
                    if w == 0.0:
                        continue
                    sp = rv.at(float(xi))
                    nodes = ps.slave.nodes[sp.first : sp.first + ds]
                    np.add.at(f, nodes, w * np.outer(sp.N, t_vec))
                return f
        raise ContactError(
            f"ledge traction needs {body}/{side} to be a contact slave surface")

    def pressure_trace(self, u: np.ndarray, n_per_elem: int = 20) -> list[dict]:
        """Sample nominal and true mortar pressure along each pass's slave.

        Pressures are reported compression-positive. Uses the nodal
        pressures from the most recent assembly for the mortar formulations.
        """
        cfg = self.config
        out = []
        for ps in self.passes:
            sv = self._view(ps.slave, u)
            mv = self._view(ps.master, u)
            rv = self._ref_view(ps.slave)
            xi_list, xs, gaps, p_nom, p_true = [], [], [], [], []
            for a, b in ps.spans:
                for k in range(n_per_elem):
                    t = a + (b - a) * (k + 0.5) / n_per_elem
                    sp = sv.at(t)
                    pr = mv.project(sp.x)
                    if not pr.converged:
                        continue
                    Js = sp.jac / rv.at(t).jac
                    eps_eff = cfg.eps * (Js if cfg.penalty_mode == "true" else 1.0)
                    H = 1.0 if pr.phi < self.act_tol else 0.0
                    if cfg.formulation == "gpts":
                        p = H * eps_eff * pr.gap
                    elif cfg.formulation == "sm":
                        p = float(ps.ops.row(t) @ ps.p_tilde)
                    else:
                        p = H * float(ps.ops.row(t) @ ps.p_tilde)
                    xi_list.append(t)
                    xs.append(sp.x)
                    gaps.append(pr.phi)
                    p_nom.append(-p)
                    p_true.append(-p / Js)
            out.append({
                "body": ps.slave.body_name,
                "side": ps.slave.side,
                "xi": np.array(xi_list),
                "x": np.array(xs) if xs else np.zeros((0, 2)),
                "gap": np.array(gaps),
                "p_nominal": np.array(p_nom),
                "p_true": np.array(p_true),
            })
        return out
