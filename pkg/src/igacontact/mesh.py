"""Scene description: bodies, constraints, contact pairs, load schedule.

A scene is a set of NURBS patch bodies (plus optional rigid curve obstacles)
with Dirichlet data, periodic ties, surface tractions and an ordered list of
contact pairs. Scenes serialize to a line-oriented text format so runs can
be reproduced from a single file.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nurbs import KnotVector, NurbsError, curve_point, patch_basis

SIDES = ("bottom", "top", "left", "right", "curve")


class SceneError(ValueError):
    pass


@dataclass
class Table:
    """Piecewise-linear map from load factor to a prescribed value."""

    t: np.ndarray
    v: np.ndarray

    @classmethod
    def constant(cls, value: float) -> "Table":
        return cls(np.array([0.0, 1.0]), np.array([value, value]))

    @classmethod
    def from_pairs(cls, flat: list[float]) -> "Table":
        if len(flat) == 1:
            return cls.constant(flat[0])
        if len(flat) % 2 != 0 or len(flat) < 4:
            raise SceneError(f"table needs t/v pairs, got {flat}")
        t = np.array(flat[0::2])
        v = np.array(flat[1::2])
        if np.any(np.diff(t) < 0):
            raise SceneError("table abscissae must be non-decreasing")
        return cls(t, v)

    def __call__(self, s: float) -> float:
        return float(np.interp(s, self.t, self.v))

    def pairs(self) -> list[float]:
        out: list[float] = []
        for ti, vi in zip(self.t, self.v):
            out += [float(ti), float(vi)]
        return out


@dataclass
class Body:
    name: str
    material: str
    kv_u: KnotVector
    kv_v: KnotVector | None          # None for rigid curve obstacles
    X: np.ndarray                    # (n, 2) reference control points, u fastest
    wts: np.ndarray
    rigid: bool = False
    motion: dict[str, Table] = field(default_factory=dict)
    orient_hint: float = 1.0         # outward-normal sign for curve bodies
    node_offset: int = 0             # set when the scene is finalized

    def __post_init__(self):
        if self.kv_v is None and not self.rigid:
            raise SceneError(f"body {self.name}: curve-only bodies must be rigid")
        n_expect = self.kv_u.ncp * (self.kv_v.ncp if self.kv_v else 1)
        if len(self.X) != n_expect or len(self.wts) != n_expect:
            raise SceneError(
                f"body {self.name}: expected {n_expect} control points, got {len(self.X)}"
            )

    @property
    def is_curve(self) -> bool:
        return self.kv_v is None

    @property
    def nnodes(self) -> int:
        return len(self.X)

    def edge_nodes(self, side: str) -> np.ndarray:
        """Local control point indices along one boundary, in curve order."""
        if self.is_curve:
            return np.arange(self.nnodes)
        nu = self.kv_u.ncp
        nv = self.kv_v.ncp
        if side == "bottom":
            return np.arange(nu)
        if side == "top":
            return (nv - 1) * nu + np.arange(nu)
        if side == "left":
            return np.arange(nv) * nu
        if side == "right":
            return np.arange(nv) * nu + (nu - 1)
        raise SceneError(f"unknown side {side!r} on body {self.name}")

    def edge_kv(self, side: str) -> KnotVector:
        if self.is_curve:
            return self.kv_u
        return self.kv_u if side in ("bottom", "top") else self.kv_v

    def motion_at(self, s: float) -> np.ndarray:
        dx = self.motion["ux"](s) if "ux" in self.motion else 0.0
        dy = self.motion["uy"](s) if "uy" in self.motion else 0.0
        return np.array([dx, dy])


@dataclass
class Dirichlet:
    body: str
    side: str
    comp: str        # "ux" | "uy"
    table: Table


@dataclass
class PeriodicTie:
    body: str
    follower: str    # side whose dofs follow
    leader: str


@dataclass
class Traction:
    """Nominal traction on a boundary, scaled by the load factor.

    kind "edge" loads the whole boundary. kind "ledge" loads only the part of
    a contact surface that is out of contact: it is integrated at the contact
    quadrature points weighted by (1 - contact indicator), which is how a
    supported ledge next to a contact patch carries the closing load.
    """

    body: str
    side: str
    tx: float
    ty: float
    kind: str = "edge"


@dataclass
class ContactPairDef:
    slave_body: str
    slave_side: str
    master_body: str
    master_side: str


@dataclass
class Scene:
    materials: dict[str, tuple[float, float]] = field(default_factory=dict)  # name -> (E, nu)
    bodies: list[Body] = field(default_factory=list)
    dirichlet: list[Dirichlet] = field(default_factory=list)
    periodic: list[PeriodicTie] = field(default_factory=list)
    tractions: list[Traction] = field(default_factory=list)
    pairs: list[ContactPairDef] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)

    def finalize(self) -> "Scene":
        off = 0
        names = set()
        for b in self.bodies:
            if b.name in names:
                raise SceneError(f"duplicate body name {b.name!r}")
            names.add(b.name)
            if not b.rigid and b.material not in self.materials:
                raise SceneError(f"body {b.name}: unknown material {b.material!r}")
            b.node_offset = off
            off += b.nnodes
        if not self.steps:
            self.steps = [1.0]
        if any(s <= 0.0 for s in self.steps) or any(np.diff(self.steps) <= 0):
            raise SceneError("load schedule must be strictly increasing and positive")
        return self

    @property
    def nnodes(self) -> int:
        return sum(b.nnodes for b in self.bodies)

    def body(self, name: str) -> Body:
        for b in self.bodies:
            if b.name == name:
                return b
        raise SceneError(f"unknown body {name!r}")

    def diameter(self) -> float:
        """Characteristic length: diagonal of the reference bounding box."""
        allx = np.vstack([b.X for b in self.bodies])
        span = allx.max(axis=0) - allx.min(axis=0)
        return float(np.linalg.norm(span))


@dataclass
class Surface:
    """One contact boundary: a curve view into a body's control net."""

    body_index: int
    body_name: str
    side: str
    kv: KnotVector
    nodes: np.ndarray    # global node ids in curve order
    wts: np.ndarray
    orient: float
    rigid: bool


def contact_surface(scene: Scene, body_name: str, side: str,
                    flip: bool = False) -> Surface:
    """Extract a boundary as a contact surface with an outward normal.

    The normal at parameter xi is orient * rot(-90deg) a1/|a1|; the sign is
    calibrated against the reference geometry so it points out of the bulk.
    """
    bi = [i for i, b in enumerate(scene.bodies) if b.name == body_name]
    if not bi:
        raise SceneError(f"unknown body {body_name!r}")
    b = scene.bodies[bi[0]]
    loc = b.edge_nodes(side)
    kv = b.edge_kv(side)
    wts = b.wts[loc]
    orient = b.orient_hint
    if not b.is_curve:
        orient = _probe_orientation(b, side, kv, loc)
    if flip:
        orient = -orient
    return Surface(
        body_index=bi[0],
        body_name=b.name,
        side=side,
        kv=kv,
        nodes=b.node_offset + loc,
        wts=wts,
        orient=float(orient),
        rigid=b.rigid,
    )


def _probe_orientation(b: Body, side: str, kv: KnotVector, loc: np.ndarray) -> float:
    mid = 0.5 * (kv.start + kv.end)
    x0, a1 = curve_point(kv, b.X[loc], b.wts[loc], mid, nd=1)
    n_cand = np.array([a1[1], -a1[0]])
    u0, u1 = b.kv_u.start, b.kv_u.end
    v0, v1 = b.kv_v.start, b.kv_v.end
    eps = 1e-3
    probe = {
        "bottom": (mid, v0 + eps * (v1 - v0)),
        "top": (mid, v1 - eps * (v1 - v0)),
        "left": (u0 + eps * (u1 - u0), mid),
        "right": (u1 - eps * (u1 - u0), mid),
    }[side]
    ids, R, _ = patch_basis(b.kv_u, b.kv_v, b.wts, probe[0], probe[1])
    x_in = R @ b.X[ids]
    return -1.0 if n_cand @ (x_in - x0) > 0.0 else 1.0


# ----------------------------------------------------------------- dof map


@dataclass
class DofMap:
    """Free-dof numbering with Dirichlet tables and periodic ties resolved."""

    index: np.ndarray                 # (nnodes, 2) -> free dof id or -1
    ndof: int
    prescribed: list[tuple[int, int, Table]]   # (node, comp, table)
    rigid_nodes: list[tuple[int, int]]         # (body_index, node) spans

    def apply_prescribed(self, scene: Scene, u: np.ndarray, s: float) -> None:
        """Write constrained displacement values for load factor s into u."""
        for b in scene.bodies:
            if b.rigid:
                u[b.node_offset : b.node_offset + b.nnodes] = b.motion_at(s)
        for node, comp, table in self.prescribed:
            u[node, comp] = table(s)

    def gather_free(self, full: np.ndarray) -> np.ndarray:
        """Reduce a full (nnodes, 2) array, accumulating ties onto leaders."""
        out = np.zeros(self.ndof)
        flat = self.index.ravel()
        np.add.at(out, flat[flat >= 0], full.ravel()[flat >= 0])
        return out

    def scatter_free(self, red: np.ndarray, u: np.ndarray) -> None:
        """Write free-dof values into the full displacement array."""
        mask = self.index >= 0
        u[mask] = red[self.index[mask]]

    def free_values(self, u: np.ndarray) -> np.ndarray:
        """Read free-dof values from the full array (ties read the leader)."""
        out = np.zeros(self.ndof)
        mask = self.index >= 0
        out[self.index[mask]] = u[mask]
        return out


def build_dof_map(scene: Scene) -> DofMap:
    nn = scene.nnodes
    comp_id = {"ux": 0, "uy": 1}
    constrained: dict[tuple[int, int], Table] = {}
    for d in scene.dirichlet:
        b = scene.body(d.body)
        if b.rigid:
            raise SceneError(f"dirichlet data on rigid body {b.name}")
        for ln in b.edge_nodes(d.side):
            key = (b.node_offset + int(ln), comp_id[d.comp])
            constrained[key] = d.table

    leader_of: dict[tuple[int, int], tuple[int, int]] = {}
    for tie in scene.periodic:
        b = scene.body(tie.body)
        fn = b.edge_nodes(tie.follower) + b.node_offset
        ln = b.edge_nodes(tie.leader) + b.node_offset
        if len(fn) != len(ln):
            raise SceneError(f"periodic tie on {b.name}: side lengths differ")
        for f, l in zip(fn, ln):
            for c in (0, 1):
                leader_of[(int(f), c)] = (int(l), c)

    index = np.full((nn, 2), -1, dtype=int)
    nxt = 0
    for b in scene.bodies:
        if b.rigid:
            continue
        for ln in range(b.nnodes):
            node = b.node_offset + ln
            for c in (0, 1):
                key = (node, c)
                if key in leader_of or key in constrained:
                    continue
                index[node, c] = nxt
                nxt += 1
    prescribed = [(n, c, t) for (n, c), t in constrained.items()]
    for (f, c), (l, lc) in leader_of.items():
        if (l, lc) in constrained:
            prescribed.append((f, c, constrained[(l, lc)]))
        else:
            index[f, c] = index[l, lc]
    prescribed.sort(key=lambda e: (e[0], e[1]))
    rigid = [(i, b.node_offset) for i, b in enumerate(scene.bodies) if b.rigid]
    return DofMap(index=index, ndof=nxt, prescribed=prescribed, rigid_nodes=rigid)


# ------------------------------------------------------- text serialization


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def scene_to_text(scene: Scene) -> str:
    out: list[str] = []
    for name, (E, nu) in scene.materials.items():
        out += [f"[material]", f"name {name}", f"E {_fmt(E)}", f"nu {_fmt(nu)}", ""]
    for b in scene.bodies:
        out += ["[body]", f"name {b.name}"]
        if not b.rigid:
            out.append(f"material {b.material}")
        out.append(f"degree_u {b.kv_u.degree}")
        out.append("knots_u " + " ".join(_fmt(k) for k in b.kv_u.knots))
        if b.kv_v is not None:
            out.append(f"degree_v {b.kv_v.degree}")
            out.append("knots_v " + " ".join(_fmt(k) for k in b.kv_v.knots))
        if b.rigid:
            out.append("rigid 1")
            if b.orient_hint != 1.0:
                out.append(f"orient {_fmt(b.orient_hint)}")
            for comp, tab in b.motion.items():
                out.append(f"motion {comp} " + " ".join(_fmt(x) for x in tab.pairs()))
        for (x, y), w in zip(b.X, b.wts):
            out.append(f"cp {_fmt(x)} {_fmt(y)} {_fmt(w)}")
        out.append("")
    if scene.dirichlet:
        out.append("[dirichlet]")
        for d in scene.dirichlet:
            out.append(
                f"set {d.body} {d.side} {d.comp} "
                + " ".join(_fmt(x) for x in d.table.pairs())
            )
        out.append("")
    if scene.periodic:
        out.append("[periodic]")
        for t in scene.periodic:
            out.append(f"tie {t.body} {t.follower} {t.leader}")
        out.append("")
    if scene.tractions:
        out.append("[traction]")
        for t in scene.tractions:
            out.append(f"{t.kind} {t.body} {t.side} {_fmt(t.tx)} {_fmt(t.ty)}")
        out.append("")
    if scene.pairs:
        out.append("[contact_pair]")
        for p in scene.pairs:
            out.append(f"pair {p.slave_body} {p.slave_side} {p.master_body} {p.master_side}")
        out.append("")
    out.append("[load_schedule]")
    out.append("steps " + " ".join(_fmt(s) for s in scene.steps))
    out.append("")
    return "\n".join(out)


def load_scene(text: str) -> Scene:
    scene = Scene()
    section = None
    body_raw: dict | None = None
    mat_raw: dict | None = None

    def close_material():
        nonlocal mat_raw
        if mat_raw is None:
            return
        try:
            scene.materials[mat_raw["name"]] = (float(mat_raw["E"]), float(mat_raw["nu"]))
        except KeyError as e:
            raise SceneError(f"[material] section missing field {e}") from None
        mat_raw = None

    def close_body():
        nonlocal body_raw
        if body_raw is None:
            return
        r = body_raw
        try:
            kv_u = KnotVector(int(r["degree_u"]), np.array(r["knots_u"]))
            kv_v = None
            if "degree_v" in r:
                kv_v = KnotVector(int(r["degree_v"]), np.array(r["knots_v"]))
            cps = np.array(r["cp"])
            body = Body(
                name=r["name"],
                material=r.get("material", ""),
                kv_u=kv_u,
                kv_v=kv_v,
                X=cps[:, :2].copy(),
                wts=cps[:, 2].copy(),
                rigid=bool(int(r.get("rigid", 0))),
                motion=r.get("motion", {}),
                orient_hint=float(r.get("orient", 1.0)),
            )
        except (KeyError, NurbsError, IndexError) as e:
            raise SceneError(f"[body] section invalid: {e}") from None
        scene.bodies.append(body)
        body_raw = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            close_material()
            close_body()
            section = line.strip("[]").strip()
            if section not in ("material", "body", "dirichlet", "periodic",
                               "traction", "contact_pair", "load_schedule"):
                raise SceneError(f"line {lineno}: unknown section [{section}]")
            if section == "material":
                mat_raw = {}
            if section == "body":
                body_raw = {"cp": [], "motion": {}}
            continue
        tok = line.split()
        try:
            if section == "material":
                mat_raw[tok[0]] = tok[1]
            elif section == "body":
                if tok[0] == "cp":
                    body_raw["cp"].append([float(t) for t in tok[1:4]])
                elif tok[0] in ("knots_u", "knots_v"):
                    body_raw[tok[0]] = [float(t) for t in tok[1:]]
                elif tok[0] == "motion":
                    body_raw["motion"][tok[1]] = Table.from_pairs([float(t) for t in tok[2:]])
                else:
                    body_raw[tok[0]] = tok[1]
            elif section == "dirichlet":
                if tok[0] != "set":
                    raise SceneError(f"line {lineno}: expected 'set' in [dirichlet]")
                if tok[2] not in SIDES or tok[3] not in ("ux", "uy"):
                    raise SceneError(f"line {lineno}: bad dirichlet target")
                scene.dirichlet.append(
                    Dirichlet(tok[1], tok[2], tok[3],
                              Table.from_pairs([float(t) for t in tok[4:]]))
                )
            elif section == "periodic":
                if tok[0] != "tie":
                    raise SceneError(f"line {lineno}: expected 'tie' in [periodic]")
                scene.periodic.append(PeriodicTie(tok[1], tok[2], tok[3]))
            elif section == "traction":
                if tok[0] not in ("edge", "ledge"):
                    raise SceneError(f"line {lineno}: traction kind must be edge|ledge")
                scene.tractions.append(
                    Traction(tok[1], tok[2], float(tok[3]), float(tok[4]), kind=tok[0])
                )
            elif section == "contact_pair":
                if tok[0] != "pair" or len(tok) != 5:
                    raise SceneError(f"line {lineno}: expected 'pair slave side master side'")
                scene.pairs.append(ContactPairDef(tok[1], tok[2], tok[3], tok[4]))
            elif section == "load_schedule":
                if tok[0] != "steps":
                    raise SceneError(f"line {lineno}: expected 'steps' in [load_schedule]")
                scene.steps = [float(t) for t in tok[1:]]
            else:
                raise SceneError(f"line {lineno}: content outside any section")
        except (ValueError, IndexError) as e:
            if isinstance(e, SceneError):
                raise
            raise SceneError(f"line {lineno}: cannot parse {line!r} in [{section}]") from None
    close_material()
    close_body()
    return scene.finalize()
