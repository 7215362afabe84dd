"""Prebuilt benchmark scenes.

Four scenes are provided:

* ``patch1``: two stacked blocks with matching footprints but mismatched
  element counts, squeezed by a uniform dead load. The whole interface is in
  contact, so the transmitted pressure should be flat.
* ``patch2``: the upper block is narrower than the lower one, and the exposed
  part of the lower top face carries the same dead load directly (a supported
  ledge). Again the exact solution is a homogeneous stress state, but now the
  contact zone ends inside elements of the slave face.
* ``indent2d``: a rigid circular die pressed into a slab.
* ``ironing2d``: a deformable half-disc pressed into a slab and dragged
  sideways across it, with a periodic tie on the slab's vertical edges.

Each builder returns a :class:`Scenario` bundling the scene with default
contact and solver settings. Helpers at the bottom compute the reference
homogeneous state for the patch scenes and the error/bias measures used by
the benchmark reports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .assembly import ContactConfig
from .material import NeoHookean
from .mesh import (
    Body,
    ContactPairDef,
    Dirichlet,
    PeriodicTie,
    Scene,
    Table,
    Traction,
)
from .nurbs import KnotVector
from .solver import Model, SolveReport, SolverSettings

HALF_SQRT2 = np.sqrt(2.0) / 2.0


@dataclass
class Scenario:
    name: str
    scene: Scene
    config: ContactConfig
    settings: SolverSettings
    pbar: float | None
    description: str


# ------------------------------------------------------------ body builders


def open_knots(degree: int, nspan: int, a: float = 0.0, b: float = 1.0) -> KnotVector:
    """Clamped knot vector with nspan uniform elements on [a, b]."""
    inner = np.linspace(a, b, nspan + 1)[1:-1]
    knots = np.concatenate(
        [np.full(degree + 1, float(a)), inner, np.full(degree + 1, float(b))]
    )
    return KnotVector(degree, knots)


def rectangle(name: str, material: str, x0: float, x1: float, y0: float,
              y1: float, nex: int, ney: int, degree: int = 2) -> Body:
    """Tensor-product block whose parameter axes equal the physical axes.

    Control points sit on the Greville grid, so the geometry is the exact
    rectangle and the parameter-to-arclength ratio along every edge is one.
    """
    kvu = open_knots(degree, nex, x0, x1)
    kvv = open_knots(degree, ney, y0, y1)
    gu = kvu.greville()
    gv = kvv.greville()
    X = np.array([(x, y) for y in gv for x in gu])
    return Body(name, material, kvu, kvv, X, np.ones(len(X)))


def circle(name: str, cx: float, cy: float, r: float,
           motion: dict[str, Table] | None = None) -> Body:
    """Rigid full circle: quadratic rational, seam at the top, counterclockwise."""
    kv = KnotVector(2, np.array([0.0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 4]))
    w = HALF_SQRT2
    pts = np.array([
        [cx, cy + r], [cx - r, cy + r], [cx - r, cy],
        [cx - r, cy - r], [cx, cy - r], [cx + r, cy - r],
        [cx + r, cy], [cx + r, cy + r], [cx, cy + r],
    ])
    wts = np.array([1, w, 1, w, 1, w, 1, w, 1])
    return Body(name, "none", kv, None, pts, wts, rigid=True,
                motion=motion or {}, orient_hint=1.0)


def half_disc(name: str, material: str, cx: float, cy: float, r: float) -> Body:
    """Deformable half disc with the curved side facing down.

    The v = 0 row traces the lower semicircle as a single rational cubic
    span: control points (r,0), (r,-2r), (-r,-2r), (-r,0) about the center
    with weights (1, 1/3, 1/3, 1) satisfy x^2 + y^2 = r^2 identically. One
    span means no interior knot, so the contact surface stays smooth under
    deformation everywhere between the diameter's end points. (The usual
    two-quarter-arc form is only geometrically smooth at its double knot;
    once deformed, its surface normal jumps there.) The v = 1 row is the
    straight diameter. The u-extreme edges collapse onto the diameter's end
    points; the map is injective with positive Jacobian at every interior
    point, which is all the bulk quadrature ever touches.
    """
    kvu = KnotVector(3, np.array([0.0, 0, 0, 0, 1, 1, 1, 1]))
    kvv = KnotVector(2, np.array([0.0, 0, 0, 1, 1, 1]))
    bot = np.array([
        [cx - r, cy], [cx - r, cy - 2 * r],
        [cx + r, cy - 2 * r], [cx + r, cy],
    ])
    top = np.array([
        [cx - r, cy], [cx - r / 3, cy], [cx + r / 3, cy], [cx + r, cy],
    ])
    mid = 0.5 * (bot + top)
    X = np.vstack([bot, mid, top])
    wu = np.array([1.0, 1 / 3, 1 / 3, 1.0])
    wts = np.concatenate([wu, wu, wu])
    return Body(name, material, kvu, kvv, X, wts)


# ------------------------------------------------------------------ scenes


def patch_flat(level: int = 0) -> Scenario:
    k = 2 ** level
    pbar = 0.01
    lower = rectangle("lower", "base", 0.0, 2.0, 0.0, 1.0, 3 * k, 2 * k)
    upper = rectangle("upper", "base", 0.0, 2.0, 1.0, 2.0, 4 * k, 2 * k)
    zero = Table.constant(0.0)
    scene = Scene(
        materials={"base": (1.0, 0.3)},
        bodies=[lower, upper],
        dirichlet=[
            Dirichlet("lower", "bottom", "uy", zero),
            Dirichlet("lower", "left", "ux", zero),
            Dirichlet("lower", "right", "ux", zero),
            Dirichlet("upper", "left", "ux", zero),
            Dirichlet("upper", "right", "ux", zero),
        ],
        tractions=[Traction("upper", "top", 0.0, -pbar)],
        pairs=[ContactPairDef("upper", "bottom", "lower", "top")],
        steps=[1.0],
    ).finalize()
    return Scenario(
        name="patch1",
        scene=scene,
        config=ContactConfig(eps=100.0),
        settings=SolverSettings(newton_tol=1e-12),
        pbar=pbar,
        description="flat two-block squeeze, full-width contact",
    )


def patch_ledge(level: int = 0) -> Scenario:
    k = 2 ** level
    pbar = 0.01
    lower = rectangle("lower", "base", 0.0, 2.0, 0.0, 1.0, 5 * k, 2 * k)
    upper = rectangle("upper", "base", 0.35, 1.65, 1.0, 2.0, 4 * k, 2 * k)
    zero = Table.constant(0.0)
    scene = Scene(
        materials={"base": (1.0, 0.3)},
        bodies=[lower, upper],
        dirichlet=[
            Dirichlet("lower", "bottom", "uy", zero),
            Dirichlet("lower", "left", "ux", zero),
            Dirichlet("lower", "right", "ux", zero),
            Dirichlet("upper", "left", "ux", zero),
            Dirichlet("upper", "right", "ux", zero),
        ],
        tractions=[
            Traction("upper", "top", 0.0, -pbar),
            Traction("lower", "top", 0.0, -pbar, kind="ledge"),
        ],
        pairs=[ContactPairDef("lower", "top", "upper", "bottom")],
        steps=[1.0],
    ).finalize()
    return Scenario(
        name="patch2",
        scene=scene,
        config=ContactConfig(eps=100.0),
        settings=SolverSettings(newton_tol=1e-12),
        pbar=pbar,
        description="narrow block on a wide one, ledge load outside contact",
    )


def indentation(level: int = 0) -> Scenario:
    k = 2 ** level
    slab = rectangle("slab", "base", 0.0, 10.0, 0.0, 5.0, 12 * k, 6 * k)
    die = circle("die", 5.0, 7.0, 2.0,
                 motion={"uy": Table.from_pairs([0.0, 0.0, 1.0, -2.0])})
    zero = Table.constant(0.0)
    nstep = 20
    scene = Scene(
        materials={"base": (1.0, 0.3)},
        bodies=[slab, die],
        dirichlet=[
            Dirichlet("slab", "bottom", "ux", zero),
            Dirichlet("slab", "bottom", "uy", zero),
        ],
        pairs=[ContactPairDef("slab", "top", "die", "curve")],
        steps=[(i + 1) / nstep for i in range(nstep)],
    ).finalize()
    return Scenario(
        name="indent2d",
        scene=scene,
        config=ContactConfig(eps=100.0),
        settings=SolverSettings(),
        pbar=None,
        description="rigid circular die pressed into a slab",
    )


def ironing(level: int = 0) -> Scenario:
    k = 2 ** level
    slab = rectangle("slab", "soft", 0.0, 6.0, 0.0, 1.5, 12 * k, 3 * k)
    die = half_disc("die", "hard", 2.0, 2.5, 1.0)
    zero = Table.constant(0.0)
    nstep = 100
    scene = Scene(
        materials={"soft": (1.0, 0.3), "hard": (10.0, 0.3)},
        bodies=[slab, die],
        dirichlet=[
            Dirichlet("slab", "bottom", "ux", zero),
            Dirichlet("slab", "bottom", "uy", zero),
            Dirichlet("die", "top", "ux",
                      Table.from_pairs([0.0, 0.0, 1.0, 0.0, 5.0, 2.0])),
            Dirichlet("die", "top", "uy",
                      Table.from_pairs([0.0, 0.0, 1.0, -0.6, 5.0, -0.6])),
        ],
        periodic=[PeriodicTie("slab", "right", "left")],
        pairs=[ContactPairDef("slab", "top", "die", "bottom")],
        steps=[0.05 * (i + 1) for i in range(nstep)],
    ).finalize()
    return Scenario(
        name="ironing2d",
        scene=scene,
        config=ContactConfig(eps=100.0, ngp=7),
        settings=SolverSettings(),
        pbar=None,
        description="half-disc pressed into a slab and dragged across it",
    )


SCENARIOS = {
    "patch1": patch_flat,
    "patch2": patch_ledge,
    "indent2d": indentation,
    "ironing2d": ironing,
}


def get_scenario(name: str, level: int = 0) -> Scenario:
    try:
        builder = SCENARIOS[name]
    except KeyError:
        raise KeyError(
            f"unknown scenario {name!r}, pick one of {sorted(SCENARIOS)}"
        ) from None
    return builder(level)


# ------------------------------------------------------- reference solutions


def uniaxial_stretch(material: NeoHookean, pbar: float) -> float:
    """Vertical stretch of the squeezed patch state.

    Sides on rollers, plane strain, dead load pbar per reference area pushing
    down: the exact state is homogeneous with F = diag(1, t) where the
    nominal vertical stress equals -pbar.
    """

    def f(t):
        return material.mu * t + (material.lam * np.log(t) - material.mu) / t + pbar

    return brentq(f, 0.1, 1.0, xtol=1e-15)


def patch_reference(material: NeoHookean, pbar: float) -> tuple[float, float, float]:
    """(stretch, sigma_xx, sigma_yy) of the exact homogeneous patch state."""
    t = uniaxial_stretch(material, pbar)
    sxx = material.lam * np.log(t) / t
    return t, sxx, -pbar


def patch_stress_error(model: Model, u: np.ndarray, pbar: float) -> float:
    """Worst relative Cauchy stress deviation from the homogeneous state."""
    mats = set(model.scene.materials.values())
    if len(mats) != 1:
        raise ValueError("patch stress check expects a single material")
    mat = NeoHookean(*mats.pop())
    _, sxx, syy = patch_reference(mat, pbar)
    worst = 0.0
    for fld in model.stress_field(u):
        s = fld["sigma"]
        worst = max(
            worst,
            float(np.abs(s[:, 0] - sxx).max()),
            float(np.abs(s[:, 1] - syy).max()),
            float(np.abs(s[:, 2]).max()),
        )
    return worst / pbar


def patch_pressure_error(model: Model, u: np.ndarray, pbar: float,
                         which: str = "true") -> float:
    """Worst relative deviation of the traced contact pressure from pbar.

    Every sample of every pass counts, so a formulation that fails to build
    up pressure scores an error of one rather than passing by vacuity.
    """
    key = {"true": "p_true", "nominal": "p_nominal"}[which]
    worst = 0.0
    got_any = False
    for trace in model.contact.pressure_trace(u):
        if len(trace[key]) == 0:
            continue
        got_any = True
        worst = max(worst, float(np.abs(trace[key] - pbar).max()))
    if not got_any:
        return 1.0
    return worst / pbar


# ------------------------------------------------------------ bias measures


def body_reaction(record, scene: Scene, body: str) -> np.ndarray:
    """Total constraint reaction on one body at a converged step."""
    total = np.zeros(2)
    for (bn, _side), v in record.reactions.items():
        if bn == body:
            total += v
    return total


def step_bias(record, scene: Scene) -> float:
    """Vertical reaction mismatch between the two bodies of a scene.

    The reactions are evaluated from the end-of-step residual after the
    contact structures (projections, gates, active sets) have been rebuilt
    at the converged state, so the mismatch measures how sensitive the
    formulation is to its own structural refresh. A perfectly consistent
    discretization transmits the same force to both supports.
    """
    names = [b.name for b in scene.bodies]
    r0 = abs(body_reaction(record, scene, names[0])[1])
    r1 = abs(body_reaction(record, scene, names[1])[1])
    return abs(r0 - r1)


def ironing_bias(report: SolveReport, scene: Scene, window: float = 0.5) -> float:
    """Average vertical reaction mismatch over the last sliding period.

    The window is one spatial period of the slab mesh, measured in die
    travel, taken at the end of the slide where the motion is steady.
    """
    drive = next(d.table for d in scene.dirichlet
                 if d.body == "die" and d.side == "top" and d.comp == "ux")
    recs = [r for r in report.steps if r.scheduled]
    travel = np.array([drive(r.s) for r in recs])
    sel = travel > travel[-1] - window + 1e-9
    vals = np.array([step_bias(r, scene) for r in recs])[sel]
    if len(vals) == 0:
        raise ValueError("empty sliding window")
    return float(vals.mean())


def reaction_history(report: SolveReport, key: tuple[str, str]) -> np.ndarray:
    """(nstep, 3) array of load factor and reaction force for one constraint."""
    recs = [r for r in report.steps if r.scheduled]
    return np.array([[r.s, r.reactions[key][0], r.reactions[key][1]]
                     for r in recs])
