"""Scene assembly plumbing: tables, edges, dof numbering, serialization."""

import numpy as np
import pytest

from igacontact.kinematics import surface_point
from igacontact.mesh import (
    Dirichlet,
    PeriodicTie,
    Scene,
    SceneError,
    Table,
    Traction,
    build_dof_map,
    contact_surface,
    load_scene,
    scene_to_text,
)
from igacontact.scenarios import circle, get_scenario, rectangle


def two_block_scene():
    lower = rectangle("lower", "m", 0.0, 2.0, 0.0, 1.0, 2, 1)
    upper = rectangle("upper", "m", 0.0, 2.0, 1.0, 2.0, 3, 1)
    return Scene(
        materials={"m": (1.0, 0.3)},
        bodies=[lower, upper],
        dirichlet=[
            Dirichlet("lower", "bottom", "uy", Table.constant(0.0)),
            Dirichlet("lower", "bottom", "ux", Table.constant(0.0)),
        ],
        pairs=[],
        steps=[0.5, 1.0],
    ).finalize()


# ------------------------------------------------------------------- tables


def test_table_interpolation_and_clamping():
    tab = Table.from_pairs([0.0, 0.0, 1.0, 2.0, 3.0, 2.0])
    assert tab(0.5) == pytest.approx(1.0)
    assert tab(2.0) == pytest.approx(2.0)
    assert tab(-1.0) == 0.0     # clamped left
    assert tab(9.0) == 2.0      # clamped right
    assert tab.pairs() == [0.0, 0.0, 1.0, 2.0, 3.0, 2.0]


def test_table_constant_and_single_value():
    assert Table.constant(3.0)(0.77) == 3.0
    assert Table.from_pairs([4.0])(123.0) == 4.0


def test_table_rejects_bad_input():
    with pytest.raises(SceneError):
        Table.from_pairs([0.0, 1.0, 2.0])   # odd length
    with pytest.raises(SceneError):
        Table.from_pairs([1.0, 0.0, 0.5, 1.0])  # decreasing abscissae


# ---------------------------------------------------------------- body edges


def test_edge_nodes_layout():
    b = rectangle("b", "m", 0.0, 1.0, 0.0, 1.0, 2, 1)  # 4x3 control net
    assert b.nnodes == 12
    assert list(b.edge_nodes("bottom")) == [0, 1, 2, 3]
    assert list(b.edge_nodes("top")) == [8, 9, 10, 11]
    assert list(b.edge_nodes("left")) == [0, 4, 8]
    assert list(b.edge_nodes("right")) == [3, 7, 11]
    assert b.edge_kv("bottom") is b.kv_u
    assert b.edge_kv("left") is b.kv_v
    with pytest.raises(SceneError):
        b.edge_nodes("front")


def test_body_count_validation():
    b = rectangle("b", "m", 0.0, 1.0, 0.0, 1.0, 1, 1)
    with pytest.raises(SceneError):
        type(b)(name="bad", material="m", kv_u=b.kv_u, kv_v=b.kv_v,
                X=b.X[:-1], wts=b.wts[:-1])


def test_rigid_motion_lookup():
    c = circle("die", 0.0, 5.0, 1.0,
               motion={"uy": Table.from_pairs([0.0, 0.0, 1.0, -2.0])})
    assert np.allclose(c.motion_at(0.5), [0.0, -1.0])
    assert c.is_curve
    assert list(c.edge_nodes("anything")) == list(range(9))


# -------------------------------------------------------------------- scenes


def test_finalize_assigns_offsets_and_validates():
    sc = two_block_scene()
    assert sc.bodies[0].node_offset == 0
    assert sc.bodies[1].node_offset == sc.bodies[0].nnodes
    assert sc.nnodes == sc.bodies[0].nnodes + sc.bodies[1].nnodes
    assert sc.body("upper") is sc.bodies[1]
    with pytest.raises(SceneError):
        sc.body("nope")
    assert sc.diameter() == pytest.approx(np.hypot(2.0, 2.0))


def test_finalize_rejects_bad_scenes():
    a = rectangle("a", "m", 0, 1, 0, 1, 1, 1)
    b = rectangle("a", "m", 0, 1, 1, 2, 1, 1)
    with pytest.raises(SceneError):
        Scene(materials={"m": (1.0, 0.3)}, bodies=[a, b]).finalize()
    c = rectangle("c", "unknown", 0, 1, 0, 1, 1, 1)
    with pytest.raises(SceneError):
        Scene(materials={"m": (1.0, 0.3)}, bodies=[c]).finalize()
    d = rectangle("d", "m", 0, 1, 0, 1, 1, 1)
    with pytest.raises(SceneError):
        Scene(materials={"m": (1.0, 0.3)}, bodies=[d], steps=[1.0, 0.5]).finalize()


# ------------------------------------------------------------- orientations


def test_contact_surface_outward_normals():
    sc = two_block_scene()
    expected = {
        ("lower", "bottom"): (0.0, -1.0),
        ("lower", "top"): (0.0, 1.0),
        ("lower", "left"): (-1.0, 0.0),
        ("lower", "right"): (1.0, 0.0),
    }
    u = np.zeros((sc.nnodes, 2))
    for (body, side), n_ref in expected.items():
        surf = contact_surface(sc, body, side)
        x_cp = sc.bodies[surf.body_index].X[surf.nodes - sc.bodies[surf.body_index].node_offset]
        mid = 0.5 * (surf.kv.start + surf.kv.end)
        sp = surface_point(surf.kv, x_cp, surf.wts, mid, surf.orient)
        assert np.allclose(sp.normal, n_ref, atol=1e-13), (body, side)
    flipped = contact_surface(sc, "lower", "top", flip=True)
    assert flipped.orient == -contact_surface(sc, "lower", "top").orient


def test_contact_surface_rigid_circle_orientation():
    c = circle("die", 0.0, 0.0, 1.0)
    sc = Scene(materials={}, bodies=[c]).finalize()
    surf = contact_surface(sc, "die", "bottom")
    # outward means away from the center for the counterclockwise circle
    for t in (0.5, 1.3, 2.2, 3.7):
        sp = surface_point(surf.kv, c.X, c.wts, t, surf.orient)
        assert sp.normal @ sp.x > 0.9


def test_contact_surface_unknown_body():
    sc = two_block_scene()
    with pytest.raises(SceneError):
        contact_surface(sc, "ghost", "top")


# ------------------------------------------------------------------ dof maps


def test_dof_map_counts_and_prescribed():
    sc = two_block_scene()
    dm = build_dof_map(sc)
    nfix = 2 * len(sc.bodies[0].edge_nodes("bottom"))
    assert dm.ndof == 2 * sc.nnodes - nfix
    u = np.zeros((sc.nnodes, 2))
    dm.apply_prescribed(sc, u, 1.0)
    assert np.allclose(u, 0.0)
    # prescribed entries are sorted and only on the fixed edge
    nodes = {n for n, _, _ in dm.prescribed}
    assert nodes == set(sc.bodies[0].edge_nodes("bottom"))


def test_dof_map_rigid_bodies_have_no_dofs():
    die = circle("die", 0.0, 3.0, 1.0,
                 motion={"uy": Table.from_pairs([0.0, 0.0, 1.0, -0.5])})
    slab = rectangle("slab", "m", -2, 2, 0, 1, 2, 1)
    sc = Scene(
        materials={"m": (1.0, 0.3)},
        bodies=[slab, die],
        dirichlet=[Dirichlet("slab", "bottom", "ux", Table.constant(0.0)),
                   Dirichlet("slab", "bottom", "uy", Table.constant(0.0))],
    ).finalize()
    dm = build_dof_map(sc)
    assert np.all(dm.index[slab.nnodes:] == -1)
    u = np.zeros((sc.nnodes, 2))
    dm.apply_prescribed(sc, u, 0.5)
    assert np.allclose(u[slab.nnodes:], [0.0, -0.25])


def test_periodic_tie_shares_dofs():
    slab = rectangle("slab", "m", 0, 4, 0, 1, 4, 1)
    sc = Scene(
        materials={"m": (1.0, 0.3)},
        bodies=[slab],
        dirichlet=[Dirichlet("slab", "bottom", "uy", Table.constant(0.0))],
        periodic=[PeriodicTie("slab", "right", "left")],
    ).finalize()
    dm = build_dof_map(sc)
    fn = slab.edge_nodes("right")
    ln = slab.edge_nodes("left")
    for f, l in zip(fn, ln):
        assert dm.index[f, 0] == dm.index[l, 0]
        assert dm.index[f, 1] == dm.index[l, 1] or dm.index[f, 1] == -1
    # follower of a constrained leader becomes prescribed too
    bottoms = set(slab.edge_nodes("bottom"))
    pres_nodes = {n for n, c, _ in dm.prescribed if c == 1}
    assert bottoms <= pres_nodes


def test_gather_scatter_adjoint():
    # <gather(f), v> == <f, scatter(v)> for every f, v: the reduction and the
    # expansion are transposes of each other, which is what makes tied
    # reactions sum correctly
    slab = rectangle("slab", "m", 0, 4, 0, 1, 3, 2)
    sc = Scene(
        materials={"m": (1.0, 0.3)},
        bodies=[slab],
        dirichlet=[Dirichlet("slab", "bottom", "ux", Table.constant(0.0))],
        periodic=[PeriodicTie("slab", "right", "left")],
    ).finalize()
    dm = build_dof_map(sc)
    rng = np.random.default_rng(8)
    for _ in range(10):
        f = rng.normal(size=(sc.nnodes, 2))
        v = rng.normal(size=dm.ndof)
        u = np.zeros((sc.nnodes, 2))
        dm.scatter_free(v, u)
        assert np.isclose(dm.gather_free(f) @ v, np.sum(f * u))
    # free_values is a right inverse of scatter on the free set
    v = rng.normal(size=dm.ndof)
    u = np.zeros((sc.nnodes, 2))
    dm.scatter_free(v, u)
    assert np.allclose(dm.free_values(u), v)


def test_tie_length_mismatch_rejected():
    slab = rectangle("slab", "m", 0, 4, 0, 1, 4, 1)
    sc = Scene(materials={"m": (1.0, 0.3)}, bodies=[slab],
               periodic=[PeriodicTie("slab", "right", "bottom")]).finalize()
    with pytest.raises(SceneError):
        build_dof_map(sc)


# -------------------------------------------------------------- serialization


def test_scene_text_roundtrip():
    for name in ("patch1", "indent2d", "ironing2d"):
        sc = get_scenario(name).scene
        text = scene_to_text(sc)
        back = load_scene(text)
        assert scene_to_text(back) == text
        assert back.nnodes == sc.nnodes
        assert [b.name for b in back.bodies] == [b.name for b in sc.bodies]
        for b1, b2 in zip(sc.bodies, back.bodies):
            assert np.array_equal(b1.X, b2.X)
            assert np.array_equal(b1.wts, b2.wts)
            assert np.array_equal(b1.kv_u.knots, b2.kv_u.knots)
        assert back.steps == sc.steps
        assert len(back.pairs) == len(sc.pairs)


def test_scene_text_preserves_tractions():
    sc = get_scenario("patch1").scene
    sc.tractions.append(Traction("upper", "top", 0.0, -0.25))
    back = load_scene(scene_to_text(sc))
    t = back.tractions[-1]
    assert (t.body, t.side, t.tx, t.ty, t.kind) == ("upper", "top", 0.0, -0.25, "edge")


def test_load_scene_grammar_errors():
    with pytest.raises(SceneError):
        load_scene("[nonsense]\n")
    with pytest.raises(SceneError):
        load_scene("[dirichlet]\nset b side ux 0 0\n")     # bad side name
    with pytest.raises(SceneError):
        load_scene("[traction]\nface b top 0 1\n")          # bad kind
    with pytest.raises(SceneError):
        load_scene("[contact_pair]\npair a top b\n")        # wrong arity
    with pytest.raises(SceneError):
        load_scene("[material]\nname m\nE 1.0\n[body]\n")   # missing nu
    with pytest.raises(SceneError):
        load_scene("[body]\nname b\ndegree_u 1\nknots_u 0 0 1 1\n"
                   "cp 0 0 1\n[load_schedule]\nsteps 1\n")  # curve not rigid


def test_load_scene_ignores_comments_and_blanks():
    text = "# header\n\n[material]\nname m  # inline\nE 2.0\nnu 0.3\n"
    sc = load_scene(text)
    assert sc.materials == {"m": (2.0, 0.3)}
