"""Mortar family properties against closed-form and dense-inverse oracles."""

import numpy as np
import pytest

from igacontact.kinematics import CurveView
from igacontact.mortar import (
    MORTAR_KINDS,
    PU_KINDS,
    MortarError,
    MortarOperators,
    WeightedNodalField,
    contact_potential_triple,
    field_eval,
    mortar_shape_eval,
    nodal_pressures_standard,
    weighted_nodal_gaps,
)
from igacontact.nurbs import KnotVector
from igacontact.scenarios import open_knots


def line_boundary(degree=2, nspan=4, length=4.0, y=0.0):
    kv = open_knots(degree, nspan, 0.0, length)
    g = kv.greville()
    x_ref = np.column_stack([g, np.full(kv.ncp, y)])
    return kv, x_ref, np.ones(kv.ncp)


def quarter_circle_boundary():
    kv = KnotVector(2, np.array([0.0, 0, 0, 0.5, 1, 1, 1]))
    # one knot inserted into the exact arc as rational evals require
    from igacontact.nurbs import insert_knot

    kv0 = KnotVector(2, np.array([0.0, 0, 0, 1, 1, 1]))
    cp = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    wts = np.array([1.0, np.sqrt(2.0) / 2.0, 1.0])
    return insert_knot(kv0, cp, wts, 0.5)


def integrate_rows(ops, fn, ngp=30):
    """Integrate fn(xi) -> row over the surface, respecting element ownership."""
    from igacontact.quadrature import gauss_rule

    rule = gauss_rule(ngp)
    total = None
    for a, b in ops.spans:
        xq, wq = rule.mapped(a, b)
        for x, w in zip(xq, wq):
            v = w * ops.ref_jac(x) * fn(float(x))
            total = v if total is None else total + v
    return total


# ------------------------------------------------- frozen one-element oracle


def test_single_linear_element_mass_oracle():
    # one p=1 element of length 2: L = (1/3)[[2,1],[1,2]], W = [1,1]
    kv = KnotVector(1, np.array([0.0, 0, 1, 1]))
    x_ref = np.array([[0.0, 0.0], [2.0, 0.0]])
    ops = MortarOperators.build(kv, x_ref, np.ones(2), "lmls*")
    assert np.allclose(ops.L, np.array([[2.0, 1.0], [1.0, 2.0]]) / 3.0, atol=1e-14)
    assert np.allclose(ops.W, [1.0, 1.0], atol=1e-14)
    assert np.allclose(ops.elem_W[0], [1.0, 1.0], atol=1e-14)
    # biorthogonal coefficients: inv(L) diag(W) = [[2,-1],[-1,2]]
    assert np.allclose(ops.elem_coef[0], [[2.0, -1.0], [-1.0, 2.0]], atol=1e-13)
    assert ops.ref_jac(0.3) == pytest.approx(2.0)


def test_gls_row_matches_dense_inverse():
    kv, x_ref, wts = line_boundary(degree=2, nspan=5)
    ops = MortarOperators.build(kv, x_ref, wts, "gls")
    Linv = np.linalg.inv(ops.L)
    rng = np.random.default_rng(3)
    for xi in rng.uniform(0.0, 4.0, 12):
        row = ops.row(float(xi))
        ref = ops.basis_row(float(xi)) @ Linv
        assert np.allclose(row, ref, atol=1e-12)
    star = MortarOperators.build(kv, x_ref, wts, "gls*")
    for xi in rng.uniform(0.0, 4.0, 6):
        assert np.allclose(star.row(float(xi)),
                           (star.basis_row(float(xi)) @ Linv) * star.W,
                           atol=1e-12)


# ------------------------------------------------------------- family traits


@pytest.mark.parametrize("kind", PU_KINDS)
def test_starred_families_partition_unity(kind):
    rng = np.random.default_rng(11)
    for builder in (lambda: line_boundary(2, 4), lambda: line_boundary(3, 3),
                    quarter_circle_boundary):
        kv, x_ref, wts = builder()
        ops = MortarOperators.build(kv, x_ref, wts, kind)
        lo, hi = kv.start, kv.end
        for xi in rng.uniform(lo, hi, 25):
            assert abs(ops.row(float(xi)).sum() - 1.0) < 1e-10, (kind, xi)


@pytest.mark.parametrize("kind", [k for k in MORTAR_KINDS if k not in PU_KINDS])
def test_unstarred_families_unit_integral(kind):
    for builder in (lambda: line_boundary(2, 4), quarter_circle_boundary):
        kv, x_ref, wts = builder()
        ops = MortarOperators.build(kv, x_ref, wts, kind)
        totals = integrate_rows(ops, ops.row)
        assert np.allclose(totals, 1.0, atol=1e-9), kind


def test_lmls_star_is_the_basis():
    kv, x_ref, wts = quarter_circle_boundary()
    ops = MortarOperators.build(kv, x_ref, wts, "lmls*")
    for xi in np.linspace(0.0, 1.0, 9):
        assert np.allclose(ops.row(float(xi)), ops.basis_row(float(xi)),
                           atol=1e-14)
        assert np.allclose(mortar_shape_eval(ops, float(xi)),
                           ops.row(float(xi)))


def test_lcls_star_element_biorthogonality():
    kv, x_ref, wts = line_boundary(degree=2, nspan=4)
    ops = MortarOperators.build(kv, x_ref, wts, "lcls*")
    from igacontact.quadrature import gauss_rule

    rule = gauss_rule(20)
    p = kv.degree
    for e, (a, b) in enumerate(ops.spans):
        G = np.zeros((p + 1, p + 1))
        xq, wq = rule.mapped(a, b)
        f = ops.elem_first[e]
        for x, w in zip(xq, wq):
            M = ops.row(float(x))[f : f + p + 1]
            N = ops.basis_row(float(x))[f : f + p + 1]
            G += (w * ops.ref_jac(x)) * np.outer(M, N)
        assert np.allclose(G, np.diag(ops.elem_W[e]), atol=1e-10), e


def test_gls_global_biorthogonality():
    # integral of M_A N_B over the whole surface is the identity for gls
    kv, x_ref, wts = line_boundary(degree=2, nspan=3)
    ops = MortarOperators.build(kv, x_ref, wts, "gls")
    G = integrate_rows(ops, lambda x: np.outer(ops.row(x), ops.basis_row(x)))
    assert np.allclose(G, np.eye(ops.n), atol=1e-10)


def test_quadrature_floor_makes_mass_exact():
    kv, x_ref, wts = line_boundary(degree=2, nspan=4)
    a = MortarOperators.build(kv, x_ref, wts, "lmls*", ngp=1)
    b = MortarOperators.build(kv, x_ref, wts, "lmls*", ngp=40)
    assert np.allclose(a.L, b.L, atol=1e-13)
    assert np.allclose(a.W, b.W, atol=1e-13)


def test_unknown_kind_rejected():
    kv, x_ref, wts = line_boundary()
    with pytest.raises(MortarError):
        MortarOperators.build(kv, x_ref, wts, "petrov")
    ops = MortarOperators.build(kv, x_ref, wts, "lmls*")
    with pytest.raises(MortarError):
        field_eval(ops, np.zeros(ops.n), "nearest", 0.5)


# --------------------------------------------------------- weighted contact


def flat_pair(offset, master_x0=0.0, master_x1=4.0):
    """Slave on y=0 over [0,4]; flat master at y=offset with upward normal.

    The raw gap of every covered slave point is -offset: a master ABOVE the
    slave line means the slave sits behind the master surface (penetration).
    """
    kv_s, xs, ws = line_boundary(degree=2, nspan=4, y=0.0)
    slave = CurveView(kv=kv_s, x=xs, wts=ws, orient=-1.0)
    kv_m = open_knots(1, 2, master_x0, master_x1)
    gm = kv_m.greville()
    xm = np.column_stack([gm, np.full(kv_m.ncp, offset)])
    master = CurveView(kv=kv_m, x=xm, wts=np.ones(kv_m.ncp), orient=-1.0)
    return slave, master


def test_constant_gap_weighted_field():
    kv_s, _, _ = line_boundary(degree=2, nspan=4)
    ops = MortarOperators.build(kv_s, *line_boundary(2, 4)[1:], "lmls*")
    for g0 in (0.25, -0.15):
        slave, master = flat_pair(g0)
        field = weighted_nodal_gaps(slave, master, ops, ngp=6)
        assert np.allclose(field.gap, -g0 * ops.W, atol=1e-12)
        assert np.all(field.chi == (field.gap < 0.0))
    loaded = nodal_pressures_standard(field, eps=50.0)
    assert np.allclose(loaded.pressure, 50.0 * field.chi * field.gap)
    assert loaded.gap is field.gap


def test_short_master_deactivates_overhang():
    # master only over x in [1, 3]: clamped feet beyond its edges register
    # as separated and their positive overshoot outweighs the penetration
    # in the edge-node integrals, so only the middle nodes activate
    slave, master = flat_pair(0.5, master_x0=1.0, master_x1=3.0)
    kv_s, xs, ws = line_boundary(degree=2, nspan=4)
    ops = MortarOperators.build(kv_s, xs, ws, "lmls*")
    field = weighted_nodal_gaps(slave, master, ops, ngp=8)
    assert list(field.chi.astype(int)) == [0, 0, 1, 1, 0, 0]
    assert field.gap[0] > 0.0 > field.gap[2]


def test_field_eval_interpolants():
    kv, xs, ws = line_boundary(degree=2, nspan=2)
    ops = MortarOperators.build(kv, xs, ws, "gls")
    vals = np.arange(ops.n, dtype=float)
    xi = 1.3
    assert field_eval(ops, vals, "mortar", xi) == pytest.approx(
        float(ops.row(xi) @ vals))
    assert field_eval(ops, vals, "smoothed", xi) == pytest.approx(
        float(ops.basis_row(xi) @ vals))


def test_potential_triple_agreement_fully_penetrating():
    # flat master over the entire slave with uniform penetration: pointwise
    # and nodal activation coincide, so the three evaluations must agree
    for kind in ("lmls*", "gls", "lcls*"):
        slave, master = flat_pair(0.2)
        kv_s, xs, ws = line_boundary(degree=2, nspan=4)
        ops = MortarOperators.build(kv_s, xs, ws, kind)
        a, b, c = contact_potential_triple(slave, master, ops, eps=100.0, ngp=8)
        assert a > 0.0
        assert b == pytest.approx(a, rel=1e-12)
        assert c == pytest.approx(a, rel=1e-12)


def test_weighted_field_zeros_helper():
    z = WeightedNodalField.zeros(5)
    assert z.gap.shape == (5,) and not z.gap.any()
    assert not z.chi.any() and not z.pressure.any()
