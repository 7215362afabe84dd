"""Gauss rules and contact-boundary partitions."""

import numpy as np
import pytest

from igacontact.quadrature import (
    ElementPartition,
    QuadratureError,
    gauss_rule,
    plain_partition,
    rbq_partition,
)


def poly_integral(coeffs, a, b):
    """Exact integral of sum(c_k x^k) on [a, b], computed term by term."""
    total = 0.0
    for k, c in enumerate(coeffs):
        total += c * (b ** (k + 1) - a ** (k + 1)) / (k + 1)
    return total


def test_gauss_rule_polynomial_exactness():
    # an n-point rule must integrate degree 2n-1 exactly
    rng = np.random.default_rng(42)
    for n in range(1, 9):
        rule = gauss_rule(n)
        for _ in range(5):
            coeffs = rng.uniform(-2, 2, size=2 * n)
            a, b = sorted(rng.uniform(-3, 3, size=2))
            if b - a < 1e-3:
                b = a + 1.0
            x, w = rule.mapped(a, b)
            vals = sum(c * x**k for k, c in enumerate(coeffs))
            assert np.isclose(vals @ w, poly_integral(coeffs, a, b),
                              rtol=1e-12, atol=1e-12)


def test_gauss_rule_not_exact_beyond_order():
    # degree 2n polynomial must NOT integrate exactly (sanity on the oracle)
    rule = gauss_rule(2)
    x, w = rule.mapped(0.0, 1.0)
    approx = (x**4) @ w
    assert abs(approx - 0.2) > 1e-6


def test_gauss_rule_weights_positive_and_sum():
    for n in (1, 2, 5, 16):
        rule = gauss_rule(n)
        assert np.all(rule.weights > 0)
        assert np.isclose(rule.weights.sum(), 2.0)
        x, w = rule.mapped(-0.3, 1.7)
        assert np.isclose(w.sum(), 2.0)
        assert x.min() > -0.3 and x.max() < 1.7


def test_gauss_rule_rejects_zero_points():
    with pytest.raises(QuadratureError):
        gauss_rule(0)


def test_partition_quadrature_covers_interval():
    part = ElementPartition(0.0, 2.0, breaks=[0.5, 1.2], status=[True, False, True])
    rule = gauss_rule(4)
    x, w, inside = part.quadrature(rule)
    assert len(x) == 12
    assert np.isclose(w.sum(), 2.0)
    assert inside[:4].all() and not inside[4:8].any() and inside[8:].all()
    # integrating x over the pieces reproduces the closed form
    assert np.isclose(x @ w, 2.0)


def test_plain_partition():
    part = plain_partition(1.0, 3.0, inside=True)
    assert part.edges == [1.0, 3.0]
    x, w, inside = part.quadrature(gauss_rule(3))
    assert np.isclose(w.sum(), 2.0)
    assert inside.all()


def test_rbq_locates_smooth_roots():
    # phi = (t - 0.3)(t - 0.7) has two crossings, known in closed form
    part = rbq_partition(lambda t: (t - 0.3) * (t - 0.7), 0.0, 1.0, nscan=8)
    assert len(part.breaks) == 2
    assert abs(part.breaks[0] - 0.3) < 1e-9
    assert abs(part.breaks[1] - 0.7) < 1e-9
    # statuses alternate starting from the sign at the left end (positive)
    assert part.status == [False, True, False]


def test_rbq_single_root_random_positions():
    rng = np.random.default_rng(7)
    for _ in range(25):
        r = rng.uniform(0.05, 0.95)
        sign = rng.choice([-1.0, 1.0])
        part = rbq_partition(lambda t: sign * (t - r), 0.0, 1.0, nscan=6)
        assert len(part.breaks) == 1
        assert abs(part.breaks[0] - r) < 1e-9
        # phi(0) = -sign*r, so the left piece is penetrating exactly when
        # sign is positive
        assert part.status == [sign > 0, sign < 0]


def test_rbq_discontinuous_indicator():
    # a jump, not a smooth zero: bisection only uses signs so it still works
    part = rbq_partition(lambda t: -1.0 if t > 0.413 else 2.0, 0.0, 1.0, nscan=8)
    assert len(part.breaks) == 1
    assert abs(part.breaks[0] - 0.413) < 1e-9
    assert part.status == [False, True]


def test_rbq_no_crossing():
    part = rbq_partition(lambda t: 1.0 + t, 2.0, 3.0, nscan=5)
    assert part.breaks == []
    assert part.status == [False]
    part = rbq_partition(lambda t: -1.0, 2.0, 3.0, nscan=5)
    assert part.status == [True]


def test_rbq_rescan_catches_thin_feature():
    # a narrow penetrating sliver that a coarse scan misses on the first
    # level: the dyadic re-scan must find both crossings
    def phi(t):
        return -1.0 if 0.50 < t < 0.52 else 1.0

    part = rbq_partition(phi, 0.0, 1.0, nscan=4, max_crossings=2)
    assert len(part.breaks) in (0, 2)
    if part.breaks:
        assert abs(part.breaks[0] - 0.50) < 1e-9
        assert abs(part.breaks[1] - 0.52) < 1e-9


def test_rbq_too_many_crossings_raises():
    part = None
    with pytest.raises(QuadratureError):
        part = rbq_partition(lambda t: np.sin(20 * np.pi * t), 0.0, 1.0,
                             nscan=64, max_crossings=2, max_subscan=1)
    assert part is None


def test_rbq_empty_span_raises():
    with pytest.raises(QuadratureError):
        rbq_partition(lambda t: t, 1.0, 1.0, nscan=4)


def test_rbq_weights_and_statuses_consistent():
    rng = np.random.default_rng(3)
    rule = gauss_rule(5)
    for _ in range(20):
        a = rng.uniform(-2, 2)
        b = a + rng.uniform(0.5, 2.0)
        r = rng.uniform(a + 0.1, b - 0.1)
        part = rbq_partition(lambda t: t - r, a, b, nscan=6)
        x, w, inside = part.quadrature(rule)
        assert np.isclose(w.sum(), b - a)
        # all points left of the break are outside (phi > 0 is t > r there)
        assert (inside == (x < r)).all()
