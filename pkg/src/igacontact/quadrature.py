"""Gauss rules on parameter intervals and contact-boundary aware partitions.

An element that is only partially in contact has an integrand with a kink or
jump at the contact boundary. Plain Gauss quadrature converges poorly there,
so the element interval is split at the detected boundary and the parent rule
is mapped onto each sub-interval (refined boundary quadrature). Partitions are
rebuilt between Newton loops and kept fixed inside one, so they never enter
the linearization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaussRule:
    """Gauss-Legendre abscissae/weights on the reference interval [-1, 1]."""

    n: int
    points: np.ndarray
    weights: np.ndarray

    def mapped(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Affinely map the rule onto [a, b]."""
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        return mid + half * self.points, half * self.weights


@lru_cache(maxsize=64)
def _leggauss_cached(n: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    x, w = leggauss(n)
    return tuple(x), tuple(w)


def gauss_rule(n: int) -> GaussRule:
    if n < 1:
        raise QuadratureError(f"Gauss rule needs at least one point, got {n}")
    x, w = _leggauss_cached(int(n))
    pts = np.array(x)
    wts = np.array(w)
    return GaussRule(int(n), pts, wts)


@dataclass
class ElementPartition:
    """Sub-intervals of one element span with an in/out-of-contact status.

    ``breaks`` are the interior boundary abscissae (possibly empty), so the
    sub-intervals are [a, b_1], [b_1, b_2], ..., [b_k, b]. ``status[i]`` is
    True when sub-interval i lies on the penetrating side.
    """

    a: float
    b: float
    breaks: list[float] = field(default_factory=list)
    status: list[bool] = field(default_factory=list)

    @property
    def edges(self) -> list[float]:
        return [self.a, *self.breaks, self.b]

    def quadrature(self, rule: GaussRule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Map ``rule`` into every sub-interval.

        Returns (points, weights, inside) where ``inside`` carries the frozen
        per-point contact status.
        """
        edges = self.edges
        xs, ws, ins = [], [], []
        for i in range(len(edges) - 1):
            x, w = rule.mapped(edges[i], edges[i + 1])
            xs.append(x)
            ws.append(w)
            ins.append(np.full(rule.n, self.status[i], dtype=bool))
        return np.concatenate(xs), np.concatenate(ws), np.concatenate(ins)


def _bisect_transition(phi: Callable[[float], float], lo: float, hi: float,
                       flo: float, tol: float) -> float:
    """Shrink [lo, hi] around a sign change of phi down to width tol.

    Works for discontinuous phi as well (clamped projections can make the
    indicator jump), because only signs are used. Ties (phi == 0) count as
    the non-penetrating side.
    """
    slo = flo < 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (phi(mid) < 0.0) == slo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rbq_partition(phi: Callable[[float], float], a: float, b: float,
                  nscan: int, max_crossings: int = 2,
                  rel_tol: float = 1e-10, max_subscan: int = 3) -> ElementPartition:
    """Locate contact-boundary crossings of ``phi`` inside [a, b].

    The scan samples phi at the Gauss abscissae of the parent rule plus both
    endpoints. Each sign change is tightened by bisection to an interval
    below ``rel_tol`` times the span. More than ``max_crossings`` crossings
    triggers dyadic re-scans (doubled sampling, up to ``max_subscan`` levels)
    before giving up.
    """
    span = b - a
    if span <= 0.0:
        raise QuadratureError(f"empty element span [{a}, {b}]")
    tol = rel_tol * span

    n = max(int(nscan), 2)
    for level in range(max_subscan + 1):
        xs = np.empty(n + 2)
        xs[0] = a
        xs[-1] = b
        xs[1:-1], _ = gauss_rule(n).mapped(a, b)
        vals = [phi(x) for x in xs]
        signs = [v < 0.0 for v in vals]
        idx = [i for i in range(len(xs) - 1) if signs[i] != signs[i + 1]]
        if len(idx) <= max_crossings:
            roots = [
                _bisect_transition(phi, xs[i], xs[i + 1], vals[i], tol)
                for i in idx
            ]
            part = ElementPartition(a, b, breaks=roots)
            edges = part.edges
            stat = []
            flip = signs[0]
            for _ in range(len(edges) - 1):
                stat.append(flip)
                flip = not flip
            part.status = stat
            return part
        n *= 2
    raise QuadratureError(
        f"more than {max_crossings} contact-boundary crossings in one element "
        f"span [{a}, {b}] after {max_subscan} refinement levels"
    )


def plain_partition(a: float, b: float, inside: bool) -> ElementPartition:
    """Single-interval partition with a uniform status (no boundary found)."""
    return ElementPartition(a, b, breaks=[], status=[inside])
