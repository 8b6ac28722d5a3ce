"""Utility measurement: weighted moment discrepancy and d_k bounds.

``d_k`` itself is not computable.  What is reported instead is a certified
upper bound built from the moment discrepancy ``Gamma`` and a lower estimate
from an explicit finite family of smooth queries.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .basis import MomentIndexSet
from .bumps import bump_family, chi
from .errors import DomainError
from .mechanism import MomentVector, grid_moments, moment_tensor
from .solver import GridDistribution
from .synth import SyntheticDataset

# Pinned constant of the 1-d Jackson estimate ||g - g*J|| <= C1^k / m^k.
# pi/2 is Favard's bound, which dominates the sharp constant for every k.
JACKSON_C1 = math.pi / 2


def coefficient_constant(k: int) -> float:
    """``C_k = e^k k!`` bounding ``sum ||K||^(2k) c_K^2`` by the squared derivative sup."""
    return math.e**k * math.factorial(k)


def jackson_constant(k: int, c1: float = JACKSON_C1) -> float:
    """``C_k^Jac = c1^k k! e^k``."""
    return c1**k * math.factorial(k) * math.e**k


@functools.singledispatch
def moments_of(dist, index_set: MomentIndexSet) -> np.ndarray:
    """Chebyshev moments of ``dist`` for every index, as a flat array.

    ``dist`` may be an ``(n, d)`` array of points (uniform weights), a
    ``(points, weights)`` pair, a :class:`GridDistribution`, a
    :class:`SyntheticDataset` or a :class:`MomentVector`.
    """
    raise TypeError(f"cannot take moments of {type(dist).__name__}")


@moments_of.register
def _(dist: np.ndarray, index_set):
    X = np.atleast_2d(dist)
    if X.shape[1] != index_set.d:
        raise DomainError(f"points have dimension {X.shape[1]}, expected {index_set.d}")
    return index_set.flatten(moment_tensor(X, index_set.m))


@moments_of.register
def _(dist: tuple, index_set):
    points, weights = dist
    w = np.asarray(weights, dtype=float)
    return index_set.flatten(moment_tensor(np.atleast_2d(points), index_set.m, w / w.sum()))


@moments_of.register
def _(dist: GridDistribution, index_set):
    return grid_moments(dist.q, dist.grid.axis_points(), index_set).values


@moments_of.register
def _(dist: SyntheticDataset, index_set):
    return grid_moments(dist.weights(), dist.grid.axis_points(), index_set).values


@moments_of.register
def _(dist: MomentVector, index_set):
    if dist.index_set != index_set:
        raise ValueError("moment vector uses a different index set")
    return dist.values


def _as_points(dist) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(dist, tuple):
        points, w = dist
        w = np.asarray(w, dtype=float)
        return np.atleast_2d(points), w / w.sum()
    if isinstance(dist, (GridDistribution, SyntheticDataset)):
        q = dist.q if isinstance(dist, GridDistribution) else dist.weights()
        flat = q.ravel()
        keep = np.flatnonzero(flat)
        J = np.array(np.unravel_index(keep, dist.grid.shape)).T
        return dist.grid.point(J), flat[keep]
    X = np.atleast_2d(np.asarray(dist, dtype=float))
    return X, np.full(X.shape[0], 1.0 / X.shape[0])


@dataclass(frozen=True)
class MomentDiscrepancy:
    gamma: float
    m: int
    k: int


def gamma(p, q, index_set: MomentIndexSet, k: int) -> MomentDiscrepancy:
    """``sqrt(sum_{K != 0} ||K||^(-2k) (m_K(p) - m_K(q))^2)``."""
    diff = moments_of(p, index_set) - moments_of(q, index_set)
    w = index_set.weights(k)
    return MomentDiscrepancy(float(np.sqrt(np.sum((w * diff) ** 2))), index_set.m, k)


def dk_bound(gamma_value, m: int, d: int, k: int, c1: float = JACKSON_C1) -> float:
    """Certified ``d_k(p, q) <= 2 C_k^Jac d / m^k + sqrt(C_k) Gamma``.

    Valid when ``Gamma`` is taken over ``{0..m}^d``.  Depends on the pinned
    Jackson constant ``c1``.
    """
    g = gamma_value.gamma if isinstance(gamma_value, MomentDiscrepancy) else float(gamma_value)
    return 2.0 * jackson_constant(k, c1) * d / m**k + math.sqrt(coefficient_constant(k)) * g


def integrate(query, dist) -> float:
    points, w = _as_points(dist)
    return float(np.dot(query(points), w))


def dk_lower_estimate(p, q, queries) -> float:
    """``max_f |E_p f - E_q f|`` over certified queries; never exceeds ``d_k(p, q)``."""
    best = 0.0
    for f in queries:
        if not f.certified:
            raise ValueError(f"query {f.name} is not certified in F_k (certificate {f.certificate:.4g})")
        best = max(best, abs(integrate(f, p) - integrate(f, q)))
    return best


def snapping_bound(X, X_snapped) -> float:
    """``d_k(p_X, p_Xsnapped) <= sqrt(d) max_i ||x_i - x~_i||_2`` (F_k is sqrt(d)-Lipschitz)."""
    X = np.atleast_2d(X)
    disp = np.linalg.norm(X - np.atleast_2d(X_snapped), axis=1)
    return math.sqrt(X.shape[1]) * float(disp.max())


def rounding_bound(q: GridDistribution, synthetic: SyntheticDataset) -> float:
    """``d_k(q, p_Y) <= d sum_J |w_J - q_J|``."""
    return q.grid.d * float(np.abs(synthetic.weights() - q.q).sum())


def bump_lower_estimate(p, q, m_cells: int, k: int) -> float:
    """``sum_t |E_p f_t - E_q f_t|`` over the bump family on ``m_cells^d`` cells.

    The bumps have disjoint supports, so every signed sum of them is still in
    F_k and the total is a valid lower estimate of ``d_k(p, q)``.  Each point
    is evaluated only against the bump of its own cell.
    """
    p_pts, p_w = _as_points(p)
    q_pts, q_w = _as_points(q)
    d = p_pts.shape[1]
    if q_pts.shape[1] != d:
        raise DomainError(f"dimension mismatch: {d} vs {q_pts.shape[1]}")
    fam = bump_family(m_cells, d, k)
    totals = np.zeros(fam.M)
    for pts, w, sign in ((p_pts, p_w, 1.0), (q_pts, q_w, -1.0)):
        cell = np.clip(np.floor((pts + 1.0) / fam.r).astype(np.int64), 0, m_cells - 1)
        t = np.ravel_multi_index(tuple(cell.T), (m_cells,) * d)
        vals = fam.r**k / fam.C0 * chi((pts - fam.centers[t]) / fam.r)
        totals += sign * np.bincount(t, weights=w * vals, minlength=fam.M)
    return float(np.abs(totals).sum())
