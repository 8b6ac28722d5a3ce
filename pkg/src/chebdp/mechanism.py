"""Private release of weighted Chebyshev moments via the Gaussian mechanism.

Privacy is argued on the scaled statistic ``f(X)_K = ||K||^(-k/2) m_K(X)``.
Adding ``N(0, sigma^2)`` to each scaled coordinate is the same as adding
``N(0, ||K||^k sigma^2)`` to the unscaled moment ``m_K``, which is what
:func:`privatize` does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .basis import MomentIndexSet, cheb_table, check_domain, mode_apply
from .errors import BudgetError

# How the sup-norm of T_K enters the sensitivity bound.
#   "sup":     max |T_K| = 2^(nnz/2), the true sup-norm of the basis as evaluated.
#   "measure": max |T_K| <= sqrt(2^nnz / pi^d), folding in the pi^-d density
#              normalization.  Smaller by pi^d; only valid for moments taken
#              against pi^-d-scaled polynomials.  Kept for comparison.
SENSITIVITY_CONVENTIONS = ("sup", "measure")


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise BudgetError(f"epsilon must be positive, got {self.epsilon!r}")
        if not 0 < self.delta < 0.5:
            raise BudgetError(f"delta must lie in (0, 1/2), got {self.delta!r}")


@dataclass
class MomentVector:
    """Moment values in :class:`MomentIndexSet` enumeration order."""

    index_set: MomentIndexSet
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.index_set),):
            raise ValueError(
                f"expected {len(self.index_set)} moments, got shape {self.values.shape}"
            )

    def tensor(self) -> np.ndarray:
        """Dense ``(m + 1,) * d`` tensor with the zeroth moment set to 1."""
        return self.index_set.unflatten(self.values, origin=1.0)


def moment_tensor(points, m: int, weights=None, chunk: int = 1 << 22) -> np.ndarray:
    """``sum_i w_i T_K(x_i)`` for all ``K in {0..m}^d`` as a dense tensor.

    Uniform weights ``1/n`` when ``weights`` is None.  Rows are processed in
    chunks to bound memory at roughly ``chunk`` floats.
    """
    X = np.atleast_2d(check_domain(points))
    n, d = X.shape
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    out = np.zeros((m + 1,) * d)
    rows = max(1, chunk // (m + 1) ** d)
    for start in range(0, n, rows):
        Xc, wc = X[start : start + rows], w[start : start + rows]
        acc = cheb_table(m, Xc[:, 0]) * wc[:, None]
        for axis in range(1, d):
            T = cheb_table(m, Xc[:, axis])
            acc = acc[..., None] * T.reshape((T.shape[0],) + (1,) * axis + (m + 1,))
        out += acc.sum(axis=0)
    return out


def empirical_moments(points, index_set: MomentIndexSet) -> MomentVector:
    """Mean of ``T_K`` over the rows of ``points`` for every ``K`` in the set."""
    X = np.atleast_2d(points)
    if X.shape[1] != index_set.d:
        raise ValueError(f"points have dimension {X.shape[1]}, index set d={index_set.d}")
    tensor = moment_tensor(X, index_set.m)
    return MomentVector(index_set, index_set.flatten(tensor))


def grid_moments(q: np.ndarray, axis_points: np.ndarray, index_set: MomentIndexSet) -> MomentVector:
    """Moments of a distribution given as a weight tensor over a tensor grid."""
    B = cheb_table(index_set.m, axis_points).T
    tensor = mode_apply(q, [B] * index_set.d)
    return MomentVector(index_set, index_set.flatten(tensor))


def compute_S(index_set: MomentIndexSet, k: int) -> float:
    """``S = sum_{K != 0} ||K||_2^(-k)``, by direct summation."""
    return float(math.fsum(index_set.weights(k)))


def S_upper_bound(d: int, k: int, m: int) -> float:
    """Closed-form upper bound on ``S`` in the three regimes ``k <> d``."""
    lead = d * 2.0 ** (d - 1)
    if k < d:
        return lead * (1.0 + (m ** (d - k) - 1.0) / (d - k))
    if k == d:
        return lead * (1.0 + math.log(m))
    return lead * (1.0 + 1.0 / (k - d))


def sensitivity_bound(n: int, d: int, S: float, convention: str = "sup") -> float:
    """Upper bound on the squared l2-sensitivity of the scaled moment vector.

    ``"sup"`` gives ``4 * 2^d * S / n^2``; ``"measure"`` gives
    ``4 * 2^d * S / (pi^d n^2)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if convention not in SENSITIVITY_CONVENTIONS:
        raise ValueError(f"unknown sensitivity convention {convention!r}")
    bound = 4.0 * 2.0**d * S / n**2
    if convention == "measure":
        bound /= math.pi**d
    return bound


@dataclass(frozen=True)
class NoiseCalibration:
    """Base noise level; index ``K`` receives variance ``||K||^k * sigma_sq``."""

    S: float
    sigma_sq: float
    k: int
    sensitivity_sq: float
    branch: str

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)

    def variances(self, index_set: MomentIndexSet) -> np.ndarray:
        return index_set.norm_sq().astype(float) ** (self.k / 2.0) * self.sigma_sq

    def step3_lower_bound(self, budget: PrivacyBudget, n: int, d: int, convention: str = "measure") -> float:
        """Minimum base variance ``sensitivity * log(1.25/delta) / eps^2``."""
        sens = sensitivity_bound(n, d, self.S, convention)
        return sens * math.log(1.25 / budget.delta) / budget.epsilon**2


def gaussian_sigma(sensitivity: float, budget: PrivacyBudget) -> tuple[float, str]:
    """Gaussian-mechanism noise scale for l2-sensitivity ``sensitivity``.

    For ``epsilon < 1`` the classical ``sqrt(2 log(1.25/delta)) / epsilon``
    scale; otherwise the closed form valid for any epsilon and delta < 1/2.
    """
    eps, dlt = budget.epsilon, budget.delta
    if eps < 1.0:
        return sensitivity * math.sqrt(2.0 * math.log(1.25 / dlt)) / eps, "classical"
    inner = math.log(1.0 / (4.0 * dlt * (1.0 - dlt))) + eps
    return math.sqrt(2.0) * sensitivity / eps * math.sqrt(inner), "general"


def calibrate(
    budget: PrivacyBudget,
    n: int,
    d: int,
    S: float,
    k: int = 1,
    convention: str = "sup",
) -> NoiseCalibration:
    sens_sq = sensitivity_bound(n, d, S, convention)
    sigma, branch = gaussian_sigma(math.sqrt(sens_sq), budget)
    return NoiseCalibration(S=S, sigma_sq=sigma**2, k=k, sensitivity_sq=sens_sq, branch=branch)


def noise_generator(seed: int) -> np.random.Generator:
    """Counter-based stream (Philox) keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def privatize(mv: MomentVector, cal: NoiseCalibration, seed: int) -> MomentVector:
    """Add independent ``N(0, ||K||^k sigma^2)`` noise to every moment.

    Draws are taken in enumeration order from a single seeded stream, so the
    output is bit-identical for a fixed seed.
    """
    if cal.sigma_sq == 0.0:
        return replace(mv, values=mv.values.copy())
    z = noise_generator(seed).standard_normal(len(mv.index_set))
    noise = np.sqrt(cal.variances(mv.index_set)) * z
    return MomentVector(mv.index_set, mv.values + noise)
