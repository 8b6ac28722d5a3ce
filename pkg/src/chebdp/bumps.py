"""Localized smooth bumps on grid cells and the matching hard datasets.

The cutoff ``eta`` equals 1 on [-1/8, 1/8] and vanishes outside [-1/4, 1/4];
it is the classical ``exp(-1/t)`` smooth step.  With
``chi(u) = u_1 prod_l eta(u_l)`` and ``C0 = max_{1<=|a|<=k} ||d^a chi||_inf``,
the bump on a cell of side ``r`` centred at ``a`` is
``f(x) = r^k / C0 * chi((x - a) / r)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import sympy
from scipy.optimize import minimize_scalar

from .errors import InfeasibleError
from .queries import SmoothQuery, multi_indices

PLATEAU = 1.0 / 8.0
SUPPORT = 1.0 / 4.0


@functools.lru_cache(maxsize=None)
def _step_derivative(j: int):
    """Vectorized ``S^(j)`` on (0, 1) for ``S(t) = h(t) / (h(t) + h(1 - t))``."""
    t = sympy.symbols("t", positive=True)
    h = lambda s: sympy.exp(-1 / s)  # noqa: E731
    expr = sympy.diff(h(t) / (h(t) + h(1 - t)), t, j)
    return sympy.lambdify(t, expr, "numpy")


def smooth_step_derivative(j: int, t) -> np.ndarray:
    """``S^(j)(t)``: 0/1 outside (0, 1) for ``j = 0``, 0 for ``j >= 1``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    if j == 0:
        out[t >= 1.0] = 1.0
    inner = (t > 0.0) & (t < 1.0)
    if np.any(inner):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            vals = _step_derivative(j)(t[inner])
        out[inner] = np.nan_to_num(np.broadcast_to(vals, t[inner].shape), nan=0.0)
    return out


def eta(u, j: int = 0) -> np.ndarray:
    """``j``-th derivative of the cutoff ``eta(u) = S(2 - 8|u|)``."""
    u = np.asarray(u, dtype=float)
    arg = (SUPPORT - np.abs(u)) / (SUPPORT - PLATEAU)
    scale = (-np.sign(u) / (SUPPORT - PLATEAU)) ** j
    return scale * smooth_step_derivative(j, arg)


def chi(u: np.ndarray) -> np.ndarray:
    u = np.atleast_2d(u)
    return u[:, 0] * np.prod(eta(u), axis=1)


def _sup_abs(fn, hi: float = SUPPORT, samples: int = 200_001) -> float:
    """``sup_{0 <= u <= hi} |fn(u)|``: dense scan plus bounded local refinement."""
    u = np.linspace(0.0, hi, samples)
    vals = np.abs(fn(u))
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo_u, hi_u = u[max(i - 1, 0)], u[min(i + 1, samples - 1)]
    if hi_u > lo_u:
        res = minimize_scalar(
            lambda s: -abs(float(fn(np.array([s]))[0])),
            bounds=(lo_u, hi_u),
            method="bounded",
            options={"xatol": 1e-14},
        )
        best = max(best, -float(res.fun))
    return best


@functools.lru_cache(maxsize=None)
def eta_sup(j: int) -> float:
    """``||eta^(j)||_inf`` (even/odd symmetry: scanning u >= 0 suffices)."""
    if j == 0:
        return 1.0
    return _sup_abs(lambda u: eta(u, j))


@functools.lru_cache(maxsize=None)
def first_factor_sup(j: int) -> float:
    """``|| d^j/du^j (u eta(u)) ||_inf = || u eta^(j) + j eta^(j-1) ||_inf``."""
    if j == 0:
        return _sup_abs(lambda u: u * eta(u))
    return _sup_abs(lambda u: u * eta(u, j) + j * eta(u, j - 1))


def chi_derivative_sup(alpha) -> float:
    """``||d^alpha chi||_inf``; chi is a product of one-variable factors."""
    out = first_factor_sup(alpha[0])
    for a in alpha[1:]:
        out *= eta_sup(a)
    return out


@functools.lru_cache(maxsize=None)
def bump_constant(d: int, k: int) -> float:
    """``C0 = max_{1<=|alpha|<=k} ||d^alpha chi||_inf``."""
    return max(chi_derivative_sup(alpha) for alpha in multi_indices(d, k))


@dataclass
class BumpFamily:
    m_cells: int
    d: int
    k: int
    r: float
    C0: float
    centers: np.ndarray  # (M, d)
    x_max: np.ndarray  # (M, d)
    queries: list

    @property
    def M(self) -> int:
        return self.centers.shape[0]

    def peak_value(self) -> float:
        """``f_t(x_t^max) = r^k / (16 C0)``."""
        return self.r**self.k / (16.0 * self.C0)


def cell_centers(m_cells: int, d: int) -> np.ndarray:
    r = 2.0 / m_cells
    ax = -1.0 + r * (np.arange(m_cells) + 0.5)
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def _bump(center: np.ndarray, r: float, k: int, C0: float):
    scale = r**k / C0

    def f(x):
        return scale * chi((np.atleast_2d(x) - center) / r)

    return f


def bump_family(m_cells: int, d: int, k: int) -> BumpFamily:
    """``m_cells^d`` bumps with disjoint supports, one per cell of side ``2/m_cells``."""
    if m_cells < 2:
        raise ValueError("m_cells must be >= 2")
    r = 2.0 / m_cells
    C0 = bump_constant(d, k)
    centers = cell_centers(m_cells, d)
    offset = np.zeros(d)
    offset[0] = r / 16.0
    # chain rule: ||d^alpha f|| = r^(k-|alpha|) ||d^alpha chi|| / C0 <= 1 since r <= 1
    cert = max(r ** (k - sum(a)) * chi_derivative_sup(a) for a in multi_indices(d, k)) / C0
    queries = [
        SmoothQuery(f"bump{t}", _bump(c, r, k, C0), cert, k, d) for t, c in enumerate(centers)
    ]
    return BumpFamily(m_cells, d, k, r, C0, centers, centers + offset, queries)


@dataclass
class HardInstance:
    theta: np.ndarray  # (M,) entries +-1
    points: np.ndarray  # (n, d)
    cell_counts: np.ndarray  # n_t
    flips: int  # floor(beta n)
    beta: float
    bumps: BumpFamily
    n: int
    epsilon: float

    def tau(self, i: int) -> float:
        """``(floor(beta n) / n) * (f_i(x_i^max) - f_i(a_i))``."""
        f = self.bumps.queries[i]
        gain = f(self.bumps.x_max[i])[0] - f(self.bumps.centers[i])[0]
        return self.flips / self.n * float(gain)


def allocate_cells(n: int, M: int) -> np.ndarray:
    """``floor(n/M)`` per cell, one extra for the first ``n mod M`` cells."""
    counts = np.full(M, n // M, dtype=np.int64)
    counts[: n % M] += 1
    return counts


def hard_instance(
    n: int,
    d: int,
    k: int,
    m_cells: int,
    epsilon: float,
    theta=None,
    seed: int | None = None,
    c1: float = 1.0,
) -> HardInstance:
    """Dataset ``X^theta``: per cell, centre copies with ``floor(beta n)`` moved to ``x_max`` when ``theta_t = +1``.

    ``beta = 2 c1 / (n epsilon)``.  Either ``theta`` or ``seed`` (uniform
    random signs) selects the vertex of the hypercube; neither means all -1.
    """
    bumps = bump_family(m_cells, d, k)
    M = bumps.M
    if n < 2 * M:
        raise InfeasibleError(f"need n >= 2M = {2 * M} so every cell keeps n/(2M) points")
    if theta is None:
        if seed is None:
            theta = -np.ones(M, dtype=int)
        else:
            theta = np.random.default_rng(seed).choice([-1, 1], size=M)
    theta = np.asarray(theta, dtype=int)
    if theta.shape != (M,) or not np.all(np.isin(theta, (-1, 1))):
        raise ValueError(f"theta must be a +-1 vector of length {M}")
    beta = 2.0 * c1 / (n * epsilon)
    flips = math.floor(2.0 * c1 / epsilon + 1e-12)
    counts = allocate_cells(n, M)
    if flips > counts.min():
        raise InfeasibleError(f"floor(beta n) = {flips} exceeds the smallest cell population {counts.min()}")
    rows = []
    for t in range(M):
        moved = flips if theta[t] == 1 else 0
        rows.append(np.repeat(bumps.centers[t][None], counts[t] - moved, axis=0))
        rows.append(np.repeat(bumps.x_max[t][None], moved, axis=0))
    points = np.concatenate(rows, axis=0)
    return HardInstance(theta, points, counts, flips, beta, bumps, n, epsilon)
