"""Smooth test queries with analytic derivative certificates.

A query belongs to the class ``F_k`` when every partial derivative of order
``1..k`` is bounded by 1 on [-1, 1]^d.  Each family below computes
``max_{1<=|a|<=k} ||d^a f||_inf`` in closed form (or from polynomial critical
points) and the constructors rescale by it, so returned queries are members.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import hermite_e as H


@dataclass(frozen=True)
class SmoothQuery:
    name: str
    func: Callable[[np.ndarray], np.ndarray]
    certificate: float
    k: int
    d: int

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.func(x)

    @property
    def certified(self) -> bool:
        return self.certificate <= 1.0 + 1e-12

    def scaled(self) -> "SmoothQuery":
        """Divide by the certificate when it exceeds 1."""
        if self.certificate <= 1.0:
            return self
        c = self.certificate
        f = self.func
        return SmoothQuery(self.name, lambda x: f(x) / c, 1.0, self.k, self.d)


def multi_indices(d: int, k: int):
    """All ``alpha`` in N^d with ``1 <= |alpha| <= k``."""
    for alpha in itertools.product(range(k + 1), repeat=d):
        if 1 <= sum(alpha) <= k:
            yield alpha


def monomial(J, d: int, k: int) -> SmoothQuery:
    """``prod_{j in J} x_j``; every derivative is a sub-product bounded by 1."""
    J = tuple(sorted(set(J)))
    if not J:
        raise ValueError("monomial needs at least one coordinate")
    cols = list(J)
    return SmoothQuery(f"monomial{J}", lambda x: np.prod(x[:, cols], axis=1), 1.0, k, d)


def linear(v, k: int) -> SmoothQuery:
    v = np.asarray(v, dtype=float)
    cert = float(np.max(np.abs(v)))
    q = SmoothQuery("linear", lambda x: x @ v, cert, k, v.size)
    return q.scaled()


def quadratic(A, k: int) -> SmoothQuery:
    """``x^T A x`` for symmetric ``A``; gradient sup is ``2 max_j ||A_j||_1``."""
    A = np.asarray(A, dtype=float)
    A = 0.5 * (A + A.T)
    cert = 2.0 * float(np.max(np.sum(np.abs(A), axis=1)))
    q = SmoothQuery("quadratic", lambda x: np.einsum("ni,ij,nj->n", x, A, x), cert, k, A.shape[0])
    return q.scaled()


def _hermite_function_max(j: int, lo: float, hi: float) -> float:
    """``max_{t in [lo, hi]} |He_j(t) exp(-t^2/2)|``.

    Critical points are the roots of ``He_{j+1}``.
    """
    cand = [lo, hi]
    roots = H.hermeroots([0] * (j + 1) + [1])
    cand += [float(t.real) for t in np.atleast_1d(roots) if abs(t.imag) < 1e-12 and lo <= t.real <= hi]
    t = np.array(cand)
    vals = H.hermeval(t, [0] * j + [1]) * np.exp(-0.5 * t**2)
    return float(np.max(np.abs(vals)))


def gaussian_kernel(mu, s: float, k: int) -> SmoothQuery:
    """``exp(-||x - mu||^2 / (2 s^2))``."""
    mu = np.asarray(mu, dtype=float)
    d = mu.size
    per_axis = [
        [s ** (-j) * _hermite_function_max(j, (-1 - mu[i]) / s, (1 - mu[i]) / s) for j in range(k + 1)]
        for i in range(d)
    ]
    cert = max(math.prod(per_axis[i][a] for i, a in enumerate(alpha)) for alpha in multi_indices(d, k))

    def f(x):
        return np.exp(-np.sum((x - mu) ** 2, axis=1) / (2 * s * s))

    return SmoothQuery("gaussian", f, cert, k, d).scaled()


def _logistic_derivative_polys(k: int) -> list[Polynomial]:
    """``sigma^(j) = P_j(sigma)`` for ``j = 0..k``."""
    s_minus_s2 = Polynomial([0, 1, -1])
    polys = [Polynomial([0, 1])]
    for _ in range(k):
        polys.append(polys[-1].deriv() * s_minus_s2)
    return polys


def _sigmoid(t):
    return 1.0 / (1.0 + np.exp(-t))


def logistic_derivative_max(j: int, lo: float, hi: float) -> float:
    """``max_{t in [lo, hi]} |sigma^(j)(t)|`` via critical points of ``P_j``."""
    P = _logistic_derivative_polys(j)[j]
    a, b = _sigmoid(lo), _sigmoid(hi)
    cand = [a, b]
    for root in np.atleast_1d(P.deriv().roots()):
        if abs(root.imag) < 1e-12 and a <= root.real <= b:
            cand.append(float(root.real))
    return float(np.max(np.abs(P(np.array(cand)))))


def logistic(v, b: float, k: int) -> SmoothQuery:
    """``1 / (1 + exp(-(<v, x> + b)))``."""
    v = np.asarray(v, dtype=float)
    span = float(np.sum(np.abs(v)))
    vmax = float(np.max(np.abs(v)))
    cert = max(vmax**j * logistic_derivative_max(j, b - span, b + span) for j in range(1, k + 1))
    return SmoothQuery("logistic", lambda x: _sigmoid(x @ v + b), cert, k, v.size).scaled()


def _central_weights(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Offsets (in steps) and weights of the ``order``-th central difference."""
    i = np.arange(order + 1)
    offsets = order / 2.0 - i
    weights = np.array([(-1) ** j * math.comb(order, j) for j in i], dtype=float)
    return offsets, weights


def fd_derivative(f, x: np.ndarray, alpha, h: float) -> np.ndarray:
    """Mixed partial ``d^alpha f`` at rows of ``x`` by tensor central differences."""
    x = np.atleast_2d(x)
    stencils = [_central_weights(a) for a in alpha]
    out = np.zeros(x.shape[0])
    for combo in itertools.product(*[range(a + 1) for a in alpha]):
        shift = np.array([stencils[i][0][c] for i, c in enumerate(combo)]) * h
        w = math.prod(stencils[i][1][c] for i, c in enumerate(combo))
        out += w * f(x + shift)
    return out / h ** sum(alpha)


def fd_certificate(f, d: int, k: int, probes: np.ndarray, h: float) -> float:
    """Finite-difference estimate of ``max_{1<=|a|<=k} sup |d^a f|`` over ``probes``."""
    return max(float(np.max(np.abs(fd_derivative(f, probes, alpha, h)))) for alpha in multi_indices(d, k))


def default_family(name: str, d: int, k: int, seed: int = 0) -> list[SmoothQuery]:
    """A small deterministic set of queries from one named family."""
    rng = np.random.default_rng(seed)
    if name == "monomial":
        out = []
        for size in range(1, min(d, 3) + 1):
            out += [monomial(J, d, k) for J in itertools.combinations(range(d), size)]
        return out[:32]
    if name == "linear":
        vs = list(np.eye(d)) + list(rng.normal(size=(4, d)))
        return [linear(v, k) for v in vs]
    if name == "quadratic":
        return [quadratic(A + A.T, k) for A in rng.normal(size=(4, d, d))]
    if name == "gaussian":
        centers = rng.uniform(-0.8, 0.8, size=(6, d))
        return [gaussian_kernel(c, s, k) for c in centers for s in (0.3, 0.7)]
    if name == "logistic":
        return [logistic(rng.normal(size=d) * 2, float(rng.normal()), k) for _ in range(6)]
    raise ValueError(f"unknown query family {name!r}")


FAMILIES = ("monomial", "linear", "quadratic", "gaussian", "logistic")
