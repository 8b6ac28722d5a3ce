"""Normalized Chebyshev polynomials on [-1, 1]^d.

The one-dimensional basis is ``T_0 = 1`` and ``T_n(x) = sqrt(2) cos(n arccos x)``,
orthonormal under the arcsine measure ``dx / (pi sqrt(1 - x^2))``.  Multivariate
polynomials are tensor products indexed by multi-indices ``K``.

Evaluation uses the trigonometric form rather than the three-term recurrence
``T_{n+1} = 2x T_n - T_{n-1}``; both agree to rounding, the cosine form keeps
|T_n| <= sqrt(2) exactly near the endpoints.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import CapExceededError, DomainError

SQRT2 = math.sqrt(2.0)
CLAMP_TOL = 1e-12
QUADRATURE_CAP = 2**24


def check_domain(x, tol: float = CLAMP_TOL) -> np.ndarray:
    """Return ``x`` as a float array clipped to [-1, 1].

    Values up to ``tol`` outside the interval are clamped; anything further
    out raises :class:`DomainError`.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite coordinate")
    if x.size and np.max(np.abs(x)) > 1.0 + tol:
        raise DomainError(f"coordinate {np.max(np.abs(x))!r} outside [-1, 1]")
    return np.clip(x, -1.0, 1.0)


def cheb_1d(n: int, x):
    """Evaluate the normalized Chebyshev polynomial of degree ``n`` at ``x``."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    x = check_domain(x)
    if n == 0:
        out = np.ones_like(x)
    else:
        out = SQRT2 * np.cos(n * np.arccos(x))
    return float(out) if out.ndim == 0 else out


def cheb_table(m: int, x) -> np.ndarray:
    """All degrees ``0..m`` at once: returns shape ``x.shape + (m + 1,)``."""
    x = check_domain(x)
    theta = np.arccos(x)[..., None]
    table = SQRT2 * np.cos(theta * np.arange(m + 1))
    table[..., 0] = 1.0
    return table


@dataclass(frozen=True, order=True)
class MultiIndex:
    """A multi-index ``K = (k_1, ..., k_d)`` of non-negative integers."""

    entries: tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        if any(e < 0 for e in entries):
            raise ValueError(f"negative entry in multi-index {entries}")
        object.__setattr__(self, "entries", entries)

    @property
    def d(self) -> int:
        return len(self.entries)

    def norm_sq(self) -> int:
        return sum(e * e for e in self.entries)

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def nnz(self) -> int:
        return sum(1 for e in self.entries if e)

    def __iter__(self):
        return iter(self.entries)


def cheb_multi(K, x):
    """Evaluate ``T_K`` at a point (shape ``(d,)``) or points (shape ``(n, d)``).

    No measure normalization is applied: ``|T_K| <= 2^(nnz(K)/2)``.
    """
    K = K.entries if isinstance(K, MultiIndex) else tuple(K)
    x = check_domain(x)
    if x.shape[-1] != len(K):
        raise ValueError(f"point dimension {x.shape[-1]} != index dimension {len(K)}")
    out = np.ones(x.shape[:-1])
    for axis, k in enumerate(K):
        if k:
            out = out * (SQRT2 * np.cos(k * np.arccos(x[..., axis])))
    return float(out) if out.ndim == 0 else out


class MomentIndexSet:
    """The indices ``{0..m}^d`` without the origin, in lexicographic order.

    Lexicographic order coincides with C-order flattening of a tensor of shape
    ``(m + 1,) * d``, so flat moment vectors are ``tensor.ravel()[1:]``.
    """

    def __init__(self, d: int, m: int):
        if d < 1 or m < 1:
            raise ValueError("need d >= 1 and m >= 1")
        self.d = int(d)
        self.m = int(m)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m + 1,) * self.d

    def __len__(self) -> int:
        return (self.m + 1) ** self.d - 1

    def __iter__(self) -> Iterator[MultiIndex]:
        it = itertools.product(range(self.m + 1), repeat=self.d)
        next(it)
        for entries in it:
            yield MultiIndex(entries)

    def __eq__(self, other):
        return isinstance(other, MomentIndexSet) and (self.d, self.m) == (other.d, other.m)

    def __hash__(self):
        return hash((self.d, self.m))

    def __repr__(self):
        return f"MomentIndexSet(d={self.d}, m={self.m})"

    def array(self) -> np.ndarray:
        """Integer array of shape ``(len(self), d)``."""
        grids = np.indices(self.shape).reshape(self.d, -1).T
        return grids[1:]

    def norm_sq(self) -> np.ndarray:
        return np.sum(self.array() ** 2, axis=1)

    def nnz(self) -> np.ndarray:
        return np.count_nonzero(self.array(), axis=1)

    def weights(self, k: int) -> np.ndarray:
        """``||K||_2^(-k)`` for every index, in enumeration order."""
        return self.norm_sq().astype(float) ** (-k / 2.0)

    def flatten(self, tensor: np.ndarray) -> np.ndarray:
        return np.asarray(tensor).reshape(-1)[1:]

    def unflatten(self, values: np.ndarray, origin: float = 0.0) -> np.ndarray:
        out = np.empty((self.m + 1) ** self.d)
        out[0] = origin
        out[1:] = values
        return out.reshape(self.shape)


def mode_apply(tensor: np.ndarray, matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Multiply ``tensor`` by ``matrices[i]`` along axis ``i`` for every axis.

    ``matrices[i]`` has shape ``(p_i, tensor.shape[i])``; the result has shape
    ``(p_0, ..., p_{d-1})``.
    """
    out = tensor
    for axis, mat in enumerate(matrices):
        out = np.moveaxis(np.tensordot(mat, out, axes=([1], [axis])), 0, axis)
    return out


def quadrature_nodes(N: int, d: int = 1, cap: int = QUADRATURE_CAP):
    """Tensor Chebyshev-Gauss rule for the product arcsine measure.

    Returns ``(nodes, weights)`` with ``nodes`` of shape ``(N^d, d)`` and uniform
    weights ``N^-d``.  The 1-d rule integrates polynomials of degree
    ``<= 2N - 1`` exactly.
    """
    if N < 1:
        raise ValueError("need N >= 1")
    if N**d > cap:
        raise CapExceededError(f"quadrature needs {N}^{d} nodes, cap is {cap}")
    x = gauss_nodes_1d(N)
    mesh = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in mesh], axis=1)
    weights = np.full(N**d, float(N) ** (-d))
    return nodes, weights


def gauss_nodes_1d(N: int) -> np.ndarray:
    j = np.arange(1, N + 1)
    x = np.cos((2 * j - 1) * np.pi / (2 * N))
    # cos(pi/2) is 6e-17, not 0
    x[np.abs(x) < 1e-15] = 0.0
    return x


def expand(
    f: Callable[[np.ndarray], np.ndarray],
    d: int,
    m: int,
    N: int,
    cap: int = QUADRATURE_CAP,
) -> np.ndarray:
    """Chebyshev coefficients ``c_K = <f, T_K>`` for ``K in {0..m}^d``.

    ``f`` is called once on an ``(N^d, d)`` array of nodes and must return
    ``N^d`` values.  Exact for polynomials of degree ``< 2N - m`` per axis;
    otherwise the result carries aliasing error from the quadrature.
    Returns a tensor of shape ``(m + 1,) * d``.
    """
    if N <= m:
        raise ValueError(f"need N > m for exact low-degree coefficients (N={N}, m={m})")
    nodes, _ = quadrature_nodes(N, d, cap)
    values = np.asarray(f(nodes), dtype=float).reshape((N,) * d)
    B = cheb_table(m, gauss_nodes_1d(N)).T / N
    return mode_apply(values, [B] * d)


def evaluate_expansion(coeffs: np.ndarray, x) -> np.ndarray:
    """Evaluate ``sum_K coeffs[K] T_K(x)`` at points ``x`` of shape ``(n, d)``."""
    x = np.atleast_2d(check_domain(x))
    d = coeffs.ndim
    m = coeffs.shape[0] - 1
    tables = [cheb_table(m, x[:, axis]) for axis in range(d)]
    # contract one axis at a time, keeping the point axis in front
    out = np.einsum("na,a...->n...", tables[0], coeffs)
    for axis in range(1, d):
        out = np.einsum("na,na...->n...", tables[axis], out)
    return out
