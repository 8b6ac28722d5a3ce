"""Regular grid over [-1, 1]^d and nearest-point rounding onto it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapExceededError, DomainError

GRID_CAP = 2**22


@dataclass(frozen=True)
class Grid:
    """``r`` points per axis at ``-1 + j * delta``, ``j = 0..r-1``, ``delta = 2/r``.

    The point ``+1`` is not on the grid; the last point per axis is ``1 - delta``.
    """

    d: int
    r: int

    @property
    def delta(self) -> float:
        return 2.0 / self.r

    @property
    def size(self) -> int:
        return self.r**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.r,) * self.d

    def axis_points(self) -> np.ndarray:
        return -1.0 + 2.0 * np.arange(self.r) / self.r

    def points(self) -> np.ndarray:
        """All grid points, shape ``(r^d, d)``, C-order over the index tensor."""
        ax = self.axis_points()
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def point(self, J) -> np.ndarray:
        """Coordinates of the cell with zero-based index tuple ``J``."""
        return -1.0 + 2.0 * np.asarray(J, dtype=float) / self.r


def build_grid(d: int, m: int, k: int, cap: int = GRID_CAP) -> Grid:
    """Grid with ``r = m^k`` points per axis."""
    if d < 1 or m < 1 or k < 1:
        raise ValueError("need d, m, k >= 1")
    r = m**k
    if r**d > cap:
        raise CapExceededError(f"grid has r^d = {r}^{d} = {r**d} cells, cap-grid is {cap}")
    return Grid(d=d, r=r)


def validate_dataset(X, d: int | None = None) -> np.ndarray:
    """Coerce ``X`` to an ``(n, d)`` float array inside [-1, 1]^d.

    Out-of-range rows are rejected (never clamped) and reported by number.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if d in (None, 1) else X[None, :]
    if X.ndim != 2 or X.shape[0] < 1:
        raise DomainError("dataset must be a non-empty (n, d) array")
    if d is not None and X.shape[1] != d:
        raise DomainError(f"dataset has {X.shape[1]} columns, expected d={d}")
    if not np.all(np.isfinite(X)):
        bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
        raise DomainError(f"non-finite values in rows {bad[:10].tolist()}")
    bad = np.flatnonzero(np.any(np.abs(X) > 1.0, axis=1))
    if bad.size:
        raise DomainError(f"coordinates outside [-1, 1] in rows {bad[:10].tolist()}")
    return X


def snap_indices(X, grid: Grid) -> np.ndarray:
    """Zero-based per-axis indices of the nearest grid point for each row.

    Rounding is separable, which is exact for an axis-aligned grid under l2.
    Midpoints go to the smaller coordinate.
    """
    X = validate_dataset(X, grid.d)
    t = (X + 1.0) * (grid.r / 2.0)
    idx = np.ceil(t - 0.5).astype(np.int64)
    return np.clip(idx, 0, grid.r - 1)


def snap(X, grid: Grid) -> np.ndarray:
    """Round every row of ``X`` to its nearest grid point."""
    return grid.point(snap_indices(X, grid))


def histogram(X, grid: Grid) -> np.ndarray:
    """Empirical distribution of the snapped rows as a ``grid.shape`` tensor."""
    idx = snap_indices(X, grid)
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
    counts = np.bincount(flat, minlength=grid.size).astype(float)
    return (counts / idx.shape[0]).reshape(grid.shape)
