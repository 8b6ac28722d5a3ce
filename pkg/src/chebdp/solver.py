"""Simplex-constrained weighted least squares for moment matching.

Finds grid weights ``q`` minimizing
``sum_K ||K||^(-2k) (mhat_K - sum_J q_J T_K(g_J))^2`` over the probability
simplex.  The first phase is monotone FISTA with backtracking and adaptive
restart; there the design matrix is never formed, it is a Kronecker product of
1-d Chebyshev evaluation matrices applied by successive mode products.  The
problem is badly conditioned (weights decay like ||K||^-k), so when FISTA has
not reached the KKT tolerance after ``finish_after`` iterations an exact
primal active-set finish is run on the dense columns of the grid, or of a
candidate support when the full matrix exceeds ``dense_max_entries``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .basis import MomentIndexSet, cheb_table, mode_apply
from .errors import SolverError
from .grid import Grid
from .mechanism import MomentVector

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    max_iters: int = 5000
    tol: float = 1e-8  # Frank-Wolfe / KKT gap
    rel_tol: float = 1e-10  # relative objective decrease over `patience` iterations
    patience: int = 10
    power_iters: int = 20
    check_every: int = 5
    method: str = "auto"  # "auto" | "fista"
    finish_after: int = 500
    dense_max_entries: int = 4_000_000


@dataclass
class GridDistribution:
    """Probability weights over the cells of ``grid`` (tensor of shape ``grid.shape``)."""

    grid: Grid
    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(self.grid.shape)
        if np.any(q < -1e-9) or not np.all(np.isfinite(q)):
            raise ValueError("grid weights must be finite and non-negative")
        q = np.clip(q, 0.0, None)
        total = q.sum()
        if total <= 0:
            raise ValueError("grid weights sum to zero")
        self.q = q / total

    @classmethod
    def uniform(cls, grid: Grid) -> "GridDistribution":
        return cls(grid, np.full(grid.shape, 1.0 / grid.size))


class DesignOperator:
    """Weighted map ``z -> (||K||^-k sum_J z_J T_K(g_J))_K`` and its adjoint."""

    def __init__(self, grid: Grid, index_set: MomentIndexSet, k: int):
        if grid.d != index_set.d:
            raise ValueError("grid and index set dimensions differ")
        self.grid = grid
        self.index_set = index_set
        self.k = k
        self.B = cheb_table(index_set.m, grid.axis_points()).T  # (m+1, r)
        self.weights = index_set.weights(k)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.index_set), self.grid.size

    def moments(self, z) -> np.ndarray:
        """Unweighted moments ``sum_J z_J T_K(g_J)`` in enumeration order."""
        z = np.asarray(z, dtype=float).reshape(self.grid.shape)
        return self.index_set.flatten(mode_apply(z, [self.B] * self.grid.d))

    def apply(self, z) -> np.ndarray:
        return self.weights * self.moments(z)

    def adjoint(self, y) -> np.ndarray:
        Y = self.index_set.unflatten(self.weights * np.asarray(y, dtype=float), origin=0.0)
        return mode_apply(Y, [self.B.T] * self.grid.d).reshape(-1)

    def columns(self, cells: np.ndarray) -> np.ndarray:
        """Dense weighted columns for the flat cell indices ``cells``."""
        J = np.array(np.unravel_index(cells, self.grid.shape))  # (d, s)
        cols = self.B[:, J[0]]
        for axis in range(1, self.grid.d):
            cols = (cols[:, None, :] * self.B[:, J[axis]][None, :, :]).reshape(-1, len(cells))
        return self.weights[:, None] * cols[1:]


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{z >= 0, sum z = 1}`` (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def objective(q, mhat: MomentVector, op: DesignOperator) -> float:
    """Weighted squared moment mismatch between ``q`` and ``mhat``."""
    qv = q.q if isinstance(q, GridDistribution) else q
    res = op.apply(qv) - op.weights * mhat.values
    return float(res @ res)


def kkt_gap(grad: np.ndarray, z: np.ndarray) -> float:
    """``<g, z> - min_J g_J``; zero exactly at a simplex-constrained minimizer."""
    return float(grad @ z - grad.min())


@dataclass
class SolveResult:
    distribution: GridDistribution
    objective: float
    kkt_gap: float
    iterations: int
    stop_reason: str
    converged: bool
    history: list = field(default_factory=list, repr=False)


def _lipschitz_estimate(op: DesignOperator, iters: int) -> float:
    v = np.ones(op.grid.size) + 1e-3 * np.cos(np.arange(op.grid.size))
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(iters):
        w = 2.0 * op.adjoint(op.apply(v))
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 1.0
        v = w / lam
    return lam


def _support_lsq(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``argmin ||A z - b||`` subject to ``sum z = 1`` (minimum-norm on ties)."""
    s = A.shape[1]
    kkt = np.zeros((s + 1, s + 1))
    kkt[:s, :s] = A.T @ A
    kkt[:s, s] = kkt[s, :s] = 1.0
    rhs = np.concatenate([A.T @ b, [1.0]])
    if s > 64:
        try:
            sol = np.linalg.solve(kkt, rhs)
            if np.all(np.isfinite(sol)):
                return sol[:s]
        except np.linalg.LinAlgError:
            pass
    return np.linalg.lstsq(kkt, rhs, rcond=None)[0][:s]


def simplex_active_set(A: np.ndarray, b: np.ndarray, z0: np.ndarray, tol: float, max_outer: int = 10_000):
    """Exact ``min ||A z - b||^2`` over the simplex by a primal active-set method.

    Lawson-Hanson adapted to the sum constraint: solve exactly on the current
    support, step back to the boundary when that leaves the simplex, and add
    the cell with the most negative reduced gradient until the KKT gap is
    below ``tol``.  ``z0`` must be feasible; its support is the warm start.
    """
    z = np.asarray(z0, dtype=float).copy()
    P = z > 0
    for _ in range(max_outer):
        while True:
            idx = np.flatnonzero(P)
            s = _support_lsq(A[:, idx], b)
            if np.all(s > 0):
                z[:] = 0.0
                z[idx] = s
                break
            zp = z[idx]
            neg = s <= 0
            alpha = float(np.min(zp[neg] / (zp[neg] - s[neg])))
            z[idx] = zp + alpha * (s - zp)
            z[idx[neg & (z[idx] <= zp * 1e-14 + 1e-300)]] = 0.0
            z[z < 0] = 0.0
            P = z > 0
        grad = 2.0 * A.T @ (A @ z - b)
        if kkt_gap(grad, z) <= tol:
            return z
        free = np.where(P, np.inf, grad)
        J = int(np.argmin(free))
        if not free[J] < grad[P].min():
            return z  # remaining gap is round-off on the support
        P[J] = True
    log.warning("active-set finish hit its iteration limit")
    return z


def _active_set_finish(z, grad, op: DesignOperator, b: np.ndarray, opts: SolverOptions):
    """Exact minimizer over a set of candidate cells, or None if too large."""
    rows = op.shape[0]
    if rows * op.grid.size <= opts.dense_max_entries:
        cells = np.arange(op.grid.size)
    else:
        support = np.flatnonzero(z > 0)
        budget = max(opts.dense_max_entries // rows - support.size, 0)
        extra = np.argsort(grad, kind="stable")[:budget]
        cells = np.union1d(support, extra)
        if rows * cells.size > opts.dense_max_entries or cells.size == 0:
            return None
    A = op.columns(cells)
    start = z[cells] / z[cells].sum()
    # warm start from NNLS with the sum constraint as a heavy extra row; its
    # answer is not always optimal (scipy 1.15), the active set corrects it
    rho = 1e4 * max(1.0, float(np.abs(A).max()))
    try:
        w, _ = nnls(np.vstack([A, np.full(cells.size, rho)]), np.concatenate([b, [rho]]), maxiter=50 * cells.size)
        if np.isfinite(w.sum()) and w.sum() > 0:
            start = w / w.sum()
    except RuntimeError:
        pass
    sub = simplex_active_set(A, b, start, opts.tol / 10)
    out = np.zeros_like(z)
    out[cells] = sub
    return out


def solve(
    mhat: MomentVector,
    grid: Grid,
    k: int,
    opts: SolverOptions | None = None,
) -> SolveResult:
    """Minimize the weighted moment mismatch over distributions on ``grid``."""
    opts = opts or SolverOptions()
    op = DesignOperator(grid, mhat.index_set, k)
    b = op.weights * mhat.values
    n = grid.size

    def f_and_res(z):
        res = op.apply(z) - b
        return float(res @ res), res

    x = np.full(n, 1.0 / n)
    fx, rx = f_and_res(x)
    y, fy, ry = x, fx, rx
    t = 1.0
    L = max(_lipschitz_estimate(op, opts.power_iters), 1e-12)
    history = [fx]
    gap = math.inf
    stop = "max_iters"
    it = 0

    if opts.method not in ("auto", "fista"):
        raise ValueError(f"unknown solver method {opts.method!r}")
    dense_ok = len(mhat.index_set) * n <= opts.dense_max_entries
    fista_iters = opts.max_iters
    if opts.method == "auto" and dense_ok:
        fista_iters = min(opts.max_iters, opts.finish_after)
        stop = "handoff"

    for it in range(1, fista_iters + 1):
        g = 2.0 * op.adjoint(ry)
        while True:
            z = project_simplex(y - g / L)
            fz, rz = f_and_res(z)
            step = z - y
            if fz <= fy + g @ step + 0.5 * L * (step @ step) * (1 + 1e-12) + 1e-300:
                break
            L *= 2.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if fz <= fx:
            x_prev, x, fx, rx = x, z, fz, rz
            y = x + (t - 1.0) / t_next * (x - x_prev)
            t = t_next
        else:
            # no descent: keep x and restart momentum
            y, t = x, 1.0
        if y is x:
            fy, ry = fx, rx
        else:
            fy, ry = f_and_res(y)
        history.append(fx)
        if not np.isfinite(fx):
            raise SolverError("objective became non-finite")

        if it % opts.check_every == 0:
            gap = kkt_gap(2.0 * op.adjoint(rx), x)
            if gap <= opts.tol:
                stop = "kkt"
                break
        if it > opts.patience:
            old = history[-1 - opts.patience]
            if old - fx <= opts.rel_tol * max(fx, 1e-300):
                stop = "stalled"
                break

    grad = 2.0 * op.adjoint(rx)
    gap = kkt_gap(grad, x)
    if gap <= opts.tol:
        stop = "kkt"
    elif opts.method == "auto":
        cand = _active_set_finish(x, grad, op, b, opts)
        if cand is not None:
            fc, rc = f_and_res(cand)
            if fc <= fx * (1 + 1e-10) + 1e-300:
                gc = kkt_gap(2.0 * op.adjoint(rc), cand)
                x, fx, rx, gap = cand, fc, rc, gc
                history.append(fx)
                stop = "active_set"
    converged = gap <= opts.tol
    if not converged:
        log.warning("solver stopped (%s) after %d iterations with KKT gap %.3g", stop, it, gap)
    return SolveResult(
        distribution=GridDistribution(grid, x),
        objective=fx,
        kkt_gap=gap,
        iterations=it,
        stop_reason=stop,
        converged=converged,
        history=history,
    )
