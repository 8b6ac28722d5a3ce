"""End-to-end private synthetic data: grid, rounding, noisy moments, matching, apportionment.

The pipeline is split at the privacy boundary.  :func:`release_moments` is the
only function that touches the dataset; it returns a :class:`PrivateRelease`
holding nothing but the noised moments and public parameters.
:func:`synthesize` consumes that release alone, so everything after the
moment release is post-processing.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import mechanism
from .basis import MomentIndexSet
from .errors import CapExceededError
from .grid import GRID_CAP, Grid, build_grid, histogram, validate_dataset
from .mechanism import MomentVector, NoiseCalibration, PrivacyBudget
from .solver import GridDistribution, SolverOptions, solve

DEFAULT_C = 2.0 * math.sqrt(8.0 / math.pi)
MOMENT_CAP = 2**20
UNSAFE_WATERMARK = "UNSAFE-NO-PRIVACY: noise disabled, output is NOT differentially private"


def choose_m(d: int, k: int, epsilon: float, delta: float, n: int, c: float = DEFAULT_C) -> int:
    """Degree cap ``ceil((eps n / sqrt(log(1.25/delta)))^(1/max(d,k)) / c)``, at least ``k``."""
    if c <= math.sqrt(8.0 / math.pi):
        raise ValueError("c must exceed sqrt(8/pi)")
    scale = epsilon * n / math.sqrt(math.log(1.25 / delta))
    m = math.ceil(scale ** (1.0 / max(d, k)) / c)
    return max(m, k, 1)


def synthetic_size(r: int, d: int, k: int, epsilon: float, n: int) -> int:
    """``m' = ceil(r^d (eps n)^min(1, k/d))``."""
    return math.ceil(r**d * (epsilon * n) ** min(1.0, k / d))


@dataclass
class MechanismConfig:
    d: int
    k: int
    epsilon: float
    delta: float
    m: int | None = None
    seed: int = 0
    c: float = DEFAULT_C
    cap_grid: int = GRID_CAP
    cap_moments: int = MOMENT_CAP
    sensitivity: str = "sup"
    unsafe_no_privacy: bool = False
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.d < 1 or self.k < 1:
            raise ValueError("need d >= 1 and k >= 1")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be >= 1")
        if isinstance(self.solver, dict):
            self.solver = SolverOptions(**self.solver)
        PrivacyBudget(self.epsilon, self.delta)

    @property
    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.epsilon, self.delta)

    def resolve_m(self, n: int) -> int:
        if self.m is not None:
            return self.m
        return choose_m(self.d, self.k, self.epsilon, self.delta, n, self.c)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class PrivateRelease:
    """Output of the moment release; carries no reference to the dataset."""

    config: MechanismConfig
    n: int
    grid: Grid
    index_set: MomentIndexSet
    moments: MomentVector
    calibration: NoiseCalibration


@dataclass
class SyntheticDataset:
    """Multiset of grid points: ``counts[J]`` copies of grid point ``J``."""

    grid: Grid
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(self.grid.shape)
        if np.any(self.counts < 0):
            raise ValueError("negative multiplicity")

    @property
    def m_prime(self) -> int:
        return int(self.counts.sum())

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Occupied grid points and their multiplicities."""
        flat = np.flatnonzero(self.counts.ravel())
        J = np.array(np.unravel_index(flat, self.grid.shape)).T
        return self.grid.point(J), self.counts.ravel()[flat]

    def points(self) -> np.ndarray:
        """All ``m'`` rows expanded, in grid enumeration order."""
        pts, mult = self.support()
        return np.repeat(pts, mult, axis=0)

    def weights(self) -> np.ndarray:
        return self.counts / self.m_prime


@dataclass
class RunReport:
    config: dict
    manifest: dict
    n: int
    m: int
    r: int
    grid_cells: int
    n_moments: int
    m_prime: int
    S: float
    sigma: float
    sigma_sq: float
    sensitivity_sq: float
    calibration_branch: str
    solver_objective: float
    solver_residual: float
    solver_gap: float
    solver_iterations: int
    solver_stop: str
    solver_converged: bool
    timings: dict
    watermark: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def apportion(q, m_prime: int) -> np.ndarray:
    """Largest-remainder rounding of ``m_prime * q`` to integers summing to ``m_prime``.

    Remainders go to the largest fractional parts; ties go to the cell that
    comes first in enumeration order.  Accepts a weight array or a
    :class:`GridDistribution` and returns counts of the same shape.
    """
    weights = q.q if isinstance(q, GridDistribution) else np.asarray(q, dtype=float)
    if m_prime < 1:
        raise ValueError("m_prime must be >= 1")
    flat = weights.ravel()
    scaled = m_prime * flat
    counts = np.floor(scaled).astype(np.int64)
    frac = scaled - counts
    left = m_prime - int(counts.sum())
    order = np.argsort(-frac, kind="stable")
    if left > 0:
        counts[order[:left]] += 1
    elif left < 0:
        # only reachable when q sums to slightly more than 1
        donors = order[::-1][counts[order[::-1]] > 0][: -left]
        counts[donors] -= 1
    return counts.reshape(weights.shape)


def _check_caps(cfg: MechanismConfig, m: int) -> None:
    n_mom = (m + 1) ** cfg.d - 1
    if n_mom > cfg.cap_moments:
        raise CapExceededError(
            f"(m+1)^d - 1 = {n_mom} moments (m={m}, d={cfg.d}) exceeds cap-moments {cfg.cap_moments}"
        )
    r = m**cfg.k
    if r**cfg.d > cfg.cap_grid:
        raise CapExceededError(
            f"r^d = {r}^{cfg.d} = {r**cfg.d} grid cells (m={m}, k={cfg.k}) exceeds cap-grid {cfg.cap_grid}"
        )


def release_moments(X, cfg: MechanismConfig) -> tuple[PrivateRelease, dict]:
    """Snap ``X`` onto the grid and release its noisy moments.

    Returns the release and per-step timings.  This is the only stage that
    reads ``X``.
    """
    timings = {}
    t0 = time.perf_counter()
    X = validate_dataset(X, cfg.d)
    n = X.shape[0]
    m = cfg.resolve_m(n)
    _check_caps(cfg, m)
    grid = build_grid(cfg.d, m, cfg.k, cap=cfg.cap_grid)
    index_set = MomentIndexSet(cfg.d, m)
    timings["grid"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    p_snapped = histogram(X, grid)
    timings["snap"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    raw = mechanism.grid_moments(p_snapped, grid.axis_points(), index_set)
    S = mechanism.compute_S(index_set, cfg.k)
    cal = mechanism.calibrate(cfg.budget, n, cfg.d, S, cfg.k, convention=cfg.sensitivity)
    if cfg.unsafe_no_privacy:
        cal = NoiseCalibration(S=S, sigma_sq=0.0, k=cfg.k, sensitivity_sq=cal.sensitivity_sq, branch="disabled")
    noised = mechanism.privatize(raw, cal, cfg.seed)
    timings["release"] = time.perf_counter() - t0
    del X, p_snapped, raw
    return PrivateRelease(cfg, n, grid, index_set, noised, cal), timings


def synthesize(release: PrivateRelease) -> tuple[SyntheticDataset, RunReport, GridDistribution]:
    """Moment matching and apportionment from a private release only."""
    cfg = release.config
    timings = {}
    t0 = time.perf_counter()
    result = solve(release.moments, release.grid, cfg.k, cfg.solver)
    timings["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    grid = release.grid
    m_prime = synthetic_size(grid.r, cfg.d, cfg.k, cfg.epsilon, release.n)
    counts = apportion(result.distribution, m_prime)
    synthetic = SyntheticDataset(grid, counts)
    timings["apportion"] = time.perf_counter() - t0

    cal = release.calibration
    report = RunReport(
        config=cfg.to_dict(),
        manifest={"config_hash": cfg.digest(), "seed": cfg.seed},
        n=release.n,
        m=release.index_set.m,
        r=grid.r,
        grid_cells=grid.size,
        n_moments=len(release.index_set),
        m_prime=m_prime,
        S=cal.S,
        sigma=cal.sigma,
        sigma_sq=cal.sigma_sq,
        sensitivity_sq=cal.sensitivity_sq,
        calibration_branch=cal.branch,
        solver_objective=result.objective,
        solver_residual=math.sqrt(result.objective),
        solver_gap=result.kkt_gap,
        solver_iterations=result.iterations,
        solver_stop=result.stop_reason,
        solver_converged=result.converged,
        timings=timings,
        watermark=UNSAFE_WATERMARK if cfg.unsafe_no_privacy else None,
    )
    return synthetic, report, result.distribution


def run(X, cfg: MechanismConfig) -> tuple[SyntheticDataset, RunReport]:
    """Run the full mechanism on dataset ``X`` (rows in [-1, 1]^d)."""
    release, t_release = release_moments(X, cfg)
    synthetic, report, _ = synthesize(release)
    report.timings = {**t_release, **report.timings}
    return synthetic, report
