"""Rate sweeps: run the mechanism over a range of n and fit log-log slopes.

The primary metric per run is the certified upper bound on
``d_k(p_X, p_Y)``, the sum of

* snapping: ``sqrt(d) max_i ||x_i - x~_i||``,
* matching: ``2 C_k^Jac d / m^k + sqrt(C_k) Gamma(p_X~, q)``,
* rounding: ``d sum_J |w_J - q_J|``.

``sqrt(C_k) Gamma`` alone (the noise-driven part) and a bump-family lower
estimate are recorded as secondary series.  These diagnostics read the raw
data and are for evaluation only; they are never part of a release.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import utility
from .grid import histogram, snap
from .solver import GridDistribution
from .synth import DEFAULT_C, MechanismConfig, release_moments, synthesize

log = logging.getLogger(__name__)


@dataclass
class ExperimentSpec:
    d: int
    k: int
    ns: list
    delta: float = 1e-5
    epsilon: float = 1.0
    repetitions: int = 10
    seed: int = 0
    data: str = "beta"
    workers: int = 1
    c: float = DEFAULT_C
    cap_grid: int = 2**22
    cap_moments: int = 2**20
    out_dir: str | None = None

    def __post_init__(self):
        self.ns = sorted(int(n) for n in self.ns)
        if len(self.ns) < 2:
            raise ValueError("a sweep needs at least two values of n")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def sample_dataset(kind: str, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "beta":
        return 2.0 * rng.beta(2.0, 5.0, size=(n, d)) - 1.0
    if kind == "uniform":
        return rng.uniform(-1.0, 1.0, size=(n, d))
    if kind == "mixture":
        centers = np.array([[-0.5] * d, [0.4] * d])
        pick = rng.integers(0, 2, size=n)
        return np.clip(centers[pick] + 0.15 * rng.standard_normal((n, d)), -1.0, 1.0)
    raise ValueError(f"unknown data kind {kind!r}")


def derive_seed(seed: int, point: int, rep: int) -> int:
    """Independent 64-bit seed for task ``(point, rep)``."""
    return int(np.random.SeedSequence([seed, point, rep]).generate_state(1, np.uint64)[0])


def run_task(spec: ExperimentSpec, point: int, rep: int) -> dict:
    n = spec.ns[point]
    seed = derive_seed(spec.seed, point, rep)
    rng = np.random.default_rng(seed)
    X = sample_dataset(spec.data, n, spec.d, rng)
    cfg = MechanismConfig(
        d=spec.d, k=spec.k, epsilon=spec.epsilon, delta=spec.delta, seed=seed,
        c=spec.c, cap_grid=spec.cap_grid, cap_moments=spec.cap_moments,
    )
    t0 = time.perf_counter()
    release, _ = release_moments(X, cfg)
    synthetic, report, q = synthesize(release)
    elapsed = time.perf_counter() - t0

    grid, index_set = release.grid, release.index_set
    p_snapped = GridDistribution(grid, histogram(X, grid))
    gam = utility.gamma(p_snapped, q, index_set, spec.k).gamma
    snap_term = utility.snapping_bound(X, snap(X, grid))
    match_term = utility.dk_bound(gam, index_set.m, spec.d, spec.k)
    round_term = utility.rounding_bound(q, synthetic)
    noise_term = math.sqrt(utility.coefficient_constant(spec.k)) * gam

    bump_lb = 0.0
    m_cells = 2
    while m_cells**spec.d <= 4096:
        bump_lb = max(bump_lb, utility.bump_lower_estimate(X, synthetic, m_cells, spec.k))
        m_cells *= 2

    return {
        "n": n, "rep": rep, "seed": seed, "m": index_set.m, "r": grid.r,
        "m_prime": report.m_prime, "gamma": gam,
        "certified_bound": snap_term + match_term + round_term,
        "noise_term": noise_term, "snap_term": snap_term,
        "jackson_term": match_term - noise_term, "round_term": round_term,
        "bump_lower": bump_lb, "solver_gap": report.solver_gap,
        "solver_converged": report.solver_converged, "seconds": elapsed,
    }


def fit_slope(x, y) -> tuple[float, float, bool]:
    """Least-squares slope of ``log y`` on ``log x`` with its standard error.

    The third value is False when the fit has no residual degrees of freedom.
    """
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    dof = len(lx) - 2
    if dof <= 0:
        return float(coef[0]), float("nan"), False
    resid = ly - A @ coef
    s2 = float(resid @ resid) / dof
    se = math.sqrt(s2 / float(np.sum((lx - lx.mean()) ** 2)))
    return float(coef[0]), se, True


SERIES = ("certified_bound", "noise_term", "bump_lower")


@dataclass
class RatesResult:
    spec: dict
    points: list
    slopes: dict
    skipped: list = field(default_factory=list)
    runs: list = field(default_factory=list, repr=False)


def run_rates(spec: ExperimentSpec) -> RatesResult:
    """Run every ``(n, repetition)`` task and fit the slope of each series."""
    tasks = [(i, rep) for i in range(len(spec.ns)) for rep in range(spec.repetitions)]
    runs, skipped = [], []

    def collect(i, fut_or_result):
        try:
            runs.append(fut_or_result() if callable(fut_or_result) else fut_or_result)
        except Exception as exc:  # infeasible point: record and continue
            log.warning("skipping n=%d: %s", spec.ns[i], exc)
            skipped.append({"n": spec.ns[i], "reason": str(exc)})

    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            futures = [(i, pool.submit(run_task, spec, i, rep)) for i, rep in tasks]
            for i, fut in futures:
                collect(i, fut.result)
    else:
        for i, rep in tasks:
            collect(i, lambda i=i, rep=rep: run_task(spec, i, rep))

    points = []
    for n in spec.ns:
        rows = [r for r in runs if r["n"] == n]
        if not rows:
            continue
        point = {"n": n, "m": rows[0]["m"], "runs": len(rows)}
        for key in SERIES + ("gamma", "snap_term", "jackson_term", "round_term", "seconds"):
            point[key] = float(np.mean([r[key] for r in rows]))
        points.append(point)

    slopes = {}
    if len(points) >= 2:
        for key in SERIES:
            xs = [p["n"] for p in points if p[key] > 0]
            ys = [p[key] for p in points if p[key] > 0]
            if len(xs) >= 2:
                slope, se, reliable = fit_slope(xs, ys)
                slopes[key] = {"slope": slope, "se": se, "se_reliable": reliable and spec.repetitions > 1}
    skipped_ns = sorted({s["n"] for s in skipped})
    skipped = [{"n": n, "reason": next(s["reason"] for s in skipped if s["n"] == n)} for n in skipped_ns]
    result = RatesResult(asdict(spec), points, slopes, skipped, runs)
    if spec.out_dir:
        write_rates(result, Path(spec.out_dir))
    return result


def manifest(spec: dict) -> dict:
    blob = json.dumps({k: v for k, v in spec.items() if k not in ("out_dir", "workers")}, sort_keys=True)
    return {"config_hash": hashlib.sha256(blob.encode()).hexdigest()[:16], "seed": spec["seed"]}


def write_rates(result: RatesResult, out_dir: Path) -> None:
    """``rates.json`` (everything) and ``rates.csv`` (one row per sweep point)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    man = manifest(result.spec)
    with open(out_dir / "rates.json", "w") as fh:
        json.dump({"manifest": man, "spec": result.spec, "points": result.points, "slopes": result.slopes,
                   "skipped": result.skipped}, fh, indent=2)
    fields = list(result.points[0].keys()) if result.points else ["n"]
    with open(out_dir / "rates.csv", "w", newline="") as fh:
        fh.write("# manifest: " + json.dumps(man, sort_keys=True) + "\n")
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(result.points)
