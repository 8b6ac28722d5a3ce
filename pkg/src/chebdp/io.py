"""CSV ingestion and output.

Dialect: comma separated, ``.`` decimal, LF newlines, UTF-8.  An optional
single header row is detected by a non-numeric first row.  Lines starting
with ``#`` before the data are comments; outputs use one to carry the run
manifest.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestError
from .grid import Grid, snap_indices
from .synth import SyntheticDataset

log = logging.getLogger(__name__)


@dataclass
class Dataset:
    points: np.ndarray
    weights: np.ndarray | None = None
    header: list | None = None
    normalization: dict | None = None
    source: str | None = None

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def as_distribution(self):
        """Points, or a ``(points, weights)`` pair when the file carried counts."""
        return self.points if self.weights is None else (self.points, self.weights)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _read_rows(path) -> tuple[list | None, list[tuple[int, list[str]]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [(i + 1, line) for i, line in enumerate(fh)]
    body = [(no, line) for no, line in lines if line.strip() and not line.lstrip().startswith("#")]
    if not body:
        raise IngestError(f"{path}: empty file")
    rows = [(no, [c.strip() for c in next(csv.reader([line]))]) for no, line in body]
    header = None
    if not all(_is_number(c) for c in rows[0][1]):
        header = rows[0][1]
        rows = rows[1:]
    if not rows:
        raise IngestError(f"{path}: header but no data rows")
    return header, rows


def min_max_normalize(X: np.ndarray) -> tuple[np.ndarray, dict]:
    """Affine map of each column onto [-1, 1]; constant columns map to 0."""
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    Y = np.where(hi > lo, 2.0 * (X - lo) / span - 1.0, 0.0)
    return np.clip(Y, -1.0, 1.0), {"min": lo.tolist(), "max": hi.tolist()}


def ingest(path, d: int | None = None, normalize: bool = False) -> Dataset:
    """Read a dataset CSV.

    ``d`` numeric columns per row, optionally followed by a column whose
    header is ``count`` giving each row's multiplicity.  Rows outside [-1, 1]^d are rejected by row number unless
    ``normalize`` is set.
    """
    header, rows = _read_rows(path)
    width = len(rows[0][1])
    has_count = header is not None and header[-1].lower() == "count"
    n_coords = width - 1 if has_count else width
    if d is not None and n_coords != d:
        raise IngestError(f"{path}: expected {d} coordinate columns, found {n_coords}")
    values = np.empty((len(rows), width))
    for i, (lineno, cells) in enumerate(rows):
        if len(cells) != width:
            raise IngestError(f"{path}: line {lineno} has {len(cells)} columns, expected {width}")
        try:
            values[i] = [float(c) for c in cells]
        except ValueError:
            raise IngestError(f"{path}: line {lineno} is not numeric: {','.join(cells)}") from None
    if not np.all(np.isfinite(values)):
        bad = [rows[i][0] for i in np.flatnonzero(~np.isfinite(values).all(axis=1))]
        raise IngestError(f"{path}: non-finite values on lines {bad[:10]}")
    X = values[:, :n_coords]
    weights = None
    if has_count:
        weights = values[:, -1]
        if np.any(weights < 0) or weights.sum() <= 0:
            raise IngestError(f"{path}: counts must be nonnegative with a positive total")

    norm = None
    if normalize:
        X, norm = min_max_normalize(X)
        log.info("normalized %s per axis: %s", path, norm)
    else:
        bad = np.flatnonzero(np.any(np.abs(X) > 1.0, axis=1))
        if bad.size:
            lines = [rows[i][0] for i in bad[:10]]
            more = f" (and {bad.size - 10} more)" if bad.size > 10 else ""
            raise IngestError(
                f"{path}: {bad.size} rows outside [-1, 1]^{n_coords} on lines {lines}{more}; "
                "pass --normalize to rescale"
            )
    return Dataset(X, weights, header, norm, str(path))


def write_synthetic(path, synthetic: SyntheticDataset, manifest: dict | None = None, expand: bool = False) -> None:
    """Write the synthetic multiset, one row per occupied cell with its count.

    With ``expand`` every copy gets its own row and there is no count column.
    Coordinates are written with ``repr`` so they read back exactly.
    """
    d = synthetic.grid.d
    header = [f"x{i + 1}" for i in range(d)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if manifest is not None:
            fh.write("# manifest: " + json.dumps(manifest, sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        if expand:
            writer.writerow(header)
            writer.writerows([repr(float(v)) for v in row] for row in synthetic.points())
        else:
            writer.writerow(header + ["count"])
            pts, mult = synthetic.support()
            writer.writerows([repr(float(v)) for v in p] + [int(c)] for p, c in zip(pts, mult))


def read_synthetic(path, grid: Grid) -> SyntheticDataset:
    """Rebuild a :class:`SyntheticDataset` on ``grid`` from a synthetic CSV."""
    data = ingest(path, grid.d)
    idx = snap_indices(data.points, grid)
    if not np.allclose(grid.point(idx), data.points, rtol=0, atol=1e-12):
        raise IngestError(f"{path}: points do not lie on the r={grid.r} grid")
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
    w = np.ones(data.n) if data.weights is None else data.weights
    counts = np.bincount(flat, weights=w, minlength=grid.size)
    return SyntheticDataset(grid, np.rint(counts).astype(np.int64))


def write_points(path, X: np.ndarray, manifest: dict | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if manifest is not None:
            fh.write("# manifest: " + json.dumps(manifest, sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(X.shape[1])])
        writer.writerows([repr(float(v)) for v in row] for row in X)


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
