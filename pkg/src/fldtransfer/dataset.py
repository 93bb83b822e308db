"""Session data I/O, consecutive-window splits, the transfer evaluation
protocol and the paired signed-rank test.

File formats
------------
Session CSV
    Header ``label,f1,...,fd``; one row per window in temporal order.
Source-vector CSV
    One unit vector per row, ``d`` columns, no header.
Privacy aggregate JSON
    ``{"d", "j_count", "mu_hat", "psi_scale", "resultant_length"}``.

Floats are written with 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .errors import (
    DimensionMismatch,
    FldTransferError,
    InvariantViolation,
    ParseError,
    TooFewPairs,
    TooFewWindows,
)
from .fld import fit_assumption_transform, fit_fld
from .stats import RngStream, TaskDistribution, VmfModel, normal_cdf, sample_task, sample_vmf
from .transfer import AlphaGrid, SourceSummary, grid_accuracies, optimal_alpha, summarize_sources

CLASSIFIERS = ("target", "source", "optimal", "oracle")
EXACT_MAX_N = 20


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True, eq=False)
class SessionDataset:
    session_id: str
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise InvariantViolation(f"{self.session_id}: features must be a matrix")
        if y.shape != (X.shape[0],):
            raise InvariantViolation(f"{self.session_id}: {y.shape[0]} labels for {X.shape[0]} rows")
        if not np.all((y == 0) | (y == 1)):
            raise InvariantViolation(f"{self.session_id}: labels must be 0 or 1")
        if not np.all(np.isfinite(X)):
            raise InvariantViolation(f"{self.session_id}: non-finite feature values")
        n1 = int(np.sum(y == 1))
        if X.shape[0] < 4 or n1 < 2 or X.shape[0] - n1 < 2:
            raise InvariantViolation(f"{self.session_id}: need n >= 4 with >= 2 rows per class")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(np.int64))

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SessionDataset):
            return NotImplemented
        return (
            self.session_id == other.session_id
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True)
class SplitSpec:
    proportion: float
    split_count: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.proportion < 1.0:
            raise ValueError(f"proportion must lie in (0, 1), got {self.proportion}")
        if self.split_count < 1:
            raise ValueError("split_count must be >= 1")


@dataclass(frozen=True)
class EvalRecord:
    session_id: str
    p: float
    split_index: int
    classifier: str
    balanced_accuracy: float
    alpha: float


@dataclass(frozen=True)
class SkippedSplit:
    session_id: str
    p: float
    split_index: int
    reason: str


# -- I/O ---------------------------------------------------------------------

def read_session_csv(path, session_id: str | None = None) -> SessionDataset:
    path = Path(path)
    sid = session_id or path.stem
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        header = [h.strip() for h in header]
        d = len(header) - 1
        if d < 1 or header[0] != "label" or header[1:] != [f"f{i}" for i in range(1, d + 1)]:
            raise ParseError(f"{path}:1: header must be label,f1,...,fd")
        labels, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d + 1:
                raise ParseError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
            lab = row[0].strip()
            if lab not in ("0", "1"):
                raise ParseError(f"{path}:{lineno}: label must be 0 or 1, got {lab!r}")
            try:
                rows.append([float(c) for c in row[1:]])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric feature value") from None
            labels.append(int(lab))
    X = np.array(rows, dtype=float).reshape(len(rows), d)
    try:
        return SessionDataset(sid, X, np.array(labels, dtype=np.int64))
    except InvariantViolation as exc:
        raise InvariantViolation(f"{path}: {exc}") from None


def load_sessions(path) -> list[SessionDataset]:
    """Load a directory of session CSVs (sorted by file name, id = stem) or a
    JSON manifest ``{"sessions": [{"id": ..., "path": ...}, ...]}`` whose
    paths are relative to the manifest."""
    path = Path(path)
    if path.is_dir():
        return [read_session_csv(p) for p in sorted(path.glob("*.csv"))]
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(manifest, dict) or not isinstance(manifest.get("sessions"), list):
        raise ParseError(f"{path}: manifest must be an object with a 'sessions' list")
    out = []
    for entry in manifest["sessions"]:
        if not isinstance(entry, dict) or "path" not in entry:
            raise ParseError(f"{path}: each session entry needs a 'path'")
        p = path.parent / entry["path"]
        out.append(read_session_csv(p, entry.get("id")))
    return out


def write_session_csv(ds: SessionDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"f{i}" for i in range(1, ds.d + 1)])
        for lab, row in zip(ds.labels, ds.features):
            w.writerow([int(lab)] + [fmt(v) for v in row])


def write_sessions(sessions, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for ds in sessions:
        write_session_csv(ds, directory / f"{ds.session_id}.csv")


def read_source_vectors(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise ParseError(f"{path}: no source vectors")
    if len({len(r) for r in rows}) != 1:
        raise ParseError(f"{path}: rows have differing lengths")
    return np.array(rows, dtype=float)


def write_source_vectors(vectors, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for v in np.atleast_2d(vectors):
            w.writerow([fmt(x) for x in v])


def aggregate_to_json(summary: SourceSummary) -> str:
    mu = ", ".join(fmt(x) for x in summary.mu_hat)
    return (
        "{\n"
        f'  "d": {summary.d},\n'
        f'  "j_count": {summary.j_count},\n'
        f'  "mu_hat": [{mu}],\n'
        f'  "psi_scale": {fmt(summary.psi_scale)},\n'
        f'  "resultant_length": {fmt(summary.resultant_length)}\n'
        "}\n"
    )


def write_aggregate(summary: SourceSummary, path) -> None:
    Path(path).write_text(aggregate_to_json(summary))


def read_aggregate(path) -> SourceSummary:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from None
    keys = {"d", "j_count", "mu_hat", "psi_scale", "resultant_length"}
    if not isinstance(obj, dict) or set(obj) != keys:
        raise ParseError(f"{path}: aggregate must have exactly the keys {sorted(keys)}")
    if len(obj["mu_hat"]) != obj["d"]:
        raise ParseError(f"{path}: mu_hat has {len(obj['mu_hat'])} entries, d = {obj['d']}")
    try:
        return SourceSummary(
            mu_hat=np.array(obj["mu_hat"], dtype=float),
            psi_scale=float(obj["psi_scale"]),
            j_count=int(obj["j_count"]),
            resultant_length=float(obj["resultant_length"]),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from None


# -- splits and evaluation -----------------------------------------------------

def _session_key(session_id: str) -> int:
    return zlib.crc32(session_id.encode())


def _p_key(p: float) -> int:
    return int(round(p * 1e9))


def consecutive_split(ds: SessionDataset, spec: SplitSpec, split_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Training rows are, per class, a uniformly placed contiguous run of
    ``floor(p * n_c)`` of that class's windows; everything else is test.
    Returns sorted ``(train_idx, test_idx)``."""
    gen = RngStream(spec.seed, (_session_key(ds.session_id), _p_key(spec.proportion), split_index, 0)).generator()
    train = []
    for c in (0, 1):
        idx = np.flatnonzero(ds.labels == c)
        length = math.floor(spec.proportion * idx.size + 1e-9)
        if length < 2:
            raise TooFewWindows(
                f"{ds.session_id}: p={spec.proportion} gives {length} training windows for class {c}"
            )
        start = int(gen.integers(0, idx.size - length + 1))
        train.append(idx[start : start + length])
    train_idx = np.sort(np.concatenate(train))
    mask = np.ones(ds.labels.size, dtype=bool)
    mask[train_idx] = False
    return train_idx, np.flatnonzero(mask)


def session_projection(ds: SessionDataset) -> np.ndarray:
    """Unit projection vector fitted on a whole (transformed) session."""
    t = fit_assumption_transform(ds.features, ds.labels)
    return fit_fld(t.apply(ds.features), ds.labels).omega


def evaluate_split(target: SessionDataset, sources: SourceSummary, spec: SplitSpec, split_index: int,
                   grid: AlphaGrid, b_samples: int) -> list[EvalRecord]:
    train_idx, test_idx = consecutive_split(target, spec, split_index)
    X, y = target.features, target.labels
    t = fit_assumption_transform(X[train_idx], y[train_idx])
    fit = fit_fld(t.apply(X[train_idx]), y[train_idx])
    rs = RngStream(spec.seed, (_session_key(target.session_id), _p_key(spec.proportion), split_index, 1))
    curve = optimal_alpha(fit, sources, grid, b_samples, rs)
    yt = y[test_idx]
    if not (np.any(yt == 0) and np.any(yt == 1)):
        raise TooFewWindows(f"{target.session_id}: test block lacks a class at p={spec.proportion}")
    accs = grid_accuracies(fit.omega, sources.mu_hat, grid, t.apply(X[test_idx]), yt)
    index = {
        "target": grid.index(1.0),
        "source": grid.index(0.0),
        "optimal": curve.star_index,
        "oracle": int(np.argmax(accs)),
    }
    return [
        EvalRecord(target.session_id, spec.proportion, split_index, c, float(accs[i]), grid.values[i])
        for c, i in index.items()
    ]


def evaluate_transfer(target: SessionDataset, source_vectors, spec: SplitSpec, grid: AlphaGrid | None = None,
                      b_samples: int = 100) -> tuple[list[EvalRecord], list[SkippedSplit]]:
    """Run every split of ``spec`` on ``target``.

    ``source_vectors`` is either an array of unit vectors or an already
    aggregated :class:`SourceSummary` (the privacy-preserving mode); both give
    identical records for identical summaries. Failing splits are returned
    in the second list instead of raising.
    """
    grid = grid or AlphaGrid()
    if 0.0 not in grid.values or 1.0 not in grid.values:
        raise ValueError("evaluation grids must contain 0 and 1")
    sources = source_vectors if isinstance(source_vectors, SourceSummary) else summarize_sources(source_vectors)
    if sources.d != target.d:
        raise DimensionMismatch(f"{target.session_id} has d={target.d}, sources have d={sources.d}")
    records, skipped = [], []
    for k in range(spec.split_count):
        try:
            records.extend(evaluate_split(target, sources, spec, k, grid, b_samples))
        except FldTransferError as exc:
            skipped.append(SkippedSplit(target.session_id, spec.proportion, k, str(exc)))
    return records, skipped


# -- signed-rank test ---------------------------------------------------------

def _signed_ranks(differences):
    d = np.asarray(differences, dtype=float)
    d = d[d != 0]
    if d.size < 5:
        raise TooFewPairs(f"need at least 5 nonzero differences, got {d.size}")
    ranks = rankdata(np.abs(d))  # mid-ranks for ties
    return d, ranks


def signed_rank_test(differences) -> float:
    """One-sided Wilcoxon signed-rank p-value for the alternative that the
    differences are centred above zero.

    Zeros are dropped and tied magnitudes get mid-ranks. The exact null
    distribution is used for up to 20 nonzero differences, otherwise a
    normal approximation with tie and continuity corrections.
    """
    d, ranks = _signed_ranks(differences)
    n = d.size
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = kernels.signed_rank_null_counts(doubled)
        obs = int(round(2 * w_plus))
        return float(counts[obs:].sum() / 2.0**n)
    mean = n * (n + 1) / 4.0
    _, t = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(t**3 - t)) / 48.0
    z = (w_plus - mean - 0.5) / math.sqrt(var)
    return 1.0 - normal_cdf(z)


def signed_rank_brute_force(differences) -> float:
    """Exact p-value by enumerating all ``2^n`` sign patterns (small n only)."""
    d, ranks = _signed_ranks(differences)
    obs = ranks[d > 0].sum()
    hits = 0
    for signs in itertools.product((0, 1), repeat=d.size):
        if np.dot(signs, ranks) >= obs - 1e-9:
            hits += 1
    return hits / 2.0**d.size


# -- summaries ------------------------------------------------------------------

def paired_differences(records, a: str, b: str) -> list[float]:
    """``acc(a) - acc(b)`` per split, in split order."""
    by = {}
    for r in records:
        by.setdefault(r.split_index, {})[r.classifier] = r.balanced_accuracy
    return [v[a] - v[b] for k, v in sorted(by.items()) if a in v and b in v]


def safe_p_value(diffs) -> float:
    try:
        return signed_rank_test(diffs)
    except TooFewPairs:
        return float("nan")


def session_summary(records) -> dict:
    out = {}
    for c in CLASSIFIERS:
        accs = [r.balanced_accuracy for r in records if r.classifier == c]
        alphas = [r.alpha for r in records if r.classifier == c]
        out[c] = (
            math.fsum(accs) / len(accs) if accs else float("nan"),
            math.fsum(alphas) / len(alphas) if alphas else float("nan"),
        )
    return out



def synthetic_sessions(count: int, d: int = 10, windows: int = 200, kappa: float = 10.0, seed: int = 0,
                       prefix: str = "s"):
    """Sessions drawn from the vMF task model (``Sigma = I``, balanced
    classes). Returns ``(sessions, true_vectors)``."""
    mu = np.zeros(d)
    mu[0] = 1.0
    rs = RngStream(seed, (0x5E55,))
    vecs = sample_vmf(VmfModel(mu, kappa), count, rs.child(0))
    out = []
    for i, v in enumerate(vecs):
        gen = rs.child(1, i).generator()
        while True:
            X, y = sample_task(TaskDistribution(v, np.eye(d), 0.5), windows, gen)
            if min(y.sum(), windows - y.sum()) >= 4:
                break
        out.append(SessionDataset(f"{prefix}{i:03d}", X, y))
    return out, vecs
