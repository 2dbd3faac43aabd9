"""Synthetic stream generators, a fast path for the two scripted stress
tasks, and CSV dataset ingestion with normalization and seeded splits.

The two stress tasks have closed-form structure the generic learner loop
would waste on dense vectors:

- sign task: 1-D inputs {+1, -1} with y = sgn(x); every clean one-sided
  update is the same scalar map, so whole batches of adversary trials run as
  a vectorized scalar recursion,
- basis task: signed standard basis vectors in high dimension with a
  coordinate-suppression poison point; clean updates touch one coordinate
  each, so a sparse runner handles millions of examples in seconds.

Both fast paths are checked elsewhere against the dense learner step by step.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from ._validation import as_rng, check_positive
from .errors import IngestionError
from .learner import sigmoid
from .stream import Stream


# ---------------------------------------------------------------------------
# sign task


def gen_sign_task(n: int, seed=None) -> Stream:
    """n examples with x uniform over {[+1], [-1]} and y = sign of x."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_rng(seed)
    signs = rng.integers(0, 2, size=n) * 2 - 1
    X = signs.astype(np.float64)[:, None]
    return Stream(X, signs.astype(np.int64))


def sign_task_tight_mask(n_clean: int, budget: int) -> np.ndarray:
    """Poison mask for the alternating attacker: one insertion directly after
    each clean point from the start of the stream until the budget runs out."""
    if not 0 <= budget <= n_clean:
        raise ValueError("budget must lie in [0, n_clean]")
    mask = np.zeros(n_clean + budget, dtype=bool)
    mask[1:2 * budget:2] = True
    return mask


def sign_task_random_masks(trials: int, n_clean: int, budget: int, seed=None) -> np.ndarray:
    """(trials, n_clean+budget) poison masks with positions drawn uniformly
    without replacement per trial."""
    rng = as_rng(seed)
    total = n_clean + budget
    masks = np.zeros((trials, total), dtype=bool)
    for i in range(trials):
        masks[i, rng.choice(total, size=budget, replace=False)] = True
    return masks


def sign_task_error_counts(masks: np.ndarray, theta0: float = 0.0,
                           learning_rate: float = 1.0) -> np.ndarray:
    """Clean-position errors for each poison mask, by scalar recursion.

    Clean examples are one-sided +1 (update theta += eta*sigmoid(-theta)),
    poison examples are (-1, +1) (update theta -= eta*sigmoid(theta)); a clean
    arrival is an error when theta <= 0 at that step. Rows are independent
    trials advanced in lockstep.
    """
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim == 1:
        masks = masks[None, :]
    trials, total = masks.shape
    theta = np.full(trials, float(theta0))
    errors = np.zeros(trials, dtype=np.int64)
    eta = check_positive(learning_rate, "learning_rate")
    for t in range(total):
        poison = masks[:, t]
        clean = ~poison
        errors += clean & (theta <= 0.0)
        # one fused update: clean moves by +sigmoid(-theta), poison by -sigmoid(theta)
        theta = np.where(clean, theta + eta * sigmoid(-theta), theta - eta * sigmoid(theta))
    return errors


def sign_task_stream_from_mask(mask: np.ndarray) -> Stream:
    """Dense stream realizing a poison mask: clean (+1,+1), poison (-1,+1)."""
    mask = np.asarray(mask, dtype=bool)
    X = np.where(mask, -1.0, 1.0)[:, None]
    y = np.ones(mask.shape[0], dtype=np.int64)
    return Stream(X, y, poison=mask.copy())


# ---------------------------------------------------------------------------
# basis task


@dataclass
class BasisTaskSpec:
    """High-dimensional task of signed basis vectors.

    dim: ambient dimension; support: coordinates per poison point;
    cycle: clean examples between consecutive poison insertions.
    """

    dim: int
    support: int
    cycle: int = 10

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not 1 <= self.support <= self.dim:
            raise ValueError("support must lie in [1, dim]")
        if self.cycle < 1:
            raise ValueError("cycle must be >= 1")


def gen_basis_indices(dim: int, n: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Sparse clean draws: uniform coordinate indices and signs.

    The example is sign * e_index with label sign; its one-sided form is
    always e_index, so the sign never enters the update.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_rng(seed)
    indices = rng.integers(0, dim, size=n)
    signs = (rng.integers(0, 2, size=n) * 2 - 1).astype(np.int64)
    return indices, signs


def basis_stream_dense(dim: int, indices: np.ndarray, signs: np.ndarray) -> Stream:
    """Materialize sparse basis draws as a dense stream (small dims only)."""
    n = indices.shape[0]
    X = np.zeros((n, dim))
    X[np.arange(n), indices] = signs
    return Stream(X, signs.astype(np.int64))


def coordinate_suppression_point(theta: np.ndarray, support: int) -> tuple[np.ndarray, int]:
    """Poison point pushing the first `support` nonnegative coordinates down.

    x has -1/sqrt(support) on the first `support` coordinates with theta >= 0
    (ascending index), zero elsewhere, label +1; unit norm when nonzero. With
    fewer than `support` nonnegative coordinates the zero vector is returned,
    which leaves the model unchanged.
    """
    if support < 1:
        raise ValueError("support must be >= 1")
    theta = np.asarray(theta, dtype=np.float64)
    x = np.zeros_like(theta)
    idx = np.flatnonzero(theta >= 0.0)[:support]
    if idx.shape[0] == support:
        x[idx] = -1.0 / math.sqrt(support)
    return x, 1


@dataclass
class SuppressionTrialResult:
    clean_errors: int
    clean_count: int
    models: list | None = None

    @property
    def error_rate(self) -> float:
        return self.clean_errors / self.clean_count


def run_suppression_trial(spec: BasisTaskSpec, n_clean: int, seed=None,
                          learning_rate: float = 1.0,
                          record_models: bool = False) -> SuppressionTrialResult:
    """Sparse simulation of the basis task under the suppression attacker.

    Repeats: `cycle` clean one-sided updates (each touches one coordinate;
    error counted when that coordinate is <= 0 at arrival), then one poison
    update on the suppression point. Cycles whose clean indices are all
    distinct are updated as one vector operation; cycles with repeats fall
    back to the sequential order so arrival-time values stay exact.
    """
    eta = check_positive(learning_rate, "learning_rate")
    indices, _signs = gen_basis_indices(spec.dim, n_clean, seed)
    theta = np.zeros(spec.dim)
    errors = 0
    models = [] if record_models else None
    root = math.sqrt(spec.support)
    pos = 0
    while pos < n_clean:
        idx = indices[pos:pos + spec.cycle]
        pos += idx.shape[0]
        if record_models or np.unique(idx).shape[0] < idx.shape[0]:
            for i in idx:
                errors += theta[i] <= 0.0
                theta[i] += eta * sigmoid(-theta[i])
                if record_models:
                    models.append(theta.copy())
        else:
            vals = theta[idx]
            errors += int(np.count_nonzero(vals <= 0.0))
            theta[idx] = vals + eta * sigmoid(-vals)
        if pos < n_clean or idx.shape[0] == spec.cycle:
            j = np.flatnonzero(theta >= 0.0)[:spec.support]
            if j.shape[0] == spec.support:
                margin = -theta[j].sum() / root
                theta[j] -= eta * sigmoid(-margin) / root
            if record_models:
                models.append(theta.copy())
    return SuppressionTrialResult(int(errors), n_clean, models)


# ---------------------------------------------------------------------------
# normalization, splits, bundles


@dataclass
class NormalizationRecord:
    """Per-coordinate affine map x -> (x - mean) / scale.

    scale is the max absolute deviation from the mean on the fitting data
    (coordinates with zero deviation get scale 1, mapping them to 0), so
    fitted points land in [-1, 1]^d.
    """

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def to_config(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}


def fit_normalization(X: np.ndarray) -> NormalizationRecord:
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    scale = np.abs(X - mean).max(axis=0)
    scale[scale == 0.0] = 1.0
    return NormalizationRecord(mean, scale)


@dataclass
class DatasetBundle:
    """Init/train/test streams with the normalization that produced them."""

    name: str
    init: Stream
    train: Stream
    test: Stream
    normalization: NormalizationRecord
    seed: int | None = None
    stats_from: str = "all"

    @property
    def dim(self) -> int:
        return self.train.dim

    def sizes(self) -> dict:
        return {"init": len(self.init), "train": len(self.train), "test": len(self.test)}

    def to_manifest(self) -> dict:
        return {
            "name": self.name,
            "sizes": self.sizes(),
            "seed": self.seed,
            "stats_from": self.stats_from,
            "normalization": self.normalization.to_config(),
        }


def _split_counts(split_sizes, n: int) -> tuple[int, int, int]:
    if len(split_sizes) != 3:
        raise ValueError("split_sizes must have three entries (init, train, test)")
    if all(isinstance(s, (int, np.integer)) for s in split_sizes):
        counts = tuple(int(s) for s in split_sizes)
        if any(c < 0 for c in counts):
            raise ValueError("split sizes must be non-negative")
        if sum(counts) > n:
            raise IngestionError(f"split sizes {counts} exceed the {n} available rows")
        return counts
    fracs = tuple(float(s) for s in split_sizes)
    if any(f < 0 for f in fracs) or sum(fracs) > 1.0 + 1e-9:
        raise ValueError("split fractions must be non-negative and sum to at most 1")
    n_init = int(fracs[0] * n)
    n_test = int(fracs[2] * n)
    n_train = min(int(round(fracs[1] * n)), n - n_init - n_test)
    return n_init, n_train, n_test


def make_bundle(X: np.ndarray, y: np.ndarray, split_sizes, seed=None, name: str = "dataset",
                stats_from: str = "all") -> DatasetBundle:
    """Shuffle, split into init/train/test, and normalize.

    stats_from selects the rows the normalization is fitted on: "all" (every
    loaded row; all splits then lie in [-1,1]^d) or "train" (train rows only;
    other splits may exceed the box slightly).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    counts = _split_counts(split_sizes, n)
    if stats_from not in ("all", "train"):
        raise ValueError('stats_from must be "all" or "train"')
    rng = as_rng(seed)
    order = rng.permutation(n)
    X, y = X[order], y[order]
    b0, b1 = counts[0], counts[0] + counts[1]
    b2 = b1 + counts[2]
    record = fit_normalization(X if stats_from == "all" else X[b0:b1])
    parts = [Stream(record.apply(X[a:b]), y[a:b]) if b > a else Stream.empty(X.shape[1])
             for a, b in ((0, b0), (b0, b1), (b1, b2))]
    seed_val = seed if isinstance(seed, (int, type(None))) else None
    return DatasetBundle(name, parts[0], parts[1], parts[2], record,
                         seed=seed_val, stats_from=stats_from)


def gen_gaussian_task(dim: int, mean_sep: float, noise: float, n: int, seed=None,
                      split_sizes=(0.2, 0.6, 0.2), name: str = "gaussian") -> DatasetBundle:
    """Two isotropic Gaussians at +-(mean_sep/2) along a random unit direction,
    labeled by component, then normalized and split like a loaded dataset."""
    if mean_sep < 0:
        raise ValueError("mean_sep must be non-negative")
    check_positive(noise, "noise")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_rng(seed)
    v = rng.normal(size=dim)
    v /= np.linalg.norm(v)
    labels = (rng.integers(0, 2, size=n) * 2 - 1).astype(np.int64)
    X = labels[:, None] * (mean_sep / 2.0) * v + noise * rng.normal(size=(n, dim))
    bundle = make_bundle(X, labels, split_sizes, seed=rng, name=name)
    bundle.seed = seed if isinstance(seed, (int, np.integer)) else None
    return bundle


def _parse_cell(text: str, row: int, col) -> float:
    try:
        return float(text)
    except ValueError:
        raise IngestionError(f"row {row}, column {col}: could not parse {text!r} as a number") from None


def load_csv_dataset(path, label_column, split_sizes, seed=None, has_header="auto",
                     stats_from: str = "all", name: str | None = None) -> DatasetBundle:
    """Load a numeric CSV, remap labels to {-1,+1}, normalize, and split.

    label_column is a header name or a 0-based index. has_header may be True,
    False, or "auto" (header assumed when the first row has any non-numeric
    cell). Labels must come from {-1,+1} or {0,1}; {0,1} is remapped with
    0 -> -1. Malformed cells, unknown label columns, label alphabets beyond
    those two, and oversized splits raise ingestion errors with row/column
    context.
    """
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row and any(cell.strip() for cell in row):
                rows.append([cell.strip() for cell in row])
    if not rows:
        raise IngestionError(f"{path}: no data rows")

    def _numeric_row(row):
        try:
            [float(c) for c in row]
            return True
        except ValueError:
            return False

    header = None
    if has_header == "auto":
        has_header = not _numeric_row(rows[0])
    if has_header:
        header = rows[0]
        rows = rows[1:]
        if not rows:
            raise IngestionError(f"{path}: header only, no data rows")

    if isinstance(label_column, str):
        if header is None or label_column not in header:
            raise IngestionError(f"label column {label_column!r} not found"
                                 + ("" if header is None else f" in header {header}"))
        label_idx = header.index(label_column)
    else:
        label_idx = int(label_column)
        width = len(rows[0])
        if not -width <= label_idx < width:
            raise IngestionError(f"label column index {label_idx} out of range for {width} columns")
        label_idx %= width

    width = len(rows[0])
    X = np.empty((len(rows), width - 1))
    y_raw = np.empty(len(rows))
    for r, row in enumerate(rows):
        if len(row) != width:
            raise IngestionError(f"row {r}: expected {width} cells, found {len(row)}")
        k = 0
        for c, cell in enumerate(row):
            colname = header[c] if header else c
            if c == label_idx:
                y_raw[r] = _parse_cell(cell, r, colname)
            else:
                X[r, k] = _parse_cell(cell, r, colname)
                k += 1

    alphabet = set(np.unique(y_raw).tolist())
    if alphabet <= {-1.0, 1.0}:
        y = y_raw.astype(np.int64)
    elif alphabet <= {0.0, 1.0}:
        y = np.where(y_raw == 0.0, -1, 1).astype(np.int64)
    else:
        raise IngestionError(f"label alphabet {sorted(alphabet)} is not {{-1,+1}} or {{0,1}}")

    bundle_name = name if name is not None else os.path.splitext(os.path.basename(str(path)))[0]
    return make_bundle(X, y, split_sizes, seed=seed, name=bundle_name, stats_from=stats_from)
