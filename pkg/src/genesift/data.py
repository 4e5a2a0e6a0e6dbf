"""Dataset container, CSV ingestion, scaling, splitting and column masking."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, MaskError, ParseError, ShapeError, SplitError

MISSING_TOKENS = frozenset({"", "nan", "na", "?", "null"})


@dataclass(frozen=True)
class Dataset:
    """Samples in rows, features (genes) in columns, integer class labels.

    ``class_names[i]`` is the original label string that was encoded as ``i``.
    """

    name: str
    feature_names: tuple
    x: np.ndarray
    y: np.ndarray
    n_classes: int
    class_names: tuple = field(default=())

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 2:
            raise ShapeError(f"x must be 2-D, got shape {x.shape}")
        n, d = x.shape
        if y.shape != (n,):
            raise ShapeError(f"y has shape {y.shape}, expected ({n},)")
        if len(self.feature_names) != d:
            raise ShapeError(f"{len(self.feature_names)} feature names for {d} columns")
        if len(set(self.feature_names)) != d:
            raise DataError("duplicate feature names")
        if np.isnan(x).any():
            raise DataError("dataset contains NaN")
        if self.n_classes < 1:
            raise DataError("n_classes must be positive")
        if n and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        if n and np.unique(y).size != self.n_classes:
            raise DataError("every class must appear at least once")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if not self.class_names:
            object.__setattr__(self, "class_names", tuple(str(i) for i in range(self.n_classes)))

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)

    def subset(self, rows) -> "Dataset":
        """Row subset sharing feature names and class encoding.

        Classes absent from ``rows`` are allowed here (cross-validation folds),
        so the usual "every class present" check is bypassed.
        """
        rows = np.asarray(rows, dtype=np.int64)
        sub = object.__new__(Dataset)
        x = self.x[rows]
        y = self.y[rows]
        x.setflags(write=False)
        y.setflags(write=False)
        for k, v in (("name", self.name), ("feature_names", self.feature_names),
                     ("x", x), ("y", y), ("n_classes", self.n_classes),
                     ("class_names", self.class_names)):
            object.__setattr__(sub, k, v)
        return sub


@dataclass(frozen=True)
class SplitPair:
    train: Dataset
    test: Dataset
    train_index: np.ndarray
    test_index: np.ndarray


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _parse_cell(token, nan_replacement, row, col):
    t = token.strip()
    if t.lower() in MISSING_TOKENS:
        if nan_replacement is None:
            raise DataError(f"missing value at row {row}, column {col} and NaN policy is 'reject'")
        return float(nan_replacement)
    try:
        v = float(t)
    except ValueError:
        raise ParseError(f"non-numeric value {t!r} in column {col}", line=row) from None
    if math.isnan(v):
        if nan_replacement is None:
            raise DataError(f"missing value at row {row}, column {col} and NaN policy is 'reject'")
        return float(nan_replacement)
    return v


def load_csv(path, label_column="last", nan_replacement=100.0, name=None) -> Dataset:
    """Read a comma separated sample x feature file.

    ``label_column`` is ``"last"`` or an integer column index.  Missing cells
    (``NaN``, empty, ``?``) become ``nan_replacement``; pass ``None`` to reject
    them instead.  A first row whose feature cells are not all numeric is taken
    as the header.  Labels are encoded in order of first appearance.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} is empty")

    width = len(rows[0])
    if width < 2:
        raise ParseError("need at least one feature column and a label column", line=1)
    if label_column == "last":
        lab = width - 1
    else:
        lab = int(label_column)
        if lab < 0:
            lab += width
        if not 0 <= lab < width:
            raise ParseError(f"label column {label_column} out of range for {width} columns", line=1)
    feat_cols = [j for j in range(width) if j != lab]

    first = rows[0]
    has_header = not all(_is_number(first[j]) or first[j].strip().lower() in MISSING_TOKENS
                         for j in feat_cols)
    if has_header:
        names = [first[j].strip() for j in feat_cols]
        body = rows[1:]
        offset = 2
    else:
        names = [f"f{j}" for j in range(len(feat_cols))]
        body = rows
        offset = 1
    if not body:
        raise DataError(f"{path} has no data rows")

    x = np.empty((len(body), len(feat_cols)))
    labels = []
    for i, r in enumerate(body):
        lineno = i + offset
        if len(r) != width:
            raise ParseError(f"expected {width} fields, found {len(r)}", line=lineno)
        x[i] = [_parse_cell(r[j], nan_replacement, lineno, j) for j in feat_cols]
        labels.append(r[lab].strip())

    codes: dict[str, int] = {}
    y = np.array([codes.setdefault(v, len(codes)) for v in labels], dtype=np.int64)
    if len(codes) < 2:
        raise DataError(f"{path} contains a single class")
    return Dataset(
        name=name or path.stem,
        feature_names=tuple(names),
        x=x,
        y=y,
        n_classes=len(codes),
        class_names=tuple(codes),
    )


def write_csv(ds: Dataset, path) -> None:
    """Inverse of :func:`load_csv` with a header row and the label last."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, "label"])
        for row, label in zip(ds.x, ds.y):
            w.writerow([repr(float(v)) for v in row] + [ds.class_names[label]])


def minmax_fit(x: np.ndarray):
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    return lo, span


def minmax_apply(x: np.ndarray, lo, span) -> np.ndarray:
    safe = np.where(span > 0, span, 1.0)
    out = (x - lo) / safe
    out[:, span <= 0] = 0.0
    return out


def minmax_normalize(ds: Dataset, ref: Dataset | None = None) -> Dataset:
    """Map every column to [0, 1]; constant columns become all zeros.

    With ``ref`` the column ranges are taken from that dataset instead, which is
    how a fixed test set is scaled with its training set's ranges.
    """
    lo, span = minmax_fit((ref if ref is not None else ds).x)
    return replace(ds, x=minmax_apply(ds.x, lo, span))


def stratified_split(ds: Dataset, train_fraction: float, seed: int) -> SplitPair:
    if not 0.0 < train_fraction < 1.0:
        raise SplitError(f"train_fraction must be in (0, 1), got {train_fraction}")
    counts = ds.class_counts()
    if (counts < 2).any():
        bad = [ds.class_names[c] for c in np.flatnonzero(counts < 2)]
        raise SplitError(f"classes with fewer than 2 samples: {bad}")
    rng = np.random.default_rng(seed)
    train_idx = []
    for c in range(ds.n_classes):
        members = rng.permutation(np.flatnonzero(ds.y == c))
        k = int(round(train_fraction * members.size))
        k = min(max(k, 1), members.size - 1)
        train_idx.append(members[:k])
    train = np.sort(np.concatenate(train_idx))
    test = np.setdiff1d(np.arange(ds.n_samples), train)
    return SplitPair(ds.subset(train), ds.subset(test), train, test)


def stratified_folds(y: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Assign samples to ``k`` folds so every class is spread as evenly as possible.

    Samples of each class are shuffled and dealt round-robin, continuing the
    deal across classes so fold sizes differ by at most one.
    """
    y = np.asarray(y)
    if k < 2 or k > y.size:
        raise SplitError(f"need 2 <= folds <= {y.size}, got {k}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.size, dtype=np.int64)
    pos = 0
    for c in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == c))
        fold_of[members] = (pos + np.arange(members.size)) % k
        pos += members.size
    return [np.flatnonzero(fold_of == f) for f in range(k)]


def as_mask(bits, d: int | None = None) -> np.ndarray:
    mask = np.asarray(bits).astype(bool)
    if mask.ndim != 1:
        raise MaskError("mask must be a 1-D vector")
    if d is not None and mask.size != d:
        raise MaskError(f"mask has length {mask.size}, dataset has {d} features")
    return mask


def apply_mask(ds: Dataset, mask) -> Dataset:
    mask = as_mask(mask, ds.n_features)
    if not mask.any():
        raise MaskError("mask selects no features")
    cols = np.flatnonzero(mask)
    return replace(ds, x=ds.x[:, cols], feature_names=tuple(ds.feature_names[j] for j in cols))


def read_manifest(path) -> list[tuple[str, str, str | None]]:
    """Parse ``name = path`` lines; ``name = train.csv | test.csv`` gives a fixed split.

    Blank lines and ``#`` comments are ignored.
    """
    entries = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'name = path', got {raw!r}", line=lineno)
        name, rest = (s.strip() for s in line.split("=", 1))
        if not name or not rest:
            raise ParseError(f"expected 'name = path', got {raw!r}", line=lineno)
        train, _, test = (s.strip() for s in rest.partition("|"))
        entries.append((name, train, test or None))
    return entries


def align_labels(ds: Dataset, class_names) -> Dataset:
    """Re-encode ``ds`` labels so that ``class_names[i]`` maps to ``i``.

    Used for a separate test file whose first-appearance order differs from
    the training file's.
    """
    class_names = tuple(class_names)
    if ds.class_names == class_names:
        return ds
    lookup = {c: i for i, c in enumerate(class_names)}
    unknown = sorted(set(ds.class_names) - set(lookup))
    if unknown:
        raise DataError(f"labels {unknown} do not occur in the reference label set")
    y = np.array([lookup[ds.class_names[v]] for v in ds.y], dtype=np.int64)
    out = ds.subset(np.arange(ds.n_samples))
    y.setflags(write=False)
    object.__setattr__(out, "y", y)
    object.__setattr__(out, "n_classes", len(class_names))
    object.__setattr__(out, "class_names", class_names)
    return out
