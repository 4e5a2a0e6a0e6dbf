"""Scores for candidate feature subsets (higher is better)."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, apply_mask, as_mask, stratified_folds
from .errors import EvaluationError, MaskError, ShapeError

OBJECTIVE_KINDS = ("merit", "wrapper", "multi_objective")

# Above this many features the |R_ff| table is not cached (d*d*8 bytes).
DENSE_CORR_LIMIT = 4000


def pearson(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeError(f"pearson needs equal-length vectors, got {u.shape} and {v.shape}")
    if u.size < 2:
        raise ShapeError("pearson needs at least 2 observations")
    du = u - u.mean()
    dv = v - v.mean()
    nu = np.sqrt(du @ du)
    nv = np.sqrt(dv @ dv)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(du @ dv / (nu * nv), -1.0, 1.0))


def _standardize(x: np.ndarray) -> np.ndarray:
    """Columns centred and scaled to unit norm; constant columns become zero."""
    z = x - x.mean(axis=0)
    norms = np.sqrt((z * z).sum(axis=0))
    return np.divide(z, norms, out=np.zeros_like(z), where=norms > 0)


def label_targets(y: np.ndarray, n_classes: int) -> np.ndarray:
    """Numeric label vectors the feature-class correlation is measured against.

    Binary problems use the class index itself; with more classes one indicator
    column per class is returned and correlations are averaged over them.
    """
    if n_classes <= 2:
        return y.astype(float)[:, None]
    return (y[:, None] == np.arange(n_classes)[None, :]).astype(float)


class MeritTable:
    """Precomputed correlations for fast repeated CFS merit evaluation."""

    def __init__(self, ds: Dataset):
        self.d = ds.n_features
        self._z = _standardize(ds.x)
        t = _standardize(label_targets(ds.y, ds.n_classes))
        self.r_cf = np.abs(self._z.T @ t).mean(axis=1)
        self._r_ff = np.abs(self._z.T @ self._z) if self.d <= DENSE_CORR_LIMIT else None

    def merit(self, mask) -> float:
        cols = np.flatnonzero(as_mask(mask, self.d))
        k = cols.size
        if k == 0:
            raise MaskError("merit of an empty mask is undefined")
        rcf = self.r_cf[cols].mean()
        if k == 1:
            return float(rcf)
        if self._r_ff is not None:
            block = self._r_ff[np.ix_(cols, cols)]
        else:
            zs = self._z[:, cols]
            block = np.abs(zs.T @ zs)
        off = block.sum() - np.trace(block)
        rff = off / (k * (k - 1))
        return float(k * rcf / np.sqrt(k + k * (k - 1) * rff))


def cfs_merit(ds: Dataset, mask) -> float:
    """Correlation-based subset merit ``k*r_cf / sqrt(k + k(k-1)*r_ff)``."""
    return MeritTable(apply_mask(ds, mask)).merit(np.ones(int(as_mask(mask).sum()), bool))


def wrapper_accuracy(ds: Dataset, mask, cfg=None, folds: int = 3, seed: int = 1) -> float:
    """Mean stratified k-fold accuracy of the network trained on the masked columns."""
    from .neural import NetworkConfig, build_network, evaluate, train

    cfg = cfg or NetworkConfig()
    sub = apply_mask(ds, mask)
    if folds > sub.n_samples or folds < 2:
        raise EvaluationError(f"cannot run {folds}-fold evaluation on {sub.n_samples} samples")
    accs = []
    for test_idx in stratified_folds(sub.y, folds, seed):
        train_idx = np.setdiff1d(np.arange(sub.n_samples), test_idx)
        net = build_network(sub.n_features, sub.n_classes, cfg)
        train(net, sub.subset(train_idx), cfg)
        accs.append(evaluate(net, sub.subset(test_idx))["accuracy"])
    return float(np.mean(accs))


@dataclass
class Objective:
    """A memoizing scorer for masks over one dataset.

    ``multi_objective`` blends a quality term (``quality`` picks merit or
    wrapper) with the fraction of features dropped.
    """

    kind: str
    dataset: Dataset
    wrapper_config: object = None
    w_quality: float = 0.9
    w_parsimony: float = 0.1
    folds: int = 3
    seed: int = 1
    quality: str = "merit"
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)
    _table: MeritTable | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.w_quality < 0 or self.w_parsimony < 0:
            raise ValueError("objective weights must be nonnegative")
        if not np.isclose(self.w_quality + self.w_parsimony, 1.0):
            raise ValueError("objective weights must sum to 1")
        if self.quality not in ("merit", "wrapper"):
            raise ValueError(f"unknown quality term {self.quality!r}")
        if self.wrapper_config is None and (self.kind == "wrapper" or self.quality == "wrapper"):
            from .neural import NetworkConfig

            self.wrapper_config = NetworkConfig()

    @property
    def d(self) -> int:
        return self.dataset.n_features

    @property
    def cache_size(self) -> int:
        return len(self._cache)

    def _merit(self, mask) -> float:
        if self._table is None:
            with self._lock:
                if self._table is None:
                    self._table = MeritTable(self.dataset)
        return self._table.merit(mask)

    def _wrapper(self, mask) -> float:
        return wrapper_accuracy(self.dataset, mask, self.wrapper_config, self.folds, self.seed)

    def _compute(self, mask) -> float:
        if self.kind == "merit":
            return self._merit(mask)
        if self.kind == "wrapper":
            return self._wrapper(mask)
        quality = self._merit(mask) if self.quality == "merit" else self._wrapper(mask)
        return self.w_quality * quality + self.w_parsimony * (1.0 - mask.sum() / self.d)

    def __call__(self, mask) -> float:
        mask = as_mask(mask, self.d)
        if not mask.any():
            raise MaskError("cannot score an empty mask")
        key = np.packbits(mask).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = float(self._compute(mask))
        with self._lock:
            self._cache.setdefault(key, value)
        return value


def score(obj: Objective, mask) -> float:
    return obj(mask)
