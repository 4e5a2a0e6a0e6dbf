"""Select features, train the classifier on them and report one table row."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (Dataset, align_labels, apply_mask, load_csv, minmax_normalize, read_manifest,
                   stratified_folds, stratified_split)
from .errors import StageError
from .fitness import Objective
from .metaheuristics import ElephantParams, FireflyParams, run_search
from .neural import NetworkConfig, build_network, evaluate, train

REPORT_COLUMNS = ("dataset", "algorithm", "original_attributes", "instances", "classes",
                  "reduced_attributes", "time_s", "accuracy_pct")
ALGORITHM_LABELS = {"firefly": "firefly+dl", "elephant": "elephant+dl"}


def gen_synthetic(n: int, d: int, k_informative: int, c: int = 2, noise: float = 0.5,
                  seed: int = 1, name: str = "synthetic"):
    """Gaussian toy data with ``k_informative`` class-dependent columns.

    On an informative column class ``j`` is centred at ``2 * perm[j]`` for a
    per-column permutation ``perm``; the other columns are N(0, 1) noise.
    Returns ``(dataset, true_mask)``.
    """
    if not 0 <= k_informative <= d or c < 2 or n < c:
        raise ValueError("need 0 <= k_informative <= d, c >= 2 and n >= c")
    rng = np.random.default_rng(seed)
    y = rng.integers(0, c, n)
    while np.unique(y).size < c:
        y = rng.integers(0, c, n)
    x = rng.standard_normal((n, d))
    cols = np.sort(rng.choice(d, size=k_informative, replace=False))
    for j in cols:
        means = 2.0 * rng.permutation(c)
        x[:, j] = means[y] + noise * rng.standard_normal(n)
    truth = np.zeros(d, dtype=bool)
    truth[cols] = True
    names = tuple(f"g{j}" for j in range(d))
    return Dataset(name, names, x, y, c, tuple(f"class{j}" for j in range(c))), truth


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str = "merit"
    w_quality: float = 0.9
    w_parsimony: float = 0.1
    folds: int = 3
    quality: str = "merit"

    def build(self, ds: Dataset, net: NetworkConfig, seed: int) -> Objective:
        return Objective(self.kind, ds, net, self.w_quality, self.w_parsimony,
                         self.folds, seed, self.quality)


@dataclass(frozen=True)
class EvalProtocol:
    """``kfold`` averages stratified fold accuracies; ``holdout`` trains once."""

    protocol: str = "kfold"
    folds: int = 10
    train_fraction: float = 0.7

    def __post_init__(self):
        if self.protocol not in ("kfold", "holdout"):
            raise ValueError(f"unknown evaluation protocol {self.protocol!r}")


@dataclass(frozen=True)
class PipelineConfig:
    algorithm: str = "firefly"
    firefly: FireflyParams = field(default_factory=FireflyParams)
    elephant: ElephantParams = field(default_factory=ElephantParams)
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    eval: EvalProtocol = field(default_factory=EvalProtocol)
    net: NetworkConfig = field(default_factory=NetworkConfig)
    seed: int = 1
    jobs: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHM_LABELS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")

    @property
    def search_params(self):
        return self.firefly if self.algorithm == "firefly" else self.elephant


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    algorithm: str
    original_attributes: int | None = None
    instances: int | None = None
    n_classes: int | None = None
    reduced_attributes: int | None = None
    selection_time_s: float | None = None
    accuracy_pct: float | None = None
    best_fitness: float | None = None
    selected: tuple = ()
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def csv_row(self, timing: bool = True, decimals: int = 2) -> list[str]:
        if not self.ok:
            return [self.dataset, self.algorithm, "", "", "", "", "", f"FAILED {self.error}"]
        return [
            self.dataset, self.algorithm, str(self.original_attributes), str(self.instances),
            str(self.n_classes), str(self.reduced_attributes),
            f"{self.selection_time_s:.{decimals}f}" if timing else "NA",
            f"{self.accuracy_pct:.{decimals}f}",
        ]


def _stage(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc


def _fit_and_score(train_ds: Dataset, test_ds: Dataset, net_cfg: NetworkConfig) -> float:
    net = build_network(train_ds.n_features, train_ds.n_classes, net_cfg)
    train(net, train_ds, net_cfg)
    return evaluate(net, test_ds)["accuracy"]


def classifier_accuracy(ds: Dataset, protocol: EvalProtocol, net_cfg: NetworkConfig,
                        seed: int, test: Dataset | None = None) -> float:
    """Accuracy in [0, 1] of the network on ``ds`` under ``protocol``.

    A separate ``test`` set overrides the protocol: train on all of ``ds`` and
    score on ``test``.
    """
    if test is not None:
        return _fit_and_score(ds, test, net_cfg)
    if protocol.protocol == "holdout":
        split = stratified_split(ds, protocol.train_fraction, seed)
        return _fit_and_score(split.train, split.test, net_cfg)
    accs = []
    everything = np.arange(ds.n_samples)
    for test_idx in stratified_folds(ds.y, protocol.folds, seed):
        train_idx = np.setdiff1d(everything, test_idx)
        accs.append(_fit_and_score(ds.subset(train_idx), ds.subset(test_idx), net_cfg))
    return float(np.mean(accs))


def run_pipeline(ds: Dataset, cfg: PipelineConfig | None = None, test: Dataset | None = None,
                 callback=None) -> EvalReport:
    """Normalize, search for a mask, then score the classifier on the kept columns.

    The search sees the whole (normalized) dataset once; only the classifier
    is cross-validated.  ``selection_time_s`` covers the search alone.
    """
    cfg = cfg or PipelineConfig()
    norm = _stage("load", minmax_normalize, ds)
    norm_test = _stage("load", minmax_normalize, test, ref=ds) if test is not None else None
    params = cfg.search_params
    objective = _stage("select", cfg.objective.build, norm, cfg.net, cfg.seed)

    start = time.perf_counter()
    result = _stage("select", run_search, cfg.algorithm, params, objective, norm.n_features,
                    jobs=cfg.jobs, callback=callback)
    elapsed = time.perf_counter() - start

    reduced = _stage("train", apply_mask, norm, result.best_mask)
    reduced_test = apply_mask(norm_test, result.best_mask) if norm_test is not None else None
    acc = _stage("eval", classifier_accuracy, reduced, cfg.eval, cfg.net, cfg.seed, reduced_test)
    return EvalReport(
        dataset=ds.name,
        algorithm=ALGORITHM_LABELS[cfg.algorithm],
        original_attributes=ds.n_features,
        instances=ds.n_samples,
        n_classes=ds.n_classes,
        reduced_attributes=result.n_selected,
        selection_time_s=max(elapsed, 1e-9),
        accuracy_pct=100.0 * acc,
        best_fitness=result.best_fitness,
        selected=tuple(int(i) for i in np.flatnonzero(result.best_mask)),
    )


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else base / path


def _bench_row(name, train_path, test_path, cfg, nan_replacement):
    try:
        ds = _stage("load", load_csv, train_path, nan_replacement=nan_replacement, name=name)
        test = None
        if test_path is not None:
            test = _stage("load", load_csv, test_path, nan_replacement=nan_replacement, name=name)
            test = _stage("load", align_labels, test, ds.class_names)
        return run_pipeline(ds, cfg, test=test)
    except StageError as exc:
        return EvalReport(name, ALGORITHM_LABELS[cfg.algorithm], error=f"{exc.stage}: {exc.cause}")
    except Exception as exc:
        return EvalReport(name, ALGORITHM_LABELS[cfg.algorithm], error=f"run: {exc}")


def bench(manifest, cfgs, jobs: int = 1, nan_replacement=100.0) -> list[EvalReport]:
    """Run every (dataset, config) pair; rows come back in manifest order.

    ``manifest`` is a path or a list of ``(name, train_path, test_path)``.
    Relative paths in a manifest file are resolved against its directory.
    A failing row is reported with its stage instead of aborting the run.
    """
    if isinstance(manifest, (str, Path)):
        base = Path(manifest).parent
        entries = [(n, _resolve(base, tr), _resolve(base, te) if te else None)
                   for n, tr, te in read_manifest(manifest)]
    else:
        entries = list(manifest)
    tasks = [(name, tr, te, cfg, nan_replacement) for cfg in cfgs for name, tr, te in entries]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_bench_row, *zip(*tasks)))
    return [_bench_row(*t) for t in tasks]


def reports_to_csv(reports, timing: bool = True, decimals: int = 2) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row(timing, decimals))
    return buf.getvalue()


def format_table(reports, timing: bool = True, decimals: int = 2) -> str:
    """Aligned plain-text table with the same columns as the CSV."""
    header = ["Dataset", "Algorithm", "Original Attributes", "Instances", "Classes",
              "Reduced Attributes", "Time in seconds", "Accuracy in %"]
    rows = [header] + [r.csv_row(timing, decimals) for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for k, row in enumerate(rows):
        cells = [c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(cells).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
