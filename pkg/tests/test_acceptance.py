"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` or directly with
``python tests/test_acceptance.py``.  The optional real-data rows read
``GENESIFT_LEUKEMIA_TRAIN``, ``GENESIFT_LEUKEMIA_TEST`` and ``GENESIFT_OVARIAN``.
"""

import contextlib
import io
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from genesift.cli import main as cli_main
from genesift.data import apply_mask, load_csv, minmax_normalize
from genesift.fitness import Objective
from genesift.metaheuristics import ElephantParams, FireflyParams, run_search
from genesift.neural import (Gradients, NetworkConfig, UpdaterState, backward, build_network,
                             clip_by_norm, forward, global_norm, mcxent_loss, softmax,
                             updater_step)
from genesift.pipeline import (EvalProtocol, PipelineConfig, classifier_accuracy, gen_synthetic,
                               run_pipeline)

SEEDS = range(10)


def report(name, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}", flush=True)
    return ok


def _numeric_grads(net, x, y, eps=1e-5):
    out = []
    for p in net.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up = mcxent_loss(forward(net, x)[1], y)
            p[idx] = old - eps
            down = mcxent_loss(forward(net, x)[1], y)
            p[idx] = old
            g[idx] = (up - down) / (2 * eps)
        out.append(g)
    return out


def check_gradient():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    net = build_network(4, 3, NetworkConfig(seed=3), layer_sizes=[4, 6, 5, 3])
    x, y = rng.random((8, 4)), rng.integers(0, 3, 8)
    analytic = backward(net, *forward(net, x), y).tensors()
    worst = 0.0
    for a, n in zip(analytic, _numeric_grads(net, x, y)):
        rel = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-12)
        rel[(np.abs(a) < 1e-12) & (np.abs(n) < 1e-10)] = 0.0
        worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    return report("gradient check", worst < 1e-5 and elapsed < 1.0,
                  f"max rel err {worst:.2e} (< 1e-5), {elapsed:.3f} s (< 1 s)")


def check_updaters():
    shapes = [(3, 2), (3,)]
    g = Gradients([np.ones(shapes[0])], [np.ones(shapes[1])])
    nes = updater_step(UpdaterState(), g, NetworkConfig(momentum=0.0)).weights[0]
    adam = updater_step(UpdaterState(), g, NetworkConfig(updater="adam")).weights[0]
    ada = updater_step(UpdaterState(), g, NetworkConfig(updater="adadelta")).weights[0]
    errs = {
        "nesterov": np.abs(nes - (-0.1)).max(),
        "adam": np.abs(adam - (-0.1 / (1 + 1e-8))).max(),
        "adadelta": np.abs(ada - (-math.sqrt(1e-6) / math.sqrt(1 + 1e-6))).max(),
    }
    ok = all(e <= 1e-9 for e in errs.values())
    return report("updater oracles", ok,
                  ", ".join(f"{k} err {v:.1e}" for k, v in errs.items()) + " (<= 1e-9)")


def check_softmax_loss():
    z = np.random.default_rng(1).normal(0, 50, size=(10_000, 8))
    row_err = float(np.abs(softmax(z).sum(axis=1) - 1.0).max())
    loss_err = max(abs(mcxent_loss(np.full((6, c), 1.0 / c), np.arange(6) % c) - math.log(c))
                   for c in range(2, 11))
    ok = row_err <= 1e-12 and loss_err <= 1e-9
    return report("softmax/loss", ok,
                  f"row-sum err {row_err:.1e} (<= 1e-12), uniform loss err {loss_err:.1e} (<= 1e-9)")


def check_clipping():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(2000):
        target = 10 ** rng.uniform(-2, 6)
        g = Gradients([rng.normal(size=(5, 4)), rng.normal(size=(3, 5))],
                      [rng.normal(size=5), rng.normal(size=3)])
        s = target / global_norm(g)
        g = Gradients([w * s for w in g.weights], [b * s for b in g.biases])
        worst = max(worst, global_norm(clip_by_norm(g, 1.0)))
    return report("clipping", worst <= 1.0 + 1e-12, f"max post-clip norm {worst!r} (<= 1 + 1e-12)")


def _invariant_run(algorithm, jobs, seed=1):
    ds, _ = gen_synthetic(200, 100, 5, 2, 0.5, seed)
    ds = minmax_normalize(ds)
    params = FireflyParams(seed=seed) if algorithm == "firefly" else ElephantParams(seed=seed)
    seen = {"in_cube": True, "sexes": set()}

    def watch(t, pop):
        xs = np.array([a.position for a in pop])
        seen["in_cube"] &= bool(((xs >= 0) & (xs <= 1)).all())
        if algorithm == "elephant":
            seen["sexes"].add(tuple(sorted(a.sex for a in pop)))

    res = run_search(algorithm, params, Objective("merit", ds), ds.n_features, jobs=jobs,
                     callback=watch)
    return res, seen


def check_optimizer_invariants():
    problems = []
    for algorithm in ("firefly", "elephant"):
        runs = {jobs: _invariant_run(algorithm, jobs) for jobs in (1, 4)}
        res, seen = runs[1]
        best = [f for _, f, _ in res.trace]
        if any(b < a for a, b in zip(best, best[1:])):
            problems.append(f"{algorithm} archive decreased")
        if not seen["in_cube"]:
            problems.append(f"{algorithm} left [0,1]^d")
        if algorithm == "elephant" and len(seen["sexes"]) != 1:
            problems.append("elephant sex counts changed")
        again, _ = _invariant_run(algorithm, 1)
        par, _ = runs[4]
        for other, label in ((again, "rerun"), (par, "jobs=4")):
            if not (np.array_equal(other.best_mask, res.best_mask) and other.trace == res.trace):
                problems.append(f"{algorithm} {label} differs")
    return report("optimizer invariants", not problems,
                  "; ".join(problems) or "monotone archive, in-cube, sex counts fixed, "
                  "bit-identical at jobs 1 and 4")


def check_search_effectiveness():
    start = time.perf_counter()
    hits, parts = {}, []
    null_ok = True
    rng = np.random.default_rng(99)
    for algorithm in ("firefly", "elephant"):
        recalls, sizes = [], []
        for seed in SEEDS:
            ds, truth = gen_synthetic(200, 100, 5, 2, 0.5, seed)
            ds = minmax_normalize(ds)
            params = FireflyParams(seed=seed) if algorithm == "firefly" else ElephantParams(seed=seed)
            res = run_search(algorithm, params, Objective("merit", ds), 100)
            recalls.append((res.best_mask & truth).sum() / 5)
            sizes.append(int(res.best_mask.sum()))
            # null: random masks of the same popcount hit 5 * k / 100 truths on average
            draws = [np.isin(rng.choice(100, sizes[-1], replace=False), np.flatnonzero(truth)).sum()
                     for _ in range(400)]
            expected = 0.05 * sizes[-1]
            null_ok &= abs(np.mean(draws) - expected) <= max(0.15 * expected, 0.1)
        hits[algorithm] = sum(r >= 0.6 for r in recalls)
        parts.append(f"{algorithm} {hits[algorithm]}/10 seeds recall >= 0.6 "
                     f"(mean {np.mean(recalls):.2f}, popcount {min(sizes)}-{max(sizes)})")
    elapsed = time.perf_counter() - start
    ok = all(h >= 7 for h in hits.values()) and null_ok and elapsed < 60
    parts.append(f"null hits ~ 0.05*popcount {'confirmed' if null_ok else 'NOT confirmed'}")
    parts.append(f"{elapsed:.1f} s (< 60 s)")
    return report("search effectiveness", ok, "; ".join(parts))


def check_end_to_end():
    start = time.perf_counter()
    parts, ok = [], True
    for algorithm in ("firefly", "elephant"):
        accs = []
        for seed in SEEDS:
            ds, _ = gen_synthetic(200, 100, 5, 2, 0.5, seed)
            cfg = PipelineConfig(algorithm=algorithm, firefly=FireflyParams(seed=seed),
                                 elephant=ElephantParams(seed=seed),
                                 net=NetworkConfig(seed=seed), seed=seed)
            accs.append(run_pipeline(ds, cfg).accuracy_pct)
        n_ok = sum(a >= 85 for a in accs)
        ok &= n_ok >= 8
        parts.append(f"{algorithm} {n_ok}/10 seeds >= 85% (min {min(accs):.2f})")
    oracle = []
    for seed in SEEDS:
        ds, truth = gen_synthetic(200, 100, 5, 2, 0.5, seed)
        reduced = apply_mask(minmax_normalize(ds), truth)
        oracle.append(100 * classifier_accuracy(reduced, EvalProtocol(), NetworkConfig(seed=seed), seed))
    ok &= min(oracle) >= 95
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    parts.append(f"true-mask oracle min {min(oracle):.2f}% (>= 95)")
    parts.append(f"{elapsed:.1f} s (< 120 s)")
    return report("end-to-end accuracy", ok, "; ".join(parts))


def check_real_data_rows():
    """Returns None when no real data is configured."""
    leuk_train = os.environ.get("GENESIFT_LEUKEMIA_TRAIN")
    leuk_test = os.environ.get("GENESIFT_LEUKEMIA_TEST")
    ovarian = os.environ.get("GENESIFT_OVARIAN")
    if not ((leuk_train and leuk_test) or ovarian):
        print("SKIP  real-data targets: set GENESIFT_LEUKEMIA_TRAIN/_TEST or GENESIFT_OVARIAN",
              flush=True)
        return None
    ok, parts = True, []
    if leuk_train and leuk_test:
        from genesift.data import align_labels

        train = load_csv(leuk_train)
        test = align_labels(load_csv(leuk_test), train.class_names)
        r = run_pipeline(train, PipelineConfig(algorithm="firefly"), test=test)
        ok &= r.accuracy_pct >= 85
        parts.append(f"leukemia firefly+dl {r.accuracy_pct:.2f}% (>= 85; published 100.00, "
                     f"{r.reduced_attributes} attributes vs 2463)")
    if ovarian:
        r = run_pipeline(load_csv(ovarian), PipelineConfig(algorithm="elephant"))
        ok &= r.accuracy_pct >= 90
        parts.append(f"ovarian elephant+dl {r.accuracy_pct:.2f}% (>= 90; published 99.21, "
                     f"{r.reduced_attributes} attributes vs 384)")
    return report("real-data targets", ok, "; ".join(parts))


def check_cli_determinism(tmp):
    with contextlib.redirect_stdout(io.StringIO()):
        ok, detail = _cli_determinism(Path(tmp))
    return report("CLI determinism", ok, detail)


def _cli_determinism(tmp):
    lines = []
    for i in range(3):
        out = tmp / f"syn{i}.csv"
        cli_main(["gensynth", "--n", "100", "--d", "40", "--k", "5", "--seed", str(i + 1),
                  "--out", str(out)])
        lines.append(f"syn{i} = {out.name}")
    manifest = tmp / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    blobs, codes = [], []
    for run in range(2):
        out = tmp / f"bench{run}.csv"
        codes.append(cli_main(["bench", "--manifest", str(manifest), "--seed", "1",
                               "--no-timing", "--out", str(out)]))
        blobs.append(out.read_bytes())
    ok = codes == [0, 0] and blobs[0] == blobs[1] and len(blobs[0].splitlines()) == 7
    return ok, (f"exit codes {codes}, {len(blobs[0].splitlines()) - 1} rows, "
                f"{'byte-identical' if blobs[0] == blobs[1] else 'DIFFERENT'} CSV")


@pytest.fixture
def shown(capsys):
    """Runs a check with capture off so its verdict line reaches the terminal."""
    def run(check, *args):
        with capsys.disabled():
            print()
            return check(*args)
    return run


def test_gradient_check(shown):
    assert shown(check_gradient)


def test_updater_oracles(shown):
    assert shown(check_updaters)


def test_softmax_loss(shown):
    assert shown(check_softmax_loss)


def test_clipping(shown):
    assert shown(check_clipping)


def test_optimizer_invariants(shown):
    assert shown(check_optimizer_invariants)


def test_search_effectiveness(shown):
    assert shown(check_search_effectiveness)


def test_end_to_end_accuracy(shown):
    assert shown(check_end_to_end)


def test_real_data_rows(shown):
    result = shown(check_real_data_rows)
    if result is None:
        pytest.skip("no real datasets configured")
    assert result


def test_cli_determinism(shown, tmp_path):
    assert shown(check_cli_determinism, tmp_path)


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        results = [check_gradient(), check_updaters(), check_softmax_loss(), check_clipping(),
                   check_optimizer_invariants(), check_search_effectiveness(), check_end_to_end(),
                   check_real_data_rows(), check_cli_determinism(tmp)]
    sys.exit(0 if all(r is not False for r in results) else 1)
