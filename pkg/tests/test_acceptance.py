"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line that is printed in the terminal summary,
so ``pytest tests/test_acceptance.py`` doubles as a readable report.
Training runs are shared through module-scoped caches.
"""

import time

import numpy as np
import pytest

from simdistill.cli import main
from simdistill.data_io import SyntheticSpec, generate, read_embeddings, read_labels, write_embeddings, write_labels
from simdistill.distill import DistillConfig, distill, similarity_loss_and_grad
from simdistill.embedding import kl_divergence, normalize_rows, softmax_temperature
from simdistill.evaluation import (
    cluster_alignment_accuracy,
    hungarian_max,
    kmeans,
    knn_classify,
    nn_accuracy,
    standardize,
)
from simdistill.student import StudentNetwork, backward, forward, predict

from .conftest import ACCEPTANCE_LINES, unit_rows
from .test_evaluation import brute_knn, brute_max, separated_clusters
from .test_student import fd_grad

pytestmark = pytest.mark.acceptance


def report(n, title, ok, detail):
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- shared runs


@pytest.fixture(scope="module")
def task():
    return generate(SyntheticSpec())


@pytest.fixture(scope="module")
def teacher_nn(task):
    train, val = task
    return nn_accuracy(train.teacher_cache, train.labels, val.teacher_cache, val.labels)


_RUNS = {}


def student_nn(task, **overrides):
    """Final validation NN accuracy of one 30-epoch run, memoized by config."""
    key = tuple(sorted(overrides.items()))
    if key not in _RUNS:
        train, val = task
        cfg = DistillConfig(seed=0, **overrides)
        t0 = time.perf_counter()
        net, records = distill(train, config=cfg)
        elapsed = time.perf_counter() - t0
        tr = normalize_rows(predict(net, train.raw))
        va = normalize_rows(predict(net, val.raw))
        _RUNS[key] = (nn_accuracy(tr, train.labels, va, val.labels), records, elapsed)
    return _RUNS[key]


# ---------------------------------------------------------------- criteria


def full_loss_instance(rng):
    net = StudentNetwork([6, 10, 5], seed=int(rng.integers(1 << 30)))
    x = rng.normal(size=(8, 6))
    t_q = unit_rows(rng, 8, 7)
    t_anchors = unit_rows(rng, 40, 7)
    s_anchors = unit_rows(rng, 40, 5)
    tau = float(rng.choice([0.04, 0.1, 0.5]))

    def loss():
        out, _ = forward(net, x)
        return similarity_loss_and_grad(t_q, out, t_anchors, s_anchors, tau)[0]

    out, cache = forward(net, x)
    _, g_out = similarity_loss_and_grad(t_q, out, t_anchors, s_anchors, tau)
    return backward(net, cache, g_out), fd_grad(net, loss, h=1e-5)


def test_c01_gradient_correctness():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    rel = []
    for _ in range(20):
        analytic, numeric = full_loss_instance(rng)
        scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        rel.append(np.abs(analytic - numeric) / scale)
    rel = np.concatenate(rel)
    elapsed = time.perf_counter() - t0
    frac = float(np.mean(rel <= 1e-5))
    report(1, "gradient vs finite differences", frac >= 0.99 and elapsed < 30,
           f"{frac:.2%} of {rel.size} params within 1e-5, {elapsed:.1f}s")


def test_c02_end_to_end(task, teacher_nn):
    acc, records, elapsed = student_nn(task)
    ok = acc >= teacher_nn - 0.05 and elapsed < 300 and records[-1].mean_loss < records[0].mean_loss
    report(2, "end-to-end distillation", ok,
           f"student {acc:.3f} vs teacher {teacher_nn:.3f}, loss {records[0].mean_loss:.4f}"
           f" -> {records[-1].mean_loss:.4f}, {elapsed:.1f}s")


def test_c03_temperature_trend(task):
    sharp, soft = student_nn(task, tau=0.04)[0], student_nn(task, tau=1.0)[0]
    report(3, "temperature trend", sharp - soft >= 0.02, f"tau 0.04 -> {sharp:.3f}, tau 1.0 -> {soft:.3f}")


def test_c04_bank_trend(task):
    # a 64-entry bank cannot hold a 256-sample batch, so all three runs use batch 64
    accs = {b: student_nn(task, bank_capacity=b, batch_size=64)[0] for b in (64, 256, 4096)}
    ok = accs[4096] >= accs[256] - 0.01 and accs[4096] >= accs[64]
    report(4, "bank-size trend", ok, ", ".join(f"bank {b} -> {a:.3f}" for b, a in accs.items()))


def test_c05_momentum_indifference(task):
    accs = {m: student_nn(task, momentum_m=m)[0] for m in (0.0, 0.5, 0.999)}
    spread = max(accs.values()) - min(accs.values())
    report(5, "momentum indifference", spread <= 0.02,
           f"spread {spread:.3f} over " + ", ".join(f"m {m} -> {a:.3f}" for m, a in accs.items()))


def test_c06_method_ordering(task):
    reg = student_nn(task, method="reg")[0]
    two = student_nn(task)[0]
    one = student_nn(task, method="ours1q")[0]
    ok = two - reg >= 0.02 and one - reg >= 0.02
    report(6, "method ordering", ok, f"ours-1q {one:.3f}, ours-2q {two:.3f}, reg {reg:.3f}")


def test_c07_hungarian_optimality():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(100):
        m = rng.random((6, 6))
        mapping = hungarian_max(m)
        best = brute_max(m)
        # same six terms summed in row order as the oracle
        total = sum(m[r, mapping[r]] for r in range(6))
        mismatches += total != best
    elapsed = time.perf_counter() - t0
    report(7, "Hungarian optimality", mismatches == 0 and elapsed < 5,
           f"{100 - mismatches}/100 exact, {elapsed:.2f}s")


def test_c08_evaluation_oracles():
    rng = np.random.default_rng(8)
    failures = []
    for trial in range(20):
        train = unit_rows(rng, 50, 6)
        labels = rng.integers(0, 4, 50)
        test = unit_rows(rng, 50, 6)
        k = 1 + trial % 7
        if not np.array_equal(knn_classify(train, labels, test, k)[0], brute_knn(train, labels, test, k)):
            failures.append(f"knn k={k}")
    for trial in range(20):
        x = unit_rows(rng, 120, 5)
        result = kmeans(x, 2 + trial % 6, seed=trial)
        for hist in result.run_histories:
            if np.any(np.diff(hist) > 1e-12 * max(hist)):
                failures.append("kmeans inertia increased")
    tr, ytr = separated_clusters(rng, 5, 30)
    va = normalize_rows(tr[::3] + 0.001 * rng.normal(size=tr[::3].shape))
    ca = cluster_alignment_accuracy(tr, ytr, va, ytr[::3], k=5)
    if ca != 1.0:
        failures.append(f"CA {ca}")
    z, _ = standardize(rng.normal(2.0, 3.0, size=(500, 12)))
    mu, var = np.abs(z.mean(axis=0)).max(), np.abs(z.var(axis=0) - 1).max()
    if mu > 1e-6 or var > 1e-4:
        failures.append(f"standardize mu {mu:.1e} var {var:.1e}")
    report(8, "evaluation-suite oracles", not failures,
           "; ".join(failures) or f"knn exact, inertia monotone, CA {ca}, |mu| {mu:.1e}, |var-1| {var:.1e}")


def test_c09_determinism(tmp_path):
    data = tmp_path / "data"
    assert main(["gen-data", "--out", str(data)]) == 0
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        flags = ["--data", str(data), "--out", str(out), "--epochs", "5"]
        assert main(["distill", *flags]) == 0
        assert main(["eval", "--data", str(data), "--out", str(out), "--metric", "all"]) == 0
        blobs.append(((out / "metrics.csv").read_bytes(), (out / "eval.csv").read_bytes()))
    rng = np.random.default_rng(9)
    x = rng.normal(size=(37, 11)).astype(np.float32)
    y = rng.integers(0, 2**32, size=37, dtype=np.uint64)
    write_embeddings(tmp_path / "x.emb", x)
    write_labels(tmp_path / "y.lbl", y)
    emb_ok = np.array_equal(read_embeddings(tmp_path / "x.emb").data, x)
    lbl_ok = np.array_equal(read_labels(tmp_path / "y.lbl"), y)
    report(9, "determinism and round-trips", blobs[0] == blobs[1] and emb_ok and lbl_ok,
           f"csv identical {blobs[0] == blobs[1]}, embeddings exact {emb_ok}, labels exact {lbl_ok}")


def test_c10_kl_softmax_algebra():
    rng = np.random.default_rng(10)
    fails = dict.fromkeys(["non-negativity", "KL(p,p)=0", "shift invariance", "sharpening"], 0)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        fails["non-negativity"] += kl_divergence(p, q) < 0
        fails["KL(p,p)=0"] += kl_divergence(p, p) != 0
        s = rng.uniform(-1, 1, n)
        tau = float(rng.uniform(0.02, 2.0))
        c = float(rng.uniform(-50, 50))
        base = softmax_temperature(s, tau).probs
        fails["shift invariance"] += not np.allclose(softmax_temperature(s + c, tau).probs, base, rtol=1e-9, atol=1e-12)
        # lowering the temperature moves mass onto the maximal scores
        lo, hi = sorted(rng.uniform(0.02, 2.0, 2))
        top = s == s.max()
        off_lo = softmax_temperature(s, lo).probs[~top].sum()
        off_hi = softmax_temperature(s, hi).probs[~top].sum()
        fails["sharpening"] += off_lo > off_hi + 1e-12
    report(10, "KL/softmax algebra", not any(fails.values()),
           ", ".join(f"{k} {1000 - v}/1000" for k, v in fails.items()))
