"""Representation quality metrics: nearest neighbour, cluster alignment, linear probe."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .embedding import EmbeddingBatch, normalize_rows
from .errors import EmptyTrainSet, KTooLarge, LengthMismatch
from .student import (
    LrSchedule,
    SgdState,
    StudentNetwork,
    backward,
    forward,
    lr_at_epoch,
    sgd_step,
    softmax_cross_entropy,
)

UNMAPPED = -1


def _matrix(x) -> np.ndarray:
    if isinstance(x, EmbeddingBatch):
        return x.data
    return np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------- nearest neighbour


def knn_classify(train_emb, train_labels, test_emb, k_neighbors: int = 1, chunk: int = 1024):
    """Majority vote over the ``k_neighbors`` highest-cosine training points.

    Equal similarities are ordered by lower training index; vote ties go to
    the label whose best-ranked neighbour is nearest.

    Returns
    -------
    predictions : ndarray of int
    accuracy : float or None
        Only when ``test_emb`` is given as a ``(embeddings, labels)`` pair.
    """
    test_labels = None
    if isinstance(test_emb, tuple):
        test_emb, test_labels = test_emb
    train = _matrix(train_emb)
    test = _matrix(test_emb)
    train_labels = np.asarray(train_labels)
    if train.shape[0] == 0:
        raise EmptyTrainSet("no training points")
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    k = min(int(k_neighbors), train.shape[0])
    preds = np.empty(test.shape[0], dtype=train_labels.dtype)
    for start in range(0, test.shape[0], chunk):
        sims = test[start : start + chunk] @ train.T
        if k == 1:
            # argmax returns the first (lowest) index among ties
            preds[start : start + chunk] = train_labels[np.argmax(sims, axis=1)]
            continue
        order = np.argsort(-sims, axis=1, kind="stable")[:, :k]
        for r, idx in enumerate(order):
            preds[start + r] = _vote(train_labels[idx])
    acc = None
    if test_labels is not None:
        acc = float(np.mean(preds == np.asarray(test_labels)))
    return preds, acc


def _vote(ranked_labels):
    values, first_pos, counts = np.unique(ranked_labels, return_index=True, return_counts=True)
    best = counts == counts.max()
    return values[best][np.argmin(first_pos[best])]


def nn_accuracy(train_emb, train_labels, test_emb, test_labels, k_neighbors: int = 1) -> float:
    return knn_classify(train_emb, train_labels, (test_emb, test_labels), k_neighbors)[1]


# ---------------------------------------------------------------- k-means


@dataclass
class ClusterAssignment:
    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float
    inertia_history: list = field(default_factory=list)
    n_iter: int = 0
    run_histories: list = field(default_factory=list)


def _sq_dists(x, c):
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp(x, k, rng):
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((x - x[nxt]) ** 2).sum(axis=1))
    return x[chosen].copy()


def kmeans(embeddings, k: int, max_iters: int = 300, seed: int = 0, n_init: int = 10) -> ClusterAssignment:
    """Lloyd's algorithm from k-means++ starts; the lowest-inertia run wins.

    On ℓ2-normalized inputs squared Euclidean distance ranks like cosine
    similarity. Each run iterates until the assignment stops changing or
    ``max_iters`` updates have been made. A cluster that empties is
    re-seeded at the point farthest from its current centroid.
    """
    x = _matrix(embeddings)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise KTooLarge(f"k={k} exceeds sample count {n}")
    rng = np.random.default_rng(seed)
    best = None
    histories = []
    for _ in range(max(1, n_init)):
        run = _lloyd(x, _kmeans_pp(x, k, rng), max_iters)
        histories.append(run.inertia_history)
        if best is None or run.inertia < best.inertia:
            best = run
    best.run_histories = histories
    return best


def _lloyd(x, c, max_iters) -> ClusterAssignment:
    n, k = x.shape[0], c.shape[0]
    d = _sq_dists(x, c)
    a = np.argmin(d, axis=1)
    history = [float(d[np.arange(n), a].sum())]
    it = 0
    for it in range(1, max_iters + 1):
        counts = np.bincount(a, minlength=k)
        sums = np.zeros_like(c)
        np.add.at(sums, a, x)
        nonempty = counts > 0
        c = c.copy()
        c[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            own = ((x - c[a]) ** 2).sum(axis=1)
            for j in np.nonzero(~nonempty)[0]:
                far = int(np.argmax(own))
                c[j] = x[far]
                own[far] = -1.0
        d = _sq_dists(x, c)
        a_new = np.argmin(d, axis=1)
        history.append(float(d[np.arange(n), a_new].sum()))
        if np.array_equal(a_new, a):
            break
        a = a_new
    return ClusterAssignment(c, a, history[-1], history, it)


def assign_to_centroids(embeddings, centroids) -> np.ndarray:
    """Nearest centroid by cosine similarity."""
    return np.argmax(_matrix(embeddings) @ normalize_rows(centroids).T, axis=1)


# ---------------------------------------------------------------- cluster alignment


def alignment_matrix(assignment, labels, k: int, C: int) -> np.ndarray:
    """Entry (r, c): fraction of cluster r's members whose label is c."""
    a = np.asarray(assignment)
    y = np.asarray(labels)
    if a.shape != y.shape:
        raise LengthMismatch(f"{a.size} assignments vs {y.size} labels")
    counts = np.zeros((k, C))
    np.add.at(counts, (a, y), 1.0)
    sizes = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, sizes, out=np.zeros_like(counts), where=sizes > 0)


def hungarian_max(matrix) -> np.ndarray:
    """Injective cluster -> category mapping of maximal total value.

    Rectangular inputs are zero-padded to square. Returns an array mapping
    each row to a column, or ``UNMAPPED`` for rows matched to padding.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    rows, cols = m.shape
    n = max(rows, cols)
    padded = np.zeros((n, n))
    padded[:rows, :cols] = m
    col_of_row = kernels.hungarian_min(-padded)[:rows]
    return np.where(col_of_row < cols, col_of_row, UNMAPPED)


def mapping_total(matrix, mapping) -> float:
    m = np.asarray(matrix, dtype=np.float64)
    rows = np.nonzero(mapping != UNMAPPED)[0]
    return float(m[rows, mapping[rows]].sum())


def cluster_alignment_accuracy(
    train_emb, train_labels, val_emb, val_labels, k: int, seed: int = 0, max_iters: int = 300
) -> float:
    train = _matrix(train_emb)
    val = _matrix(val_emb)
    train_labels = np.asarray(train_labels)
    val_labels = np.asarray(val_labels)
    C = int(max(train_labels.max(), val_labels.max())) + 1
    clusters = kmeans(train, k, max_iters=max_iters, seed=seed)
    mapping = hungarian_max(alignment_matrix(clusters.assignment, train_labels, k, C))
    pred = mapping[assign_to_centroids(val, clusters.centroids)]
    return float(np.mean(pred == val_labels))


# ---------------------------------------------------------------- linear probe


@dataclass
class ProbeConfig:
    lr: float = 0.01
    epochs: int = 40
    milestones: list = field(default_factory=lambda: [15, 30])
    factor: float = 0.1
    weight_decay: float = 1e-4
    momentum: float = 0.9
    batch_size: int = 256
    seed: int = 0

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr, list(self.milestones), self.factor)


def standardize(train_emb, val_emb=None, floor: float = 1e-8):
    """ℓ2-normalize, then shift/scale each column using training statistics."""
    train = normalize_rows(_matrix(train_emb))
    mu = train.mean(axis=0)
    sd = np.maximum(train.std(axis=0), floor)
    out_train = (train - mu) / sd
    if val_emb is None:
        return out_train, None
    return out_train, (normalize_rows(_matrix(val_emb)) - mu) / sd


def linear_probe(train_emb, train_labels, val_emb, val_labels, probe_config: ProbeConfig | None = None) -> float:
    cfg = probe_config or ProbeConfig()
    xtr, xva = standardize(train_emb, val_emb)
    ytr = np.asarray(train_labels)
    yva = np.asarray(val_labels)
    C = int(max(ytr.max(), yva.max())) + 1
    clf = StudentNetwork([xtr.shape[1], C], ["identity"], seed=cfg.seed)
    state = SgdState(cfg.lr, cfg.momentum, cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    n = xtr.shape[0]
    for epoch in range(cfg.epochs):
        state.lr = lr_at_epoch(cfg.schedule, epoch)
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            logits, cache = forward(clf, xtr[idx])
            _, g = softmax_cross_entropy(logits, ytr[idx])
            clf.set_params(sgd_step(state, clf.params, backward(clf, cache, g)))
    pred = np.argmax(forward(clf, xva)[0], axis=1)
    return float(np.mean(pred == yva))
