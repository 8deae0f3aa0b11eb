"""Similarity-distribution distillation and the regression / cluster baselines.

Each training query is compared against a bank of anchors. The teacher's
softmax over anchor similarities is the target. The student's softmax over
its own anchors (``ours2q``) or over the teacher's anchors (``ours1q``) is
pulled toward it by KL divergence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .data_io import Dataset, augment
from .embedding import (
    DEFAULT_TAU,
    SimilarityDistribution,
    _as_matrix,
    cosine_scores,
    kl_divergence,
    normalize_rows,
    softmax_temperature,
)
from .errors import (
    BankSmallerThanBatch,
    BatchTooSmall,
    ConfigError,
    DimensionMismatch,
    EmptyAnchors,
    InconsistentInputs,
    KTooLarge,
    LengthMismatch,
)
from .evaluation import kmeans, nn_accuracy
from .memory_bank import DESK_CAPACITY, AnchorQueue, ema_update
from .student import (
    LrSchedule,
    SgdState,
    StudentNetwork,
    backward,
    forward,
    lr_at_epoch,
    predict,
    sgd_step,
    softmax_cross_entropy,
)

METHODS = ("ours1q", "ours2q", "reg", "reg_bn", "cc")
KL_METHODS = ("ours1q", "ours2q")
BN_EPS = 1e-5
# full-scale schedule: 130 epochs, drops at 90 and 120
_FULL_EPOCHS = 130
_FULL_MILESTONES = (90, 120)


@dataclass
class DistillConfig:
    method: str = "ours2q"
    tau: float = DEFAULT_TAU
    bank_capacity: int = DESK_CAPACITY
    momentum_m: float = 0.999
    epochs: int = 30
    batch_size: int = 256
    seed: int = 0
    cc_k: int | None = None
    lr: float = 0.01
    sgd_momentum: float = 0.9
    weight_decay: float = 1e-4
    milestones: Sequence[int] | None = None
    lr_factor: float = 0.2
    aug_scale: float = 0.1

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.momentum_m <= 1.0:
            raise ConfigError("momentum_m must be in [0, 1]")
        if self.method in KL_METHODS and self.bank_capacity < self.batch_size:
            raise BankSmallerThanBatch(
                f"bank capacity {self.bank_capacity} < batch size {self.batch_size}"
            )
        if self.cc_k is not None and self.cc_k < 1:
            raise ConfigError("cc_k must be positive")

    @property
    def schedule(self) -> LrSchedule:
        if self.milestones is None:
            # keep the full-scale drop points at the same fraction of training
            ms = sorted({round(m * self.epochs / _FULL_EPOCHS) for m in _FULL_MILESTONES})
            ms = [m for m in ms if m > 0]
        else:
            ms = list(self.milestones)
        return LrSchedule(self.lr, ms, self.lr_factor)


@dataclass
class TrainRecord:
    epoch: int
    mean_loss: float
    nn_acc: float | None = None
    note: str = ""


# ---------------------------------------------------------------- per-query reference path


def query_distributions(teacher_q, student_q, teacher_anchors, student_anchors, tau=DEFAULT_TAU):
    """Teacher and student softmax distributions for one query."""
    ta = np.asarray(teacher_anchors, dtype=np.float64)
    sa = np.asarray(student_anchors, dtype=np.float64)
    if ta.ndim != 2 or sa.ndim != 2 or ta.shape[0] == 0 or sa.shape[0] == 0:
        raise EmptyAnchors("anchor sets must be non-empty matrices")
    if ta.shape[0] != sa.shape[0]:
        raise DimensionMismatch(f"{ta.shape[0]} teacher anchors vs {sa.shape[0]} student anchors")
    p_t = softmax_temperature(cosine_scores(teacher_q, ta), tau)
    p_s = softmax_temperature(cosine_scores(student_q, sa), tau)
    return p_t, p_s


def batch_loss(p_t_list, p_s_list) -> float:
    """Mean KL(p_t || p_s) over the queries of a batch."""
    if len(p_t_list) != len(p_s_list):
        raise LengthMismatch(f"{len(p_t_list)} teacher vs {len(p_s_list)} student distributions")
    if not p_t_list:
        raise LengthMismatch("empty batch")
    return float(np.mean([kl_divergence(p, q) for p, q in zip(p_t_list, p_s_list)]))


def query_gradient(p_t, p_s, student_anchors, tau, student_q_unnormalized) -> np.ndarray:
    """d KL(p_t || p_s) / d s for the unnormalized student embedding ``s``.

    Anchors are constants; the only path is through the query's normalization.
    """
    pt = p_t.probs if isinstance(p_t, SimilarityDistribution) else np.asarray(p_t, dtype=np.float64)
    ps = p_s.probs if isinstance(p_s, SimilarityDistribution) else np.asarray(p_s, dtype=np.float64)
    a = np.asarray(student_anchors, dtype=np.float64)
    s = np.asarray(student_q_unnormalized, dtype=np.float64).ravel()
    if not (pt.size == ps.size == a.shape[0]) or a.shape[1] != s.size:
        raise InconsistentInputs("distributions, anchors and query have incompatible shapes")
    norm = np.linalg.norm(s)
    s_hat = s / norm
    expected = softmax_temperature(a @ s_hat, tau).probs
    if np.max(np.abs(expected - ps)) > 1e-6:
        raise InconsistentInputs("p_s was not produced by these anchors, query and tau")
    g_hat = a.T @ ((ps - pt) / tau)
    return (g_hat - s_hat * (s_hat @ g_hat)) / norm


# ---------------------------------------------------------------- batched training path


def similarity_loss_and_grad(teacher_q, student_raw, teacher_anchors, student_anchors, tau):
    """Mean KL over a batch and its gradient w.r.t. the unnormalized student rows."""
    norms = np.linalg.norm(student_raw, axis=1, keepdims=True)
    s_hat = student_raw / norms
    scores_t = teacher_q @ teacher_anchors.T
    scores_s = s_hat @ student_anchors.T
    kl, g_scores = kernels.softmax_kl_rows(scores_t, scores_s, tau)
    b = student_raw.shape[0]
    g_hat = (g_scores @ student_anchors) / b
    grad = (g_hat - s_hat * np.sum(s_hat * g_hat, axis=1, keepdims=True)) / norms
    return float(kl.mean()), grad


def reg_loss_and_grad(student_emb, teacher_emb, use_bn: bool = False):
    """Mean squared error between student and teacher embeddings.

    With ``use_bn`` both sides are first whitened per dimension with the
    current batch's mean and (biased) variance; the gradient flows through
    the student's whitening.
    """
    s = np.asarray(student_emb, dtype=np.float64)
    t = np.asarray(teacher_emb, dtype=np.float64)
    if s.shape != t.shape:
        raise DimensionMismatch(f"student {s.shape} vs teacher {t.shape}")
    n_el = s.size
    if not use_bn:
        diff = s - t
        return float(np.mean(diff**2)), 2.0 * diff / n_el
    if s.shape[0] < 2:
        raise BatchTooSmall("batch whitening needs at least 2 rows")
    inv_std = 1.0 / np.sqrt(s.var(axis=0) + BN_EPS)
    s_w = (s - s.mean(axis=0)) * inv_std
    t_w = (t - t.mean(axis=0)) / np.sqrt(t.var(axis=0) + BN_EPS)
    diff = s_w - t_w
    dy = 2.0 * diff / n_el
    grad = inv_std * (dy - dy.mean(axis=0) - s_w * np.mean(dy * s_w, axis=0))
    return float(np.mean(diff**2)), grad


# ---------------------------------------------------------------- training loops


def _with_head(net: StudentNetwork, out_dim: int, seed) -> StudentNetwork:
    """Backbone plus one linear layer; backbone params form the prefix."""
    head = StudentNetwork([net.output_dim, out_dim], ["identity"], seed=seed)
    full = StudentNetwork(net.dims + [out_dim], net.activations + ["identity"], init=False)
    full.set_params(np.concatenate([net.params, head.params]))
    return full


def _probe(net, dataset, val):
    if val is None:
        return None
    tr = normalize_rows(predict(net, dataset.raw))
    va = normalize_rows(predict(net, val.raw))
    return nn_accuracy(tr, dataset.labels, va, val.labels)


def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    if n <= batch_size:
        return [perm]
    # drop the ragged tail so every step sees a full batch
    return [perm[i : i + batch_size] for i in range(0, n - batch_size + 1, batch_size)]


def distill(
    dataset: Dataset,
    teacher_cache=None,
    net: StudentNetwork | None = None,
    config: DistillConfig | None = None,
    val: Dataset | None = None,
    on_epoch: Callable[[TrainRecord], None] | None = None,
):
    """Train ``net`` in place to mimic the teacher; returns ``(net, records)``.

    ``teacher_cache`` defaults to ``dataset.teacher_cache``. It may instead be
    a callable mapping a raw input batch to teacher embeddings; it is then
    evaluated every step on the same augmented batch the student sees.
    ``val`` enables the per-epoch nearest-neighbour probe. For ``cc`` the
    call is forwarded to :func:`cc_prepare` and :func:`cc_train`.
    """
    cfg = config or DistillConfig()
    cfg.validate()
    cache = teacher_cache if teacher_cache is not None else dataset.teacher_cache
    teacher_fn = cache if callable(cache) else None
    if teacher_fn is not None:
        # labels for cc, and the teacher dim, come from clean inputs
        t_all = normalize_rows(teacher_fn(dataset.raw))
    else:
        t_all = _as_matrix(cache)
    if t_all.shape[0] != len(dataset):
        raise LengthMismatch("teacher cache and dataset are not aligned")
    if net is None:
        out_dim = t_all.shape[1] if cfg.method == "ours1q" else 64
        net = StudentNetwork([dataset.raw.shape[1], 128, out_dim], seed=cfg.seed)
    if cfg.method == "cc":
        k = cfg.cc_k or 4 * int(dataset.labels.max() + 1)
        labels = cc_prepare(t_all, k, cfg.seed)
        return cc_train(dataset, labels, net, cfg, val=val, on_epoch=on_epoch)
    teacher_dim = t_all.shape[1]
    if cfg.method == "ours1q" and net.output_dim != teacher_dim:
        raise ConfigError(
            f"ours1q needs student output dim == teacher dim ({net.output_dim} != {teacher_dim})"
        )

    ss = np.random.SeedSequence(cfg.seed)
    shuffle_rng, aug_rng, key_aug_rng, head_seed = (np.random.default_rng(s) for s in ss.spawn(4))
    sigma = cfg.aug_scale * dataset.raw.std(axis=0)
    schedule = cfg.schedule
    state = SgdState(cfg.lr, cfg.sgd_momentum, cfg.weight_decay)

    regress = cfg.method in ("reg", "reg_bn")
    train_net = _with_head(net, teacher_dim, head_seed) if regress else net
    t_queue = AnchorQueue(cfg.bank_capacity, teacher_dim)
    s_queue = key_net = None
    if cfg.method == "ours2q":
        s_queue = AnchorQueue(cfg.bank_capacity, net.output_dim)
        key_net = net.copy()

    records = []
    for epoch in range(cfg.epochs):
        state.lr = lr_at_epoch(schedule, epoch)
        losses = []
        for idx in _batches(len(dataset), cfg.batch_size, shuffle_rng):
            x = augment(dataset.raw[idx], sigma, aug_rng)
            t_q = t_all[idx] if teacher_fn is None else normalize_rows(teacher_fn(x))
            if regress:
                out, fc = forward(train_net, x)
                loss, g = reg_loss_and_grad(out, t_q, use_bn=cfg.method == "reg_bn")
            elif len(t_queue) >= cfg.batch_size:
                out, fc = forward(train_net, x)
                t_anchors = t_queue.as_matrix()
                s_anchors = t_anchors if s_queue is None else s_queue.as_matrix()
                loss, g = similarity_loss_and_grad(t_q, out, t_anchors, s_anchors, cfg.tau)
            else:
                g = None
            if g is not None:
                losses.append(loss)
                grads = backward(train_net, fc, g)
                train_net.set_params(sgd_step(state, train_net.params, grads))
            if not regress:
                t_queue.enqueue(t_q)
            if key_net is not None:
                k_in = augment(dataset.raw[idx], sigma, key_aug_rng)
                s_queue.enqueue(normalize_rows(predict(key_net, k_in)))
                key_net.set_params(ema_update(key_net.params, net.params, cfg.momentum_m))
        if regress:
            net.set_params(train_net.params[: net.num_params])
        rec = TrainRecord(epoch, float(np.mean(losses)) if losses else float("nan"), _probe(net, dataset, val))
        records.append(rec)
        if on_epoch:
            on_epoch(rec)
    return net, records


def cc_prepare(teacher_cache, k: int, seed: int = 0) -> np.ndarray:
    """Pseudo-labels from k-means over the (normalized) teacher cache."""
    t = _as_matrix(teacher_cache)
    if k > t.shape[0]:
        raise KTooLarge(f"k={k} exceeds sample count {t.shape[0]}")
    return kmeans(t, k, seed=seed).assignment


def cc_train(
    dataset: Dataset,
    pseudo_labels,
    net: StudentNetwork,
    config: DistillConfig | None = None,
    val: Dataset | None = None,
    on_epoch=None,
):
    """Train backbone + linear head to predict cluster ids; the head is discarded."""
    cfg = config or DistillConfig(method="cc")
    labels = np.asarray(pseudo_labels)
    if labels.shape != (len(dataset),):
        raise LengthMismatch("one pseudo-label per training sample required")
    k = int(labels.max()) + 1
    ss = np.random.SeedSequence(cfg.seed)
    shuffle_rng, aug_rng, _, head_seed = (np.random.default_rng(s) for s in ss.spawn(4))
    sigma = cfg.aug_scale * dataset.raw.std(axis=0)
    schedule = cfg.schedule
    state = SgdState(cfg.lr, cfg.sgd_momentum, cfg.weight_decay)
    full = _with_head(net, k, head_seed)
    note = "degenerate: single pseudo-label" if np.unique(labels).size == 1 else ""
    records = []
    for epoch in range(cfg.epochs):
        state.lr = lr_at_epoch(schedule, epoch)
        losses = []
        for idx in _batches(len(dataset), cfg.batch_size, shuffle_rng):
            x = augment(dataset.raw[idx], sigma, aug_rng)
            logits, fc = forward(full, x)
            loss, g = softmax_cross_entropy(logits, labels[idx])
            losses.append(loss)
            full.set_params(sgd_step(state, full.params, backward(full, fc, g)))
        net.set_params(full.params[: net.num_params])
        rec = TrainRecord(epoch, float(np.mean(losses)), _probe(net, dataset, val), note)
        records.append(rec)
        if on_epoch:
            on_epoch(rec)
    return net, records


def write_metrics_csv(path, records) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "mean_loss", "nn_acc"])
        for r in records:
            w.writerow([r.epoch, repr(float(r.mean_loss)), "" if r.nn_acc is None else repr(float(r.nn_acc))])
