"""Splitting, optimization, metrics, and cross-validation.

Everything here is a deterministic function of (seed, data, config):
stratified splits, parameter initialization, shuffle order, and dropout
masks all derive from seeded generators, so a run reproduces bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._tuning import tune_allocator
from .errors import DivergenceError, ParameterError, StratificationError
from .model import ModelConfig, ModelParams, build_model, model_forward
from .tensor import Tensor, backward, no_grad, softmax_cross_entropy_ls

# two-sided 97.5% Student-t quantiles for small fold counts (df 1..30)
_T_975 = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
    2.201, 2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
    2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
]

EVAL_BATCH = 256


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    eps_ls: float = 0.1
    seed: int = 0
    folds: int = 5
    split_ratios: tuple = (0.70, 0.15, 0.15)

    def __post_init__(self):
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ParameterError(f"split_ratios must sum to 1, got {self.split_ratios}")
        if self.folds < 2:
            raise ParameterError(f"folds must be >= 2, got {self.folds}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs, "batch_size": self.batch_size,
            "learning_rate": self.learning_rate, "beta1": self.beta1,
            "beta2": self.beta2, "adam_epsilon": self.adam_epsilon,
            "eps_ls": self.eps_ls, "seed": self.seed, "folds": self.folds,
            "split_ratios": list(self.split_ratios),
        }


# ---------------------------------------------------------------------------
# stratified splitting
# ---------------------------------------------------------------------------

def _largest_remainder(count: int, ratios, deficits) -> list:
    """Apportion ``count`` items to len(ratios) buckets.

    Floors the ideal allocations, then hands leftovers to the buckets with
    the largest remainders; ties go to the bucket currently furthest below
    its global target (``deficits``), then to the lowest index.
    """
    ideal = [count * r for r in ratios]
    alloc = [math.floor(v) for v in ideal]
    leftover = count - sum(alloc)
    order = sorted(
        range(len(ratios)),
        key=lambda i: (-(ideal[i] - alloc[i]), -deficits[i], i),
    )
    for i in order[:leftover]:
        alloc[i] += 1
    return alloc


def split_train_val_test(labels, ratios=(0.70, 0.15, 0.15), seed: int = 0):
    """Stratified three-way split; per-class counts within 1 of the ideal.

    Returns (train_idx, val_idx, test_idx) as sorted integer arrays.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterError(f"ratios must sum to 1, got {ratios}")
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise StratificationError("need at least two classes to stratify")
    if counts.min() < 3:
        small = classes[counts.argmin()]
        raise StratificationError(f"class {small} has {counts.min()} samples, need >= 3")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = labels.size
    targets = [n * r for r in ratios]
    splits = [[], [], []]
    for cls in classes:
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        deficits = [targets[i] - len(splits[i]) for i in range(3)]
        alloc = _largest_remainder(idx.size, ratios, deficits)
        pos = 0
        for i, k in enumerate(alloc):
            splits[i].extend(idx[pos:pos + k])
            pos += k
    return tuple(np.sort(np.array(s, dtype=np.int64)) for s in splits)


def stratified_kfold(labels, k: int, seed: int = 0):
    """k disjoint folds; per-class and total fold sizes each differ by <= 1."""
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ParameterError(f"k must be >= 2, got {k}")
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < k:
        small = classes[counts.argmin()]
        raise StratificationError(f"class {small} has {counts.min()} samples, need >= k={k}")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    folds = [[] for _ in range(k)]
    for cls in classes:
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        base, extra = divmod(idx.size, k)
        # extras go to the currently smallest folds, ties by index
        order = sorted(range(k), key=lambda f: (len(folds[f]), f))
        sizes = [base] * k
        for f in order[:extra]:
            sizes[f] += 1
        pos = 0
        for f in range(k):
            folds[f].extend(idx[pos:pos + sizes[f]])
            pos += sizes[f]
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(t.data) for k, t in params.trainable()},
            v={k: np.zeros_like(t.data) for k, t in params.trainable()},
        )


def adam_step(params: ModelParams, grads: dict, state: AdamState, t: int,
              config: TrainConfig):
    """One bias-corrected Adam update, in place; updates are per-parameter."""
    if t < 1:
        raise ParameterError(f"adam step index must be >= 1, got {t}")
    b1, b2, eps, lr = config.beta1, config.beta2, config.adam_epsilon, config.learning_rate
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, tensor in params.trainable():
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        tensor.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


# ---------------------------------------------------------------------------
# training and evaluation
# ---------------------------------------------------------------------------

def _batch_tensor(epochs: np.ndarray, idx: np.ndarray) -> Tensor:
    return Tensor(epochs[idx][:, None, :, :])


def evaluate(model_config: ModelConfig, params: ModelParams, epochs: np.ndarray,
             labels: np.ndarray):
    """Eval-mode accuracy and K x K confusion matrix (rows true, cols predicted)."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ParameterError("evaluate: dataset is empty")
    K = model_config.num_classes
    confusion = np.zeros((K, K), dtype=np.int64)
    correct = 0
    with no_grad():
        for start in range(0, labels.size, EVAL_BATCH):
            idx = np.arange(start, min(start + EVAL_BATCH, labels.size))
            probs, _ = model_forward(_batch_tensor(epochs, idx), params, model_config, "eval")
            pred = probs.data.argmax(axis=1)  # ties resolve to the lowest index
            truth = labels[idx]
            correct += int((pred == truth).sum())
            np.add.at(confusion, (truth, pred), 1)
    return correct / labels.size, confusion


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_accuracy: float = 0.0

    def to_dict(self) -> dict:
        return {
            "train_loss": list(self.train_loss),
            "val_accuracy": list(self.val_accuracy),
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val_accuracy,
        }


def train(model_config: ModelConfig, params: ModelParams,
          train_epochs: np.ndarray, train_labels: np.ndarray,
          val_epochs: np.ndarray, val_labels: np.ndarray,
          train_config: TrainConfig):
    """Mini-batch training loop returning (best_params, history).

    Per epoch: seeded shuffle, label-smoothed cross-entropy on train-mode
    forwards, backward, Adam.  The returned parameters are the snapshot
    with the best validation accuracy (ties resolve to the earliest epoch).
    A non-finite loss aborts with the offending epoch index.
    """
    tune_allocator()
    train_labels = np.asarray(train_labels, dtype=np.int64)
    val_labels = np.asarray(val_labels, dtype=np.int64)
    if train_labels.size == 0 or val_labels.size == 0:
        raise ParameterError("train: train and validation sets must be non-empty")
    if train_labels.max() >= model_config.num_classes:
        raise ParameterError("train: label outside configured class count")

    ss = np.random.SeedSequence(train_config.seed)
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in ss.spawn(2))

    # lr = 0 is the null update: nothing may change, batch-norm running
    # statistics included, so the whole loop is a stateless replay
    null_update = train_config.learning_rate == 0.0
    frozen_states = {k: s.copy() for k, s in params.bn_states.items()} if null_update else None

    history = TrainHistory()
    best = params.copy()
    best_acc = -1.0
    state = AdamState.fresh(params)
    step = 0
    n = train_labels.size
    for epoch in range(train_config.epochs):
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, train_config.batch_size):
            idx = order[start:start + train_config.batch_size]
            params.zero_grad()
            x = _batch_tensor(train_epochs, idx)
            _, logits = model_forward(x, params, model_config, "train", dropout_rng)
            loss = softmax_cross_entropy_ls(logits, train_labels[idx], train_config.eps_ls)
            loss_val = float(loss.data)
            if not math.isfinite(loss_val):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            losses.append(loss_val)
            backward(loss)
            grads = {name: t.grad for name, t in params.trainable() if t.grad is not None}
            step += 1
            if null_update:
                params.bn_states = {k: s.copy() for k, s in frozen_states.items()}
            else:
                adam_step(params, grads, state, step, train_config)
        val_acc, _ = evaluate(model_config, params, val_epochs, val_labels)
        history.train_loss.append(float(np.mean(losses)))
        history.val_accuracy.append(val_acc)
        if val_acc > best_acc:
            best_acc = val_acc
            best = params.copy()
            history.best_epoch = epoch
            history.best_val_accuracy = val_acc
    if train_config.epochs == 0:
        # no training happened: the initial parameters are the best ones
        history.best_epoch = -1
        history.best_val_accuracy = float("nan")
    return best, history


# ---------------------------------------------------------------------------
# confidence intervals and k-fold
# ---------------------------------------------------------------------------

def confidence_interval_95(fold_accuracies, use_t: bool = False):
    """(mean, half_width) with half_width = z * s / sqrt(n), s over n-1.

    ``use_t`` swaps the normal 1.96 for the Student-t quantile at n-1
    degrees of freedom.
    """
    acc = np.asarray(fold_accuracies, dtype=np.float64)
    n = acc.size
    if n < 2:
        raise ParameterError(f"confidence interval needs >= 2 folds, got {n}")
    mean = float(acc.mean())
    s = float(acc.std(ddof=1))
    if use_t:
        z = _T_975[n - 2] if (n - 1) <= len(_T_975) else 1.96
    else:
        z = 1.96
    return mean, z * s / math.sqrt(n)


@dataclass
class MetricsReport:
    per_fold_accuracy: list
    mean: float
    ci95_half_width: float
    per_epoch_history: list  # one TrainHistory dict per fold
    folds: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "per_fold_accuracy": list(self.per_fold_accuracy),
            "mean": self.mean,
            "ci95_half_width": self.ci95_half_width,
            "folds": self.folds,
            "seed": self.seed,
            "per_epoch_history": list(self.per_epoch_history),
        }


def run_kfold(model_config: ModelConfig, epochs: np.ndarray, labels: np.ndarray,
              train_config: TrainConfig, inner_val_ratio: float = 0.15) -> MetricsReport:
    """Stratified k-fold: held-out fold tests, the rest splits 85/15 train/val.

    Each fold trains from a fresh seeded init (seed + fold index); fold test
    accuracies aggregate into the 95% confidence interval.
    """
    labels = np.asarray(labels, dtype=np.int64)
    folds = stratified_kfold(labels, train_config.folds, train_config.seed)
    accuracies = []
    histories = []
    for f, test_idx in enumerate(folds):
        fold_seed = train_config.seed + f
        rest = np.setdiff1d(np.arange(labels.size), test_idx)
        tr_rel, val_rel, _ = split_train_val_test(
            labels[rest], (1.0 - inner_val_ratio, inner_val_ratio, 0.0), fold_seed)
        tr_idx, val_idx = rest[tr_rel], rest[val_rel]
        params = build_model(model_config, fold_seed)
        fold_config = replace(train_config, seed=fold_seed)
        best, history = train(model_config, params,
                              epochs[tr_idx], labels[tr_idx],
                              epochs[val_idx], labels[val_idx], fold_config)
        acc, _ = evaluate(model_config, best, epochs[test_idx], labels[test_idx])
        accuracies.append(acc)
        histories.append(history.to_dict())
    mean, half = confidence_interval_95(accuracies)
    return MetricsReport(
        per_fold_accuracy=accuracies, mean=mean, ci95_half_width=half,
        per_epoch_history=histories, folds=train_config.folds, seed=train_config.seed,
    )
