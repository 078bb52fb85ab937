"""Dataset splitting, Adam, cross-entropy, the epoch loop, and LR scheduling.

The split is a seeded shuffle followed by stratified slicing: global sizes
are exact (80/10/10 of N) and every class lands within one sample of its
proportional share in each of the three parts. Adam uses the standard
bias-corrected moment updates; the learning rate halves after three epochs
without validation-loss improvement (reduce-on-plateau), floored at min_lr.

Per-epoch metrics are recomputed over the full train and validation sets in
inference mode at epoch end, so reported accuracies are exactly (correct
predictions) / (set size).
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyClass, ModelIncompatible, NonFiniteGradient
from .features import AggregatedFeature
from .network import (
    NUM_CLASSES,
    NetworkParams,
    backward,
    forward,
    init_params,
)

ADAM_MAGIC = b"DIVADAM1"


@dataclass
class TrainingConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    epochs: int = 35
    train_fraction: float = 0.80
    test_fraction: float = 0.10
    val_fraction: float = 0.10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    plateau_factor: float = 0.5
    plateau_patience: int = 3
    plateau_min_delta: float = 1e-4
    min_lr: float = 1e-6

    def __post_init__(self) -> None:
        total = self.train_fraction + self.test_fraction + self.val_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {total}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        for name in ("learning_rate", "beta1", "beta2", "plateau_factor"):
            rate = getattr(self, name)
            if not 0 < rate <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {rate}")


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the step counter and live rate."""

    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    learning_rate: float


def init_adam_state(params: NetworkParams, config: TrainingConfig) -> AdamState:
    return AdamState(
        m_weights=[np.zeros_like(w) for w in params.weights],
        m_biases=[np.zeros_like(b) for b in params.biases],
        v_weights=[np.zeros_like(w) for w in params.weights],
        v_biases=[np.zeros_like(b) for b in params.biases],
        lr=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
    )


def adam_step(
    params: NetworkParams, grads: NetworkParams, state: AdamState
) -> tuple[NetworkParams, AdamState]:
    """One Adam update, in place: theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)."""
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient contains NaN or infinity")

    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for tensors, moments_m, moments_v, gs in (
        (params.weights, state.m_weights, state.v_weights, grads.weights),
        (params.biases, state.m_biases, state.v_biases, grads.biases),
    ):
        for theta, m, v, g in zip(tensors, moments_m, moments_v, gs):
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            theta -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state


def one_hot(labels: np.ndarray, num_classes: int = NUM_CLASSES) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros(labels.shape + (num_classes,))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def cross_entropy(probabilities: np.ndarray, targets: np.ndarray) -> float:
    """Mean of -sum_j t_j * log(p_j) with p clamped to >= 1e-12 before the log."""
    p = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.ndim == 1:
        p, t = p[None, :], t[None, :]
    per_sample = -np.sum(t * np.log(np.maximum(p, 1e-12)), axis=1)
    return float(per_sample.mean())


def _largest_remainder(quotas: np.ndarray, target: int) -> np.ndarray:
    """Integer counts summing to target, each within floor/ceil of its quota."""
    base = np.floor(quotas).astype(np.int64)
    leftover = target - int(base.sum())
    order = np.argsort(-(quotas - base), kind="stable")
    base[order[:leftover]] += 1
    return base


def _stratified_counts(class_sizes: np.ndarray, config: TrainingConfig) -> np.ndarray:
    """Per-class (train, test, val) counts: exact global totals, +-1 per class.

    Test and val counts start from largest-remainder apportionment; a repair
    pass then shifts single test/val slots between classes until every class's
    train share also sits within one sample of its quota.
    """
    n_total = int(class_sizes.sum())
    n_test = int(round(n_total * config.test_fraction))
    n_val = int(round(n_total * config.val_fraction))

    test = _largest_remainder(class_sizes * config.test_fraction, n_test)
    val = _largest_remainder(class_sizes * config.val_fraction, n_val)
    q_test = class_sizes * config.test_fraction
    q_val = class_sizes * config.val_fraction

    # combined test+val deviation beyond one sample means the train share of
    # that class is off by more than one; shift single slots between classes
    # within one column, choosing the column by the counterparty's deviation
    # so per-column deviations stay inside (-1, 1)
    for _ in range(len(class_sizes) * 4):
        dev_test = test - q_test
        dev_val = val - q_val
        dev = dev_test + dev_val
        worst = int(np.argmax(np.abs(dev)))
        if abs(dev[worst]) <= 1.0 + 1e-9:
            break
        if dev[worst] > 0:
            other = int(np.argmin(dev))
            col = test if dev_test[other] <= dev_val[other] else val
            col[worst] -= 1
            col[other] += 1
        else:
            other = int(np.argmax(dev))
            col = test if dev_test[other] >= dev_val[other] else val
            col[other] -= 1
            col[worst] += 1

    train = class_sizes - test - val
    return np.stack([train, test, val], axis=1)


def split_dataset(
    features: list[AggregatedFeature],
    config: TrainingConfig,
    require_all_labels: bool = True,
) -> tuple[list[AggregatedFeature], list[AggregatedFeature], list[AggregatedFeature]]:
    """Seeded shuffle + stratified slicing into (train, test, validation)."""
    if len(features) < 10:
        raise DataError(f"need at least 10 samples to split, got {len(features)}")
    labels = []
    for rec in features:
        if rec.label is None:
            raise DataError(f"record {rec.source_id!r} has no label, cannot split")
        labels.append(rec.label)
    present = sorted(set(labels))
    if require_all_labels:
        missing = sorted(set(range(NUM_CLASSES)) - set(present))
        if missing:
            raise EmptyClass(f"no samples for label(s) {missing}")

    rng = np.random.default_rng([config.seed, 0])
    order = rng.permutation(len(features))

    by_label: dict[int, list[int]] = {lab: [] for lab in present}
    for idx in order:
        by_label[labels[idx]].append(int(idx))

    class_sizes = np.array([len(by_label[lab]) for lab in present], dtype=np.int64)
    counts = _stratified_counts(class_sizes, config)

    train, test, val = [], [], []
    for lab, (n_tr, n_te, n_va) in zip(present, counts):
        members = by_label[lab]
        train.extend(members[:n_tr])
        test.extend(members[n_tr : n_tr + n_te])
        val.extend(members[n_tr + n_te : n_tr + n_te + n_va])
    return (
        [features[i] for i in train],
        [features[i] for i in test],
        [features[i] for i in val],
    )


@dataclass
class PlateauScheduler:
    """Halve the rate after ``patience`` epochs without val-loss improvement."""

    lr: float
    factor: float = 0.5
    patience: int = 3
    min_delta: float = 1e-4
    min_lr: float = 1e-6
    best: float = float("inf")
    bad_epochs: int = 0

    def update(self, val_loss: float) -> float:
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.min_lr, self.lr * self.factor)
                self.bad_epochs = 0
        return self.lr


def reduce_lr_on_plateau(val_losses: list[float], config: TrainingConfig) -> float:
    """Replay a validation-loss history; returns the rate in effect after it."""
    if not val_losses:
        raise ValueError("need at least one completed epoch")
    sched = PlateauScheduler(
        lr=config.learning_rate,
        factor=config.plateau_factor,
        patience=config.plateau_patience,
        min_delta=config.plateau_min_delta,
        min_lr=config.min_lr,
    )
    for loss in val_losses:
        sched.update(loss)
    return sched.lr


def _dataset_arrays(records: list[AggregatedFeature]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([rec.vector for rec in records])
    y = np.array([rec.label for rec in records], dtype=np.int64)
    return x, y


def _evaluate_arrays(params: NetworkParams, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    probs, _ = forward(x, params, mode="infer")
    loss = cross_entropy(probs, one_hot(y))
    acc = float(np.mean(np.argmax(probs, axis=1) == y))
    return loss, acc


def train(
    features: list[AggregatedFeature],
    config: TrainingConfig | None = None,
    require_all_labels: bool = True,
    checkpoint_every: int | None = None,
    checkpoint_dir=None,
) -> tuple[NetworkParams, list[EpochMetrics]]:
    """Full training run; returns final parameters and the per-epoch history."""
    from .network import save_model  # local to keep module import light

    config = config or TrainingConfig()
    train_set, _, val_set = split_dataset(features, config, require_all_labels)
    x_train, y_train = _dataset_arrays(train_set)
    x_val, y_val = _dataset_arrays(val_set)
    t_train = one_hot(y_train)

    params = init_params(config.seed)
    state = init_adam_state(params, config)
    sched = PlateauScheduler(
        lr=config.learning_rate,
        factor=config.plateau_factor,
        patience=config.plateau_patience,
        min_delta=config.plateau_min_delta,
        min_lr=config.min_lr,
    )
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])

    history: list[EpochMetrics] = []
    n = x_train.shape[0]
    for epoch in range(1, config.epochs + 1):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = perm[start : start + config.batch_size]
            _, cache = forward(x_train[batch], params, mode="train", rng=dropout_rng)
            grads = backward(params, cache, t_train[batch])
            adam_step(params, grads, state)

        lr_in_effect = state.lr
        train_loss, train_acc = _evaluate_arrays(params, x_train, y_train)
        val_loss, val_acc = _evaluate_arrays(params, x_val, y_val)
        history.append(
            EpochMetrics(epoch, train_loss, train_acc, val_loss, val_acc, lr_in_effect)
        )
        state.lr = sched.update(val_loss)

        if checkpoint_every and checkpoint_dir is not None and epoch % checkpoint_every == 0:
            stem = os.path.join(str(checkpoint_dir), f"checkpoint_epoch{epoch:03d}")
            save_model(params, stem + ".model")
            save_adam_state(state, stem + ".adam")
    return params, history


def write_metrics_csv(history: list[EpochMetrics], path) -> None:
    """CSV history: epoch,train_loss,train_acc,val_loss,val_acc,lr."""
    with open(path, "w", newline="") as fh:
        fh.write("epoch,train_loss,train_acc,val_loss,val_acc,lr\n")
        for m in history:
            fh.write(
                f"{m.epoch},{m.train_loss:.17g},{m.train_acc:.17g},"
                f"{m.val_loss:.17g},{m.val_acc:.17g},{m.learning_rate:.17g}\n"
            )


# --- optimizer-state sidecar, same conventions as the model file ---

def save_adam_state(state: AdamState, path) -> None:
    parts = [struct.pack("<BQd", 1, state.t, state.lr)]
    for arrs in (state.m_weights, state.m_biases, state.v_weights, state.v_biases):
        for a in arrs:
            parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(ADAM_MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def read_adam_state(path, params: NetworkParams, config: TrainingConfig) -> AdamState:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != ADAM_MAGIC:
        raise ModelIncompatible(f"{path}: not an optimizer sidecar (bad magic)")
    payload, (checksum,) = raw[8:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) != checksum:
        raise ModelIncompatible(f"{path}: checksum mismatch, file corrupt")
    version, t, lr = struct.unpack_from("<BQd", payload, 0)
    if version != 1:
        raise ModelIncompatible(f"{path}: unsupported sidecar version {version}")
    pos = struct.calcsize("<BQd")
    state = init_adam_state(params, config)
    state.t, state.lr = t, lr
    for arrs in (state.m_weights, state.m_biases, state.v_weights, state.v_biases):
        for i, a in enumerate(arrs):
            flat = np.frombuffer(payload, dtype="<f8", count=a.size, offset=pos)
            arrs[i] = flat.reshape(a.shape).copy()
            pos += 8 * a.size
    if pos != len(payload):
        raise ModelIncompatible(f"{path}: payload size mismatch")
    return state
