"""AdaDelta optimisation, the training loop, evaluation and grid search."""
from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .data import EncodedData
from .errors import ConfigError, DomainError, NumericError
from .model import WEIGHT_NAMES, Artifacts, ModelConfig, backward_batch, forward_batch, init_params
from .tensor import Parameter

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


def cross_entropy(probs, label: int) -> float:
    """-ln(probs[label]) with the probability clamped to [1e-12, 1]."""
    if label not in (0, 1):
        raise DomainError(f"label must be 0 or 1, got {label!r}")
    return -math.log(min(max(float(probs[label]), PROB_FLOOR), 1.0))


def cross_entropy_batch(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    picked = probs[np.arange(len(labels)), labels].astype(np.float64)
    return -np.log(np.clip(picked, PROB_FLOOR, 1.0))


@dataclass(frozen=True)
class AdaDeltaConfig:
    rho: float = 0.95
    epsilon: float = 1e-6
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0 or self.epsilon <= 0 or self.scale <= 0:
            raise ConfigError(f"invalid AdaDelta settings {self}")


def adadelta_step(p: Parameter, cfg: AdaDeltaConfig, name: str = "parameter") -> Parameter:
    """In-place AdaDelta update of ``p``; the gradient is zeroed afterwards."""
    g = p.grad
    if not np.all(np.isfinite(g)):
        raise NumericError(f"non-finite gradient for {name}")
    rho = cfg.rho
    p.accum_sq_grad *= rho
    p.accum_sq_grad += (1.0 - rho) * g * g
    delta = -np.sqrt(p.accum_sq_delta + cfg.epsilon) / np.sqrt(p.accum_sq_grad + cfg.epsilon) * g
    p.accum_sq_delta *= rho
    p.accum_sq_delta += (1.0 - rho) * delta * delta
    p.value += cfg.scale * delta
    p.zero_grad()
    return p


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    patience: int = 5
    rho: float = 0.95
    epsilon: float = 1e-6
    oov_range: float = 0.25
    min_count: int = 1
    vocab_scope: str = "train"
    embeddings: str = ""

    def problems(self) -> list[str]:
        out = []
        if self.epochs < 1:
            out.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            out.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 0:
            out.append(f"patience must be >= 0, got {self.patience}")
        if not 0.0 < self.rho < 1.0:
            out.append(f"rho must lie in (0, 1), got {self.rho}")
        if self.epsilon <= 0:
            out.append(f"epsilon must be > 0, got {self.epsilon}")
        if self.oov_range <= 0:
            out.append(f"oov_range must be > 0, got {self.oov_range}")
        if self.min_count < 1:
            out.append(f"min_count must be >= 1, got {self.min_count}")
        if self.vocab_scope not in ("train", "all"):
            out.append(f"vocab_scope must be 'train' or 'all', got {self.vocab_scope!r}")
        return out


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float

    def tsv(self) -> str:
        return f"{self.epoch}\t{self.train_loss:.6f}\t{self.train_acc:.6f}\t{self.val_loss:.6f}\t{self.val_acc:.6f}"


def write_metrics_log(history, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for m in history:
            fh.write(m.tsv() + "\n")


def l2_penalty(params, l2: float) -> float:
    if l2 == 0:
        return 0.0
    return l2 * sum(float(np.sum(params[n].astype(np.float64) ** 2)) for n in WEIGHT_NAMES if n in params)


def loss_and_grads(params, ids, lengths, labels, config: ModelConfig, training: bool = False, rng=None):
    """Mean cross-entropy plus the L2 term, and its gradient for every tensor."""
    cache = forward_batch(params, ids, lengths, config, training, rng)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    loss = float(cross_entropy_batch(cache.probs, labels).mean()) + l2_penalty(params, config.l2)
    dlogits = cache.probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    grads = backward_batch(params, cache, dlogits / n, config)
    if config.l2:
        for name in WEIGHT_NAMES:
            if name in grads:
                grads[name] += 2.0 * config.l2 * params[name]
    return loss, grads, cache


@dataclass
class EvalResult:
    accuracy: float
    mean_loss: float
    confusion: dict[str, int]  # tn, fp, fn, tp with label 1 = sarcastic

    def report(self) -> str:
        c = self.confusion
        return "\n".join([
            f"accuracy: {self.accuracy:.6f}",
            f"mean_loss: {self.mean_loss:.6f}",
            f"true_negative: {c['tn']}",
            f"false_positive: {c['fp']}",
            f"false_negative: {c['fn']}",
            f"true_positive: {c['tp']}",
        ])


def _batches(n: int, batch_size: int, order=None):
    order = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _slice(data: EncodedData, idx):
    lengths = data.lengths[idx]
    width = int(lengths.max())
    return data.ids[idx, :width], lengths, data.labels[idx]


def evaluate(data: EncodedData, params, config: ModelConfig, batch_size: int = 256) -> EvalResult:
    if len(data) == 0:
        raise DomainError("cannot evaluate an empty partition")
    preds = np.empty(len(data), dtype=np.int64)
    losses = np.empty(len(data), dtype=np.float64)
    for idx in _batches(len(data), batch_size):
        ids, lengths, labels = _slice(data, idx)
        probs = forward_batch(params, ids, lengths, config, training=False).probs
        preds[idx] = np.argmax(probs, axis=1)
        losses[idx] = cross_entropy_batch(probs, labels)
    y = data.labels
    confusion = {
        "tn": int(np.sum((y == 0) & (preds == 0))),
        "fp": int(np.sum((y == 0) & (preds == 1))),
        "fn": int(np.sum((y == 1) & (preds == 0))),
        "tp": int(np.sum((y == 1) & (preds == 1))),
    }
    return EvalResult(float(np.mean(preds == y)), float(losses.mean()), confusion)


def evaluate_artifacts(data: EncodedData, artifacts: Artifacts) -> EvalResult:
    return evaluate(data, artifacts.params, artifacts.config)


@dataclass
class FitResult:
    params: dict[str, np.ndarray]
    history: list[EpochMetrics]
    best_epoch: int
    diverged: bool = False

    @property
    def best_val_acc(self) -> float:
        if not self.history or self.best_epoch < 1:
            return 0.0
        return self.history[self.best_epoch - 1].val_acc


def fit(train: EncodedData, val: EncodedData, config: ModelConfig, embedding_table: np.ndarray,
        adadelta: AdaDeltaConfig | None = None, epochs: int = 20, batch_size: int = 64, patience: int = 5,
        params: dict[str, np.ndarray] | None = None,
        on_batch: Callable[[np.ndarray], None] | None = None) -> FitResult:
    """Mini-batch AdaDelta training with best-val-accuracy checkpointing and
    early stopping after ``patience`` epochs without improvement.

    All randomness (init, shuffling, dropout) derives from ``config.seed``.
    """
    if len(train) == 0 or len(val) == 0:
        raise DomainError("fit needs non-empty train and validation sets")
    config.validate()
    if adadelta is None:
        adadelta = AdaDeltaConfig(scale=config.learning_rate)
    if params is None:
        params = init_params(config, embedding_table)
    state = {name: Parameter(value) for name, value in params.items()}
    values = {name: p.value for name, p in state.items()}
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])

    history: list[EpochMetrics] = []
    best = {k: v.copy() for k, v in values.items()}
    best_acc, best_epoch, stale = -1.0, 0, 0
    for epoch in range(1, epochs + 1):
        order = shuffle_rng.permutation(len(train))
        for idx in _batches(len(train), batch_size, order):
            if on_batch is not None:
                on_batch(train.record_ids[idx])
            ids, lengths, labels = _slice(train, idx)
            loss, grads, _ = loss_and_grads(values, ids, lengths, labels, config, training=True, rng=dropout_rng)
            if not math.isfinite(loss):
                log.warning("non-finite loss in epoch %d; stopping", epoch)
                return FitResult(best, history, best_epoch, diverged=True)
            try:
                for name, p in state.items():
                    p.grad[...] = grads[name]
                    adadelta_step(p, adadelta, name)
            except NumericError as exc:
                log.warning("%s in epoch %d; stopping", exc, epoch)
                return FitResult(best, history, best_epoch, diverged=True)
        tr = evaluate(train, values, config)
        va = evaluate(val, values, config)
        history.append(EpochMetrics(epoch, tr.mean_loss, tr.accuracy, va.mean_loss, va.accuracy))
        log.info("epoch %d %s", epoch, history[-1].tsv())
        if va.accuracy > best_acc:
            best_acc, best_epoch, stale = va.accuracy, epoch, 0
            best = {k: v.copy() for k, v in values.items()}
        else:
            stale += 1
            if stale > patience:
                break
    return FitResult(best, history, best_epoch)


# -- grid search -------------------------------------------------------------

DEFAULT_GRID = {
    "learning_rate": [0.5, 1.0],
    "l2": [0.0, 1e-5, 1e-4],
    "out_channels": [64, 128],
    "filter_width": [2, 3, 4],
    "hidden_units": [64, 128],
    "dropout": [0.2, 0.5],
}


@dataclass
class GridRow:
    cell: int
    overrides: dict
    val_accuracy: float
    best_epoch: int


@dataclass
class GridResult:
    rows: list[GridRow]  # ranked
    best_config: ModelConfig
    best_fit: FitResult = field(repr=False)

    def table(self) -> str:
        keys = list(self.rows[0].overrides) if self.rows else []
        lines = ["\t".join(["rank", "cell", *keys, "val_acc", "best_epoch"])]
        for rank, row in enumerate(self.rows, start=1):
            vals = [str(row.overrides[k]) for k in keys]
            lines.append("\t".join([str(rank), str(row.cell), *vals, f"{row.val_accuracy:.6f}", str(row.best_epoch)]))
        return "\n".join(lines) + "\n"


def grid_cells(grid: dict, budget: int | None = None) -> list[dict]:
    """Cartesian product in key order, truncated to ``budget`` cells."""
    if not grid:
        raise ConfigError("grid search needs at least one dimension")
    if budget is not None and budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    keys = list(grid)
    cells = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    return cells if budget is None else cells[:budget]


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SARCNET_THREADS", "1")))
    except ValueError:
        raise ConfigError("SARCNET_THREADS must be an integer") from None


def grid_search(grid: dict, train: EncodedData, val: EncodedData, base: ModelConfig, embedding_table: np.ndarray,
                train_cfg: TrainConfig | None = None, budget: int | None = None) -> GridResult:
    """Train one model per grid cell with the base seed; rank by validation accuracy."""
    train_cfg = train_cfg or TrainConfig()
    cells = grid_cells(grid, budget)
    configs = [replace(base, **cell).validate() for cell in cells]

    def run(cfg):
        return fit(train, val, cfg, embedding_table,
                   AdaDeltaConfig(train_cfg.rho, train_cfg.epsilon, cfg.learning_rate),
                   train_cfg.epochs, train_cfg.batch_size, train_cfg.patience)

    with ThreadPoolExecutor(max_workers=min(worker_count(), len(configs))) as pool:
        fits = list(pool.map(run, configs))
    rows = [GridRow(i, cells[i], f.best_val_acc, f.best_epoch) for i, f in enumerate(fits)]
    rows.sort(key=lambda r: (-r.val_accuracy, r.cell))
    top = rows[0].cell
    return GridResult(rows, configs[top], fits[top])
