"""Mini-batch SGD training with a learning-rate sweep and halving heuristic.

Each epoch trains on a with-replacement uniform subsample of the training rows
(the epoch subset), split into fixed-size mini-batches; the reported epoch
loss is the cross-entropy over that subset after the epoch's updates.  When
enabled, the halving rule divides the learning rate by 2 after any epoch whose
loss failed to decrease (optionally the literal variant: halve when the loss
failed to increase).

The sweep trains one candidate per grid value from a fresh, identically-seeded
initialization and picks the candidate with the best hold-out classification
rate (ties go to the smaller learning rate).  Given the same seed, config, and
data, every result is bitwise reproducible at any thread count.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import matrixkit as mk
from . import network as net
from .errors import ConfigError, DivergedError, SweepFailedError
from .seeding import STREAM_EPOCH, STREAM_INIT, derive_seed, seed_sequence

logger = logging.getLogger(__name__)

# rows per forward pass when evaluating epoch loss; fixed so chunking never
# depends on thread count or data size
EVAL_CHUNK = 4096

DEFAULT_GAMMA_GRID = tuple(round(i / 10, 1) for i in range(1, 11))


@dataclass(frozen=True)
class TrainConfig:
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    epochs: int = 50
    epoch_sample: int | None = None  # rows drawn per epoch; None = train-range size
    minibatch_size: int = 256
    seed: int = 0
    halving_enabled: bool = True
    halving_literal: bool = False  # halve on non-increase instead of non-decrease
    early_stop_tau: float | None = None

    def __post_init__(self):
        if not self.gamma_grid:
            raise ConfigError("gamma_grid must be non-empty")
        if any(g <= 0 for g in self.gamma_grid):
            raise ConfigError(f"all gamma values must be > 0, got {self.gamma_grid}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.minibatch_size < 1:
            raise ConfigError("minibatch_size must be >= 1")
        if self.epoch_sample is not None and self.epoch_sample < self.minibatch_size:
            raise ConfigError(
                f"epoch_sample {self.epoch_sample} smaller than "
                f"minibatch_size {self.minibatch_size}"
            )


@dataclass
class TrainTrace:
    """Per-epoch record of one training run."""

    losses: list[float] = field(default_factory=list)
    gammas: list[float] = field(default_factory=list)  # rate in effect each epoch
    halving_epochs: list[int] = field(default_factory=list)
    stopped_early: bool = False


@dataclass
class GammaResult:
    gamma: float
    trace: TrainTrace | None
    holdout_rate: float | None
    per_symbol_rate: np.ndarray | None
    error: str | None = None
    checkpoint_path: str | None = None


@dataclass
class TrainReport:
    candidates: list[GammaResult]
    chosen_gamma: float
    chosen_params: net.NetworkParams

    def to_json_dict(self) -> dict:
        out = {"chosen_gamma": self.chosen_gamma, "candidates": []}
        for c in self.candidates:
            entry: dict = {"gamma": c.gamma}
            if c.error is not None:
                entry["error"] = c.error
            else:
                entry["losses"] = list(c.trace.losses)
                entry["gamma_trace"] = list(c.trace.gammas)
                entry["halving_epochs"] = list(c.trace.halving_epochs)
                entry["stopped_early"] = c.trace.stopped_early
                entry["holdout_rate"] = c.holdout_rate
                entry["per_symbol_rate"] = [float(r) for r in c.per_symbol_rate]
                if c.checkpoint_path is not None:
                    entry["checkpoint"] = c.checkpoint_path
            out["candidates"].append(entry)
        return out


def _should_halve(prev_loss: float, loss: float, literal: bool) -> bool:
    return loss <= prev_loss if literal else loss >= prev_loss


def halving_events(losses: list[float], literal: bool = False) -> list[int]:
    """Epoch indices at which the halving rule fires for a given loss trace."""
    return [
        e
        for e in range(1, len(losses))
        if _should_halve(losses[e - 1], losses[e], literal)
    ]


def _epoch_rows(rows: np.ndarray, cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    n_train = len(rows)
    n_epoch = cfg.epoch_sample if cfg.epoch_sample is not None else n_train
    if not cfg.minibatch_size <= n_epoch <= n_train:
        raise ConfigError(
            f"need minibatch_size <= epoch_sample <= train size, got "
            f"{cfg.minibatch_size} / {n_epoch} / {n_train}"
        )
    return rows[rng.integers(0, n_train, size=n_epoch)]


def _mean_loss(params: net.NetworkParams, x: np.ndarray, y: np.ndarray, rows: np.ndarray) -> float:
    """Cross-entropy per observation per symbol over the given rows."""
    total = 0.0
    for start in range(0, len(rows), EVAL_CHUNK):
        chunk = rows[start : start + EVAL_CHUNK]
        cache = net.forward(params, x[chunk])
        total += net.cross_entropy(cache.output, y[:, chunk]) * len(chunk)
    return total / len(rows)


def sgd_epoch(
    params: net.NetworkParams,
    x: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    cfg: TrainConfig,
    gamma: float,
    rng: np.random.Generator,
) -> float:
    """One epoch of mini-batch SGD over a fresh with-replacement subsample.

    Updates params in place (w -= gamma * grad via axpy, nothing else) and
    returns the epoch subset's cross-entropy after the updates.
    """
    if x.shape[1] != params.weights[0].shape[0]:
        raise ConfigError(
            f"frame width {x.shape[1]} does not match network input "
            f"{params.weights[0].shape[0]}"
        )
    epoch_rows = _epoch_rows(np.asarray(rows), cfg, rng)
    b = cfg.minibatch_size
    for start in range(0, len(epoch_rows), b):
        batch = epoch_rows[start : start + b]
        cache = net.forward(params, x[batch])
        grads = net.backward(params, cache, y[:, batch])
        for l in range(len(params.weights)):
            mk.axpy_inplace(params.weights[l], -gamma, grads.weights[l])
            mk.axpy_inplace(params.biases[l], -gamma, grads.biases[l])
    loss = _mean_loss(params, x, y, epoch_rows)
    if not np.isfinite(loss):
        raise DivergedError(gamma)
    return loss


def train_with_halving(
    params: net.NetworkParams,
    x: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    cfg: TrainConfig,
    gamma: float,
) -> TrainTrace:
    """Run the full epoch loop, halving gamma whenever the loss stalls."""
    rng = np.random.default_rng(seed_sequence(cfg.seed, STREAM_EPOCH))
    trace = TrainTrace()
    current = gamma
    for epoch in range(cfg.epochs):
        trace.gammas.append(current)
        try:
            loss = sgd_epoch(params, x, y, rows, cfg, current, rng)
        except DivergedError:
            raise DivergedError(gamma, epoch) from None
        trace.losses.append(loss)
        if (
            cfg.halving_enabled
            and epoch > 0
            and _should_halve(trace.losses[epoch - 1], loss, cfg.halving_literal)
        ):
            current = current / 2.0
            trace.halving_epochs.append(epoch)
            logger.debug("halved learning rate to %g after epoch %d", current, epoch)
        if cfg.early_stop_tau is not None and loss < cfg.early_stop_tau:
            trace.stopped_early = True
            break
    return trace


def classification_rate(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, float]:
    """Fraction of matching labels per symbol, plus the cross-symbol mean."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ConfigError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if pred.size == 0:
        raise ConfigError("cannot score an empty prediction set")
    per_symbol = (pred == truth).mean(axis=0)
    return per_symbol, float(per_symbol.mean())


def sweep_gamma(
    x: np.ndarray,
    y: np.ndarray,
    labels: np.ndarray,
    train_rows: np.ndarray,
    holdout_rows: np.ndarray,
    topo: net.Topology,
    cfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
) -> TrainReport:
    """Train one candidate per learning rate and select by hold-out accuracy.

    Every candidate starts from the same seeded initialization and sees the
    same epoch subsamples, so the sweep isolates the learning rate.  When
    checkpoint_dir is given, each candidate's final parameters are written
    there as gamma_<rate>.dfn and referenced from the report.
    """
    train_rows = np.asarray(train_rows)
    holdout_rows = np.asarray(holdout_rows)
    if np.intersect1d(train_rows, holdout_rows).size:
        raise ConfigError("train and holdout row ranges must be disjoint")
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    init_seed = derive_seed(cfg.seed, STREAM_INIT)
    candidates: list[GammaResult] = []
    best: tuple[float, float, net.NetworkParams] | None = None  # (rate, gamma, params)
    for gamma in cfg.gamma_grid:
        params = net.init_params(topo, init_seed)
        try:
            trace = train_with_halving(params, x, y, train_rows, cfg, gamma)
        except DivergedError as exc:
            logger.warning("candidate gamma=%g diverged: %s", gamma, exc)
            candidates.append(GammaResult(gamma, None, None, None, error=str(exc)))
            continue
        pred = net.predict_labels(params, x[holdout_rows])
        per_symbol, rate = classification_rate(pred, labels[holdout_rows])
        checkpoint_path = None
        if checkpoint_dir is not None:
            path = checkpoint_dir / f"gamma_{gamma:g}.dfn"
            net.save_checkpoint(params, path)
            checkpoint_path = str(path)
        candidates.append(
            GammaResult(gamma, trace, rate, per_symbol, checkpoint_path=checkpoint_path)
        )
        if best is None or rate > best[0]:
            best = (rate, gamma, params)
        logger.info("gamma=%g hold-out rate %.4f", gamma, rate)

    if best is None:
        raise SweepFailedError({c.gamma: c.error or "unknown" for c in candidates})
    return TrainReport(candidates=candidates, chosen_gamma=best[1], chosen_params=best[2])
