"""Walk-forward orchestration: rolling train/test windows and score collection.

Window i trains on rows [i*step, i*step + train_len) and evaluates on the
adjacent [i*step + train_len, i*step + train_len + test_len).  Each window
refits feature normalization on its own training range, runs the full
learning-rate sweep with the test range as hold-out, and records per-symbol
accuracy and macro-F1.  Consecutive test ranges overlap by test_len - step
rows; that is inherent to the protocol, not an accident.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import dataset, network as net, trainer
from .errors import ConfigError
from .seeding import STREAM_WINDOW, derive_seed

logger = logging.getLogger(__name__)

CLASS_VALUES = (-1, 0, 1)


@dataclass(frozen=True)
class WalkForwardPlan:
    train_len: int = 25_000
    test_len: int = 12_500
    step: int = 1_000
    n_windows: int = 10

    def __post_init__(self):
        for name in ("train_len", "test_len", "step", "n_windows"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def train_range(self, i: int) -> range:
        return range(i * self.step, i * self.step + self.train_len)

    def test_range(self, i: int) -> range:
        start = i * self.step + self.train_len
        return range(start, start + self.test_len)

    @property
    def required_rows(self) -> int:
        return (self.n_windows - 1) * self.step + self.train_len + self.test_len


def make_plan(
    n_rows: int,
    train_len: int = 25_000,
    test_len: int = 12_500,
    step: int = 1_000,
    n_windows: int = 10,
) -> WalkForwardPlan:
    plan = WalkForwardPlan(train_len, test_len, step, n_windows)
    if n_rows < plan.required_rows:
        raise ConfigError(
            f"walk-forward plan needs at least {plan.required_rows} rows "
            f"({n_windows} windows of {train_len}+{test_len} stepped by {step}), got {n_rows}"
        )
    return plan


@dataclass
class WindowResult:
    index: int
    chosen_gamma: float
    accuracy: np.ndarray  # per symbol
    f1: np.ndarray  # per symbol, macro over the three classes
    predictions: np.ndarray  # [test_len x n_symbols]
    report: trainer.TrainReport
    train_rows: range
    test_rows: range


def f1_score(pred: np.ndarray, truth: np.ndarray, symbol: int | None = None) -> float:
    """Macro-averaged F1 over the classes (-1, 0, +1) for one symbol.

    pred/truth are 1-D label arrays, or 2-D [n x n_symbols] with ``symbol``
    selecting the column.  Classes with zero precision and recall contribute 0.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.ndim == 2:
        if symbol is None:
            raise ConfigError("symbol index required for 2-D label matrices")
        pred = pred[:, symbol]
        truth = truth[:, symbol]
    if pred.shape != truth.shape:
        raise ConfigError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if pred.size == 0:
        raise ConfigError("cannot score an empty prediction set")

    total = 0.0
    for cls in CLASS_VALUES:
        tp = np.sum((pred == cls) & (truth == cls))
        fp = np.sum((pred == cls) & (truth != cls))
        fn = np.sum((pred != cls) & (truth == cls))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        if precision + recall > 0:
            total += 2.0 * precision * recall / (precision + recall)
    return total / len(CLASS_VALUES)


def run_window(
    frame: dataset.FeatureFrame,
    plan: WalkForwardPlan,
    index: int,
    topo: net.Topology,
    cfg: trainer.TrainConfig,
    checkpoint_dir=None,
) -> WindowResult:
    """Train and score one walk-forward window.

    Normalization statistics come from the window's training range only and
    the learning-rate sweep uses the test range as its hold-out, so the chosen
    model never sees information beyond the ranges the protocol allows.
    """
    if index >= plan.n_windows:
        raise ConfigError(f"window index {index} out of range for {plan.n_windows} windows")
    test = plan.test_range(index)
    if test.stop > frame.n_rows:
        raise ConfigError(
            f"window {index} test range ends at {test.stop} but frame has {frame.n_rows} rows"
        )
    train = plan.train_range(index)
    train_rows = np.arange(train.start, train.stop)
    test_rows = np.arange(test.start, test.stop)

    normalized = dataset.normalize(frame, train_rows)
    y = dataset.encode_one_hot(normalized.labels)
    window_cfg = replace(cfg, seed=derive_seed(cfg.seed, STREAM_WINDOW, index))

    logger.info("window %d: train [%d, %d) test [%d, %d)", index, train.start, train.stop,
                test.start, test.stop)
    report = trainer.sweep_gamma(
        normalized.x, y, normalized.labels, train_rows, test_rows, topo, window_cfg,
        checkpoint_dir=checkpoint_dir,
    )
    pred = net.predict_labels(report.chosen_params, normalized.x[test_rows])
    truth = normalized.labels[test_rows]
    accuracy, _ = trainer.classification_rate(pred, truth)
    f1 = np.array([f1_score(pred[:, s], truth[:, s]) for s in range(frame.n_symbols)])
    return WindowResult(
        index=index,
        chosen_gamma=report.chosen_gamma,
        accuracy=accuracy,
        f1=f1,
        predictions=pred,
        report=report,
        train_rows=train,
        test_rows=test,
    )


@dataclass
class MetricSummary:
    """Distribution of one score across windows."""

    mean: float
    std: float
    median: float
    q1: float
    q3: float

    @classmethod
    def of(cls, values: np.ndarray) -> "MetricSummary":
        q1, median, q3 = np.percentile(values, [25, 50, 75])
        return cls(
            mean=float(values.mean()),
            std=float(values.std()),
            median=float(median),
            q1=float(q1),
            q3=float(q3),
        )

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
        }


@dataclass
class WalkForwardSummary:
    symbols: list[str]
    accuracy: list[MetricSummary]  # per symbol, across windows
    f1: list[MetricSummary]
    mean_accuracy: float  # cross-symbol mean of the per-symbol means
    std_accuracy: float  # cross-symbol std of the per-symbol means
    mean_f1: float
    std_f1: float

    def to_json_dict(self) -> dict:
        return {
            "symbols": list(self.symbols),
            "accuracy": {s: m.to_json_dict() for s, m in zip(self.symbols, self.accuracy)},
            "f1": {s: m.to_json_dict() for s, m in zip(self.symbols, self.f1)},
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "mean_f1": self.mean_f1,
            "std_f1": self.std_f1,
        }


def aggregate_arrays(symbols: list[str], acc: np.ndarray, f1: np.ndarray) -> WalkForwardSummary:
    """Summary from stacked [n_windows x n_symbols] accuracy and F1 arrays."""
    if acc.size == 0:
        raise ConfigError("aggregate needs at least one window result")
    acc_means = acc.mean(axis=0)
    f1_means = f1.mean(axis=0)
    return WalkForwardSummary(
        symbols=list(symbols),
        accuracy=[MetricSummary.of(acc[:, s]) for s in range(acc.shape[1])],
        f1=[MetricSummary.of(f1[:, s]) for s in range(f1.shape[1])],
        mean_accuracy=float(acc_means.mean()),
        std_accuracy=float(acc_means.std()),
        mean_f1=float(f1_means.mean()),
        std_f1=float(f1_means.std()),
    )


def aggregate(symbols: list[str], results: list[WindowResult]) -> WalkForwardSummary:
    """Across-window score distributions per symbol, plus cross-symbol stats."""
    if not results:
        raise ConfigError("aggregate needs at least one window result")
    acc = np.stack([r.accuracy for r in results])  # [windows x symbols]
    f1 = np.stack([r.f1 for r in results])
    return aggregate_arrays(symbols, acc, f1)
