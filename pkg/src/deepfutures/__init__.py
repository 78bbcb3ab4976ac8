"""Multi-symbol intraday direction classification and strategy backtesting.

The pipeline: ingest (or synthesize) aligned 5-minute mid-prices, build
engineered features and tri-state next-interval labels, train a fully
connected classifier by mini-batch SGD with a learning-rate sweep, evaluate it
walk-forward, and simulate a one-lot buy-hold-sell strategy with the usual
performance metrics.  Everything is deterministic given a seed, at any thread
count.
"""

from . import dataset, matrixkit, network, strategy, trainer, walkforward
from .errors import (
    ConfigError,
    DataError,
    DataFormatError,
    DivergedError,
    ShapeError,
    SweepFailedError,
)

__version__ = "0.1.0"

__all__ = [
    "dataset",
    "matrixkit",
    "network",
    "strategy",
    "trainer",
    "walkforward",
    "ConfigError",
    "DataError",
    "DataFormatError",
    "DivergedError",
    "ShapeError",
    "SweepFailedError",
    "__version__",
]
