"""Buy-hold-sell strategy simulation and performance metrics.

The strategy holds exactly the position the label dictates: long one lot on
+1, flat on 0, short one lot on -1.  A label set at time t earns the move from
t to t+1, filled at mid with no transaction costs.  P&L is tracked in dollars
(contract size converts price points to dollars); margin fields are carried
for reporting but never force liquidation.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

TRADING_DAYS_PER_YEAR = 252
DEFAULT_INITIAL_CASH = 100_000.0


@dataclass(frozen=True)
class ContractSpec:
    symbol: str
    initial_margin: float
    maintenance_margin: float
    contract_size: float

    def __post_init__(self):
        for name in ("initial_margin", "maintenance_margin", "contract_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{self.symbol}: {name} must be > 0")


@dataclass
class EquityCurve:
    """Cumulative unrealized P&L path of one symbol's simulation.

    positions[i] is the lot position held over the interval starting at
    timestamps[i] (the last entry repeats the final held position); pnl[i] is
    the cumulative dollar P&L at timestamps[i], with pnl[0] == 0.
    """

    timestamps: np.ndarray
    positions: np.ndarray
    pnl: np.ndarray
    initial_cash: float = DEFAULT_INITIAL_CASH


def simulate(
    timestamps: np.ndarray,
    prices: np.ndarray,
    labels: np.ndarray,
    spec: ContractSpec,
    initial_cash: float = DEFAULT_INITIAL_CASH,
) -> EquityCurve:
    """Run the one-lot buy-hold-sell strategy over an aligned price/label path.

    labels has one entry per interval (len(prices) - 1): the position taken at
    t and held until t+1.  The P&L increment over that interval is
    position * contract_size * (p[t+1] - p[t]).
    """
    timestamps = np.asarray(timestamps)
    prices = np.asarray(prices, dtype=np.float64)
    labels = np.asarray(labels)
    if prices.ndim != 1 or timestamps.shape != prices.shape:
        raise DataError(
            f"prices and timestamps must be aligned 1-D series, got "
            f"{prices.shape} and {timestamps.shape}"
        )
    if labels.shape != (len(prices) - 1,):
        raise DataError(
            f"need one label per interval: {len(prices) - 1} intervals but "
            f"{labels.shape} labels"
        )
    if initial_cash <= 0:
        raise ConfigError("initial_cash must be > 0")
    if labels.size and not np.isin(labels, (-1, 0, 1)).all():
        raise DataError("labels must be in {-1, 0, +1}")

    increments = labels * spec.contract_size * np.diff(prices)
    pnl = np.concatenate(([0.0], np.cumsum(increments)))
    if labels.size:
        positions = np.concatenate((labels, labels[-1:])).astype(np.int64)
    else:
        positions = np.zeros(1, dtype=np.int64)
    return EquityCurve(
        timestamps=timestamps, positions=positions, pnl=pnl, initial_cash=initial_cash
    )


def perfect_foresight_labels(prices: np.ndarray) -> np.ndarray:
    """Sign of each next move; drives the upper-bound strategy variant."""
    return np.sign(np.diff(np.asarray(prices, dtype=np.float64))).astype(np.int64)


def daily_returns(curve: EquityCurve, initial_cash: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-calendar-day P&L changes divided by the fixed initial cash.

    Returns (dates, returns) over the days present in the curve; a day with no
    P&L movement still contributes a 0 entry.
    """
    if len(curve.pnl) == 0:
        raise DataError("empty equity curve")
    days = curve.timestamps.astype("datetime64[D]")
    unique_days, first_idx = np.unique(days, return_index=True)
    # index of the last row of each day = one before the next day's first row
    day_ends = np.append(first_idx[1:] - 1, len(days) - 1)
    end_pnl = curve.pnl[day_ends]
    deltas = np.diff(np.concatenate(([0.0], end_pnl)))
    return unique_days, deltas / initial_cash


def sharpe_annualized(daily: np.ndarray) -> float | None:
    """Annualized mean/std of daily returns; None when the std is (numerically) zero."""
    daily = np.asarray(daily, dtype=np.float64)
    if len(daily) < 2:
        raise DataError(f"need at least 2 daily returns, got {len(daily)}")
    std = daily.std(ddof=1)
    # constant series can leave a ~1e-18 residual std from rounding
    if std <= 1e-15 * max(1.0, float(np.abs(daily).max())):
        return None
    return float(daily.mean() / std * np.sqrt(TRADING_DAYS_PER_YEAR))


def capability_ratio(sharpe: float, n_days: int) -> float:
    """Scale an annualized Sharpe ratio by sqrt(n_days) / 3."""
    if n_days < 2:
        raise DataError(f"need n_days >= 2, got {n_days}")
    return sharpe * np.sqrt(n_days) / 3.0


def max_drawdown(curve: EquityCurve | np.ndarray) -> float:
    """Largest peak-to-trough decline of the cumulative P&L, in dollars."""
    pnl = curve.pnl if isinstance(curve, EquityCurve) else np.asarray(curve, dtype=np.float64)
    if len(pnl) == 0:
        raise DataError("empty equity curve")
    return float(np.max(np.maximum.accumulate(pnl) - pnl))


def benchmark_correlation(
    strategy_days: np.ndarray,
    strategy_returns: np.ndarray,
    benchmark_days: np.ndarray,
    benchmark_returns: np.ndarray,
) -> float | None:
    """Pearson correlation of daily returns over the common dates.

    Returns None when either series is constant on the overlap; raises when
    fewer than 2 dates overlap.
    """
    common, ia, ib = np.intersect1d(strategy_days, benchmark_days, return_indices=True)
    if len(common) < 2:
        raise DataError(f"need at least 2 overlapping dates, got {len(common)}")
    a = np.asarray(strategy_returns, dtype=np.float64)[ia]
    b = np.asarray(benchmark_returns, dtype=np.float64)[ib]
    if a.std() == 0.0 or b.std() == 0.0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


@dataclass
class MetricStats:
    """Across-window summary of one metric; None when never defined."""

    mean: float | None
    std: float | None
    max: float | None
    min: float | None

    @classmethod
    def of(cls, values: list[float | None]) -> "MetricStats":
        defined = np.array([v for v in values if v is not None], dtype=np.float64)
        if defined.size == 0:
            return cls(None, None, None, None)
        return cls(
            mean=float(defined.mean()),
            std=float(defined.std()),
            max=float(defined.max()),
            min=float(defined.min()),
        )

    def to_json_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "max": self.max, "min": self.min}


@dataclass
class WindowStrategyMetrics:
    """Strategy metrics of one symbol over one walk-forward test window."""

    daily_return_mean: float
    sharpe: float | None
    capability: float | None
    max_drawdown: float
    n_days: int

    def to_json_dict(self) -> dict:
        return {
            "daily_return_mean": self.daily_return_mean,
            "sharpe": self.sharpe,
            "capability": self.capability,
            "max_drawdown": self.max_drawdown,
            "n_days": self.n_days,
        }


def evaluate_window(curve: EquityCurve, initial_cash: float) -> WindowStrategyMetrics:
    """Daily-return, Sharpe, capability, and drawdown metrics for one window."""
    _, rets = daily_returns(curve, initial_cash)
    sharpe = sharpe_annualized(rets) if len(rets) >= 2 else None
    capability = capability_ratio(sharpe, len(rets)) if sharpe is not None else None
    return WindowStrategyMetrics(
        daily_return_mean=float(rets.mean()),
        sharpe=sharpe,
        capability=capability,
        max_drawdown=max_drawdown(curve),
        n_days=len(rets),
    )


@dataclass
class SymbolMetrics:
    """Across-window metric distributions for one symbol."""

    symbol: str
    daily_return_mean: MetricStats
    sharpe: MetricStats
    capability: MetricStats
    max_drawdown: MetricStats
    benchmark_correlation: MetricStats | None = None

    def to_json_dict(self) -> dict:
        out = {
            "daily_return_mean": self.daily_return_mean.to_json_dict(),
            "sharpe": self.sharpe.to_json_dict(),
            "capability": self.capability.to_json_dict(),
            "max_drawdown": self.max_drawdown.to_json_dict(),
        }
        if self.benchmark_correlation is not None:
            out["benchmark_correlation"] = self.benchmark_correlation.to_json_dict()
        return out


def summarize_symbol(
    symbol: str,
    windows: list[WindowStrategyMetrics],
    benchmark_correlations: list[float | None] | None = None,
) -> SymbolMetrics:
    return SymbolMetrics(
        symbol=symbol,
        daily_return_mean=MetricStats.of([w.daily_return_mean for w in windows]),
        sharpe=MetricStats.of([w.sharpe for w in windows]),
        capability=MetricStats.of([w.capability for w in windows]),
        max_drawdown=MetricStats.of([w.max_drawdown for w in windows]),
        benchmark_correlation=(
            MetricStats.of(benchmark_correlations) if benchmark_correlations else None
        ),
    )


def read_contract_specs(path: str | Path) -> dict[str, ContractSpec]:
    """Load a contract-spec table: symbol,initial_margin,maintenance_margin,contract_size."""
    specs: dict[str, ContractSpec] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"symbol", "initial_margin", "maintenance_margin", "contract_size"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"{path}: header must contain {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                spec = ContractSpec(
                    symbol=row["symbol"].strip(),
                    initial_margin=float(row["initial_margin"]),
                    maintenance_margin=float(row["maintenance_margin"]),
                    contract_size=float(row["contract_size"]),
                )
            except ValueError as exc:
                raise DataError(f"{path} line {lineno}: {exc}") from None
            specs[spec.symbol] = spec
    if not specs:
        raise DataError(f"{path}: no contract rows")
    return specs


def read_benchmark_returns(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Load a benchmark daily-return series: date,return."""
    dates: list[np.datetime64] = []
    rets: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"date", "return"}.issubset(reader.fieldnames):
            raise DataError(f"{path}: header must be date,return")
        for lineno, row in enumerate(reader, start=2):
            try:
                dates.append(np.datetime64(row["date"].strip(), "D"))
                rets.append(float(row["return"]))
            except ValueError as exc:
                raise DataError(f"{path} line {lineno}: {exc}") from None
    if not dates:
        raise DataError(f"{path}: no benchmark rows")
    return np.array(dates, dtype="datetime64[D]"), np.array(rets, dtype=np.float64)
