"""Price ingestion, feature engineering, labels, and synthetic corpora.

The observation model: one row per 5-minute timestamp, containing every
symbol's engineered features and every symbol's next-interval direction label.
Feature columns per symbol, in fixed order:

* ``price_diff``        - the current one-interval price difference d_t
* ``lagged_diff``       - d_{t-lag} for each configured lag, ascending
* ``moving_average``    - trailing mean of the price over each window, ascending
* ``pair_correlation``  - trailing Pearson correlation between this symbol's
                          diffs and each other symbol's diffs (input order)

Rows whose features reach into the undefined warm-up region are dropped, as is
the final row (it has no next interval to label).  No feature at row t reads a
price after t; labels alone look one step ahead.
"""

import csv
import struct
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DataFormatError
from .seeding import STREAM_SYNTHETIC, seed_sequence

DFX_MAGIC = b"DFX1"

FEATURE_KINDS = ("price_diff", "lagged_diff", "moving_average", "pair_correlation")


@dataclass(frozen=True)
class PriceTable:
    """Aligned mid-price series: prices[t, s] at timestamps[t] for symbols[s]."""

    timestamps: np.ndarray  # datetime64[s], strictly increasing
    symbols: list[str]
    prices: np.ndarray  # [n_rows x n_symbols] float64, strictly positive

    @property
    def n_rows(self) -> int:
        return self.prices.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.prices.shape[1]


@dataclass(frozen=True)
class FeatureDescriptor:
    kind: str
    symbol: str
    lag_or_window: int
    partner_symbol: str | None = None


@dataclass(frozen=True)
class FeatureConfig:
    """Feature inventory; defaults follow the 1..100 lag / 5..100 window sets."""

    lags: tuple[int, ...] = tuple(range(1, 101))
    windows: tuple[int, ...] = tuple(range(5, 101))
    correlation_window: int = 100
    label_threshold: float = 1e-3

    def __post_init__(self):
        if not self.lags or not self.windows:
            raise ConfigError("lag and window sets must be non-empty")
        if any(l < 1 for l in self.lags) or any(w < 1 for w in self.windows):
            raise ConfigError("lags and windows must be >= 1")
        if self.correlation_window < 2:
            raise ConfigError("correlation window must be >= 2")
        if self.label_threshold <= 0:
            raise ConfigError("label threshold must be > 0")


@dataclass
class NormStats:
    """Per-column normalization statistics fitted on one row range."""

    means: np.ndarray
    stds: np.ndarray
    scaled: np.ndarray  # bool mask; False where std < 1e-12 (centered only)


@dataclass
class FeatureFrame:
    """Observation matrix plus per-column descriptors and per-symbol labels.

    ``price_rows[i]`` is the PriceTable row index of observation i, so callers
    can recover prices and timestamps for any frame row.
    """

    x: np.ndarray  # [n x m] float64
    descriptors: list[FeatureDescriptor]
    labels: np.ndarray  # [n x n_symbols] int64 in {-1, 0, +1}
    symbols: list[str]
    price_rows: np.ndarray  # [n] int64
    norm_stats: NormStats | None = None

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)


def _parse_timestamp(text: str, lineno: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise DataError(f"line {lineno}: unparsable timestamp {text!r}: {exc}") from None
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return ts


def ingest_csv(path: str | Path, expected_interval: timedelta) -> PriceTable:
    """Read a mid-price CSV (header ``timestamp,SYM1,SYM2,...``).

    Rows are sorted by timestamp; duplicate timestamps are rejected; missing
    cells are forward-filled from the prior row; rows before every symbol has
    a first value are dropped.  Any gap between consecutive timestamps must be
    a positive multiple of expected_interval.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2 or header[0].strip().lower() != "timestamp":
            raise DataError(f"{path}: header must be 'timestamp,<sym1>,...', got {header}")
        symbols = [h.strip() for h in header[1:]]
        if len(set(symbols)) != len(symbols):
            raise DataError(f"{path}: duplicate symbol columns in header")

        rows: list[tuple[datetime, list[float | None]]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(symbols) + 1:
                raise DataError(
                    f"line {lineno}: expected {len(symbols) + 1} cells, got {len(row)}"
                )
            ts = _parse_timestamp(row[0], lineno)
            values: list[float | None] = []
            for sym, cell in zip(symbols, row[1:]):
                cell = cell.strip()
                if not cell:
                    values.append(None)
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(f"line {lineno}: unparsable price {cell!r} for {sym}") from None
            rows.append((ts, values))

    if not rows:
        raise DataError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    for (t0, _), (t1, _) in zip(rows, rows[1:]):
        if t1 == t0:
            raise DataError(f"duplicate timestamp {t0.isoformat()}")

    for s, sym in enumerate(symbols):
        if all(values[s] is None for _, values in rows):
            raise DataError(f"symbol column {sym!r} is entirely empty")

    # drop leading rows until every symbol has appeared, then forward-fill
    last: list[float | None] = [None] * len(symbols)
    start = 0
    for i, (_, values) in enumerate(rows):
        for s, v in enumerate(values):
            if v is not None:
                last[s] = v
        if all(v is not None for v in last):
            start = i
            break
    else:  # unreachable while every column has at least one value
        raise DataError("no row at which every symbol has a value")
    rows = rows[start:]

    filled = np.empty((len(rows), len(symbols)), dtype=np.float64)
    for i, (_, values) in enumerate(rows):
        for s, v in enumerate(values):
            if v is not None:
                last[s] = v
            filled[i, s] = last[s]  # type: ignore[assignment]

    timestamps = [ts for ts, _ in rows]
    for t0, t1 in zip(timestamps, timestamps[1:]):
        gap = t1 - t0
        if gap % expected_interval != timedelta(0):
            raise DataError(
                f"gap {gap} between {t0.isoformat()} and {t1.isoformat()} "
                f"is not a multiple of {expected_interval}"
            )
    if np.any(filled <= 0):
        bad = int(np.argwhere(filled <= 0)[0][0])
        raise DataError(f"non-positive price at {timestamps[bad].isoformat()}")

    ts_arr = np.array(timestamps, dtype="datetime64[s]")
    return PriceTable(timestamps=ts_arr, symbols=symbols, prices=filled)


def enumerate_descriptors(symbols: list[str], cfg: FeatureConfig) -> list[FeatureDescriptor]:
    """The fixed, documented column order of the feature matrix."""
    lags = tuple(sorted(cfg.lags))
    windows = tuple(sorted(cfg.windows))
    out: list[FeatureDescriptor] = []
    for sym in symbols:
        out.append(FeatureDescriptor("price_diff", sym, 0))
        out.extend(FeatureDescriptor("lagged_diff", sym, lag) for lag in lags)
        out.extend(FeatureDescriptor("moving_average", sym, w) for w in windows)
        out.extend(
            FeatureDescriptor("pair_correlation", sym, cfg.correlation_window, other)
            for other in symbols
            if other != sym
        )
    return out


def warmup_rows(cfg: FeatureConfig) -> int:
    """First price-row index with every feature defined."""
    return max(1, max(cfg.lags) + 1, max(cfg.windows) - 1, cfg.correlation_window)


def _diffs(prices: np.ndarray) -> np.ndarray:
    """d[t] = p[t] - p[t-1]; row 0 is undefined (NaN)."""
    d = np.empty_like(prices)
    d[0] = np.nan
    d[1:] = prices[1:] - prices[:-1]
    return d


def _rolling_mean(series: np.ndarray, window: int, t_idx: np.ndarray) -> np.ndarray:
    csum = np.concatenate(([0.0], np.cumsum(series)))
    return (csum[t_idx + 1] - csum[t_idx + 1 - window]) / window


def _rolling_correlation(
    da: np.ndarray, db: np.ndarray, window: int, t_idx: np.ndarray
) -> np.ndarray:
    """Trailing Pearson correlation of two diff series over [t-window+1, t].

    Windows with (numerically) zero variance on either side yield 0.
    """

    def sums(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = np.concatenate(([0.0], np.cumsum(x)))
        c2 = np.concatenate(([0.0], np.cumsum(x * x)))
        return c[t_idx + 1] - c[t_idx + 1 - window], c2[t_idx + 1] - c2[t_idx + 1 - window]

    sa, sa2 = sums(da)
    sb, sb2 = sums(db)
    cab = np.concatenate(([0.0], np.cumsum(da * db)))
    sab = cab[t_idx + 1] - cab[t_idx + 1 - window]

    cov = window * sab - sa * sb
    var_a = np.maximum(window * sa2 - sa * sa, 0.0)
    var_b = np.maximum(window * sb2 - sb * sb, 0.0)
    denom = np.sqrt(var_a * var_b)
    out = np.zeros_like(cov)
    ok = denom > 1e-12
    out[ok] = cov[ok] / denom[ok]
    return np.clip(out, -1.0, 1.0)


def make_labels(
    pt: PriceTable, threshold: float, fit_rows: np.ndarray | range | None = None
) -> np.ndarray:
    """Tri-state next-interval direction labels, one row per price row 0..N-2.

    The next-interval diff is z-scored per symbol (statistics over the diffs at
    fit_rows, default all) and compared against the threshold: strictly above
    -> +1, strictly below the negated threshold -> -1, else 0.
    """
    if threshold <= 0:
        raise ConfigError("label threshold must be > 0")
    if pt.n_rows < 2:
        raise DataError("need at least 2 price rows to label moves")
    d = _diffs(pt.prices)[1:]  # d[i] = move from row i to row i+1
    if fit_rows is None:
        fit = d
    else:
        fit = d[np.asarray(fit_rows)]
    mean = fit.mean(axis=0)
    std = fit.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    z = (d - mean) / std
    labels = np.zeros(z.shape, dtype=np.int64)
    labels[z > threshold] = 1
    labels[z < -threshold] = -1
    return labels


def build_features(pt: PriceTable, cfg: FeatureConfig) -> FeatureFrame:
    """Assemble the engineered feature matrix and labels from a price table."""
    t0 = warmup_rows(cfg)
    if pt.n_rows < t0 + 2:
        raise DataError(
            f"need at least {t0 + 2} price rows for lags {max(cfg.lags)}, "
            f"windows {max(cfg.windows)}, correlation window {cfg.correlation_window}; "
            f"got {pt.n_rows}"
        )
    descriptors = enumerate_descriptors(pt.symbols, cfg)
    t_idx = np.arange(t0, pt.n_rows - 1)
    d = _diffs(pt.prices)
    # correlation windows never reach index 0, but its NaN would poison the
    # prefix sums; zero contributes nothing to any window difference
    d_for_corr = d.copy()
    d_for_corr[0] = 0.0
    sym_index = {sym: s for s, sym in enumerate(pt.symbols)}

    x = np.empty((len(t_idx), len(descriptors)), dtype=np.float64)
    for col, desc in enumerate(descriptors):
        s = sym_index[desc.symbol]
        if desc.kind == "price_diff":
            x[:, col] = d[t_idx, s]
        elif desc.kind == "lagged_diff":
            x[:, col] = d[t_idx - desc.lag_or_window, s]
        elif desc.kind == "moving_average":
            x[:, col] = _rolling_mean(pt.prices[:, s], desc.lag_or_window, t_idx)
        else:
            p = sym_index[desc.partner_symbol]
            x[:, col] = _rolling_correlation(
                d_for_corr[:, s], d_for_corr[:, p], cfg.correlation_window, t_idx
            )

    all_labels = make_labels(pt, cfg.label_threshold)
    return FeatureFrame(
        x=x,
        descriptors=descriptors,
        labels=all_labels[t_idx],
        symbols=list(pt.symbols),
        price_rows=t_idx,
    )


def normalize(frame: FeatureFrame, fit_rows: np.ndarray | range) -> FeatureFrame:
    """Z-score every column with statistics from fit_rows, applied to all rows.

    Columns whose fitted std is below 1e-12 are centered but not scaled, and
    flagged in the returned frame's norm_stats.
    """
    idx = np.asarray(fit_rows)
    if idx.size == 0:
        raise DataError("fit_rows must be non-empty")
    if idx.min() < 0 or idx.max() >= frame.n_rows:
        raise DataError(f"fit_rows out of range for frame with {frame.n_rows} rows")
    sub = frame.x[idx]
    means = sub.mean(axis=0)
    stds = sub.std(axis=0)
    scaled = stds >= 1e-12
    divisor = np.where(scaled, stds, 1.0)
    x = (frame.x - means) / divisor
    return replace(frame, x=x, norm_stats=NormStats(means=means, stds=stds, scaled=scaled))


def encode_one_hot(labels: np.ndarray, rows: np.ndarray | range | None = None) -> np.ndarray:
    """One-hot targets [3*n_symbols x n]; block order per symbol is (-1, 0, +1)."""
    labels = np.asarray(labels)
    if rows is not None:
        labels = labels[np.asarray(rows)]
    if labels.size and not np.isin(labels, (-1, 0, 1)).all():
        bad = labels[~np.isin(labels, (-1, 0, 1))][0]
        raise DataError(f"label {bad} outside {{-1, 0, +1}}")
    n, s = labels.shape
    y = np.zeros((3 * s, n), dtype=np.float64)
    cols = np.arange(n)
    for sym in range(s):
        y[3 * sym + labels[:, sym] + 1, cols] = 1.0
    return y


def decode_one_hot(y: np.ndarray) -> np.ndarray:
    """Inverse of encode_one_hot: [3S x n] targets back to [n x S] labels."""
    k, n = y.shape
    blocks = y.T.reshape(n, k // 3, 3)
    return blocks.argmax(axis=2).astype(np.int64) - 1


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a generated price table.

    ``random_walk`` draws i.i.d. Gaussian increments.  ``lag_rule`` plants a
    learnable signal: each increment has magnitude vol and its sign is the
    product of the increment signs at the configured lags, replaced by a
    random sign with probability noise_prob (the noise keeps the sign process
    mixing instead of locking into a periodic orbit).
    """

    kind: str
    n_symbols: int
    n_rows: int
    vol: float = 1.0
    start_price: float = 100.0
    rule_lags: tuple[int, ...] = (1, 2)
    noise_prob: float = 0.05
    start: str = "2020-01-06T00:00:00"

    def __post_init__(self):
        if self.kind not in ("random_walk", "lag_rule"):
            raise ConfigError(f"unknown synthetic kind {self.kind!r}")
        if self.n_rows < 200:
            raise ConfigError(f"need n_rows >= 200 for warm-up, got {self.n_rows}")
        if self.n_symbols < 1:
            raise ConfigError("n_symbols must be >= 1")
        if self.kind == "lag_rule" and not self.rule_lags:
            raise ConfigError("lag_rule needs at least one rule lag")
        if not 0.0 <= self.noise_prob < 1.0:
            raise ConfigError("noise_prob must be in [0, 1)")


def gen_synthetic(spec: SyntheticSpec, seed: int) -> PriceTable:
    """Deterministic synthetic corpus; identical seed+spec gives identical output."""
    n = spec.n_rows
    prices = np.empty((n, spec.n_symbols), dtype=np.float64)
    for s in range(spec.n_symbols):
        rng = np.random.default_rng(seed_sequence(seed, STREAM_SYNTHETIC, s))
        if spec.kind == "random_walk":
            incr = rng.normal(0.0, spec.vol, n - 1)
        else:
            maxlag = max(spec.rule_lags)
            signs = np.empty(n - 1, dtype=np.float64)
            signs[:maxlag] = rng.choice((-1.0, 1.0), maxlag)
            noise = rng.random(n - 1)
            noise_signs = rng.choice((-1.0, 1.0), n - 1)
            for i in range(maxlag, n - 1):
                if noise[i] < spec.noise_prob:
                    signs[i] = noise_signs[i]
                else:
                    rule = 1.0
                    for lag in spec.rule_lags:
                        rule *= signs[i - lag]
                    signs[i] = rule
            incr = spec.vol * signs
        path = spec.start_price + np.concatenate(([0.0], np.cumsum(incr)))
        low = path.min()
        if low <= 0:
            # constant shift preserves every increment while keeping prices positive
            path = path + (1.0 - low)
        prices[:, s] = path

    start = np.datetime64(spec.start, "s")
    timestamps = start + np.arange(n) * np.timedelta64(300, "s")
    symbols = [f"S{i:02d}" for i in range(spec.n_symbols)]
    return PriceTable(timestamps=timestamps, symbols=symbols, prices=prices)


def save_features(frame: FeatureFrame, matrix_path: str | Path, manifest_path: str | Path) -> None:
    """Persist the observation matrix (magic DFX1) plus the descriptor manifest."""
    x = frame.x
    with open(matrix_path, "wb") as fh:
        fh.write(DFX_MAGIC)
        fh.write(struct.pack("<QQ", x.shape[0], x.shape[1]))
        fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for desc in frame.descriptors:
            partner = desc.partner_symbol or ""
            fh.write(f"{desc.kind},{desc.symbol},{desc.lag_or_window},{partner}\n")


def load_features(
    matrix_path: str | Path, manifest_path: str | Path
) -> tuple[np.ndarray, list[FeatureDescriptor]]:
    """Read back a persisted observation matrix and its descriptors."""
    with open(matrix_path, "rb") as fh:
        magic = fh.read(4)
        if magic != DFX_MAGIC:
            raise DataFormatError(f"bad feature-matrix magic {magic!r} in {matrix_path}")
        rows, cols = struct.unpack("<QQ", fh.read(16))
        x = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8").reshape(rows, cols).copy()
    descriptors = []
    with open(manifest_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4 or parts[0] not in FEATURE_KINDS:
                raise DataFormatError(f"{manifest_path} line {lineno}: bad descriptor {line!r}")
            descriptors.append(
                FeatureDescriptor(parts[0], parts[1], int(parts[2]), parts[3] or None)
            )
    if len(descriptors) != cols:
        raise DataFormatError(
            f"manifest lists {len(descriptors)} descriptors but matrix has {cols} columns"
        )
    return x, descriptors
