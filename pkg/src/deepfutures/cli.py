"""Command-line pipeline: synth, features, train, backtest, report.

One INI config file drives every stage; ``--seed``, ``--threads``, and
``--out`` override the [run] section.  All outputs are plain files (binary
matrices, JSON, tidy CSVs) and every command is idempotent: identical inputs
and seed reproduce byte-identical artifacts at any thread count.

Exit codes: 0 success, 1 compute failure (e.g. every learning-rate candidate
diverged), 2 input or configuration error.
"""

import argparse
import configparser
import json
import logging
import sys
from dataclasses import dataclass, replace
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import dataset, matrixkit as mk
from . import network as net
from . import strategy, trainer, walkforward
from .errors import ConfigError, DataError, DataFormatError, SweepFailedError

logger = logging.getLogger(__name__)

FEATURES_BASENAME = "features"
WINDOWS_JSONL = "windows.jsonl"
WINDOWS_CSV = "windows.csv"
METRICS_JSON = "metrics.json"
REPORT_TXT = "report.txt"


@dataclass
class RunConfig:
    prices_path: Path | None
    interval: timedelta
    contracts_path: Path | None
    benchmarks: dict[str, Path]
    features: dataset.FeatureConfig
    hidden: tuple[int, ...]
    train: trainer.TrainConfig
    plan_args: dict
    initial_cash: float
    out_dir: Path
    seed: int
    threads: int | None
    synthetic: dataset.SyntheticSpec | None


def parse_int_set(text: str) -> tuple[int, ...]:
    """Comma list with inclusive ranges: '1..3,10' -> (1, 2, 3, 10)."""
    values: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    if not values:
        raise ConfigError(f"empty integer set {text!r}")
    return tuple(values)


def parse_float_list(text: str) -> tuple[float, ...]:
    values = tuple(float(p.strip()) for p in text.split(",") if p.strip())
    if not values:
        raise ConfigError(f"empty float list {text!r}")
    return values


def load_config(
    path: str | Path,
    seed: int | None = None,
    threads: int | None = None,
    out: str | None = None,
) -> RunConfig:
    """Parse and validate the INI run configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keep benchmark symbol keys case-sensitive
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    def get(section: str, key: str, fallback: str = "") -> str:
        return cp.get(section, key, fallback=fallback).strip()

    prices = get("data", "prices")
    contracts = get("data", "contracts")
    benchmarks = {
        sym: Path(p.strip()) for sym, p in cp.items("benchmarks")
    } if cp.has_section("benchmarks") else {}

    try:
        interval = timedelta(minutes=float(get("data", "interval_minutes", "5")))
        features = dataset.FeatureConfig(
            lags=parse_int_set(get("features", "lags", "1..100")),
            windows=parse_int_set(get("features", "windows", "5..100")),
            correlation_window=int(get("features", "correlation_window", "100")),
            label_threshold=float(get("features", "label_threshold", "0.001")),
        )
        hidden = parse_int_set(get("topology", "hidden", "1000,900,800,700"))
        halving = get("training", "halving", "on").lower()
        if halving not in ("on", "off", "literal"):
            raise ConfigError(f"training.halving must be on, off, or literal, got {halving!r}")
        epoch_sample = get("training", "epoch_sample")
        tau = get("training", "early_stop_tau")
        gamma_text = get("training", "gamma_grid")
        train_cfg = trainer.TrainConfig(
            gamma_grid=(
                parse_float_list(gamma_text) if gamma_text else trainer.DEFAULT_GAMMA_GRID
            ),
            epochs=int(get("training", "epochs", "50")),
            epoch_sample=int(epoch_sample) if epoch_sample else None,
            minibatch_size=int(get("training", "minibatch_size", "256")),
            seed=0,  # filled from [run] below
            halving_enabled=halving != "off",
            halving_literal=halving == "literal",
            early_stop_tau=float(tau) if tau else None,
        )
        plan_args = {
            "train_len": int(get("walkforward", "train_len", "25000")),
            "test_len": int(get("walkforward", "test_len", "12500")),
            "step": int(get("walkforward", "step", "1000")),
            "n_windows": int(get("walkforward", "n_windows", "10")),
        }
        initial_cash = float(get("strategy", "initial_cash", "100000"))

        synthetic = None
        if cp.has_section("synthetic"):
            synthetic = dataset.SyntheticSpec(
                kind=get("synthetic", "kind", "random_walk"),
                n_symbols=int(get("synthetic", "n_symbols", "2")),
                n_rows=int(get("synthetic", "n_rows", "10000")),
                vol=float(get("synthetic", "vol", "1.0")),
                start_price=float(get("synthetic", "start_price", "100.0")),
                rule_lags=parse_int_set(get("synthetic", "rule_lags", "1,2")),
                noise_prob=float(get("synthetic", "noise_prob", "0.05")),
                start=get("synthetic", "start", "2020-01-06T00:00:00"),
            )

        run_seed = seed if seed is not None else int(get("run", "seed", "0"))
        thread_text = get("run", "threads")
        run_threads = (
            threads if threads is not None else (int(thread_text) if thread_text else None)
        )
        out_dir = Path(out if out is not None else (get("run", "out") or "run_out"))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    return RunConfig(
        prices_path=Path(prices) if prices else None,
        interval=interval,
        contracts_path=Path(contracts) if contracts else None,
        benchmarks=benchmarks,
        features=features,
        hidden=hidden,
        train=replace(train_cfg, seed=run_seed),
        plan_args=plan_args,
        initial_cash=initial_cash,
        out_dir=out_dir,
        seed=run_seed,
        threads=run_threads,
        synthetic=synthetic,
    )


def _require_file(path: Path | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"config does not specify a {what} file")
    if not path.exists():
        raise ConfigError(f"{what} file not found: {path}")
    return path


def _apply_threads(cfg: RunConfig) -> None:
    if cfg.threads is not None:
        mk.set_threads(min(cfg.threads, mk.max_threads()))


def _load_frame(cfg: RunConfig) -> tuple[dataset.PriceTable, dataset.FeatureFrame]:
    prices = _require_file(cfg.prices_path, "prices")
    pt = dataset.ingest_csv(prices, cfg.interval)
    frame = dataset.build_features(pt, cfg.features)
    return pt, frame


def _topology(frame: dataset.FeatureFrame, hidden: tuple[int, ...]) -> net.Topology:
    sizes = (frame.x.shape[1],) + hidden + (3 * frame.n_symbols,)
    return net.Topology(sizes, frame.n_symbols)


def _json_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True)


def write_prices_csv(pt: dataset.PriceTable, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("timestamp," + ",".join(pt.symbols) + "\n")
        for i in range(pt.n_rows):
            cells = ",".join(repr(float(v)) for v in pt.prices[i])
            fh.write(f"{pt.timestamps[i]},{cells}\n")


def cmd_synth(cfg: RunConfig) -> int:
    if cfg.synthetic is None:
        raise ConfigError("config has no [synthetic] section")
    target = cfg.prices_path
    if target is None:
        raise ConfigError("config does not specify a prices path to write")
    pt = dataset.gen_synthetic(cfg.synthetic, cfg.seed)
    write_prices_csv(pt, target)
    print(f"wrote {pt.n_rows} rows x {pt.n_symbols} symbols ({cfg.synthetic.kind}) to {target}")
    return 0


def cmd_features(cfg: RunConfig) -> int:
    _, frame = _load_frame(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    matrix_path = cfg.out_dir / f"{FEATURES_BASENAME}.dfx"
    manifest_path = cfg.out_dir / f"{FEATURES_BASENAME}.manifest"
    dataset.save_features(frame, matrix_path, manifest_path)
    warmup = dataset.warmup_rows(cfg.features)
    print(
        f"rows={frame.n_rows} cols={frame.x.shape[1]} warmup_dropped={warmup} "
        f"-> {matrix_path}, {manifest_path}"
    )
    return 0


def cmd_train(cfg: RunConfig, gamma: float | None = None) -> int:
    _apply_threads(cfg)
    _, frame = _load_frame(cfg)
    plan = walkforward.make_plan(frame.n_rows, **cfg.plan_args)
    topo = _topology(frame, cfg.hidden)
    train_cfg = cfg.train if gamma is None else replace(cfg.train, gamma_grid=(gamma,))

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    result = walkforward.run_window(
        frame, plan, 0, topo, train_cfg, checkpoint_dir=cfg.out_dir / "candidates"
    )
    checkpoint_path = cfg.out_dir / "checkpoint.dfn"
    net.save_checkpoint(result.report.chosen_params, checkpoint_path)
    report = result.report.to_json_dict()
    report["symbols"] = frame.symbols
    report["holdout_accuracy"] = {
        sym: float(result.accuracy[s]) for s, sym in enumerate(frame.symbols)
    }
    report_path = cfg.out_dir / "train_report.json"
    report_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    print(
        f"chosen_gamma={result.chosen_gamma} "
        f"mean_holdout_accuracy={float(result.accuracy.mean()):.4f} "
        f"-> {checkpoint_path}, {report_path}"
    )
    return 0


def _contract_specs(cfg: RunConfig, symbols: list[str]) -> dict[str, strategy.ContractSpec]:
    if cfg.contracts_path is not None:
        specs = strategy.read_contract_specs(_require_file(cfg.contracts_path, "contracts"))
        missing = [s for s in symbols if s not in specs]
        if missing:
            raise ConfigError(f"contracts file lacks symbols {missing}")
        return specs
    # no contract table: one-unit contracts so P&L equals price points
    return {s: strategy.ContractSpec(s, 1.0, 1.0, 1.0) for s in symbols}


def _write_equity_csv(path: Path, curve: strategy.EquityCurve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("timestamp,position,pnl\n")
        for ts, pos, pnl in zip(curve.timestamps, curve.positions, curve.pnl):
            fh.write(f"{ts},{int(pos)},{repr(float(pnl))}\n")


def _simulate_window(
    cfg: RunConfig,
    pt: dataset.PriceTable,
    frame: dataset.FeatureFrame,
    result: walkforward.WindowResult,
    specs: dict[str, strategy.ContractSpec],
    benchmark_data: dict[str, tuple[np.ndarray, np.ndarray]],
    equity_dir: Path,
) -> dict:
    """Simulate both strategy variants for every symbol of one window."""
    test = result.test_rows
    p0 = int(frame.price_rows[test.start])
    p1 = int(frame.price_rows[test.stop - 1])
    timestamps = pt.timestamps[p0 : p1 + 2]
    out: dict = {}
    for s, sym in enumerate(frame.symbols):
        prices = pt.prices[p0 : p1 + 2, s]
        spec = specs[sym]
        predicted = strategy.simulate(
            timestamps, prices, result.predictions[:, s], spec, cfg.initial_cash
        )
        perfect = strategy.simulate(
            timestamps, prices, strategy.perfect_foresight_labels(prices), spec, cfg.initial_cash
        )
        _write_equity_csv(equity_dir / f"{sym}_w{result.index:02d}_predicted.csv", predicted)
        _write_equity_csv(equity_dir / f"{sym}_w{result.index:02d}_perfect.csv", perfect)

        metrics = strategy.evaluate_window(predicted, cfg.initial_cash)
        record = metrics.to_json_dict()
        if sym in benchmark_data:
            days, rets = strategy.daily_returns(predicted, cfg.initial_cash)
            bdays, brets = benchmark_data[sym]
            try:
                record["benchmark_correlation"] = strategy.benchmark_correlation(
                    days, rets, bdays, brets
                )
            except DataError:
                # window too short to overlap the benchmark on 2+ days
                record["benchmark_correlation"] = None
        out[sym] = record
    return out


def _read_window_records(path: Path) -> dict[int, dict]:
    records: dict[int, dict] = {}
    if not path.exists():
        return records
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rec = json.loads(line)
                records[int(rec["window"])] = rec
    return records


def _write_backtest_outputs(cfg: RunConfig, symbols: list[str], records: dict[int, dict]) -> None:
    ordered = [records[i] for i in sorted(records)]
    with open(cfg.out_dir / WINDOWS_CSV, "w", encoding="utf-8", newline="") as fh:
        fh.write("symbol,window,accuracy,f1,chosen_gamma\n")
        for rec in ordered:
            for sym in symbols:
                fh.write(
                    f"{sym},{rec['window']},{repr(rec['accuracy'][sym])},"
                    f"{repr(rec['f1'][sym])},{repr(rec['chosen_gamma'])}\n"
                )

    plots_dir = cfg.out_dir / "plots"
    plots_dir.mkdir(exist_ok=True)
    with open(plots_dir / "classification.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("symbol,window,metric,value\n")
        for rec in ordered:
            for sym in symbols:
                fh.write(f"{sym},{rec['window']},accuracy,{repr(rec['accuracy'][sym])}\n")
                fh.write(f"{sym},{rec['window']},f1,{repr(rec['f1'][sym])}\n")
    with open(plots_dir / "strategy.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("symbol,window,metric,value\n")
        for rec in ordered:
            for sym in symbols:
                strat = rec["strategy"][sym]
                for metric in ("daily_return_mean", "sharpe", "capability", "max_drawdown"):
                    value = strat[metric]
                    fh.write(
                        f"{sym},{rec['window']},{metric},"
                        f"{'' if value is None else repr(value)}\n"
                    )

    acc = np.array([[rec["accuracy"][sym] for sym in symbols] for rec in ordered])
    f1 = np.array([[rec["f1"][sym] for sym in symbols] for rec in ordered])
    classification = walkforward.aggregate_arrays(symbols, acc, f1)

    strat_summary = {}
    for sym in symbols:
        window_metrics = [
            strategy.WindowStrategyMetrics(
                daily_return_mean=rec["strategy"][sym]["daily_return_mean"],
                sharpe=rec["strategy"][sym]["sharpe"],
                capability=rec["strategy"][sym]["capability"],
                max_drawdown=rec["strategy"][sym]["max_drawdown"],
                n_days=rec["strategy"][sym]["n_days"],
            )
            for rec in ordered
        ]
        correlations = [rec["strategy"][sym].get("benchmark_correlation") for rec in ordered]
        has_corr = any(c is not None for c in correlations)
        strat_summary[sym] = strategy.summarize_symbol(
            sym, window_metrics, correlations if has_corr else None
        ).to_json_dict()

    metrics = {
        "classification": classification.to_json_dict(),
        "strategy": strat_summary,
        "windows_completed": sorted(records),
    }
    (cfg.out_dir / METRICS_JSON).write_text(
        json.dumps(metrics, sort_keys=True, indent=2) + "\n"
    )


def cmd_backtest(cfg: RunConfig) -> int:
    _apply_threads(cfg)
    pt, frame = _load_frame(cfg)
    plan = walkforward.make_plan(frame.n_rows, **cfg.plan_args)
    topo = _topology(frame, cfg.hidden)
    specs = _contract_specs(cfg, frame.symbols)
    benchmark_data = {
        sym: strategy.read_benchmark_returns(_require_file(path, f"benchmark for {sym}"))
        for sym, path in cfg.benchmarks.items()
        if sym in frame.symbols
    }

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    equity_dir = cfg.out_dir / "equity"
    equity_dir.mkdir(exist_ok=True)
    checkpoints_dir = cfg.out_dir / "checkpoints"
    checkpoints_dir.mkdir(exist_ok=True)

    jsonl_path = cfg.out_dir / WINDOWS_JSONL
    records = _read_window_records(jsonl_path)
    if records:
        logger.info("resuming: windows %s already complete", sorted(records))

    for i in range(plan.n_windows):
        if i in records:
            continue
        result = walkforward.run_window(frame, plan, i, topo, cfg.train)
        net.save_checkpoint(
            result.report.chosen_params, checkpoints_dir / f"window_{i:02d}.dfn"
        )
        strat = _simulate_window(cfg, pt, frame, result, specs, benchmark_data, equity_dir)
        record = {
            "window": i,
            "chosen_gamma": float(result.chosen_gamma),
            "train": [result.train_rows.start, result.train_rows.stop],
            "test": [result.test_rows.start, result.test_rows.stop],
            "accuracy": {
                sym: float(result.accuracy[s]) for s, sym in enumerate(frame.symbols)
            },
            "f1": {sym: float(result.f1[s]) for s, sym in enumerate(frame.symbols)},
            "strategy": strat,
        }
        # the jsonl record is written last: its presence marks the window complete
        with open(jsonl_path, "a", encoding="utf-8") as fh:
            fh.write(_json_line(record) + "\n")
        records[i] = record
        print(
            f"window {i}: gamma={record['chosen_gamma']} "
            f"mean_accuracy={np.mean(list(record['accuracy'].values())):.4f}"
        )

    _write_backtest_outputs(cfg, frame.symbols, records)
    print(f"backtest complete: {len(records)} windows -> {cfg.out_dir}")
    return 0


def _format_report(metrics: dict, symbols: list[str]) -> str:
    lines: list[str] = []
    cls = metrics["classification"]
    by_acc = sorted(symbols, key=lambda s: cls["accuracy"][s]["mean"], reverse=True)[:5]
    lines.append("Top instruments by mean classification accuracy")
    lines.append(f"{'symbol':<8}{'accuracy':>10}{'f1':>10}")
    for sym in by_acc:
        lines.append(
            f"{sym:<8}{cls['accuracy'][sym]['mean']:>10.4f}{cls['f1'][sym]['mean']:>10.4f}"
        )
    lines.append(
        f"{'mean':<8}{cls['mean_accuracy']:>10.4f}{cls['mean_f1']:>10.4f}"
    )
    lines.append(
        f"{'std':<8}{cls['std_accuracy']:>10.4f}{cls['std_f1']:>10.4f}"
    )

    strat = metrics["strategy"]
    with_sharpe = [s for s in symbols if strat[s]["sharpe"]["mean"] is not None]
    by_sharpe = sorted(with_sharpe, key=lambda s: strat[s]["sharpe"]["mean"], reverse=True)[:5]
    lines.append("")
    lines.append("Top instruments by mean annualized Sharpe ratio (std across windows)")
    lines.append(f"{'symbol':<8}{'sharpe':>16}{'capability':>18}")
    for sym in by_sharpe:
        sh = strat[sym]["sharpe"]
        cap = strat[sym]["capability"]
        cap_text = (
            f"{cap['mean']:.2f} ({cap['std']:.2f})" if cap["mean"] is not None else "n/a"
        )
        lines.append(f"{sym:<8}{sh['mean']:>9.2f} ({sh['std']:.2f}){cap_text:>18}")

    with_corr = [
        s for s in symbols
        if strat[s].get("benchmark_correlation", {}).get("mean") is not None
    ]
    if with_corr:
        lines.append("")
        lines.append("Benchmark correlation of daily strategy returns")
        lines.append(f"{'symbol':<8}{'mean':>8}{'std':>8}{'max':>8}{'min':>8}")
        for sym in with_corr:
            c = strat[sym]["benchmark_correlation"]
            lines.append(
                f"{sym:<8}{c['mean']:>8.3f}{c['std']:>8.3f}{c['max']:>8.3f}{c['min']:>8.3f}"
            )
    return "\n".join(lines) + "\n"


def cmd_report(cfg: RunConfig) -> int:
    metrics_path = cfg.out_dir / METRICS_JSON
    if not metrics_path.exists():
        raise ConfigError(
            f"no backtest outputs in {cfg.out_dir} (missing {metrics_path.name}); "
            f"run the backtest command first"
        )
    metrics = json.loads(metrics_path.read_text())
    symbols = metrics["classification"]["symbols"]
    text = _format_report(metrics, symbols)
    (cfg.out_dir / REPORT_TXT).write_text(text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepfutures",
        description="Train and backtest the multi-symbol direction classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate a synthetic prices CSV"),
        ("features", "build and persist the feature matrix"),
        ("train", "learning-rate sweep on the first walk-forward window"),
        ("backtest", "full walk-forward backtest with strategy simulation"),
        ("report", "summarize a completed backtest"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument("--threads", type=int, default=None, help="cap kernel threads")
        p.add_argument("--out", default=None, help="override [run] out directory")
        if name == "train":
            p.add_argument("--gamma", type=float, default=None,
                           help="train a single learning rate instead of the grid")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, threads=args.threads, out=args.out)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "features":
            return cmd_features(cfg)
        if args.command == "train":
            return cmd_train(cfg, gamma=args.gamma)
        if args.command == "backtest":
            return cmd_backtest(cfg)
        return cmd_report(cfg)
    except (ConfigError, DataError, DataFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SweepFailedError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
