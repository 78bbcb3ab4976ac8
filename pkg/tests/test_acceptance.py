"""Acceptance suite: one test per release criterion, each at its stated
tolerance, printing one PASS/FAIL line (run with -s to see them inline).

The learnability and null-control runs use the synthetic generators, a small
feature inventory, and a single hidden layer; every tolerance and budget is
pinned here, not deferred.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.special import ndtri

from deepfutures import cli, dataset, matrixkit as mk
from deepfutures import network as net
from deepfutures import strategy, trainer, walkforward


def report(name: str, passed: bool, detail: str = ""):
    line = f"[{'PASS' if passed else 'FAIL'}] {name}"
    if detail:
        line += f": {detail}"
    print(line)


@pytest.fixture(autouse=True)
def restore_threads():
    original = mk.get_threads()
    yield
    mk.set_threads(original)


# -- criterion 1: gradient oracle ------------------------------------------


def test_c01_gradient_oracle():
    """Analytic gradients match central differences on 20 random topologies."""
    eps = 1e-5
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for trial in range(20):
        n_symbols = int(rng.integers(2, 4))
        sizes = (
            int(rng.integers(3, 13)),
            int(rng.integers(3, 11)),
            int(rng.integers(3, 11)),
            3 * n_symbols,
        )
        topo = net.Topology(sizes, n_symbols)
        params = net.init_params(topo, trial)
        for w in params.weights:
            w += rng.normal(0.0, 0.3, w.shape)
        for b in params.biases:
            b += rng.normal(0.0, 0.3, b.shape)
        x = rng.normal(0.0, 1.0, (3, sizes[0]))
        y = dataset.encode_one_hot(rng.integers(-1, 2, (3, n_symbols)))
        grads = net.backward(params, net.forward(params, x), y)

        def loss():
            return net.cross_entropy(net.forward(params, x).output, y)

        arrays = [(params.weights[l], grads.weights[l]) for l in range(len(params.weights))]
        arrays += [(params.biases[l], grads.biases[l]) for l in range(len(params.biases))]
        for values, analytic in arrays:
            for idx in np.ndindex(values.shape):
                orig = values[idx]
                values[idx] = orig + eps
                up = loss()
                values[idx] = orig - eps
                down = loss()
                values[idx] = orig
                fd = (up - down) / (2 * eps)
                an = analytic[idx]
                # relative error; denominator floored at 1e-4 because central
                # differences at this eps carry ~2e-11 absolute noise
                worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-4))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 10.0
    report(
        "criterion 1 gradient oracle",
        ok,
        f"worst rel err {worst:.2e} over 20 topologies in {elapsed:.1f}s",
    )
    assert worst < 1e-6
    assert elapsed < 10.0


# -- criterion 2: kernel oracle ---------------------------------------------


def _triple_loop_tn(a, b):
    k, m = a.shape
    n = b.shape[1]
    out = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[t, i] * b[t, j]
            out[i, j] = acc
    return out


def _triple_loop_nt(a, b):
    m, k = a.shape
    n = b.shape[0]
    out = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[j, t]
            out[i, j] = acc
    return out


def test_c02_kernel_oracle():
    """Both kernels bitwise-equal to naive loops; identical at 1/2/4/8 threads."""
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    for trial in range(50):
        k, m, n = rng.integers(1, 65, size=3)
        a = rng.standard_normal((k, m)) * 10.0 ** rng.integers(-2, 3)
        b = rng.standard_normal((k, n))
        assert np.array_equal(mk.matmul_tn(a, b), _triple_loop_tn(a, b))
    for trial in range(50):
        m, k, n = rng.integers(1, 65, size=3)
        a = rng.standard_normal((m, k))
        b = rng.standard_normal((n, k)) * 10.0 ** rng.integers(-2, 3)
        assert np.array_equal(mk.matmul_nt(a, b), _triple_loop_nt(a, b))

    a = rng.standard_normal((111, 77))
    b = rng.standard_normal((111, 53))
    baseline_tn = None
    baseline_nt = None
    for threads in (1, 2, 4, 8):
        mk.set_threads(min(threads, mk.max_threads()))
        out_tn = mk.matmul_tn(a, b)
        out_nt = mk.matmul_nt(a.T.copy(), b.T.copy())
        if baseline_tn is None:
            baseline_tn, baseline_nt = out_tn, out_nt
        else:
            assert np.array_equal(out_tn, baseline_tn)
            assert np.array_equal(out_nt, baseline_nt)
    elapsed = time.perf_counter() - start
    report(
        "criterion 2 kernel oracle",
        elapsed < 5.0,
        f"100 shapes bitwise + thread invariance in {elapsed:.1f}s",
    )
    assert elapsed < 5.0


# -- criterion 3: batched forward equals scalar evaluation -------------------


def _scalar_forward(params, x_row):
    activation = list(x_row)
    n_layers = len(params.weights)
    for l, (w, bias) in enumerate(zip(params.weights, params.biases)):
        pre = []
        for j in range(w.shape[1]):
            s = 0.0
            for i in range(w.shape[0]):
                s += w[i, j] * activation[i]
            pre.append(s + bias[j])
        if l < n_layers - 1:
            activation = [1.0 / (1.0 + math.exp(-v)) for v in pre]
        else:
            activation = []
            for blk in range(0, len(pre), 3):
                block = pre[blk : blk + 3]
                mx = max(block)
                exps = [math.exp(v - mx) for v in block]
                total = sum(exps)
                activation.extend(e / total for e in exps)
    return np.array(activation)


def test_c03_batched_forward_equals_scalar_sums():
    rng = np.random.default_rng(303)
    worst_value = 0.0
    worst_block = 0.0
    for trial in range(10):
        n_symbols = int(rng.integers(1, 4))
        sizes = (
            int(rng.integers(2, 9)),
            int(rng.integers(2, 9)),
            3 * n_symbols,
        )
        topo = net.Topology(sizes, n_symbols)
        params = net.init_params(topo, 303 + trial)
        for w in params.weights:
            w += rng.normal(0.0, 0.5, w.shape)
        x = rng.normal(0.0, 1.0, (7, sizes[0]))
        out = net.forward(params, x).output
        block_sums = out.reshape(7, n_symbols, 3).sum(axis=2)
        worst_block = max(worst_block, float(np.max(np.abs(block_sums - 1.0))))
        for r in range(7):
            expected = _scalar_forward(params, x[r])
            worst_value = max(worst_value, float(np.max(np.abs(out[r] - expected))))
    ok = worst_value < 1e-12 and worst_block < 1e-12
    report(
        "criterion 3 batched forward equivalence",
        ok,
        f"max deviation {worst_value:.2e}, block sum error {worst_block:.2e}",
    )
    assert worst_value < 1e-12
    assert worst_block < 1e-12


# -- criteria 4 and 5: learnability and null control -------------------------

PLAN_ARGS = dict(train_len=3000, test_len=1000, step=500, n_windows=2)
ACCEPT_FEATURES = dataset.FeatureConfig(
    lags=(1, 2, 3, 4, 5), windows=(5, 10), correlation_window=50, label_threshold=1e-3
)
ACCEPT_TRAIN = trainer.TrainConfig(epochs=40, minibatch_size=128, seed=7)


def _run_windows(pt, feature_cfg, train_cfg):
    frame = dataset.build_features(pt, feature_cfg)
    plan = walkforward.make_plan(frame.n_rows, **PLAN_ARGS)
    topo = net.Topology((frame.x.shape[1], 32, 3 * frame.n_symbols), frame.n_symbols)
    return [
        walkforward.run_window(frame, plan, i, topo, train_cfg)
        for i in range(plan.n_windows)
    ]


def test_c04_learnability_on_planted_signal():
    """Full learning-rate sweep reaches >= 0.90 hold-out accuracy per window."""
    mk.set_threads(1)
    spec = dataset.SyntheticSpec(
        "lag_rule", n_symbols=2, n_rows=8000, rule_lags=(1, 2), noise_prob=0.05
    )
    pt = dataset.gen_synthetic(spec, seed=42)
    start = time.perf_counter()
    results = _run_windows(pt, ACCEPT_FEATURES, ACCEPT_TRAIN)
    elapsed = time.perf_counter() - start
    rates = [float(r.accuracy.mean()) for r in results]
    ok = all(r >= 0.90 for r in rates) and elapsed < 180.0
    report(
        "criterion 4 learnability",
        ok,
        f"window accuracies {[round(r, 4) for r in rates]} in {elapsed:.0f}s single-threaded",
    )
    for result in results:
        assert len(result.report.candidates) == 10  # the full default grid ran
    for rate in rates:
        assert rate >= 0.90
    assert elapsed < 180.0


def test_c05_null_control_on_random_walk():
    """The same pipeline on a pure random walk stays at chance accuracy."""
    spec = dataset.SyntheticSpec("random_walk", n_symbols=2, n_rows=8000)
    pt = dataset.gen_synthetic(spec, seed=42)
    balanced = dataset.FeatureConfig(
        lags=ACCEPT_FEATURES.lags,
        windows=ACCEPT_FEATURES.windows,
        correlation_window=ACCEPT_FEATURES.correlation_window,
        label_threshold=float(ndtri(2.0 / 3.0)),  # equal thirds for Gaussian moves
    )
    results = _run_windows(pt, balanced, ACCEPT_TRAIN)
    rates = [float(r.accuracy.mean()) for r in results]
    ok = all(abs(r - 1.0 / 3.0) <= 0.05 for r in rates)
    report(
        "criterion 5 null control",
        ok,
        f"window accuracies {[round(r, 4) for r in rates]} (chance 0.333)",
    )
    for rate in rates:
        assert abs(rate - 1.0 / 3.0) <= 0.05


# -- criterion 6: walk-forward arithmetic ------------------------------------


def test_c06_walkforward_reference_arithmetic():
    plan = walkforward.make_plan(46_500)
    checks = [
        plan.test_range(0) == range(25_000, 37_500),
        plan.test_range(9) == range(34_000, 46_500),
        plan.required_rows == 46_500,
    ]
    try:
        walkforward.make_plan(46_499)
        checks.append(False)
    except Exception:
        checks.append(True)
    report(
        "criterion 6 walk-forward arithmetic",
        all(checks),
        "windows 0 and 9 test ranges and 46,500-row minimum verified exactly",
    )
    assert all(checks)


# -- criterion 7: strategy oracle --------------------------------------------


def test_c07_strategy_oracle():
    spec = strategy.ContractSpec("PL", 2090.0, 1900.0, 50.0)
    timestamps = np.datetime64("2020-01-06T09:00:00", "s") + np.arange(3) * np.timedelta64(
        300, "s"
    )
    curve = strategy.simulate(
        timestamps, np.array([100.0, 101.0, 100.5]), np.array([1, -1]), spec
    )
    hand_ok = curve.pnl.tolist() == [0.0, 50.0, 75.0]

    rng = np.random.default_rng(707)
    dominance_ok = True
    for _ in range(1000):
        n = int(rng.integers(3, 40))
        prices = 100.0 + np.cumsum(rng.normal(0.0, 1.0, n))
        prices -= prices.min() - 1.0
        stamps = np.datetime64("2020-01-06T09:00:00", "s") + np.arange(n) * np.timedelta64(
            300, "s"
        )
        labels = rng.integers(-1, 2, n - 1)
        predicted = strategy.simulate(stamps, prices, labels, spec)
        perfect = strategy.simulate(
            stamps, prices, strategy.perfect_foresight_labels(prices), spec
        )
        if not np.all(perfect.pnl >= predicted.pnl):
            dominance_ok = False
            break
    report(
        "criterion 7 strategy oracle",
        hand_ok and dominance_ok,
        "hand-computed P&L exact; perfect foresight dominates 1000 random paths",
    )
    assert hand_ok
    assert dominance_ok


# -- criterion 8: reference Sharpe-to-capability consistency ------------------


def test_c08_capability_reference_rows():
    rows = ((3.29, 12.51), (2.07, 7.89), (1.48, 5.63), (1.29, 4.90), (1.11, 4.22))
    errors = [abs(strategy.capability_ratio(sr, 130) - cap) for sr, cap in rows]
    ok = all(e <= 0.03 for e in errors)
    report(
        "criterion 8 capability-ratio consistency",
        ok,
        f"five reference rows reproduced, max error {max(errors):.3f}",
    )
    assert ok


# -- criterion 9: parameter count ---------------------------------------------


def test_c09_parameter_count():
    topo = net.Topology((9895, 1000, 900, 800, 700, 129), 43)
    count = net.count_params(topo)
    # the published figure of 12,174,500 for this topology is not reproducible
    # from the layer sizes; the closed-form sum gives 12,168,829 (gap 5,671)
    ok = count == 12_168_829
    report(
        "criterion 9 parameter count",
        ok,
        f"count_params = {count:,}; known discrepancy vs published 12,174,500",
    )
    assert count == 12_168_829
    assert 12_174_500 - count == 5_671


# -- criterion 10: end-to-end determinism -------------------------------------


def _backtest_config(tmp_path: Path, out_dir: Path, prices: Path) -> Path:
    text = f"""
[data]
prices = {prices}
interval_minutes = 5

[features]
lags = 1,2
windows = 5
correlation_window = 10
label_threshold = 0.001

[topology]
hidden = 8

[training]
gamma_grid = 0.1,0.5
epochs = 3
minibatch_size = 64

[walkforward]
train_len = 400
test_len = 200
step = 100
n_windows = 2

[run]
seed = 23
out = {out_dir}

[synthetic]
kind = lag_rule
n_symbols = 2
n_rows = 1400
"""
    path = tmp_path / f"{out_dir.name}.ini"
    path.write_text(text)
    return path


def test_c10_end_to_end_determinism(tmp_path):
    """Same seed, different thread counts: byte-identical artifacts."""
    prices = tmp_path / "prices.csv"
    first_cfg = _backtest_config(tmp_path, tmp_path / "run_a", prices)
    second_cfg = _backtest_config(tmp_path, tmp_path / "run_b", prices)
    assert cli.main(["synth", "--config", str(first_cfg)]) == 0
    assert cli.main(["backtest", "--config", str(first_cfg), "--threads", "1"]) == 0
    assert cli.main(["backtest", "--config", str(second_cfg), "--threads", "2"]) == 0

    compared = 0
    mismatched = []
    for a in sorted((tmp_path / "run_a").rglob("*")):
        if a.is_dir():
            continue
        b = tmp_path / "run_b" / a.relative_to(tmp_path / "run_a")
        compared += 1
        if a.read_bytes() != b.read_bytes():
            mismatched.append(str(a.relative_to(tmp_path / "run_a")))
    ok = compared > 0 and not mismatched
    report(
        "criterion 10 end-to-end determinism",
        ok,
        f"{compared} artifacts byte-identical across 1 vs 2 threads",
    )
    assert compared >= 10
    assert mismatched == []


# -- criterion 11: halving rule ------------------------------------------------


def test_c11_halving_rule_on_constructed_traces():
    decreasing = trainer.halving_events([5.0, 4.0, 3.0, 2.0, 1.0])
    flat = trainer.halving_events([2.0] * 6)
    bump = trainer.halving_events([5.0, 4.0, 4.4, 3.0, 2.0])
    ok = decreasing == [] and flat == [1, 2, 3, 4, 5] and bump == [2]
    report(
        "criterion 11 halving rule",
        ok,
        f"decreasing {len(decreasing)} events; flat {len(flat)}/5 comparable epochs; "
        f"single bump {len(bump)}",
    )
    assert decreasing == []
    assert flat == list(range(1, 6))
    assert bump == [2]


# -- criterion 12: soft parallel speedup ---------------------------------------


def test_c12_soft_parallel_speedup():
    """512x512 product speedup at 4 threads; informational below 4 cores."""
    rng = np.random.default_rng(1212)
    a = rng.standard_normal((512, 512))
    b = rng.standard_normal((512, 512))

    def best_time(threads: int) -> float:
        mk.set_threads(threads)
        mk.matmul_tn(a, b)  # pay any thread-pool resize before timing
        best = float("inf")
        for _ in range(3):
            t0 = time.perf_counter()
            mk.matmul_tn(a, b)
            best = min(best, time.perf_counter() - t0)
        return best

    cores = os.cpu_count() or 1
    threads = min(4, mk.max_threads())
    serial = best_time(1)
    parallel = best_time(threads)
    speedup = serial / parallel
    detail = f"{speedup:.2f}x at {threads} threads on {cores} cores (serial {serial:.3f}s)"
    if cores < 4:
        report("criterion 12 soft speedup", True, detail + "; informational, < 4 cores")
        pytest.skip(f"host has {cores} cores; speedup reported: {detail}")
    report("criterion 12 soft speedup", speedup >= 2.0, detail)
    assert speedup >= 2.0
