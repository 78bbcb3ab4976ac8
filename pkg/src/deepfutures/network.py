"""Fully connected multi-symbol direction classifier.

The network maps a feature row to one 3-way probability block per symbol:
hidden layers are sigmoid-activated, the output layer applies an independent
softmax within each symbol's 3-entry block (classes ordered -1, 0, +1), and
the loss is cross-entropy averaged per observation per symbol.

All matrix products go through the deterministic kernels in
:mod:`deepfutures.matrixkit`, so forward/backward results are bitwise
reproducible and independent of the thread count.
"""

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from . import matrixkit as mk
from .errors import DataFormatError, ShapeError

CHECKPOINT_MAGIC = b"DFN1"
CHECKPOINT_VERSION = 1

# Weight init: zero-mean Gaussian with this standard deviation.
INIT_WEIGHT_STD = 0.01
HIDDEN_BIAS_INIT = 1.0


@dataclass(frozen=True)
class Topology:
    """Layer widths [n0, n1, ..., nL]; the output width must be 3 * n_symbols."""

    layer_sizes: tuple[int, ...]
    n_symbols: int

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ShapeError("topology needs at least an input and an output layer")
        if any(n < 1 for n in self.layer_sizes):
            raise ShapeError(f"all layer sizes must be >= 1, got {self.layer_sizes}")
        if self.layer_sizes[-1] != 3 * self.n_symbols:
            raise ShapeError(
                f"output layer must have 3 * n_symbols = {3 * self.n_symbols} units, "
                f"got {self.layer_sizes[-1]}"
            )

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_layers(self) -> int:
        """Number of weighted layers L."""
        return len(self.layer_sizes) - 1


@dataclass
class NetworkParams:
    """Per-layer weight matrices [n_{l-1} x n_l] and bias vectors of length n_l."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    n_symbols: int

    @property
    def topology(self) -> Topology:
        sizes = (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)
        return Topology(sizes, self.n_symbols)


@dataclass
class ForwardCache:
    """Intermediate state of one batched forward pass.

    activations[0] is the input batch; activations[l] for l >= 1 is the layer-l
    output, all [batch x n_l].  pre_activations[l-1] holds the layer-l weighted
    sums before the nonlinearity.
    """

    activations: list[np.ndarray]
    pre_activations: list[np.ndarray]
    batch: int

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


@dataclass
class Gradients:
    """Loss gradients, shaped exactly like NetworkParams."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


def count_params(topo: Topology) -> int:
    """Total learned parameter count: sum of n_{l-1} * n_l + n_l over layers."""
    sizes = topo.layer_sizes
    return sum(sizes[l - 1] * sizes[l] + sizes[l] for l in range(1, len(sizes)))


def init_params(topo: Topology, seed: int) -> NetworkParams:
    """Seeded Gaussian weight init via inverse-CDF transform of MT19937 uniforms.

    Weights ~ N(0, 0.01 std); hidden biases start at 1.0, output biases at 0.
    The same seed always yields bitwise-identical parameters.
    """
    gen = np.random.Generator(np.random.MT19937(seed))
    weights = []
    biases = []
    sizes = topo.layer_sizes
    n_layers = topo.n_layers
    for l in range(1, n_layers + 1):
        u = gen.random((sizes[l - 1], sizes[l]))
        # random() can yield exactly 0, whose normal quantile is -inf
        u = np.maximum(u, 2.0**-53)
        weights.append(INIT_WEIGHT_STD * ndtri(u))
        fill = HIDDEN_BIAS_INIT if l < n_layers else 0.0
        biases.append(np.full(sizes[l], fill, dtype=np.float64))
    return NetworkParams(weights=weights, biases=biases, n_symbols=topo.n_symbols)


def _block_softmax(s: np.ndarray, n_symbols: int) -> np.ndarray:
    """Softmax applied independently within each symbol's 3-entry block."""
    b = s.shape[0]
    blocks = s.reshape(b, n_symbols, 3)
    shifted = blocks - blocks.max(axis=2, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=2, keepdims=True)).reshape(b, 3 * n_symbols)


def forward(params: NetworkParams, x: np.ndarray) -> ForwardCache:
    """Batched forward pass; x is [batch x n_inputs], rows are observations."""
    x = mk.as_matrix(x, "x")
    if x.shape[1] != params.weights[0].shape[0]:
        raise ShapeError(
            f"input width {x.shape[1]} does not match first layer width "
            f"{params.weights[0].shape[0]}"
        )
    if not np.isfinite(x).all():
        raise ValueError("forward pass requires finite inputs")

    n_layers = len(params.weights)
    activations = [x]
    pre_activations = []
    for l in range(n_layers):
        s = mk.matmul_tn(mk.transpose(activations[-1]), params.weights[l])
        s = s + params.biases[l][None, :]
        pre_activations.append(s)
        if l < n_layers - 1:
            activations.append(mk.map_sigmoid(s))
        else:
            activations.append(_block_softmax(s, params.n_symbols))
    return ForwardCache(activations=activations, pre_activations=pre_activations, batch=x.shape[0])


def cross_entropy(yhat: np.ndarray, y: np.ndarray) -> float:
    """Cross-entropy of predicted block probabilities against one-hot targets.

    yhat is [batch x K] (rows are observations); y is a one-hot target slice
    [K x batch] (columns are observations).  The summed loss is averaged per
    observation per symbol, so values are comparable across batch sizes.
    """
    if yhat.shape != (y.shape[1], y.shape[0]):
        raise ShapeError(f"prediction shape {yhat.shape} does not match targets {y.shape}")
    k = y.shape[0]
    if k % 3 != 0:
        raise ShapeError(f"target rows must be a multiple of 3, got {k}")
    n_symbols = k // 3
    b = yhat.shape[0]
    true_probs = yhat.T[y.astype(bool)]
    if np.any(true_probs <= 0.0):
        warnings.warn("clamping non-positive predicted probabilities in cross_entropy")
        true_probs = np.maximum(true_probs, 1e-15)
    return float(-np.sum(np.log(true_probs)) / (b * n_symbols))


def backward(params: NetworkParams, cache: ForwardCache, y: np.ndarray) -> Gradients:
    """Mini-batch backpropagation for the block-softmax cross-entropy loss.

    The output delta is (yhat - y); hidden deltas follow the sigmoid recursion
    delta_{l-1} = (delta_l @ W_l^T) * X_{l-1} * (1 - X_{l-1}).  Gradients carry
    the same per-observation, per-symbol averaging as :func:`cross_entropy`,
    so one SGD step is exactly params -= gamma * grad.
    """
    n_layers = len(params.weights)
    if len(cache.activations) != n_layers + 1:
        raise ShapeError(
            f"cache has {len(cache.activations) - 1} layers, params have {n_layers}"
        )
    b = cache.batch
    k = y.shape[0]
    if y.shape[1] != b or k != params.weights[-1].shape[1]:
        raise ShapeError(f"target shape {y.shape} does not match batch {b} x {k} output")
    scale = 1.0 / (b * params.n_symbols)

    delta = (cache.output - y.T) * scale
    grad_w: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for l in range(n_layers - 1, -1, -1):
        grad_w[l] = mk.matmul_tn(cache.activations[l], delta)
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            hidden = cache.activations[l]
            delta = mk.matmul_nt(delta, params.weights[l]) * hidden * (1.0 - hidden)
    return Gradients(weights=grad_w, biases=grad_b)


def predict_labels(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Per-symbol argmax labels in {-1, 0, +1}; ties break toward 0, then -1."""
    probs = forward(params, x).output
    b = probs.shape[0]
    blocks = probs.reshape(b, params.n_symbols, 3)
    # argmax returns the first maximum, so scanning in preference order
    # (0, -1, +1) implements the tie rule.
    preference = blocks[:, :, [1, 0, 2]]
    picked = preference.argmax(axis=2)
    return np.array([0, -1, 1], dtype=np.int64)[picked]


def save_checkpoint(params: NetworkParams, path: str | Path) -> None:
    """Write params in the binary checkpoint format (magic DFN1, little-endian)."""
    sizes = params.topology.layer_sizes
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<QQ", CHECKPOINT_VERSION, len(sizes)))
        fh.write(np.asarray(sizes, dtype="<u8").tobytes())
        for w, bias in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(bias, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> NetworkParams:
    """Read a DFN1 checkpoint; save(load(p)) is byte-identical to p."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise DataFormatError(f"bad checkpoint magic {magic!r} in {path}")
        version, n_sizes = struct.unpack("<QQ", fh.read(16))
        if version != CHECKPOINT_VERSION:
            raise DataFormatError(f"unsupported checkpoint version {version}")
        sizes = np.frombuffer(fh.read(8 * n_sizes), dtype="<u8").astype(int)
        if sizes[-1] % 3 != 0:
            raise DataFormatError(f"output width {sizes[-1]} is not a multiple of 3")
        weights = []
        biases = []
        for l in range(1, len(sizes)):
            n_in, n_out = int(sizes[l - 1]), int(sizes[l])
            w = np.frombuffer(fh.read(8 * n_in * n_out), dtype="<f8").reshape(n_in, n_out)
            bias = np.frombuffer(fh.read(8 * n_out), dtype="<f8")
            weights.append(w.copy())
            biases.append(bias.copy())
    return NetworkParams(weights=weights, biases=biases, n_symbols=int(sizes[-1]) // 3)
