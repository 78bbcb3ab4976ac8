"""Deterministic RNG substream derivation.

One master seed fans out into independent named substreams (parameter init,
epoch subsampling, synthetic data, per-window seeds) so that, for example,
changing the epoch count never perturbs weight initialization.
"""

import numpy as np

STREAM_INIT = 1
STREAM_EPOCH = 2
STREAM_SYNTHETIC = 3
STREAM_WINDOW = 4


def seed_sequence(master_seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(path))


def derive_seed(master_seed: int, *path: int) -> int:
    """Stable 32-bit child seed for the given stream path."""
    return int(seed_sequence(master_seed, *path).generate_state(1)[0])
