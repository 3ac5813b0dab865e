"""Deterministic random stream derivation.

Every stochastic routine in the package receives an integer seed and
derives child streams through ``numpy.random.SeedSequence`` with an
explicit spawn key. The key acts as a counter: stream ``k`` of a run is
``SeedSequence(entropy=seed, spawn_key=(k, ...))``, so per-replicate,
per-tree, and per-block streams are reproducible functions of
``(seed, index)`` alone and never depend on execution order or worker
count.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def check_seed(seed: int) -> int:
    """Validate a user-supplied master seed and return it unchanged."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    return int(seed)


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for stream ``key`` of master ``seed``."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=check_seed(seed), spawn_key=tuple(key))
    )


def derive_seed(seed: int, *key: int) -> int:
    """Collapse (seed, key) into a fresh integer seed for a child run."""
    seq = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=tuple(key))
    return int(seq.generate_state(1, np.uint64)[0])
