"""Deterministic derivation of per-purpose random generators.

All stochastic behavior in the platform is keyed by a 64-bit master seed
plus an integer namespace path, so that any step, session, or replicate can
be re-derived in isolation (resume, replay, and parallel execution all give
identical results).
"""

from __future__ import annotations

import numpy as np

# Namespaces for derived streams; keep values stable, they are part of the
# persisted-session replay contract.
NS_STEP = 1
NS_ASSIGN = 2
NS_SURVEY = 3
NS_USER = 4
NS_DATASET = 5
NS_REWARD = 6


def spawn_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator for `seed` at the integer namespace `path`."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(path)))
