"""Reproducible per-path random streams.

Monte Carlo runs index a substream by (seed, path number) through a seed
sequence spawn key, so path i sees the same draws no matter how paths are
distributed over workers or in what order they run.
"""

from __future__ import annotations

import numpy as np

__all__ = ["path_stream"]


def path_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for one path, keyed by (seed, path index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))
