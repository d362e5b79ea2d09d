"""Seed splitting shared by every sampler.

Replica ``r`` of an experiment with master seed ``s`` uses the 64-bit value
``split_seed(s, r)``: the first word of ``numpy.random.SeedSequence([s, r])``.
SeedSequence hashes its entropy with a well-mixed, documented algorithm, so
different ``(s, r)`` give effectively independent streams and the result never
depends on how replicas are scheduled.
"""
from __future__ import annotations

import numpy as np

__all__ = ["split_seed", "kernel_seed"]


def split_seed(master: int, index: int) -> int:
    """64-bit seed of replica ``index`` under ``master``."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1, np.uint64)[0])


def kernel_seed(seed) -> int:
    """32-bit seed for compiled kernels that keep their own generator state."""
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**63))
    return int(np.random.SeedSequence(seed).generate_state(1, dtype=np.uint32)[0])
