"""Deterministic counter-based random streams.

A draw is a pure function of ``(seed, stream, a, b)``: typically ``a`` is an
agent id and ``b`` folds in the day and a sub-index. Results therefore do not
depend on evaluation order or thread count.
"""
from enum import IntEnum

import numpy as np
from scipy.special import ndtri

from . import kernels


class Stream(IntEnum):
    KICKOUT = 1
    INFECT = 2
    ATTRIBUTE = 3
    HEALTH_GATE = 4
    HEALTH_BRANCH = 5
    ONLINE_SHOP = 6
    QUARANTINE = 7
    TRACE = 8
    ACTION_SOFT = 9
    ACTION_GATE = 10
    ACTION_RESAMPLE = 11
    SEEDING = 12
    EPISODE = 13
    BUFFER = 14
    SHUFFLE = 15
    INIT = 16


SUB = 32  # sub-indices per day in the ``b`` counter


def day_counter(day, sub=0):
    return np.asarray(day, dtype=np.int64) * SUB + sub


def uniform(seed, stream, a, b=0, backend=None):
    mod = backend or kernels.default
    return mod.uniform(int(seed), int(stream), a, b)


def normal(seed, stream, a, b=0, backend=None):
    """Standard normal draws by inverse CDF of the counter uniforms."""
    u = uniform(seed, stream, a, b, backend)
    return ndtri(u)


def derive_seed(seed, *parts):
    """Child seed for (seed, parts...), e.g. one per episode."""
    h = int(seed)
    for p in parts:
        h = kernels._kernels_py.stream_key(h, int(p) + 1)
    return h


def generator(seed, *parts):
    """A numpy Generator keyed by a derived seed, for non-hot-path sampling."""
    return np.random.default_rng(derive_seed(seed, *parts))
