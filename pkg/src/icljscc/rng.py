"""Seeded, splittable random streams.

Every experiment cell derives its generators from ``(seed, *key)`` through
``numpy.random.SeedSequence``; each named purpose (channel draws, noise,
pilots, ...) gets its own Philox counter stream, so changing how many noise
samples one component consumes never shifts another component's draws.
"""
from dataclasses import dataclass

import numpy as np

STREAM_NAMES = ("channel", "noise", "pilots", "iq", "init", "data", "eval")


def generator(seed, *key):
    """A Philox generator for ``seed`` and an integer spawn key."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Streams:
    channel: np.random.Generator
    noise: np.random.Generator
    pilots: np.random.Generator
    iq: np.random.Generator
    init: np.random.Generator
    data: np.random.Generator
    eval: np.random.Generator


def streams(seed, *key):
    return Streams(*(generator(seed, *key, i) for i in range(len(STREAM_NAMES))))


def crandn(rng, shape, var=1.0):
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    z = rng.standard_normal(shape + (2,))
    return np.sqrt(var / 2.0) * (z[..., 0] + 1j * z[..., 1])
