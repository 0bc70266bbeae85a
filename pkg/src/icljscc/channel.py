"""Quasi-static block-fading MIMO link ``Y = H X + W``."""
from dataclasses import dataclass

import numpy as np

from .cxmat import as_cmat, fro_norm
from .errors import DegenerateInputError, ShapeError
from .rng import crandn


@dataclass(frozen=True)
class LinkConfig:
    m: int = 2
    l: int = 256
    power: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.l < 1:
            raise ValueError("m and l must be >= 1")
        if not self.power > 0:
            raise ValueError("power must be positive")


@dataclass(frozen=True)
class ChannelTask:
    """One equalisation task: channel matrix ``h`` (possibly batched) and noise variance."""

    h: np.ndarray
    noise_var: float

    def __post_init__(self):
        h = as_cmat(self.h)
        if h.shape[-1] != h.shape[-2]:
            raise ShapeError(f"channel must be square, got {h.shape}")
        if not np.all(np.asarray(self.noise_var) > 0):
            raise ValueError("noise_var must be positive")
        object.__setattr__(self, "h", h)

    @property
    def m(self):
        return self.h.shape[-1]


def sample_channel(rng, m, size=()):
    """i.i.d. CN(0, 1) Rayleigh entries, shape ``size + (m, m)``."""
    return crandn(rng, tuple(size) + (m, m))


def sample_task(cfg, noise_var, rng, size=()):
    return ChannelTask(sample_channel(rng, cfg.m, size), noise_var)


def sample_noise(rng, shape, noise_var):
    return crandn(rng, tuple(shape), np.asarray(noise_var, dtype=float))


def transmit(task, x, rng=None, noise=None):
    """``H X + W`` with ``W`` i.i.d. CN(0, sigma^2).

    Pass ``noise`` to reuse a fixed draw (zeros for the noiseless path); the
    generator is then not touched.
    """
    x = as_cmat(x)
    if x.shape[-2] != task.m:
        raise ShapeError(f"x must have {task.m} rows, got shape {x.shape}")
    y = task.h @ x
    if noise is None:
        if rng is None:
            raise ValueError("transmit needs either rng or an explicit noise array")
        var = np.asarray(task.noise_var, dtype=float)
        var = var.reshape(var.shape + (1, 1)) if var.ndim else var
        noise = crandn(rng, y.shape, 1.0) * np.sqrt(var)
    noise = np.asarray(noise)
    if noise.shape != y.shape:
        raise ShapeError(f"noise shape {noise.shape} does not match output {y.shape}")
    return y + noise


def normalize_power(x, p):
    """Scale each block so that ``||X||_F^2 / (M L) == p`` exactly."""
    x = as_cmat(x)
    norm = fro_norm(x)
    if np.any(norm == 0):
        raise DegenerateInputError("cannot normalise an all-zero block")
    ml = x.shape[-1] * x.shape[-2]
    scale = np.sqrt(p * ml) / norm
    return x * np.asarray(scale)[..., None, None]


def snr_db(p, noise_var):
    return 10.0 * np.log10(p / noise_var)


def noise_var_for_snr(snr, p=1.0):
    return p * 10.0 ** (-np.asarray(snr, dtype=float) / 10.0)
