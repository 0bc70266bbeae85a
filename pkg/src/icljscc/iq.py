"""Transmit/receive IQ imbalance and the widely-linear end-to-end channel."""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import transmit
from .cxmat import as_cmat
from .errors import ShapeError


class IqCase(str, Enum):
    CASE1 = "case1"
    CASE2 = "case2"


# (amplitude low, amplitude high, phase high); phases start at 0
IQ_RANGES = {
    IqCase.CASE1: (0.0, 1.0, 2.0 * np.pi),
    IqCase.CASE2: (0.8, 1.0, np.pi / 12.0),
}


@dataclass(frozen=True)
class IqParams:
    """Diagonals of the amplitude (A) and phase (Theta) mismatch matrices.

    Arrays have shape ``(..., M)``; leading axes index independent tasks.
    """

    a_t: np.ndarray
    theta_t: np.ndarray
    a_r: np.ndarray
    theta_r: np.ndarray

    @classmethod
    def balanced(cls, m, size=()):
        one = np.ones(tuple(size) + (m,))
        zero = np.zeros(tuple(size) + (m,))
        return cls(one, zero, one.copy(), zero.copy())


@dataclass(frozen=True)
class IqGMatrices:
    """Diagonals of G_t1, G_t2, G_r1, G_r2, each of shape ``(..., M)``."""

    g_t1: np.ndarray
    g_t2: np.ndarray
    g_r1: np.ndarray
    g_r2: np.ndarray

    def matrices(self):
        diag = lambda d: d[..., :, None] * np.eye(d.shape[-1])
        return tuple(diag(g) for g in (self.g_t1, self.g_t2, self.g_r1, self.g_r2))


def sample_iq(case, m, rng, size=()):
    lo, hi, phase_hi = IQ_RANGES[IqCase(case)]
    shape = tuple(size) + (m,)
    a_t = rng.uniform(lo, hi, shape)
    a_r = rng.uniform(lo, hi, shape)
    th_t = rng.uniform(0.0, phase_hi, shape)
    th_r = rng.uniform(0.0, phase_hi, shape)
    return IqParams(a_t, th_t, a_r, th_r)


def g_matrices(p):
    def pair(a, th):
        return (1.0 + a * np.exp(1j * th)) / 2.0, (1.0 - a * np.exp(-1j * th)) / 2.0

    g_t1, g_t2 = pair(np.asarray(p.a_t), np.asarray(p.theta_t))
    g_r1, g_r2 = pair(np.asarray(p.a_r), np.asarray(p.theta_r))
    return IqGMatrices(g_t1, g_t2, g_r1, g_r2)


def _widely_linear(g1, g2, x):
    x = as_cmat(x)
    if x.shape[-2] != g1.shape[-1]:
        raise ShapeError(f"IQ branch has {g1.shape[-1]} antennas, signal shape {x.shape}")
    return g1[..., :, None] * x + g2[..., :, None] * np.conj(x)


def apply_tx_iq(g, x):
    return _widely_linear(g.g_t1, g.g_t2, x)


def apply_rx_iq(g, y_rx):
    return _widely_linear(g.g_r1, g.g_r2, y_rx)


def transmit_impaired(task, g, x, rng=None, noise=None):
    """Tx IQ imbalance, then the MIMO channel, then Rx IQ imbalance."""
    return apply_rx_iq(g, transmit(task, apply_tx_iq(g, x), rng=rng, noise=noise))


def widely_linear_coeffs(h, g):
    """Closed form ``(B1, B2)`` with noiseless output ``B1 x + B2 conj(x)``."""
    h = as_cmat(h)
    gt1, gt2, gr1, gr2 = (z[..., :, None] for z in (g.g_t1, g.g_t2, g.g_r1, g.g_r2))
    hc = np.conj(h)
    # diag(d) @ M == d[:, None] * M ; M @ diag(d) == M * d[None, :]
    b1 = gr1 * (h * np.swapaxes(gt1, -1, -2)) + gr2 * (hc * np.swapaxes(np.conj(gt2), -1, -2))
    b2 = gr1 * (h * np.swapaxes(gt2, -1, -2)) + gr2 * (hc * np.swapaxes(np.conj(gt1), -1, -2))
    return b1, b2


def real_map(b1, b2):
    """2M x 2M real matrix acting on ``[Re x; Im x]`` for ``x -> B1 x + B2 conj(x)``."""
    p, q = b1 + b2, b1 - b2
    top = np.concatenate([p.real, -q.imag], axis=-1)
    bot = np.concatenate([p.imag, q.real], axis=-1)
    return np.concatenate([top, bot], axis=-2)
