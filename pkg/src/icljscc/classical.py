"""Classical baselines and context preprocessing.

LS channel estimation, two-step equalisation, channel inversion, SVD
precode/combine, and the open/closed-loop channel heatmaps. All routines
broadcast over leading batch axes.
"""
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .cxmat import as_cmat, hermitian, pinv, svd
from .errors import ShapeError


@dataclass(frozen=True)
class PilotBlock:
    x_p: np.ndarray
    y_p: np.ndarray

    def __post_init__(self):
        x, y = as_cmat(self.x_p), as_cmat(self.y_p)
        if x.shape[-1] != y.shape[-1] or x.shape[-1] < 1:
            raise ShapeError(f"pilot blocks disagree: x {x.shape}, y {y.shape}")
        object.__setattr__(self, "x_p", x)
        object.__setattr__(self, "y_p", y)

    @property
    def n(self):
        return self.x_p.shape[-1]


class HeatmapKind(str, Enum):
    OPEN_LOOP = "open"
    CLOSED_LOOP = "closed"


@dataclass(frozen=True)
class Heatmap:
    values: np.ndarray
    kind: HeatmapKind


def ls_channel_estimate(p):
    """Right pseudo-inverse LS estimate ``Y_p X_p^H (X_p X_p^H)^-1``.

    Falls back to ``Y_p pinv(X_p)`` (with a warning) when there are fewer
    pilots than antennas or the pilot Gram matrix is singular.
    """
    x, y = p.x_p, p.y_p
    m = x.shape[-2]
    xh = hermitian(x)
    if p.n < m:
        warnings.warn(f"{p.n} pilots for {m} antennas: LS is ill-posed, using pinv", RuntimeWarning)
        return y @ pinv(x)
    try:
        # H^T = solve((X X^H)^T, (Y X^H)^T)
        gram = x @ xh
        rhs = y @ xh
        return np.swapaxes(np.linalg.solve(np.swapaxes(gram, -1, -2), np.swapaxes(rhs, -1, -2)), -1, -2)
    except np.linalg.LinAlgError:
        warnings.warn("singular pilot Gram matrix, using pinv", RuntimeWarning)
        return y @ pinv(x)


def equalize_two_step(p, y, h_est=None):
    """Estimate the channel from pilots, then ``X_hat = pinv(H_hat) Y``."""
    if h_est is None:
        h_est = ls_channel_estimate(p)
    return pinv(h_est) @ as_cmat(y)


def invert_context(p, y, h_est=None):
    """Pre-multiply pilot outputs and data by ``pinv(H_hat)``."""
    if h_est is None:
        h_est = ls_channel_estimate(p)
    inv = pinv(h_est)
    return PilotBlock(p.x_p, inv @ p.y_p), inv @ as_cmat(y)


def svd_combiner(h_est):
    """``(Sigma^+ U^H, V)`` from the SVD of the estimated channel."""
    f = svd(h_est)
    keep = f.sigma > 1e-12 * f.sigma[..., :1]
    inv = np.divide(1.0, f.sigma, out=np.zeros_like(f.sigma), where=keep)
    return inv[..., :, None] * hermitian(f.u), hermitian(f.vh)


def svd_precode(h_est, x):
    return svd_combiner(h_est)[1] @ as_cmat(x)


def svd_combine(h_est, y):
    h_est = as_cmat(h_est)
    if h_est.shape[-1] != h_est.shape[-2]:
        raise ShapeError("svd_combine needs a square channel estimate")
    return svd_combiner(h_est)[0] @ as_cmat(y)


def _power_map(w, noise_var):
    nv = np.asarray(noise_var, dtype=float)
    nv = nv.reshape(nv.shape + (1, 1)) if nv.ndim else nv
    return nv * (w.real**2 + w.imag**2)


def heatmap_open(h_est, noise_var):
    """``sigma^2 (H_zf . conj(H_zf))`` with ``H_zf = pinv(H_hat)``."""
    return Heatmap(_power_map(pinv(h_est), noise_var), HeatmapKind.OPEN_LOOP)


def heatmap_closed(h_est, noise_var):
    comb, _ = svd_combiner(h_est)
    return Heatmap(_power_map(comb, noise_var), HeatmapKind.CLOSED_LOOP)


def reshape_context(values, patches):
    """Flatten a (batched) context matrix row-major and repeat it ``patches`` times."""
    if patches <= 0:
        raise ValueError("patches must be positive")
    values = np.asarray(getattr(values, "values", values), dtype=float)
    flat = values.reshape(values.shape[:-2] + (1, -1))
    return np.repeat(flat, patches, axis=-2)
