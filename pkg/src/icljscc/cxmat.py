"""Small dense complex linear algebra.

Matrices are plain ``complex128`` numpy arrays. Every routine accepts a stack
of matrices (leading batch axes) as well as a single 2-D matrix.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ShapeError
from .kernels import jacobi_sweeps

SVD_TOL = 1e-14
SVD_MAX_SWEEPS = 100
PINV_RCOND = 1e-12


def as_cmat(a):
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim < 2:
        raise ShapeError(f"expected a matrix, got shape {a.shape}")
    return a


def matmul(a, b):
    a, b = as_cmat(a), as_cmat(b)
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def hermitian(a):
    return np.conj(np.swapaxes(as_cmat(a), -1, -2))


def hadamard(a, b):
    a, b = as_cmat(a), as_cmat(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard needs equal shapes, got {a.shape} and {b.shape}")
    return a * b


def fro_norm(a):
    a = as_cmat(a)
    return np.sqrt(np.sum(a.real**2 + a.imag**2, axis=(-2, -1)))


@dataclass(frozen=True)
class SvdFactors:
    u: np.ndarray
    sigma: np.ndarray
    vh: np.ndarray

    def reconstruct(self):
        return (self.u * self.sigma[..., None, :]) @ self.vh


def _complete_columns(u, good):
    """Fill the columns of ``u`` flagged ``~good`` with an orthonormal completion."""
    m, k = u.shape
    basis = [u[:, j] for j in range(k) if good[j]]
    out = u.copy()
    cand = iter(np.eye(m, dtype=np.complex128))
    for j in range(k):
        if good[j]:
            continue
        for e in cand:
            vec = e.copy()
            for _ in range(2):
                for q in basis:
                    vec -= q * np.vdot(q, vec)
            nrm = np.linalg.norm(vec)
            if nrm > 1e-8:
                vec /= nrm
                basis.append(vec)
                out[:, j] = vec
                break
    return out


def _tall_svd(a):
    """Thin SVD of a ``(B, m, n)`` stack with ``m >= n``: returns U, sigma, V."""
    w, v, _, converged = jacobi_sweeps(a, SVD_TOL, SVD_MAX_SWEEPS)
    if not converged.all():
        raise ConvergenceError(
            f"Jacobi SVD did not converge within {SVD_MAX_SWEEPS} sweeps "
            f"for {int((~converged).sum())} matrices"
        )
    sigma = np.sqrt(np.sum(w.real**2 + w.imag**2, axis=1))
    order = np.argsort(-sigma, axis=1, kind="stable")
    sigma = np.take_along_axis(sigma, order, axis=1)
    w = np.take_along_axis(w, order[:, None, :], axis=2)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    m, n = w.shape[1:]
    floor = max(m, n) * np.finfo(float).eps * sigma[:, :1]
    good = (sigma > floor) & (sigma > 0)
    u = np.divide(w, sigma[:, None, :], out=np.zeros_like(w), where=good[:, None, :])
    for b in np.nonzero(~good.all(axis=1))[0]:
        u[b] = _complete_columns(u[b], good[b])
    return u, sigma, v


def svd(a):
    """Thin SVD ``a = u @ diag(sigma) @ vh`` with sigma descending.

    Gauge: the largest-magnitude entry of each column of ``u`` is real and
    non-negative, so factorisations are reproducible.
    """
    a = as_cmat(a)
    if not np.all(np.isfinite(a)):
        raise ValueError("svd input contains non-finite entries")
    batch, (m, n) = a.shape[:-2], a.shape[-2:]
    flat = a.reshape((-1, m, n))
    if m >= n:
        u, sigma, v = _tall_svd(flat)
        vh = np.conj(np.swapaxes(v, 1, 2))
    else:
        ub, sigma, vb = _tall_svd(np.conj(np.swapaxes(flat, 1, 2)))
        u = vb
        vh = np.conj(np.swapaxes(ub, 1, 2))
    k = sigma.shape[1]
    lead = np.argmax(np.abs(u), axis=1)
    piv = np.take_along_axis(u, lead[:, None, :], axis=1)[:, 0, :]
    mag = np.abs(piv)
    phase = np.divide(piv, mag, out=np.ones_like(piv), where=mag > 0)
    u = u * np.conj(phase)[:, None, :]
    vh = vh * phase[:, :, None]
    return SvdFactors(
        u.reshape(batch + (m, k)),
        sigma.reshape(batch + (k,)),
        vh.reshape(batch + (k, n)),
    )


def pinv(a, rcond=PINV_RCOND):
    """Moore-Penrose pseudo-inverse; singular values <= rcond * sigma_max count as zero."""
    f = svd(a)
    cutoff = rcond * f.sigma[..., :1]
    keep = f.sigma > cutoff
    inv = np.divide(1.0, f.sigma, out=np.zeros_like(f.sigma), where=keep)
    return (hermitian(f.vh) * inv[..., None, :]) @ hermitian(f.u)
