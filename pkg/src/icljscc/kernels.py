"""Hot loops: one-sided (Hestenes) Jacobi sweeps over batches of small complex matrices.

Both paths apply the same rotations in the same order; the numba kernel walks
the batch one matrix at a time, the numpy path vectorises across the batch and
masks out matrices that have already converged.
"""
import math

import numpy as np

from . import _accel

GELU_C = math.sqrt(2.0 / math.pi)


@_accel.njit
def _jacobi_numba(w, v, tol, max_sweeps):
    nb, m, n = w.shape
    sweeps = np.zeros(nb, dtype=np.int64)
    converged = np.zeros(nb, dtype=np.bool_)
    for b in range(nb):
        for sweep in range(max_sweeps):
            off = 0.0
            for p in range(n - 1):
                for q in range(p + 1, n):
                    alpha = 0.0
                    beta = 0.0
                    gamma = 0j
                    for i in range(m):
                        wp = w[b, i, p]
                        wq = w[b, i, q]
                        alpha += wp.real * wp.real + wp.imag * wp.imag
                        beta += wq.real * wq.real + wq.imag * wq.imag
                        gamma += wp.conjugate() * wq
                    g = abs(gamma)
                    if g == 0.0 or alpha == 0.0 or beta == 0.0:
                        continue
                    rel = g / np.sqrt(alpha * beta)
                    if rel > off:
                        off = rel
                    if rel < tol:
                        continue
                    ph = (gamma / g).conjugate()
                    zeta = (beta - alpha) / (2.0 * g)
                    sgn = 1.0 if zeta >= 0.0 else -1.0
                    t = sgn / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = c * t
                    for i in range(m):
                        wp = w[b, i, p]
                        wq = w[b, i, q] * ph
                        w[b, i, p] = c * wp - s * wq
                        w[b, i, q] = s * wp + c * wq
                    for i in range(n):
                        vp = v[b, i, p]
                        vq = v[b, i, q] * ph
                        v[b, i, p] = c * vp - s * vq
                        v[b, i, q] = s * vp + c * vq
            sweeps[b] = sweep + 1
            if off < tol:
                converged[b] = True
                break
    return sweeps, converged


def _jacobi_numpy(w, v, tol, max_sweeps):
    nb, m, n = w.shape
    sweeps = np.zeros(nb, dtype=np.int64)
    converged = np.zeros(nb, dtype=bool)
    active = np.ones(nb, dtype=bool)
    for sweep in range(max_sweeps):
        off = np.zeros(nb)
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp, wq = w[:, :, p], w[:, :, q]
                alpha = np.sum(wp.real**2 + wp.imag**2, axis=1)
                beta = np.sum(wq.real**2 + wq.imag**2, axis=1)
                gamma = np.sum(wp.conj() * wq, axis=1)
                g = np.abs(gamma)
                live = active & (g > 0) & (alpha > 0) & (beta > 0)
                rel = np.zeros(nb)
                rel[live] = g[live] / np.sqrt(alpha[live] * beta[live])
                off = np.maximum(off, rel)
                rot = live & (rel >= tol)
                if not rot.any():
                    continue
                idx = np.nonzero(rot)[0]
                gr = g[idx]
                ph = (gamma[idx] / gr).conj()
                zeta = (beta[idx] - alpha[idx]) / (2.0 * gr)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for mat in (w, v):
                    cp = mat[idx, :, p]
                    cq = mat[idx, :, q] * ph[:, None]
                    mat[idx, :, p] = c[:, None] * cp - s[:, None] * cq
                    mat[idx, :, q] = s[:, None] * cp + c[:, None] * cq
        sweeps[active] = sweep + 1
        done = active & (off < tol)
        converged |= done
        active &= ~done
        if not active.any():
            break
    return sweeps, converged


def jacobi_sweeps(a, tol=1e-14, max_sweeps=100):
    """Orthogonalise the columns of each ``a[b]`` (shape ``(B, m, n)``, ``m >= n``).

    Returns ``(w, v, sweeps, converged)`` with ``a[b] @ v[b] == w[b]`` and the
    columns of ``w[b]`` mutually orthogonal; ``v[b]`` is unitary.
    """
    w = np.array(a, dtype=np.complex128, order="C", copy=True)
    nb, _, n = w.shape
    v = np.broadcast_to(np.eye(n, dtype=np.complex128), (nb, n, n)).copy()
    if _accel.backend() == "numba":
        sweeps, converged = _jacobi_numba(w, v, float(tol), int(max_sweeps))
    else:
        sweeps, converged = _jacobi_numpy(w, v, float(tol), int(max_sweeps))
    return w, v, sweeps, converged


def gelu_forward(u):
    """Tanh-approximated GELU; returns ``(gelu(u), tanh term)`` for the backward pass.

    Stays on numpy in both backends: its SIMD tanh beats a scalar numba loop.
    """
    t = np.tanh(GELU_C * (u + 0.044715 * u * u * u))
    return 0.5 * u * (1.0 + t), t


def gelu_backward(du, u, t):
    dt = GELU_C * (1.0 + 0.134145 * u * u) * (1.0 - t * t)
    return du * (0.5 * (1.0 + t) + 0.5 * u * dt)
