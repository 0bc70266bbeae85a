import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icljscc import cxmat
from icljscc.errors import ShapeError

from conftest import crand


def test_matmul_identity_and_zero(rng):
    a = crand(rng, 2, 2)
    assert np.array_equal(cxmat.matmul(np.eye(2), a), a)
    assert np.array_equal(cxmat.matmul(a, np.zeros((2, 2))), np.zeros((2, 2)))


def test_matmul_i_squared():
    j = np.diag([1j, 1j])
    assert np.array_equal(cxmat.matmul(j, j), -np.eye(2))


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        cxmat.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_hermitian_examples(rng):
    s = np.array([[1.0, 2.0], [2.0, 5.0]])
    assert np.array_equal(cxmat.hermitian(s), s)
    a = np.array([[0, 1j], [0, 0]])
    assert np.array_equal(cxmat.hermitian(a), np.array([[0, 0], [-1j, 0]]))
    a, b = crand(rng, 2, 2), crand(rng, 2, 2)
    # expand (AB)^H entry by entry
    ab = a @ b
    expected = np.array([[np.conj(ab[j, i]) for j in range(2)] for i in range(2)])
    assert np.allclose(cxmat.hermitian(ab), expected, atol=1e-14)
    assert np.allclose(cxmat.hermitian(ab), cxmat.hermitian(b) @ cxmat.hermitian(a), atol=1e-14)
    assert np.array_equal(cxmat.hermitian(cxmat.hermitian(a)), a)


def test_hadamard(rng):
    a = crand(rng, 3, 2)
    assert np.array_equal(cxmat.hadamard(a, np.ones((3, 2))), a)
    assert np.array_equal(cxmat.hadamard(np.eye(2), np.conj(np.eye(2))), np.eye(2))
    p = cxmat.hadamard(a, np.conj(a))
    assert np.allclose(p.imag, 0) and np.all(p.real >= 0)
    assert np.allclose(p.real, np.abs(a) ** 2)
    with pytest.raises(ShapeError):
        cxmat.hadamard(a, np.ones((2, 3)))


def test_fro_norm():
    assert cxmat.fro_norm(np.ones((2, 2))) == 2.0
    assert cxmat.fro_norm(np.zeros((3, 3))) == 0.0
    assert cxmat.fro_norm(np.array([[3.0, 4.0], [0.0, 0.0]])) == 5.0


def test_fro_norm_matches_hadamard(rng):
    for _ in range(20):
        a = crand(rng, 4, 3)
        assert abs(cxmat.fro_norm(a) ** 2 - cxmat.hadamard(a, np.conj(a)).real.sum()) < 1e-12


def test_matmul_associative(rng):
    for _ in range(20):
        a, b, c = crand(rng, 3, 4), crand(rng, 4, 2), crand(rng, 2, 5)
        lhs, rhs = (a @ b) @ c, a @ (b @ c)
        assert cxmat.fro_norm(lhs - rhs) / cxmat.fro_norm(lhs) < 1e-10


def test_svd_diagonal(backend):
    f = cxmat.svd(np.diag([3.0, 1.0]))
    assert np.allclose(f.sigma, [3.0, 1.0])
    assert np.allclose(np.abs(f.u), np.eye(2))
    assert np.allclose(f.u, np.eye(2))  # gauge fixes the phase


def test_svd_unitary_has_unit_singular_values(backend, rng):
    q, _ = np.linalg.qr(crand(rng, 4, 4))
    assert np.allclose(cxmat.svd(q).sigma, 1.0, atol=1e-12)


def _closed_form_2x2_singular_values(a):
    # eigenvalues of the Hermitian Gram matrix a^H a via the quadratic formula
    g = a.conj().T @ a
    tr = (g[0, 0] + g[1, 1]).real
    det = (g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]).real
    disc = np.sqrt(max(tr * tr / 4 - det, 0.0))
    return np.sqrt([tr / 2 + disc, max(tr / 2 - disc, 0.0)])


def test_svd_2x2_closed_form(backend, rng):
    for _ in range(50):
        a = crand(rng, 2, 2)
        assert np.allclose(cxmat.svd(a).sigma, _closed_form_2x2_singular_values(a), rtol=1e-10)


@pytest.mark.parametrize("shape", [(1, 1), (2, 2), (3, 3), (5, 5), (8, 8), (2, 3), (3, 2), (8, 5), (4, 7)])
def test_svd_invariants(backend, rng, shape):
    for _ in range(10):
        a = crand(rng, *shape)
        f = cxmat.svd(a)
        k = min(shape)
        assert f.u.shape == (shape[0], k) and f.vh.shape == (k, shape[1])
        err = cxmat.fro_norm(a - f.reconstruct()) / max(1.0, cxmat.fro_norm(a))
        assert err < 1e-10
        assert np.allclose(f.u.conj().T @ f.u, np.eye(k), atol=1e-10)
        assert np.allclose(f.vh @ f.vh.conj().T, np.eye(k), atol=1e-10)
        assert np.all(np.diff(f.sigma) <= 0) and np.all(f.sigma >= 0)
        assert np.allclose(f.sigma, np.linalg.svd(a, compute_uv=False), rtol=1e-10, atol=1e-12)


def test_svd_gauge_is_real_nonnegative(rng):
    f = cxmat.svd(crand(rng, 5, 5))
    lead = np.argmax(np.abs(f.u), axis=0)
    piv = f.u[lead, np.arange(5)]
    assert np.allclose(piv.imag, 0, atol=1e-15) and np.all(piv.real >= 0)


def test_svd_deterministic_across_backends(rng):
    from icljscc import _accel

    a = crand(rng, 6, 6)
    old = _accel.backend()
    try:
        results = []
        for be in ("numba", "numpy"):
            _accel.set_backend(be)
            results.append(cxmat.svd(a))
    finally:
        _accel.set_backend(old)
    assert np.allclose(results[0].u, results[1].u, atol=1e-12)
    assert np.allclose(results[0].sigma, results[1].sigma, rtol=1e-13)


def test_svd_rank_deficient(backend, rng):
    b = crand(rng, 4, 2)
    a = b @ crand(rng, 2, 4)  # rank 2
    f = cxmat.svd(a)
    assert np.all(f.sigma[2:] < 1e-12 * f.sigma[0])
    assert np.allclose(f.u.conj().T @ f.u, np.eye(4), atol=1e-10)
    assert cxmat.fro_norm(a - f.reconstruct()) < 1e-10 * cxmat.fro_norm(a)
    z = cxmat.svd(np.zeros((3, 3)))
    assert np.all(z.sigma == 0) and np.allclose(z.u.conj().T @ z.u, np.eye(3))


def test_svd_batched_matches_single(backend, rng):
    a = crand(rng, 7, 3, 3)
    fb = cxmat.svd(a)
    for i in range(7):
        fi = cxmat.svd(a[i])
        assert np.allclose(fb.sigma[i], fi.sigma) and np.allclose(fb.u[i], fi.u)


def test_svd_rejects_nonfinite():
    with pytest.raises(ValueError):
        cxmat.svd(np.array([[np.nan, 0], [0, 1]]))


def test_svd_iteration_cap(monkeypatch, rng):
    from icljscc.errors import ConvergenceError

    monkeypatch.setattr(cxmat, "SVD_MAX_SWEEPS", 1)
    with pytest.raises(ConvergenceError):
        cxmat.svd(crand(rng, 6, 6))


def _moore_penrose_residuals(a, p):
    return (
        np.abs(a @ p @ a - a).max(),
        np.abs(p @ a @ p - p).max(),
        np.abs((a @ p).conj().T - a @ p).max(),
        np.abs((p @ a).conj().T - p @ a).max(),
    )


def test_pinv_examples(backend, rng):
    a = crand(rng, 3, 3)
    assert np.allclose(cxmat.pinv(a) @ a, np.eye(3), atol=1e-10)
    assert np.allclose(cxmat.pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    w = crand(rng, 2, 3)
    assert np.abs(w @ cxmat.pinv(w) @ w - w).max() < 1e-8


@settings(max_examples=60, deadline=None)
@given(
    m=st.integers(1, 6),
    n=st.integers(1, 6),
    rank=st.integers(0, 6),
    seed=st.integers(0, 2**32 - 1),
)
def test_pinv_moore_penrose(m, n, rank, seed):
    r = np.random.default_rng(seed)
    rank = min(rank, m, n)
    a = crand(r, m, rank) @ crand(r, rank, n) if rank else np.zeros((m, n), complex)
    assert max(_moore_penrose_residuals(a, cxmat.pinv(a))) < 1e-8
