import numpy as np
import pytest

from icljscc import iq
from icljscc.channel import ChannelTask, transmit
from icljscc.errors import ShapeError
from icljscc.iq import IqParams
from icljscc.rng import generator

from conftest import crand


def test_case2_ranges():
    p = iq.sample_iq("case2", 4, generator(0), (1000,))
    for a in (p.a_t, p.a_r):
        assert a.min() >= 0.8 and a.max() <= 1.0
    for th in (p.theta_t, p.theta_r):
        assert th.min() >= 0.0 and th.max() <= np.pi / 12


def test_case1_amplitude_mean():
    p = iq.sample_iq("case1", 2, generator(1), (50_000,))
    assert abs(p.a_t.mean() - 0.5) < 0.01 and abs(p.a_r.mean() - 0.5) < 0.01
    assert p.theta_t.max() < 2 * np.pi and p.theta_t.min() >= 0


def test_sample_iq_reproducible():
    a = iq.sample_iq("case1", 3, generator(5))
    b = iq.sample_iq("case1", 3, generator(5))
    assert all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("a_t", "theta_t", "a_r", "theta_r"))


def test_g_matrices_special_cases():
    g = iq.g_matrices(IqParams.balanced(3))
    assert np.allclose(g.g_t1, 1) and np.allclose(g.g_t2, 0)
    assert np.allclose(g.g_r1, 1) and np.allclose(g.g_r2, 0)
    z = np.zeros(2)
    g = iq.g_matrices(IqParams(z, z, z, z))
    assert np.allclose(g.g_t1, 0.5) and np.allclose(g.g_t2, 0.5)
    pi = np.full(2, np.pi)
    g = iq.g_matrices(IqParams(np.ones(2), pi, np.ones(2), pi))
    assert np.allclose(g.g_t1, 0, atol=1e-15) and np.allclose(g.g_t2, 1)
    mats = g.matrices()
    assert mats[0].shape == (2, 2) and np.allclose(mats[1], np.eye(2))


def test_g_reconstruction(rng):
    p = iq.sample_iq("case1", 3, generator(2))
    g = iq.g_matrices(p)
    # G1 + conj(G2) = I + ... ; G1 - conj(G2) = A e^{j theta}
    assert np.allclose(g.g_t1 + np.conj(g.g_t2), 1.0)
    assert np.allclose(g.g_t1 - np.conj(g.g_t2), p.a_t * np.exp(1j * p.theta_t))


def test_balanced_is_identity(rng):
    g = iq.g_matrices(IqParams.balanced(2))
    x = crand(rng, 2, 6)
    assert np.allclose(iq.apply_tx_iq(g, x), x)
    assert np.allclose(iq.apply_rx_iq(g, x), x)
    task = ChannelTask(crand(rng, 2, 2), 0.1)
    w = crand(rng, 2, 6)
    assert np.allclose(iq.transmit_impaired(task, g, x, noise=w), transmit(task, x, noise=w))


def test_zero_amplitude_keeps_real_part(rng):
    z = np.zeros(2)
    g = iq.g_matrices(IqParams(z, z, z, z))
    x = crand(rng, 2, 4)
    assert np.allclose(iq.apply_tx_iq(g, x), x.real)
    assert np.allclose(iq.apply_tx_iq(g, 1j * x.real), 0)
    assert np.allclose(iq.apply_rx_iq(g, x), x.real)


def test_rx_matches_scalar_oracle(rng):
    p = iq.sample_iq("case1", 3, generator(4))
    g = iq.g_matrices(p)
    y = crand(rng, 3, 5)
    out = iq.apply_rx_iq(g, y)
    for i in range(3):
        g1 = (1 + p.a_r[i] * np.exp(1j * p.theta_r[i])) / 2
        g2 = (1 - p.a_r[i] * np.exp(-1j * p.theta_r[i])) / 2
        for k in range(5):
            assert abs(out[i, k] - (g1 * y[i, k] + g2 * np.conj(y[i, k]))) < 1e-14


def test_shape_error(rng):
    g = iq.g_matrices(IqParams.balanced(2))
    with pytest.raises(ShapeError):
        iq.apply_tx_iq(g, np.ones((3, 1)))


def test_symbolic_composition_single_column():
    # hand-composed: x_tx = g1 x + g2 x*, y_rx = x_tx (H = I), y = r1 y_rx + r2 y_rx*
    p = IqParams(np.array([0.5]), np.array([0.3]), np.array([0.9]), np.array([1.1]))
    g = iq.g_matrices(p)
    x = np.array([[0.4 - 1.2j]])
    xt = g.g_t1[0] * x[0, 0] + g.g_t2[0] * np.conj(x[0, 0])
    y = g.g_r1[0] * xt + g.g_r2[0] * np.conj(xt)
    out = iq.transmit_impaired(ChannelTask(np.eye(1), 1.0), g, x, noise=np.zeros((1, 1)))
    assert abs(out[0, 0] - y) < 1e-15


def test_widely_linear_closed_form(rng):
    for _ in range(20):
        g = iq.g_matrices(iq.sample_iq("case1", 3, rng))
        task = ChannelTask(crand(rng, 3, 3), 1.0)
        x = crand(rng, 3, 4)
        b1, b2 = iq.widely_linear_coeffs(task.h, g)
        direct = iq.transmit_impaired(task, g, x, noise=np.zeros((3, 4)))
        assert np.abs(direct - (b1 @ x + b2 @ np.conj(x))).max() < 1e-12
        r = iq.real_map(b1, b2)
        xr = np.concatenate([x.real, x.imag])
        yr = r @ xr
        assert np.abs(yr[:3] + 1j * yr[3:] - direct).max() < 1e-12


def test_conjugation_nonlinearity(rng):
    g = iq.g_matrices(iq.sample_iq("case1", 2, generator(9)))
    task = ChannelTask(crand(rng, 2, 2), 1.0)
    x = crand(rng, 2, 1)
    f = lambda z: iq.transmit_impaired(task, g, z, noise=np.zeros((2, 1)))
    assert np.abs(f(1j * x) - 1j * f(x)).max() > 1e-3


def test_case2_distortion_smaller_than_case1():
    r = np.random.default_rng(11)
    n = 1000
    h = crand(r, n, 2, 2) / np.sqrt(2)
    x = crand(r, n, 2, 1) / np.sqrt(2)
    dist = {}
    for case in ("case1", "case2"):
        g = iq.g_matrices(iq.sample_iq(case, 2, generator(12), (n,)))
        y = iq.transmit_impaired(ChannelTask(h, 1.0), g, x, noise=np.zeros_like(x))
        dist[case] = np.mean(np.linalg.norm((y - h @ x)[..., 0], axis=-1))
    assert dist["case2"] < dist["case1"]
