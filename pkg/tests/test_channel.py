import numpy as np
import pytest

from icljscc import channel
from icljscc.channel import ChannelTask, LinkConfig
from icljscc.errors import DegenerateInputError, ShapeError
from icljscc.rng import generator, streams

from conftest import crand


def test_sample_task_determinism():
    cfg = LinkConfig(m=2, l=4)
    a = channel.sample_task(cfg, 0.1, generator(7))
    b = channel.sample_task(cfg, 0.1, generator(7))
    assert np.array_equal(a.h, b.h)
    g = generator(7)
    c, d = channel.sample_task(cfg, 0.1, g), channel.sample_task(cfg, 0.1, g)
    assert not np.array_equal(c.h, d.h)


def test_channel_entry_second_moment():
    h = channel.sample_channel(generator(1), 2, (25_000,))
    assert abs(np.mean(np.abs(h) ** 2) - 1.0) < 0.02
    assert abs(np.mean(h)) < 0.02


def test_streams_are_independent():
    s = streams(3)
    a = s.channel.standard_normal(4)
    s2 = streams(3)
    s2.noise.standard_normal(1000)
    assert np.array_equal(a, s2.channel.standard_normal(4))


def test_transmit_identity_noiseless(rng):
    x = crand(rng, 2, 5)
    y = channel.transmit(ChannelTask(np.eye(2), 1.0), x, noise=np.zeros((2, 5)))
    assert np.array_equal(y, x)


def test_transmit_noise_variance():
    task = ChannelTask(crand(np.random.default_rng(0), 2, 2), 0.3)
    y = channel.transmit(task, np.zeros((2, 50_000)), rng=generator(2))
    var = np.mean(np.abs(y) ** 2, axis=1)
    assert np.all(np.abs(var / 0.3 - 1) < 0.02)
    cov = y @ y.conj().T / y.shape[1]
    assert abs(cov[0, 1]) < 0.02 * 0.3 * 3


def test_transmit_dead_subchannel_is_pure_noise():
    task = ChannelTask(np.diag([2.0, 0.0]), 0.5)
    noise = crand(np.random.default_rng(1), 2, 2)
    y = channel.transmit(task, np.eye(2), noise=noise)
    assert np.array_equal(y[1], noise[1])
    assert np.allclose(y[0], [2.0 + noise[0, 0], noise[0, 1]])


def test_transmit_linear_in_x(rng):
    task = ChannelTask(crand(rng, 3, 3), 0.2)
    w = crand(rng, 3, 4)
    x1, x2 = crand(rng, 3, 4), crand(rng, 3, 4)
    a, b = 0.7 - 0.2j, -1.3j
    lhs = channel.transmit(task, a * x1 + b * x2, noise=w)
    rhs = a * task.h @ x1 + b * task.h @ x2 + w
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_transmit_shape_error():
    with pytest.raises(ShapeError):
        channel.transmit(ChannelTask(np.eye(2), 1.0), np.ones((3, 2)), rng=generator(0))


def test_normalize_power(rng):
    x = np.ones((2, 2))
    assert np.isclose(np.linalg.norm(channel.normalize_power(x, 1.0)), 2.0)
    for _ in range(20):
        x = crand(rng, 2, 7)
        p = rng.uniform(0.1, 5)
        y = channel.normalize_power(x, p)
        assert abs(np.sum(np.abs(y) ** 2) / 14 - p) < 1e-12
        assert np.allclose(channel.normalize_power(y, p), y, atol=1e-12)
    with pytest.raises(DegenerateInputError):
        channel.normalize_power(np.zeros((2, 2)), 1.0)


def test_normalize_power_batched(rng):
    x = crand(rng, 5, 2, 3)
    y = channel.normalize_power(x, 2.0)
    assert np.allclose(np.sum(np.abs(y) ** 2, axis=(1, 2)) / 6, 2.0, atol=1e-12)


@pytest.mark.parametrize("p,nv,expected", [(1, 1, 0.0), (100, 1, 20.0), (1, 10, -10.0)])
def test_snr_db(p, nv, expected):
    assert np.isclose(channel.snr_db(p, nv), expected)
    assert np.isclose(channel.noise_var_for_snr(expected, p), nv)


def test_link_config_validation():
    with pytest.raises(ValueError):
        LinkConfig(m=0)
    with pytest.raises(ValueError):
        LinkConfig(power=0)
    with pytest.raises(ValueError):
        ChannelTask(np.eye(2), 0.0)
