import numpy as np
import pytest

from icljscc import prompt
from icljscc.channel import ChannelTask, LinkConfig
from icljscc.errors import ShapeError
from icljscc.prompt import ContextSet, Role, TaskSpec, Variant
from icljscc.rng import generator, streams

from conftest import crand


def test_sample_pilots_power_and_determinism():
    cfg = LinkConfig(m=2, power=1.5)
    xp = prompt.sample_pilots(cfg, 11, generator(0))
    assert xp.shape == (2, 11)
    assert abs(np.sum(np.abs(xp) ** 2) / 22 - 1.5) < 1e-12
    assert np.array_equal(xp, prompt.sample_pilots(cfg, 11, generator(0)))


def test_sample_pilots_covariance():
    cfg = LinkConfig(m=2, power=1.0)
    xp = prompt.sample_pilots(cfg, 8, generator(1), (12_500,))
    cols = np.swapaxes(xp, -1, -2).reshape(-1, 2)
    cov = cols.T @ cols.conj() / cols.shape[0]
    assert np.allclose(cov, np.eye(2), atol=0.03)


def test_build_context_raw_identity(rng):
    xp = crand(rng, 2, 5)
    ctx = prompt.build_context(ChannelTask(np.eye(2), 1.0), xp, "raw", noise=np.zeros((2, 5)))
    assert np.array_equal(ctx.y, xp) and np.array_equal(ctx.x, xp)
    assert len(ctx.pairs()) == 5


def test_build_context_inverted_perfect(rng):
    h = crand(rng, 2, 2)
    xp = crand(rng, 2, 5)
    ctx = prompt.build_context(ChannelTask(h, 1.0), xp, Variant.INVERTED, noise=np.zeros((2, 5)), h_est=h)
    assert np.allclose(ctx.y, xp, atol=1e-12)
    # the same receiver map applies to later data
    x = crand(rng, 2, 1)
    assert np.allclose(ctx.process_output(h @ x), x)


def test_build_context_svd_perfect(rng):
    h = crand(rng, 2, 2)
    xp = crand(rng, 2, 5)
    ctx = prompt.build_context(ChannelTask(h, 1.0), xp, Variant.SVD, noise=np.zeros((2, 5)), h_est=h)
    # outputs equal the V^H-rotated pilot symbols, which are the context inputs
    assert np.allclose(ctx.y, ctx.x, atol=1e-12)
    assert np.allclose(ctx.x, ctx.in_map @ xp)


def test_build_context_shape_error(rng):
    with pytest.raises(ShapeError):
        prompt.build_context(ChannelTask(np.eye(2), 1.0), crand(rng, 3, 4), rng=generator(0))


def test_tokenize_layout(rng):
    ctx = ContextSet(crand(rng, 2, 2), crand(rng, 2, 2))
    q = crand(rng, 2)
    p = prompt.tokenize(ctx, q)
    assert p.tokens.shape == (5, 4)
    assert list(p.roles) == [Role.PILOT_OUTPUT, Role.PILOT_INPUT] * 2 + [Role.QUERY_OUTPUT]
    assert np.array_equal(p.tokens[0], np.r_[ctx.y[:, 0].real, ctx.y[:, 0].imag])
    assert np.array_equal(p.tokens[3], np.r_[ctx.x[:, 1].real, ctx.x[:, 1].imag])


def test_tokenize_empty_context(rng):
    ctx = ContextSet(np.zeros((2, 0), complex), np.zeros((2, 0), complex))
    p = prompt.tokenize(ctx, crand(rng, 2))
    assert p.tokens.shape == (1, 4) and list(p.roles) == [Role.QUERY_OUTPUT]


def test_tokenize_round_trip_bit_exact(rng):
    ctx = ContextSet(crand(rng, 3, 2, 4), crand(rng, 3, 2, 4))
    q = crand(rng, 3, 2)
    back, q2 = prompt.detokenize(prompt.tokenize(ctx, q))
    assert np.array_equal(back.y, ctx.y) and np.array_equal(back.x, ctx.x) and np.array_equal(q2, q)


def test_read_prediction(rng):
    ctx = ContextSet(crand(rng, 2, 3), crand(rng, 2, 3))
    q = crand(rng, 2)
    p = prompt.tokenize(ctx, q)
    # a model that copies its input returns y_query at the query slot
    assert np.array_equal(prompt.read_prediction(p.tokens, 3), q)
    assert prompt.read_prediction(np.zeros((7, 4)), 3).shape == (2,)
    with pytest.raises(IndexError):
        prompt.read_prediction(np.zeros((5, 4)), 3)
    assert list(prompt.loss_positions(3)) == [0, 2, 4, 6]


def test_sample_batch_shapes_and_determinism():
    spec = TaskSpec(m=2, n=5, snr_db=10.0)
    a = prompt.sample_batch(spec, 8, streams(1))
    b = prompt.sample_batch(spec, 8, streams(1))
    assert a.tokens.shape == (8, 11, 4) and a.targets.shape == (8, 2, 6)
    assert np.array_equal(a.tokens, b.tokens)
    assert np.allclose(np.sum(np.abs(a.x_raw) ** 2, axis=(1, 2)) / 12, 1.0)


@pytest.mark.parametrize("variant", ["raw", "inverted", "svd"])
@pytest.mark.parametrize("iq", ["balanced", "case1"])
def test_sample_batch_targets_align_with_tokens(variant, iq):
    spec = TaskSpec(m=2, n=4, snr_db=20.0, variant=variant, iq=iq)
    b = prompt.sample_batch(spec, 3, streams(2))
    # x-tokens carry the processed-domain pilot inputs, which are the targets
    xs = prompt.from_real(b.tokens[:, 1::2, :])
    assert np.allclose(np.swapaxes(xs, -1, -2), b.targets[..., :-1])


def test_sample_batch_svd_noiseless_query_recovered():
    spec = TaskSpec(m=2, n=6, snr_db=200.0, variant="svd")
    b = prompt.sample_batch(spec, 4, streams(3))
    q = prompt.from_real(b.tokens[:, -1, :])
    assert np.allclose(q, b.targets[..., -1], atol=1e-6)


def test_pilot_order_exchangeable():
    from scipy.stats import ks_2samp

    spec = TaskSpec(m=2, n=6, snr_db=10.0)
    b = prompt.sample_batch(spec, 1000, streams(4))
    perm = np.random.default_rng(0).permutation(6)
    ctx, _ = prompt.detokenize(prompt.PromptSequence(b.tokens, b.roles))
    # statistic: LS two-step error with permuted vs original pilot order
    from icljscc.classical import PilotBlock, equalize_two_step

    y_q = b.y_raw[..., -1:]
    e1 = np.abs(equalize_two_step(PilotBlock(ctx.x, ctx.y), y_q) - b.x_raw[..., -1:]).ravel()
    e2 = np.abs(equalize_two_step(PilotBlock(ctx.x[..., perm], ctx.y[..., perm]), y_q) - b.x_raw[..., -1:]).ravel()
    assert ks_2samp(e1, e2, method="asymp").pvalue > 0.05
