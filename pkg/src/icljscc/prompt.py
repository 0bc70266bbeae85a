"""Context assembly and prompt tokenisation for the ICL denoiser.

Token layout for N pilot pairs is ``y_1, x_1, y_2, x_2, ..., y_N, x_N, y_query``;
each token is a complex M-vector stacked as ``[Re; Im]``. Predictions are read
at the y-token positions ``0, 2, ..., 2N``.
"""
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from . import classical
from .channel import ChannelTask, normalize_power, sample_channel, transmit
from .cxmat import as_cmat, hermitian
from .errors import ShapeError
from .iq import IqParams, g_matrices, sample_iq, transmit_impaired
from .rng import crandn


class Variant(str, Enum):
    RAW = "raw"
    INVERTED = "inverted"
    SVD = "svd"


class Role(IntEnum):
    PILOT_OUTPUT = 0
    PILOT_INPUT = 1
    QUERY_OUTPUT = 2


def to_real(v):
    """Complex ``(..., M)`` -> real ``(..., 2M)`` as ``[Re; Im]``."""
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=-1)


def from_real(r):
    r = np.asarray(r, dtype=float)
    m = r.shape[-1] // 2
    return r[..., :m] + 1j * r[..., m:]


@dataclass(frozen=True)
class ContextSet:
    """N (output, input) pilot pairs stored column-wise, plus the receiver map.

    ``out_map`` is applied to raw channel outputs and ``in_map`` to symbols
    before precoding; both are identities for the raw variant.
    """

    y: np.ndarray
    x: np.ndarray
    out_map: np.ndarray | None = None
    in_map: np.ndarray | None = None

    @property
    def n(self):
        return self.y.shape[-1]

    @property
    def m(self):
        return self.y.shape[-2]

    def pairs(self):
        return [(self.y[..., :, k], self.x[..., :, k]) for k in range(self.n)]

    def process_output(self, y):
        y = np.asarray(y, dtype=np.complex128)
        return y if self.out_map is None else self.out_map @ y


@dataclass(frozen=True)
class PromptSequence:
    tokens: np.ndarray
    roles: np.ndarray

    @property
    def n(self):
        return (self.tokens.shape[-2] - 1) // 2


def prompt_roles(n):
    roles = np.empty(2 * n + 1, dtype=np.int64)
    roles[0:-1:2] = Role.PILOT_OUTPUT
    roles[1::2] = Role.PILOT_INPUT
    roles[-1] = Role.QUERY_OUTPUT
    return roles


def role_flags(roles):
    """Scalar per token appended to the model input: 1 on x-tokens, 0 on y-tokens."""
    return (np.asarray(roles) == Role.PILOT_INPUT).astype(float)


def loss_positions(n):
    return np.arange(0, 2 * n + 1, 2)


def sample_pilots(cfg, n, rng, size=()):
    """CN(0, I) pilot columns scaled so the block meets the power budget with equality."""
    if n < 1:
        raise ValueError("need at least one pilot")
    return normalize_power(crandn(rng, tuple(size) + (cfg.m, n)), cfg.power)


def _send(task, x, iq, rng=None, noise=None):
    if iq is None:
        return transmit(task, x, rng=rng, noise=noise)
    return transmit_impaired(task, iq, x, rng=rng, noise=noise)


def build_context(task, pilots, variant=Variant.RAW, iq=None, rng=None, noise=None, h_est=None):
    """Transmit pilots through the (optionally IQ-impaired) channel and preprocess.

    ``h_est`` overrides the LS estimate used by the inverted/SVD variants.
    """
    pilots = as_cmat(pilots)
    if pilots.shape[-2] != task.m:
        raise ShapeError(f"pilots need {task.m} rows, got {pilots.shape}")
    variant = Variant(variant)
    y_p = _send(task, pilots, iq, rng=rng, noise=noise)
    if variant is Variant.RAW:
        return ContextSet(y_p, pilots)
    if h_est is None:
        h_est = classical.ls_channel_estimate(classical.PilotBlock(pilots, y_p))
    if variant is Variant.INVERTED:
        inv = classical.pinv(h_est)
        return ContextSet(inv @ y_p, pilots, out_map=inv)
    comb, v = classical.svd_combiner(h_est)
    return ContextSet(comb @ y_p, hermitian(v) @ pilots, out_map=comb, in_map=hermitian(v))


def tokenize(ctx, y_query):
    """Interleave ``(y_n, x_n)`` pairs and append the query output token."""
    y_query = np.asarray(y_query, dtype=np.complex128)
    n, m = ctx.n, ctx.m
    if y_query.shape[-1] != m:
        raise ShapeError(f"query must be an {m}-vector, got {y_query.shape}")
    lead = np.broadcast_shapes(ctx.y.shape[:-2], y_query.shape[:-1])
    tokens = np.empty(lead + (2 * n + 1, 2 * m))
    tokens[..., 0:-1:2, :] = to_real(np.swapaxes(ctx.y, -1, -2))
    tokens[..., 1::2, :] = to_real(np.swapaxes(ctx.x, -1, -2))
    tokens[..., -1, :] = to_real(y_query)
    return PromptSequence(tokens, prompt_roles(n))


def detokenize(prompt):
    z = from_real(prompt.tokens)
    ctx = ContextSet(np.swapaxes(z[..., 0:-1:2, :], -1, -2), np.swapaxes(z[..., 1:-1:2, :], -1, -2))
    return ctx, z[..., -1, :]


def read_prediction(model_output, n):
    """Complex query estimate from the output row at token index ``2n``."""
    model_output = np.asarray(model_output)
    if model_output.shape[-2] <= 2 * n:
        raise IndexError(f"output has {model_output.shape[-2]} rows, query sits at {2 * n}")
    return from_real(model_output[..., 2 * n, :])


def read_all_predictions(model_output):
    """Complex estimates at every y-position, shape ``(..., M, N + 1)``."""
    return np.swapaxes(from_real(np.asarray(model_output)[..., 0::2, :]), -1, -2)


@dataclass(frozen=True)
class TaskSpec:
    """Distribution of equalisation tasks used for training and evaluation."""

    m: int = 2
    n: int = 11
    snr_db: float | tuple = 20.0
    power: float = 1.0
    iq: str = "balanced"
    variant: str = "raw"
    fixed_iq: IqParams | None = field(default=None, compare=False)


@dataclass
class PromptBatch:
    tokens: np.ndarray
    roles: np.ndarray
    targets: np.ndarray  # (B, M, N+1) complex, processed-domain inputs at y-positions
    h: np.ndarray
    noise_var: np.ndarray
    x_raw: np.ndarray  # (B, M, N+1) transmitted symbols, query last
    y_raw: np.ndarray  # (B, M, N+1) received symbols, query last
    iq: object = None

    @property
    def n(self):
        return self.targets.shape[-1] - 1

    def ls_query_estimate(self):
        """Two-step LS estimate of the raw transmitted query symbol."""
        p = classical.PilotBlock(self.x_raw[..., :-1], self.y_raw[..., :-1])
        return classical.equalize_two_step(p, self.y_raw[..., -1:])[..., 0]


def _noise_var(spec, rng, batch):
    snr = np.atleast_1d(np.asarray(spec.snr_db, dtype=float))
    if snr.size == 1:
        return np.full(batch, spec.power * 10.0 ** (-snr[0] / 10.0))
    # mixed-SNR mode: each task draws its SNR uniformly from the listed points
    return spec.power * 10.0 ** (-rng.choice(snr, size=batch) / 10.0)


def sample_batch(spec, batch, st, n=None, symbols=None, noise=None):
    """Draw ``batch`` tasks and assemble their prompts.

    ``st`` is a :class:`~icljscc.rng.Streams`. Pilots and the query symbol are
    drawn together as one ``N + 1`` column block normalised to the power
    budget, so the query comes from the pilot distribution. ``symbols`` and
    ``noise`` (unit-variance, scaled here) override the corresponding draws.
    """
    n = spec.n if n is None else n
    m = spec.m
    h = sample_channel(st.channel, m, (batch,))
    noise_var = _noise_var(spec, st.channel, batch)
    task = ChannelTask(h, noise_var)
    if symbols is None:
        symbols = normalize_power(crandn(st.pilots, (batch, m, n + 1)), spec.power)
    if spec.iq == "balanced":
        iq_g = None
    elif spec.fixed_iq is not None:
        iq_g = g_matrices(spec.fixed_iq)
    else:
        iq_g = g_matrices(sample_iq(spec.iq, m, st.iq, (batch,)))
    sd = np.sqrt(noise_var)[:, None, None]
    w = (crandn(st.noise, (batch, m, n + 1)) if noise is None else noise) * sd
    variant = Variant(spec.variant)
    if variant is Variant.RAW or n == 0:
        y_raw = _send(task, symbols, iq_g, noise=w)
        tokens = tokenize(ContextSet(y_raw[..., :n], symbols[..., :n]), y_raw[..., n])
        return PromptBatch(tokens.tokens, tokens.roles, symbols, h, noise_var, symbols, y_raw, iq_g)
    ctx = build_context(task, symbols[..., :n], variant, iq=iq_g, noise=w[..., :n])
    if variant is Variant.SVD:
        # query symbol s is precoded by V_hat before transmission
        x_q = hermitian(ctx.in_map) @ symbols[..., n:]
        target_q = symbols[..., n:]
        pilot_targets = ctx.x
    else:
        x_q = symbols[..., n:]
        target_q = x_q
        pilot_targets = symbols[..., :n]
    y_q = _send(task, x_q, iq_g, noise=w[..., n:])
    prompt = tokenize(ctx, ctx.process_output(y_q)[..., 0])
    x_raw = np.concatenate([symbols[..., :n], x_q], axis=-1)
    y_raw = np.concatenate([_send(task, symbols[..., :n], iq_g, noise=w[..., :n]), y_q], axis=-1)
    targets = np.concatenate([pilot_targets, target_q], axis=-1)
    return PromptBatch(prompt.tokens, prompt.roles, targets, h, noise_var, x_raw, y_raw, iq_g)
