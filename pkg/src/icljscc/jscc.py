"""Toy joint source-channel autoencoder with context injection.

Images are split into a p x p grid of patches; a per-patch MLP encoder maps
each patch to a slice of the real latent, which is reshaped to an ``M x L``
complex block and power-normalised. The block crosses one fading MIMO link
(optionally IQ-impaired), every received column is denoised by the ICL
transformer from a shared pilot context, and a per-patch MLP decoder
reconstructs the image.

Context information (a noise heatmap or the ICAR network's summary of the
pilots) is appended to the decoder input, and also to the encoder input in
closed-loop mode. Gradients are hand-written end to end.

Parameters live in one flat dict with ``enc.``, ``dec.``, ``icar.`` and
``icl.`` prefixes so a single Adam state covers all of them.
"""
from dataclasses import dataclass, field

import numpy as np

from . import classical, model
from .channel import ChannelTask, normalize_power, sample_channel
from .cxmat import as_cmat, hermitian, pinv
from .errors import ShapeError, TrainingDivergedError
from .images import psnr
from .iq import g_matrices, real_map, sample_iq, widely_linear_coeffs
from .kernels import gelu_backward, gelu_forward
from .prompt import ContextSet, TaskSpec, Variant, build_context, prompt_roles, tokenize
from .rng import crandn, generator, streams
from .train import DIVERGENCE_LOSS, TrainState, _tune_malloc, adam_step, prompt_sampler, train

LOOPS = ("open", "closed")
CONTEXTS = ("none", "heatmap", "icar")
EQUALIZERS = ("icl", "ls")


@dataclass(frozen=True)
class JsccConfig:
    m: int = 2
    l: int = 64
    p: int = 4
    c: int = 3
    h: int = 16
    w: int = 16
    hidden: int = 256
    n: int = 4
    snr_db: float = 10.0
    power: float = 1.0
    loop: str = "open"
    variant: str = "inverted"
    context: str = "heatmap"
    iq: str = "balanced"
    lam: float = 0.01
    equalizer: str = "icl"
    true_h: bool = False
    icl: model.ModelConfig = field(default_factory=lambda: model.ModelConfig(m=2, d=32, max_len=32))

    def __post_init__(self):
        if self.loop not in LOOPS:
            raise ValueError(f"loop must be one of {LOOPS}")
        if self.context not in CONTEXTS:
            raise ValueError(f"context must be one of {CONTEXTS}")
        if self.equalizer not in EQUALIZERS:
            raise ValueError(f"equalizer must be one of {EQUALIZERS}")
        Variant(self.variant)
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.h % self.p or self.w % self.p:
            raise ShapeError(f"{self.h}x{self.w} image does not split into a {self.p}x{self.p} grid")
        if (2 * self.m * self.l) % self.patches:
            raise ShapeError(f"2ML = {2 * self.m * self.l} is not divisible by p^2 = {self.patches}")
        if self.n < self.m:
            raise ValueError("need at least M pilots for the channel estimate")
        if self.icl.m != self.m:
            raise ValueError("ICL model antenna count differs from the link")
        if self.equalizer == "icl" and 2 * self.n + 1 > self.icl.max_len:
            raise ValueError("prompt does not fit the ICL position table")

    @property
    def patches(self):
        return self.p * self.p

    @property
    def patch_dim(self):
        return self.c * self.h * self.w // self.patches

    @property
    def latent(self):
        return 2 * self.m * self.l // self.patches

    @property
    def ctx_width(self):
        return {"none": 0, "heatmap": self.m**2, "icar": 2 * self.m**2}[self.context]

    @property
    def noise_var(self):
        return self.power * 10.0 ** (-self.snr_db / 10.0)


def patchify(img, p):
    """``(..., C, H, W)`` -> ``(..., p^2, C*H*W/p^2)``; patches row-major over the grid."""
    img = np.asarray(img)
    *lead, c, h, w = img.shape
    if h % p or w % p:
        raise ShapeError(f"{h}x{w} image does not split into a {p}x{p} grid")
    ph, pw = h // p, w // p
    x = img.reshape(*lead, c, p, ph, p, pw)
    nl = len(lead)
    x = np.moveaxis(x, (nl + 1, nl + 3), (nl, nl + 1))  # (..., p, p, c, ph, pw)
    return x.reshape(*lead, p * p, c * ph * pw)


def unpatchify(sp, p, c, h, w):
    sp = np.asarray(sp)
    *lead, rows, cols = sp.shape
    if rows != p * p or cols * p * p != c * h * w:
        raise ShapeError(f"patch matrix {sp.shape} does not match a {c}x{h}x{w} image with p={p}")
    ph, pw = h // p, w // p
    x = sp.reshape(*lead, p, p, c, ph, pw)
    nl = len(lead)
    x = np.moveaxis(x, (nl, nl + 1), (nl + 1, nl + 3))
    return x.reshape(*lead, c, h, w)


# ---------------------------------------------------------------- parameters


def _dense_init(rng, fan_in, fan_out):
    return rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in), np.zeros(fan_out)


def init_params(cfg, rng, icl_params=None):
    """Fresh encoder/decoder/ICAR weights; the ICL part is copied from ``icl_params`` if given.

    The decoder's output layer starts at zero, so an untrained model emits
    mid-gray (sigmoid of 0).
    """
    enc_in = cfg.patch_dim + (cfg.ctx_width if cfg.loop == "closed" else 0)
    dec_in = cfg.latent + cfg.ctx_width
    p = {}
    p["enc.w1"], p["enc.b1"] = _dense_init(rng, enc_in, cfg.hidden)
    p["enc.w2"], p["enc.b2"] = _dense_init(rng, cfg.hidden, cfg.latent)
    p["dec.w1"], p["dec.b1"] = _dense_init(rng, dec_in, cfg.hidden)
    p["dec.w2"] = np.zeros((cfg.hidden, cfg.patch_dim))
    p["dec.b2"] = np.zeros(cfg.patch_dim)
    if cfg.context == "icar":
        n, m = cfg.n, cfg.m
        p["icar.w1"], p["icar.b1"] = _dense_init(rng, 2 * n, 4 * n)
        p["icar.w2"], p["icar.b2"] = _dense_init(rng, 4 * n, m)
    if cfg.equalizer == "icl":
        if icl_params is None:
            icl_params = model.init_params(cfg.icl, rng)
        for k, v in icl_params.items():
            p["icl." + k] = np.array(v, dtype=float, copy=True)
    return p


def icl_part(params):
    return {k[4:]: v for k, v in params.items() if k.startswith("icl.")}


# ---------------------------------------------------------------- building blocks


def _outer_sum(a, b):
    """``sum over leading axes of a^T b`` as one GEMM."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def icar_forward(params, z):
    """ICAR summary of a context: ``(B, 2M, 2N)`` -> non-negative ``(B, 2M, M)``.

    Returns ``(out, cache)``.
    """
    z = np.asarray(z, dtype=float)
    w1 = params["icar.w1"]
    if z.shape[-1] != w1.shape[0]:
        raise ShapeError(f"ICAR expects {w1.shape[0] // 2} pilot pairs, got {z.shape[-1] // 2}")
    u1 = z @ w1 + params["icar.b1"]
    a1 = np.maximum(u1, 0.0)
    u2 = a1 @ params["icar.w2"] + params["icar.b2"]
    return np.maximum(u2, 0.0), (z, u1, a1, u2)


def icar_backward(params, cache, dout):
    z, u1, a1, u2 = cache
    du2 = dout * (u2 > 0)
    g = {"icar.w2": _outer_sum(a1, du2), "icar.b2": du2.reshape(-1, du2.shape[-1]).sum(0)}
    du1 = (du2 @ params["icar.w2"].T) * (u1 > 0)
    g["icar.w1"] = _outer_sum(z, du1)
    g["icar.b1"] = du1.reshape(-1, du1.shape[-1]).sum(0)
    return g


def icar_input(ctx):
    """Stack context pairs as columns ``x_1, y_1, x_2, y_2, ...`` of a real ``2M x 2N`` matrix."""
    xr = np.concatenate([ctx.x.real, ctx.x.imag], axis=-2)
    yr = np.concatenate([ctx.y.real, ctx.y.imag], axis=-2)
    z = np.empty(xr.shape[:-1] + (2 * ctx.n,))
    z[..., 0::2] = xr
    z[..., 1::2] = yr
    return z


def _mlp(params, prefix, x):
    u = x @ params[prefix + "w1"] + params[prefix + "b1"]
    hdn, t = gelu_forward(u)
    return hdn @ params[prefix + "w2"] + params[prefix + "b2"], (x, u, hdn, t)


def _mlp_back(params, prefix, cache, dy):
    x, u, hdn, t = cache
    g = {prefix + "w2": _outer_sum(hdn, dy), prefix + "b2": dy.reshape(-1, dy.shape[-1]).sum(0)}
    du = gelu_backward(dy @ params[prefix + "w2"].T, u, t)
    g[prefix + "w1"] = _outer_sum(x, du)
    g[prefix + "b1"] = du.reshape(-1, du.shape[-1]).sum(0)
    return du @ params[prefix + "w1"].T, g


def _with_ctx(x, ctx_rep):
    return x if ctx_rep is None else np.concatenate([x, ctx_rep], axis=-1)


def encode(params, cfg, s_p, ctx_rep=None, return_cache=False):
    """Patch matrix ``(B, p^2, D)`` -> power-normalised complex block ``(B, M, L)``."""
    s_p = np.asarray(s_p, dtype=float)
    if s_p.shape[-2:] != (cfg.patches, cfg.patch_dim):
        raise ShapeError(f"patch matrix {s_p.shape[-2:]} != {(cfg.patches, cfg.patch_dim)}")
    if cfg.loop == "closed" and cfg.ctx_width:
        if ctx_rep is None or ctx_rep.shape[-1] != cfg.ctx_width:
            raise ShapeError(f"closed-loop encoder needs a context of width {cfg.ctx_width}")
        inp = _with_ctx(s_p, ctx_rep)
    else:
        inp = s_p
    z, mlp_cache = _mlp(params, "enc.", inp)
    zr = z.reshape(z.shape[:-2] + (2 * cfg.m, cfg.l))
    x = to_complex_rows(zr)
    xn = normalize_power(x, cfg.power)
    if not return_cache:
        return xn
    return xn, (mlp_cache, zr, xn)


def encode_backward(params, cfg, cache, dx_real):
    """``dx_real`` is the gradient w.r.t. the real stacking ``[Re X; Im X]``."""
    mlp_cache, zr, xn = cache
    xr = to_real_rows(xn)
    norm = np.sqrt(np.sum(zr * zr, axis=(-2, -1), keepdims=True))
    c = np.sqrt(cfg.power * cfg.m * cfg.l)
    unit = xr / c
    proj = np.sum(unit * dx_real, axis=(-2, -1), keepdims=True)
    dz = (c / norm) * (dx_real - unit * proj)
    dz = dz.reshape(dz.shape[:-2] + (cfg.patches, cfg.latent))
    return _mlp_back(params, "enc.", mlp_cache, dz)


def to_real_rows(x):
    """Complex ``(..., M, L)`` -> real ``(..., 2M, L)`` as ``[Re; Im]``."""
    return np.concatenate([x.real, x.imag], axis=-2)


def to_complex_rows(r):
    m = r.shape[-2] // 2
    return r[..., :m, :] + 1j * r[..., m:, :]


def concat_decoder_input(cfg, x_hat, ctx_rep=None):
    """Real reshape of ``X_hat`` to ``(p^2, 2ML/p^2)`` with the repeated context appended."""
    x_hat = as_cmat(x_hat)
    if x_hat.shape[-2:] != (cfg.m, cfg.l):
        raise ShapeError(f"estimate {x_hat.shape[-2:]} != {(cfg.m, cfg.l)}")
    lat = to_real_rows(x_hat).reshape(x_hat.shape[:-2] + (cfg.patches, cfg.latent))
    if cfg.ctx_width:
        if ctx_rep is None or ctx_rep.shape[-1] != cfg.ctx_width:
            raise ShapeError(f"decoder needs a context of width {cfg.ctx_width}")
        return _with_ctx(lat, ctx_rep)
    return lat


def decode(params, cfg, dec_in, return_cache=False):
    """Decoder input ``(B, p^2, K)`` -> image ``(B, C, H, W)`` in [0, 1]."""
    dec_in = np.asarray(dec_in, dtype=float)
    k = params["dec.w1"].shape[0]
    if dec_in.shape[-2:] != (cfg.patches, k):
        raise ShapeError(f"decoder input {dec_in.shape[-2:]} != {(cfg.patches, k)}")
    o, mlp_cache = _mlp(params, "dec.", dec_in)
    sig = 0.5 * (1.0 + np.tanh(0.5 * o))
    img = unpatchify(sig, cfg.p, cfg.c, cfg.h, cfg.w)
    if not return_cache:
        return img
    return img, (mlp_cache, sig)


def total_loss(recon, icl, lam):
    """Reconstruction MSE plus ``lam`` times the ICL estimation loss.

    ``recon`` is ``(S, S_hat)``; ``icl`` is ``(out, targets)`` as accepted by
    :func:`icljscc.model.icl_loss`, or ``None`` for no estimation term.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    s, s_hat = (np.asarray(a, dtype=float) for a in recon)
    per_image = s.shape[-3] * s.shape[-2] * s.shape[-1]
    batch = max(1, s.size // per_image)
    value = float(np.sum((s - s_hat) ** 2) / (per_image * batch))
    if icl is not None and lam:
        value += lam * model.icl_loss(*icl)[0]
    return value


# ---------------------------------------------------------------- channel stage


def _linear_real(a):
    return real_map(a, np.zeros_like(a))


@dataclass
class LinkDraw:
    """One channel realisation per image, reduced to real affine maps.

    The processed query column is ``r @ x + n_eff`` with ``x`` the real
    stacking of the encoder output column.
    """

    r: np.ndarray  # (B, 2M, 2M)
    n_eff: np.ndarray  # (B, 2M, L)
    ctx: ContextSet  # processed pilot pairs, batched
    ctx_tokens: np.ndarray  # (B, 2N, 2M)
    h: np.ndarray
    h_est: np.ndarray
    noise_var: np.ndarray
    feature: np.ndarray | None  # log1p(heatmap) (B, M*M) or ICAR input (B, 2M, 2N)


def draw_link(cfg, batch, st):
    """Sample channel, IQ, pilots, and noise for ``batch`` blocks from streams ``st``."""
    m, n, l = cfg.m, cfg.n, cfg.l
    h = sample_channel(st.channel, m, (batch,))
    nv = np.full(batch, cfg.noise_var)
    task = ChannelTask(h, nv)
    g = None if cfg.iq == "balanced" else g_matrices(sample_iq(cfg.iq, m, st.iq, (batch,)))
    pilots = normalize_power(crandn(st.pilots, (batch, m, n)), cfg.power)
    sd = np.sqrt(cfg.noise_var)
    w_p = crandn(st.noise, (batch, m, n)) * sd
    w_d = crandn(st.noise, (batch, m, l)) * sd
    raw = build_context(task, pilots, Variant.RAW, iq=g, noise=w_p)
    h_est = h if cfg.true_h else classical.ls_channel_estimate(classical.PilotBlock(raw.x, raw.y))
    variant = Variant(cfg.variant)
    if variant is Variant.RAW:
        ctx = raw if cfg.equalizer == "icl" else ContextSet(raw.y, raw.x, out_map=pinv(h_est))
    else:
        ctx = build_context(task, pilots, variant, iq=g, noise=w_p, h_est=h_est)

    eye = np.broadcast_to(np.eye(m, dtype=complex), (batch, m, m))
    out_map = eye if ctx.out_map is None else ctx.out_map
    pre = eye if ctx.in_map is None else hermitian(ctx.in_map)
    if g is None:
        r_rx = np.broadcast_to(np.eye(2 * m), (batch, 2 * m, 2 * m))
        r_c = _linear_real(h)
    else:
        r_c = real_map(*widely_linear_coeffs(h, g))
        r_rx = real_map(g.g_r1[..., :, None] * np.eye(m), g.g_r2[..., :, None] * np.eye(m))
    r_out = _linear_real(out_map)
    r = r_out @ r_c @ _linear_real(pre)
    n_eff = r_out @ r_rx @ to_real_rows(w_d)

    if cfg.context == "heatmap":
        hm = classical.heatmap_closed if variant is Variant.SVD else classical.heatmap_open
        # noise-power map is heavy-tailed (ill-conditioned estimates); compress it
        feature = np.log1p(hm(h_est, nv).values.reshape(batch, m * m))
    elif cfg.context == "icar":
        feature = icar_input(ctx)
    else:
        feature = None
    ctx_tokens = tokenize(ctx, np.zeros((batch, m), dtype=complex)).tokens[:, :-1]
    return LinkDraw(r, n_eff, ctx, ctx_tokens, h, h_est, nv, feature)


# ---------------------------------------------------------------- full pipeline


def _context_rep(params, cfg, link):
    if cfg.context == "none":
        return None, None
    if cfg.context == "heatmap":
        feat = link.feature
        cache = None
    else:
        out, cache = icar_forward(params, link.feature)
        feat = out.reshape(out.shape[0], -1)
    return np.repeat(feat[:, None, :], cfg.patches, axis=1), cache


def forward(params, cfg, images, link, return_cache=False):
    """Run the whole pipeline on a batch of images over the drawn links.

    Returns ``(s_hat, loss_terms)`` where ``loss_terms`` holds the
    reconstruction and ICL losses, plus the cache when requested.
    """
    images = np.asarray(images, dtype=float)
    bsz = images.shape[0]
    m, l, n = cfg.m, cfg.l, cfg.n
    ctx_rep, icar_cache = _context_rep(params, cfg, link)
    s_p = patchify(images, cfg.p)
    x, enc_cache = encode(params, cfg, s_p, ctx_rep, return_cache=True)
    xr = to_real_rows(x)
    y = link.r @ xr + link.n_eff  # (B, 2M, L)

    icl_cache = None
    icl_value = 0.0
    dout_icl = None
    if cfg.equalizer == "icl":
        ip = icl_part(params)
        t = 2 * n + 1
        tokens = np.empty((bsz, l, t, 2 * m))
        tokens[:, :, :-1] = link.ctx_tokens[:, None]
        tokens[:, :, -1] = np.swapaxes(y, -1, -2)
        tokens = tokens.reshape(bsz * l, t, 2 * m)
        roles = prompt_roles(n)
        out, icl_cache = model.forward(ip, cfg.icl, tokens, roles, return_cache=True)
        targets = np.empty((bsz, l, m, n + 1), dtype=complex)
        targets[..., :n] = link.ctx.x[:, None]
        targets[..., n] = np.swapaxes(x, -1, -2)
        icl_value, dout_icl = model.icl_loss(out, targets.reshape(bsz * l, m, n + 1))
        xhat_r = np.swapaxes(out[:, -1, :].reshape(bsz, l, 2 * m), -1, -2)
    else:
        xhat_r = y
    lat = xhat_r.reshape(bsz, cfg.patches, cfg.latent)
    dec_in = _with_ctx(lat, ctx_rep)
    s_hat, dec_cache = decode(params, cfg, dec_in, return_cache=True)
    recon = float(np.mean((s_hat - images) ** 2))
    terms = {"recon": recon, "icl": icl_value, "loss": recon + cfg.lam * icl_value}
    if not return_cache:
        return s_hat, terms
    cache = (images, ctx_rep, icar_cache, enc_cache, icl_cache, dout_icl, dec_cache, s_hat)
    return s_hat, terms, cache


def backward(params, cfg, link, cache):
    """Gradients of the joint loss w.r.t. every parameter in ``params``."""
    images, ctx_rep, icar_cache, enc_cache, icl_cache, dout_icl, dec_cache, s_hat = cache
    bsz = images.shape[0]
    m, l = cfg.m, cfg.l
    grads = {}
    mlp_cache, sig = dec_cache
    ds = 2.0 * (s_hat - images) / images.size
    dsig = patchify(ds, cfg.p)
    do = dsig * sig * (1.0 - sig)
    ddec_in, g = _mlp_back(params, "dec.", mlp_cache, do)
    grads.update(g)
    dlat = ddec_in[..., : cfg.latent]
    dctx = ddec_in[..., cfg.latent :] if cfg.ctx_width else None
    dxhat_r = dlat.reshape(bsz, 2 * m, l)

    if cfg.equalizer == "icl":
        dout = cfg.lam * dout_icl
        dout[:, -1, :] += np.swapaxes(dxhat_r, -1, -2).reshape(bsz * l, 2 * m)
        g_icl, dtok = model.backward(icl_part(params), cfg.icl, icl_cache, dout)
        grads.update({"icl." + k: v for k, v in g_icl.items()})
        dy = np.swapaxes(dtok[:, -1, :].reshape(bsz, l, 2 * m), -1, -2)
        # the query target is the encoder output itself
        dx_target = -cfg.lam * np.swapaxes(dout_icl[:, -1, :].reshape(bsz, l, 2 * m), -1, -2)
    else:
        dy = dxhat_r
        dx_target = 0.0
    dxr = np.swapaxes(link.r, -1, -2) @ dy + dx_target
    denc_in, g = encode_backward(params, cfg, enc_cache, dxr)
    grads.update(g)
    if cfg.loop == "closed" and cfg.ctx_width:
        dctx = dctx + denc_in[..., cfg.patch_dim :]
    if cfg.context == "icar":
        dfeat = dctx.sum(axis=1).reshape(bsz, 2 * m, m)
        grads.update(icar_backward(params, icar_cache, dfeat))
    return {k: grads[k] for k in params}


def loss_and_grads(params, cfg, images, link):
    _, terms, cache = forward(params, cfg, images, link, return_cache=True)
    return terms, backward(params, cfg, link, cache)


# ---------------------------------------------------------------- training and evaluation


def pretrain_denoiser(cfg, steps, seed, lr=1e-3, batch=64):
    """Train the ICL denoiser alone on the link's equalisation task."""
    spec = TaskSpec(m=cfg.m, n=cfg.n, snr_db=cfg.snr_db, power=cfg.power, iq=cfg.iq, variant=cfg.variant)
    state = TrainState(model.init_params(cfg.icl, generator(seed, 7, 0)), lr=lr, batch=batch)
    state, losses = train(state, cfg.icl, prompt_sampler(spec, seed, 7, 1), steps)
    return state.params, losses


def train_jscc(params, cfg, images, steps, seed, batch=8, lr=1e-3, freeze=()):
    """Adam on the joint loss; parameter groups whose prefix is in ``freeze`` stay fixed.

    Returns ``(params, loss_trace)``; ``params`` is updated in place.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    _tune_malloc()
    st = streams(seed, 11)
    trainable = [k for k in params if not any(k.startswith(f) for f in freeze)]
    state = TrainState(params, lr=lr, batch=batch)
    state.m = {k: state.m[k] for k in trainable}
    state.v = {k: state.v[k] for k in trainable}
    losses = np.empty(steps)
    for i in range(steps):
        idx = st.data.integers(0, images.shape[0], batch)
        link = draw_link(cfg, batch, st)
        terms, grads = loss_and_grads(params, cfg, images[idx], link)
        if not terms["loss"] < DIVERGENCE_LOSS:
            raise TrainingDivergedError(f"joint loss {terms['loss']:.3g} at step {i}")
        losses[i] = terms["loss"]
        adam_step(state, {k: grads[k] for k in trainable})
    return params, losses


def evaluate(params, cfg, images, seed, chunk=16):
    """Mean PSNR and mean joint loss on ``images`` over links drawn from a fixed eval stream."""
    st = streams(seed, 13)
    psnrs, losses = [], []
    for i in range(0, images.shape[0], chunk):
        batch = images[i : i + chunk]
        link = draw_link(cfg, batch.shape[0], st)
        s_hat, terms = forward(params, cfg, batch, link)
        psnrs.append(psnr(batch, s_hat))
        losses.append(terms["loss"] * batch.shape[0])
    return float(np.mean(np.concatenate(psnrs))), float(np.sum(losses) / images.shape[0])

