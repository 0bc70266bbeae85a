"""Decoder-only transformer denoiser with hand-written reverse-mode gradients.

GPT-2 style: learned absolute positions, pre-norm blocks, causal multi-head
attention, GELU MLP, final LayerNorm. Parameters live in a flat ordered dict
of float64 arrays keyed by dotted names; gradients use the same keys.
"""
from dataclasses import dataclass

import numpy as np

from .kernels import gelu_backward as _gelu_back, gelu_forward as _gelu
from .errors import CapacityError, NumericError, ShapeError
from .prompt import from_real, loss_positions, read_prediction, role_flags, tokenize

LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    m: int = 2
    d: int = 64
    layers: int = 2
    heads: int = 4
    max_len: int = 64
    mlp_ratio: int = 4
    init_std: float = 0.02

    def __post_init__(self):
        if self.d % self.heads:
            raise ValueError("embedding width must be divisible by the head count")

    @property
    def token_width(self):
        return 2 * self.m


def param_shapes(cfg):
    d, hid, tw = cfg.d, cfg.mlp_ratio * cfg.d, cfg.token_width
    shapes = {"input_proj.w": (tw + 1, d), "input_proj.b": (d,), "pos_embed": (cfg.max_len, d)}
    for i in range(cfg.layers):
        p = f"layers.{i}."
        shapes.update({
            p + "ln1.g": (d,), p + "ln1.b": (d,),
            p + "attn.wq": (d, d), p + "attn.bq": (d,),
            p + "attn.wk": (d, d), p + "attn.bk": (d,),
            p + "attn.wv": (d, d), p + "attn.bv": (d,),
            p + "attn.wo": (d, d), p + "attn.bo": (d,),
            p + "ln2.g": (d,), p + "ln2.b": (d,),
            p + "mlp.w1": (d, hid), p + "mlp.b1": (hid,),
            p + "mlp.w2": (hid, d), p + "mlp.b2": (d,),
        })
    shapes.update({"ln_f.g": (d,), "ln_f.b": (d,), "output_proj.w": (d, tw), "output_proj.b": (tw,)})
    return shapes


def init_params(cfg, rng):
    """normal(0, init_std) projections and positions; zero biases and output head."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if name.startswith("output_proj") or leaf.startswith("b"):
            params[name] = np.zeros(shape)
        elif leaf == "g":
            params[name] = np.ones(shape)
        else:
            params[name] = rng.normal(0.0, cfg.init_std, shape)
    return params


def _ln(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _ln_back(dy, g, cache):
    xhat, rstd = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axes)
    db = dy.sum(axes)
    dxhat = dy * g
    dx = rstd * (dxhat - dxhat.mean(-1, keepdims=True) - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dx, dg, db


def _mm(x, w):
    """``x @ w`` folded into a single GEMM over all leading axes."""
    return (x.reshape(-1, x.shape[-1]) @ w).reshape(x.shape[:-1] + (w.shape[-1],))


def _dense_back(dy, x, w):
    """Gradients of ``y = x @ w + b`` for inputs with arbitrary leading axes."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return _mm(dy, w.T), x2.T @ dy2, dy2.sum(0)


def _causal_mask(t):
    return np.triu(np.ones((t, t), dtype=bool), 1)


def forward(params, cfg, tokens, roles, return_cache=False):
    """Per-token outputs of width 2M for a batch of prompts ``(B, T, 2M)``."""
    tokens = np.asarray(tokens, dtype=float)
    squeeze = tokens.ndim == 2
    if squeeze:
        tokens = tokens[None]
    bsz, t, width = tokens.shape
    if width != cfg.token_width:
        raise ShapeError(f"token width {width} != {cfg.token_width}")
    if t > cfg.max_len:
        raise CapacityError(f"prompt of {t} tokens exceeds the {cfg.max_len}-position table")
    flags = np.broadcast_to(role_flags(roles)[None, :, None], (bsz, t, 1))
    inp = np.concatenate([tokens, flags], axis=-1)
    h = _mm(inp, params["input_proj.w"]) + params["input_proj.b"] + params["pos_embed"][:t]
    nh, dh = cfg.heads, cfg.d // cfg.heads
    mask = _causal_mask(t)
    scale = 1.0 / np.sqrt(dh)
    caches = []
    for i in range(cfg.layers):
        p = f"layers.{i}."
        a, ln1 = _ln(h, params[p + "ln1.g"], params[p + "ln1.b"])
        split = lambda z: z.reshape(bsz, t, nh, dh).transpose(0, 2, 1, 3)
        q = split(_mm(a, params[p + "attn.wq"]) + params[p + "attn.bq"])
        k = split(_mm(a, params[p + "attn.wk"]) + params[p + "attn.bk"])
        v = split(_mm(a, params[p + "attn.wv"]) + params[p + "attn.bv"])
        s = (q @ k.transpose(0, 1, 3, 2)) * scale
        s = np.where(mask, -np.inf, s)
        s = s - s.max(-1, keepdims=True)
        e = np.exp(s)
        att = e / e.sum(-1, keepdims=True)
        o = (att @ v).transpose(0, 2, 1, 3).reshape(bsz, t, cfg.d)
        h = h + _mm(o, params[p + "attn.wo"]) + params[p + "attn.bo"]
        a2, ln2 = _ln(h, params[p + "ln2.g"], params[p + "ln2.b"])
        u = _mm(a2, params[p + "mlp.w1"]) + params[p + "mlp.b1"]
        gl, tt = _gelu(u)
        h = h + _mm(gl, params[p + "mlp.w2"]) + params[p + "mlp.b2"]
        caches.append((a, ln1, q, k, v, att, o, a2, ln2, u, gl, tt))
    hf, lnf = _ln(h, params["ln_f.g"], params["ln_f.b"])
    out = _mm(hf, params["output_proj.w"]) + params["output_proj.b"]
    if squeeze:
        out = out[0]
    if not return_cache:
        return out
    return out, (inp, caches, hf, lnf, squeeze)


def backward(params, cfg, cache, dout):
    """Reverse pass. Returns ``(grads, d_tokens)`` for upstream gradient ``dout``."""
    inp, caches, hf, lnf, squeeze = cache
    dout = np.asarray(dout, dtype=float)
    if squeeze:
        dout = dout[None]
    bsz, t, _ = inp.shape
    nh, dh = cfg.heads, cfg.d // cfg.heads
    scale = 1.0 / np.sqrt(dh)
    grads = {}
    dhf, grads["output_proj.w"], grads["output_proj.b"] = _dense_back(dout, hf, params["output_proj.w"])
    dh_, grads["ln_f.g"], grads["ln_f.b"] = _ln_back(dhf, params["ln_f.g"], lnf)
    for i in reversed(range(cfg.layers)):
        p = f"layers.{i}."
        a, ln1, q, k, v, att, o, a2, ln2, u, gl, tt = caches[i]
        dgl, grads[p + "mlp.w2"], grads[p + "mlp.b2"] = _dense_back(dh_, gl, params[p + "mlp.w2"])
        du = _gelu_back(dgl, u, tt)
        da2, grads[p + "mlp.w1"], grads[p + "mlp.b1"] = _dense_back(du, a2, params[p + "mlp.w1"])
        dx, grads[p + "ln2.g"], grads[p + "ln2.b"] = _ln_back(da2, params[p + "ln2.g"], ln2)
        dh_ = dh_ + dx
        do, grads[p + "attn.wo"], grads[p + "attn.bo"] = _dense_back(dh_, o, params[p + "attn.wo"])
        do = do.reshape(bsz, t, nh, dh).transpose(0, 2, 1, 3)
        datt = do @ v.transpose(0, 1, 3, 2)
        dv = att.transpose(0, 1, 3, 2) @ do
        ds = att * (datt - (datt * att).sum(-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        merge = lambda z: z.transpose(0, 2, 1, 3).reshape(bsz, t, cfg.d)
        da = np.zeros_like(a)
        for name, dz in (("q", dq), ("k", dk), ("v", dv)):
            dz = merge(dz)
            dai, grads[p + f"attn.w{name}"], grads[p + f"attn.b{name}"] = _dense_back(dz, a, params[p + f"attn.w{name}"])
            da += dai
        dx, grads[p + "ln1.g"], grads[p + "ln1.b"] = _ln_back(da, params[p + "ln1.g"], ln1)
        dh_ = dh_ + dx
    dinp, grads["input_proj.w"], grads["input_proj.b"] = _dense_back(dh_, inp, params["input_proj.w"])
    dpos = np.zeros_like(params["pos_embed"])
    dpos[:t] = dh_.sum(0)
    grads["pos_embed"] = dpos
    dtok = dinp[..., : cfg.token_width]
    if squeeze:
        dtok = dtok[0]
    grads = {name: grads[name] for name in params}
    return grads, dtok


def icl_loss(out, targets):
    """Mean over prompts of ``sum_n ||x_n - x_hat_n||^2 / ((N + 1) M)``.

    ``out`` is ``(B, 2N+1, 2M)``; ``targets`` is complex ``(B, M, N+1)``.
    Returns ``(loss, d_out)``.
    """
    out = np.asarray(out, dtype=float)
    targets = np.asarray(targets)
    n1 = targets.shape[-1]
    m = targets.shape[-2]
    if out.shape[-2] != 2 * n1 - 1 or out.shape[-1] != 2 * m:
        raise ShapeError(f"outputs {out.shape} do not align with targets {targets.shape}")
    pos = loss_positions(n1 - 1)
    tgt = np.concatenate([targets.real, targets.imag], axis=-2)
    tgt = np.swapaxes(tgt, -1, -2)
    diff = out[..., pos, :] - tgt
    batch = int(np.prod(out.shape[:-2]))
    norm = n1 * m * batch
    loss = float(np.sum(diff * diff) / norm)
    dout = np.zeros_like(out)
    dout[..., pos, :] = 2.0 * diff / norm
    return loss, dout


def check_finite(grads):
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")


def loss_and_grads(params, cfg, tokens, roles, targets):
    out, cache = forward(params, cfg, tokens, roles, return_cache=True)
    loss, dout = icl_loss(out, targets)
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    grads, _ = backward(params, cfg, cache, dout)
    check_finite(grads)
    return loss, grads


def predict(params, cfg, ctx, y_query):
    """Query estimate ``h_omega(C, y_query)`` as a complex M-vector."""
    prompt = tokenize(ctx, y_query)
    out = forward(params, cfg, prompt.tokens, prompt.roles)
    return read_prediction(out, ctx.n)


def predict_tokens(params, cfg, tokens, roles, chunk=4096):
    """Query predictions for a large token batch, evaluated in chunks."""
    n = (tokens.shape[-2] - 1) // 2
    preds = [read_prediction(forward(params, cfg, tokens[i : i + chunk], roles), n)
             for i in range(0, tokens.shape[0], chunk)]
    return np.concatenate(preds, axis=0)
