"""Adam, the training loop, and task samplers for the ICL denoiser."""
import ctypes
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import model
from .errors import NumericError, TrainingDivergedError
from .prompt import sample_batch
from .rng import streams

log = logging.getLogger(__name__)

DIVERGENCE_LOSS = 1e6


def _tune_malloc():
    # Large per-step temporaries otherwise get returned to the OS and
    # page-faulted back in on every step.
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
    except (OSError, AttributeError):
        pass


@dataclass
class TrainState:
    params: dict
    lr: float = 1e-4
    batch: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default=None)
    v: dict = field(default=None)

    def __post_init__(self):
        if self.m is None:
            self.m = {k: np.zeros_like(p) for k, p in self.params.items()}
        if self.v is None:
            self.v = {k: np.zeros_like(p) for k, p in self.params.items()}


def adam_step(state, grads, lr=None):
    """One bias-corrected Adam update, applied in place; returns ``state``."""
    lr = state.lr if lr is None else lr
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        state.params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def lr_at(step, total, base, schedule="constant", warmup=0):
    if warmup and step < warmup:
        return base * (step + 1) / warmup
    if schedule == "cosine":
        frac = (step - warmup) / max(1, total - warmup)
        return base * 0.5 * (1.0 + math.cos(math.pi * min(1.0, frac)))
    return base


def prompt_sampler(spec, seed, *key):
    """Closure drawing fresh prompt batches for ``spec`` from dedicated streams."""
    st = streams(seed, *key)

    def draw(batch):
        b = sample_batch(spec, batch, st)
        return b.tokens, b.roles, b.targets

    return draw


def train(state, cfg, sampler, steps, schedule="constant", warmup=0, log_every=0):
    """Run ``steps`` Adam updates on fresh batches; returns ``(state, loss_trace)``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    _tune_malloc()
    losses = np.empty(steps)
    start = state.step
    for i in range(steps):
        tokens, roles, targets = sampler(state.batch)
        loss, grads = model.loss_and_grads(state.params, cfg, tokens, roles, targets)
        if not loss < DIVERGENCE_LOSS:
            raise TrainingDivergedError(f"loss {loss:.3g} at step {state.step}")
        losses[i] = loss
        adam_step(state, grads, lr_at(state.step - start, steps, state.lr, schedule, warmup))
        for name, p in state.params.items():
            if not np.all(np.isfinite(p)):
                raise NumericError(f"parameter {name} became non-finite at step {state.step}")
        if log_every and (i + 1) % log_every == 0:
            log.info("step %d  loss %.5f", state.step, losses[i + 1 - log_every : i + 1].mean())
    return state, losses
