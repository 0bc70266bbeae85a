"""Experiment recipes, result rows, and CSV output.

Every (scenario, SNR, pilot length, seed) cell derives its random streams
from the seed and a key built from the cell coordinates, so a row can be
reproduced on its own without replaying the rest of the sweep.
"""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint, jscc, model
from .channel import normalize_power
from .images import load_image_dir, psnr_report, textures
from .prompt import TaskSpec, sample_batch
from .rng import crandn, generator, streams
from .train import TrainState, prompt_sampler, train

log = logging.getLogger(__name__)

CSV_HEADER = ("experiment", "scenario", "snr_db", "pilot_len", "seed", "metric", "value")
IQ_KEYS = {"balanced": 0, "case1": 1, "case2": 2}

# spawn-key tags so that training, evaluation and init never share a stream
_TRAIN, _EVAL, _INIT, _WARM = 1, 2, 3, 4


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    scenario: str
    snr_db: float
    pilot_len: int
    seed: int
    metric: str
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite {self.metric} for {self.scenario} at {self.snr_db} dB")


def write_rows(path, rows):
    """Write rows as CSV (LF line endings, shortest round-trip float formatting)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.experiment, r.scenario, repr(float(r.snr_db)), r.pilot_len, r.seed, r.metric,
                        repr(float(r.value))])


def read_rows(path):
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        return [ResultRow(e, s, float(snr), int(n), int(seed), m, float(v))
                for e, s, snr, n, seed, m, v in reader]


def cell_key(cfg, snr, n):
    """Non-negative spawn key for one sweep cell; a mixed-SNR tuple keys as SNR 0."""
    snr = snr if np.ndim(snr) == 0 else 0.0
    return (IQ_KEYS[cfg.iq], int(round(snr * 100)) + 100_000, n)


def model_config(cfg):
    return model.ModelConfig(m=cfg.m, d=cfg.d, layers=cfg.layers, heads=cfg.heads, max_len=cfg.max_len)


def model_template(cfg):
    """Correctly shaped parameters, used to validate loaded checkpoints."""
    return model.init_params(model_config(cfg), generator(0))


def task_spec(cfg, snr, n):
    return TaskSpec(m=cfg.m, n=n, snr_db=snr, power=cfg.power, iq=cfg.iq, variant=cfg.variant)


def per_symbol_mse(x_hat, x):
    """Per-task ``||x_hat - x||^2 / M``."""
    return np.sum(np.abs(x_hat - x) ** 2, axis=-1) / x.shape[-1]


def train_icl(cfg, snr, n, seed):
    """Train one ICL denoiser for a cell; returns ``(params, loss_trace)``.

    ``snr`` may be a tuple, in which case each task draws its SNR from it.
    """
    mcfg = model_config(cfg)
    key = cell_key(cfg, snr, n)
    params = model.init_params(mcfg, generator(seed, _INIT, *key))
    state = TrainState(params, lr=cfg.lr, batch=cfg.batch)
    warm = []
    if cfg.curriculum_steps:
        # short prompts first: the pairing circuit forms much sooner there
        state.batch = cfg.curriculum_batch or cfg.batch
        short = prompt_sampler(task_spec(cfg, snr, min(cfg.curriculum_n, n)), seed, _WARM, *key)
        state, warm = train(state, mcfg, short, cfg.curriculum_steps, log_every=max(1, cfg.curriculum_steps // 10))
        state.batch = cfg.batch
    sampler = prompt_sampler(task_spec(cfg, snr, n), seed, _TRAIN, *key)
    state, losses = train(state, mcfg, sampler, cfg.steps, schedule=cfg.schedule, warmup=cfg.warmup,
                          log_every=max(1, cfg.steps // 20))
    return state.params, np.concatenate([warm, losses])


def checkpoint_path(ckpt_dir, cfg, snr, n, seed):
    curr = (f"_warm{cfg.curriculum_n}x{cfg.curriculum_steps}b{cfg.curriculum_batch}"
            if cfg.curriculum_steps else "")
    name = f"icl_{cfg.variant}_{cfg.iq}_snr{snr:g}_n{n}_seed{seed}_d{cfg.d}_steps{cfg.steps}_lr{cfg.lr:g}{curr}.ckpt"
    return Path(ckpt_dir) / name


def obtain_icl(cfg, snr, n, seed, ckpt_dir=None, train_missing=True):
    """Load a cached model for the cell, or train (and cache) one.

    Returns ``None`` when no checkpoint exists and training is disabled.
    """
    path = checkpoint_path(ckpt_dir, cfg, snr, n, seed) if ckpt_dir else None
    if path is not None and path.exists():
        return checkpoint.load_checkpoint(path, model_template(cfg))
    if not train_missing:
        return None
    params, _ = train_icl(cfg, snr, n, seed)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        checkpoint.save_checkpoint(path, params)
    return params


def eval_batch(cfg, snr, n, seed, tasks=None):
    return sample_batch(task_spec(cfg, snr, n), tasks or cfg.eval_tasks, streams(seed, _EVAL, *cell_key(cfg, snr, n)))


def icl_query_mse(params, cfg, batch):
    pred = model.predict_tokens(params, model_config(cfg), batch.tokens, batch.roles)
    return per_symbol_mse(pred, batch.targets[..., -1])


def ls_query_mse(batch):
    return per_symbol_mse(batch.ls_query_estimate(), batch.x_raw[..., -1])


def run_mse_vs_snr(cfg, ckpt_dir=None, train_missing=True, ls_only=False):
    """LS and ICL query MSE at each SNR for pilot length ``cfg.n``.

    Both estimators see the identical held-out task stream. LS rows are
    produced even when no model is available.
    """
    rows = []
    for seed in cfg.seeds:
        for snr in cfg.snr_db:
            batch = eval_batch(cfg, snr, cfg.n, seed)
            rows.append(ResultRow(cfg.experiment, "ls", snr, cfg.n, seed, "mse", float(ls_query_mse(batch).mean())))
            if ls_only:
                continue
            params = obtain_icl(cfg, snr, cfg.n, seed, ckpt_dir, train_missing)
            if params is None:
                log.warning("no ICL model for %s dB, seed %d; LS row only", snr, seed)
                continue
            rows.append(ResultRow(cfg.experiment, "icl", snr, cfg.n, seed, "mse",
                                  float(icl_query_mse(params, cfg, batch).mean())))
    return rows


def pilot_sweep_batches(cfg, snr, seed, pilot_lens, tasks=None):
    """Evaluation batches for several pilot lengths with common random numbers.

    All lengths share the channel, IQ draws, raw symbol columns and noise;
    length ``N`` uses the first ``N`` pilot columns plus the shared query
    column, re-normalised to the power budget.
    """
    tasks = tasks or cfg.eval_tasks
    n_max = max(pilot_lens)
    key = cell_key(cfg, snr, n_max)
    raw = crandn(generator(seed, _EVAL, *key, 100), (tasks, cfg.m, n_max + 1))
    noise = crandn(generator(seed, _EVAL, *key, 101), (tasks, cfg.m, n_max + 1))
    out = {}
    for n in pilot_lens:
        cols = list(range(n)) + [n_max]
        symbols = normalize_power(raw[..., cols], cfg.power)
        st = streams(seed, _EVAL, *key)
        out[n] = sample_batch(task_spec(cfg, snr, n), tasks, st, n=n, symbols=symbols, noise=noise[..., cols])
    return out


def run_mse_vs_pilot_len(cfg, ckpt_dir=None, train_missing=True, ls_only=False):
    """LS and ICL query MSE over ``cfg.pilot_lens`` at each SNR.

    One ICL model per (SNR, seed) is trained at the longest pilot length;
    because the loss covers every prefix of the prompt, shorter contexts
    are evaluated on prompt prefixes.
    """
    rows = []
    n_max = max(cfg.pilot_lens)
    for seed in cfg.seeds:
        for snr in cfg.snr_db:
            batches = pilot_sweep_batches(cfg, snr, seed, cfg.pilot_lens)
            params = None if ls_only else obtain_icl(cfg, snr, n_max, seed, ckpt_dir, train_missing)
            for n in cfg.pilot_lens:
                b = batches[n]
                if n >= cfg.m:
                    rows.append(ResultRow(cfg.experiment, "ls", snr, n, seed, "mse", float(ls_query_mse(b).mean())))
                if params is not None:
                    rows.append(ResultRow(cfg.experiment, "icl", snr, n, seed, "mse",
                                          float(icl_query_mse(params, cfg, b).mean())))
    return rows


def jscc_config(cfg, snr, **overrides):
    kw = dict(m=cfg.m, l=cfg.l, p=cfg.p, c=3, h=cfg.image_size, w=cfg.image_size, hidden=cfg.hidden, n=cfg.n,
              snr_db=snr, power=cfg.power, loop=cfg.loop, variant=cfg.variant, context=cfg.context, iq=cfg.iq,
              lam=cfg.lam, icl=model_config(cfg))
    kw.update(overrides)
    return jscc.JsccConfig(**kw)


def toy_images(cfg, seed):
    """``(train, test)`` image stacks: a raw-image directory if configured, else textures."""
    if cfg.image_dir:
        imgs = load_image_dir(cfg.image_dir)
        split = max(1, int(0.8 * len(imgs)))
        return imgs[:split], imgs[split:] if split < len(imgs) else imgs[:1]
    g = generator(seed, 21)
    return (textures(cfg.train_images, g, 3, cfg.image_size, cfg.image_size),
            textures(cfg.test_images, g, 3, cfg.image_size, cfg.image_size))


def e2e_scenarios(cfg):
    """Scenario name -> (JsccConfig overrides, frozen parameter prefixes)."""
    return {
        "joint": ({}, ()),
        "joint-lambda0": ({"lam": 0.0}, ()),
        "separate": ({"context": "none"}, ("icl.",)),
        "ls": ({"equalizer": "ls"}, ()),
    }


def run_e2e_toy(cfg):
    """Joint vs separate design (plus the lambda = 0 ablation and an LS receiver).

    For each scenario reports held-out PSNR and joint loss before and after
    ``cfg.jscc_steps`` updates, all on matched seeds.
    """
    rows = []
    for seed in cfg.seeds:
        train_imgs, test_imgs = toy_images(cfg, seed)
        for snr in cfg.snr_db:
            base = jscc_config(cfg, snr)
            icl_params, _ = jscc.pretrain_denoiser(base, cfg.pretrain_steps, seed, lr=1e-3, batch=cfg.batch)
            for name, (over, frozen) in e2e_scenarios(cfg).items():
                jc = jscc_config(cfg, snr, **over)
                params = jscc.init_params(jc, generator(seed, 22), icl_params)
                ps0, loss0 = jscc.evaluate(params, jc, test_imgs, seed)
                params, trace = jscc.train_jscc(params, jc, train_imgs, cfg.jscc_steps, seed,
                                                batch=cfg.jscc_batch, lr=cfg.jscc_lr, freeze=frozen)
                ps1, loss1 = jscc.evaluate(params, jc, test_imgs, seed)
                for metric, value in (("psnr_untrained", psnr_report(ps0)), ("loss_untrained", loss0),
                                      ("psnr", psnr_report(ps1)), ("loss", loss1),
                                      ("train_loss_final", float(trace[-max(1, len(trace) // 10):].mean()))):
                    rows.append(ResultRow(cfg.experiment, name, snr, cfg.n, seed, metric, float(value)))
    return rows


RECIPES = {"mse-vs-snr": run_mse_vs_snr, "mse-vs-pilots": run_mse_vs_pilot_len, "e2e-toy": run_e2e_toy}


def plot_table(rows, metric="mse", x="snr_db"):
    """Gnuplot-ready text: one x column, then the seed-mean of ``metric`` per scenario."""
    sel = [r for r in rows if r.metric == metric]
    scenarios = sorted({r.scenario for r in sel})
    xs = sorted({getattr(r, x) for r in sel})
    lines = ["# " + " ".join([x] + scenarios)]
    for xv in xs:
        cells = []
        for s in scenarios:
            vals = [r.value for r in sel if r.scenario == s and getattr(r, x) == xv]
            cells.append(repr(float(np.mean(vals))) if vals else "NaN")
        lines.append(" ".join([repr(float(xv)) if isinstance(xv, float) else str(xv)] + cells))
    return "\n".join(lines) + "\n"
