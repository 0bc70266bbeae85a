"""Command-line entry point: ``icljscc <subcommand> [options]``.

Thread count for the BLAS pool is taken from ``ICLJSCC_THREADS``;
``--deterministic`` pins it to one thread so reductions run in a fixed order.
"""
import argparse
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import checkpoint, experiments
from .config import ConfigError, ExperimentConfig, load_config
from .errors import CheckpointError

THREADS_ENV = "ICLJSCC_THREADS"

log = logging.getLogger("icljscc")


def _thread_limit(deterministic):
    if deterministic:
        return threadpool_limits(1)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be positive")
        return threadpool_limits(n)
    return nullcontext()


def _load(args, experiment=None):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    updates = {}
    if experiment:
        updates["experiment"] = experiment
    if args.seed is not None:
        updates["seeds"] = [args.seed]
    if args.out:
        updates["out"] = args.out
    return cfg.with_updates(**updates)


def _ckpt_dir(args):
    return Path(args.checkpoint) if args.checkpoint else None


def cmd_train(args):
    cfg = _load(args)
    if not args.checkpoint:
        raise ConfigError("train needs --checkpoint <path> for the output model")
    # several SNRs in the config select mixed-SNR training
    snr = cfg.snr_db[0] if len(cfg.snr_db) == 1 else tuple(cfg.snr_db)
    params, losses = experiments.train_icl(cfg, snr, cfg.n, cfg.seeds[0])
    checkpoint.save_checkpoint(args.checkpoint, params)
    tail = losses[-max(1, len(losses) // 20):].mean()
    print(f"trained {cfg.steps} steps, final loss {tail:.6g} -> {args.checkpoint}")
    return 0


def cmd_eval(args):
    cfg = _load(args, "eval")
    if not args.checkpoint:
        raise ConfigError("eval needs --checkpoint <path>")
    params = checkpoint.load_checkpoint(args.checkpoint, experiments.model_template(cfg))
    rows = []
    for seed in cfg.seeds:
        for snr in cfg.snr_db:
            batch = experiments.eval_batch(cfg, snr, cfg.n, seed)
            rows.append(experiments.ResultRow(cfg.experiment, "ls", snr, cfg.n, seed, "mse",
                                              float(experiments.ls_query_mse(batch).mean())))
            rows.append(experiments.ResultRow(cfg.experiment, "icl", snr, cfg.n, seed, "mse",
                                              float(experiments.icl_query_mse(params, cfg, batch).mean())))
    return _emit(cfg, rows)


def _emit(cfg, rows):
    experiments.write_rows(cfg.out, rows)
    for r in rows:
        print(f"{r.scenario:>14} snr={r.snr_db:g} n={r.pilot_len} seed={r.seed} {r.metric}={r.value:.6g}")
    print(f"wrote {len(rows)} rows to {cfg.out}")
    return 0


def _recipe(name):
    def run(args):
        cfg = _load(args, name)
        fn = experiments.RECIPES[name]
        if name == "e2e-toy":
            rows = fn(cfg)
        else:
            rows = fn(cfg, ckpt_dir=_ckpt_dir(args), ls_only=args.ls_only)
        return _emit(cfg, rows)

    return run


def cmd_export_plot(args):
    rows = experiments.read_rows(args.csv)
    if args.experiment:
        rows = [r for r in rows if r.experiment == args.experiment]
    text = experiments.plot_table(rows, metric=args.metric, x=args.x)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="icljscc", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value experiment config file")
    common.add_argument("--seed", type=int, help="override the config's seed list with one seed")
    common.add_argument("--out", help="output CSV path")
    common.add_argument("--checkpoint", help="checkpoint file (train/eval) or cache directory (sweeps)")
    common.add_argument("--deterministic", action="store_true", help="single-threaded, fixed reduction order")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train one ICL denoiser").set_defaults(func=cmd_train)
    sub.add_parser("eval", parents=[common], help="evaluate a checkpoint against LS").set_defaults(func=cmd_eval)
    for name, help_ in (("mse-vs-snr", "query MSE versus SNR"), ("mse-vs-pilots", "query MSE versus pilot length")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--ls-only", action="store_true", help="skip the ICL model, emit LS rows only")
        p.set_defaults(func=_recipe(name))
    sub.add_parser("e2e-toy", parents=[common], help="toy joint source-channel coding").set_defaults(
        func=_recipe("e2e-toy"))
    p = sub.add_parser("export-plot", parents=[common], help="gnuplot columns from a results CSV")
    p.add_argument("csv")
    p.add_argument("--metric", default="mse")
    p.add_argument("--x", default="snr_db", choices=("snr_db", "pilot_len"))
    p.add_argument("--experiment")
    p.set_defaults(func=cmd_export_plot)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        with _thread_limit(args.deterministic):
            return args.func(args)
    except (ConfigError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
