"""Train (or reuse) every ICL model the acceptance suite needs.

Models land in ``acceptance_models/`` (or ``$ICLJSCC_ACCEPT_CACHE``) and the
result rows are written next to them. Already cached models are skipped, so
the script can be interrupted and resumed.
"""
import logging
import os
import sys
from pathlib import Path

from icljscc import experiments
from icljscc.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cache = Path(os.environ.get("ICLJSCC_ACCEPT_CACHE", ROOT / "acceptance_models"))
    cache.mkdir(parents=True, exist_ok=True)
    jobs = [("linear_mse_vs_snr", experiments.run_mse_vs_snr),
            ("case1_mse_vs_pilots", experiments.run_mse_vs_pilot_len)]
    only = set(sys.argv[1:])
    for name, run in jobs:
        if only and name not in only:
            continue
        cfg = load_config(ROOT / "configs" / f"{name}.cfg")
        rows = run(cfg, ckpt_dir=cache)
        experiments.write_rows(cache / f"{name}.csv", rows)
        for r in rows:
            print(name, r.scenario, r.snr_db, r.pilot_len, f"{r.value:.5g}", flush=True)


if __name__ == "__main__":
    main()
