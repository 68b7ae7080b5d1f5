"""Run every study config (default: configs/*.json) and print the headline rows.

    python scripts/run_studies.py [CONFIG ...] [--output-dir DIR] [--workers K]
"""

import argparse
import csv
import logging
from pathlib import Path

from dnls_gauge.studies import load_config, run_study

ROOT = Path(__file__).resolve().parents[1]
HEADLINE = ("rate_slope", "tail_exponent", "fraction_abs_z_le_3", "z_score", "wick_second_moment", "mc_second_moment")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("configs", nargs="*", type=Path)
    ap.add_argument("--output-dir", default=str(ROOT / "results"))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    paths = args.configs or sorted((ROOT / "configs").glob("*.json"))
    for p in paths:
        cfg = load_config(p)
        cfg.output_dir, cfg.workers = args.output_dir, args.workers
        d = run_study(cfg)
        print(f"\n{p.name} -> {d}")
        with open(d / "results.csv") as fh:
            for row in csv.DictReader(fh):
                if row["statistic"].startswith(HEADLINE):
                    print(f"  {row['statistic']:<40s} {float(row['value']):.6g} +- {float(row['stderr']):.2g}")


if __name__ == "__main__":
    main()
