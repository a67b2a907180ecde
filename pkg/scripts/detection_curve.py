"""Detection probability vs reactance perturbation on IEEE-14 (plot-ready CSV).

    python scripts/detection_curve.py --out detection.csv
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from gridmtd.case_io import load_case, load_config, write_report
from gridmtd.cli import cmd_detect

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--config", default=str(ROOT / "configs" / "ieee14.json"))
    p.add_argument("--links", default="1,2,3")
    p.add_argument("--eta-max", type=float, default=0.1)
    p.add_argument("--eta-step", type=float, default=0.005)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    args = p.parse_args()

    cfg = load_config(args.config)
    case = cfg.apply(load_case("ieee14"))
    grid = [round(e, 6) for e in np.arange(0.0, args.eta_max + 1e-12, args.eta_step)]
    links = [int(l) for l in args.links.split(",")]
    text = write_report(cmd_detect(case, cfg, links, grid, args.trials, args.seed), "csv")
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)


if __name__ == "__main__":
    main()
