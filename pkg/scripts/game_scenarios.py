"""Defender/attacker game on IEEE-14 under both load scenarios.

Prints the defense cost of every defender action, the defender actions that
appear in any equilibrium, and the equilibrium defense cost range.

    python scripts/game_scenarios.py [--eta 0.06] [--sign-rule positive] [--json out.json]
"""
import argparse
import dataclasses
import json
import time
import warnings
from pathlib import Path

from gridmtd.case_io import load_case, load_config, write_report
from gridmtd.cli import cmd_game

ROOT = Path(__file__).resolve().parents[1]
DEFENDER_SETS = [[1], [1, 3], [1, 3, 5], [1, 3, 5, 8], [1, 3, 5, 8, 9, 18, 19]]


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--config", default=str(ROOT / "configs" / "ieee14.json"))
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--sign-rule", default=None)
    p.add_argument("--shed-cost", type=float, default=None)
    p.add_argument("--json", help="write both reports to this file")
    args = p.parse_args()

    cfg = load_config(args.config)
    over = {k: v for k, v in (("eta", args.eta), ("sign_rule", args.sign_rule), ("shed_cost", args.shed_cost))
            if v is not None}
    cfg = dataclasses.replace(cfg, **over)
    warnings.simplefilter("ignore")
    reports = {}
    for label, name in (("scenario 1", "ieee14"), ("scenario 2", "ieee14_s2")):
        case = cfg.apply(load_case(name))
        t0 = time.perf_counter()
        game, rep = cmd_game(case, cfg, DEFENDER_SETS, [[l] for l in range(1, case.n_branch + 1)])
        dt = time.perf_counter() - t0
        reports[label] = rep
        pct = ", ".join(f"{v:.2f}" for v in rep["defense_cost_pct"])
        cost = rep["equilibrium_defense_cost_pct"]
        print(f"{label}: C00 = {rep['baseline_cost']:.2f} $/h, defense cost % per action [{pct}]")
        print(f"  {len(rep['equilibria'])} equilibria ({dt:.1f} s); defender support "
              f"{[rep['defender_actions'][j] for j in rep['equilibrium_defender_support']]}; "
              f"equilibrium defense cost {cost['min']:.2f}..{cost['max']:.2f} %")
    if args.json:
        Path(args.json).write_text(write_report(reports, "json"))


if __name__ == "__main__":
    main()
