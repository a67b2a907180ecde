"""Command-line drivers: deploy | protect | detect | opf | game.

Every subcommand writes a CSV or JSON report to stdout.  Exit codes:
0 success, 1 usage error, 2 bad input data, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from .attack import NoAlternativePathError
from .case_io import (CaseFormatError, CaseValidationError, DfactsConfig, GridCase, SimConfig, Table,
                      load_case, load_config, write_report)
from .dispatch import InfeasibleDispatchError, solve_opf, trace_algorithm1
from .estimation import EstimationError
from .game import DegenerateGameError, GameSpec, build_game, mixed_ne, pure_ne
from .mtd import (AttackConfig, DfactsPlan, alarm_rate, attacked_system, is_protected,
                  resolve_deployment)
from .network import DisconnectedGraphError, IslandingError, Topology, is_forest

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------------------
# argument helpers


def parse_id_list(text: str) -> list[int]:
    """'1,3,5' -> [1, 3, 5]; whitespace ignored."""
    try:
        return [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"expected comma-separated branch ids, got {text!r}") from None


def parse_sets(text: str) -> list[list[int]]:
    """'1;1,3;1,3,5' -> [[1], [1, 3], [1, 3, 5]]; an empty item is the empty set."""
    return [parse_id_list(part) for part in text.split(";")]


def parse_eta_grid(text: str) -> list[float]:
    try:
        grid = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated eta values, got {text!r}") from None
    if not grid or any(not np.isfinite(e) or e < 0 for e in grid):
        raise UsageError(f"eta grid must be nonempty and nonnegative, got {text!r}")
    return grid


def resolve_seed(flag: int | None, cfg: SimConfig) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("GRIDMTD_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"GRIDMTD_SEED must be an integer, got {env!r}") from None
    return cfg.seed


def _label(ids) -> str:
    return "{" + " ".join(str(i) for i in sorted(ids)) + "}"


# ----------------------------------------------------------------------------
# subcommands


def cmd_deploy(case: GridCase, cfg: SimConfig) -> Table:
    topo = Topology.from_case(case)
    dep = resolve_deployment(case, cfg.deployment)
    tree = [l for l in topo.live_ids if l not in dep]
    t = Table(("case", "buses", "branches", "deployment_size", "deployment", "residual_is_tree"))
    t.add(case.name, case.n_bus, case.n_branch, len(dep), sorted(dep),
          len(tree) == case.n_bus - 1 and is_forest(topo, tree))
    return t


def cmd_protect(case: GridCase, cfg: SimConfig, defender_sets: list[list[int]] | None) -> Table:
    topo = Topology.from_case(case)
    sets = defender_sets if defender_sets is not None else [sorted(resolve_deployment(case, cfg.deployment))]
    for s in sets:
        for l in s:
            case.branch(l)
    t = Table(("link",) + tuple(_label(s) for s in sets))
    for l in topo.live_ids:
        t.add(l, *(is_protected(topo, l, s) for s in sets))
    return t


def cmd_detect(case: GridCase, cfg: SimConfig, links: list[int], eta_grid: list[float], trials: int,
               seed: int, perturbed: list[int] | None = None) -> Table:
    """One row per (link, eta).  Radial links cannot be masked and are flagged instead of run."""
    deployment = resolve_deployment(case, cfg.deployment)
    active = deployment if perturbed is None else frozenset(perturbed)
    dfacts = DfactsConfig.symmetric(case, cfg.dfacts_range, deployment)
    topo = Topology.from_case(case)
    t = Table(("link", "eta", "p_detect", "protected", "status"),
              meta={"alpha": cfg.alpha, "sigma": cfg.sigma, "trials": trials, "seed": seed,
                    "perturbed": sorted(active), "sign_rule": cfg.sign_rule})
    for l in links:
        case.branch(l)
        prot = is_protected(topo, l, active)
        for k, eta in enumerate(eta_grid):
            plan = DfactsPlan(deployment, active, eta, cfg.sign_rule)
            attack = AttackConfig(l, path_rule=cfg.path_rule, path_seed=seed)
            try:
                system = attacked_system(case, plan, attack, sigma=cfg.sigma, alpha=cfg.alpha, dfacts=dfacts,
                                         weighted=cfg.residual == "weighted")
            except NoAlternativePathError:
                t.add(l, eta, "", prot, "not-attackable")
                continue
            rng = np.random.SeedSequence([seed, l, k])
            t.add(l, eta, alarm_rate(system.model, system.z_clean, trials, rng), prot, "ok")
    return t


def cmd_opf(case: GridCase, cfg: SimConfig, defense: list[int] | None, attack: list[int] | None) -> dict:
    """Baseline dispatch, or a single cascade cost cell when a defense or attack is given."""
    if not defense and not attack:
        res = solve_opf(case)
        return {"cost": res.cost,
                "generation": {str(g.bus): v for g, v in zip(case.generators, res.g)},
                "shed": {str(b): v for b, v in zip(case.bus_ids, res.shed) if v > 0},
                "flows": {str(l + 1): v for l, v in enumerate(res.flows)}}
    deployment = resolve_deployment(case, cfg.deployment)
    dfacts = DfactsConfig.symmetric(case, cfg.dfacts_range, deployment)
    tr = trace_algorithm1(case, attack or [], defense or [], eta=cfg.eta, deployment=deployment, dfacts=dfacts,
                          sign_rule=cfg.sign_rule)
    final = tr.final if tr.final is not None else tr.baseline
    return {"cost": tr.cost, "baseline_cost": tr.baseline_cost, "success": tr.success,
            "tripped": sorted(tr.tripped), "overloaded": sorted(tr.overloaded),
            "generation": {str(g.bus): v for g, v in zip(case.generators, final.g)},
            "shed": {str(b): v for b, v in zip(case.bus_ids, final.shed) if v > 0}}


def _game_report(game: GameSpec, cap: int) -> dict:
    eqs = mixed_ne(game, cap=cap)
    pct = game.defense_cost_pct()
    out: dict = {}
    if game.defender_actions:
        out["defender_actions"] = [sorted(d) for d in game.defender_actions]
        out["attacker_actions"] = [sorted(a) for a in game.attacker_actions]
    if game.baseline_cost is not None:
        out["baseline_cost"] = game.baseline_cost
        out["defense_cost_pct"] = pct
        out["costs"] = game.costs
        out["success"] = game.success
    out["U_D"] = game.U_D
    out["U_A"] = game.U_A
    out["pure_ne"] = [list(c) for c in pure_ne(game)]
    rows = []
    for e in eqs:
        row = {"p_D": e.p_D, "p_A": e.p_A, "support_D": list(e.support_D), "support_A": list(e.support_A),
               "u_D": e.u_D, "u_A": e.u_A}
        if pct is not None:
            row["defense_cost_pct"] = float(e.p_D @ pct)
        rows.append(row)
    out["equilibria"] = rows
    if pct is not None:
        exp = [r["defense_cost_pct"] for r in rows]
        out["equilibrium_defense_cost_pct"] = {"min": min(exp), "max": max(exp)}
        out["equilibrium_defender_support"] = sorted({j for e in eqs for j in e.support_D})
    return out


def cmd_game(case: GridCase | None, cfg: SimConfig, defender_sets: list[list[int]] | None,
             attacker_sets: list[list[int]] | None, game_file: str | None = None) -> tuple[GameSpec, dict]:
    if game_file is not None:
        data = json.loads(Path(game_file).read_text())
        if not isinstance(data, dict) or "U_D" not in data or "U_A" not in data:
            raise ValueError("game file must be a JSON object with 'U_D' and 'U_A' matrices")
        game = GameSpec.from_payoffs(data["U_D"], data["U_A"])
    else:
        deployment = resolve_deployment(case, cfg.deployment)
        if defender_sets is None:
            defender_sets = [sorted(deployment)]
        if attacker_sets is None:
            attacker_sets = [[l] for l in range(1, case.n_branch + 1)]
        for a in attacker_sets:
            for l in a:
                case.branch(l)
        dfacts = DfactsConfig.symmetric(case, cfg.dfacts_range, deployment)
        game = build_game(case, defender_sets, attacker_sets, deployment=deployment, eta=cfg.eta,
                          dfacts=dfacts, sign_rule=cfg.sign_rule)
    return game, _game_report(game, cfg.support_cap)


def _payoff_table(game: GameSpec) -> Table:
    t = Table(("defender", "attacker", "cost", "success", "U_D", "U_A"))
    nd, na = game.shape
    for j in range(nd):
        for i in range(na):
            d = _label(game.defender_actions[j]) if game.defender_actions else str(j)
            a = _label(game.attacker_actions[i]) if game.attacker_actions else str(i)
            cost = game.costs[j, i] if game.costs is not None else ""
            ok = bool(game.success[j, i]) if game.success is not None else ""
            t.add(d, a, cost, ok, game.U_D[j, i], game.U_A[j, i])
    return t


# ----------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--case", help="case file path or bundled name (ieee9, ieee14, ieee14_s2, ieee24, ieee39)")
    common.add_argument("--config", help="JSON sidecar with alpha, sigma, shed_cost, eta, deployment, ...")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to $GRIDMTD_SEED, then config)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="gridmtd", description="Moving-target defense experiments on DC grid models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("deploy", parents=[common], help="D-FACTS deployment set (MWST complement)")

    sp = sub.add_parser("protect", parents=[common], help="protection matrix: link x perturbation set")
    sp.add_argument("--defender-sets", help="';'-separated sets of ','-separated branch ids")

    sp = sub.add_parser("detect", parents=[common], help="detection probability per (link, eta)")
    sp.add_argument("--links", default="1", help="tripped links, comma-separated")
    sp.add_argument("--eta-grid", default="0,0.02,0.04,0.06,0.08,0.1")
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--defender-sets", help="perturbation set (first set used); default: whole deployment")

    sp = sub.add_parser("opf", parents=[common], help="baseline OPF, or one cascade cost cell")
    sp.add_argument("--defender-sets", help="perturbation set for the cell (first set used)")
    sp.add_argument("--links", help="tripped links for the cell")

    sp = sub.add_parser("game", parents=[common], help="payoff matrices and Nash equilibria")
    sp.add_argument("--defender-sets")
    sp.add_argument("--attacker-sets")
    sp.add_argument("--game-file", help="JSON with U_D and U_A; skips the grid model")
    return p


def _run(args) -> str:
    cfg = load_config(args.config)
    if args.command == "game" and args.game_file is not None:
        game, report = cmd_game(None, cfg, None, None, args.game_file)
        return write_report(report, "json") if args.format == "json" else write_report(_payoff_table(game), "csv")
    if args.case is None:
        raise UsageError("--case is required")
    case = cfg.apply(load_case(args.case))
    seed = resolve_seed(args.seed, cfg)

    if args.command == "deploy":
        return write_report(cmd_deploy(case, cfg), args.format)
    if args.command == "protect":
        sets = parse_sets(args.defender_sets) if args.defender_sets is not None else None
        return write_report(cmd_protect(case, cfg, sets), args.format)
    if args.command == "detect":
        trials = cfg.trials if args.trials is None else args.trials
        if trials < 1:
            raise UsageError("--trials must be at least 1")
        perturbed = parse_sets(args.defender_sets)[0] if args.defender_sets is not None else None
        table = cmd_detect(case, cfg, parse_id_list(args.links), parse_eta_grid(args.eta_grid), trials, seed,
                           perturbed)
        return write_report(table, args.format)
    if args.command == "opf":
        defense = parse_sets(args.defender_sets)[0] if args.defender_sets is not None else None
        attack = parse_id_list(args.links) if args.links else None
        return write_report(cmd_opf(case, cfg, defense, attack), args.format)
    if args.command == "game":
        d = parse_sets(args.defender_sets) if args.defender_sets is not None else None
        a = parse_sets(args.attacker_sets) if args.attacker_sets is not None else None
        game, report = cmd_game(case, cfg, d, a)
        return write_report(report, "json") if args.format == "json" else write_report(_payoff_table(game), "csv")
    raise UsageError(f"unknown command {args.command!r}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default")
    try:
        out = _run(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"gridmtd: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DisconnectedGraphError, IslandingError, CaseFormatError, CaseValidationError, FileNotFoundError,
            json.JSONDecodeError, KeyError, ValueError) as e:
        print(f"gridmtd: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, InfeasibleDispatchError, DegenerateGameError, np.linalg.LinAlgError) as e:
        print(f"gridmtd: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
