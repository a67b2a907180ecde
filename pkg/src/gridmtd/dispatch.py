"""DC optimal power flow with optional load shedding, and the post-attack
cost computation used to fill the game's payoff matrices.

The LP eliminates angles through per-island PTDFs, so its variables are the
generator outputs and (when allowed) the shed load at each loaded bus.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .case_io import DfactsConfig, GridCase
from .lp import simplex
from .mtd import DfactsPlan, apply_perturbation, is_protected
from .network import Topology, dc_flow, susceptance

OVERLOAD_TOL = 1e-9


class InfeasibleDispatchError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DispatchResult:
    g: np.ndarray
    shed: np.ndarray
    theta: np.ndarray
    flows: np.ndarray
    cost: float
    injections: np.ndarray = field(repr=False)
    live: np.ndarray = field(repr=False)
    status: str = "optimal"


def _ptdf(case: GridCase, topo: Topology, x: np.ndarray) -> np.ndarray:
    """L x N sensitivities of live-branch flows to bus injections, island by island."""
    D, B = susceptance(topo, x)
    A = topo.incidence()
    P = np.zeros((case.n_branch, case.n_bus))
    ref = case.ref_index
    for comp in topo.components:
        r = ref if ref in comp else comp[0]
        rest = [b for b in comp if b != r]
        if not rest:
            continue
        Binv = np.linalg.inv(B[np.ix_(rest, rest)])
        P[:, rest] = (D @ A.T)[:, rest] @ Binv
    return P


def solve_opf(case: GridCase, reactances: np.ndarray | None = None, live: np.ndarray | None = None,
              allow_shedding: bool = True) -> DispatchResult:
    """Minimum-cost dispatch at fixed reactances.

    Islands are costed jointly but independently (the LP separates): an island
    without generation sheds its whole load.  Where an island's load cannot
    absorb its units' minimum outputs those minimums drop to zero.
    """
    x = case.reactances if reactances is None else np.asarray(reactances, dtype=float)
    topo = Topology.from_case(case, live)
    N, G = case.n_bus, len(case.generators)
    loads = case.loads
    gbus = case.gen_bus_idx
    gmin = np.array([g.g_min for g in case.generators], dtype=float)
    gmax = np.array([g.g_max for g in case.generators], dtype=float)
    comps = topo.components
    island = np.empty(N, dtype=int)
    for k, comp in enumerate(comps):
        island[comp] = k
    for k, comp in enumerate(comps):
        members = np.flatnonzero(island[gbus] == k)
        if gmin[members].sum() > loads[comp].sum():
            gmin[members] = np.minimum(gmin[members], 0.0)

    shed_bus = np.flatnonzero(loads > 0) if allow_shedding else np.zeros(0, dtype=int)
    S = len(shed_bus)
    n = G + S
    Cinj = np.zeros((N, n))
    Cinj[gbus, np.arange(G)] = 1.0
    Cinj[shed_bus, G + np.arange(S)] = 1.0
    cost = np.concatenate([[g.cost for g in case.generators], np.array(case.shed_costs)[shed_bus]])
    bounds = [(lo, hi) for lo, hi in zip(gmin, gmax)] + [(0.0, loads[b]) for b in shed_bus]

    A_eq = np.zeros((len(comps), n))
    b_eq = np.zeros(len(comps))
    for k, comp in enumerate(comps):
        A_eq[k] = Cinj[comp].sum(axis=0)
        b_eq[k] = loads[comp].sum()

    P = _ptdf(case, topo, x)
    lim = np.flatnonzero(topo.live & np.isfinite(case.f_max))
    PC = P[lim] @ Cinj
    base = P[lim] @ loads
    fmax = case.f_max[lim]
    A_ub = np.vstack([PC, -PC])
    b_ub = np.concatenate([fmax + base, fmax - base])

    res = simplex(cost, A_ub, b_ub, A_eq, b_eq, bounds)
    if res.status != "optimal":
        raise InfeasibleDispatchError(f"dispatch LP is {res.status}")
    g = res.x[:G]
    shed = np.zeros(N)
    shed[shed_bus] = res.x[G:]
    inj = Cinj @ res.x - loads
    theta, flows = dc_flow(case, inj, topo.live, x)
    return DispatchResult(g, shed, theta, flows, res.fun, inj, topo.live)


@dataclass(frozen=True, eq=False)
class CostTrace:
    """Every intermediate of one cost evaluation."""

    cost: float
    baseline_cost: float
    success: bool
    tripped: frozenset[int]
    overloaded: frozenset[int]
    reactances: np.ndarray = field(repr=False)
    baseline: DispatchResult = field(repr=False)
    final: DispatchResult | None = field(default=None, repr=False)


def trace_algorithm1(case: GridCase, attack: Iterable[int], defense: Iterable[int], *, eta: float = 0.06,
                     deployment: Iterable[int] | None = None, dfacts: DfactsConfig | None = None,
                     sign_rule: str = "positive") -> CostTrace:
    """C_OPF(a_m, d_n) with all intermediate results.

    The defender's reactances are set first and a baseline shedding-OPF is
    solved.  A failed attack (every tripped link protected) leaves the
    baseline cost.  Otherwise flows are recomputed at the baseline dispatch
    without the tripped links, every branch then beyond its limit is removed
    as well, and the shedding-OPF is solved once more.
    """
    attack = frozenset(attack)
    defense = frozenset(defense)
    deployment = defense if deployment is None else frozenset(deployment)
    plan = DfactsPlan(deployment, defense, eta, sign_rule)
    x = apply_perturbation(case, plan, dfacts)
    baseline = solve_opf(case, x, allow_shedding=True)
    topo = Topology.from_case(case)
    success = any(not is_protected(topo, l, defense) for l in attack)
    if not success:
        return CostTrace(baseline.cost, baseline.cost, False, attack, frozenset(), x, baseline)

    live = np.ones(case.n_branch, dtype=bool)
    live[[l - 1 for l in attack]] = False
    _, flows = dc_flow(case, baseline.injections, live, x, slack=True)
    over = live & (np.abs(flows) > case.f_max * (1 + OVERLOAD_TOL))
    overloaded = frozenset(int(k) + 1 for k in np.flatnonzero(over))
    live &= ~over
    final = solve_opf(case, x, live, allow_shedding=True)
    return CostTrace(final.cost, baseline.cost, True, attack, overloaded, x, baseline, final)


def algorithm1_cost(case: GridCase, attack: Iterable[int], defense: Iterable[int], **kwargs) -> float:
    return trace_algorithm1(case, attack, defense, **kwargs).cost
