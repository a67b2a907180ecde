"""D-FACTS deployment, link protection and detection-probability evaluation."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .attack import AttackerKnowledge, build_ccpa, choose_path
from .case_io import DfactsConfig, GridCase
from .estimation import build_model, measurement_matrix, residual_norm
from .network import Topology, dc_flow, is_forest, max_weight_spanning_tree

DEFAULT_RANGE = 0.2
_CHUNK = 20_000


class PerturbationClippedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DfactsPlan:
    deployment: frozenset[int]
    perturbed: frozenset[int] = frozenset()
    eta: float = 0.0
    sign_rule: str = "positive"

    def __post_init__(self):
        object.__setattr__(self, "deployment", frozenset(self.deployment))
        object.__setattr__(self, "perturbed", frozenset(self.perturbed))
        if not self.perturbed <= self.deployment:
            extra = sorted(self.perturbed - self.deployment)
            raise ValueError(f"perturbed links {extra} carry no D-FACTS device")
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        if self.sign_rule not in ("alternating", "positive", "negative"):
            raise ValueError(f"unknown sign rule {self.sign_rule!r}")

    def signs(self) -> dict[int, int]:
        ids = sorted(self.perturbed)
        if self.sign_rule == "positive":
            return {l: 1 for l in ids}
        if self.sign_rule == "negative":
            return {l: -1 for l in ids}
        return {l: (1 if k % 2 == 0 else -1) for k, l in enumerate(ids)}


def deploy_dfacts(topo: Topology, weights: Sequence[float] | None = None) -> frozenset[int]:
    """Minimum-weight feedback edge set: every branch outside a maximum-weight spanning tree."""
    tree = max_weight_spanning_tree(topo, weights)
    return frozenset(topo.live_ids) - tree


def resolve_deployment(case: GridCase, override: Iterable[int] | None = None) -> frozenset[int]:
    """The MWST complement, or ``override`` after checking it is also a feedback edge set.

    With unit weights many spanning trees are optimal; an override lets an
    experiment pin a specific one (its size must match and the remaining
    branches must form a spanning tree).
    """
    topo = Topology.from_case(case)
    default = deploy_dfacts(topo)
    if override is None:
        return default
    chosen = frozenset(int(l) for l in override)
    for l in chosen:
        case.branch(l)
    rest = [l for l in topo.live_ids if l not in chosen]
    if len(rest) != case.n_bus - 1 or not is_forest(topo, rest):
        raise ValueError(f"deployment {sorted(chosen)} does not leave a spanning tree "
                         f"(needs {len(default)} branches whose removal keeps the grid a tree)")
    return chosen


def is_protected(topo: Topology, link: int, perturbed: Iterable[int]) -> bool:
    """True when a CCPA on ``link`` must rely on a perturbed reactance.

    Either the link itself is perturbed, or its endpoints fall apart once the
    link and every perturbed branch are removed (each alternative path then
    crosses a perturbed branch).
    """
    perturbed = set(perturbed)
    f, t = topo.endpoints(link)
    if link in perturbed:
        return True
    return not topo.connected(f, t, excluded=perturbed | {link})


def protected_links(topo: Topology, perturbed: Iterable[int]) -> frozenset[int]:
    perturbed = set(perturbed)
    return frozenset(l for l in topo.live_ids if is_protected(topo, l, perturbed))


def apply_perturbation(case: GridCase, plan: DfactsPlan, dfacts: DfactsConfig | None = None) -> np.ndarray:
    """x'_l = x_l (1 + s_l eta) on perturbed links, clipped into the D-FACTS range."""
    for l in plan.deployment:
        case.branch(l)
    if dfacts is None:
        dfacts = DfactsConfig.symmetric(case, DEFAULT_RANGE, plan.deployment)
    x = case.reactances.copy()
    if not plan.perturbed or plan.eta == 0:
        return x
    idx = np.array(sorted(plan.perturbed)) - 1
    width = dfacts.x_max[idx] - dfacts.x_min[idx]
    if np.all(width <= 0):
        raise ValueError("every perturbed link has a zero-width reactance range; eta cannot act")
    signs = plan.signs()
    target = np.array([x[l - 1] * (1 + signs[l] * plan.eta) for l in sorted(plan.perturbed)])
    clipped = np.clip(target, dfacts.x_min[idx], dfacts.x_max[idx])
    hit = np.flatnonzero(~np.isclose(clipped, target, rtol=1e-12, atol=0))
    if hit.size:
        warnings.warn(f"eta={plan.eta} pushes links {sorted(idx[hit] + 1)} outside their range; clipped",
                      PerturbationClippedWarning, stacklevel=2)
    x[idx] = clipped
    return x


@dataclass(frozen=True)
class AttackConfig:
    tripped: int
    path_rule: str = "first"
    path: tuple[int, ...] | None = None
    knowledge: str = "stale"  # "stale" (pre-perturbation snapshot) or "fresh"
    path_seed: int | None = None


@dataclass(frozen=True, eq=False)
class AttackedSystem:
    """Noise-free pieces of one detection experiment."""

    model: object
    z_clean: np.ndarray
    attack_vector: np.ndarray
    reactances: np.ndarray
    path: tuple[int, ...]
    injections: np.ndarray = field(repr=False)


def attacked_system(case: GridCase, plan: DfactsPlan, attack: AttackConfig, *, sigma: float = 1.0,
                    alpha: float = 0.05, dfacts: DfactsConfig | None = None,
                    weighted: bool = True, injections: np.ndarray | None = None) -> AttackedSystem:
    """Perturb, dispatch, trip, mask; everything but the sensor noise."""
    from .dispatch import solve_opf

    path = choose_path(case, attack.tripped, attack.path_rule, attack.path, attack.path_seed)
    x_true = apply_perturbation(case, plan, dfacts)
    if injections is None:
        injections = solve_opf(case, x_true, allow_shedding=True).injections
    model = build_model(case, x_true, sigma, alpha, weighted=weighted)
    live = np.ones(case.n_branch, dtype=bool)
    live[attack.tripped - 1] = False
    theta_p, flows_p = dc_flow(case, injections, live, x_true)
    z_p = measurement_matrix(case, x_true, live) @ theta_p
    observed = flows_p.copy()
    observed[attack.tripped - 1] = np.nan
    if attack.knowledge == "stale":
        known_x = case.reactances
    elif attack.knowledge == "fresh":
        known_x = x_true
    else:
        raise ValueError(f"unknown knowledge mode {attack.knowledge!r}")
    ccpa = build_ccpa(case, attack.tripped, AttackerKnowledge(known_x, observed), "specified", path)
    return AttackedSystem(model, z_p + ccpa.a, ccpa.a, x_true, path, np.asarray(injections))


def alarm_rate(model, z_clean: np.ndarray, trials: int, seed: int | None) -> float:
    """Fraction of ``trials`` noisy copies of ``z_clean`` that trip the detector."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    alarms = 0
    done = 0
    while done < trials:
        k = min(_CHUNK, trials - done)
        z = z_clean + rng.standard_normal((k, model.n_meas)) * model.sigma
        alarms += int(np.count_nonzero(residual_norm(model, z) > model.tau))
        done += k
    return alarms / trials


def detection_probability(case: GridCase, plan: DfactsPlan, attack: AttackConfig, trials: int = 10_000,
                          seed: int | None = 0, *, sigma: float = 1.0, alpha: float = 0.05,
                          dfacts: DfactsConfig | None = None, weighted: bool = True) -> float:
    """Monte Carlo alarm fraction for a stale-knowledge CCPA under the plan's perturbation."""
    system = attacked_system(case, plan, attack, sigma=sigma, alpha=alpha, dfacts=dfacts, weighted=weighted)
    return alarm_rate(system.model, system.z_clean, trials, seed)
