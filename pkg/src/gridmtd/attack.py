"""Undetectable FDI vectors and coordinated cyber-physical attacks (CCPA).

A CCPA trips one branch and adds ``a = dH theta_p`` to the measurements so the
defender's pre-trip model still explains them.  The attacker only needs the
tripped branch's reactance and the post-trip angle difference across it,
which it reconstructs from observed flows along an alternative path.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .case_io import GridCase
from .estimation import MeasurementModel
from .network import Topology, alternative_paths


class NoAlternativePathError(ValueError):
    """The tripped branch is radial: its trip cannot be masked."""


class MissingObservationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AttackerKnowledge:
    """Stale reactances plus the post-trip flows read off the flow sensors.

    ``flows`` holds NaN for branches the attacker did not observe.
    """

    reactances: np.ndarray
    flows: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.reactances) <= 0):
            raise ValueError("attacker reactances must be positive")


@dataclass(frozen=True, eq=False)
class CcpaVector:
    a: np.ndarray
    tripped: tuple[int, ...]
    path_used: tuple[int, ...]
    angle_diff: float


def fdi_vector(model: MeasurementModel, c: np.ndarray) -> np.ndarray:
    """a = H c; invisible to the residual detector."""
    return model.H @ np.asarray(c, dtype=float)


def delta_h(case: GridCase, tripped: int, x_known: float) -> np.ndarray:
    """dH = H - H_p for a single tripped branch, built from the attacker's reactance."""
    if not x_known > 0:
        raise ValueError(f"reactance must be positive, got {x_known}")
    br = case.branch(tripped)
    L, N = case.n_branch, case.n_bus
    i, j = case.bus_index(br.from_bus), case.bus_index(br.to_bus)
    k = tripped - 1
    b = 1.0 / x_known
    dH = np.zeros((2 * L + N, N))
    dH[k, [i, j]] = (b, -b)
    dH[L + k, [i, j]] = (-b, b)
    dH[2 * L + i, [i, j]] += (b, -b)
    dH[2 * L + j, [i, j]] += (-b, b)
    return dH


def reconstruct_angle_diff(case: GridCase, knowledge: AttackerKnowledge, tripped: int,
                           path: Sequence[int]) -> float:
    """theta_i - theta_j across the tripped branch from flows along ``path``.

    Walking from bus i to bus j, each branch contributes x * F where F is the
    flow oriented along the walk.  Written with flows oriented back toward
    bus i this is minus the sum of x * F.
    """
    br = case.branch(tripped)
    src, dst = case.bus_index(br.from_bus), case.bus_index(br.to_bus)
    cur = src
    total = 0.0
    for l in path:
        if l == tripped:
            raise ValueError(f"path {tuple(path)} uses the tripped branch {tripped}")
        f = knowledge.flows[l - 1]
        if not np.isfinite(f):
            raise MissingObservationError(f"no flow observation for branch {l}")
        a, b = int(case.from_idx[l - 1]), int(case.to_idx[l - 1])
        if cur == a:
            total += knowledge.reactances[l - 1] * f
            cur = b
        elif cur == b:
            total -= knowledge.reactances[l - 1] * f
            cur = a
        else:
            raise ValueError(f"branch {l} does not continue path {tuple(path)} at bus {case.bus_ids[cur]}")
    if cur != dst:
        raise ValueError(f"path {tuple(path)} does not end at bus {br.to_bus}")
    return float(total)


def choose_path(case: GridCase, tripped: int, path_rule: str = "first",
                path: Sequence[int] | None = None,
                rng: np.random.Generator | int | None = None) -> tuple[int, ...]:
    paths = alternative_paths(Topology.from_case(case), tripped)
    if not paths:
        raise NoAlternativePathError(f"branch {tripped} is radial; no alternative path exists")
    if path_rule == "first":
        return paths[0]
    if path_rule == "specified":
        if path is None or tuple(path) not in paths:
            raise ValueError(f"{path!r} is not an alternative path of branch {tripped}")
        return tuple(path)
    if path_rule == "random":
        return paths[int(np.random.default_rng(rng).integers(len(paths)))]
    raise ValueError(f"unknown path rule {path_rule!r}")


def build_ccpa(case: GridCase, tripped: int, knowledge: AttackerKnowledge, path_rule: str = "first",
               path: Sequence[int] | None = None,
               rng: np.random.Generator | int | None = None) -> CcpaVector:
    """Masking vector a = dH(x_l) theta_p using the attacker's knowledge only.

    theta_p is embedded as (delta, 0) on the tripped branch's endpoints; dH's
    columns live on those two buses with opposite signs, so only the
    difference matters.
    """
    chosen = choose_path(case, tripped, path_rule, path, rng)
    delta = reconstruct_angle_diff(case, knowledge, tripped, chosen)
    dH = delta_h(case, tripped, knowledge.reactances[tripped - 1])
    theta_p = np.zeros(case.n_bus)
    theta_p[case.bus_index(case.branch(tripped).from_bus)] = delta
    return CcpaVector(dH @ theta_p, (tripped,), chosen, delta)
