"""Defender/attacker bimatrix game and its Nash equilibria.

Rows index defender actions (perturbation sets, row 0 = perturb nothing),
columns index attacker actions (trip sets, column 0 = no attack).  Mixed
equilibria come from support enumeration: for each pair of equal-size
supports the indifference conditions are solved as a linear system, and the
candidate is kept only if no pure action outside the support pays more.
"""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .case_io import DfactsConfig, GridCase
from .dispatch import solve_opf, trace_algorithm1

log = logging.getLogger(__name__)

NE_TOL = 1e-8
SUPPORT_TOL = 1e-9
SUPPORT_CAP = 1_000_000


class DegenerateGameError(RuntimeError):
    pass


class SupportTruncationWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class GameSpec:
    U_D: np.ndarray
    U_A: np.ndarray
    defender_actions: tuple[frozenset[int], ...] = ()
    attacker_actions: tuple[frozenset[int], ...] = ()
    costs: np.ndarray | None = field(default=None, repr=False)
    success: np.ndarray | None = field(default=None, repr=False)
    baseline_cost: float | None = None

    def __post_init__(self):
        U_D = np.asarray(self.U_D, dtype=float)
        U_A = np.asarray(self.U_A, dtype=float)
        if U_D.ndim != 2 or U_D.shape != U_A.shape:
            raise ValueError(f"payoff matrices must share a 2-d shape, got {U_D.shape} and {U_A.shape}")
        object.__setattr__(self, "U_D", U_D)
        object.__setattr__(self, "U_A", U_A)

    @property
    def shape(self) -> tuple[int, int]:
        return self.U_D.shape

    @classmethod
    def from_payoffs(cls, U_D, U_A) -> "GameSpec":
        return cls(np.asarray(U_D, dtype=float), np.asarray(U_A, dtype=float))

    def defense_cost_pct(self) -> np.ndarray | None:
        """Per defender action: percentage rise of the no-attack OPF cost over the benchmark."""
        if self.costs is None or not self.baseline_cost:
            return None
        return 100.0 * (self.costs[:, 0] - self.baseline_cost) / self.baseline_cost


@dataclass(frozen=True, eq=False)
class MixedProfile:
    p_D: np.ndarray
    p_A: np.ndarray
    support_D: tuple[int, ...]
    support_A: tuple[int, ...]
    u_D: float
    u_A: float

    @property
    def is_pure(self) -> bool:
        return len(self.support_D) == 1 and len(self.support_A) == 1


def build_game(case: GridCase, defender_sets: Sequence[Iterable[int]], attacker_sets: Sequence[Iterable[int]],
               *, deployment: Iterable[int], eta: float = 0.06, dfacts: DfactsConfig | None = None,
               sign_rule: str = "positive") -> GameSpec:
    """Payoff bimatrix from one-round cascade costs.

    The empty actions d_0 and a_0 are inserted at index 0 when missing.  An
    attack succeeds when at least one of its tripped links is unprotected by
    the defender's perturbation set.
    """
    deployment = frozenset(deployment)
    d_sets = [frozenset(d) for d in defender_sets]
    a_sets = [frozenset(a) for a in attacker_sets]
    if frozenset() in d_sets:
        d_sets.remove(frozenset())
    if frozenset() in a_sets:
        a_sets.remove(frozenset())
    d_sets = [frozenset()] + d_sets
    a_sets = [frozenset()] + a_sets
    for d in d_sets:
        if not d <= deployment:
            raise ValueError(f"defender set {sorted(d)} is not inside the deployment set {sorted(deployment)}")

    c00 = solve_opf(case).cost
    ND, NA = len(d_sets), len(a_sets)
    C = np.zeros((ND, NA))
    ok = np.zeros((ND, NA), dtype=bool)
    U_D = np.zeros((ND, NA))
    U_A = np.zeros((ND, NA))
    for j, d in enumerate(d_sets):
        for i, a in enumerate(a_sets):
            t = trace_algorithm1(case, a, d, eta=eta, deployment=deployment, dfacts=dfacts, sign_rule=sign_rule)
            C[j, i] = t.cost
            ok[j, i] = t.success
            if t.success:
                U_A[j, i] = t.cost - c00
                U_D[j, i] = -U_A[j, i]
            else:
                U_D[j, i] = c00 - t.baseline_cost
    return GameSpec(U_D, U_A, tuple(d_sets), tuple(a_sets), C, ok, c00)


def expected_payoffs(game: GameSpec, p_D, p_A) -> tuple[float, float]:
    p_D = np.asarray(p_D, dtype=float)
    p_A = np.asarray(p_A, dtype=float)
    if p_D.shape != (game.shape[0],) or p_A.shape != (game.shape[1],):
        raise ValueError(f"strategy shapes {p_D.shape}, {p_A.shape} do not match game {game.shape}")
    return float(p_D @ game.U_D @ p_A), float(p_D @ game.U_A @ p_A)


def best_response_gap(game: GameSpec, p_D, p_A) -> tuple[float, float]:
    """How much each player could gain by switching to its best pure action."""
    p_D = np.asarray(p_D, dtype=float)
    p_A = np.asarray(p_A, dtype=float)
    u_D, u_A = expected_payoffs(game, p_D, p_A)
    return float((game.U_D @ p_A).max() - u_D), float((p_D @ game.U_A).max() - u_A)


def pure_ne(game: GameSpec, tol: float = NE_TOL) -> list[tuple[int, int]]:
    """Cells where each action is a best response to the other."""
    col_best = game.U_D.max(axis=0)
    row_best = game.U_A.max(axis=1)
    out = []
    for j in range(game.shape[0]):
        for i in range(game.shape[1]):
            if game.U_D[j, i] >= col_best[i] - tol and game.U_A[j, i] >= row_best[j] - tol:
                out.append((j, i))
    return out


def _indifferent_mix(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mixes over columns equalising every row, for a stack of k x k blocks.

    Returns (mix (n, k), value (n,), ok (n,)); ``ok`` is False where the
    bordered system is singular or too ill-conditioned to trust.
    """
    n, k, _ = M.shape
    S = np.zeros((n, k + 1, k + 1))
    S[:, :k, :k] = M
    S[:, :k, k] = -1.0
    S[:, k, :k] = 1.0
    ok = np.linalg.cond(S) < 1e12
    sol = np.full((n, k + 1), np.nan)
    if ok.any():
        rhs = np.zeros((int(ok.sum()), k + 1, 1))
        rhs[:, k] = 1.0
        sol[ok] = np.linalg.solve(S[ok], rhs)[:, :, 0]
    ok &= np.all(np.isfinite(sol), axis=1)
    return sol[:, :k], sol[:, k], ok


def mixed_ne(game: GameSpec, tol: float = NE_TOL, cap: int = SUPPORT_CAP) -> list[MixedProfile]:
    """All equilibria reachable by equal-size support enumeration.

    Supports are visited by increasing size.  Singular indifference systems
    are skipped (degenerate games may have equilibrium components; only
    their isolated points are reported).  Out-of-support actions may tie
    with the support payoff within ``tol``.
    """
    U_D, U_A = game.U_D, game.U_A
    nd, na = game.shape
    found: list[MixedProfile] = []
    seen = np.zeros((0, nd + na))
    singular = 0
    visited = 0
    truncated = False
    for k in range(1, min(nd, na) + 1):
        J_all = np.array(list(itertools.combinations(range(na), k)), dtype=int)
        for I in itertools.combinations(range(nd), k):
            if visited >= cap:
                truncated = True
                break
            Js = J_all[:cap - visited]
            visited += len(Js)
            rows = np.array(I)
            # defender indifference over I fixes the attacker mix on J, and vice versa
            q, _, ok_q = _indifferent_mix(U_D[rows][:, Js].transpose(1, 0, 2))
            p, _, ok_p = _indifferent_mix(U_A[rows][:, Js].transpose(1, 2, 0))
            singular += int(np.count_nonzero(~(ok_q & ok_p)))
            good = ok_q & ok_p
            good[good] &= (q[good].min(axis=1) >= -tol) & (p[good].min(axis=1) >= -tol)
            for t in np.flatnonzero(good):
                p_D = np.zeros(nd)
                p_A = np.zeros(na)
                p_D[rows] = np.clip(p[t], 0.0, None)
                p_A[Js[t]] = np.clip(q[t], 0.0, None)
                p_D /= p_D.sum()
                p_A /= p_A.sum()
                u_D, u_A = expected_payoffs(game, p_D, p_A)
                if (U_D @ p_A).max() > u_D + tol or (p_D @ U_A).max() > u_A + tol:
                    continue
                key = np.concatenate([p_D, p_A])
                if len(seen) and (np.abs(seen - key).max(axis=1) < 1e-9).any():
                    continue
                seen = np.vstack([seen, key])
                found.append(MixedProfile(p_D, p_A, tuple(int(i) for i in np.flatnonzero(p_D > SUPPORT_TOL)),
                                          tuple(int(i) for i in np.flatnonzero(p_A > SUPPORT_TOL)), u_D, u_A))
        if truncated:
            warnings.warn(f"support enumeration stopped after {cap} support pairs; equilibrium list may be incomplete",
                          SupportTruncationWarning, stacklevel=2)
            break
    if singular:
        log.debug("skipped %d singular indifference systems", singular)
    if not found:
        raise DegenerateGameError(
            f"no equilibrium found among {visited} support pairs ({singular} singular systems); "
            "the game is numerically degenerate")
    return found
