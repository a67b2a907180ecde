"""Graph structure and DC power-flow linear algebra.

Angles are expressed in the same scaling as the flows: with reactances in
per-unit and injections in MW, ``flow = (theta_i - theta_j) / x`` holds with
theta in radians times the MVA base.  Branch ids are 1-based throughout the
public API; arrays are indexed by ``id - 1``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .case_io import GridCase

PATH_CAP = 10_000


class IslandingError(ValueError):
    """The live graph splits into islands that cannot be solved as posed."""

    def __init__(self, message: str, islands: list[list[int]]):
        super().__init__(f"{message}; islands (bus ids): {islands}")
        self.islands = islands


class DisconnectedGraphError(ValueError):
    pass


class PathOverflowError(RuntimeError):
    pass


class DisjointSet:
    """Union-find with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, u: int) -> int:
        parent = self.parent
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    def union(self, u: int, v: int) -> bool:
        ru, rv = self.find(u), self.find(v)
        if ru == rv:
            return False
        if self.size[ru] < self.size[rv]:
            ru, rv = rv, ru
        self.parent[rv] = ru
        self.size[ru] += self.size[rv]
        return True


@dataclass(frozen=True, eq=False)
class Topology:
    """Immutable snapshot of which branches are in service."""

    n_bus: int
    from_idx: np.ndarray
    to_idx: np.ndarray
    live: np.ndarray
    bus_ids: tuple[int, ...]

    @classmethod
    def from_case(cls, case: GridCase, live: np.ndarray | None = None) -> "Topology":
        mask = np.ones(case.n_branch, dtype=bool) if live is None else np.asarray(live, dtype=bool).copy()
        if mask.shape != (case.n_branch,):
            raise ValueError(f"live mask has shape {mask.shape}, expected ({case.n_branch},)")
        mask.setflags(write=False)
        return cls(case.n_bus, case.from_idx, case.to_idx, mask, case.bus_ids)

    @property
    def n_branch(self) -> int:
        return len(self.from_idx)

    def endpoints(self, branch_id: int) -> tuple[int, int]:
        """Bus indices (from, to) of a branch."""
        k = branch_id - 1
        if not 0 <= k < self.n_branch:
            raise KeyError(f"no branch with id {branch_id}")
        return int(self.from_idx[k]), int(self.to_idx[k])

    def without(self, branch_ids: Iterable[int]) -> "Topology":
        mask = self.live.copy()
        for l in branch_ids:
            self.endpoints(l)
            mask[l - 1] = False
        mask.setflags(write=False)
        return Topology(self.n_bus, self.from_idx, self.to_idx, mask, self.bus_ids)

    @cached_property
    def live_ids(self) -> tuple[int, ...]:
        return tuple(int(k) + 1 for k in np.flatnonzero(self.live))

    @cached_property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per bus: (branch id, neighbour bus index) over live branches, by branch id."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_bus)]
        for l in self.live_ids:
            f, t = self.endpoints(l)
            adj[f].append((l, t))
            adj[t].append((l, f))
        return adj

    def incidence(self) -> np.ndarray:
        """Bus-branch incidence A (N x L): +1 at from-bus, -1 at to-bus, zero columns for dead branches."""
        A = np.zeros((self.n_bus, self.n_branch))
        cols = np.flatnonzero(self.live)
        A[self.from_idx[cols], cols] = 1.0
        A[self.to_idx[cols], cols] = -1.0
        return A

    @cached_property
    def components(self) -> list[list[int]]:
        """Connected components as sorted bus-index lists, ordered by smallest member."""
        ds = DisjointSet(self.n_bus)
        for l in self.live_ids:
            ds.union(*self.endpoints(l))
        groups: dict[int, list[int]] = {}
        for b in range(self.n_bus):
            groups.setdefault(ds.find(b), []).append(b)
        return sorted(groups.values(), key=lambda g: g[0])

    def is_connected(self) -> bool:
        return len(self.components) == 1

    def connected(self, u: int, v: int, excluded: Iterable[int] = ()) -> bool:
        """Breadth-first reachability between bus indices, skipping the given branch ids."""
        skip = set(excluded)
        if u == v:
            return True
        seen = {u}
        queue = deque([u])
        while queue:
            b = queue.popleft()
            for l, nb in self.adjacency[b]:
                if l in skip or nb in seen:
                    continue
                if nb == v:
                    return True
                seen.add(nb)
                queue.append(nb)
        return False

    def island_bus_ids(self) -> list[list[int]]:
        return [[self.bus_ids[b] for b in comp] for comp in self.components]


def susceptance(topo: Topology, reactances: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (D, B) with D = diag(1/x) on live branches and B = A D A^T (unreduced)."""
    x = np.asarray(reactances, dtype=float)
    d = np.where(topo.live, 1.0 / x, 0.0)
    A = topo.incidence()
    return np.diag(d), (A * d) @ A.T


def dc_flow(case: GridCase, injections: Sequence[float], live: np.ndarray | None = None,
            reactances: np.ndarray | None = None, *, slack: bool = False,
            tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Solve the DC power flow.  Returns (theta, flows).

    Each island is solved with its own angle reference: the case reference
    bus where it lies in the island, otherwise the island's lowest-index bus.
    Without ``slack`` every island must be balanced; with it, the island's
    reference bus absorbs the mismatch.
    """
    topo = Topology.from_case(case, live)
    x = case.reactances if reactances is None else np.asarray(reactances, dtype=float)
    p = np.asarray(injections, dtype=float).copy()
    if p.shape != (case.n_bus,):
        raise ValueError(f"injections have shape {p.shape}, expected ({case.n_bus},)")
    D, B = susceptance(topo, x)
    theta = np.zeros(case.n_bus)
    ref = case.ref_index
    bad = []
    for comp in topo.components:
        r = ref if ref in comp else comp[0]
        mismatch = p[comp].sum()
        if abs(mismatch) > tol * max(1.0, np.abs(p[comp]).sum()):
            if slack:
                p[r] -= mismatch
            else:
                bad.append((comp, mismatch))
                continue
        rest = [b for b in comp if b != r]
        if not rest:
            continue
        Bc = B[np.ix_(rest, rest)]
        theta[rest] = cho_solve(cho_factor(Bc), p[rest])
    if bad:
        ids = topo.bus_ids
        detail = "; ".join(f"buses {[ids[b] for b in comp]} off by {m:.6g} MW" for comp, m in bad)
        raise IslandingError(f"injections do not balance within each island: {detail}", topo.island_bus_ids())
    A = topo.incidence()
    flows = D @ A.T @ theta
    return theta, flows


def alternative_paths(topo: Topology, tripped: int, cap: int = PATH_CAP) -> list[tuple[int, ...]]:
    """All simple paths joining the endpoints of ``tripped`` once it is removed.

    Paths run from the tripped branch's from-bus to its to-bus and are listed
    in depth-first order, exploring branches by ascending id.
    """
    src, dst = topo.endpoints(tripped)
    residual = topo.without([tripped])
    adj = residual.adjacency
    paths: list[tuple[int, ...]] = []
    on_path = [False] * topo.n_bus
    on_path[src] = True
    stack: list[tuple[int, int]] = [(src, 0)]
    branches: list[int] = []
    while stack:
        bus, k = stack[-1]
        if k == len(adj[bus]):
            stack.pop()
            on_path[bus] = False
            if branches:
                branches.pop()
            continue
        stack[-1] = (bus, k + 1)
        l, nb = adj[bus][k]
        if on_path[nb]:
            continue
        if nb == dst:
            paths.append(tuple(branches + [l]))
            if len(paths) > cap:
                raise PathOverflowError(f"more than {cap} alternative paths for branch {tripped}")
            continue
        on_path[nb] = True
        branches.append(l)
        stack.append((nb, 0))
    return paths


def max_weight_spanning_tree(topo: Topology, weights: Sequence[float] | None = None) -> frozenset[int]:
    """Kruskal's algorithm over live branches.

    Ties resolve by ascending branch id, so unit weights favour low ids.
    """
    if not topo.is_connected():
        raise DisconnectedGraphError(f"disconnected graph: islands {topo.island_bus_ids()}")
    w = np.ones(topo.n_branch) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (topo.n_branch,):
        raise ValueError(f"weights have shape {w.shape}, expected ({topo.n_branch},)")
    order = sorted(topo.live_ids, key=lambda l: (-w[l - 1], l))
    ds = DisjointSet(topo.n_bus)
    tree = []
    for l in order:
        if ds.union(*topo.endpoints(l)):
            tree.append(l)
            if len(tree) == topo.n_bus - 1:
                break
    return frozenset(tree)


def is_forest(topo: Topology, branch_ids: Iterable[int]) -> bool:
    ds = DisjointSet(topo.n_bus)
    return all(ds.union(*topo.endpoints(l)) for l in branch_ids)
