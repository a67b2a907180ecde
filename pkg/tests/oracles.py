"""Independent reference implementations used only by the tests.

Each one takes a deliberately different route from the library code:
brute-force enumeration instead of graph search, dense textbook formulas
instead of QR, vertex enumeration instead of simplex pivoting.
"""
import itertools

import numpy as np
from scipy.optimize import linprog

from gridmtd.case_io import parse_case


def edge_list(case):
    return [(b.from_bus, b.to_bus) for b in case.branches]


def reachable(n_nodes_ids, edges, src, dst):
    """Fixed-point closure over an explicit edge list."""
    seen = {src}
    changed = True
    while changed:
        changed = False
        for u, v in edges:
            if (u in seen) != (v in seen):
                seen |= {u, v}
                changed = True
    return dst in seen


def all_simple_paths(case, tripped):
    """Recursive enumeration of every simple path (as branch-id tuples) between the tripped link's ends."""
    br = case.branch(tripped)
    edges = [(b.id, b.from_bus, b.to_bus) for b in case.branches if b.id != tripped]
    out = []

    def walk(bus, visited, used):
        if bus == br.to_bus:
            out.append(tuple(used))
            return
        for lid, u, v in edges:
            for a, b in ((u, v), (v, u)):
                if a == bus and b not in visited:
                    walk(b, visited | {b}, used + [lid])

    walk(br.from_bus, {br.from_bus}, [])
    return out


def protected_by_paths(case, link, perturbed):
    """Protected iff the link is perturbed or every alternative path touches a perturbed link."""
    if link in perturbed:
        return True
    return all(any(l in perturbed for l in p) for p in all_simple_paths(case, link))


def spanning_trees(case):
    """All spanning trees by testing every (N-1)-subset of branches."""
    ids = [b.id for b in case.branches]
    n = case.n_bus
    trees = []
    for sub in itertools.combinations(ids, n - 1):
        edges = [(case.branch(l).from_bus, case.branch(l).to_bus) for l in sub]
        root = case.bus_ids[0]
        if all(reachable(None, edges, root, b) for b in case.bus_ids):
            trees.append(frozenset(sub))
    return trees


def dense_h(case, x=None):
    """Measurement matrix written entry by entry."""
    x = case.reactances if x is None else x
    L, N = case.n_branch, case.n_bus
    H = np.zeros((2 * L + N, N))
    for k, b in enumerate(case.branches):
        i, j = case.bus_index(b.from_bus), case.bus_index(b.to_bus)
        s = 1.0 / x[k]
        H[k, i], H[k, j] = s, -s
        H[L + k, i], H[L + k, j] = -s, s
        H[2 * L + i, i] += s
        H[2 * L + i, j] -= s
        H[2 * L + j, j] += s
        H[2 * L + j, i] -= s
    return H


def normal_equation_residual(H, sigma, z, ref):
    """r = ||W^1/2 (z - H theta_hat)|| via the normal equations."""
    keep = [k for k in range(H.shape[1]) if k != ref]
    Hr = H[:, keep]
    W = np.diag(1.0 / np.asarray(sigma) ** 2)
    th = np.linalg.solve(Hr.T @ W @ Hr, Hr.T @ W @ z)
    e = z - Hr @ th
    return float(np.sqrt(e @ W @ e))


def vertex_lp(c, A_ub, b_ub, A_eq, b_eq, lo, hi, tol=1e-9):
    """min c x by evaluating every basic feasible point (all constraints as rows, bounds included)."""
    n = len(c)
    rows, rhs, is_eq = [], [], []
    for a, b in zip(A_eq, b_eq):
        rows.append(a), rhs.append(b), is_eq.append(True)
    for a, b in zip(A_ub, b_ub):
        rows.append(a), rhs.append(b), is_eq.append(False)
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        if np.isfinite(hi[k]):
            rows.append(e), rhs.append(hi[k]), is_eq.append(False)
        if np.isfinite(lo[k]):
            rows.append(-e), rhs.append(-lo[k]), is_eq.append(False)
    G = np.array(rows, dtype=float).reshape(-1, n)
    h = np.array(rhs, dtype=float)
    eq = np.array(is_eq)
    best = None
    eq_idx = list(np.flatnonzero(eq))
    ineq_idx = list(np.flatnonzero(~eq))
    for act in itertools.combinations(ineq_idx, n - len(eq_idx)):
        idx = eq_idx + list(act)
        M = G[idx]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, h[idx])
        if np.all(G[~eq] @ x <= h[~eq] + tol) and np.allclose(G[eq] @ x, h[eq], atol=tol):
            v = float(c @ x)
            if best is None or v < best - 1e-12:
                best = v
    return best


def best_response_slack(U_D, U_A, p_D, p_A):
    """Largest gain any pure deviation offers either player."""
    U_D, U_A = np.asarray(U_D), np.asarray(U_A)
    uD = sum(p_D[j] * p_A[i] * U_D[j, i] for j in range(U_D.shape[0]) for i in range(U_D.shape[1]))
    uA = sum(p_D[j] * p_A[i] * U_A[j, i] for j in range(U_A.shape[0]) for i in range(U_A.shape[1]))
    dev_D = max(sum(p_A[i] * U_D[j, i] for i in range(U_D.shape[1])) for j in range(U_D.shape[0]))
    dev_A = max(sum(p_D[j] * U_A[j, i] for j in range(U_A.shape[0])) for i in range(U_A.shape[1]))
    return max(dev_D - uD, dev_A - uA)


def angle_opf(case, x=None, live=None, shed=True):
    """Independent B-theta LP solved by HiGHS: variables (g, shed, theta)."""
    x = case.reactances if x is None else x
    live = np.ones(case.n_branch, bool) if live is None else live
    N, G, L = case.n_bus, len(case.generators), case.n_branch
    n = G + N + N
    c = np.concatenate([[g.cost for g in case.generators], case.shed_costs if shed else np.zeros(N), np.zeros(N)])
    A_eq = np.zeros((N, n))
    for k, g in enumerate(case.generators):
        A_eq[case.bus_index(g.bus), k] = 1.0
    A_eq[:, G:G + N] = np.eye(N)
    rows = []
    for k, br in enumerate(case.branches):
        if not live[k]:
            continue
        i, j = case.bus_index(br.from_bus), case.bus_index(br.to_bus)
        b = 1.0 / x[k]
        A_eq[i, G + N + i] -= b
        A_eq[i, G + N + j] += b
        A_eq[j, G + N + j] -= b
        A_eq[j, G + N + i] += b
        if np.isfinite(br.f_max):
            r = np.zeros(n)
            r[G + N + i], r[G + N + j] = b, -b
            rows.append((r, br.f_max))
    A_ub = np.array([r for r, _ in rows] + [-r for r, _ in rows])
    b_ub = np.array([f for _, f in rows] * 2)
    bounds = [(g.g_min, g.g_max) for g in case.generators]
    bounds += [(0, ld if shed else 0) for ld in case.loads]
    bounds += [(0, 0) if k == case.ref_index else (None, None) for k in range(N)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=case.loads, bounds=bounds, method="highs")
    assert res.status == 0
    return res.fun


def small_opf_case(seed):
    rng = np.random.default_rng(seed)
    loads = np.round(rng.uniform(0, 60, 3), 3)
    loads[rng.uniform(size=3) < 0.3] = 0.0
    caps = np.round(rng.uniform(20, 120, 2), 3)
    if caps.sum() < loads.sum():
        caps[0] += loads.sum() - caps.sum() + 1
    caps = np.round(caps, 3)
    costs = np.round(rng.uniform(5, 60, 2), 3)
    lim = np.round(rng.uniform(10, 80, 3), 3)
    x = np.round(rng.uniform(0.05, 0.5, 3), 4)
    loads, caps, costs, lim, x = (v.tolist() for v in (loads, caps, costs, lim, x))
    text = (f"bus = [\n1 0;\n2 {loads[0]!r};\n3 {loads[1]!r};\n4 {loads[2]!r};\n];\n"
            f"branch = [\n1 2 {x[0]!r} {lim[0]!r};\n2 3 {x[1]!r} {lim[1]!r};\n1 3 {x[2]!r} {lim[2]!r};\n"
            f"3 4 0.1 Inf;\n];\n"
            f"gen = [\n1 0 {caps[0]!r} {costs[0]!r};\n2 0 {caps[1]!r} {costs[1]!r};\n];\n")
    return parse_case(text)


def vertex_opf_cost(case):
    """Shedding OPF cost by vertex enumeration over a Laplacian-pseudo-inverse PTDF model."""
    # eliminate angles with PTDFs from the Laplacian pseudo-inverse (reference-free route)
    N = case.n_bus
    A = np.zeros((N, case.n_branch))
    A[case.from_idx, np.arange(case.n_branch)] = 1
    A[case.to_idx, np.arange(case.n_branch)] = -1
    D = np.diag(1 / case.reactances)
    P = D @ A.T @ np.linalg.pinv(A @ D @ A.T)
    loaded = np.flatnonzero(case.loads > 0)
    G = len(case.generators)
    Cinj = np.zeros((N, G + len(loaded)))
    for k, g in enumerate(case.generators):
        Cinj[case.bus_index(g.bus), k] = 1
    Cinj[loaded, G + np.arange(len(loaded))] = 1
    assert Cinj.shape[1] <= 6, "too many variables to enumerate"
    lim = np.isfinite(case.f_max)
    PC = (P @ Cinj)[lim]
    base = (P @ case.loads)[lim]
    A_ub = np.vstack([PC, -PC])
    b_ub = np.concatenate([case.f_max[lim] + base, case.f_max[lim] - base])
    c = np.concatenate([[g.cost for g in case.generators], np.array(case.shed_costs)[loaded]])
    lo = np.zeros(Cinj.shape[1])
    hi = np.concatenate([[g.g_max for g in case.generators], case.loads[loaded]])
    return vertex_lp(c, A_ub, b_ub, [np.ones(Cinj.shape[1])], [case.loads.sum()], lo, hi)
