"""End-to-end acceptance checks, one test (or a small group) per criterion.

The terminal summary prints a PASS/FAIL line per criterion; see the
``criterion`` marker hook in conftest.py.
"""
import itertools
import time

import numpy as np
import pytest

from gridmtd.case_io import load_case
from gridmtd.dispatch import solve_opf
from gridmtd.estimation import build_model, residual_norm
from gridmtd.game import GameSpec, build_game, mixed_ne
from gridmtd.mtd import (AttackConfig, DfactsPlan, alarm_rate, attacked_system, deploy_dfacts, detection_probability,
                         is_protected, resolve_deployment)
from gridmtd.network import Topology, is_forest

import oracles
from conftest import DEFENDER_SETS, STUDY_DEPLOYMENT

ETA = 0.06
D4 = frozenset({1, 3, 5, 8})
D5 = frozenset(STUDY_DEPLOYMENT)


def detail(record_property, text):
    record_property("detail", text)
    print(text)


# 1: deployment sizes

@pytest.mark.criterion("1 deployment sizes on IEEE 9/14/24/39")
@pytest.mark.parametrize("name, size", [("ieee9", 1), ("ieee14", 7), ("ieee24", 15)])
def test_deployment_size(name, size):
    t0 = time.perf_counter()
    case = load_case(name)
    got = deploy_dfacts(Topology.from_case(case))
    assert time.perf_counter() - t0 < 1.0
    assert len(got) == size


@pytest.mark.criterion("1 deployment sizes on IEEE 9/14/24/39")
def test_deployment_39_bus_is_tree(record_property):
    t0 = time.perf_counter()
    case = load_case("ieee39")
    topo = Topology.from_case(case)
    got = deploy_dfacts(topo)
    assert time.perf_counter() - t0 < 1.0
    rest = [l for l in topo.live_ids if l not in got]
    detail(record_property, f"ieee39: L-N+1 = {case.n_branch - case.n_bus + 1}, |L_D| = {len(got)}")
    assert len(got) == case.n_branch - case.n_bus + 1 == 8
    assert len(rest) == case.n_bus - 1 and is_forest(topo, rest)


# 2: false-positive rate

@pytest.mark.criterion("2 attack-free alarm rate")
def test_false_positive_rate(ieee14, record_property):
    t0 = time.perf_counter()
    model = build_model(ieee14, alpha=0.05)
    theta = solve_opf(ieee14).theta
    rate = alarm_rate(model, model.H @ theta, 100_000, seed=2024)
    assert time.perf_counter() - t0 < 30.0
    detail(record_property, f"false-positive rate {rate:.4f}")
    assert 0.045 <= rate <= 0.055


# 3: fresh-knowledge attack is invisible

@pytest.mark.criterion("3 fresh-knowledge noiseless CCPA is undetected")
@pytest.mark.parametrize("link", [1, 2, 3])
@pytest.mark.parametrize("eta", [0.0, ETA])
def test_fresh_attack_noiseless(ieee14, link, eta):
    t0 = time.perf_counter()
    plan = DfactsPlan(STUDY_DEPLOYMENT, STUDY_DEPLOYMENT, eta)
    system = attacked_system(ieee14, plan, AttackConfig(link, knowledge="fresh"))
    r = residual_norm(system.model, system.z_clean)
    assert time.perf_counter() - t0 < 1.0
    assert r < 1e-9
    assert not r > system.model.tau


# 4: detection with and without perturbation

@pytest.fixture(scope="module")
def detection_table(ieee14):
    t0 = time.perf_counter()
    deployment = resolve_deployment(ieee14, STUDY_DEPLOYMENT)
    out = {}
    for eta in (0.0, ETA):
        plan = DfactsPlan(deployment, deployment, eta)
        for link in (1, 2, 3):
            out[eta, link] = detection_probability(ieee14, plan, AttackConfig(link), 10_000, seed=link)
    return out, time.perf_counter() - t0


@pytest.mark.criterion("4 detection probability at eta=0 and eta=6%")
def test_detection_eta_zero(detection_table, record_property):
    table, elapsed = detection_table
    assert elapsed < 300.0
    rates = [table[0.0, l] for l in (1, 2, 3)]
    detail(record_property, "eta=0: " + ", ".join(f"{r:.4f}" for r in rates))
    assert all(abs(r - 0.05) <= 0.01 for r in rates)


@pytest.mark.criterion("4 detection probability at eta=0 and eta=6%")
def test_detection_eta_six_percent(detection_table, record_property):
    table, _ = detection_table
    rates = [table[ETA, l] for l in (1, 2, 3)]
    detail(record_property, "eta=6%: " + ", ".join(f"{r:.4f}" for r in rates))
    assert all(r >= 0.9 for r in rates)


# 5: protection predicate against path enumeration

@pytest.mark.criterion("5 is_protected vs path enumeration")
def test_protection_four_bus_exhaustive(four_bus):
    t0 = time.perf_counter()
    topo = Topology.from_case(four_bus)
    ids = [b.id for b in four_bus.branches]
    for link in ids:
        for k in range(len(ids) + 1):
            for sub in itertools.combinations(ids, k):
                assert is_protected(topo, link, sub) == oracles.protected_by_paths(four_bus, link, set(sub))
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.criterion("5 is_protected vs path enumeration")
def test_protection_ieee14_random(ieee14):
    t0 = time.perf_counter()
    topo = Topology.from_case(ieee14)
    rng = np.random.default_rng(5)
    for _ in range(200):
        link = int(rng.integers(1, ieee14.n_branch + 1))
        sub = set((np.flatnonzero(rng.uniform(size=ieee14.n_branch) < rng.uniform()) + 1).tolist())
        assert is_protected(topo, link, sub) == oracles.protected_by_paths(ieee14, link, sub)
    assert time.perf_counter() - t0 < 30.0


# 6: dispatch LP

@pytest.mark.criterion("6 solve_opf vs vertex enumeration and HiGHS")
def test_opf_vertex_enumeration():
    t0 = time.perf_counter()
    for seed in range(20):
        case = oracles.small_opf_case(seed)
        assert solve_opf(case).cost == pytest.approx(oracles.vertex_opf_cost(case), rel=1e-6)
    assert time.perf_counter() - t0 < 60.0


@pytest.mark.criterion("6 solve_opf vs vertex enumeration and HiGHS")
def test_opf_ieee14_vs_highs(ieee14):
    t0 = time.perf_counter()
    assert solve_opf(ieee14).cost == pytest.approx(oracles.angle_opf(ieee14), rel=1e-6)
    assert time.perf_counter() - t0 < 60.0


# 7 and 8: games

@pytest.fixture(scope="module")
def games(ieee14, ieee14_s2):
    out = {}
    for label, case in (("s1", ieee14), ("s2", ieee14_s2)):
        t0 = time.perf_counter()
        game = build_game(case, DEFENDER_SETS, [[l] for l in range(1, case.n_branch + 1)],
                          deployment=STUDY_DEPLOYMENT, eta=ETA)
        eqs = mixed_ne(game)
        out[label] = (game, eqs, time.perf_counter() - t0)
    return out


@pytest.mark.criterion("7 mixed_ne best-response slack")
def test_mixed_ne_random_3x3():
    t0 = time.perf_counter()
    for seed in range(50):
        rng = np.random.default_rng(seed)
        g = GameSpec.from_payoffs(rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
        eqs = mixed_ne(g)
        assert eqs
        for e in eqs:
            assert oracles.best_response_slack(g.U_D, g.U_A, e.p_D, e.p_A) <= 1e-8
    assert time.perf_counter() - t0 < 120.0


@pytest.mark.criterion("7 mixed_ne best-response slack")
def test_mixed_ne_ieee14(games, record_property):
    game, eqs, elapsed = games["s1"]
    assert elapsed < 120.0
    detail(record_property, f"ieee14 game {game.shape}: {len(eqs)} equilibria in {elapsed:.1f}s")
    assert eqs
    for e in eqs:
        assert oracles.best_response_slack(game.U_D, game.U_A, e.p_D, e.p_A) <= 1e-8


@pytest.mark.criterion("7 mixed_ne best-response slack")
def test_matching_pennies_exact():
    g = GameSpec.from_payoffs([[1, -1], [-1, 1]], [[-1, 1], [1, -1]])
    (e,) = mixed_ne(g)
    assert e.p_D.tolist() == [0.5, 0.5] and e.p_A.tolist() == [0.5, 0.5]


def _support_sets(game, eq):
    return {game.defender_actions[j] for j in eq.support_D}


def _equilibrium_cost(game, eq):
    return float(eq.p_D @ game.defense_cost_pct())


@pytest.mark.criterion("8a scenario-1 equilibrium support includes d_5")
def test_scenario1_support(games, record_property):
    game, eqs, elapsed = games["s1"]
    assert elapsed < 300.0
    supports = {tuple(sorted(tuple(sorted(a)) for a in _support_sets(game, e))) for e in eqs}
    detail(record_property, f"scenario 1 defender supports: {sorted(supports)}")
    assert all(D5 in _support_sets(game, e) for e in eqs)


@pytest.mark.criterion("8a scenario-2 equilibrium support includes d_4 or a cheaper strict subset")
def test_scenario2_support(games, record_property):
    game, eqs, elapsed = games["s2"]
    assert elapsed < 300.0
    pct = game.defense_cost_pct()
    idx = {a: j for j, a in enumerate(game.defender_actions)}
    d4_cost = pct[idx[D4]]

    def acceptable(action):
        return action == D4 or (action < D4 and pct[idx[action]] <= d4_cost)

    supports = {tuple(sorted(tuple(sorted(a)) for a in _support_sets(game, e))) for e in eqs}
    detail(record_property, f"scenario 2 defender supports: {sorted(supports)}")
    assert all(any(acceptable(a) for a in _support_sets(game, e)) for e in eqs)


@pytest.mark.criterion("8b scenario-2 defense cost below scenario 1")
def test_defense_cost_ordering(games, record_property):
    s1 = [_equilibrium_cost(games["s1"][0], e) for e in games["s1"][1]]
    s2 = [_equilibrium_cost(games["s2"][0], e) for e in games["s2"][1]]
    # reference values 11.62% and 2.86% are tracked for information only (+-2pp not required)
    detail(record_property, f"equilibrium defense cost: scenario 1 {min(s1):.2f}-{max(s1):.2f}% (ref 11.62%), "
                            f"scenario 2 {min(s2):.2f}-{max(s2):.2f}% (ref 2.86%)")
    assert max(s2) < min(s1)


# 9: residual invariance under stealthy injections

@pytest.mark.criterion("9 residual invariance r(z + Hc) = r(z)")
def test_residual_invariance(ieee14):
    t0 = time.perf_counter()
    model = build_model(ieee14)
    rng = np.random.default_rng(9)
    z = rng.normal(0, 50, (1000, model.n_meas))
    c = rng.normal(0, 50, (1000, model.n_bus))
    r0 = residual_norm(model, z)
    r1 = residual_norm(model, z + c @ model.H.T)
    assert time.perf_counter() - t0 < 10.0
    assert np.all(np.abs(r1 - r0) < 1e-10 * (1 + r0))
