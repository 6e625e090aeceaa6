"""Exit criteria.  Each test carries ``@pytest.mark.acceptance(number, title)``;
the terminal summary prints one PASS/FAIL line per criterion.
"""
import itertools
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import fig4_scenario
from oracles import in_masks, random_digraph, strongly_robust_bitmask
from resilient_estimation.cli import main
from resilient_estimation.estimation import NodeEstimator, trimmed_mean
from resilient_estimation.graph_analysis import (SensorNetwork, check_r_feasible, find_pair_cut, is_f_local,
                                                 is_strongly_r_robust, max_tolerable_f_bound,
                                                 minimal_critical_sets)
from resilient_estimation.medag import construct_medag, validate_medag
from resilient_estimation.netgen import GenSpec, SourceRule, feasibility_monte_carlo
from resilient_estimation.plant import LtiPlant
from resilient_estimation.simulator import run, summarize
from resilient_estimation.spectral import build_basis, decompose, pbh_detectable

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
acceptance = pytest.mark.acceptance


# -- 1 ----------------------------------------------------------------------------------

@acceptance(1, "7-node scalar run: plain consensus diverges, LFRE converges, < 1 s")
def test_fig4_reproduction():
    start = time.perf_counter()
    plain = run(fig4_scenario("plain", 60))
    resilient = run(fig4_scenario("resilient", 80))
    elapsed = time.perf_counter() - start

    for i in (3, 4, 5, 6):
        e = plain.errors(i)
        assert e.max() > 1e3, f"node {i + 1} peaked at {e.max():.3g}"
        tail = e[-10:]
        assert np.allclose(tail[1:] / tail[:-1], 2.0, rtol=1e-3)
    for i, s in summarize(resilient).items():
        assert s.first_below[1e-6] is not None and s.first_below[1e-6] <= 80, f"node {i + 1}"
        assert s.final_error < 1e-6
    assert elapsed < 1.0, f"{elapsed:.3f} s"


# -- 2 ----------------------------------------------------------------------------------

@acceptance(2, "10-node example: critical sets, 1-local pair cut, no 1-total cut, f bound 1, < 10 s")
def test_fig1_analysis(fig1_plant, fig1_net):
    start = time.perf_counter()
    crits = minimal_critical_sets(fig1_plant)
    assert sorted(map(sorted, crits)) == [[0, 1, 2], [7, 8, 9]]
    for c in crits:
        cut = find_pair_cut(fig1_net, c, 1, "local")
        assert cut is not None and cut.cut == {3, 4, 5, 6}
        assert (cut.part_one, cut.part_two) == ({3, 4}, {5, 6})
        assert cut.validate(fig1_net) == []
        assert find_pair_cut(fig1_net, c, 1, "total") is None
    assert max_tolerable_f_bound(fig1_plant, fig1_net) == 1
    assert time.perf_counter() - start < 10.0


# -- 3 ----------------------------------------------------------------------------------

@acceptance(3, "7-node MEDAG: exact subgraph, T_j = 3, validates for all 8 local sets, < 1 s")
def test_fig2_medag(fig2_net):
    start = time.perf_counter()
    m = construct_medag(fig2_net, {0, 1, 2}, 1)
    assert m is not None and m.termination_round == 3
    assert {i: set(m.accepted_neighbors[i]) for i in range(3, 7)} == \
        {3: {0, 1, 2}, 4: {0, 1, 2}, 5: {0, 1, 2}, 6: {3, 4, 5}}
    assert all(not m.accepted_neighbors[i] for i in range(3))
    assert m.edges() == {(l, i) for i in (3, 4, 5) for l in (0, 1, 2)} | {(l, 6) for l in (3, 4, 5)}
    for adv in [set()] + [{i} for i in range(7)]:
        rep = validate_medag(m, fig2_net, {0, 1, 2}, 1, adv)
        assert rep.ok, (adv, rep.violations)
    assert time.perf_counter() - start < 1.0


# -- 4 ----------------------------------------------------------------------------------

def _all_graphs(n):
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    for bits in range(1 << len(pairs)):
        yield SensorNetwork.from_edges(n, [p for k, p in enumerate(pairs) if bits >> k & 1])


def _compare(net, src_mask, ins):
    n = net.node_count
    src = {i for i in range(n) if src_mask >> i & 1}
    return sum(is_strongly_r_robust(net, src, r) != strongly_robust_bitmask(n, ins, src_mask, r) for r in (1, 2, 3))


@acceptance(4, "percolation equals subset enumeration on digraphs with N <= 5, < 60 s")
def test_percolation_equals_definition():
    start = time.perf_counter()
    mismatches = checked = 0
    for n in range(1, 5):
        for net in _all_graphs(n):
            ins = in_masks(net)
            for src_mask in range(1 << n):
                mismatches += _compare(net, src_mask, ins)
                checked += 1
    rng = np.random.default_rng(20240517)
    pairs = [(u, v) for u in range(5) for v in range(5) if u != v]
    for _ in range(100_000):
        bits = int(rng.integers(1 << 20))
        net = SensorNetwork.from_edges(5, [p for k, p in enumerate(pairs) if bits >> k & 1])
        mismatches += _compare(net, int(rng.integers(32)), in_masks(net))
        checked += 1
    elapsed = time.perf_counter() - start
    print(f"criterion 4: {checked} (graph, source set) pairs, {mismatches} mismatches, {elapsed:.1f} s")
    assert mismatches == 0
    assert elapsed < 60.0


# -- 5 ----------------------------------------------------------------------------------

@acceptance(5, "MEDAG terminates iff strongly (2f+1)-robust on 200 instances, < 30 s")
def test_medag_iff_robust():
    start = time.perf_counter()
    rng = np.random.default_rng(55)
    outcomes = {True: 0, False: 0}
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(8, 13))
        net = random_digraph(rng, n, float(rng.uniform(0.25, 0.8)))
        src = set(rng.choice(n, size=int(rng.integers(1, 6)), replace=False).tolist())
        for f in (0, 1):
            robust = is_strongly_r_robust(net, src, 2 * f + 1)
            built = construct_medag(net, src, f) is not None
            mismatches += robust != built
            outcomes[robust] += 1
    print(f"criterion 5: robust {outcomes[True]}, not robust {outcomes[False]}, mismatches {mismatches}")
    assert mismatches == 0
    assert min(outcomes.values()) >= 40
    assert time.perf_counter() - start < 30.0


# -- 6 ----------------------------------------------------------------------------------

GRID = (-1e6, -1.0, -0.5, 0.0, 0.5, 1.0, 1e6)


def _six_node_instances(rng, count):
    out = []
    while len(out) < count:
        net = random_digraph(rng, 6, float(rng.uniform(0.6, 1.0)))
        src = set(rng.choice(6, size=3, replace=False).tolist())
        m = construct_medag(net, src, 1)
        if m is not None:
            out.append((net, src, m))
    return out


@acceptance(6, "trimmed average stays in the regular hull under grid injection, < 30 s")
def test_convex_hull_invariant():
    start = time.perf_counter()
    rng = np.random.default_rng(606)
    violations = checks = 0
    for net, src, m in _six_node_instances(rng, 120):
        obs = {i: (np.eye(1) if i in src else np.zeros((0, 1))) for i in range(6)}
        basis = build_basis(LtiPlant(np.array([[2.0]]), obs))
        local_sets = [set(c) for k in range(0, 7) for c in itertools.combinations(range(6), k)
                      if is_f_local(net, c, 1)]
        for adv in local_sets:
            for i in set(range(6)) - src - adv:
                senders = m.accepted_neighbors[i]
                regular = [l for l in senders if l not in adv]
                bad = [l for l in senders if l in adv]
                for draw in range(3):
                    honest = {l: float(v) for l, v in zip(regular, rng.uniform(-1.0, 1.0, len(regular)))}
                    if draw == 2:
                        honest = {l: 0.25 for l in regular}
                    lo, hi = min(honest.values()), max(honest.values())
                    for injected in itertools.product(GRID, repeat=len(bad)):
                        received = {**{l: [v] for l, v in honest.items()},
                                    **{l: [v] for l, v in zip(bad, injected)}}
                        est = NodeEstimator(i, basis, accepted={0: senders})
                        zbar = est.lfre_step(0, received, 1)[0] / 2.0
                        checks += 1
                        violations += not (lo <= zbar <= hi)
                        # two-component block: every component is trimmed on its own
                        honest2 = rng.uniform(-1.0, 1.0, (len(regular), 2))
                        rows = np.vstack([honest2] + [np.array([[v, -v]]) for v in injected])
                        out, _ = trimmed_mean(rows, list(regular) + bad, 1)
                        checks += 1
                        violations += not np.all((honest2.min(0) <= out) & (out <= honest2.max(0)))
    elapsed = time.perf_counter() - start
    print(f"criterion 6: {checks} trimmed averages, {violations} violations, {elapsed:.1f} s")
    assert violations == 0
    assert elapsed < 30.0


# -- 7 ----------------------------------------------------------------------------------

def _two_mode_plant(n, s1, s2):
    obs = {}
    for i in range(n):
        rows = [r for r, s in ((np.array([1.0, 0.0]), s1), (np.array([0.0, 1.0]), s2)) if i in s]
        obs[i] = np.vstack(rows) if rows else np.zeros((0, 2))
    return LtiPlant(np.diag([2.0, 3.0]), obs)


def _feasible_instances(rng, count):
    """Random (network, plant, r) with the network r-feasible for both unstable modes."""
    out = []
    while len(out) < count:
        n = int(rng.integers(7, 11))
        r = int(rng.integers(2, 4))
        net = random_digraph(rng, n, float(rng.uniform(0.5, 0.9)))
        s1 = set(rng.choice(n, size=int(rng.integers(r, n)), replace=False).tolist())
        s2 = set(rng.choice(n, size=int(rng.integers(r, n)), replace=False).tolist())
        plant = _two_mode_plant(n, s1, s2)
        basis = build_basis(plant)
        if check_r_feasible(net, basis, r).feasible:
            out.append((net, plant, basis, r))
    return out


@acceptance(7, "feasibility properties: augmentation, in-degree bound, local removals")
def test_feasibility_properties():
    rng = np.random.default_rng(7)
    instances = _feasible_instances(rng, 500)
    violations = 0
    for net, plant, basis, r in instances:
        n = net.node_count
        # (i) a new non-source node with at least r in-neighbors
        ins = rng.choice(n, size=int(rng.integers(r, n + 1)), replace=False).tolist()
        outs = [v for v in range(n) if rng.random() < 0.3]
        bigger = net.add_node(ins, outs)
        violations += not all(is_strongly_r_robust(bigger, basis.source_sets[j], r) for j in basis.omega_u)
        # (iii) in-degree bound outside the common source set
        common = set(range(n))
        for j in basis.omega_u:
            common &= basis.source_sets[j]
        violations += any(net.in_degree(i) < r for i in range(n) if i not in common)
        # (iv) removing a k-local set with 0 < k < r
        k = int(rng.integers(1, r))
        while True:
            gone = set(rng.choice(n, size=int(rng.integers(1, 4)), replace=False).tolist())
            if is_f_local(net, gone, k):
                break
        sub, relabel = net.remove_nodes(gone)
        obs = {relabel[i]: plant.observations[i] for i in relabel}
        sub_basis = build_basis(LtiPlant(plant.a_matrix, obs))
        violations += not check_r_feasible(sub, sub_basis, r - k).feasible
    print(f"criterion 7: {len(instances)} instances, {violations} violations")
    assert violations == 0


# -- 8 ----------------------------------------------------------------------------------

@acceptance(8, "ER N=300, r=3, p=0.25, |S|=3: feasibility fraction >= 0.95, < 60 s")
def test_er_monte_carlo():
    start = time.perf_counter()
    spec = GenSpec("er", 300, r=3, p=0.25, seed=8, source_rule=SourceRule("random-subset", size=3))
    frac = feasibility_monte_carlo(spec, 200)
    elapsed = time.perf_counter() - start
    print(f"criterion 8: fraction {frac:.3f} in {elapsed:.1f} s")
    assert frac >= 0.95
    assert elapsed < 60.0


# -- 9 ----------------------------------------------------------------------------------

def _random_system(rng):
    n = int(rng.integers(1, 7))
    core = np.zeros((n, n))
    k = 0
    while k < n:
        if n - k >= 2 and rng.random() < 0.4:
            b = rng.uniform(0.1, 2.0)
            a = rng.uniform(-2.0, 2.0)
            core[k:k + 2, k:k + 2] = [[a, b], [-b, a]]
            k += 2
        elif k > 0 and core[k - 1, k - 1] != 0 and rng.random() < 0.2 and (k < 2 or core[k - 1, k - 2] == 0):
            core[k, k] = core[k - 1, k - 1]  # repeated real eigenvalue, still diagonalizable
            k += 1
        else:
            core[k, k] = rng.choice([-1, 1]) * rng.uniform(0.1, 2.5)
            k += 1
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    p = q @ np.diag(rng.uniform(0.5, 2.0, n))
    a_mat = p @ core @ np.linalg.inv(p)
    cs = []
    for _ in range(3):
        c = rng.normal(size=(int(rng.integers(0, 3)), n))
        if c.shape[0] and rng.random() < 0.5:
            v = p[:, int(rng.integers(n))]
            c = c - np.outer(c @ v, v) / (v @ v)  # blind to one eigen-direction
        cs.append(c)
    return a_mat, cs


@acceptance(9, "500 random systems: basis residual, conjugate symmetry, similarity detectability")
def test_spectral_invariants():
    rng = np.random.default_rng(909)
    failures = 0
    for _ in range(500):
        a_mat, cs = _random_system(rng)
        n = a_mat.shape[0]
        t, m, blocks = decompose(a_mat)
        tol = 1e-8 * np.linalg.norm(a_mat, np.inf) * n
        failures += np.linalg.norm(t @ m - a_mat @ t, np.inf) > tol
        for c in cs:
            for b in blocks:
                lam = b.eigenvalue
                here = pbh_detectable(a_mat, c, lam)
                if not b.is_real:
                    failures += here != pbh_detectable(a_mat, c, np.conj(lam))
                failures += here != pbh_detectable(m, c @ t, lam)
    assert failures == 0


# -- 10 ---------------------------------------------------------------------------------

@acceptance(10, "same scenario and seed give byte-identical trace.csv")
@pytest.mark.parametrize("name", ["fig4_resilient.toml", "fig4_baseline.toml", "fig2.toml", "random_attack"])
def test_determinism(tmp_path, name):
    if name == "random_attack":
        text = (SCENARIOS / "fig4_resilient.toml").read_text().replace(
            '"1" = { policy = "constant", value = 0.001 }',
            '"1" = { policy = "random", seed = 3, low = -10.0, high = 10.0 }')
        path = tmp_path / "random.toml"
        path.write_text(text)
    else:
        path = SCENARIOS / name
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", str(path), str(a)]) == 0
    assert main(["simulate", str(path), str(b)]) == 0
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
