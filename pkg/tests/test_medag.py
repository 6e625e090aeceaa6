from itertools import combinations

import networkx as nx
import numpy as np
import pytest

from oracles import in_masks, random_digraph, strongly_robust_bitmask
from resilient_estimation.adversary import BROADCAST_EARLY, SILENT, AttackScript, ScriptedRounds
from resilient_estimation.errors import ConfigurationError
from resilient_estimation.graph_analysis import SensorNetwork, is_f_local, is_strongly_r_robust
from resilient_estimation.medag import Medag, construct_medag, run_medag_protocol, validate_medag


def f_local_sets(net, f, max_size):
    for k in range(0, max_size + 1):
        for c in combinations(net.nodes, k):
            if is_f_local(net, c, f):
                yield frozenset(c)


def test_fig2_construction(fig2_net):
    m = construct_medag(fig2_net, {0, 1, 2}, 1)
    assert m is not None
    for i in (3, 4, 5):
        assert set(m.accepted_neighbors[i]) == {0, 1, 2}
    assert set(m.accepted_neighbors[6]) == {3, 4, 5}
    assert m.levels == (frozenset({0, 1, 2}), frozenset({3, 4, 5}), frozenset({6}))
    assert m.termination_round == 3
    assert all(m.counters[i] == 1 for i in range(7))


def test_all_sources_finish_in_round_one(fig2_net):
    m = construct_medag(fig2_net, set(range(7)), 1)
    assert m.termination_round == 1
    assert m.levels == (frozenset(range(7)),)
    assert all(not ns for ns in m.accepted_neighbors.values())


def test_fig2_validation_with_node1_adversarial(fig2_net):
    m = construct_medag(fig2_net, {0, 1, 2}, 1)
    rep = validate_medag(m, fig2_net, {0, 1, 2}, 1, {0})
    assert rep.ok
    assert rep.levels == (frozenset({1, 2}), frozenset({3, 4, 5}), frozenset({6}))


@pytest.mark.parametrize("adv", [set()] + [{i} for i in range(7)])
def test_fig2_validation_every_singleton(fig2_net, adv):
    m = construct_medag(fig2_net, {0, 1, 2}, 1)
    assert validate_medag(m, fig2_net, {0, 1, 2}, 1, adv).ok


def test_fig2_not_enough_for_f2(fig2_net):
    run = run_medag_protocol(fig2_net, {0, 1, 2}, 2)
    assert not run.terminated
    assert all(run.counters[i] == 0 for i in range(3, 7))
    assert run.rounds_run == 8


def test_too_few_accepted_neighbors_flagged(fig2_net):
    m = construct_medag(fig2_net, {0, 1, 2}, 1)
    bad = dict(m.accepted_neighbors)
    bad[6] = (3, 4)
    broken = Medag(m.eigen_block, bad, m.levels, m.termination_round, m.counters, 1, m.sources, m.participants)
    rep = validate_medag(broken, fig2_net, {0, 1, 2}, 1, set())
    assert not rep.ok
    assert any("node 6 has 2 accepted" in v for v in rep.violations)


def test_cycle_flagged():
    net = SensorNetwork.from_edges(3, [(0, 1), (1, 2), (2, 1)])
    m = Medag(0, {0: (), 1: (2,), 2: (1,)}, (frozenset({0}),), 2, {0: 1, 1: 1, 2: 1})
    rep = validate_medag(m, net, {0}, 0, set())
    assert any("cycle" in v for v in rep.violations)


def test_non_neighbor_acceptance_flagged(fig2_net):
    m = Medag(0, {6: (0, 1, 2)}, (), 2, {})
    rep = validate_medag(m, fig2_net, {0, 1, 2, 3, 4, 5}, 1, set())
    assert any("non-neighbors" in v for v in rep.violations)


def test_validation_requires_local_adversary(fig2_net):
    m = construct_medag(fig2_net, {0, 1, 2}, 1)
    with pytest.raises(ValueError):
        validate_medag(m, fig2_net, {0, 1, 2}, 1, {3, 4})


def test_max_rounds_below_n_rejected(fig2_net):
    with pytest.raises(ValueError):
        run_medag_protocol(fig2_net, {0, 1, 2}, 1, max_rounds=6)


def test_text_round_trip_and_digest(fig2_net):
    m = construct_medag(fig2_net, {0, 1, 2}, 1, block=3)
    text = m.to_text()
    assert "level 1: 4 5 6" in text
    back = Medag.from_text(text)
    assert back.to_text() == text
    assert back.accepted_neighbors == m.accepted_neighbors
    assert back.levels == m.levels and back.eigen_block == 3
    assert construct_medag(fig2_net, {0, 1, 2}, 1, block=3).digest() == m.digest()


def test_text_parse_error_names_line():
    with pytest.raises(ConfigurationError, match="line 2"):
        Medag.from_text("block 0\nlevel x: 1\ntermination_round 1\n")


def test_silent_adversary_is_not_a_participant(fig2_net):
    script = AttackScript(frozenset({0}), design={0: SILENT})
    run = run_medag_protocol(fig2_net, {0, 1, 2}, 1, script)
    # 4, 5, 6 hear only from 2 and 3 (plus each other later)
    assert not run.terminated
    assert 0 not in run.participants


def test_broadcast_early_counts_towards_threshold():
    # node 3 has in-neighbors 0, 1, 2; only 1 and 2 are sources
    net = SensorNetwork.from_edges(4, [(0, 3), (1, 3), (2, 3)])
    script = AttackScript(frozenset({0}), design={0: BROADCAST_EARLY})
    m = construct_medag(net, {1, 2}, 1, script)
    assert m is not None and m.accepted_neighbors[3] == (0, 1, 2)
    assert m.participants == {1, 2, 3}


def test_scripted_rounds_delay_activation():
    net = SensorNetwork.from_edges(4, [(0, 3), (1, 3), (2, 3)])
    script = AttackScript(frozenset({0}), design={0: ScriptedRounds(frozenset({3}))})
    run = run_medag_protocol(net, {1, 2}, 1, script)
    assert run.activation_round[3] == 4
    assert run.medag.accepted_neighbors[3] == (1, 2, 0)


def test_level_and_acyclicity_invariants():
    rng = np.random.default_rng(31)
    checked = 0
    for _ in range(60):
        net = random_digraph(rng, 10, 0.5)
        src = set(rng.choice(10, size=4, replace=False).tolist())
        run = run_medag_protocol(net, src, 1)
        if not run.terminated:
            continue
        checked += 1
        m = run.medag
        for i in m.participants:
            assert m.level_of(i) == run.activation_round[i] - 1
            for l in m.accepted_neighbors[i]:
                assert m.level_of(l) < m.level_of(i)
            if i not in src:
                assert len(m.accepted_neighbors[i]) >= 3
        assert nx.is_directed_acyclic_graph(nx.DiGraph(list(m.edges())))
        assert sorted(i for lvl in m.levels for i in lvl) == sorted(m.participants)
    assert checked > 10


def test_terminates_iff_robust_small_graphs():
    rng = np.random.default_rng(8)
    for _ in range(400):
        n = int(rng.integers(2, 6))
        net = random_digraph(rng, n, float(rng.uniform(0.3, 1.0)))
        src_mask = int(rng.integers(0, 1 << n))
        src = {i for i in range(n) if src_mask >> i & 1}
        for f in (0, 1):
            expected = strongly_robust_bitmask(n, in_masks(net), src_mask, 2 * f + 1)
            assert (construct_medag(net, src, f) is not None) == expected


def test_silent_local_adversary_on_3f_plus_1_robust_graphs():
    rng = np.random.default_rng(12)
    tried = 0
    while tried < 25:
        net = random_digraph(rng, 9, 0.75)
        src = set(rng.choice(9, size=4, replace=False).tolist())
        if not is_strongly_r_robust(net, src, 4):
            continue
        tried += 1
        for adv in f_local_sets(net, 1, 2):
            script = AttackScript(adv, design={a: SILENT for a in adv})
            m = construct_medag(net, src, 1, script)
            assert m is not None
            assert validate_medag(m, net, src, 1, adv).ok


def test_honest_medag_validates_for_every_local_set():
    rng = np.random.default_rng(40)
    tried = 0
    while tried < 20:
        net = random_digraph(rng, 8, 0.7)
        src = set(rng.choice(8, size=4, replace=False).tolist())
        if not is_strongly_r_robust(net, src, 4):
            continue
        tried += 1
        m = construct_medag(net, src, 1)
        for adv in f_local_sets(net, 1, 3):
            assert validate_medag(m, net, src, 1, adv).ok
