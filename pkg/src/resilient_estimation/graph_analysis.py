"""Directed sensor networks and the graph-side feasibility checks.

Node ids are ``0..N-1`` throughout; 1-based labels only exist in the CLI.
The exhaustive searches (critical sets, pair cuts, the adversary bound) are
exponential in ``N`` and refuse to run above ``max_nodes``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import TYPE_CHECKING, Iterable, Literal, Mapping

from .errors import ConfigurationError, ScaleLimitError
from .spectral import is_detectable

if TYPE_CHECKING:
    from .plant import LtiPlant
    from .spectral import SpectralBasis

DEFAULT_MAX_NODES = 12
CutKind = Literal["local", "total"]


@dataclass(frozen=True)
class SensorNetwork:
    node_count: int
    edges: frozenset[tuple[int, int]]
    in_neighbors: Mapping[int, frozenset[int]] = field(init=False, repr=False, compare=False)
    out_neighbors: Mapping[int, frozenset[int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        edges = frozenset((int(u), int(v)) for u, v in self.edges)
        n = int(self.node_count)
        if n < 1:
            raise ConfigurationError("a network needs at least one node")
        ins = {i: set() for i in range(n)}
        outs = {i: set() for i in range(n)}
        for u, v in edges:
            if u == v:
                raise ConfigurationError(f"self-loop on node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ConfigurationError(f"edge ({u}, {v}) references a node outside 0..{n - 1}")
            ins[v].add(u)
            outs[u].add(v)
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "in_neighbors", {i: frozenset(s) for i, s in ins.items()})
        object.__setattr__(self, "out_neighbors", {i: frozenset(s) for i, s in outs.items()})

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[tuple[int, int]]) -> "SensorNetwork":
        return cls(node_count, frozenset(edges))

    @classmethod
    def from_undirected(cls, node_count: int, pairs: Iterable[tuple[int, int]]) -> "SensorNetwork":
        es = set()
        for u, v in pairs:
            es.add((u, v))
            es.add((v, u))
        return cls(node_count, frozenset(es))

    @property
    def nodes(self) -> range:
        return range(self.node_count)

    def in_degree(self, node: int) -> int:
        return len(self.in_neighbors[node])

    def add_node(self, in_from: Iterable[int], out_to: Iterable[int] = ()) -> "SensorNetwork":
        """Copy of the network with one extra node ``N`` wired as given."""
        new = self.node_count
        es = set(self.edges)
        es.update((u, new) for u in in_from)
        es.update((new, v) for v in out_to)
        return SensorNetwork(new + 1, frozenset(es))

    def remove_nodes(self, removed: Iterable[int]) -> tuple["SensorNetwork", dict[int, int]]:
        """Induced subgraph on the survivors, relabelled to ``0..N'-1``.

        Returns the new network and the old-id -> new-id map.
        """
        gone = set(removed)
        keep = [i for i in self.nodes if i not in gone]
        if not keep:
            raise ConfigurationError("cannot remove every node")
        relabel = {old: new for new, old in enumerate(keep)}
        es = frozenset((relabel[u], relabel[v]) for u, v in self.edges if u in relabel and v in relabel)
        return SensorNetwork(len(keep), es), relabel

    def reachable_from(self, starts: Iterable[int], removed: Iterable[int] = ()) -> set[int]:
        """Nodes reachable from ``starts`` along out-edges, avoiding ``removed``."""
        gone = set(removed)
        seen = {s for s in starts if s not in gone}
        stack = list(seen)
        while stack:
            u = stack.pop()
            for v in self.out_neighbors[u]:
                if v not in seen and v not in gone:
                    seen.add(v)
                    stack.append(v)
        return seen

    def reaching(self, target: int, removed: Iterable[int] = ()) -> set[int]:
        """Nodes with a directed path to ``target`` (excluding ``target``), avoiding ``removed``."""
        gone = set(removed)
        seen = {target}
        stack = [target]
        while stack:
            u = stack.pop()
            for v in self.in_neighbors[u]:
                if v not in seen and v not in gone:
                    seen.add(v)
                    stack.append(v)
        seen.discard(target)
        return seen


def is_f_local(net: SensorNetwork, candidate: Iterable[int], f: int) -> bool:
    """True iff every node outside ``candidate`` has at most ``f`` in-neighbors inside it."""
    c = set(candidate)
    return all(len(net.in_neighbors[i] & c) <= f for i in net.nodes if i not in c)


def is_f_total(candidate: Iterable[int], f: int) -> bool:
    return len(set(candidate)) <= f


def is_r_reachable(net: SensorNetwork, subset: Iterable[int], r: int) -> bool:
    s = set(subset)
    if not s:
        raise ValueError("r-reachability is defined for nonempty sets only")
    return any(len(net.in_neighbors[i] - s) >= r for i in s)


def percolate(net: SensorNetwork, seed: Iterable[int], r: int) -> tuple[set[int], list[set[int]]]:
    """Synchronous bootstrap percolation on in-neighbors with threshold ``r``.

    ``rounds[0]`` is the seed; each later entry holds the nodes that turned
    active in that round, i.e. the inactive nodes that had at least ``r``
    active in-neighbors at the start of the round.
    """
    if r < 1:
        raise ValueError("threshold r must be at least 1")
    active = set(seed)
    rounds = [set(active)]
    count = [0] * net.node_count
    for u in active:
        for v in net.out_neighbors[u]:
            count[v] += 1
    frontier = [v for v in net.nodes if v not in active and count[v] >= r]
    while frontier:
        newly = set(frontier)
        rounds.append(newly)
        active |= newly
        touched = set()
        for u in newly:
            for v in net.out_neighbors[u]:
                if v not in active:
                    count[v] += 1
                    touched.add(v)
        frontier = sorted(v for v in touched if count[v] >= r)
    return active, rounds


def is_strongly_r_robust(net: SensorNetwork, sources: Iterable[int], r: int) -> bool:
    """Every nonempty subset of the non-sources is r-reachable (checked by percolation)."""
    src = set(sources)
    if len(src) >= net.node_count and src >= set(net.nodes):
        return True
    final, _ = percolate(net, src, r)
    return len(final) == net.node_count


def strongly_r_robust_by_subsets(net: SensorNetwork, sources: Iterable[int], r: int) -> bool:
    """Direct subset enumeration of strong r-robustness; exponential in ``N``."""
    rest = [i for i in net.nodes if i not in set(sources)]
    for size in range(1, len(rest) + 1):
        for c in combinations(rest, size):
            if not is_r_reachable(net, c, r):
                return False
    return True


@dataclass(frozen=True)
class FeasibilityReport:
    r: int
    per_block: Mapping[int, bool]

    @property
    def feasible(self) -> bool:
        return all(self.per_block.values())


def check_r_feasible(net: SensorNetwork, basis: "SpectralBasis", r: int) -> FeasibilityReport:
    """Strong r-robustness w.r.t. the source set of every block in Omega_U."""
    return check_r_feasible_sources(net, {j: basis.source_sets[j] for j in basis.omega_u}, r)


def check_r_feasible_sources(net: SensorNetwork, source_sets: Mapping[int, Iterable[int]], r: int) -> FeasibilityReport:
    per_block = {j: is_strongly_r_robust(net, s, r) for j, s in sorted(source_sets.items())}
    return FeasibilityReport(r=r, per_block=per_block)


def _guard(n: int, max_nodes: int) -> None:
    if n > max_nodes:
        raise ScaleLimitError(f"exhaustive search over {n} nodes exceeds the limit of {max_nodes}")


def _detectable_without(plant: "LtiPlant", removed: Iterable[int]) -> bool:
    gone = set(removed)
    keep = [i for i in sorted(plant.observations) if i not in gone]
    return is_detectable(plant.a_matrix, plant.stacked_observation(keep))


def minimal_critical_sets(plant: "LtiPlant", max_nodes: int = DEFAULT_MAX_NODES) -> list[frozenset[int]]:
    """All inclusion-minimal ``F`` whose removal leaves ``(A, C_{V\\F})`` undetectable."""
    nodes = sorted(plant.observations)
    _guard(len(nodes), max_nodes)
    found: list[frozenset[int]] = []
    for size in range(1, len(nodes) + 1):
        for combo in combinations(nodes, size):
            f = frozenset(combo)
            if any(g <= f for g in found):
                continue
            if not _detectable_without(plant, f):
                found.append(f)
    return found


@dataclass(frozen=True)
class PairCut:
    cut: frozenset[int]
    part_one: frozenset[int]
    part_two: frozenset[int]
    source_side: frozenset[int]
    sink_side: frozenset[int]
    kind: CutKind
    f: int
    critical: frozenset[int]

    def validate(self, net: SensorNetwork) -> list[str]:
        """Re-derive every structural property; returns the violated ones."""
        problems = []
        if self.part_one | self.part_two != self.cut or self.part_one & self.part_two:
            problems.append("parts do not partition the cut")
        if self.source_side & self.sink_side:
            problems.append("source and sink sides overlap")
        if (self.source_side | self.sink_side | self.cut) != set(net.nodes):
            problems.append("sides and cut do not cover the node set")
        if self.cut & (self.source_side | self.sink_side):
            problems.append("cut overlaps a side")
        if not self.sink_side:
            problems.append("sink side is empty")
        if self.critical & self.sink_side:
            problems.append("a critical node lies on the sink side")
        for u, v in net.edges:
            if u in self.source_side and v in self.sink_side:
                problems.append(f"edge {u}->{v} crosses from source to sink side")
        if self.kind == "local":
            ok = is_f_local(net, self.part_one, self.f) and is_f_local(net, self.part_two, self.f)
        else:
            ok = is_f_total(self.part_one, self.f) and is_f_total(self.part_two, self.f)
        if not ok:
            problems.append(f"a part is not {self.f}-{self.kind}")
        return problems


def _split(net: SensorNetwork, cut: tuple[int, ...], f: int, kind: CutKind):
    """First bipartition of ``cut`` into two f-local / f-total parts (parts may be empty)."""
    if kind == "total":
        if len(cut) > 2 * f:
            return None
        k = min(f, len(cut))
        return frozenset(cut[:k]), frozenset(cut[k:])
    members = list(cut)
    for size in range(0, len(members) // 2 + 1):
        for one in combinations(members, size):
            two = tuple(x for x in members if x not in one)
            if is_f_local(net, one, f) and is_f_local(net, two, f):
                return frozenset(one), frozenset(two)
    return None


def find_pair_cut(net: SensorNetwork, critical: Iterable[int], f: int, kind: CutKind = "local",
                  max_nodes: int = DEFAULT_MAX_NODES) -> PairCut | None:
    """Search for an f-local or f-total pair cut w.r.t. the virtual source of ``critical``.

    The virtual source feeds every critical node.  Candidate cuts are tried
    in increasing size, then lexicographically; the sink side is everything
    the virtual source can no longer reach.
    """
    if kind not in ("local", "total"):
        raise ValueError(f"kind must be 'local' or 'total', got {kind!r}")
    _guard(net.node_count, max_nodes)
    crit = frozenset(critical)
    max_size = net.node_count - 1
    if kind == "total":
        max_size = min(max_size, 2 * f)
    for size in range(0, max_size + 1):
        for cut in combinations(net.nodes, size):
            reach = net.reachable_from(crit, removed=cut)
            sink = set(net.nodes) - reach - set(cut)
            if not sink:
                continue
            parts = _split(net, cut, f, kind)
            if parts is None:
                continue
            return PairCut(cut=frozenset(cut), part_one=parts[0], part_two=parts[1],
                           source_side=frozenset(reach), sink_side=frozenset(sink),
                           kind=kind, f=f, critical=crit)
    return None


def max_tolerable_f_bound(plant: "LtiPlant", net: SensorNetwork, max_nodes: int = DEFAULT_MAX_NODES) -> int:
    """``k - 1`` for the smallest ``k`` admitting a k-total pair cut on some minimal critical set.

    Returns ``N`` when no minimal critical set admits any pair cut (the bound
    is then vacuous).
    """
    _guard(net.node_count, max_nodes)
    crits = minimal_critical_sets(plant, max_nodes)
    if not crits:
        return net.node_count
    for k in range(1, (net.node_count + 1) // 2 + 1):
        if any(find_pair_cut(net, c, k, "total", max_nodes) is not None for c in crits):
            return k - 1
    return net.node_count


def check_theorem2_condition(plant: "LtiPlant", net: SensorNetwork, node: int, f: int,
                             max_nodes: int = DEFAULT_MAX_NODES) -> bool:
    """Detectability from ``node`` plus whatever still reaches it after deleting any ``2f`` upstream nodes."""
    _guard(net.node_count, max_nodes)
    upstream = sorted(net.reaching(node))
    for size in range(0, min(2 * f, len(upstream)) + 1):
        for removed in combinations(upstream, size):
            still = net.reaching(node, removed=removed)
            c = plant.stacked_observation(still | {node})
            if not is_detectable(plant.a_matrix, c):
                return False
    return True

