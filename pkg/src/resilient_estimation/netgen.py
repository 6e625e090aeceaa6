"""Random sensor networks (ER, BA, RGG) and bootstrap-percolation threshold functions.

All generated graphs are undirected, realised as pairs of opposite directed
edges.  Every generator takes an explicit seed and is reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConfigurationError
from .graph_analysis import SensorNetwork, is_strongly_r_robust

ModelName = Literal["er", "ba", "rgg"]
SourceRuleName = Literal["random-subset", "bernoulli", "explicit"]


@dataclass(frozen=True)
class SourceRule:
    kind: SourceRuleName = "random-subset"
    size: int = 0
    probability: float = 0.0
    explicit: tuple[frozenset[int], ...] = ()
    count: int = 1  # number of source sets to draw (one per unstable mode)

    def __post_init__(self):
        if self.kind not in ("random-subset", "bernoulli", "explicit"):
            raise ConfigurationError(f"unknown source rule {self.kind!r}")
        if self.kind == "bernoulli" and not 0.0 <= self.probability <= 1.0:
            raise ConfigurationError("source probability must lie in [0, 1]")
        if self.kind == "random-subset" and self.size < 0:
            raise ConfigurationError("source set size must be nonnegative")
        if self.count < 1:
            raise ConfigurationError("at least one source set is needed")


@dataclass(frozen=True)
class GenSpec:
    """Parameters for one random network family.

    ``model`` selects the generator: ``er`` uses ``p``; ``ba`` grows
    ``seed_graph`` (with its ``seed_sources``) by attaching each new node to
    ``r`` existing ones; ``rgg`` uses the connection radius ``d``.
    """

    model: ModelName
    n_nodes: int
    r: int = 1
    seed: int = 0
    p: float = 0.0
    d: float = 0.0
    seed_graph: SensorNetwork | None = None
    seed_sources: frozenset[int] = frozenset()
    source_rule: SourceRule = field(default_factory=SourceRule)

    def __post_init__(self):
        if self.model not in ("er", "ba", "rgg"):
            raise ConfigurationError(f"unknown model {self.model!r}")
        if self.n_nodes < 1:
            raise ConfigurationError("n_nodes must be positive")
        if self.r < 1:
            raise ConfigurationError("r must be positive")
        if self.model == "er" and not 0.0 <= self.p <= 1.0:
            raise ConfigurationError(f"edge probability {self.p} outside [0, 1]")
        if self.model == "rgg" and not 0.0 < self.d <= math.sqrt(2.0):
            raise ConfigurationError(f"radius {self.d} outside (0, sqrt(2)]")
        if self.model == "ba":
            if self.seed_graph is None:
                raise ConfigurationError("the BA model needs a seed graph")
            if self.seed_graph.node_count < self.r:
                raise ConfigurationError("the BA seed graph needs at least r nodes")
            if self.n_nodes < self.seed_graph.node_count:
                raise ConfigurationError("n_nodes is smaller than the seed graph")


def _er(n: int, p: float, rng: np.random.Generator) -> SensorNetwork:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return SensorNetwork.from_undirected(n, zip(iu[keep].tolist(), ju[keep].tolist()))


def _rgg(n: int, d: float, rng: np.random.Generator) -> SensorNetwork:
    pts = rng.random((n, 2))
    iu, ju = np.triu_indices(n, k=1)
    keep = pdist(pts) <= d if n > 1 else np.zeros(0, dtype=bool)
    return SensorNetwork.from_undirected(n, zip(iu[keep].tolist(), ju[keep].tolist()))


def _ba(spec: GenSpec, rng: np.random.Generator) -> SensorNetwork:
    seed = spec.seed_graph
    pairs = {tuple(sorted(e)) for e in seed.edges}
    degree = [0] * spec.n_nodes
    for u, v in pairs:
        degree[u] += 1
        degree[v] += 1
    for new in range(seed.node_count, spec.n_nodes):
        weights = np.asarray(degree[:new], dtype=float) + 1e-12
        targets = rng.choice(new, size=spec.r, replace=False, p=weights / weights.sum())
        for t in sorted(int(t) for t in targets):
            pairs.add((t, new))
            degree[t] += 1
            degree[new] += 1
    return SensorNetwork.from_undirected(spec.n_nodes, pairs)


def generate(spec: GenSpec) -> SensorNetwork:
    rng = np.random.default_rng(spec.seed)
    if spec.model == "er":
        return _er(spec.n_nodes, spec.p, rng)
    if spec.model == "rgg":
        return _rgg(spec.n_nodes, spec.d, rng)
    return _ba(spec, rng)


def sample_sources(spec: GenSpec, rng: np.random.Generator) -> list[frozenset[int]]:
    rule = spec.source_rule
    if rule.kind == "explicit":
        return list(rule.explicit)
    if spec.model == "ba" and rule.kind == "random-subset" and rule.size == 0:
        return [frozenset(spec.seed_sources)] * rule.count
    out = []
    for _ in range(rule.count):
        if rule.kind == "random-subset":
            if rule.size > spec.n_nodes:
                raise ConfigurationError("source set larger than the network")
            out.append(frozenset(rng.choice(spec.n_nodes, size=rule.size, replace=False).tolist()))
        else:
            out.append(frozenset(np.flatnonzero(rng.random(spec.n_nodes) < rule.probability).tolist()))
    return out


def feasibility_monte_carlo(spec: GenSpec, trials: int) -> float:
    """Fraction of trials whose every sampled source set percolates at threshold ``spec.r``.

    Trial ``t`` uses seed ``(spec.seed, t)`` for both graph and sources.
    """
    if trials < 1:
        raise ConfigurationError("trials must be at least 1")
    hits = 0
    for t in range(trials):
        rng = np.random.default_rng([spec.seed, t])
        net = generate(replace(spec, seed=int(rng.integers(2**63))))
        sources = sample_sources(spec, rng)
        if all(is_strongly_r_robust(net, s, spec.r) for s in sources):
            hits += 1
    return hits / trials


# -- threshold functions --------------------------------------------------------

def er_threshold_values(n_nodes: int, p: float, r: int) -> tuple[float, float]:
    """Critical seed size ``T_c`` and ``A_c = (1 - 1/r) T_c`` for ER bootstrap percolation."""
    if r < 2:
        raise ValueError("r must be at least 2")
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    if n_nodes < 1:
        raise ValueError("n_nodes must be positive")
    t_c = (math.factorial(r - 1) / (n_nodes * p ** r)) ** (1.0 / (r - 1))
    return t_c, (1.0 - 1.0 / r) * t_c


def h_func(x: float) -> float:
    if x < 0:
        raise ValueError("H is defined on [0, inf)")
    return 1.0 if x == 0 else x * math.log(x) - x + 1.0


def j_func(x: float) -> float:
    if x <= 0:
        raise ValueError("J is defined on (0, inf)")
    return math.log(x) - 1.0 + 1.0 / x


def j_right_inverse(y: float, tol: float = 1e-12) -> float:
    """Inverse of ``J`` restricted to ``[1, inf)``, by bisection."""
    if y < 0:
        raise ValueError("J takes only nonnegative values on [1, inf)")
    if y == 0:
        return 1.0
    lo, hi = 1.0, 2.0
    while j_func(hi) < y:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if j_func(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class RggThresholds:
    d: float
    r: int
    p_min: float
    j_inverse: float
    regime_ok: bool


def rgg_threshold_values(n_nodes: int, a: float, gamma: float) -> RggThresholds:
    """Radius, integer threshold ``floor(gamma a ln N)`` and minimum source probability for RGGs.

    ``regime_ok`` reports whether ``a >= 5 pi / H(5 pi gamma)``.
    """
    if n_nodes < 2:
        raise ValueError("n_nodes must be at least 2")
    if a <= 1:
        raise ValueError("a must exceed 1")
    if not 0 < gamma < 1 / (5 * math.pi):
        raise ValueError("gamma must lie in (0, 1/(5 pi))")
    ln_n = math.log(n_nodes)
    d = math.sqrt(a * ln_n / (math.pi * n_nodes))
    r = math.floor(gamma * a * ln_n)
    jinv = j_right_inverse(1.0 / (a * gamma))
    p_min = min(gamma, 5 * math.pi * gamma / jinv)
    regime_ok = a >= 5 * math.pi / h_func(5 * math.pi * gamma)
    return RggThresholds(d=d, r=r, p_min=p_min, j_inverse=jinv, regime_ok=regime_ok)


def to_edge_list_text(net: SensorNetwork, header: dict | None = None) -> str:
    """Network file: ``# key = value`` provenance lines, ``nodes N``, then one ``u v`` edge per line (1-based)."""
    lines = [f"# {k} = {v}" for k, v in (header or {}).items()]
    lines.append(f"nodes {net.node_count}")
    lines += [f"{u + 1} {v + 1}" for u, v in sorted(net.edges)]
    return "\n".join(lines) + "\n"


def from_edge_list_text(text: str) -> SensorNetwork:
    count = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "nodes":
                count = int(parts[1])
            else:
                u, v = int(parts[0]), int(parts[1])
                edges.append((u - 1, v - 1))
        except (ValueError, IndexError):
            raise ConfigurationError(f"network file line {lineno}: cannot parse {line!r}") from None
    if count is None:
        raise ConfigurationError("network file lacks a 'nodes N' line")
    return SensorNetwork.from_edges(count, edges)
