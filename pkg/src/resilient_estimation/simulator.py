"""Synchronous round engine: plant, design phase, estimation rounds and trace capture.

Round ``k`` works from a frozen snapshot: every node transmits ``z_l[k]``,
every regular node combines its measurement ``y_i[k]`` with the values
received from its accepted neighbors to produce ``z_i[k+1]``, and the plant
advances to ``x[k+1]``.  Compromised nodes keep a shadow honest estimator
purely so that the ``Honest`` policy has something to send.
"""
from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np

from .adversary import NO_ATTACK, AttackScript, runtime_message
from .errors import ConfigurationError, DesignPhaseError
from .estimation import NodeEstimator, accepted_by_block
from .graph_analysis import SensorNetwork
from .medag import Medag, run_medag_protocol
from .plant import LtiPlant
from .spectral import SpectralBasis, build_basis

EstimatorMode = Literal["resilient", "plain"]
TOLERANCES = (1e-3, 1e-6)
DIVERGENCE_FACTOR = 10.0
DIVERGENCE_WINDOW = 10


@dataclass(frozen=True)
class InitialRange:
    """Draw every node's initial estimate uniformly from ``[low, high)``."""

    low: float = 0.0
    high: float = 1.0


@dataclass(frozen=True)
class Scenario:
    plant: LtiPlant
    net: SensorNetwork
    f: int = 0
    attack: AttackScript = NO_ATTACK
    rounds: int = 50
    seed: int = 0
    initial_estimates: Mapping[int, Sequence[float]] | InitialRange | None = None
    observer_gains: Mapping[int, np.ndarray] = field(default_factory=dict)
    estimator_mode: EstimatorMode = "resilient"
    transform: np.ndarray | None = None
    block_form: np.ndarray | None = None
    medags: Mapping[int, Medag] | None = None

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigurationError("rounds must be at least 1")
        if self.f < 0:
            raise ConfigurationError("f must be nonnegative")
        if self.estimator_mode not in ("resilient", "plain"):
            raise ConfigurationError(f"unknown estimator mode {self.estimator_mode!r}")
        if self.plant.node_count != self.net.node_count:
            raise ConfigurationError(
                f"plant has {self.plant.node_count} sensor nodes but the network has {self.net.node_count}")
        bad = [i for i in self.attack.compromised if not 0 <= i < self.net.node_count]
        if bad:
            raise ConfigurationError(f"compromised nodes {bad} are not in the network")

    @property
    def regular_nodes(self) -> list[int]:
        return [i for i in self.net.nodes if i not in self.attack.compromised]

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.plant.a_matrix, self.plant.initial_state):
            h.update(np.ascontiguousarray(arr).tobytes())
        for i in sorted(self.plant.observations):
            h.update(np.ascontiguousarray(self.plant.observations[i]).tobytes())
        h.update(repr(sorted(self.net.edges)).encode())
        h.update(repr((self.f, self.rounds, self.seed, self.estimator_mode)).encode())
        h.update(repr((sorted(self.attack.compromised), sorted(self.attack.design.items()),
                       sorted(self.attack.runtime.items(), key=lambda kv: kv[0]))).encode())
        h.update(repr(self.initial_estimates if not isinstance(self.initial_estimates, Mapping)
                      else sorted((k, list(map(float, v))) for k, v in self.initial_estimates.items())).encode())
        for i in sorted(self.observer_gains):
            h.update(np.ascontiguousarray(self.observer_gains[i], dtype=float).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class TraceRecord:
    round: int
    node: int
    xhat: np.ndarray
    error_norm: float


@dataclass(frozen=True)
class FlagEvent:
    round: int
    node: int
    sender: int


@dataclass(frozen=True)
class Transmission:
    round: int
    sender: int
    recipient: int
    block: int
    value: np.ndarray | None


@dataclass
class SimulationTrace:
    records: list[TraceRecord]
    flags: list[FlagEvent]
    audit: list[Transmission]
    metadata: dict
    states: list[np.ndarray]
    medags: dict[int, Medag]

    @property
    def n(self) -> int:
        return len(self.states[0])

    def errors(self, node: int) -> np.ndarray:
        return np.array([r.error_norm for r in self.records if r.node == node])

    def nodes(self) -> list[int]:
        return sorted({r.node for r in self.records})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "node", "error_norm"] + [f"xhat_{m}" for m in range(self.n)])
        for r in self.records:
            w.writerow([r.round, r.node, format(r.error_norm, ".17g")] + [format(v, ".17g") for v in r.xhat])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()


def design_phase(scenario: Scenario, basis: SpectralBasis) -> dict[int, Medag]:
    """MEDAG for every block in ``Omega_U``: loaded from the scenario or constructed."""
    medags: dict[int, Medag] = {}
    for j in sorted(basis.omega_u):
        if scenario.medags is not None and j in scenario.medags:
            medags[j] = scenario.medags[j]
            continue
        result = run_medag_protocol(scenario.net, basis.source_sets[j], scenario.f,
                                    design_adversary=scenario.attack, block=j)
        if not result.terminated:
            stuck = sum(1 for i in result.participants if not result.counters[i])
            raise DesignPhaseError(
                f"MEDAG construction for block {j} stalled after {result.rounds_run} rounds "
                f"with {stuck} regular nodes inactive", block=j, counters=result.counters)
        medags[j] = result.medag
    return medags


def _initial_estimates(scenario: Scenario) -> dict[int, np.ndarray]:
    n = scenario.plant.n
    init = scenario.initial_estimates
    if init is None:
        return {i: np.zeros(n) for i in scenario.net.nodes}
    if isinstance(init, InitialRange):
        rng = np.random.default_rng(scenario.seed)
        return {i: rng.uniform(init.low, init.high, size=n) for i in scenario.net.nodes}
    out = {}
    for i in scenario.net.nodes:
        v = np.asarray(init.get(i, np.zeros(n)), dtype=float).reshape(-1)
        if v.shape != (n,):
            raise ConfigurationError(f"initial estimate of node {i} must have length {n}")
        out[i] = v
    return out


def run(scenario: Scenario, node_order: Sequence[int] | None = None) -> SimulationTrace:
    """Execute the design phase and ``scenario.rounds`` estimation rounds.

    ``node_order`` permutes the order in which nodes are updated inside a
    round; results do not depend on it.
    """
    plant, net, f = scenario.plant, scenario.net, scenario.f
    attack = scenario.attack
    basis = build_basis(plant, scenario.transform, scenario.block_form)
    medags = design_phase(scenario, basis)
    trim = f if scenario.estimator_mode == "resilient" else 0

    init = _initial_estimates(scenario)
    estimators: dict[int, NodeEstimator] = {}
    for i in net.nodes:
        est = NodeEstimator(i, basis, gain=scenario.observer_gains.get(i),
                            accepted=accepted_by_block(medags, i, basis.undetectable_sets[i]),
                            z0=basis.to_modal(init[i]))
        if i not in attack.compromised:
            for j in est.undetectable_blocks:
                if len(est.accepted.get(j, ())) < 2 * trim + 1:
                    raise ConfigurationError(
                        f"node {i} has {len(est.accepted.get(j, ()))} accepted neighbors for block {j}; "
                        f"needs {2 * trim + 1}")
        estimators[i] = est

    regular = scenario.regular_nodes
    order = list(net.nodes) if node_order is None else list(node_order)
    if sorted(order) != list(net.nodes):
        raise ConfigurationError("node_order must be a permutation of the node ids")

    x = plant.initial_state.copy()
    states = [x.copy()]
    records: list[TraceRecord] = []
    flags: list[FlagEvent] = []
    audit: list[Transmission] = []

    def record(k: int) -> None:
        for i in regular:
            xhat = estimators[i].full_estimate()
            records.append(TraceRecord(k, i, xhat, float(np.linalg.norm(xhat - x))))

    record(0)
    for k in range(scenario.rounds):
        snapshot = {i: est.z_estimate.copy() for i, est in estimators.items()}
        z_true = basis.to_modal(x)
        for i in order:
            est = estimators[i]
            y = plant.observations[i] @ x
            if i in attack.compromised:
                est.observer_step(y)
                for j in est.undetectable_blocks:
                    if len(est.accepted.get(j, ())) >= 2 * trim + 1:
                        est.lfre_step(j, {l: snapshot[l][basis.blocks[j].slice] for l in est.accepted[j]}, trim)
                    else:
                        est.propagate_block(j)
                continue
            received: dict[int, dict[int, object]] = {}
            for j in est.undetectable_blocks:
                s = basis.blocks[j].slice
                msgs = {}
                for l in est.accepted[j]:
                    if l in attack.compromised:
                        val = runtime_message(attack, l, i, j, z_true[s], snapshot[l][s], k)
                        audit.append(Transmission(k, l, i, j, None if val is None else np.array(val)))
                        if val is not None:
                            msgs[l] = val
                    else:
                        msgs[l] = snapshot[l][s]
                received[j] = msgs
            before = set(est.flagged)
            est.step(y, received, trim)
            flags.extend(FlagEvent(k, i, l) for l in sorted(est.flagged - before))
        x = plant.a_matrix @ x
        states.append(x.copy())
        record(k + 1)

    records.sort(key=lambda r: (r.round, r.node))
    audit.sort(key=lambda t: (t.round, t.sender, t.recipient, t.block))
    metadata = {
        "scenario_digest": scenario.digest(),
        "medag_digests": {j: m.digest() for j, m in medags.items()},
        "estimator_mode": scenario.estimator_mode,
        "rounds": scenario.rounds,
        "seed": scenario.seed,
        "f": f,
        "omega_u": sorted(basis.omega_u),
        "warnings": attack.warnings(net, f),
    }
    return SimulationTrace(records=records, flags=flags, audit=audit, metadata=metadata,
                           states=states, medags=medags)


@dataclass(frozen=True)
class NodeSummary:
    node: int
    final_error: float
    max_error: float
    first_below: Mapping[float, int | None]
    diverging: bool


def summarize(trace: SimulationTrace) -> dict[int, NodeSummary]:
    """Per-node convergence figures.

    A node is flagged as diverging when its last error is positive and at
    least ten times the error ten rounds earlier; runs shorter than that
    window never flag.
    """
    out = {}
    for i in trace.nodes():
        e = trace.errors(i)
        firsts = {}
        for tol in TOLERANCES:
            hits = np.flatnonzero(e < tol)
            firsts[tol] = int(hits[0]) if hits.size else None
        diverging = False
        if len(e) > DIVERGENCE_WINDOW:
            last, earlier = e[-1], e[-1 - DIVERGENCE_WINDOW]
            diverging = bool(last > 0 and last >= DIVERGENCE_FACTOR * earlier)
        out[i] = NodeSummary(node=i, final_error=float(e[-1]), max_error=float(e.max()),
                             first_below=firsts, diverging=diverging)
    return out
