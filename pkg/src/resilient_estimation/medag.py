"""MEDAG construction as a synchronous round protocol, plus structural validation.

Round semantics: messages emitted in round ``m`` are delivered together at
the start of round ``m + 1``.  Sources emit in round 1.  A regular
non-source node whose set of distinct "1"-senders reaches ``2f + 1`` flips
its counter, records every sender heard so far (arrival round, then node
id), emits once, and ignores everything afterwards.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .adversary import NO_ATTACK, AttackScript, design_message
from .errors import ConfigurationError
from .graph_analysis import SensorNetwork, is_f_local


@dataclass(frozen=True)
class Medag:
    eigen_block: int
    accepted_neighbors: Mapping[int, tuple[int, ...]]
    levels: tuple[frozenset[int], ...]
    termination_round: int
    counters: Mapping[int, int]
    f: int = 0
    sources: frozenset[int] = frozenset()
    participants: frozenset[int] = frozenset()

    def level_of(self, node: int) -> int | None:
        for q, lvl in enumerate(self.levels):
            if node in lvl:
                return q
        return None

    def edges(self) -> set[tuple[int, int]]:
        return {(l, i) for i, ns in self.accepted_neighbors.items() for l in ns}

    def to_text(self, label=lambda i: i + 1) -> str:
        """Line-oriented dump; node ids written through ``label`` (1-based by default)."""
        lines = [
            f"block {self.eigen_block}",
            f"f {self.f}",
            f"termination_round {self.termination_round}",
            "sources " + " ".join(str(label(i)) for i in sorted(self.sources)),
            "participants " + " ".join(str(label(i)) for i in sorted(self.participants)),
        ]
        for q, lvl in enumerate(self.levels):
            lines.append(f"level {q}: " + " ".join(str(label(i)) for i in sorted(lvl)))
        for i in sorted(self.accepted_neighbors):
            ns = " ".join(str(label(l)) for l in self.accepted_neighbors[i])
            lines.append(f"node {label(i)} counter {self.counters.get(i, 0)}: {ns}".rstrip())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, unlabel=lambda s: int(s) - 1) -> "Medag":
        block = f = term = None
        sources: frozenset[int] = frozenset()
        participants: frozenset[int] = frozenset()
        levels: list[frozenset[int]] = []
        accepted: dict[int, tuple[int, ...]] = {}
        counters: dict[int, int] = {}

        def ids(s):
            return [unlabel(t) for t in s.split()]

        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            head, _, rest = line.partition(" ")
            try:
                if head == "block":
                    block = int(rest)
                elif head == "f":
                    f = int(rest)
                elif head == "termination_round":
                    term = int(rest)
                elif head == "sources":
                    sources = frozenset(ids(rest))
                elif head == "participants":
                    participants = frozenset(ids(rest))
                elif head == "level":
                    q, _, members = rest.partition(":")
                    if int(q) != len(levels):
                        raise ValueError("levels out of order")
                    levels.append(frozenset(ids(members)))
                elif head == "node":
                    lhs, _, members = rest.partition(":")
                    parts = lhs.split()
                    node = unlabel(parts[0])
                    counters[node] = int(parts[2])
                    accepted[node] = tuple(ids(members))
                else:
                    raise ValueError(f"unknown record {head!r}")
            except (ValueError, IndexError) as exc:
                raise ConfigurationError(f"medag text line {lineno}: {exc}") from None
        if block is None or term is None:
            raise ConfigurationError("medag text lacks 'block' or 'termination_round'")
        return cls(eigen_block=block, accepted_neighbors=accepted, levels=tuple(levels),
                   termination_round=term, counters=counters, f=f or 0,
                   sources=sources, participants=participants)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


@dataclass
class MedagRun:
    """Full protocol execution, including the partial state when it stalls."""

    medag: Medag | None
    counters: dict[int, int]
    accepted: dict[int, tuple[int, ...]]
    activation_round: dict[int, int]
    rounds_run: int
    participants: frozenset[int] = field(default_factory=frozenset)

    @property
    def terminated(self) -> bool:
        return self.medag is not None


def run_medag_protocol(net: SensorNetwork, sources: Iterable[int], f: int,
                       design_adversary: AttackScript | None = None,
                       max_rounds: int | None = None, block: int = 0) -> MedagRun:
    script = design_adversary or NO_ATTACK
    src = frozenset(sources)
    n = net.node_count
    max_rounds = n + 1 if max_rounds is None else max_rounds
    if max_rounds < n:
        raise ValueError(f"max_rounds must be at least N={n}")
    need = 2 * f + 1
    deviators = script.design_deviators()
    participants = frozenset(i for i in net.nodes if i not in deviators)

    counters = {i: 0 for i in net.nodes}
    heard: dict[int, dict[int, int]] = {i: {} for i in participants}
    accepted: dict[int, tuple[int, ...]] = {i: () for i in net.nodes}
    activation: dict[int, int] = {}

    def emitters(rnd: int, flipped: Iterable[int]) -> list[int]:
        out = list(flipped)
        out += [a for a in sorted(deviators) if design_message(script, a, rnd)]
        return out

    first = sorted(participants & src)
    for i in first:
        counters[i] = 1
        activation[i] = 1
    outgoing = emitters(1, first)
    rnd = 1
    done = all(counters[i] for i in participants)
    while not done and rnd < max_rounds:
        rnd += 1
        for u in outgoing:
            for v in net.out_neighbors[u]:
                if v in participants and not counters[v] and u not in heard[v]:
                    heard[v][u] = rnd
        flipped = []
        for v in sorted(participants - src):
            if not counters[v] and len(heard[v]) >= need:
                counters[v] = 1
                activation[v] = rnd
                accepted[v] = tuple(sorted(heard[v], key=lambda u: (heard[v][u], u)))
                flipped.append(v)
        outgoing = emitters(rnd, flipped)
        done = all(counters[i] for i in participants)

    medag = None
    if done:
        levels = [frozenset(i for i, m in activation.items() if m == q + 1) for q in range(rnd)]
        while levels and not levels[-1]:
            levels.pop()
        medag = Medag(eigen_block=block, accepted_neighbors=dict(accepted), levels=tuple(levels),
                      termination_round=rnd, counters=dict(counters), f=f,
                      sources=src, participants=participants)
    return MedagRun(medag=medag, counters=counters, accepted=accepted,
                    activation_round=activation, rounds_run=rnd, participants=participants)


def construct_medag(net: SensorNetwork, sources: Iterable[int], f: int,
                    design_adversary: AttackScript | None = None,
                    max_rounds: int | None = None, block: int = 0) -> Medag | None:
    """Run the construction protocol; ``None`` when some regular node never activates."""
    return run_medag_protocol(net, sources, f, design_adversary, max_rounds, block).medag


@dataclass(frozen=True)
class MedagValidation:
    levels: tuple[frozenset[int], ...]
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_medag(medag: Medag, net: SensorNetwork, sources: Iterable[int], f: int,
                   adversarial: Iterable[int]) -> MedagValidation:
    """Check both MEDAG properties for one adversarial set.

    Levels are re-derived for ``R = V \\ adversarial``: sources sit at level
    0 and every other regular node sits one above its highest regular
    accepted neighbor.
    """
    adv = frozenset(adversarial)
    if not is_f_local(net, adv, f):
        raise ValueError(f"adversarial set {sorted(adv)} is not {f}-local")
    src = frozenset(sources)
    regular = [i for i in net.nodes if i not in adv]
    problems: list[str] = []

    def accepted(i):
        return medag.accepted_neighbors.get(i, ())

    for i in net.nodes:
        stray = set(accepted(i)) - net.in_neighbors[i]
        if stray:
            problems.append(f"node {i} accepts non-neighbors {sorted(stray)}")
    for i in regular:
        if i in src:
            if accepted(i):
                problems.append(f"source node {i} has accepted neighbors")
        elif len(accepted(i)) < 2 * f + 1:
            problems.append(f"node {i} has {len(accepted(i))} accepted neighbors, needs {2 * f + 1}")

    level: dict[int, int] = {}
    state: dict[int, int] = {}  # 1 = on stack, 2 = finished
    reg = set(regular)

    def visit(i):
        # iterative DFS so deep chains do not hit the recursion limit
        stack = [(i, iter([l for l in accepted(i) if l in reg and i not in src]))]
        state[i] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                state[node] = 2
                if node in src:
                    level[node] = 0
                else:
                    ups = [level[l] for l in accepted(node) if l in reg]
                    level[node] = 1 + max(ups, default=0)
                continue
            if state.get(nxt) == 1:
                problems.append(f"directed cycle among regular nodes through {nxt} -> {node}")
                level.setdefault(nxt, 0)
                continue
            if nxt not in state:
                state[nxt] = 1
                kids = [] if nxt in src else [l for l in accepted(nxt) if l in reg]
                stack.append((nxt, iter(kids)))

    for i in regular:
        if i not in state:
            visit(i)

    depth = max(level.values(), default=-1)
    levels = tuple(frozenset(i for i in regular if level[i] == q) for q in range(depth + 1))
    return MedagValidation(levels=levels, violations=tuple(problems))
