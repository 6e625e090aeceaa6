"""Scripted Byzantine behaviour for the design phase and the estimation phase.

Policies are plain frozen dataclasses.  Run-time values are expressed in the
block coordinates of ``z`` (what a node actually transmits).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Union

import numpy as np

if TYPE_CHECKING:
    from .graph_analysis import SensorNetwork


# -- estimation-phase policies ------------------------------------------------

@dataclass(frozen=True)
class Honest:
    pass


@dataclass(frozen=True)
class Silent:
    pass


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class RandomUniform:
    seed: int
    low: float
    high: float


@dataclass(frozen=True)
class ScaledTruth:
    factor: float


@dataclass(frozen=True)
class PerRecipient:
    policies: Mapping[int, "RuntimePolicy"]
    default: "RuntimePolicy" = Honest()

    def __post_init__(self):
        # canonical order keeps reprs and digests independent of construction order
        object.__setattr__(self, "policies", dict(sorted(self.policies.items())))


RuntimePolicy = Union[Honest, Silent, Constant, RandomUniform, ScaledTruth, PerRecipient]


# -- design-phase policies ----------------------------------------------------

HONEST = "honest"
SILENT = "silent"
BROADCAST_EARLY = "broadcast-early"


@dataclass(frozen=True)
class ScriptedRounds:
    rounds: frozenset[int]


DesignPolicy = Union[str, ScriptedRounds]


@dataclass(frozen=True)
class AttackScript:
    compromised: frozenset[int] = frozenset()
    design: Mapping[int, DesignPolicy] = field(default_factory=dict)
    runtime: Mapping[int, RuntimePolicy] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "compromised", frozenset(self.compromised))
        for node in list(self.design) + list(self.runtime):
            if node not in self.compromised:
                raise ValueError(f"policy given for node {node}, which is not compromised")
        for node, pol in self.design.items():
            if not isinstance(pol, ScriptedRounds) and pol not in (HONEST, SILENT, BROADCAST_EARLY):
                raise ValueError(f"unknown design policy {pol!r} for node {node}")

    def design_policy(self, node: int) -> DesignPolicy:
        return self.design.get(node, HONEST)

    def runtime_policy(self, node: int) -> RuntimePolicy:
        return self.runtime.get(node, Honest())

    def design_deviators(self) -> frozenset[int]:
        """Compromised nodes that do not follow the MEDAG protocol."""
        return frozenset(i for i in self.compromised if self.design_policy(i) != HONEST)

    def warnings(self, net: "SensorNetwork", f: int) -> list[str]:
        from .graph_analysis import is_f_local

        if not is_f_local(net, self.compromised, f):
            return [f"compromised set is not {f}-local; resilience guarantees do not apply"]
        return []


NO_ATTACK = AttackScript()


def _resolve(policy: RuntimePolicy, recipient: int) -> RuntimePolicy:
    while isinstance(policy, PerRecipient):
        policy = policy.policies.get(recipient, policy.default)
    return policy


def runtime_message(script: AttackScript, sender: int, recipient: int, block: int,
                    truth, honest_estimate, round: int) -> np.ndarray | None:
    """Value a compromised ``sender`` transmits to ``recipient`` for ``block``.

    ``None`` means nothing is sent.  Random policies draw from a stream keyed
    on ``(seed, sender, recipient, block, round)`` so evaluation order never
    matters.
    """
    policy = _resolve(script.runtime_policy(sender), recipient)
    honest = np.asarray(honest_estimate, dtype=float)
    if isinstance(policy, Honest):
        return honest.copy()
    if isinstance(policy, Silent):
        return None
    if isinstance(policy, Constant):
        return np.full(honest.shape, float(policy.value))
    if isinstance(policy, ScaledTruth):
        return policy.factor * np.asarray(truth, dtype=float)
    if isinstance(policy, RandomUniform):
        rng = np.random.default_rng([policy.seed, sender, recipient, block, round])
        return rng.uniform(policy.low, policy.high, size=honest.shape)
    raise TypeError(f"unknown runtime policy {policy!r}")


def design_message(script: AttackScript, sender: int, round: int, activated: bool = False) -> bool:
    """Whether compromised ``sender`` emits "1" in ``round`` of MEDAG construction.

    ``activated`` only matters for an honest-behaving node, which sends in
    the round its counter flips.
    """
    policy = script.design_policy(sender)
    if policy == HONEST:
        return activated
    if policy == SILENT:
        return False
    if policy == BROADCAST_EARLY:
        return round == 1
    if isinstance(policy, ScriptedRounds):
        return round in policy.rounds
    raise TypeError(f"unknown design policy {policy!r}")
