"""Ground-truth LTI plant ``x[k+1] = A x[k]`` with per-node linear sensors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigurationError
from .spectral import is_detectable


@dataclass(frozen=True)
class LtiPlant:
    """System matrix, one observation matrix per node, and the true initial state.

    Nodes without sensors carry a ``0 x n`` observation matrix.  Node ids are
    ``0..N-1``.
    """

    a_matrix: np.ndarray
    observations: Mapping[int, np.ndarray]
    initial_state: np.ndarray = field(default=None)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_matrix, dtype=float))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ConfigurationError(f"A must be square, got shape {a.shape}")
        n = a.shape[0]
        obs = {}
        for node, c in self.observations.items():
            c = np.asarray(c, dtype=float)
            c = np.zeros((0, n)) if c.size == 0 else np.atleast_2d(c)
            if c.shape[1] != n:
                raise ConfigurationError(
                    f"observation matrix of node {node} has {c.shape[1]} columns, expected {n}")
            obs[int(node)] = c
        if sorted(obs) != list(range(len(obs))):
            raise ConfigurationError("observation node ids must be 0..N-1")
        x0 = np.zeros(n) if self.initial_state is None else np.asarray(self.initial_state, dtype=float).reshape(-1)
        if x0.shape != (n,):
            raise ConfigurationError(f"initial state must have length {n}")
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "initial_state", x0)
        if not is_detectable(a, self.stacked_observation()):
            raise ConfigurationError("the pair (A, C) with all sensors stacked is not detectable")

    @property
    def n(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def node_count(self) -> int:
        return len(self.observations)

    def stacked_observation(self, nodes=None) -> np.ndarray:
        """``C_J``: observation matrices of ``nodes`` (default all) stacked in id order."""
        ids = sorted(self.observations) if nodes is None else sorted(nodes)
        parts = [self.observations[i] for i in ids]
        if not parts:
            return np.zeros((0, self.n))
        return np.vstack(parts)


def step_state(plant: LtiPlant, state) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape != (plant.n,):
        raise ConfigurationError(f"state must have length {plant.n}, got shape {state.shape}")
    return plant.a_matrix @ state


def measure(plant: LtiPlant, node: int, state) -> np.ndarray:
    if node not in plant.observations:
        raise ConfigurationError(f"unknown node {node}")
    state = np.asarray(state, dtype=float)
    if state.shape != (plant.n,):
        raise ConfigurationError(f"state must have length {plant.n}, got shape {state.shape}")
    return plant.observations[node] @ state
