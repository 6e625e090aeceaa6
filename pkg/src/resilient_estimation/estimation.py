"""Per-node estimator: local Luenberger observer plus trimmed-mean consensus.

A node runs the observer on the blocks it can detect and, for every block
it cannot detect, listens only to its accepted MEDAG neighbors, drops the
``f`` largest and ``f`` smallest values per component, averages the rest and
pushes the result through the block dynamics.
"""
from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.signal import place_poles

from .errors import ConfigurationError, SensorFaultError
from .spectral import SpectralBasis

COND_LIMIT = 1e10


def spectral_radius(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(mat))))


def _ackermann_deadbeat(a: np.ndarray, c_row: np.ndarray) -> np.ndarray | None:
    """Single-output dead-beat observer gain, or None if the row does not observe ``a``."""
    q = a.shape[0]
    rows = [c_row]
    for _ in range(q - 1):
        rows.append(rows[-1] @ a)
    obs = np.vstack(rows)
    if np.linalg.cond(obs) > COND_LIMIT:
        return None
    e_last = np.zeros(q)
    e_last[-1] = 1.0
    return np.linalg.matrix_power(a, q) @ np.linalg.solve(obs, e_last)


def _observable_gain(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Gain for an observable pair: dead-beat when one output combination suffices."""
    q, p = a.shape[0], c.shape[0]
    candidates = [np.eye(p)[k] for k in range(p)] + [np.ones(p)]
    rng = np.random.default_rng(0)
    candidates += [rng.standard_normal(p) for _ in range(8)]
    for w in candidates:
        ell = _ackermann_deadbeat(a, w @ c)
        if ell is not None:
            gain = np.outer(ell, w)
            if spectral_radius(a - gain @ c) < 1.0:
                return gain
    # a is not cyclic: fall back to distinct poles close to the origin
    poles = np.linspace(0.0, 0.5, q)
    return place_poles(a.T, c.T, poles).gain_matrix.T


def deadbeat_gain(a, c) -> np.ndarray:
    """Observer gain ``L`` making ``a - L c`` Schur stable.

    Observable modes are placed at the origin where a single output
    combination observes them; unobservable modes are left where they are,
    so ``(a, c)`` must be detectable.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    q = a.shape[0] if a.size else 0
    c = np.asarray(c, dtype=float)
    p = c.shape[0] if c.ndim == 2 else (1 if c.size else 0)
    if q == 0 or p == 0:
        return np.zeros((q, p))
    c = c.reshape(p, q)
    obs = np.vstack([c @ np.linalg.matrix_power(a, k) for k in range(q)])
    _, s, vh = np.linalg.svd(obs)
    rank = int(np.sum(s > 1e-10 * max(s[0], 1e-300)))
    if rank == 0:
        return np.zeros((q, p))
    basis = vh[:rank].T  # orthonormal basis of the observable subspace
    a11 = basis.T @ a @ basis
    c1 = c @ basis
    return basis @ _observable_gain(a11, c1)


def design_observer_gain(basis: SpectralBasis, node: int) -> np.ndarray:
    """Default gain for ``node``'s detectable block subspace."""
    idx = basis.indices(basis.detectable_sets[node])
    m_o = basis.block_form[np.ix_(idx, idx)]
    c_o = basis.observations[node][:, idx]
    gain = deadbeat_gain(m_o, c_o)
    if spectral_radius(m_o - gain @ c_o) >= 1.0:
        raise ConfigurationError(
            f"node {node}: detectable blocks are not stabilisable by output injection; the basis is corrupt")
    return gain


def trimmed_mean(values: np.ndarray, senders: Sequence[int], f: int) -> tuple[np.ndarray, list[list[int]]]:
    """Per-component trimmed average.

    ``values`` has one row per sender.  In every column the rows are sorted
    descending (ties by ascending sender id), the first and last ``f`` are
    dropped and the survivors are averaged with equal weights.  Returns the
    averages and, per component, the surviving senders.
    """
    values = np.asarray(values, dtype=float)
    k, dim = values.shape
    if k < 2 * f + 1:
        raise ConfigurationError(f"need at least {2 * f + 1} values to trim {f} from each end, got {k}")
    out = np.empty(dim)
    kept: list[list[int]] = []
    for m in range(dim):
        order = sorted(range(k), key=lambda r: (-values[r, m], senders[r]))
        keep = order[f:k - f]
        out[m] = sum(values[r, m] for r in keep) / len(keep)
        kept.append([senders[r] for r in keep])
    return out, kept


class NodeEstimator:
    """State of one node's estimator in the modal coordinates ``z = T^{-1} x``."""

    def __init__(self, node: int, basis: SpectralBasis, gain=None,
                 accepted: Mapping[int, Sequence[int]] | None = None, z0=None):
        self.node = node
        self.basis = basis
        self.detectable_blocks = sorted(basis.detectable_sets[node])
        self.undetectable_blocks = sorted(basis.undetectable_sets[node])
        self._obs_idx = basis.indices(self.detectable_blocks)
        self._blind_idx = basis.indices(self.undetectable_blocks)
        c_bar = basis.observations[node]
        self._m_o = basis.block_form[np.ix_(self._obs_idx, self._obs_idx)]
        self._c_o = c_bar[:, self._obs_idx]
        self._c_blind = c_bar[:, self._blind_idx]
        if gain is None:
            gain = design_observer_gain(basis, node)
        gain = np.asarray(gain, dtype=float)
        if gain.size != len(self._obs_idx) * c_bar.shape[0]:
            raise ConfigurationError(
                f"observer gain for node {node} must be {len(self._obs_idx)}x{c_bar.shape[0]}, got shape {gain.shape}")
        gain = gain.reshape(len(self._obs_idx), c_bar.shape[0])
        if spectral_radius(self._m_o - gain @ self._c_o) >= 1.0:
            raise ConfigurationError(f"observer gain for node {node} is not stabilising")
        self.observer_gain = gain
        self.accepted = {j: tuple(accepted.get(j, ())) for j in self.undetectable_blocks} if accepted else \
            {j: () for j in self.undetectable_blocks}
        self.z_estimate = np.zeros(basis.n) if z0 is None else np.asarray(z0, dtype=float).copy()
        self.flagged: set[int] = set()
        self.last_survivors: dict[int, list[list[int]]] = {}

    @property
    def closed_loop(self) -> np.ndarray:
        return self._m_o - self.observer_gain @ self._c_o

    def observer_step(self, measurement) -> np.ndarray:
        """Advance the detectable part by one Luenberger step; returns it.

        The innovation also subtracts the node's current estimate of any
        undetectable blocks its sensor sees (nonzero only for partially
        visible repeated eigenvalues).
        """
        y = np.asarray(measurement, dtype=float).reshape(-1)
        if not np.all(np.isfinite(y)):
            raise SensorFaultError(f"node {self.node} received a non-finite measurement")
        z = self.z_estimate
        z_o = z[self._obs_idx]
        innovation = y - self._c_o @ z_o - self._c_blind @ z[self._blind_idx]
        new = self._m_o @ z_o + self.observer_gain @ innovation
        self.z_estimate[self._obs_idx] = new
        return new

    def _sanitize(self, sender: int, value, dim: int) -> np.ndarray:
        if value is None:
            self.flagged.add(sender)
            return np.zeros(dim)
        arr = np.asarray(value)
        if arr.shape != (dim,):
            self.flagged.add(sender)
            return np.zeros(dim)
        bad = ~np.isfinite(arr)
        if np.iscomplexobj(arr):
            bad |= arr.imag != 0
        if bad.any():
            self.flagged.add(sender)
        clean = np.where(bad, 0.0, arr.real if np.iscomplexobj(arr) else arr)
        return clean.astype(float)

    def lfre_step(self, block: int, received: Mapping[int, object], f: int) -> np.ndarray:
        """Trim, average and propagate one undetectable block; returns the new block estimate.

        Missing, non-finite or non-real entries count as 0 and flag the sender.
        """
        senders = self.accepted.get(block, ())
        if len(senders) < 2 * f + 1:
            raise ConfigurationError(
                f"node {self.node}, block {block}: {len(senders)} accepted neighbors, needs {2 * f + 1}")
        b = self.basis.blocks[block]
        rows = np.vstack([self._sanitize(l, received.get(l), b.block_dimension) for l in senders])
        avg, kept = trimmed_mean(rows, senders, f)
        self.last_survivors[block] = kept
        new = self.basis.block_matrix(block) @ avg
        self.z_estimate[b.slice] = new
        return new

    def propagate_block(self, block: int) -> np.ndarray:
        """Open-loop prediction ``z <- V z`` for a block with no usable neighbors."""
        b = self.basis.blocks[block]
        new = self.basis.block_matrix(block) @ self.z_estimate[b.slice]
        self.z_estimate[b.slice] = new
        return new

    def step(self, measurement, received: Mapping[int, Mapping[int, object]], f: int) -> None:
        """One full round: observer first (it reads the pre-update blind estimate), then LFRE."""
        self.observer_step(measurement)
        for j in self.undetectable_blocks:
            self.lfre_step(j, received.get(j, {}), f)

    def full_estimate(self) -> np.ndarray:
        return self.basis.to_state(self.z_estimate)

    def block_estimate(self, block: int) -> np.ndarray:
        return self.z_estimate[self.basis.blocks[block].slice].copy()


def accepted_by_block(medags: Mapping[int, "object"], node: int, blocks: Iterable[int]) -> dict[int, tuple[int, ...]]:
    return {j: tuple(medags[j].accepted_neighbors.get(node, ())) for j in blocks if j in medags}
