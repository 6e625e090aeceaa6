"""Real block-diagonal basis of the system matrix and per-node mode detectability.

The built-in decomposition handles diagonalizable matrices: each real
eigenvalue becomes a diagonal block ``lambda * I`` and each conjugate pair
``a +/- ib`` becomes a block of ``D(a, b) = [[a, b], [-b, a]]`` tiles.  A
defective matrix needs a user-supplied ``(T, M)`` pair, which is validated
by :func:`basis_from_supplied`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping

import numpy as np

from .errors import ConfigurationError, UnsupportedMatrixError

if TYPE_CHECKING:
    from .plant import LtiPlant

RANK_RTOL = 1e-8
EIG_RTOL = 1e-8
BASIS_RTOL = 1e-8


@dataclass(frozen=True)
class EigenBlock:
    """One eigenvalue (or conjugate pair) and its coordinates inside ``z``."""

    eigenvalue: complex
    is_real: bool
    algebraic_multiplicity: int
    geometric_multiplicity: int
    block_dimension: int
    offset: int
    is_unstable: bool

    @property
    def indices(self) -> range:
        return range(self.offset, self.offset + self.block_dimension)

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.block_dimension)


@dataclass(frozen=True)
class SpectralBasis:
    transform: np.ndarray
    block_form: np.ndarray
    blocks: tuple[EigenBlock, ...]
    detectable_sets: Mapping[int, frozenset[int]]
    undetectable_sets: Mapping[int, frozenset[int]]
    source_sets: Mapping[int, frozenset[int]]
    omega_u: frozenset[int]
    observations: Mapping[int, np.ndarray] = field(repr=False, default_factory=dict)
    transform_inv: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.transform_inv is None:
            object.__setattr__(self, "transform_inv", np.linalg.inv(self.transform))

    @property
    def n(self) -> int:
        return self.transform.shape[0]

    @property
    def nodes(self) -> list[int]:
        return sorted(self.detectable_sets)

    def block_matrix(self, block: int) -> np.ndarray:
        """``V(lambda)`` or ``W(lambda)``: the diagonal block of ``M`` for ``block``."""
        s = self.blocks[block].slice
        return self.block_form[s, s]

    def indices(self, block_ids: Iterable[int]) -> np.ndarray:
        idx = [i for j in sorted(block_ids) for i in self.blocks[j].indices]
        return np.asarray(idx, dtype=int)

    def to_modal(self, x: np.ndarray) -> np.ndarray:
        return self.transform_inv @ np.asarray(x, dtype=float)

    def to_state(self, z: np.ndarray) -> np.ndarray:
        return self.transform @ np.asarray(z, dtype=float)


def singular_rank(mat: np.ndarray, rtol: float = RANK_RTOL, scale: float = 0.0) -> int:
    """Numerical rank with threshold ``rtol * max(largest singular value, scale)``."""
    mat = np.asarray(mat)
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    ref = max(s[0], scale)
    if ref == 0.0:
        return 0
    return int(np.sum(s > rtol * ref))


def _as_matrix(a) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigurationError(f"system matrix must be square, got shape {a.shape}")
    return a


def _as_obs(c, n: int) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.size == 0:
        return np.zeros((0, n))
    c = np.atleast_2d(c)
    if c.shape[1] != n:
        raise ConfigurationError(f"observation matrix has {c.shape[1]} columns, expected {n}")
    return c


def pbh_detectable(a_matrix, c_matrix, eigenvalue: complex) -> bool:
    """PBH test for a single eigenvalue.

    Returns True when ``[A - lambda I; C]`` has full column rank.  Stable
    eigenvalues (``|lambda| < 1``) count as detectable for any ``C``.
    """
    a = _as_matrix(a_matrix)
    n = a.shape[0]
    c = _as_obs(c_matrix, n)
    if abs(eigenvalue) < 1.0:
        return True
    stacked = np.vstack([a - eigenvalue * np.eye(n), c.astype(complex)])
    # floor the reference at |A|_2 so A close to lambda I is not rank-inflated by roundoff
    return singular_rank(stacked, scale=float(np.linalg.norm(a, 2))) == n


def eigenvalue_tolerance(a: np.ndarray) -> float:
    return EIG_RTOL * max(1.0, np.linalg.norm(a, np.inf))


def distinct_eigenvalues(a_matrix) -> list[complex]:
    """Eigenvalues of ``A`` clustered at ``tol_eig``, one representative each."""
    a = _as_matrix(a_matrix)
    return [c.mean for c in _cluster(np.linalg.eigvals(a), eigenvalue_tolerance(a))]


def unstable_eigenvalues(a_matrix) -> list[complex]:
    return [lam for lam in distinct_eigenvalues(a_matrix) if abs(lam) >= 1.0]


def is_detectable(a_matrix, c_matrix) -> bool:
    a = _as_matrix(a_matrix)
    c = _as_obs(c_matrix, a.shape[0])
    return all(pbh_detectable(a, c, lam) for lam in unstable_eigenvalues(a))


@dataclass
class _Cluster:
    members: list[int]
    values: list[complex]

    @property
    def mean(self) -> complex:
        return complex(np.mean(self.values))


def _cluster(values: np.ndarray, tol: float) -> list[_Cluster]:
    clusters: list[_Cluster] = []
    order = sorted(range(len(values)), key=lambda k: (values[k].real, values[k].imag))
    for k in order:
        v = complex(values[k])
        for c in clusters:
            if abs(c.mean - v) <= tol:
                c.members.append(k)
                c.values.append(v)
                break
        else:
            clusters.append(_Cluster([k], [v]))
    return clusters


def _sign_fix(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def _null_space(mat: np.ndarray, dim: int, scale: float) -> tuple[np.ndarray, int]:
    """Last ``dim`` right singular vectors and the numerical nullity.

    Singular values are compared against ``scale`` (the size of ``A``), not
    against ``mat`` itself, which is tiny when ``A`` is close to a multiple of I.
    """
    _, s, vh = np.linalg.svd(mat)
    nullity = int(np.sum(s <= RANK_RTOL * max(scale, 1e-300)))
    return vh[-dim:].conj().T, nullity


def _real_pair_columns(v: np.ndarray) -> np.ndarray:
    """Map a complex eigenvector to the real pair ``[Re v, Im v]`` with tidy phase."""
    v = v / np.linalg.norm(v)
    # rotate so that Re v and Im v are orthogonal and Re v is the longer one
    v = v * np.exp(-0.5j * np.angle(v @ v))
    re, im = v.real, v.imag
    k = int(np.argmax(np.abs(re)))
    if re[k] < 0:
        re, im = -re, -im
    return np.column_stack([re, im])


def _canonical_order(items):
    nonreal = sorted((b for b in items if not b[0]), key=lambda b: (b[1].real, b[1].imag))
    real = sorted((b for b in items if b[0]), key=lambda b: b[1].real)
    return nonreal + real


def decompose(a_matrix) -> tuple[np.ndarray, np.ndarray, tuple[EigenBlock, ...]]:
    """Real block-diagonalization ``A T = T M`` for diagonalizable ``A``.

    Blocks are ordered with non-real pairs first (by real then imaginary
    part), then real eigenvalues ascending, so that every node derives the
    same transform from the same ``A``.
    """
    a = _as_matrix(a_matrix)
    n = a.shape[0]
    tol = eigenvalue_tolerance(a)
    scale = float(np.linalg.norm(a, 2)) if n else 0.0
    clusters = _cluster(np.linalg.eigvals(a), tol)

    pending = []  # (is_real, eigenvalue, multiplicity)
    n_upper = n_lower = 0
    for c in clusters:
        lam = c.mean
        mult = len(c.members)
        if abs(lam.imag) <= tol:
            pending.append((True, complex(lam.real, 0.0), mult))
        elif lam.imag > 0:
            pending.append((False, lam, mult))
            n_upper += mult
        else:
            n_lower += mult
    if n_upper != n_lower:
        raise UnsupportedMatrixError("could not pair complex-conjugate eigenvalues")

    columns, diag_blocks, blocks = [], [], []
    offset = 0
    for is_real, lam, mult in _canonical_order(pending):
        if is_real:
            vecs, nullity = _null_space(a - lam.real * np.eye(n), mult, scale)
            if nullity < mult:
                raise UnsupportedMatrixError(
                    f"eigenvalue {lam.real:.6g} is defective "
                    f"(algebraic {mult}, geometric {nullity}); supply T and M explicitly",
                    eigenvalue=lam)
            for k in range(mult):
                columns.append(_sign_fix(vecs[:, k].real)[:, None])
            diag_blocks.append(lam.real * np.eye(mult))
            dim = mult
        else:
            vecs, nullity = _null_space(a.astype(complex) - lam * np.eye(n), mult, scale)
            if nullity < mult:
                raise UnsupportedMatrixError(
                    f"eigenvalue {lam:.6g} is defective "
                    f"(algebraic {mult}, geometric {nullity}); supply T and M explicitly",
                    eigenvalue=lam)
            d = np.array([[lam.real, lam.imag], [-lam.imag, lam.real]])
            for k in range(mult):
                columns.append(_real_pair_columns(vecs[:, k]))
            diag_blocks.append(np.kron(np.eye(mult), d))
            dim = 2 * mult
        blocks.append(EigenBlock(
            eigenvalue=lam, is_real=is_real, algebraic_multiplicity=mult,
            geometric_multiplicity=mult, block_dimension=dim, offset=offset,
            is_unstable=abs(lam) >= 1.0))
        offset += dim

    t = np.hstack(columns)
    m = _block_diag(diag_blocks, n)
    if singular_rank(t) < n:
        raise UnsupportedMatrixError("eigenvector basis is numerically singular")
    check_residual(a, t, m)
    return t, m, tuple(blocks)


def _block_diag(parts, n):
    m = np.zeros((n, n))
    k = 0
    for p in parts:
        d = p.shape[0]
        m[k:k + d, k:k + d] = p
        k += d
    return m


def basis_tolerance(a: np.ndarray) -> float:
    n = a.shape[0]
    return BASIS_RTOL * max(1.0, np.linalg.norm(a, np.inf)) * n


def check_residual(a, t, m) -> float:
    """Return ``||TM - AT||_inf``; raise if it exceeds the basis tolerance."""
    a = _as_matrix(a)
    res = float(np.linalg.norm(t @ m - a @ t, np.inf))
    if res > basis_tolerance(a):
        raise ConfigurationError(f"basis residual {res:.3e} exceeds tolerance {basis_tolerance(a):.3e}")
    return res


def _split_irreducible(m: np.ndarray, tol: float) -> list[tuple[int, int]]:
    n = m.shape[0]
    spans, start = [], 0
    for k in range(n - 1):
        off = max(np.max(np.abs(m[start:k + 1, k + 1:]), initial=0.0),
                  np.max(np.abs(m[k + 1:, start:k + 1]), initial=0.0))
        if off <= tol:
            spans.append((start, k + 1))
            start = k + 1
    spans.append((start, n))
    # everything off the chunks has to vanish, not just the couplings to later rows
    mask = np.ones_like(m, dtype=bool)
    for s, e in spans:
        mask[s:e, s:e] = False
    if np.any(np.abs(m[mask]) > tol):
        raise ConfigurationError("supplied M is not block diagonal")
    return spans


def basis_from_supplied(a_matrix, transform, block_form) -> tuple[np.ndarray, np.ndarray, tuple[EigenBlock, ...]]:
    """Validate a user-supplied ``(T, M)`` and infer its eigenvalue blocks.

    Each maximal group of consecutive diagonal chunks sharing one eigenvalue
    (or one conjugate pair) becomes one :class:`EigenBlock`.  This is the
    route for defective matrices.
    """
    a = _as_matrix(a_matrix)
    n = a.shape[0]
    t = np.asarray(transform, dtype=float)
    m = np.asarray(block_form, dtype=float)
    if t.shape != (n, n) or m.shape != (n, n):
        raise ConfigurationError("T and M must have the same shape as A")
    if singular_rank(t) < n:
        raise ConfigurationError("supplied T is singular")
    check_residual(a, t, m)

    tol = eigenvalue_tolerance(a)
    chunks = []
    for s, e in _split_irreducible(m, tol * 1e-4):
        cl = _cluster(np.linalg.eigvals(m[s:e, s:e]), max(tol, 1e-6 * max(1.0, np.abs(m).max())))
        reps = [c.mean for c in cl]
        if len(reps) == 1 and abs(reps[0].imag) <= tol:
            chunks.append((s, e, complex(reps[0].real, 0.0), True))
        elif len(reps) == 2 and abs(reps[0] - np.conj(reps[1])) <= tol and abs(reps[0].imag) > tol:
            lam = reps[0] if reps[0].imag > 0 else reps[1]
            chunks.append((s, e, lam, False))
        else:
            raise ConfigurationError(f"block M[{s}:{e}] does not carry a single eigenvalue or conjugate pair")

    merged: list[list] = []
    for s, e, lam, is_real in chunks:
        if merged and merged[-1][3] == is_real and abs(merged[-1][2] - lam) <= tol:
            merged[-1][1] = e
        else:
            if any(abs(g[2] - lam) <= tol for g in merged):
                raise ConfigurationError(f"eigenvalue {lam:.6g} appears in non-adjacent blocks of M")
            merged.append([s, e, lam, is_real])

    blocks = []
    for s, e, lam, is_real in merged:
        dim = e - s
        alg = dim if is_real else dim // 2
        shift = a.astype(complex) - lam * np.eye(n)
        geo = n - singular_rank(shift)
        blocks.append(EigenBlock(
            eigenvalue=lam, is_real=is_real, algebraic_multiplicity=alg,
            geometric_multiplicity=geo, block_dimension=dim, offset=s,
            is_unstable=abs(lam) >= 1.0))
    return t, m, tuple(blocks)


def build_basis(plant: "LtiPlant", transform=None, block_form=None) -> SpectralBasis:
    """Spectral basis plus per-node detectable/undetectable block sets.

    Detectability of a block for node ``i`` is the PBH test on ``(A, C_i)``
    at the block's eigenvalue; a conjugate pair is detected together.
    """
    a = plant.a_matrix
    if transform is None and block_form is None:
        t, m, blocks = decompose(a)
    elif transform is not None and block_form is not None:
        t, m, blocks = basis_from_supplied(a, transform, block_form)
    else:
        raise ConfigurationError("T and M must be supplied together")

    nodes = sorted(plant.observations)
    detectable, undetectable = {}, {}
    for i in nodes:
        c = plant.observations[i]
        seen = frozenset(j for j, b in enumerate(blocks) if pbh_detectable(a, c, b.eigenvalue))
        detectable[i] = seen
        undetectable[i] = frozenset(range(len(blocks))) - seen
    everyone = frozenset(nodes)
    sources = {}
    for j, b in enumerate(blocks):
        sources[j] = frozenset(i for i in nodes if j in detectable[i]) if b.is_unstable else everyone
    omega_u = frozenset(j for j, b in enumerate(blocks) if b.is_unstable and sources[j] != everyone)
    return SpectralBasis(
        transform=t, block_form=m, blocks=blocks,
        detectable_sets=detectable, undetectable_sets=undetectable,
        source_sets=sources, omega_u=omega_u,
        observations={i: plant.observations[i] @ t for i in nodes})


@dataclass(frozen=True)
class SourceCardinalityReport:
    f: int
    required: int
    sizes: Mapping[int, int]
    failing: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not self.failing


def check_source_cardinality(basis: SpectralBasis, f: int) -> SourceCardinalityReport:
    """Every unstable block not seen by all nodes needs at least ``2f+1`` sources.

    This is the eigenvalue-level check; for repeated eigenvalues it is
    coarser than the per-eigendirection condition.
    """
    if f < 0:
        raise ValueError("f must be nonnegative")
    required = 2 * f + 1
    sizes = {j: len(basis.source_sets[j]) for j in sorted(basis.omega_u)}
    failing = tuple(j for j, s in sizes.items() if s < required)
    return SourceCardinalityReport(f=f, required=required, sizes=sizes, failing=failing)
