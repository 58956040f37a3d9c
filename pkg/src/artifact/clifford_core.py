"""Finite-mode fermion Fock space and the Clifford algebra it carries.

Basis vectors are indexed by bitmasks: bit ``k`` set means mode ``k`` is
occupied.  Mode ``k`` is the cell ``[t_k, t_{k+1})`` of a :class:`ModeGrid`.
The basis vector for an occupation set ``S = {s_1 < ... < s_m}`` is the
ordered product of normalized mode fields applied to the vacuum, so that
creation operators carry Jordan-Wigner signs ``(-1)^{#{j in S : j < k}}``.

Vectors (``CliffordVector``) and operators (``AlgebraOperator``) are plain
complex numpy arrays of shape ``(2**n,)`` and ``(2**n, 2**n)``.  Dense
operators cost ``O(4**n)`` memory, so the mode count is capped at
:data:`MAX_MODES`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_MODES = 12

EXACT_TOL = 1e-12
DERIVED_TOL = 1e-10


class SizeError(ValueError):
    """Requested mode count exceeds the dense-storage cap."""


class AdaptednessError(ValueError):
    """A value was not measurable with respect to the required time."""


@dataclass(frozen=True)
class ModeGrid:
    """Time partition ``0 = t_0 < ... < t_N = T``; one fermion mode per cell."""

    times: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("times must be a non-empty 1-D sequence")
        if t[0] != 0.0:
            raise ValueError("first grid time must be 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid times must be strictly increasing")
        object.__setattr__(self, "times", tuple(float(x) for x in t))

    @classmethod
    def uniform(cls, T: float, N: int) -> "ModeGrid":
        if N < 0:
            raise ValueError("N must be non-negative")
        if N == 0:
            return cls((0.0,))
        return cls(tuple(np.linspace(0.0, T, N + 1)))

    @property
    def T(self) -> float:
        return self.times[-1]

    @property
    def n_modes(self) -> int:
        return len(self.times) - 1

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(np.asarray(self.times))

    @property
    def dim(self) -> int:
        return 1 << self.n_modes


@dataclass(frozen=True)
class FockBasis:
    n_modes: int

    @property
    def dim(self) -> int:
        return 1 << self.n_modes

    def subset(self, index: int) -> tuple:
        return tuple(k for k in range(self.n_modes) if (index >> k) & 1)

    def index(self, subset) -> int:
        idx = 0
        for k in subset:
            if not 0 <= k < self.n_modes:
                raise IndexError(f"mode {k} outside 0..{self.n_modes - 1}")
            idx |= 1 << k
        return idx

    @property
    def vacuum_index(self) -> int:
        return 0


def _check_modes(n: int) -> None:
    if n < 0:
        raise ValueError("mode count must be non-negative")
    if n > MAX_MODES:
        raise SizeError(f"{n} modes exceeds cap of {MAX_MODES} (dense storage is O(4^n))")


def build_space(grid: ModeGrid) -> FockBasis:
    _check_modes(grid.n_modes)
    return FockBasis(grid.n_modes)


def vacuum(n: int) -> np.ndarray:
    _check_modes(n)
    v = np.zeros(1 << n, dtype=complex)
    v[0] = 1.0
    return v


def _popcount(x):
    return np.bitwise_count(np.asarray(x, dtype=np.int64)).astype(np.int64)


@lru_cache(maxsize=None)
def _indices(n: int) -> np.ndarray:
    return np.arange(1 << n, dtype=np.int64)


@lru_cache(maxsize=None)
def _creation_unit(n: int, k: int) -> np.ndarray:
    """Normalized ``c_k^dagger`` on ``n`` modes (read-only)."""
    idx = _indices(n)
    free = ((idx >> k) & 1) == 0
    cols = idx[free]
    signs = np.where(_popcount(cols & ((1 << k) - 1)) % 2 == 0, 1.0, -1.0)
    m = np.zeros((1 << n, 1 << n), dtype=complex)
    m[cols | (1 << k), cols] = signs
    m.setflags(write=False)
    return m


def parity(n: int) -> np.ndarray:
    """Grading operator: ``diag((-1)^{|S|})``."""
    _check_modes(n)
    return np.diag(np.where(_popcount(_indices(n)) % 2 == 0, 1.0, -1.0)).astype(complex)


def parity_diag(n: int) -> np.ndarray:
    return np.where(_popcount(_indices(n)) % 2 == 0, 1.0, -1.0)


def _mode_weights(z, weights):
    z = np.asarray(z, dtype=complex)
    if z.ndim != 1:
        raise ValueError("field vector must be one-dimensional")
    if weights is None:
        w = np.ones(z.size)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != z.shape:
            raise ValueError(f"field vector has {z.size} modes, weights have {w.size}")
    return z, w


def field_inner(z, zp, weights=None) -> complex:
    """``<z, z'>`` on the one-particle space, conjugate-linear in ``z``."""
    z, w = _mode_weights(z, weights)
    zp, _ = _mode_weights(zp, weights)
    return complex(np.sum(np.conj(z) * zp * w))


def creation(z, weights=None) -> np.ndarray:
    """``C(z) = sum_k z_k sqrt(w_k) c_k^dagger``.

    ``weights`` are the squared norms of the mode functions (the cell
    lengths for a grid); omit them for orthonormal modes.
    """
    z, w = _mode_weights(z, weights)
    n = z.size
    _check_modes(n)
    out = np.zeros((1 << n, 1 << n), dtype=complex)
    for k in range(n):
        if z[k] != 0:
            out += z[k] * np.sqrt(w[k]) * _creation_unit(n, k)
    return out


def annihilation(z, weights=None) -> np.ndarray:
    return creation(z, weights).conj().T


def field(z, weights=None) -> np.ndarray:
    """``Psi(z) = C(z) + A(Jz)``, with ``J`` entrywise conjugation."""
    z, _ = _mode_weights(z, weights)
    return creation(z, weights) + annihilation(np.conj(z), weights)


@lru_cache(maxsize=None)
def _unit_field(n: int, k: int) -> np.ndarray:
    c = _creation_unit(n, k)
    m = c + c.T
    m.setflags(write=False)
    return m


def brownian_increment(grid: ModeGrid, k: int) -> np.ndarray:
    """``W(t_{k+1}) - W(t_k)`` as the field of the (unnormalized) mode ``k``."""
    n = grid.n_modes
    if not 0 <= k < n:
        raise IndexError(f"step {k} outside 0..{n - 1}")
    _check_modes(n)
    return np.sqrt(grid.deltas[k]) * _unit_field(n, k)


def brownian_motion(grid: ModeGrid, j: int) -> np.ndarray:
    """``W(t_j)`` for a grid index ``0 <= j <= N``."""
    n = grid.n_modes
    if not 0 <= j <= n:
        raise IndexError(f"grid index {j} outside 0..{n}")
    out = np.zeros((grid.dim, grid.dim), dtype=complex)
    for k in range(j):
        out += brownian_increment(grid, k)
    return out


def state_m(f) -> complex:
    """Vacuum state: ``<Omega, f Omega>`` for operators, the vacuum coefficient for vectors."""
    f = np.asarray(f)
    if f.ndim == 1:
        return complex(f[0])
    return complex(f[0, 0])


def lp_norm(f: np.ndarray, p) -> float:
    """Noncommutative ``L^p`` norm ``m(|f|^p)^{1/p}``; ``p = inf`` gives the operator norm."""
    f = np.asarray(f, dtype=complex)
    if p == np.inf:
        return float(np.linalg.norm(f, 2))
    p = float(p)
    if not np.isfinite(p) or p < 1:
        raise ValueError("p must lie in [1, inf) or be numpy.inf")
    evals, evecs = np.linalg.eigh(f.conj().T @ f)
    evals = np.clip(evals, 0.0, None)
    weights = np.abs(evecs[0, :]) ** 2
    return float(np.sum(weights * evals ** (p / 2.0)) ** (1.0 / p))


def adapted_mask(n: int, k: int) -> np.ndarray:
    """Boolean mask of basis subsets using only modes ``0..k-1``."""
    if not 0 <= k <= n:
        raise IndexError(f"step {k} outside 0..{n}")
    return _indices(n) < (1 << k)


def projector(n: int, k: int) -> np.ndarray:
    return np.diag(adapted_mask(n, k).astype(complex))


def conditional_expectation(f, k: int):
    """Conditional expectation onto the algebra of the first ``k`` modes.

    Vectors are projected onto the span of subsets of ``{0..k-1}``.
    Operators are compressed, ``Pi_k f Pi_k``.  On left multiplication
    operators this agrees with the algebra conditional expectation,
    because the vacuum state is tracial.
    """
    f = np.asarray(f)
    n = int(np.log2(f.shape[0]))
    mask = adapted_mask(n, k)
    if f.ndim == 1:
        return np.where(mask, f, 0)
    return f * np.outer(mask, mask)


def is_adapted_vector(x, k: int, tol: float = EXACT_TOL) -> bool:
    x = np.asarray(x)
    n = int(np.log2(x.shape[0]))
    return bool(np.all(np.abs(x[~adapted_mask(n, k)]) <= tol))


def is_adapted_operator(a, k: int, tol: float = EXACT_TOL) -> bool:
    a = np.asarray(a)
    n = int(np.log2(a.shape[0]))
    mask = adapted_mask(n, k)
    outside = ~np.outer(mask, mask)
    return bool(np.all(np.abs(a[outside]) <= tol))


def _blade_sign(left, right):
    """Sign of ``e_S e_T`` for bitmasks: ``(-1)^{#{(s, t): s in S, t in T, s > t}}``."""
    left = np.asarray(left, dtype=np.int64)
    right = np.asarray(right, dtype=np.int64)
    swaps = np.zeros(np.broadcast(left, right).shape, dtype=np.int64)
    for s in range(MAX_MODES + 1):
        bit = (left >> s) & 1
        if not np.any(bit):
            continue
        swaps = swaps + bit * _popcount(right & ((1 << s) - 1))
    return np.where(swaps % 2 == 0, 1.0, -1.0)


def _check_pair(a, b):
    if a.shape != b.shape:
        raise ValueError(f"basis mismatch: {a.shape} vs {b.shape}")


def left_mul_matrix(a) -> np.ndarray:
    """Matrix of ``b -> a b`` on CliffordVectors."""
    a = np.asarray(a, dtype=complex)
    n = int(np.log2(a.size))
    idx = _indices(n)
    out = np.zeros((a.size, a.size), dtype=complex)
    for s in np.flatnonzero(a):
        out[idx ^ s, idx] += a[s] * _blade_sign(s, idx)
    return out


def right_mul_matrix(a) -> np.ndarray:
    """Matrix of ``b -> b a`` on CliffordVectors."""
    a = np.asarray(a, dtype=complex)
    n = int(np.log2(a.size))
    idx = _indices(n)
    out = np.zeros((a.size, a.size), dtype=complex)
    for s in np.flatnonzero(a):
        out[idx ^ s, idx] += a[s] * _blade_sign(idx, s)
    return out


def clifford_mul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    _check_pair(a, b)
    return left_mul_matrix(a) @ b


@lru_cache(maxsize=None)
def _right_unit_field(n: int, k: int) -> np.ndarray:
    e = np.zeros(1 << n, dtype=complex)
    e[1 << k] = 1.0
    m = right_mul_matrix(e)
    m.setflags(write=False)
    return m


def right_increment(grid: ModeGrid, k: int) -> np.ndarray:
    """Right multiplication by ``W(t_{k+1}) - W(t_k)``."""
    n = grid.n_modes
    if not 0 <= k < n:
        raise IndexError(f"step {k} outside 0..{n - 1}")
    return np.sqrt(grid.deltas[k]) * _right_unit_field(n, k)


def save_matrix(path, a: np.ndarray) -> None:
    """Dump a complex matrix as ``.npy`` (binary, lossless)."""
    np.save(path, np.asarray(a, dtype=complex))


def load_matrix(path) -> np.ndarray:
    return np.load(path)
