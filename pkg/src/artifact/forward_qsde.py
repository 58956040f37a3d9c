"""Forward quantum stochastic equations on a ModeGrid.

The linear system is

    dx = (D x + u) dt + (F x + v) dW,

with the noise increment multiplying from the right.  One Euler step is an
exact Clifford product, so the only discretization is the left-endpoint
sampling of the coefficients.  Paths are arrays indexed by grid time
``j = 0..N``; entries before the initial index are zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .clifford_core import (
    EXACT_TOL,
    AdaptednessError,
    ModeGrid,
    adapted_mask,
    brownian_increment,
    right_increment,
)
from .stochastic_process import AdaptedOperatorProcess, compress_steps


class PicardError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class LinearCoefficients:
    """Drift ``D`` and diffusion ``F`` operator processes (compressed per step)."""

    grid: ModeGrid
    D: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        d = AdaptedOperatorProcess(self.grid, compress_steps(self.grid, self.D), "op")
        f = AdaptedOperatorProcess(self.grid, compress_steps(self.grid, self.F), "op")
        object.__setattr__(self, "D", d.values)
        object.__setattr__(self, "F", f.values)

    @classmethod
    def zero(cls, grid: ModeGrid) -> "LinearCoefficients":
        z = np.zeros((grid.n_modes, grid.dim, grid.dim), dtype=complex)
        return cls(grid, z, z)

    @property
    def M_DF2(self) -> np.ndarray:
        """``||D_k||^2 + ||F_k||^2`` in operator norm, per step."""
        return np.array([np.linalg.norm(a, 2) ** 2 + np.linalg.norm(b, 2) ** 2 for a, b in zip(self.D, self.F)])


def _source(grid, src, shape_tail):
    if src is None:
        return None
    src = np.asarray(getattr(src, "values", src), dtype=complex)
    if src.shape[:2] != (grid.n_modes, grid.dim):
        raise ValueError(f"source has shape {src.shape}, expected ({grid.n_modes}, {grid.dim}, ...)")
    return src


def _euler(coeffs, xi, u, v, t0):
    grid = coeffs.grid
    N = grid.n_modes
    x = np.asarray(xi, dtype=complex)
    path = np.zeros((N + 1,) + x.shape, dtype=complex)
    path[t0] = x
    dt = grid.deltas
    for k in range(t0, N):
        drift = coeffs.D[k] @ x
        diff = coeffs.F[k] @ x
        if u is not None:
            drift = drift + u[k]
        if v is not None:
            diff = diff + v[k]
        x = x + drift * dt[k] + right_increment(grid, k) @ diff
        path[k + 1] = x
    return path


def _picard(coeffs, xi, u, v, t0, maxit, tol):
    grid = coeffs.grid
    N = grid.n_modes
    dt = grid.deltas
    xi = np.asarray(xi, dtype=complex)
    path = np.zeros((N + 1,) + xi.shape, dtype=complex)
    path[t0:] = xi
    resid = np.inf
    for _ in range(maxit):
        new = np.zeros_like(path)
        acc = xi.copy()
        new[t0] = acc
        for k in range(t0, N):
            drift = coeffs.D[k] @ path[k]
            diff = coeffs.F[k] @ path[k]
            if u is not None:
                drift = drift + u[k]
            if v is not None:
                diff = diff + v[k]
            acc = acc + drift * dt[k] + right_increment(grid, k) @ diff
            new[k + 1] = acc
        resid = float(np.max(np.sqrt(np.sum(np.abs(new - path) ** 2, axis=tuple(range(1, new.ndim))))))
        path = new
        if resid <= tol:
            return path
    raise PicardError("Picard iteration did not converge", resid)


def _check_initial(grid, xi, t0):
    xi = np.asarray(xi, dtype=complex)
    if not 0 <= t0 <= grid.n_modes:
        raise IndexError(f"initial index {t0} outside 0..{grid.n_modes}")
    outside = ~adapted_mask(grid.n_modes, t0)
    if np.any(np.abs(xi[outside]) > EXACT_TOL * max(1.0, np.abs(xi).max())):
        raise AdaptednessError(f"initial value is not measurable at step {t0}")
    return xi


def solve_linear(xi, u, v, coeffs: LinearCoefficients, t0: int = 0, scheme: str = "euler",
                 maxit: int = 50, tol: float = 1e-12) -> np.ndarray:
    """Solve the linear forward equation from grid index ``t0``.

    ``xi`` may be a vector or a matrix whose columns are independent initial
    values; ``u``, ``v`` are per-step sources of matching trailing shape
    (or ``None``).  Returns the path at grid times, shape ``(N+1, ...)``.
    """
    grid = coeffs.grid
    xi = _check_initial(grid, xi, t0)
    u = _source(grid, u, xi.shape[1:])
    v = _source(grid, v, xi.shape[1:])
    if scheme == "euler":
        return _euler(coeffs, xi, u, v, t0)
    if scheme == "picard":
        return _picard(coeffs, xi, u, v, t0, maxit, tol)
    raise ValueError(f"unknown scheme {scheme!r}")


class ProcessSpace:
    """Coordinates for adapted vector processes on steps ``t0..N-1``.

    The basis is ``{(k, S) : t0 <= k < N, S a subset of modes 0..k-1}``,
    of dimension ``sum_k 2^k``.  The ``L^2`` inner product in these
    coordinates is weighted by the cell lengths, see :attr:`weights`.
    """

    def __init__(self, grid: ModeGrid, t0: int = 0):
        self.grid = grid
        self.t0 = t0
        self.steps = list(range(t0, grid.n_modes))
        self.offsets = {}
        off = 0
        for k in self.steps:
            self.offsets[k] = off
            off += 1 << k
        self.dim = off

    @property
    def weights(self) -> np.ndarray:
        dt = self.grid.deltas
        return np.concatenate([np.full(1 << k, dt[k]) for k in self.steps]) if self.steps else np.zeros(0)

    def embedding(self) -> np.ndarray:
        """Array ``E`` of shape ``(N, dim, pdim)`` with ``E[k] @ c`` the step-``k`` value."""
        E = np.zeros((self.grid.n_modes, self.grid.dim, self.dim), dtype=complex)
        for k in self.steps:
            s = 1 << k
            o = self.offsets[k]
            E[k, np.arange(s), o + np.arange(s)] = 1.0
        return E

    def to_process(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=complex)
        out = np.zeros((self.grid.n_modes, self.grid.dim) + coords.shape[1:], dtype=complex)
        for k in self.steps:
            s = 1 << k
            o = self.offsets[k]
            out[k, :s] = coords[o:o + s]
        return out

    def from_process(self, values) -> np.ndarray:
        values = np.asarray(getattr(values, "values", values), dtype=complex)
        out = np.zeros((self.dim,) + values.shape[2:], dtype=complex)
        for k in self.steps:
            s = 1 << k
            o = self.offsets[k]
            out[o:o + s] = values[k, :s]
        return out

    def inner(self, a, b) -> complex:
        return complex(np.sum(np.conj(a) * b * self.weights))

    def adjoint(self, M: np.ndarray) -> np.ndarray:
        """Adjoint of a process-to-process matrix for the weighted inner product."""
        w = self.weights
        return (M.conj().T * w[None, :]) / w[:, None]


@dataclass(frozen=True)
class FlowOperator:
    """Flow matrices ``matrices[j]`` mapping the input space to ``x(t_j)``."""

    grid: ModeGrid
    t0: int
    matrices: np.ndarray
    kind: str

    def apply(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=complex)
        return np.einsum("jab,b...->ja...", self.matrices, data)

    def op_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(m, 2) if m.size else 0.0 for m in self.matrices])


def flow_U(coeffs: LinearCoefficients, t0: int = 0, scheme: str = "euler") -> FlowOperator:
    """``U(t_j, t0)`` restricted to ``L^2`` of the first ``t0`` modes (``2^t0`` columns)."""
    grid = coeffs.grid
    basis = np.zeros((grid.dim, 1 << t0), dtype=complex)
    basis[np.arange(1 << t0), np.arange(1 << t0)] = 1.0
    path = solve_linear(basis, None, None, coeffs, t0, scheme)
    return FlowOperator(grid, t0, path, "U")


def flow_V(coeffs: LinearCoefficients, t0: int = 0, scheme: str = "euler") -> FlowOperator:
    """Drift-source flow, acting on :class:`ProcessSpace` coordinates."""
    grid = coeffs.grid
    space = ProcessSpace(grid, t0)
    zero = np.zeros((grid.dim, space.dim), dtype=complex)
    path = solve_linear(zero, space.embedding(), None, coeffs, t0, scheme)
    return FlowOperator(grid, t0, path, "V")


def flow_Xi(coeffs: LinearCoefficients, t0: int = 0, scheme: str = "euler") -> FlowOperator:
    """Diffusion-source flow, acting on :class:`ProcessSpace` coordinates."""
    grid = coeffs.grid
    space = ProcessSpace(grid, t0)
    zero = np.zeros((grid.dim, space.dim), dtype=complex)
    path = solve_linear(zero, None, space.embedding(), coeffs, t0, scheme)
    return FlowOperator(grid, t0, path, "Xi")


def flow_continuity(coeffs: LinearCoefficients, t0: int, t: int, xi) -> float:
    """``sup_{r >= t} ||(U(r, t) - U(r, t0)) xi||`` for ``xi`` measurable at ``t0 <= t``."""
    if not t0 <= t:
        raise ValueError("need t0 <= t")
    a = solve_linear(xi, None, None, coeffs, t0)
    b = solve_linear(xi, None, None, coeffs, t)
    return float(np.max(np.linalg.norm(a[t:] - b[t:], axis=1)))


@dataclass
class GeneralSystemSpec:
    """Callbacks ``(t, x, c) -> CliffordVector`` for the controlled equation

    ``dx = Dhat dt + Fhat dW + dW Ghat``.
    """

    grid: ModeGrid
    Dhat: Callable
    Fhat: Callable
    Ghat: Callable
    controls: Sequence = field(default_factory=list)


def solve_general(spec: GeneralSystemSpec, x0, t0: int = 0) -> np.ndarray:
    grid = spec.grid
    x = _check_initial(grid, x0, t0)
    N = grid.n_modes
    path = np.zeros((N + 1, grid.dim), dtype=complex)
    path[t0] = x
    dt = grid.deltas
    for k in range(t0, N):
        c = spec.controls[k] if len(spec.controls) > k else None
        t = grid.times[k]
        vals = []
        for name, fn in (("Dhat", spec.Dhat), ("Fhat", spec.Fhat), ("Ghat", spec.Ghat)):
            y = np.asarray(fn(t, x, c), dtype=complex)
            outside = ~adapted_mask(N, k)
            if np.any(np.abs(y[outside]) > EXACT_TOL * max(1.0, np.abs(y).max())):
                raise AdaptednessError(f"{name} returned a value not measurable at step {k}")
            vals.append(y)
        d, f, g = vals
        x = x + d * dt[k] + right_increment(grid, k) @ f + brownian_increment(grid, k) @ g
        path[k + 1] = x
    return path


def solve_hs_forward(grid: ModeGrid, X0, z, w, t0: int = 0):
    """Euler for ``dX = z dt + w dW`` with ``w dW`` read as ``w`` composed with left multiplication.

    Returns ``(path, report)``; the report holds the sup Hilbert-Schmidt
    norm and its ratio to ``||X0|| + ||z||_{L1} + ||w||_{L2}``.
    """
    N = grid.n_modes
    d = grid.dim
    X0 = np.asarray(X0, dtype=complex)
    mask = adapted_mask(N, t0)
    if np.any(np.abs(X0[~np.outer(mask, mask)]) > EXACT_TOL * max(1.0, np.abs(X0).max())):
        raise AdaptednessError(f"initial operator is not adapted to step {t0}")
    z = AdaptedOperatorProcess(grid, np.asarray(getattr(z, "values", z))).values
    w = AdaptedOperatorProcess(grid, np.asarray(getattr(w, "values", w))).values
    path = np.zeros((N + 1, d, d), dtype=complex)
    path[t0] = X0
    X = X0.copy()
    dt = grid.deltas
    for k in range(t0, N):
        X = X + z[k] * dt[k] + w[k] @ brownian_increment(grid, k)
        path[k + 1] = X
    hs = np.sqrt(np.sum(np.abs(path[t0:]) ** 2, axis=(1, 2)))
    zn = np.sqrt(np.sum(np.abs(z[t0:]) ** 2, axis=(1, 2)))
    wn = np.sqrt(np.sum(np.abs(w[t0:]) ** 2, axis=(1, 2)))
    rhs = np.linalg.norm(X0) + np.sum(zn * dt[t0:]) + np.sqrt(np.sum(wn ** 2 * dt[t0:]))
    sup = float(hs.max())
    return path, {"sup_hs": sup, "rhs": float(rhs), "ratio": sup / rhs if rhs > 0 else 0.0}
