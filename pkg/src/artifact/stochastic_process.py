"""Simple adapted processes on a ModeGrid and their stochastic integrals.

A vector process stores one CliffordVector per cell, ``values[k]`` being
the value on ``[t_k, t_{k+1})``; it must live on modes ``0..k-1``.
An operator process stores one matrix per cell with ``Pi_k A Pi_k = A``.
All integrals are exact sums of Clifford products; there is no
time-discretization error beyond the piecewise-constant sampling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .clifford_core import (
    EXACT_TOL,
    AdaptednessError,
    ModeGrid,
    adapted_mask,
    brownian_increment,
    parity_diag,
    right_increment,
)


def _check_range(grid: ModeGrid, start: int, stop: int | None):
    stop = grid.n_modes if stop is None else stop
    if not 0 <= start <= stop <= grid.n_modes:
        raise IndexError(f"step range [{start}, {stop}) outside 0..{grid.n_modes}")
    return start, stop


@dataclass(frozen=True)
class AdaptedVectorProcess:
    grid: ModeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n_modes, self.grid.dim):
            raise ValueError(f"expected shape {(self.grid.n_modes, self.grid.dim)}, got {v.shape}")
        for k in range(self.grid.n_modes):
            bad = np.abs(v[k, ~adapted_mask(self.grid.n_modes, k)])
            if bad.size and bad.max() > EXACT_TOL * max(1.0, np.abs(v[k]).max()):
                raise AdaptednessError(f"vector value at step {k} charges modes >= {k}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: ModeGrid) -> "AdaptedVectorProcess":
        return cls(grid, np.zeros((grid.n_modes, grid.dim), dtype=complex))

    def norm_l2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2 * self.grid.deltas[:, None])))


@dataclass(frozen=True)
class AdaptedOperatorProcess:
    grid: ModeGrid
    values: np.ndarray
    norm_mode: str = "hs"

    def __post_init__(self):
        if self.norm_mode not in ("hs", "op"):
            raise ValueError("norm_mode must be 'hs' or 'op'")
        v = np.asarray(self.values, dtype=complex)
        d = self.grid.dim
        if v.shape != (self.grid.n_modes, d, d):
            raise ValueError(f"expected shape {(self.grid.n_modes, d, d)}, got {v.shape}")
        for k in range(self.grid.n_modes):
            mask = adapted_mask(self.grid.n_modes, k)
            outside = ~np.outer(mask, mask)
            if outside.any():
                bad = np.abs(v[k][outside]).max()
                if bad > EXACT_TOL * max(1.0, np.abs(v[k]).max()):
                    raise AdaptednessError(f"operator value at step {k} couples modes >= {k}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: ModeGrid, norm_mode: str = "hs") -> "AdaptedOperatorProcess":
        d = grid.dim
        return cls(grid, np.zeros((grid.n_modes, d, d), dtype=complex), norm_mode)

    def step_norms(self) -> np.ndarray:
        if self.norm_mode == "hs":
            return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=(1, 2)))
        return np.array([np.linalg.norm(a, 2) for a in self.values])


def compress_steps(grid: ModeGrid, ops) -> np.ndarray:
    """Per-step compression ``Pi_k A_k Pi_k`` of a stack of matrices."""
    ops = np.asarray(ops, dtype=complex)
    out = np.empty_like(ops)
    for k in range(grid.n_modes):
        mask = adapted_mask(grid.n_modes, k)
        out[k] = ops[k] * np.outer(mask, mask)
    return out


def left_ito_integral(phi: AdaptedVectorProcess, start: int = 0, stop: int | None = None) -> np.ndarray:
    """``sum_k phi_k (W(t_{k+1}) - W(t_k))`` as a CliffordVector."""
    start, stop = _check_range(phi.grid, start, stop)
    out = np.zeros(phi.grid.dim, dtype=complex)
    for k in range(start, stop):
        out += right_increment(phi.grid, k) @ phi.values[k]
    return out


def right_ito_integral(gamma: AdaptedVectorProcess, start: int = 0, stop: int | None = None) -> np.ndarray:
    """``sum_k (W(t_{k+1}) - W(t_k)) gamma_k`` as a CliffordVector."""
    start, stop = _check_range(gamma.grid, start, stop)
    out = np.zeros(gamma.grid.dim, dtype=complex)
    for k in range(start, stop):
        out += brownian_increment(gamma.grid, k) @ gamma.values[k]
    return out


def hs_ito_integral(Phi: AdaptedOperatorProcess, start: int = 0, stop: int | None = None) -> np.ndarray:
    """``sum_k Phi_k L(dW_k)``: composition with left multiplication by the increment."""
    start, stop = _check_range(Phi.grid, start, stop)
    d = Phi.grid.dim
    out = np.zeros((d, d), dtype=complex)
    for k in range(start, stop):
        out += Phi.values[k] @ brownian_increment(Phi.grid, k)
    return out


def vector_isometry_check(phi: AdaptedVectorProcess, side: str = "left") -> dict:
    integral = left_ito_integral(phi) if side == "left" else right_ito_integral(phi)
    lhs = float(np.vdot(integral, integral).real)
    rhs = float(np.sum(np.sum(np.abs(phi.values) ** 2, axis=1) * phi.grid.deltas))
    return {"lhs": lhs, "rhs": rhs, "rel_error": abs(lhs - rhs) / max(abs(rhs), 1e-300)}


def hs_isometry_check(Phi: AdaptedOperatorProcess) -> dict:
    integral = hs_ito_integral(Phi)
    lhs = float(np.sum(np.abs(integral) ** 2))
    rhs = float(np.sum(np.sum(np.abs(Phi.values) ** 2, axis=(1, 2)) * Phi.grid.deltas))
    return {"lhs": lhs, "rhs": rhs, "rel_error": abs(lhs - rhs) / max(abs(rhs), 1e-300)}


def adapted_projection(grid: ModeGrid, h) -> AdaptedOperatorProcess:
    """Orthogonal projection of per-step operators onto adapted ones."""
    return AdaptedOperatorProcess(grid, compress_steps(grid, h))


def duality_pairing(P: AdaptedOperatorProcess, f: AdaptedOperatorProcess) -> complex:
    """``sum_k tr(P_k^* f_k) Delta_k``."""
    if P.grid != f.grid:
        raise ValueError("grid mismatch")
    per_step = np.einsum("kij,kij->k", np.conj(P.values), f.values)
    return complex(np.sum(per_step * P.grid.deltas))


def random_vector_process(grid: ModeGrid, rng: np.random.Generator, scale: float = 1.0) -> AdaptedVectorProcess:
    n, d = grid.n_modes, grid.dim
    vals = np.zeros((n, d), dtype=complex)
    for k in range(n):
        m = adapted_mask(n, k)
        vals[k, m] = scale * (rng.standard_normal(m.sum()) + 1j * rng.standard_normal(m.sum())) / math.sqrt(2)
    return AdaptedVectorProcess(grid, vals)


def random_operator_process(grid: ModeGrid, rng: np.random.Generator, scale: float = 1.0) -> AdaptedOperatorProcess:
    n, d = grid.n_modes, grid.dim
    vals = np.zeros((n, d, d), dtype=complex)
    for k in range(n):
        s = 1 << k
        block = rng.standard_normal((s, s)) + 1j * rng.standard_normal((s, s))
        vals[k, :s, :s] = scale * block / math.sqrt(2 * s)
    return AdaptedOperatorProcess(grid, vals)


def homogeneous_parts(x: np.ndarray):
    """Split a CliffordVector into even and odd parts."""
    even = parity_diag(int(np.log2(x.shape[0]))) > 0
    return np.where(even, x, 0), np.where(even, 0, x)


PROCESS_DUMP_HEADER = ("step", "basis", "re", "im")


def dump_process(path, process: AdaptedVectorProcess) -> None:
    """Write a vector process as CSV rows ``step, basis, re, im`` (nonzero entries only).

    The first line is a comment carrying the grid times so the file is
    self-describing.
    """
    with open(path, "w", newline="") as fh:
        fh.write("# times=" + ",".join(repr(t) for t in process.grid.times) + "\n")
        w = csv.writer(fh)
        w.writerow(PROCESS_DUMP_HEADER)
        for k, row in enumerate(process.values):
            for b in np.flatnonzero(row):
                w.writerow((k, int(b), repr(float(row[b].real)), repr(float(row[b].imag))))


def load_process(path) -> AdaptedVectorProcess:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# times="):
            raise ValueError("missing '# times=' header")
        grid = ModeGrid(tuple(float(t) for t in first[len("# times="):].split(",")))
        r = csv.reader(fh)
        header = tuple(next(r))
        if header != PROCESS_DUMP_HEADER:
            raise ValueError(f"unexpected columns {header}")
        vals = np.zeros((grid.n_modes, grid.dim), dtype=complex)
        for step, basis, re, im in r:
            vals[int(step), int(basis)] = complex(float(re), float(im))
    return AdaptedVectorProcess(grid, vals)
