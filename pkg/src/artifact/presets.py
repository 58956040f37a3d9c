"""Coefficient and data presets defined in continuous time.

Every preset is a recipe, drawn once from a seed, that can be sampled on
any grid.  Random coefficients are polynomials in ``t`` times operators
built from ``I``, the grading, and left/right multiplication by ``W(t)``;
sampling at left endpoints keeps them adapted, and the same seed gives
the same continuous-time data at every refinement level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backward_adjoint import AdjointData
from .clifford_core import ModeGrid, brownian_motion, parity, right_mul_matrix, vacuum
from .forward_qsde import LinearCoefficients

PRESETS = ("zero", "scalar", "field", "random")


def _cplx(rng, size=None):
    return rng.standard_normal(size) + 1j * rng.standard_normal(size)


def _noise_ops(grid: ModeGrid, j: int):
    """``I``, ``Y``, ``L(W(t_j))``, ``R(W(t_j))`` as full matrices."""
    d = grid.dim
    LW = brownian_motion(grid, j)
    RW = right_mul_matrix(LW[:, 0])
    return np.eye(d, dtype=complex), parity(grid.n_modes), LW, RW


@dataclass(frozen=True)
class OperatorRecipe:
    """``A(t) = sum_i (c_i + s_i t) B_i`` over the noise-operator family."""

    const: np.ndarray
    slope: np.ndarray

    @classmethod
    def draw(cls, rng, scale=1.0):
        return cls(scale * _cplx(rng, 5) / np.sqrt(10), scale * _cplx(rng, 5) / np.sqrt(10))

    def at(self, grid: ModeGrid, j: int) -> np.ndarray:
        I, Y, LW, RW = _noise_ops(grid, j)
        t = grid.times[j]
        c = self.const + self.slope * t
        return c[0] * I + c[1] * Y + c[2] * LW + c[3] * RW + c[4] * (LW @ RW) / max(grid.T, 1e-300)

    def sample(self, grid: ModeGrid) -> np.ndarray:
        return np.stack([self.at(grid, k) for k in range(grid.n_modes)]) if grid.n_modes else \
            np.zeros((0, grid.dim, grid.dim), dtype=complex)


@dataclass(frozen=True)
class TerminalRecipe:
    """``P_T = sum c_ij L(w_i) R(w_j) + c_Y Y`` with ``w = (1, W(T)/sqrt(T))``."""

    coef: np.ndarray
    cy: complex

    @classmethod
    def draw(cls, rng, scale=1.0):
        return cls(scale * _cplx(rng, (2, 2)) / 2.0, complex(scale * _cplx(rng) / 2.0))

    def at(self, grid: ModeGrid) -> np.ndarray:
        I, Y, LW, RW = _noise_ops(grid, grid.n_modes)
        s = np.sqrt(grid.T)
        L = (I, LW / s)
        R = (I, RW / s)
        out = self.cy * Y
        for i in range(2):
            for j in range(2):
                out = out + self.coef[i, j] * (L[i] @ R[j])
        return out


@dataclass(frozen=True)
class VectorRecipe:
    """``x(t) = (a + b t) Omega + (c + e t) W(t) Omega``."""

    coef: np.ndarray

    @classmethod
    def draw(cls, rng, scale=1.0):
        return cls(scale * _cplx(rng, 4) / 2.0)

    def at(self, grid: ModeGrid, j: int) -> np.ndarray:
        t = grid.times[j]
        a, b, c, e = self.coef
        om = vacuum(grid.n_modes)
        return (a + b * t) * om + (c + e * t) * (brownian_motion(grid, j) @ om)

    def sample(self, grid: ModeGrid) -> np.ndarray:
        return np.stack([self.at(grid, k) for k in range(grid.n_modes)]) if grid.n_modes else \
            np.zeros((0, grid.dim), dtype=complex)


@dataclass(frozen=True)
class RankOneRecipe:
    """``A(t) = |a(t)><b(t)|``: Hilbert-Schmidt norm bounded uniformly in the grid."""

    a: VectorRecipe
    b: VectorRecipe

    @classmethod
    def draw(cls, rng, scale=1.0):
        return cls(VectorRecipe.draw(rng, scale), VectorRecipe.draw(rng, 1.0))

    def at(self, grid: ModeGrid, j: int) -> np.ndarray:
        return np.outer(self.a.at(grid, j), np.conj(self.b.at(grid, j)))

    def sample(self, grid: ModeGrid) -> np.ndarray:
        return np.stack([self.at(grid, k) for k in range(grid.n_modes)]) if grid.n_modes else \
            np.zeros((0, grid.dim, grid.dim), dtype=complex)


@dataclass(frozen=True)
class ProblemRecipe:
    D: OperatorRecipe
    F: OperatorRecipe
    H: OperatorRecipe
    P_T: TerminalRecipe

    def coeffs(self, grid: ModeGrid) -> LinearCoefficients:
        return LinearCoefficients(grid, self.D.sample(grid), self.F.sample(grid))

    def adjoint_data(self, grid: ModeGrid) -> AdjointData:
        return AdjointData(self.P_T.at(grid), self.H.sample(grid), self.coeffs(grid))


def _fixed(values) -> OperatorRecipe:
    v = np.zeros(5, dtype=complex)
    for i, x in values.items():
        v[i] = x
    return OperatorRecipe(v, np.zeros(5, dtype=complex))


def random_problem(seed: int, scale: float = 0.5, drift: bool = True, diffusion: bool = True,
                   source: bool = True) -> ProblemRecipe:
    rng = np.random.default_rng(seed)
    D = OperatorRecipe.draw(rng, scale)
    F = OperatorRecipe.draw(rng, scale)
    H = OperatorRecipe.draw(rng, scale)
    PT = TerminalRecipe.draw(rng, 1.0)
    zero = _fixed({})
    return ProblemRecipe(D if drift else zero, F if diffusion else zero, H if source else zero, PT)


def preset_problem(name: str, lam: float = 0.3, seed: int = 0, scale: float = 0.5) -> ProblemRecipe:
    """Named presets: ``zero``, ``scalar`` (``D = lam I``, ``P_T = I``), ``field``, ``random``."""
    if name == "zero":
        return ProblemRecipe(_fixed({}), _fixed({}), _fixed({}), TerminalRecipe(np.zeros((2, 2)), 0j))
    if name == "scalar":
        return ProblemRecipe(_fixed({0: lam}), _fixed({}), _fixed({}),
                             TerminalRecipe(np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex), 0j))
    if name == "field":
        return ProblemRecipe(_fixed({2: lam}), _fixed({2: lam}), _fixed({}),
                             TerminalRecipe(np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex), 0j))
    if name == "random":
        return random_problem(seed, scale)
    raise KeyError(f"unknown preset {name!r}; expected one of {PRESETS}")


@dataclass(frozen=True)
class ProbeRecipe:
    """Forward data ``(xi, u, v)`` in continuous time."""

    xi: VectorRecipe
    u: VectorRecipe
    v: VectorRecipe

    @classmethod
    def draw(cls, rng, scale=1.0):
        return cls(VectorRecipe.draw(rng, scale), VectorRecipe.draw(rng, scale), VectorRecipe.draw(rng, scale))

    def sample(self, grid: ModeGrid, t0: int):
        xi = self.xi.at(grid, t0)
        u = self.u.sample(grid)
        v = self.v.sample(grid)
        u[:t0] = 0
        v[:t0] = 0
        return xi, u, v
