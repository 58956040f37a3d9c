"""Backward equations for the operator-valued adjoint pair ``(P, Q)``.

Operators adapted to step ``k`` are stored zero-extended: ``Pi_k A Pi_k = A``
where ``Pi_k`` projects onto subsets of modes ``0..k-1``.  Conditional
expectation of an operator is the compression ``Pi_k A Pi_k``, which is the
Hilbert-Schmidt orthogonal projection onto that subspace.

One backward step splits ``M = P_{k+1} - (drift) dt`` into an adapted part,
a part ``Q L(dW_k)`` and a residual.  The residual is generally nonzero:
adapted operators and ``Q L(dW)`` together only span half of the operators
on the next cell's space.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .clifford_core import (
    EXACT_TOL,
    AdaptednessError,
    ModeGrid,
    adapted_mask,
    brownian_increment,
    parity_diag,
)
from .forward_qsde import LinearCoefficients, ProcessSpace, flow_U, flow_V, flow_Xi
from .stochastic_process import compress_steps


class RefinementNeeded(RuntimeError):
    def __init__(self, message, suggested_N):
        super().__init__(f"{message}; try N >= {suggested_N}")
        self.suggested_N = suggested_N


class BDiscrepancyError(RuntimeError):
    def __init__(self, message, B_from_Q, B_from_P):
        super().__init__(message)
        self.B_from_Q = B_from_Q
        self.B_from_P = B_from_P


class MissingAnchorError(KeyError):
    pass


def _compress(a, n, k):
    mask = adapted_mask(n, k)
    return a * np.outer(mask, mask)


@dataclass(frozen=True)
class AdjointData:
    P_T: np.ndarray
    H: np.ndarray
    coeffs: LinearCoefficients

    def __post_init__(self):
        grid = self.coeffs.grid
        P_T = np.asarray(self.P_T, dtype=complex)
        if P_T.shape != (grid.dim, grid.dim):
            raise ValueError("terminal operator has the wrong shape")
        object.__setattr__(self, "P_T", P_T)
        object.__setattr__(self, "H", compress_steps(grid, self.H))

    @property
    def grid(self) -> ModeGrid:
        return self.coeffs.grid

    def scale(self) -> float:
        """``||P_T||_op + int ||H||_op dt``."""
        h = np.array([np.linalg.norm(a, 2) for a in self.H])
        return float(np.linalg.norm(self.P_T, 2) + np.sum(h * self.grid.deltas))


@dataclass
class TranspositionSolution:
    grid: ModeGrid
    P: np.ndarray
    Q: np.ndarray
    zeta: np.ndarray
    residual: np.ndarray
    t0: int = 0
    info: dict = field(default_factory=dict)


def _q_from_next(Pn, L, n, k, dt):
    """Adapted ``Q`` with ``Pi_k (Pn L) Pi_k = Q dt``.

    Adapted parts of the increment drop out of this projection, so only
    ``P_{k+1}`` is needed.
    """
    return _compress(Pn @ L, n, k) / dt


def _residual(M, Pk, Qk, L):
    return float(np.linalg.norm(M - Pk - Qk @ L))


def solve_linear_bqsde(grid: ModeGrid, P_T, g, t0: int = 0) -> TranspositionSolution:
    """Backward recursion for ``dP = g dt + Q dW``, ``P(T) = P_T``."""
    N, d = grid.n_modes, grid.dim
    g = compress_steps(grid, g)
    P = np.zeros((N + 1, d, d), dtype=complex)
    Q = np.zeros((N, d, d), dtype=complex)
    res = np.zeros(N)
    P[N] = np.asarray(P_T, dtype=complex)
    dt = grid.deltas
    for k in range(N - 1, t0 - 1, -1):
        L = brownian_increment(grid, k)
        M = P[k + 1] - g[k] * dt[k]
        P[k] = _compress(M, N, k)
        Q[k] = _q_from_next(M, L, N, k, dt[k])
        res[k] = _residual(M, P[k], Q[k], L)
    return TranspositionSolution(grid, P, Q, P[t0].copy(), res, t0)


def driver(P, Q, D, F, H, Y):
    """``f(P, Q) = -PD - D*P - F*Q Y - Q Y F - F*P F + H`` with ``Y`` the grading."""
    Fh = F.conj().T
    QY = Q * Y[None, :]
    return -P @ D - D.conj().T @ P - Fh @ QY - QY @ F - Fh @ P @ F + H


def solve_adjoint_bqsde(data: AdjointData, t0: int = 0, mode: str = "implicit",
                        tol: float = 1e-12, maxit: int = 200) -> TranspositionSolution:
    """Backward recursion for the adjoint equation with driver :func:`driver`.

    ``mode="implicit"`` solves ``P_k = E_k[P_{k+1}] - f(P_k, Q_k) dt`` by
    fixed-point iteration; ``mode="explicit"`` evaluates ``f`` at
    ``E_k[P_{k+1}]``.
    """
    if mode not in ("implicit", "explicit"):
        raise ValueError(f"unknown mode {mode!r}")
    grid = data.grid
    N, d = grid.n_modes, grid.dim
    D, F, H = data.coeffs.D, data.coeffs.F, data.H
    Yfull = parity_diag(N)
    P = np.zeros((N + 1, d, d), dtype=complex)
    Q = np.zeros((N, d, d), dtype=complex)
    res = np.zeros(N)
    iters = np.zeros(N, dtype=int)
    P[N] = data.P_T
    dt = grid.deltas
    for k in range(N - 1, t0 - 1, -1):
        Y = Yfull * adapted_mask(N, k)
        L = brownian_increment(grid, k)
        base = _compress(P[k + 1], N, k)
        Q[k] = _q_from_next(P[k + 1], L, N, k, dt[k])
        if mode == "explicit":
            Pk = base - driver(base, Q[k], D[k], F[k], H[k], Y) * dt[k]
        else:
            lip = 2 * np.linalg.norm(D[k], 2) + np.linalg.norm(F[k], 2) ** 2
            rate = lip * dt[k]
            if rate >= 1.0:
                raise RefinementNeeded(
                    f"step {k}: contraction rate {rate:.3f} >= 1",
                    int(math.ceil(grid.T * lip * 2)) + 1,
                )
            Pk = base.copy()
            for it in range(maxit):
                new = base - driver(Pk, Q[k], D[k], F[k], H[k], Y) * dt[k]
                delta = np.linalg.norm(new - Pk)
                Pk = new
                if delta <= tol * max(1.0, np.linalg.norm(Pk)):
                    break
            else:
                raise RefinementNeeded(f"step {k}: fixed point did not settle (last change {delta:.2e})",
                                       2 * N)
            iters[k] = it + 1
        P[k] = _compress(Pk, N, k)
        M = P[k + 1] - driver(P[k], Q[k], D[k], F[k], H[k], Y) * dt[k]
        res[k] = _residual(M, P[k], Q[k], L)
    return TranspositionSolution(grid, P, Q, P[t0].copy(), res, t0, {"mode": mode, "iterations": iters})


def representation_P(data: AdjointData, t0: int = 0) -> np.ndarray:
    """``P(t0)`` from the flow: ``E[U* P_T U - sum_k U_k* H_k U_k dt | t0]``."""
    grid = data.grid
    U = flow_U(data.coeffs, t0).matrices
    dt = grid.deltas
    s = 1 << t0
    acc = U[-1].conj().T @ data.P_T @ U[-1]
    for k in range(t0, grid.n_modes):
        acc -= (U[k].conj().T @ data.H[k] @ U[k]) * dt[k]
    out = np.zeros((grid.dim, grid.dim), dtype=complex)
    out[:s, :s] = acc
    return out


def representation_path(data: AdjointData, t0: int = 0) -> np.ndarray:
    """:func:`representation_P` at every grid index from ``t0`` to ``N``."""
    N = data.grid.n_modes
    out = np.zeros((N + 1, data.grid.dim, data.grid.dim), dtype=complex)
    for j in range(t0, N + 1):
        out[j] = representation_P(data, j)
    return out


def galerkin_projector(dim: int, n: int) -> np.ndarray:
    g = np.zeros(dim)
    g[:n] = 1.0
    return np.diag(g).astype(complex)


def galerkin_truncate(data: AdjointData, n: int) -> AdjointData:
    """Apply the rank-``n`` coordinate projection to ``P_T`` and every ``H_k`` (from the left)."""
    dim = data.grid.dim
    if n < 0:
        raise ValueError("rank must be non-negative")
    if n > dim:
        warnings.warn(f"rank {n} exceeds dimension {dim}; clamped", stacklevel=2)
        n = dim
    G = galerkin_projector(dim, n)
    return AdjointData(G @ data.P_T, np.einsum("ab,kbc->kac", G, data.H), data.coeffs)


def galerkin_convergence_study(data: AdjointData, ranks, probes, t0: int = 0, solver: str = "recursion"):
    """Rows ``(rank, sup_t ||P^n(t) xi - P(t) xi|| per probe)`` against the untruncated solve."""

    def solve(dat):
        if solver == "recursion":
            return solve_adjoint_bqsde(dat, t0).P
        return representation_path(dat, t0)

    ref = solve(data)
    probes = np.atleast_2d(np.asarray(probes, dtype=complex))
    rows = []
    for n in ranks:
        Pn = solve(galerkin_truncate(data, n))
        diff = np.einsum("jab,pb->pja", Pn[t0:] - ref[t0:], probes)
        errs = np.max(np.linalg.norm(diff, axis=2), axis=1)
        rows.append((int(n), errs))
    return rows


@dataclass
class RelaxedSolution:
    """``P`` plus per-anchor operator blocks realizing the relaxed ``Q`` family."""

    grid: ModeGrid
    P: np.ndarray
    blocks: dict = field(default_factory=dict)

    def anchor(self, t0):
        if t0 not in self.blocks:
            raise MissingAnchorError(f"anchor {t0} not assembled")
        return self.blocks[t0]


def assemble_Q_blocks(sol: TranspositionSolution, coeffs: LinearCoefficients, t0: int) -> dict:
    """Blocks ``Q1, Q1hat`` (from ``L^2`` at ``t0``) and ``Q2, Q2hat`` (on processes)."""
    grid = sol.grid
    N = grid.n_modes
    Y = parity_diag(N)
    space = ProcessSpace(grid, t0)
    U = flow_U(coeffs, t0).matrices
    V = flow_V(coeffs, t0).matrices
    s = 1 << t0
    Q1 = np.zeros((space.dim, s), dtype=complex)
    Q1h = np.zeros_like(Q1)
    Q2 = np.zeros((space.dim, space.dim), dtype=complex)
    Q2h = np.zeros_like(Q2)
    for k in space.steps:
        o, w = space.offsets[k], 1 << k
        QY = sol.Q[k] * Y[None, :]
        YQh = Y[:, None] * sol.Q[k].conj().T
        Q1[o:o + w] = (QY @ U[k])[:w]
        Q1h[o:o + w] = (YQh @ U[k])[:w]
        Q2[o:o + w] = (QY @ V[k])[:w]
        Q2h[o:o + w] = (YQh @ V[k])[:w]
    return {"Q1": Q1, "Q1hat": Q1h, "Q2": Q2, "Q2hat": Q2h, "space": space}


def bilinear_from_Q(sol: TranspositionSolution, coeffs: LinearCoefficients, t0: int) -> np.ndarray:
    """``B[i, j] = int <Q Y x_j, v_i> + int <Q Y v_j, x_i>`` with ``x = Xi v``."""
    grid = sol.grid
    Y = parity_diag(grid.n_modes)
    space = ProcessSpace(grid, t0)
    E = space.embedding()
    X = flow_Xi(coeffs, t0).matrices
    dt = grid.deltas
    B = np.zeros((space.dim, space.dim), dtype=complex)
    for k in space.steps:
        QY = sol.Q[k] * Y[None, :]
        B += dt[k] * (E[k].conj().T @ QY @ X[k] + X[k].conj().T @ QY @ E[k])
    return B


def bilinear_from_P(P, data: AdjointData, t0: int) -> np.ndarray:
    """Same form evaluated through ``P``, ``P_T`` and ``H``:

    ``<P_T x_j(T), x_i(T)> - int <P F x_j, v_i> - int <H x_j, x_i> - int <P v_j, F x_i + v_i>``.
    """
    grid = data.grid
    space = ProcessSpace(grid, t0)
    E = space.embedding()
    X = flow_Xi(data.coeffs, t0).matrices
    F = data.coeffs.F
    dt = grid.deltas
    B = X[-1].conj().T @ data.P_T @ X[-1]
    for k in space.steps:
        B -= dt[k] * (E[k].conj().T @ P[k] @ F[k] @ X[k]
                      + X[k].conj().T @ data.H[k] @ X[k]
                      + (F[k] @ X[k] + E[k]).conj().T @ P[k] @ E[k])
    return B


def assemble_B_and_Q3(sol: TranspositionSolution, data: AdjointData, t0: int, source: str = "P",
                      strict: bool = False, tol: float = 1e-10) -> dict:
    """Riesz representer of the bilinear form and ``Q3 = Qhat3 / 2``.

    ``source`` picks which assembly defines ``Qhat3``; both are returned
    with their relative discrepancy.
    """
    space = ProcessSpace(data.grid, t0)
    BQ = bilinear_from_Q(sol, data.coeffs, t0)
    BP = bilinear_from_P(sol.P, data, t0)
    scale = max(np.linalg.norm(BP), np.linalg.norm(BQ), 1e-300)
    disc = float(np.linalg.norm(BP - BQ) / scale)
    if strict and disc > tol:
        raise BDiscrepancyError(f"bilinear assemblies differ by {disc:.3e}", BQ, BP)
    B = BP if source == "P" else BQ
    w = space.weights
    Qhat3 = B / w[:, None] if space.dim else B
    Q3 = 0.5 * Qhat3
    Q3star = 0.5 * (B.conj().T / w[:, None]) if space.dim else B
    return {"B": B, "B_from_Q": BQ, "B_from_P": BP, "discrepancy": disc,
            "Qhat3": Qhat3, "Q3": Q3, "Q3star": Q3star, "space": space}


def assemble_relaxed(sol: TranspositionSolution, data: AdjointData, anchors=None,
                     source: str = "P") -> RelaxedSolution:
    grid = data.grid
    anchors = range(grid.n_modes) if anchors is None else anchors
    R = RelaxedSolution(grid, sol.P)
    for t0 in anchors:
        blk = assemble_Q_blocks(sol, data.coeffs, t0)
        blk.update(assemble_B_and_Q3(sol, data, t0, source))
        R.blocks[t0] = blk
    return R


def relaxed_apply(R: RelaxedSolution, t0: int, xi, u, v) -> np.ndarray:
    """``Q1 xi + Q2 u + Q3 v`` in process coordinates."""
    b = R.anchor(t0)
    return b["Q1"] @ xi + b["Q2"] @ u + b["Q3"] @ v


def relaxed_apply_hat(R: RelaxedSolution, t0: int, xi, u, v) -> np.ndarray:
    """``Q1hat xi + Q2hat u + Q3^* v`` in process coordinates."""
    b = R.anchor(t0)
    return b["Q1hat"] @ xi + b["Q2hat"] @ u + b["Q3star"] @ v


def adjoint_condition_error(R: RelaxedSolution, t0: int) -> float:
    """Relative mismatch between the weighted adjoint of ``Q3`` and the stored hat block."""
    b = R.anchor(t0)
    space = b["space"]
    if space.dim == 0:
        return 0.0
    adj = space.adjoint(b["Q3"])
    return float(np.linalg.norm(adj - b["Q3star"]) / max(np.linalg.norm(b["Q3star"]), 1e-300))


def relaxed_block_norm(R: RelaxedSolution, t0: int) -> float:
    """Operator norm of ``(xi, u, v) -> Q^{(t0)}`` and of its hat twin, whichever is larger.

    Process coordinates carry the cell-length weights, ``xi`` the plain norm.
    """
    b = R.anchor(t0)
    space = b["space"]
    if space.dim == 0:
        return 0.0
    w = np.sqrt(space.weights)
    out = 0.0
    for q1, q2, q3 in (("Q1", "Q2", "Q3"), ("Q1hat", "Q2hat", "Q3star")):
        M = np.hstack([b[q1], b[q2] / w[None, :], b[q3] / w[None, :]]) * w[:, None]
        out = max(out, float(np.linalg.norm(M, 2)))
    return out


def a_priori_ratio(P, R: RelaxedSolution, data: AdjointData, t0: int = 0) -> dict:
    """``(sup_t ||P(t)|| + max anchor block norm) / (||P_T|| + int ||H|| dt)``."""
    p = max(float(np.linalg.norm(a, 2)) for a in P[t0:])
    q = max((relaxed_block_norm(R, a) for a in R.blocks), default=0.0)
    den = data.scale()
    return {"P_sup": p, "Q_sup": q, "data": den, "ratio": (p + q) / den if den > 0 else float("inf")}
