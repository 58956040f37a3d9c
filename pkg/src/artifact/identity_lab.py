"""Numerical checks of the duality identities for the adjoint pair.

Every check returns an :class:`IdentityReport`.  Quadratures are left-endpoint
sums over the grid cells.  ``convergence_order`` fits the slope of
``log(error)`` against ``log(dt)`` over a refinement sweep.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .backward_adjoint import (
    AdjointData,
    RelaxedSolution,
    TranspositionSolution,
    relaxed_apply,
    relaxed_apply_hat,
)
from .clifford_core import DERIVED_TOL, EXACT_TOL, ModeGrid, brownian_increment, parity_diag, right_increment
from .forward_qsde import LinearCoefficients, ProcessSpace, solve_linear


@dataclass
class IdentityReport:
    name: str
    lhs: complex
    rhs: complex
    abs_error: float
    rel_error: float
    n: int
    N: int
    seed: int | None = None
    tolerance: float = DERIVED_TOL
    passed: bool = False
    extra: dict | None = None

    @classmethod
    def build(cls, name, lhs, rhs, grid: ModeGrid, tolerance=DERIVED_TOL, seed=None, scale=None, extra=None):
        abs_err = float(abs(lhs - rhs))
        ref = scale if scale is not None else max(abs(lhs), abs(rhs))
        rel = abs_err / ref if ref > 0 else abs_err
        return cls(name, complex(lhs), complex(rhs), abs_err, rel, grid.n_modes, grid.n_modes, seed,
                   tolerance, rel <= tolerance, extra)

    def row(self, order=float("nan")) -> dict:
        d = asdict(self)
        return {"name": d["name"], "n": d["n"], "N": d["N"], "seed": d["seed"], "abs_error": d["abs_error"],
                "rel_error": d["rel_error"], "order": order, "pass": d["passed"]}


def convergence_order(dts, errors) -> float:
    """Least-squares slope of ``log(error)`` versus ``log(dt)``.

    Returns ``inf`` when every error is at round-off level (the identity is
    exact at all levels) and ``nan`` for fewer than two usable levels.
    """
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if np.all(errors <= 1e-13):
        return float("inf")
    keep = errors > 0
    if keep.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(dts[keep]), np.log(errors[keep]), 1)
    return float(slope)


def _forward(coeffs, t0, probe):
    xi, u, v = probe
    return solve_linear(xi, u, v, coeffs, t0)


def _p_terms(P, F, dt, k, x1, x2, p1, p2):
    _, u1, v1 = p1
    _, u2, v2 = p2
    return dt[k] * (np.vdot(x1, P @ u2[k]) + np.vdot(u1[k], P @ x2)
                    + np.vdot(v1[k], P @ F @ x2) + np.vdot(F @ x1 + v1[k], P @ v2[k]))


def transposition_sides(sol: TranspositionSolution, data: AdjointData, t0: int, p1, p2):
    grid = data.grid
    dt = grid.deltas
    Y = parity_diag(grid.n_modes)
    c = data.coeffs
    x1 = _forward(c, t0, p1)
    x2 = _forward(c, t0, p2)
    lhs = np.vdot(x1[-1], data.P_T @ x2[-1])
    rhs = np.vdot(p1[0], sol.P[t0] @ p2[0])
    for k in range(t0, grid.n_modes):
        lhs -= dt[k] * np.vdot(x1[k], data.H[k] @ x2[k])
        QY = sol.Q[k] * Y[None, :]
        rhs += _p_terms(sol.P[k], c.F[k], dt, k, x1[k], x2[k], p1, p2)
        rhs += dt[k] * (np.vdot(x1[k], QY @ p2[2][k]) + np.vdot(p1[2][k], QY @ x2[k]))
    return lhs, rhs


def check_transposition_identity(sol, data, t0, p1, p2, tolerance=DERIVED_TOL, seed=None):
    """Seven-term pairing of ``(P, Q)`` against two forward solutions."""
    lhs, rhs = transposition_sides(sol, data, t0, p1, p2)
    return IdentityReport.build("transposition", lhs, rhs, data.grid, tolerance, seed)


def relaxed_sides(R: RelaxedSolution, data: AdjointData, t0: int, p1, p2):
    grid = data.grid
    dt = grid.deltas
    c = data.coeffs
    blk = R.anchor(t0)
    space: ProcessSpace = blk["space"]
    s = 1 << t0
    x1 = _forward(c, t0, p1)
    x2 = _forward(c, t0, p2)
    lhs = np.vdot(x1[-1], data.P_T @ x2[-1])
    rhs = np.vdot(p1[0], R.P[t0] @ p2[0])
    for k in range(t0, grid.n_modes):
        lhs -= dt[k] * np.vdot(x1[k], data.H[k] @ x2[k])
        rhs += _p_terms(R.P[k], c.F[k], dt, k, x1[k], x2[k], p1, p2)
    c1 = [p1[0][:s], space.from_process(p1[1]), space.from_process(p1[2])]
    c2 = [p2[0][:s], space.from_process(p2[1]), space.from_process(p2[2])]
    rhs += space.inner(c1[2], relaxed_apply(R, t0, *c2))
    rhs += space.inner(relaxed_apply_hat(R, t0, *c1), c2[2])
    return lhs, rhs


def check_relaxed_identity(R, data, t0, probes, tolerance=DERIVED_TOL, seed=None):
    """Nine-term pairing; ``probes`` is a list of ``(p1, p2)``.  Reports the worst pair."""
    worst = None
    for p1, p2 in probes:
        lhs, rhs = relaxed_sides(R, data, t0, p1, p2)
        rep = IdentityReport.build("relaxed", lhs, rhs, data.grid, tolerance, seed)
        if worst is None or rep.abs_error > worst.abs_error:
            worst = rep
    return worst


def linear_duality_sides(sol: TranspositionSolution, P_T, g, X, z, w, t0: int):
    """``<P_T, X(T)> - sum <g, X> dt`` against ``sum <P, z> dt + sum <Q, w> dt + <zeta, X0>``."""
    grid = sol.grid
    dt = grid.deltas
    hs = lambda a, b: np.vdot(a, b)
    lhs = hs(P_T, X[-1])
    rhs = hs(sol.zeta, X[t0])
    for k in range(t0, grid.n_modes):
        lhs -= dt[k] * hs(g[k], X[k])
        rhs += dt[k] * (hs(sol.P[k], z[k]) + hs(sol.Q[k], w[k]))
    return lhs, rhs


def check_linear_duality(sol, P_T, g, X, z, w, t0=0, tolerance=DERIVED_TOL, seed=None):
    lhs, rhs = linear_duality_sides(sol, P_T, g, X, z, w, t0)
    res = float(np.sum(sol.residual[t0:] * sol.grid.deltas[t0:]))
    return IdentityReport.build("linear_duality", lhs, rhs, sol.grid, tolerance, seed,
                                extra={"residual_weighted": res})


def rank_one(x1, x2) -> np.ndarray:
    """``x1 (x) x2``: the operator ``y -> <x2, y> x1``."""
    return np.outer(x1, np.conj(x2))


def rank_one_algebra_errors(x1, x2, D, F, Y) -> list:
    """Relative errors of the three algebraic rank-one identities."""
    T = rank_one(x1, x2)
    YF = Y[:, None] * F
    pairs = [
        (rank_one(F @ x1, F @ x2), F @ T @ F.conj().T),
        (rank_one(D @ x1, x2) + rank_one(x1, D @ x2), D @ T + T @ D.conj().T),
        (rank_one(x1, YF @ x2) + rank_one(YF @ x1, x2), T @ YF.conj().T + YF @ T),
    ]
    return [float(np.linalg.norm(a - b) / max(np.linalg.norm(a), 1e-300)) for a, b in pairs]


def propagate_rank_one(coeffs: LinearCoefficients, t0: int, p1, p2, ito: str = "folded"):
    """Propagate ``T`` with drift ``alpha`` and both-sided noise.

    ``ito="folded"`` puts the cross term ``b1 (x) b2 dt`` into ``alpha``;
    ``ito="exact"`` uses the product of the two noise increments instead,
    which reproduces ``x1 (x) x2`` exactly.  Returns ``(T_path, x1, x2)``.
    """
    if ito not in ("folded", "exact"):
        raise ValueError(f"unknown bookkeeping {ito!r}")
    grid = coeffs.grid
    dt = grid.deltas
    Y = parity_diag(grid.n_modes)
    x1 = _forward(coeffs, t0, p1)
    x2 = _forward(coeffs, t0, p2)
    _, u1, v1 = p1
    _, u2, v2 = p2
    T = rank_one(x1[t0], x2[t0])
    path = np.zeros((grid.n_modes + 1,) + T.shape, dtype=complex)
    path[t0] = T
    for k in range(t0, grid.n_modes):
        D, F = coeffs.D[k], coeffs.F[k]
        b1 = F @ x1[k] + v1[k]
        b2 = F @ x2[k] + v2[k]
        alpha = (D @ T + T @ D.conj().T + F @ T @ F.conj().T
                 + rank_one(u1[k], x2[k]) + rank_one(x1[k], u2[k])
                 + rank_one(F @ x1[k], v2[k]) + rank_one(v1[k], F @ x2[k]) + rank_one(v1[k], v2[k]))
        if ito == "exact":
            R = right_increment(grid, k)
            alpha = alpha - F @ T @ F.conj().T - rank_one(F @ x1[k], v2[k]) - rank_one(v1[k], F @ x2[k]) \
                - rank_one(v1[k], v2[k]) + rank_one(R @ b1, R @ b2) / dt[k]
        beta = rank_one(x1[k], Y * b2)
        gamma = rank_one(Y * b1, x2[k])
        L = brownian_increment(grid, k)
        T = T + alpha * dt[k] + beta @ L + L @ gamma
        path[k + 1] = T
    return path, x1, x2


def check_rank_one_ito(p1, p2, coeffs, t0=0, tolerance=DERIVED_TOL, seed=None):
    """Algebraic identities at every step plus the terminal propagation defect.

    ``passed`` reflects only the algebraic identities; the propagation defect
    is a discretization error reported in ``extra``.
    """
    grid = coeffs.grid
    Y = parity_diag(grid.n_modes)
    path, x1, x2 = propagate_rank_one(coeffs, t0, p1, p2)
    alg = 0.0
    for k in range(t0, grid.n_modes):
        alg = max(alg, *rank_one_algebra_errors(x1[k], x2[k], coeffs.D[k], coeffs.F[k], Y))
    exact = rank_one(x1[-1], x2[-1])
    defect = float(np.linalg.norm(path[-1] - exact))
    rep = IdentityReport.build("rank_one_algebra", alg, 0.0, grid, tolerance, seed, scale=1.0,
                               extra={"propagation_defect": defect,
                                      "propagation_rel": defect / max(np.linalg.norm(exact), 1e-300)})
    return rep


def trace_dictionary_errors(P, Q, coeffs, t0, p1, p2) -> dict:
    """Relative errors of the trace translations.

    ``P`` term: ``<P_j, x1 (x) x2>_HS`` vs ``<P_j x2, x1>`` at every grid time.
    ``beta`` term: ``<int Q dW, int beta dW>_HS`` vs ``sum <Q Y (F x2 + v2), x1> dt``.
    The ``gamma`` term is reported for information only.
    """
    grid = coeffs.grid
    dt = grid.deltas
    Y = parity_diag(grid.n_modes)
    x1 = _forward(coeffs, t0, p1)
    x2 = _forward(coeffs, t0, p2)
    _, _, v1 = p1
    _, _, v2 = p2
    perr = 0.0
    for j in range(t0, grid.n_modes + 1):
        a = np.vdot(P[j], rank_one(x1[j], x2[j]))
        b = np.vdot(P[j] @ x2[j], x1[j])
        perr = max(perr, abs(a - b) / max(abs(b), 1e-300))
    d = grid.dim
    IQ = np.zeros((d, d), dtype=complex)
    IB = np.zeros((d, d), dtype=complex)
    IG = np.zeros((d, d), dtype=complex)
    rb = 0j
    rg = 0j
    for k in range(t0, grid.n_modes):
        L = brownian_increment(grid, k)
        F = coeffs.F[k]
        b1 = F @ x1[k] + v1[k]
        b2 = F @ x2[k] + v2[k]
        QY = Q[k] * Y[None, :]
        IQ += Q[k] @ L
        IB += rank_one(x1[k], Y * b2) @ L
        IG += L @ rank_one(Y * b1, x2[k])
        rb += dt[k] * np.vdot(QY @ b2, x1[k])
        rg += dt[k] * np.vdot(QY @ x2[k], b1)
    lb = np.vdot(IQ, IB)
    lg = np.vdot(IQ, IG)
    return {
        "P": perr,
        "beta": float(abs(lb - rb) / max(abs(rb), 1e-300)),
        "gamma_abs": float(abs(lg - rg)),
        "gamma_lhs": complex(lg),
        "gamma_rhs": complex(rg),
    }


def check_trace_dictionary(P, Q, coeffs, t0, p1, p2, tolerance=DERIVED_TOL, seed=None):
    errs = trace_dictionary_errors(P, Q, coeffs, t0, p1, p2)
    worst = max(errs["P"], errs["beta"])
    return IdentityReport.build("trace_dictionary", worst, 0.0, coeffs.grid, tolerance, seed, scale=1.0,
                                extra=errs)


__all__ = [
    "EXACT_TOL",
    "IdentityReport",
    "check_linear_duality",
    "check_rank_one_ito",
    "check_relaxed_identity",
    "check_trace_dictionary",
    "check_transposition_identity",
    "convergence_order",
    "linear_duality_sides",
    "propagate_rank_one",
    "rank_one",
    "rank_one_algebra_errors",
    "relaxed_sides",
    "trace_dictionary_errors",
    "transposition_sides",
]
