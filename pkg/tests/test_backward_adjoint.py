import math
import warnings

import numpy as np
import pytest

from artifact.backward_adjoint import (
    AdjointData,
    BDiscrepancyError,
    MissingAnchorError,
    RefinementNeeded,
    TranspositionSolution,
    adjoint_condition_error,
    assemble_B_and_Q3,
    assemble_relaxed,
    bilinear_from_P,
    bilinear_from_Q,
    galerkin_convergence_study,
    galerkin_truncate,
    relaxed_apply,
    relaxed_apply_hat,
    representation_P,
    representation_path,
    solve_adjoint_bqsde,
    solve_linear_bqsde,
)
from artifact.clifford_core import ModeGrid, adapted_mask, brownian_increment
from artifact.forward_qsde import LinearCoefficients, ProcessSpace
from artifact.presets import preset_problem, random_problem

from conftest import crandn


def test_scalar_closed_forms():
    lam, N = 0.3, 6
    g = ModeGrid.uniform(1.0, N)
    data = preset_problem("scalar", lam).adjoint_data(g)
    imp = solve_adjoint_bqsde(data).P[0][0, 0]
    exp = solve_adjoint_bqsde(data, mode="explicit").P[0][0, 0]
    rep = representation_P(data)[0, 0]
    dt = 1 / N
    assert abs(imp - (1 - 2 * lam * dt) ** -N) < 1e-10
    assert abs(exp - (1 + 2 * lam * dt) ** N) < 1e-12
    assert abs(rep - (1 + lam * dt) ** (2 * N)) < 1e-12


def test_identity_terminal_zero_drift():
    g = ModeGrid.uniform(1.0, 3)
    data = preset_problem("scalar", 0.0).adjoint_data(g)
    sol = solve_adjoint_bqsde(data)
    for k in range(4):
        np.testing.assert_allclose(sol.P[k], np.diag(adapted_mask(3, k)).astype(complex), atol=1e-14)
    assert np.all(sol.residual >= 0)
    np.testing.assert_allclose(sol.Q, 0, atol=1e-14)


def test_no_drift_no_diffusion_agrees_with_representation():
    g = ModeGrid.uniform(1.0, 4)
    data = random_problem(2, drift=False, diffusion=False).adjoint_data(g)
    rec = solve_adjoint_bqsde(data).P
    rep = representation_path(data)
    np.testing.assert_allclose(rec, rep, atol=1e-12)


def test_time_consistency_and_zeta():
    g = ModeGrid.uniform(1.0, 4)
    data = random_problem(4).adjoint_data(g)
    a = solve_adjoint_bqsde(data, 0)
    b = solve_adjoint_bqsde(data, 2)
    np.testing.assert_allclose(a.P[2:], b.P[2:], atol=1e-12)
    np.testing.assert_allclose(a.Q[2:], b.Q[2:], atol=1e-12)
    np.testing.assert_array_equal(b.zeta, b.P[2])


def test_refinement_needed_on_coarse_grid():
    g = ModeGrid.uniform(1.0, 2)
    data = preset_problem("scalar", 2.0).adjoint_data(g)
    with pytest.raises(RefinementNeeded) as info:
        solve_adjoint_bqsde(data)
    assert info.value.suggested_N > 2


def test_linear_bqsde_q_extraction(rng):
    # P_T = X L(dW_k) with X adapted to k: Q_k = X and the remainder vanishes at step k
    g = ModeGrid.uniform(1.0, 3)
    X = np.zeros((8, 8), dtype=complex)
    X[:4, :4] = crandn(rng, 4, 4)
    P_T = X @ brownian_increment(g, 2)
    sol = solve_linear_bqsde(g, P_T, np.zeros((3, 8, 8)))
    np.testing.assert_allclose(sol.Q[2], X, atol=1e-12)
    assert sol.residual[2] < 1e-12


def test_linear_duality_defect_oracle(rng):
    """Left-endpoint defect equals sum_k dt^2 <g_k, z_k> (telescoping the backward step)."""
    from artifact.forward_qsde import solve_hs_forward
    from artifact.identity_lab import linear_duality_sides
    from artifact.stochastic_process import random_operator_process

    g = ModeGrid.uniform(1.0, 3)
    G = random_operator_process(g, rng).values
    z = random_operator_process(g, rng).values
    w = random_operator_process(g, rng).values
    P_T = crandn(rng, 8, 8)
    X0 = np.zeros((8, 8), dtype=complex)
    X0[0, 0] = 1.0
    sol = solve_linear_bqsde(g, P_T, G)
    X, _ = solve_hs_forward(g, X0, z, w)
    lhs, rhs = linear_duality_sides(sol, P_T, G, X, z, w, 0)
    oracle = sum(g.deltas[k] ** 2 * np.vdot(G[k], z[k]) for k in range(3))
    assert abs((lhs - rhs) - oracle) < 1e-12


def test_galerkin_full_rank_and_clamp():
    g = ModeGrid.uniform(1.0, 2)
    data = random_problem(1).adjoint_data(g)
    xi = np.eye(4, dtype=complex)
    rows = galerkin_convergence_study(data, [0, 2, 4], xi)
    assert rows[-1][1].max() < 1e-12
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        t = galerkin_truncate(data, 9)
    assert caught and np.allclose(t.P_T, data.P_T)
    with pytest.raises(ValueError):
        galerkin_truncate(data, -1)


def test_relaxed_blocks():
    g = ModeGrid.uniform(1.0, 3)
    data = random_problem(6).adjoint_data(g)
    sol = solve_adjoint_bqsde(data)
    R = assemble_relaxed(sol, data, [0, 1])
    sp = ProcessSpace(g, 1)
    z = np.zeros(sp.dim)
    np.testing.assert_allclose(relaxed_apply(R, 1, np.zeros(2), z, z), 0)
    xi = np.array([1.0, 0.0])
    np.testing.assert_allclose(relaxed_apply(R, 1, xi, z, z), R.blocks[1]["Q1"] @ xi)
    for t in (0, 1):
        assert adjoint_condition_error(R, t) < 1e-12
    rng = np.random.default_rng(0)
    v1, v2 = crandn(rng, sp.dim), crandn(rng, sp.dim)
    left = sp.inner(v1, relaxed_apply(R, 1, np.zeros(2), z, v2))
    right = sp.inner(relaxed_apply_hat(R, 1, np.zeros(2), z, v1), v2)
    assert abs(left - right) < 1e-12
    with pytest.raises(MissingAnchorError):
        R.anchor(2)


def test_bilinear_assemblies_agree_without_noise():
    g = ModeGrid.uniform(1.0, 3)
    data = random_problem(8, drift=True, diffusion=False).adjoint_data(g)
    data0 = AdjointData(np.eye(8), np.zeros((3, 8, 8)), LinearCoefficients.zero(g))
    sol = solve_adjoint_bqsde(data0)
    # P_T = I and no coefficients: Q = 0, and the terminal term cancels the P term
    BQ = bilinear_from_Q(sol, data0.coeffs, 0)
    BP = bilinear_from_P(sol.P, data0, 0)
    np.testing.assert_allclose(BQ, 0, atol=1e-14)
    np.testing.assert_allclose(BP, 0, atol=1e-12)
    out = assemble_B_and_Q3(solve_adjoint_bqsde(data), data, 0)
    assert out["discrepancy"] >= 0
    sol = solve_adjoint_bqsde(data)
    with pytest.raises(BDiscrepancyError):
        assemble_B_and_Q3(sol, data, 0, strict=True)


def _one_step_gap(T, twisted):
    """Gap between the driver step and the exact discrete adjoint step at k = 2 of 3."""
    from artifact.backward_adjoint import driver
    from artifact.clifford_core import parity_diag, right_increment, right_mul_matrix

    rng = np.random.default_rng(0)
    n, k, s = 3, 2, 4

    def adapted():
        a = np.zeros((8, 8), dtype=complex)
        a[:s, :s] = 0.5 * crandn(rng, s, s)
        return a

    A, B, D, F = adapted(), adapted(), adapted(), adapted()
    Rk = right_mul_matrix(np.eye(8)[1 << k])
    lift = lambda X: X + Rk @ X @ Rk.conj().T
    g = ModeGrid((0.0, T / 3, 2 * T / 3, T))
    dt = g.deltas[k]
    L, R = brownian_increment(g, k), right_increment(g, k)
    mode_block = -Rk @ A @ Rk.conj().T if twisted else Rk @ A @ Rk.conj().T
    Pn = A + mode_block + lift(B) @ L
    mask = np.outer(adapted_mask(n, k), adapted_mask(n, k))
    Q = (Pn @ L) * mask / dt
    np.testing.assert_allclose(Q, B, atol=1e-12)
    Y = parity_diag(n) * adapted_mask(n, k)
    Pk = base = Pn * mask
    for _ in range(200):
        Pk = base - driver(Pk, Q, D, F, np.zeros_like(D), Y) * dt
    step = np.eye(8) + D * dt + R @ F
    exact = (step.conj().T @ Pn @ step) * mask
    return np.linalg.norm(exact - Pk)


def test_driver_is_second_order_locally_on_right_module_operators():
    a, b = _one_step_gap(0.02, False), _one_step_gap(0.01, False)
    assert 3.5 < a / b < 4.5


def test_driver_misses_the_occupied_block():
    # P_{k+1} acting with opposite sign on the occupied mode: local error is first order only
    a, b = _one_step_gap(0.02, True), _one_step_gap(0.01, True)
    assert 1.8 < a / b < 2.2
