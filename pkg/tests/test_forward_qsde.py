import numpy as np
import pytest

from artifact.clifford_core import AdaptednessError, ModeGrid, vacuum
from artifact.forward_qsde import (
    GeneralSystemSpec,
    LinearCoefficients,
    PicardError,
    ProcessSpace,
    flow_U,
    flow_V,
    flow_Xi,
    flow_continuity,
    solve_general,
    solve_hs_forward,
    solve_linear,
)
from artifact.presets import ProbeRecipe, random_problem
from artifact.stochastic_process import random_operator_process

from conftest import crandn


def scalar_coeffs(grid, lam):
    d = grid.dim
    D = np.stack([lam * np.eye(d)] * grid.n_modes)
    return LinearCoefficients(grid, D, np.zeros_like(D))


def test_scalar_drift_closed_form():
    g = ModeGrid.uniform(1.0, 5)
    x = solve_linear(vacuum(5), None, None, scalar_coeffs(g, 0.3))
    # Euler on dx = lam x dt: (1 + lam dt)^N
    assert abs(x[-1][0] - (1 + 0.3 / 5) ** 5) < 1e-14


def test_zero_coefficients_noise_source():
    # dx = v dW with v = Omega: x(T) = W(T) Omega
    g = ModeGrid.uniform(1.0, 3)
    v = np.zeros((3, 8), dtype=complex)
    v[:, 0] = 1.0
    x = solve_linear(np.zeros(8), None, v, LinearCoefficients.zero(g))
    expected = np.zeros(8, dtype=complex)
    expected[[1, 2, 4]] = np.sqrt(1 / 3)
    np.testing.assert_allclose(x[-1], expected, atol=1e-14)


def test_picard_equals_euler():
    g = ModeGrid.uniform(1.0, 4)
    c = random_problem(3).coeffs(g)
    p = ProbeRecipe.draw(np.random.default_rng(0)).sample(g, 0)
    a = solve_linear(*p, c)
    b = solve_linear(*p, c, scheme="picard", maxit=10)
    np.testing.assert_allclose(a, b, atol=1e-13)
    with pytest.raises(PicardError):
        solve_linear(*p, c, scheme="picard", maxit=2)


def test_initial_value_must_be_adapted():
    g = ModeGrid.uniform(1.0, 3)
    xi = np.zeros(8, dtype=complex)
    xi[4] = 1.0
    with pytest.raises(AdaptednessError):
        solve_linear(xi, None, None, LinearCoefficients.zero(g), t0=1)


def test_flow_superposition():
    g = ModeGrid.uniform(1.0, 4)
    c = random_problem(5).coeffs(g)
    t0 = 1
    xi, u, v = ProbeRecipe.draw(np.random.default_rng(2)).sample(g, t0)
    sp = ProcessSpace(g, t0)
    x = solve_linear(xi, u, v, c, t0)
    U, V, X = flow_U(c, t0), flow_V(c, t0), flow_Xi(c, t0)
    y = U.apply(xi[:2]) + V.apply(sp.from_process(u)) + X.apply(sp.from_process(v))
    np.testing.assert_allclose(x, y, atol=1e-12)


def test_process_space_roundtrip_and_adjoint(rng):
    g = ModeGrid((0.0, 0.2, 0.7, 1.0))
    sp = ProcessSpace(g, 1)
    assert sp.dim == 2 + 4
    c = crandn(rng, sp.dim)
    np.testing.assert_allclose(sp.from_process(sp.to_process(c)), c)
    M = crandn(rng, sp.dim, sp.dim)
    a, b = crandn(rng, sp.dim), crandn(rng, sp.dim)
    assert abs(sp.inner(M @ a, b) - sp.inner(a, sp.adjoint(M) @ b)) < 1e-12


def test_flow_continuity_is_zero_for_zero_coefficients():
    g = ModeGrid.uniform(1.0, 3)
    assert flow_continuity(LinearCoefficients.zero(g), 0, 2, vacuum(3)) == 0.0


def test_general_system_checks_adaptedness():
    g = ModeGrid.uniform(1.0, 2)
    zero = lambda t, x, c: np.zeros(4)
    bad = lambda t, x, c: np.eye(4)[3]
    spec = GeneralSystemSpec(g, zero, zero, bad)
    with pytest.raises(AdaptednessError):
        solve_general(spec, vacuum(2))
    ok = GeneralSystemSpec(g, lambda t, x, c: x, zero, zero)
    path = solve_general(ok, vacuum(2))
    assert abs(path[-1][0] - 1.5 ** 2) < 1e-14


def test_hs_forward_report(rng):
    g = ModeGrid.uniform(1.0, 3)
    X0 = np.zeros((8, 8), dtype=complex)
    X0[0, 0] = 2.0
    z = random_operator_process(g, rng)
    w = random_operator_process(g, rng)
    path, rep = solve_hs_forward(g, X0, z, w)
    assert path.shape == (4, 8, 8)
    assert 0 < rep["ratio"] <= 1.0 + 1e-12
