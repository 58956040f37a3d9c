import numpy as np
import pytest

from artifact.clifford_core import ModeGrid, is_adapted_operator, vacuum
from artifact.presets import OperatorRecipe, ProbeRecipe, preset_problem, random_problem


def test_recipes_are_level_consistent():
    rec = random_problem(0)
    coarse, fine = ModeGrid.uniform(1.0, 2), ModeGrid.uniform(1.0, 4)
    for jc, jf in ((0, 0), (1, 2)):
        a = rec.D.at(coarse, jc)
        b = rec.D.at(fine, jf)
        # vacuum expectation depends only on the continuous-time recipe
        assert abs(a[0, 0] - b[0, 0]) < 1e-13
        assert abs(np.linalg.norm(a @ vacuum(2)) - np.linalg.norm(b @ vacuum(4))) < 1e-12


def test_sampled_data_is_adapted():
    g = ModeGrid.uniform(1.0, 3)
    data = random_problem(1).adjoint_data(g)
    for k in range(3):
        assert is_adapted_operator(data.coeffs.D[k], k)
        assert is_adapted_operator(data.H[k], k)
    xi, u, v = ProbeRecipe.draw(np.random.default_rng(0)).sample(g, 1)
    assert np.all(u[0] == 0) and np.all(v[0] == 0)


def test_named_presets():
    g = ModeGrid.uniform(1.0, 2)
    np.testing.assert_allclose(preset_problem("scalar").P_T.at(g), np.eye(4))
    assert np.all(preset_problem("zero").adjoint_data(g).P_T == 0)
    with pytest.raises(KeyError):
        preset_problem("nope")


def test_same_seed_same_draw():
    a = OperatorRecipe.draw(np.random.default_rng(3))
    b = OperatorRecipe.draw(np.random.default_rng(3))
    np.testing.assert_array_equal(a.const, b.const)
