import numpy as np
import pytest

from schro_ldp.errors import ValidationError
from schro_ldp.measures import DiscreteMeasure, cost_matrix
from schro_ldp.ot_dual import DualPotentials, c_superdiff_residual, c_transform, ot_solve_exact
from tests.conftest import random_measure


class TestCTransform:
    def test_values_and_argmin(self):
        values, idx = c_transform([0.0, 0.0], [0.0, 1.0], [0.25, 2.0], return_argmin=True)
        np.testing.assert_allclose(values, [0.03125, 0.5])
        np.testing.assert_array_equal(idx, [0, 1])

    def test_ties_go_to_lowest_index(self):
        _, idx = c_transform([0.0, 0.0], [0.0, 1.0], 0.5, return_argmin=True)
        assert idx[0] == 0

    def test_minus_infinity_never_attains(self):
        values = c_transform([-np.inf, 0.0], [0.0, 1.0], 0.0)
        assert values[0] == pytest.approx(0.5)

    def test_requires_a_finite_value(self):
        with pytest.raises(ValidationError):
            c_transform([-np.inf], [0.0], 0.0)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            c_transform([0.0, 1.0], [0.0], 0.0)


class TestExactOT:
    def test_duality_and_complementary_slackness(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            d = int(rng.integers(1, 3))
            mu0 = random_measure(rng, int(rng.integers(2, 13)), d)
            mu1 = random_measure(rng, int(rng.integers(2, 13)), d)
            plan, duals = ot_solve_exact(mu0, mu1)
            assert plan.total_cost() == pytest.approx(duals.dual_value(), abs=1e-9)
            for pair in plan.support_pairs():
                assert abs(c_superdiff_residual(duals, pair)) <= 1e-9
            slack = cost_matrix(mu0, mu1) - duals.psi_c[:, None] - duals.psi[None, :]
            assert slack.min() >= -1e-10

    def test_potentials_are_normalized_c_transforms(self):
        rng = np.random.default_rng(5)
        mu0, mu1 = random_measure(rng, 6, 2), random_measure(rng, 5, 2)
        _, duals = ot_solve_exact(mu0, mu1)
        assert duals.normalized
        assert mu0.integrate(duals.psi_c) == pytest.approx(mu1.integrate(duals.psi), abs=1e-12)
        np.testing.assert_allclose(duals.psi_c, c_transform(duals.psi, mu1.points, mu0.points), atol=1e-12)

    def test_dirac_to_symmetric_pair(self, follmer_pair):
        plan, duals = ot_solve_exact(*follmer_pair)
        np.testing.assert_allclose(plan.plan, [[0.5, 0.5]])
        np.testing.assert_allclose(duals.psi, [0.25, 0.25], atol=1e-12)
        np.testing.assert_allclose(duals.psi_c, [0.25], atol=1e-12)

    def test_monotone_plan_in_one_dimension(self):
        mu0 = DiscreteMeasure.uniform([0.0, 1.0, 2.0])
        mu1 = DiscreteMeasure.uniform([2.5, 0.5, 1.5])
        plan, _ = ot_solve_exact(mu0, mu1)
        assert plan.support_pairs() == [(0, 1), (1, 2), (2, 0)]
        assert plan.total_cost() == pytest.approx(0.125)
        assert plan.epsilon is None

    def test_dual_selection_is_symmetric_on_degenerate_plans(self):
        mu = DiscreteMeasure.uniform([-1.0, 1.0])
        _, duals = ot_solve_exact(mu, mu)
        np.testing.assert_allclose(duals.psi, duals.psi[::-1], atol=1e-12)

    def test_normalize(self):
        mu = DiscreteMeasure.uniform([0.0, 1.0])
        raw = DualPotentials(np.array([1.0, 2.0]), np.array([-1.0, -2.0]), mu, mu)
        norm = raw.normalize()
        assert norm.normalized
        assert mu.integrate(norm.psi) == pytest.approx(mu.integrate(norm.psi_c))
        assert norm.dual_value() == pytest.approx(raw.dual_value())

    def test_residual_pair_out_of_range(self, follmer_duals):
        with pytest.raises(ValidationError):
            c_superdiff_residual(follmer_duals, (0, 2))
