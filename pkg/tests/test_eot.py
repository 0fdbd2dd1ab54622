import numpy as np
import pytest

from schro_ldp.eot import (
    Coupling,
    PotentialPair,
    eot_objective,
    eot_plan,
    normalize_potentials,
    potential_convergence_curve,
    schrodinger_residuals,
    sinkhorn,
    sinkhorn_schedule,
)
from schro_ldp.errors import ConvergenceError, NumericalError, ValidationError
from schro_ldp.measures import DiscreteMeasure, cost_matrix
from schro_ldp.ot_dual import ot_solve_exact
from tests.conftest import random_measure


class TestSinkhorn:
    def test_residuals_on_random_instances(self):
        rng = np.random.default_rng(20)
        for _ in range(20):
            d = int(rng.integers(1, 3))
            mu0 = random_measure(rng, int(rng.integers(2, 21)), d)
            mu1 = random_measure(rng, int(rng.integers(2, 21)), d)
            eps = float(rng.uniform(0.05, 1.0))
            pot = sinkhorn(mu0, mu1, eps)
            r0, r1 = schrodinger_residuals(pot, mu0, mu1)
            assert np.max(np.abs(r0)) <= 1e-10
            assert np.max(np.abs(r1)) <= 1e-10
            assert pot.residual <= 1e-10
            assert pot.iterations >= 1

    def test_dirac_source_gives_quadratic_psi(self):
        mu0 = DiscreteMeasure.dirac([0.0])
        mu1 = DiscreteMeasure([[-1.0], [0.5], [2.0]], [0.2, 0.3, 0.5])
        pot = sinkhorn(mu0, mu1, 1.0)
        shift = pot.psi - 0.5 * mu1.points[:, 0] ** 2
        assert np.ptp(shift) <= 1e-8
        assert pot.phi[0] + shift[0] == pytest.approx(0.0, abs=1e-8)

    def test_potentials_are_normalized(self):
        rng = np.random.default_rng(1)
        mu0, mu1 = random_measure(rng, 5, 2), random_measure(rng, 7, 2)
        pot = sinkhorn(mu0, mu1, 0.3)
        assert mu0.integrate(pot.phi) == pytest.approx(mu1.integrate(pot.psi), abs=1e-12)

    def test_iteration_limit_raises_with_residual(self):
        rng = np.random.default_rng(2)
        mu0, mu1 = random_measure(rng, 6, 1), random_measure(rng, 6, 1)
        with pytest.raises(ConvergenceError) as info:
            sinkhorn(mu0, mu1, 0.05, tol=1e-14, max_iter=1)
        assert info.value.iterations == 1
        assert info.value.residual > 1e-14

    def test_invalid_epsilon(self):
        mu = DiscreteMeasure.uniform([0.0, 1.0])
        with pytest.raises(ValidationError):
            sinkhorn(mu, mu, 0.0)

    def test_cost_override_shape_checked(self):
        mu = DiscreteMeasure.uniform([0.0, 1.0])
        with pytest.raises(ValidationError):
            sinkhorn(mu, mu, 1.0, cost=np.zeros((3, 2)))

    def test_warm_start_converges_to_same_plan(self):
        rng = np.random.default_rng(4)
        mu0, mu1 = random_measure(rng, 8, 1), random_measure(rng, 9, 1)
        cold = sinkhorn(mu0, mu1, 0.1)
        warm = sinkhorn(mu0, mu1, 0.1, init=sinkhorn(mu0, mu1, 0.2))
        np.testing.assert_allclose(
            eot_plan(warm, mu0, mu1).plan, eot_plan(cold, mu0, mu1).plan, atol=1e-9
        )


class TestSchedule:
    def test_one_solve_per_epsilon(self):
        rng = np.random.default_rng(5)
        mu0, mu1 = random_measure(rng, 5, 1), random_measure(rng, 5, 1)
        pots = sinkhorn_schedule(mu0, mu1, [1.0, 0.5, 0.25])
        assert [p.epsilon for p in pots] == [1.0, 0.5, 0.25]

    @pytest.mark.parametrize("schedule", [[], [0.5, 1.0], [0.5, 0.5], [1.0, -0.1]])
    def test_rejects_bad_schedules(self, schedule):
        mu = DiscreteMeasure.uniform([0.0, 1.0])
        with pytest.raises(ValidationError):
            sinkhorn_schedule(mu, mu, schedule)


class TestPlan:
    def setup_method(self):
        rng = np.random.default_rng(6)
        self.mu0, self.mu1 = random_measure(rng, 6, 2), random_measure(rng, 4, 2)
        self.pot = sinkhorn(self.mu0, self.mu1, 0.2)

    def test_marginals(self):
        plan = eot_plan(self.pot, self.mu0, self.mu1)
        np.testing.assert_allclose(plan.plan.sum(axis=1), self.mu0.weights, atol=1e-9)
        np.testing.assert_allclose(plan.plan.sum(axis=0), self.mu1.weights, atol=1e-9)
        assert np.all(plan.plan >= 0)
        assert plan.epsilon == 0.2

    def test_objective_primal_equals_dual(self):
        plan = eot_plan(self.pot, self.mu0, self.mu1)
        primal, dual = eot_objective(self.pot, plan)
        assert primal == pytest.approx(dual, abs=1e-8)

    def test_unsolved_potentials_rejected(self):
        bad = PotentialPair(np.zeros(6), np.zeros(4), 0.2)
        with pytest.raises(NumericalError):
            eot_plan(bad, self.mu0, self.mu1)

    def test_normalization_keeps_plan(self):
        shifted = self.pot.shifted(3.0)
        renormalized = normalize_potentials(shifted, self.mu0, self.mu1)
        np.testing.assert_allclose(renormalized.phi, self.pot.phi, atol=1e-12)
        np.testing.assert_allclose(renormalized.psi, self.pot.psi, atol=1e-12)

    def test_support_pairs_and_cost(self):
        plan = Coupling(np.diag([0.5, 0.5]), DiscreteMeasure.uniform([0.0, 1.0]), DiscreteMeasure.uniform([1.0, 3.0]))
        assert plan.support_pairs() == [(0, 0), (1, 1)]
        assert plan.total_cost() == pytest.approx(0.5 * 0.5 + 0.5 * 2.0)

    def test_coupling_checks_marginals(self):
        mu = DiscreteMeasure.uniform([0.0, 1.0])
        with pytest.raises(ValidationError):
            Coupling(np.array([[0.5, 0.0], [0.25, 0.25]]), mu, mu)

    def test_nonfinite_potentials_rejected(self):
        with pytest.raises(NumericalError):
            PotentialPair(np.array([np.inf]), np.zeros(1), 1.0)


class TestZeroNoiseLimit:
    def test_eot_potentials_approach_ot_potentials(self):
        grid = np.linspace(0.0, 1.0, 50)
        mu0 = DiscreteMeasure.uniform(grid)
        mu1 = DiscreteMeasure.normalized(grid[:, None], 1.0 + 0.5 * grid)
        _, duals = ot_solve_exact(mu0, mu1)
        rows = potential_convergence_curve(mu0, mu1, [2.0**-k for k in range(7)], duals)
        gaps = [max(r.phi_gap, r.psi_gap) for r in rows]
        assert all(b <= a + 1e-3 for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] <= 0.05

    def test_requires_normalized_duals(self):
        mu = DiscreteMeasure.uniform([0.0, 1.0])
        _, duals = ot_solve_exact(mu, mu)
        raw = type(duals)(duals.psi, duals.psi_c, mu, mu, normalized=False)
        with pytest.raises(ValidationError):
            potential_convergence_curve(mu, mu, [1.0], raw)

    def test_eot_cost_above_ot_cost(self):
        rng = np.random.default_rng(7)
        mu0, mu1 = random_measure(rng, 5, 1), random_measure(rng, 5, 1)
        ot_plan, _ = ot_solve_exact(mu0, mu1)
        pot = sinkhorn(mu0, mu1, 0.1)
        plan = eot_plan(pot, mu0, mu1)
        assert np.sum(plan.plan * cost_matrix(mu0, mu1)) >= ot_plan.total_cost() - 1e-9


class TestPotentialBounds:
    def test_normalized_potentials_stay_below_the_largest_cost(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            d = int(rng.integers(1, 3))
            mu0 = random_measure(rng, int(rng.integers(2, 12)), d)
            mu1 = random_measure(rng, int(rng.integers(2, 12)), d)
            pot = sinkhorn(mu0, mu1, float(rng.uniform(0.05, 1.0)))
            c_max = cost_matrix(mu0, mu1).max()
            assert pot.phi.max() <= c_max + 1e-9
            assert pot.psi.max() <= c_max + 1e-9

    def test_jensen_bound_per_atom(self):
        rng = np.random.default_rng(22)
        mu0, mu1 = random_measure(rng, 6, 2), random_measure(rng, 5, 2)
        pot = sinkhorn(mu0, mu1, 0.2)
        cost = cost_matrix(mu0, mu1)
        assert np.all(pot.phi <= cost @ mu1.weights - mu1.integrate(pot.psi) + 1e-9)
        assert np.all(pot.psi <= mu0.weights @ cost - mu0.integrate(pot.phi) + 1e-9)
