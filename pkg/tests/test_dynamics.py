import numpy as np
import pytest

from schro_ldp.dynamics import (
    FollmerModel,
    PotentialField,
    euler_maruyama,
    follmer_drift,
    follmer_log_h,
    langevin_cost,
    langevin_cost_matrix,
    langevin_log_weights,
    langevin_weight,
    sample_langevin_bridge,
)
from schro_ldp.eot import eot_plan, sinkhorn
from schro_ldp.errors import ValidationError
from schro_ldp.measures import DiscreteMeasure, cost_matrix, quad_cost
from schro_ldp.paths import Path, geodesic, sample_schrodinger_bridge, uniform_grid


@pytest.fixture
def asymmetric_pair():
    return DiscreteMeasure.uniform([-0.5, 0.5]), DiscreteMeasure([[-1.0], [1.5]], [0.3, 0.7])


class TestFollmerDrift:
    def test_symmetric_target_has_no_drift_at_the_origin(self, follmer_pair):
        model = FollmerModel.from_marginals(*follmer_pair, 1.0)
        np.testing.assert_allclose(follmer_drift(model, 0.0, 0.0), [0.0], atol=1e-12)
        assert follmer_drift(model, 0.0, 0.5)[0] > 0

    def test_drift_is_eps_grad_log_h(self, asymmetric_pair):
        model = FollmerModel.from_marginals(*asymmetric_pair, 0.7)
        t, y, h = 0.4, 0.3, 1e-6
        grad = (follmer_log_h(model, t, y + h) - follmer_log_h(model, t, y - h)) / (2 * h)
        assert follmer_drift(model, t, y)[0] == pytest.approx(0.7 * grad, rel=1e-5)

    def test_time_domain(self, follmer_pair):
        model = FollmerModel.from_marginals(*follmer_pair, 1.0)
        with pytest.raises(ValidationError):
            follmer_drift(model, 1.0, 0.0)

    def test_potential_shape_checked(self, follmer_pair):
        with pytest.raises(ValidationError):
            FollmerModel(*follmer_pair, 1.0, np.zeros(3))


class TestEulerMaruyama:
    def test_recorded_grid_and_endpoints(self, asymmetric_pair):
        mu0, mu1 = asymmetric_pair
        model = FollmerModel.from_marginals(mu0, mu1, 0.5)
        ens = euler_maruyama(model, 500, 100, seed=1, record_stride=10)
        assert ens.values.shape == (500, 11, 1)
        np.testing.assert_allclose(ens.grid, np.linspace(0.0, 1.0, 11))
        np.testing.assert_array_equal(ens.values[:, 0, 0], mu0.points[ens.pairs[:, 0], 0])
        np.testing.assert_array_equal(ens.values[:, -1, 0], mu1.points[ens.pairs[:, 1], 0])

    def test_stride_must_divide_steps(self, follmer_pair):
        model = FollmerModel.from_marginals(*follmer_pair, 1.0)
        with pytest.raises(ValidationError):
            euler_maruyama(model, 10, 100, seed=0, record_stride=7)

    def test_reproducible(self, follmer_pair):
        model = FollmerModel.from_marginals(*follmer_pair, 1.0)
        a = euler_maruyama(model, 100, 50, seed=4, chunk_size=30)
        b = euler_maruyama(model, 100, 50, seed=4, chunk_size=30)
        np.testing.assert_array_equal(a.values, b.values)

    def test_single_atom_target_tracks_the_geodesic(self):
        model = FollmerModel.from_marginals(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([1.0]), 0.5)
        n = 20_000
        ens = euler_maruyama(model, n, 200, seed=6, record_stride=20)
        np.testing.assert_array_equal(ens.values[:, -1, 0], 1.0)
        for k in [3, 5, 8]:
            t = ens.grid[k]
            column = ens.values[:, k, 0]
            assert abs(column.mean() - t) <= 3.0 * column.std(ddof=1) / np.sqrt(n)

    @pytest.mark.slow
    def test_matches_the_bridge_mixture(self, asymmetric_pair):
        mu0, mu1 = asymmetric_pair
        eps, n = 1.0, 100_000
        model = FollmerModel.from_marginals(mu0, mu1, eps)
        sde = euler_maruyama(model, n, 2000, seed=7, record_stride=1000)
        freq = np.bincount(sde.pairs[:, 1], minlength=2) / n
        assert 0.5 * np.sum(np.abs(freq - mu1.weights)) <= 0.05

        plan = eot_plan(sinkhorn(mu0, mu1, eps), mu0, mu1)
        mix = sample_schrodinger_bridge(plan, eps, uniform_grid(2), n, seed=8)
        a, b = sde.values[:, 1, 0], mix.values[:, 1, 0]
        se = np.sqrt(a.var(ddof=1) / n + b.var(ddof=1) / n)
        assert abs(a.mean() - b.mean()) <= 3.0 * se


class TestPotentialField:
    @pytest.mark.parametrize("text", ["zero", "cosine:1,2,0.5", "bump:0.5,0.3,1,-1"])
    def test_parse_round_trip(self, text):
        field = PotentialField.parse(text)
        assert PotentialField.parse(str(field)) == field

    @pytest.mark.parametrize("text", ["cosine:1", "bump:1", "wave:1,2", "cosine:a,b"])
    def test_parse_errors(self, text):
        with pytest.raises(ValidationError):
            PotentialField.parse(text)

    @pytest.mark.parametrize("field", [PotentialField.cosine(0.8, 1.3, 0.2), PotentialField.bump(0.5, 0.7, [0.1, -0.2])])
    def test_derivatives_match_finite_differences(self, field):
        x = np.array([0.3, -0.4])
        h = 1e-5
        eye = np.eye(2) * h
        grad = [(field.value(x + e) - field.value(x - e)) / (2 * h) for e in eye]
        lap = sum((field.value(x + e) - 2 * field.value(x) + field.value(x - e)) / h**2 for e in eye)
        np.testing.assert_allclose(field.gradient(x), grad, atol=1e-7)
        assert field.laplacian(x) == pytest.approx(lap, abs=1e-4)


class TestLangevin:
    def test_zero_potential_has_unit_weights(self):
        grid = uniform_grid(20)
        values = np.random.default_rng(0).normal(size=(5, 21, 2))
        np.testing.assert_array_equal(langevin_log_weights(values, grid, PotentialField.zero(), 0.3), 0.0)
        assert langevin_weight(geodesic(0.0, 1.0, grid), PotentialField.zero(), 0.3) == 1.0

    def test_zero_potential_recovers_the_quadratic_cost(self):
        est = langevin_cost(0.0, 1.0, PotentialField.zero(), 0.1, 1000, seed=3, grid=uniform_grid(20))
        assert est.reduced == pytest.approx(quad_cost(0.0, 1.0), abs=1e-12)
        assert est.se <= 1e-12
        assert est.warning is None

    def test_zero_potential_cost_matrix(self):
        mu0, mu1 = DiscreteMeasure.uniform([0.0, 1.0]), DiscreteMeasure.uniform([0.5, 2.0])
        eps = 0.2
        out = langevin_cost_matrix(mu0, mu1, PotentialField.zero(), eps, 100, seed=0, grid=uniform_grid(10))
        normalizer = 0.5 * eps * np.log(2 * np.pi * eps)
        np.testing.assert_allclose(out, cost_matrix(mu0, mu1) + normalizer, atol=1e-12)

    def test_langevin_bridge_ensemble(self):
        ens = sample_langevin_bridge(0.0, 1.0, PotentialField.zero(), 0.1, uniform_grid(10), 200, seed=1)
        assert ens.ess == pytest.approx(200.0)
        assert ens.flags == ()

    @pytest.mark.slow
    def test_cosine_cost_approaches_the_quadratic_cost(self):
        field = PotentialField.cosine(1.0, 1.0)
        gaps = []
        for eps in [0.1, 0.05, 0.025]:
            est = langevin_cost(0.0, 1.0, field, eps, 1_000_000, seed=5, grid=uniform_grid(100))
            gaps.append(abs(est.value - quad_cost(0.0, 1.0)))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[-1] <= 0.1

    def test_cosine_weight_on_the_zero_path(self):
        path = Path(uniform_grid(10), np.zeros((11, 1)))
        assert langevin_weight(path, PotentialField.cosine(1.0, 1.0), 0.2) == pytest.approx(np.exp(-0.1), rel=1e-12)

    def test_weight_multiplies_over_concatenation(self):
        field = PotentialField.cosine(0.8, 1.3, 0.2)
        grid = uniform_grid(20)
        values = np.random.default_rng(9).normal(size=(21, 1))
        first = Path(uniform_grid(10), values[:11])
        second = Path(uniform_grid(10), values[10:])
        whole = langevin_weight(Path(grid, values), field, 0.3)
        halves = langevin_weight(first, field, 0.15) * langevin_weight(second, field, 0.15)
        assert whole == pytest.approx(halves, rel=1e-12)

    def test_cost_is_not_symmetric(self):
        field = PotentialField.cosine(1.0, 1.0)
        eps, grid = 0.1, uniform_grid(50)
        forward = langevin_cost(0.0, 1.0, field, eps, 20_000, seed=10, grid=grid)
        backward = langevin_cost(1.0, 0.0, field, eps, 20_000, seed=11, grid=grid)
        expected = -2.0 * eps * (np.cos(0.0) - np.cos(1.0))
        assert forward.value - backward.value == pytest.approx(expected, abs=4.0 * np.hypot(forward.se, backward.se) + 1e-9)
        assert abs(forward.value - backward.value) > 0.05
