import math

import numpy as np
import pytest
from scipy.stats import norm

from schro_ldp.eot import Coupling
from schro_ldp.errors import NumericalError, ValidationError
from schro_ldp.events import EventSet
from schro_ldp.harness import (
    BridgeSampler,
    MixtureSampler,
    ProbabilityEstimate,
    SchrodingerSampler,
    event_probability,
    ldp_slope,
    smooth_max,
)
from schro_ldp.measures import DiscreteMeasure
from schro_ldp.paths import Path, uniform_grid
from schro_ldp.rates import RateContext, inf_rate_over_event


def zero_tube(radius: float) -> EventSet:
    return EventSet.tube(Path.from_knots([[0.0, 0.0], [1.0, 0.0]]), radius)


class TestSamplers:
    def test_bridge_has_one_stratum(self):
        (stratum,) = BridgeSampler(0.0, 1.0).strata
        assert stratum.key == (0, 0)
        assert stratum.weight == 1.0

    def test_schrodinger_strata_follow_the_plan(self, follmer_pair):
        mu0, mu1 = follmer_pair
        strata = SchrodingerSampler(Coupling(np.array([[0.5, 0.5]]), mu0, mu1)).strata
        assert [s.key for s in strata] == [(0, 0), (0, 1)]

    def test_mixture_skips_massless_pairs(self):
        mu0 = DiscreteMeasure([[0.0], [1.0]], [1.0, 0.0])
        mu1 = DiscreteMeasure.uniform([0.0, 1.0])
        assert [s.key for s in MixtureSampler(mu0, mu1).strata] == [(0, 0), (0, 1)]


class TestEventProbability:
    def test_sure_event(self):
        est = event_probability(BridgeSampler(0.0, 0.0), zero_tube(10.0), 0.1, 2000, seed=1)
        assert est.p_hat == 1.0
        assert est.hits == 2000
        assert est.resolvable

    def test_endpoint_event_of_a_mixture(self, follmer_pair):
        event = EventSet.endpoint(pairs=[[0.0, 1.0]])
        est = event_probability(MixtureSampler(*follmer_pair), event, 0.2, 10_000, seed=2, grid=uniform_grid(4))
        assert abs(est.p_hat - 0.5) <= 4.0 * est.se

    def test_shifted_estimate_is_unbiased(self):
        grid = uniform_grid(50)
        event = zero_tube(0.3)
        sampler = BridgeSampler(0.0, 0.0)
        plain = event_probability(sampler, event, 0.1, 20_000, seed=3, grid=grid)
        shift = Path.from_knots([[0.0, 0.0], [0.5, 0.2], [1.0, 0.0]])
        shifted = event_probability(sampler, event, 0.1, 20_000, seed=4, grid=grid, shift=shift)
        assert shifted.shifted
        assert abs(shifted.p_hat - plain.p_hat) <= 4.0 * math.hypot(plain.se, shifted.se)

    def test_shifted_estimate_matches_the_gaussian_midpoint(self):
        # on a two-interval grid the tube only constrains X(1/2) ~ N(0, eps / 4)
        eps = 0.1
        event = EventSet.tube(Path.from_knots([[0.0, 0.0], [0.5, 1.0], [1.0, 0.0]]), 0.25)
        shift = Path.from_knots([[0.0, 0.0], [0.5, 0.75], [1.0, 0.0]])
        est = event_probability(BridgeSampler(0.0, 0.0), event, eps, 20_000, seed=12, grid=uniform_grid(2), shift=shift)
        sigma = math.sqrt(eps * 0.25)
        exact = norm.sf(0.75 / sigma) - norm.sf(1.25 / sigma)
        assert est.se < 0.05 * exact
        assert abs(est.p_hat - exact) <= 4.0 * est.se

    def test_shift_from_rate_infimum(self):
        event = EventSet.tube(Path.from_knots([[0.0, 0.0], [0.5, 1.0], [1.0, 0.0]]), 0.25)
        rate = inf_rate_over_event(event, RateContext.bridge(0.0, 0.0))
        est = event_probability(BridgeSampler(0.0, 0.0), event, 0.1, 5000, seed=5, shift=rate)
        assert est.p_hat > 0
        assert est.ess > 100
        assert -0.1 * math.log(est.p_hat) == pytest.approx(rate.value, rel=0.5)

    def test_inadmissible_strata_contribute_zero(self):
        shift = Path.from_knots([[0.0, 0.0], [1.0, 1.0]])
        est = event_probability(BridgeSampler(0.0, 1.0), zero_tube(0.25), 0.1, 1000, seed=0, shift=shift)
        assert est.p_hat == 0.0
        assert "inadmissible" in est.flags

    def test_zero_shift_is_a_plain_estimate(self):
        shift = Path.from_knots([[0.0, 0.0], [1.0, 0.0]])
        est = event_probability(BridgeSampler(0.0, 0.0), zero_tube(0.25), 0.1, 1000, seed=0, shift=shift)
        assert est.shifted
        assert est.p_hat == pytest.approx(est.hits / est.n)

    def test_shift_must_match_an_endpoint_pair(self):
        shift = Path.from_knots([[0.0, 0.5], [1.0, 0.0]])
        with pytest.raises(ValidationError):
            event_probability(BridgeSampler(0.0, 0.0), zero_tube(0.25), 0.1, 1000, seed=0, shift=shift)

    def test_zero_hits_are_flagged(self):
        est = event_probability(BridgeSampler(0.0, 0.0), EventSet.endpoint(pairs=[[0.0, 1.0]]), 0.1, 1000, seed=0)
        assert est.p_hat == 0.0
        assert est.flags == ("zero_hits",)
        assert not est.resolvable
        assert est.eps_log_p == -math.inf

    def test_reproducible(self):
        args = (BridgeSampler(0.0, 0.0), zero_tube(0.3), 0.1, 3000)
        a = event_probability(*args, seed=9, grid=uniform_grid(20), chunk_size=500)
        b = event_probability(*args, seed=9, grid=uniform_grid(20), chunk_size=500)
        assert a == b

    def test_too_few_samples(self):
        with pytest.raises(ValidationError):
            event_probability(BridgeSampler(0.0, 0.0), zero_tube(0.3), 0.1, 999, seed=0)

    def test_two_point_events_rejected(self):
        event = EventSet.two_point(0.25, 0.75, [[0.0, 0.0]])
        with pytest.raises(ValidationError):
            event_probability(BridgeSampler(0.0, 0.0), event, 0.1, 1000, seed=0)


class TestResolvable:
    def test_plain_needs_hits(self):
        assert not ProbabilityEstimate(0.1, 0.001, 0.001, 1000, 1000.0, 1).resolvable
        assert ProbabilityEstimate(0.1, 0.02, 0.004, 1000, 1000.0, 20).resolvable

    def test_shifted_needs_ess(self):
        assert not ProbabilityEstimate(0.1, 1e-6, 1e-7, 1000, 50.0, 900, shifted=True).resolvable
        assert ProbabilityEstimate(0.1, 1e-6, 1e-7, 1000, 150.0, 900, shifted=True).resolvable


class TestSlope:
    def test_recovers_rate_and_correction(self):
        schedule = [0.2, 0.1, 0.05, 0.025]
        estimates = [(math.exp(-(1.5 - 0.3 * e) / e), 1e-3 * math.exp(-(1.5 - 0.3 * e) / e)) for e in schedule]
        fit = ldp_slope(schedule, estimates)
        assert fit.slope == pytest.approx(1.5, abs=1e-8)
        assert fit.correction == pytest.approx(0.3, abs=1e-6)
        assert fit.ci[0] < fit.slope < fit.ci[1]
        assert fit.points == 4

    def test_zero_estimates_skipped(self):
        fit = ldp_slope([0.4, 0.2, 0.1, 0.05], [(0.5, 0.01), (0.25, 0.01), (0.1, 0.01), (0.0, 0.0)])
        assert fit.points == 3

    def test_needs_three_points(self):
        with pytest.raises(NumericalError):
            ldp_slope([0.2, 0.1, 0.05], [(0.5, 0.01), (0.0, 0.0), (0.1, 0.01)])

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            ldp_slope([0.2, 0.1], [(0.5, 0.01)])


class TestSmoothMax:
    def test_two_sided_bound(self):
        rng = np.random.default_rng(9)
        for _ in range(1000):
            v = rng.normal(scale=5.0, size=int(rng.integers(1, 50)))
            beta = float(rng.uniform(0.1, 100.0))
            m = smooth_max(v, beta)
            assert v.max() <= m <= v.max() + math.log(v.size) / beta

    def test_value(self):
        assert smooth_max([1.0, 0.0], 10.0) == pytest.approx(1.0 + math.log1p(math.exp(-10.0)) / 10.0, rel=1e-12)
        assert smooth_max([1.0, 0.0], 10.0) == pytest.approx(1.00000454, abs=1e-8)

    def test_large_inputs_do_not_overflow(self):
        assert smooth_max([1000.0, 1000.0], 1.0) == pytest.approx(1000.0 + math.log(2.0))

    def test_invalid(self):
        with pytest.raises(ValidationError):
            smooth_max([], 1.0)
        with pytest.raises(ValidationError):
            smooth_max([1.0], 0.0)
