"""Monte Carlo estimates of path-event probabilities and LDP slope extraction.

Samplers are finite mixtures of Brownian bridges, one stratum per endpoint
pair. Plain estimates draw a stratum and a bridge per path. Shifted estimates
run every admissible stratum separately with its bridge mean moved onto a
path h and reweight by the Gaussian likelihood ratio on the grid,

    exp(-(g, xi)_H / eps - |g|_H^2 / (2 eps)),  g = h - sigma^{xy},

which is exact for the finite-dimensional bridge law.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from schro_ldp.config import DEFAULT_CHUNK_SIZE, MASS_EPS, MIN_ESS, MIN_EVENT_SAMPLES, MIN_HITS, SNAP_TOL
from schro_ldp.eot import Coupling
from schro_ldp.errors import NumericalError, ValidationError
from schro_ldp.events import EventSet
from schro_ldp.measures import DiscreteMeasure, _as_vector
from schro_ldp.parallel import map_chunks
from schro_ldp.paths import Path, _geodesic_values, _h_norm_sq_values, bridge_noise, check_grid, h_inner
from schro_ldp.rates import RateInfimum, default_event_grid

logger = logging.getLogger(__name__)

MIN_STRATUM = 100
Z_95 = 1.959963984540054


# ── Samplers ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Stratum:
    key: tuple[int, int]
    x: np.ndarray
    y: np.ndarray
    weight: float


@dataclass(frozen=True, eq=False)
class BridgeSampler:
    """The Brownian bridge pinned at (x, y)."""

    x: np.ndarray
    y: np.ndarray
    name = "bridge"

    def __post_init__(self):
        x = _as_vector(self.x)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", _as_vector(self.y, x.shape[0]))

    @property
    def strata(self) -> tuple[Stratum, ...]:
        return (Stratum((0, 0), self.x, self.y, 1.0),)


@dataclass(frozen=True, eq=False)
class SchrodingerSampler:
    """Bridges mixed by a coupling (the EOT plan gives the Schrödinger bridge)."""

    plan: Coupling
    name = "schrodinger"

    @property
    def strata(self) -> tuple[Stratum, ...]:
        p = self.plan
        return tuple(
            Stratum((i, j), p.source.points[i], p.target.points[j], float(p.plan[i, j]))
            for i, j in p.support_pairs()
        )


@dataclass(frozen=True, eq=False)
class MixtureSampler:
    """Bridges mixed by the independent coupling mu0 x mu1."""

    mu0: DiscreteMeasure
    mu1: DiscreteMeasure
    name = "mixture"

    @property
    def strata(self) -> tuple[Stratum, ...]:
        return tuple(
            Stratum((i, j), self.mu0.points[i], self.mu1.points[j], float(self.mu0.weights[i] * self.mu1.weights[j]))
            for i in range(self.mu0.size) for j in range(self.mu1.size)
            if self.mu0.weights[i] * self.mu1.weights[j] > MASS_EPS
        )


# ── Estimates ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ProbabilityEstimate:
    epsilon: float
    p_hat: float
    se: float
    n: int
    ess: float
    hits: int
    shifted: bool = False
    flags: tuple[str, ...] = field(default=())

    @property
    def resolvable(self) -> bool:
        if self.p_hat <= 0:
            return False
        return self.ess >= MIN_ESS if self.shifted else self.hits >= MIN_HITS

    @property
    def eps_log_p(self) -> float:
        return self.epsilon * math.log(self.p_hat) if self.p_hat > 0 else -math.inf


def _shift_paths(sampler, shift, grid: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Shift path values on the grid per stratum key."""
    if isinstance(shift, RateInfimum):
        return {key: pr.path.at(grid) for key, pr in shift.per_pair.items()}
    if isinstance(shift, Path):
        matched = {
            s.key: shift.at(grid) for s in sampler.strata
            if np.max(np.abs(shift.start - s.x)) <= SNAP_TOL and np.max(np.abs(shift.end - s.y)) <= SNAP_TOL
        }
        if not matched:
            raise ValidationError("The shift path's endpoints match no endpoint pair of the sampler.")
        return matched
    raise ValidationError(f"Unsupported shift of type {type(shift).__name__}.")


def _plain_estimate(sampler, event, epsilon, n, seed, grid, chunk_size, stream) -> ProbabilityEstimate:
    strata = sampler.strata
    weights = np.array([s.weight for s in strata])
    probs = weights / weights.sum()
    xs = np.array([s.x for s in strata])
    ys = np.array([s.y for s in strata])
    d = xs.shape[1]

    def _chunk(size: int, rng: np.random.Generator) -> int:
        k = rng.choice(len(strata), size=size, p=probs)
        values = (1.0 - grid)[None, :, None] * xs[k][:, None, :] + grid[None, :, None] * ys[k][:, None, :]
        if epsilon > 0:
            values += math.sqrt(epsilon) * bridge_noise(grid, size, d, rng)
        values[:, 0] = xs[k]
        values[:, -1] = ys[k]
        return int(np.count_nonzero(event.contains(values, grid)))

    hits = sum(map_chunks(_chunk, n, seed, chunk_size, stream=stream))
    p = hits / n
    flags: tuple[str, ...] = ()
    if hits == 0:
        flags = ("zero_hits",)
        logger.warning("no sampled path hit the event at eps=%g (n=%d); eps log p is undefined", epsilon, n)
    return ProbabilityEstimate(epsilon, p, math.sqrt(p * (1.0 - p) / n), n, float(n), hits, False, flags)


def _shifted_estimate(sampler, event, epsilon, n, seed, grid, shift, chunk_size, stream) -> ProbabilityEstimate:
    if event.kind != "tube":
        raise ValidationError("Importance shifts apply to tube events only.")
    if not epsilon > 0:
        raise ValidationError("Importance shifts need epsilon > 0.")
    shifts = _shift_paths(sampler, shift, grid)
    strata = [s for s in sampler.strata if event.admits_endpoints(s.x, s.y)]
    if not strata:
        return ProbabilityEstimate(epsilon, 0.0, 0.0, 0, 0.0, 0, True, ("inadmissible",))
    total = sum(s.weight for s in strata)

    p_hat, var, ess, hits, used = 0.0, 0.0, 0.0, 0, 0
    for index, s in enumerate(strata):
        n_s = max(MIN_STRATUM, int(round(n * s.weight / total)))
        geo = _geodesic_values(s.x, s.y, grid)
        g = shifts[s.key] - geo if s.key in shifts else np.zeros_like(geo)
        g[0] = 0.0
        g[-1] = 0.0
        g_sq = float(_h_norm_sq_values(g, grid))

        def _chunk(size: int, rng: np.random.Generator, geo=geo, g=g, g_sq=g_sq):
            xi = math.sqrt(epsilon) * bridge_noise(grid, size, geo.shape[1], rng)
            inside = event.contains(geo[None] + g[None] + xi, grid)
            w = np.exp(-h_inner(g, xi, grid) / epsilon - g_sq / (2.0 * epsilon))
            vals = np.where(inside, w, 0.0)
            return float(vals.sum()), float(np.sum(vals * vals)), int(np.count_nonzero(inside))

        parts = map_chunks(_chunk, n_s, seed, chunk_size, stream=(*stream, index))
        s1 = sum(p[0] for p in parts)
        s2 = sum(p[1] for p in parts)
        p_s = s1 / n_s
        var_s = max(s2 / n_s - p_s * p_s, 0.0) / (n_s - 1)
        p_hat += s.weight * p_s
        var += s.weight**2 * var_s
        ess += s1 * s1 / s2 if s2 > 0 else 0.0
        hits += sum(p[2] for p in parts)
        used += n_s

    flags: tuple[str, ...] = ()
    if ess < MIN_ESS:
        flags = ("low_ess",)
        logger.warning("shifted estimate at eps=%g has ESS %.1f below %g", epsilon, ess, MIN_ESS)
    return ProbabilityEstimate(epsilon, min(p_hat, 1.0), math.sqrt(var), used, ess, hits, True, flags)


def event_probability(
    sampler,
    event: EventSet,
    epsilon: float,
    n: int,
    seed: int,
    *,
    shift: Path | RateInfimum | None = None,
    grid=None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    stream: tuple[int, ...] = (),
) -> ProbabilityEstimate:
    """Estimate the sampler's probability of the event at noise level epsilon.

    Without a shift: hit frequency with binomial standard error. With a shift
    (a path, or a RateInfimum carrying one minimizer per endpoint pair):
    stratified importance sampling; strata whose endpoints leave a tube
    contribute exactly zero.
    """
    if n < MIN_EVENT_SAMPLES:
        raise ValidationError(f"n must be at least {MIN_EVENT_SAMPLES}, got {n}.")
    if epsilon < 0:
        raise ValidationError(f"epsilon must be nonnegative, got {epsilon}.")
    if event.kind == "two_point":
        raise ValidationError("Two-point events have probability zero under a diffusion; only their rate is defined.")
    grid = default_event_grid(event) if grid is None else check_grid(grid)
    if shift is None:
        est = _plain_estimate(sampler, event, epsilon, n, seed, grid, chunk_size, stream)
    else:
        est = _shifted_estimate(sampler, event, epsilon, n, seed, grid, shift, chunk_size, stream)
    logger.info(
        "eps=%g p_hat=%.6g se=%.3g ess=%.1f shifted=%s", epsilon, est.p_hat, est.se, est.ess, est.shifted,
    )
    return est


# ── Slope and smooth max ───────────────────────────────────────────────────────

@dataclass(frozen=True)
class SlopeFit:
    """eps log p ~ -slope + correction * eps, fitted by weighted least squares."""

    slope: float
    ci: tuple[float, float]
    correction: float
    points: int


def ldp_slope(schedule: Sequence[float], estimates: Sequence[tuple[float, float]]) -> SlopeFit:
    """Extrapolate -lim eps log p to eps = 0 from (p_hat, se) pairs; points with p_hat <= 0 are skipped.

    Each point is weighted by the delta-method variance (eps se / p_hat)^2.
    """
    if len(schedule) != len(estimates):
        raise ValidationError("Schedule and estimates differ in length.")
    eps, y, var = [], [], []
    for e, (p, se) in zip(schedule, estimates):
        if p > 0:
            eps.append(float(e))
            y.append(e * math.log(p))
            var.append(max((e * se / p) ** 2, 1e-24))
    if len(eps) < 3:
        raise NumericalError(f"Slope extraction needs at least 3 resolvable estimates, got {len(eps)}.")
    x = np.column_stack([np.ones(len(eps)), eps])
    w = 1.0 / np.array(var)
    xtw = x.T * w
    cov = np.linalg.inv(xtw @ x)
    intercept, correction = cov @ (xtw @ np.array(y))
    slope = -float(intercept)
    half = Z_95 * math.sqrt(max(float(cov[0, 0]), 0.0))
    return SlopeFit(slope, (slope - half, slope + half), float(correction), len(eps))


def smooth_max(v: Sequence[float], beta: float) -> float:
    """beta^-1 log sum exp(beta v_i); lies in [max v, max v + log(N) / beta]."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValidationError("smooth_max needs at least one value.")
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}.")
    m = float(np.max(v))
    return m + float(np.log(np.sum(np.exp(beta * (v - m))))) / beta
