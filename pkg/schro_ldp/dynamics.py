"""Föllmer SDE for Schrödinger bridges, and the Langevin reference via bridge reweighting.

For a discrete target mu1 = sum_j v_j delta_{y_j} the space-time harmonic
function of the bridge is an atom sum,

    h(t, y) = sum_j v_j exp(psi_j / eps) q_{eps (1 - t)}(y - y_j),

with q_s the centered Gaussian density of variance s, so the drift
eps grad log h(t, y) is a softmax average of (y_j - y) / (1 - t).
See docs/follmer-drift.md for the derivation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import logsumexp

from schro_ldp.config import CLAMP_STEPS, DEFAULT_CHUNK_SIZE, DRIFT_TIME_CLAMP
from schro_ldp.eot import sinkhorn
from schro_ldp.errors import ValidationError
from schro_ldp.measures import DiscreteMeasure, _as_vector, quad_cost
from schro_ldp.parallel import concat_chunks, map_chunks
from schro_ldp.paths import Path, PathEnsemble, bridge_noise, check_grid, sample_bridges, uniform_grid

logger = logging.getLogger(__name__)


# ── Föllmer process ────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class FollmerModel:
    """Marginals, noise level and the EOT potential psi on the mu1 atoms."""

    mu0: DiscreteMeasure
    mu1: DiscreteMeasure
    epsilon: float
    psi: np.ndarray

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}.")
        if self.mu0.dim != self.mu1.dim:
            raise ValidationError(f"Dimension mismatch: mu0 is {self.mu0.dim}-d, mu1 is {self.mu1.dim}-d.")
        psi = np.array(self.psi, dtype=float)
        if psi.shape != (self.mu1.size,) or not np.all(np.isfinite(psi)):
            raise ValidationError("psi must be finite with one value per mu1 atom.")
        object.__setattr__(self, "psi", psi)

    @classmethod
    def from_marginals(cls, mu0: DiscreteMeasure, mu1: DiscreteMeasure, epsilon: float, **kwargs) -> FollmerModel:
        """Solve the Schrödinger system and keep psi."""
        return cls(mu0, mu1, epsilon, sinkhorn(mu0, mu1, epsilon, **kwargs).psi)

    @property
    def dim(self) -> int:
        return self.mu1.dim


def _atom_logits(model: FollmerModel, t: float, ys: np.ndarray) -> np.ndarray:
    """log v_j + psi_j / eps - |y - y_j|^2 / (2 eps (1 - t)), shape (n, m)."""
    with np.errstate(divide="ignore"):
        log_v = np.log(model.mu1.weights)
    diff = ys[:, None, :] - model.mu1.points[None, :, :]
    sq = np.sum(diff * diff, axis=2)
    return log_v[None, :] + model.psi[None, :] / model.epsilon - sq / (2.0 * model.epsilon * (1.0 - t))


def _atom_probs(model: FollmerModel, t: float, ys: np.ndarray) -> np.ndarray:
    logits = _atom_logits(model, t, ys)
    logits -= np.max(logits, axis=1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=1, keepdims=True)


def _drift(model: FollmerModel, t: float, ys: np.ndarray) -> np.ndarray:
    p = _atom_probs(model, t, ys)
    return (p @ model.mu1.points - ys) / (1.0 - t)


def _check_time(t: float) -> None:
    if not 0.0 <= t <= 1.0 - DRIFT_TIME_CLAMP:
        raise ValidationError(f"The drift is evaluated on [0, 1 - {DRIFT_TIME_CLAMP:g}], got t={t}.")


def follmer_drift(model: FollmerModel, t: float, y) -> np.ndarray:
    """b(t, y) = sum_j p_j(t, y) (y_j - y) / (1 - t)."""
    _check_time(t)
    y = _as_vector(y, model.dim)
    return _drift(model, t, y[None, :])[0]


def follmer_log_h(model: FollmerModel, t: float, y) -> float:
    """log h(t, y) as the explicit atom sum, Gaussian normalization included."""
    _check_time(t)
    y = _as_vector(y, model.dim)
    var = model.epsilon * (1.0 - t)
    return float(logsumexp(_atom_logits(model, t, y[None, :])[0]) - 0.5 * model.dim * math.log(2.0 * math.pi * var))


def euler_maruyama(
    model: FollmerModel,
    n: int,
    steps: int,
    seed: int,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    record_stride: int = 1,
) -> PathEnsemble:
    """Simulate dX = b(t, X) dt + sqrt(eps) dW from X(0) ~ mu0 on a uniform grid of `steps` intervals.

    The drift is used up to t_c = 1 - CLAMP_STEPS / steps. At t_c each path
    draws its terminal atom from the softmax weights p_j(t_c, X) and finishes
    as a Brownian bridge to that atom. Every `record_stride`-th grid point is kept.
    """
    if steps < 2:
        raise ValidationError(f"steps must be at least 2, got {steps}.")
    if n < 1:
        raise ValidationError(f"n must be at least 1, got {n}.")
    if record_stride < 1 or steps % record_stride:
        raise ValidationError(f"record_stride must divide steps ({steps}), got {record_stride}.")
    grid = uniform_grid(steps)
    kc = max(1, steps - CLAMP_STEPS)
    tc = grid[kc]
    local = (grid[kc:] - tc) / (1.0 - tc)
    local[-1] = 1.0
    eps, d = model.epsilon, model.dim
    kept = np.arange(0, steps + 1, record_stride)

    def _chunk(size: int, rng: np.random.Generator):
        i0 = model.mu0.sample_indices(size, rng)
        x = model.mu0.points[i0].copy()
        out = np.empty((size, kept.size, d))
        out[:, 0] = x
        for k in range(kc):
            dt = grid[k + 1] - grid[k]
            x = x + _drift(model, grid[k], x) * dt + math.sqrt(eps * dt) * rng.standard_normal((size, d))
            if (k + 1) % record_stride == 0:
                out[:, (k + 1) // record_stride] = x
        p = _atom_probs(model, tc, x)
        u = rng.random(size)
        j = np.minimum(np.sum(np.cumsum(p, axis=1) < u[:, None], axis=1), model.mu1.size - 1)
        y = model.mu1.points[j]
        tail = (1.0 - local)[None, :, None] * x[:, None, :] + local[None, :, None] * y[:, None, :]
        tail += math.sqrt(eps * (1.0 - tc)) * bridge_noise(local, size, d, rng)
        tail[:, -1] = y
        for r in np.flatnonzero(kept >= kc):
            out[:, r] = tail[:, kept[r] - kc]
        return out, np.stack([i0, j], axis=1)

    chunks = map_chunks(_chunk, n, seed, chunk_size)
    logger.info("simulated %d Föllmer paths (eps=%g, steps=%d, clamp at t=%g)", n, eps, steps, tc)
    return PathEnsemble(
        grid[kept], concat_chunks([c[0] for c in chunks]), eps, seed=seed,
        pairs=concat_chunks([c[1] for c in chunks]),
    )


# ── Langevin reference ─────────────────────────────────────────────────────────

FAMILIES = ("zero", "cosine", "bump")


@dataclass(frozen=True)
class PotentialField:
    """A bounded smooth potential V with its gradient and Laplacian.

    zero:   V = 0
    cosine: V(x) = A sum_k cos(w x_k + phase)
    bump:   V(x) = A exp(-|x - center|^2 / (2 width^2)), center defaults to 0
    """

    family: str = "zero"
    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0
    width: float = 1.0
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"Unknown potential family {self.family!r}; expected one of {', '.join(FAMILIES)}.")
        if self.family == "bump" and not self.width > 0:
            raise ValidationError(f"Bump width must be positive, got {self.width}.")

    @classmethod
    def zero(cls) -> PotentialField:
        return cls("zero")

    @classmethod
    def cosine(cls, amplitude: float, frequency: float, phase: float = 0.0) -> PotentialField:
        return cls("cosine", amplitude=float(amplitude), frequency=float(frequency), phase=float(phase))

    @classmethod
    def bump(cls, amplitude: float, width: float, center=None) -> PotentialField:
        center = None if center is None else tuple(float(c) for c in np.atleast_1d(center))
        return cls("bump", amplitude=float(amplitude), width=float(width), center=center)

    @classmethod
    def parse(cls, text: str) -> PotentialField:
        """Read `zero`, `cosine:A,w[,phase]` or `bump:A,width[,c1,...,cd]`."""
        family, _, args = text.strip().partition(":")
        try:
            nums = [float(a) for a in args.split(",")] if args else []
        except ValueError:
            raise ValidationError(f"Bad potential parameters in {text!r}.") from None
        if family == "zero" and not nums:
            return cls.zero()
        if family == "cosine" and len(nums) in (2, 3):
            return cls.cosine(*nums)
        if family == "bump" and len(nums) >= 2:
            return cls.bump(nums[0], nums[1], nums[2:] or None)
        raise ValidationError(f"Cannot parse potential {text!r}; expected zero, cosine:A,w[,phase] or bump:A,width[,c...].")

    def __str__(self) -> str:
        if self.family == "cosine":
            return f"cosine:{self.amplitude:g},{self.frequency:g},{self.phase:g}"
        if self.family == "bump":
            tail = "".join(f",{c:g}" for c in self.center or ())
            return f"bump:{self.amplitude:g},{self.width:g}{tail}"
        return "zero"

    def _offset(self, xs: np.ndarray) -> np.ndarray:
        center = np.zeros(xs.shape[-1]) if self.center is None else np.asarray(self.center)
        if center.shape != (xs.shape[-1],):
            raise ValidationError(f"Bump center has dimension {center.size}, points have {xs.shape[-1]}.")
        return xs - center

    def value(self, xs) -> np.ndarray:
        """V at points xs (..., d)."""
        xs = np.asarray(xs, dtype=float)
        if self.family == "cosine":
            return self.amplitude * np.sum(np.cos(self.frequency * xs + self.phase), axis=-1)
        if self.family == "bump":
            z = self._offset(xs)
            return self.amplitude * np.exp(-np.sum(z * z, axis=-1) / (2.0 * self.width**2))
        return np.zeros(xs.shape[:-1])

    def gradient(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self.family == "cosine":
            return -self.amplitude * self.frequency * np.sin(self.frequency * xs + self.phase)
        if self.family == "bump":
            return -self.value(xs)[..., None] * self._offset(xs) / self.width**2
        return np.zeros_like(xs)

    def laplacian(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self.family == "cosine":
            return -self.amplitude * self.frequency**2 * np.sum(np.cos(self.frequency * xs + self.phase), axis=-1)
        if self.family == "bump":
            z = self._offset(xs)
            r2 = np.sum(z * z, axis=-1)
            return self.value(xs) * (r2 / self.width**4 - xs.shape[-1] / self.width**2)
        return np.zeros(xs.shape[:-1])


def langevin_log_weights(values, grid, V: PotentialField, epsilon: float) -> np.ndarray:
    """-(eps/2) * integral of |grad V|^2 - Laplacian V along each path (trapezoidal), values (n, M + 1, d)."""
    grid = check_grid(grid)
    values = np.asarray(values, dtype=float)
    g = V.gradient(values)
    integrand = np.sum(g * g, axis=-1) - V.laplacian(values)
    return -0.5 * epsilon * trapezoid(integrand, grid, axis=-1)


def langevin_weight(path: Path, V: PotentialField, epsilon: float) -> float:
    """Unnormalized density of the Langevin bridge against the Brownian bridge at `path`."""
    if epsilon < 0:
        raise ValidationError(f"epsilon must be nonnegative, got {epsilon}.")
    return float(np.exp(langevin_log_weights(path.values[None], path.grid, V, epsilon)[0]))


@dataclass(frozen=True)
class LangevinCost:
    """Monte Carlo c_eps(x, y) = -eps log p_eps(x, y).

    `normalizer` is the Gaussian kernel term (d eps / 2) log(2 pi eps), and
    `reduced` = value - normalizer, which tends to c(x, y) as eps -> 0.
    """

    value: float
    se: float
    normalizer: float
    reduced: float
    n: int
    warning: str | None = None


def _bridge_log_weights(x, y, V, epsilon, grid, n, seed, chunk_size, stream) -> np.ndarray:
    def _chunk(size: int, rng: np.random.Generator) -> np.ndarray:
        return langevin_log_weights(sample_bridges(x, y, epsilon, grid, size, rng), grid, V, epsilon)

    return concat_chunks(map_chunks(_chunk, n, seed, chunk_size, stream=stream))


def langevin_cost(
    x,
    y,
    V: PotentialField,
    epsilon: float,
    n: int,
    seed: int,
    grid=None,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    stream: tuple[int, ...] = (),
) -> LangevinCost:
    """Estimate c_eps through p_eps(x, y) = q_eps(x, y) e^{V(x) - V(y)} E[bridge weight].

    The standard error comes from the delta method on the mean weight.
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}.")
    if n < 1:
        raise ValidationError(f"n must be at least 1, got {n}.")
    x = _as_vector(x)
    y = _as_vector(y, x.shape[0])
    grid = uniform_grid() if grid is None else check_grid(grid)
    logw = _bridge_log_weights(x, y, V, epsilon, grid, n, seed, chunk_size, stream)
    log_mean = float(logsumexp(logw) - math.log(n))
    rel = np.exp(logw - log_mean)
    se = epsilon * float(np.std(rel, ddof=1)) / math.sqrt(n) if n > 1 else 0.0

    d = x.shape[0]
    normalizer = 0.5 * d * epsilon * math.log(2.0 * math.pi * epsilon)
    drift_term = float(V.value(x[None])[0] - V.value(y[None])[0])
    value = quad_cost(x, y) + normalizer - epsilon * drift_term - epsilon * log_mean
    warning = None
    if se > abs(value) / 10.0:
        warning = "high_variance"
        logger.warning("langevin cost at eps=%g has SE %.3g above a tenth of its value %.3g", epsilon, se, value)
    return LangevinCost(value, se, normalizer, value - normalizer, n, warning)


def sample_langevin_bridge(
    x,
    y,
    V: PotentialField,
    epsilon: float,
    grid,
    n: int,
    seed: int,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> PathEnsemble:
    """Brownian bridges x -> y weighted towards the Langevin bridge; flags low ESS below n/100."""
    if n < 1:
        raise ValidationError(f"n must be at least 1, got {n}.")
    grid = check_grid(grid)

    def _chunk(size: int, rng: np.random.Generator):
        values = sample_bridges(x, y, epsilon, grid, size, rng)
        return values, langevin_log_weights(values, grid, V, epsilon)

    chunks = map_chunks(_chunk, n, seed, chunk_size)
    ensemble = PathEnsemble(
        grid, concat_chunks([c[0] for c in chunks]), epsilon, seed=seed,
        weights=np.exp(concat_chunks([c[1] for c in chunks])),
    )
    if ensemble.ess < n / 100.0:
        logger.warning("Langevin bridge weights degenerate: ESS %.1f of %d", ensemble.ess, n)
        ensemble = PathEnsemble(ensemble.grid, ensemble.values, epsilon, seed, ensemble.weights, flags=("low_ess",))
    return ensemble


def langevin_cost_matrix(
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    V: PotentialField,
    epsilon: float,
    n: int,
    seed: int,
    grid=None,
) -> np.ndarray:
    """c_eps between every atom pair, one independent stream per pair.

    Feed the result to sinkhorn(cost=...) for the Schrödinger problem with Langevin reference.
    """
    if mu0.dim != mu1.dim:
        raise ValidationError(f"Dimension mismatch: mu0 is {mu0.dim}-d, mu1 is {mu1.dim}-d.")
    out = np.empty((mu0.size, mu1.size))
    for i in range(mu0.size):
        for j in range(mu1.size):
            out[i, j] = langevin_cost(mu0.points[i], mu1.points[j], V, epsilon, n, seed, grid, stream=(i, j)).value
    return out
