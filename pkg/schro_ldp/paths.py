"""Piecewise-linear paths on time grids, the H-norm, and bridge sampling.

A Brownian bridge from x to y at noise level eps is sigma^{xy} + sqrt(eps) W°
with sigma^{xy}(t) = (1 - t) x + t y and W° the standard pinned process. On a
grid, W° is drawn point by point from its exact conditional law given the
previous point and the pin W°(1) = 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from schro_ldp.config import DEFAULT_CHUNK_SIZE, DEFAULT_GRID_SIZE, MASS_EPS
from schro_ldp.errors import ValidationError
from schro_ldp.measures import _as_vector
from schro_ldp.parallel import concat_chunks, map_chunks

logger = logging.getLogger(__name__)

KNOT_TOL = 1e-12


# ── Grids ──────────────────────────────────────────────────────────────────────

def check_grid(grid) -> np.ndarray:
    grid = np.array(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValidationError("A time grid needs at least two points.")
    if grid[0] != 0.0 or grid[-1] != 1.0:
        raise ValidationError(f"A time grid must start at 0 and end at 1, got [{grid[0]}, {grid[-1]}].")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("A time grid must be strictly increasing.")
    return grid


def uniform_grid(m: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """M + 1 equally spaced times on [0, 1]."""
    if m < 1:
        raise ValidationError(f"Grid size must be at least 1, got {m}.")
    grid = np.linspace(0.0, 1.0, m + 1)
    grid[-1] = 1.0
    return grid


def grid_with_knots(m: int, knots: Sequence[float]) -> np.ndarray:
    """Uniform grid of size m with the given knots inserted exactly.

    Uniform points closer than KNOT_TOL to a knot are dropped in its favour.
    """
    knots = np.asarray(knots, dtype=float)
    if np.any((knots < 0) | (knots > 1)):
        raise ValidationError("Knots must lie in [0, 1].")
    base = uniform_grid(m)
    keep = np.all(np.abs(base[:, None] - knots[None, :]) > KNOT_TOL, axis=1) if knots.size else np.ones(base.size, bool)
    return check_grid(np.unique(np.concatenate([base[keep], knots, [0.0, 1.0]])))


def refine_grid(grid) -> np.ndarray:
    """Insert the midpoint of every interval."""
    grid = check_grid(grid)
    mids = 0.5 * (grid[:-1] + grid[1:])
    out = np.empty(2 * grid.size - 1)
    out[0::2] = grid
    out[1::2] = mids
    return out


def has_knot(grid: np.ndarray, t: float) -> bool:
    return bool(np.any(np.abs(grid - t) <= KNOT_TOL))


# ── Types ──────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Path:
    """Values in R^d at the grid times, linear in between."""

    grid: np.ndarray    # (M + 1,)
    values: np.ndarray  # (M + 1, d)

    def __post_init__(self):
        grid = check_grid(self.grid)
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != grid.size:
            raise ValidationError(f"Path values of shape {values.shape} do not match a grid of {grid.size} points.")
        if not np.all(np.isfinite(values)):
            raise ValidationError("Path values must be finite.")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_knots(cls, knots) -> Path:
        """Build from rows (t, x1..xd); the first t must be 0 and the last 1."""
        knots = np.atleast_2d(np.asarray(knots, dtype=float))
        if knots.shape[1] < 2:
            raise ValidationError("Knot rows need a time and at least one coordinate.")
        return cls(knots[:, 0], knots[:, 1:])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.values[0]

    @property
    def end(self) -> np.ndarray:
        return self.values[-1]

    def at(self, t) -> np.ndarray:
        """Linear interpolation at time(s) t; returns (d,) for a scalar, (k, d) for k times."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any((ts < 0) | (ts > 1)):
            raise ValidationError("Evaluation times must lie in [0, 1].")
        out = np.stack([np.interp(ts, self.grid, self.values[:, k]) for k in range(self.dim)], axis=1)
        return out[0] if np.ndim(t) == 0 else out

    def on_grid(self, grid) -> Path:
        return Path(grid, self.at(check_grid(grid)))


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Sampled paths on a shared grid.

    `weights` are raw positive importance weights (None means equal weights);
    `normalizer` records their mean. `pairs` holds the (source, target) atom
    indices each path was drawn between, when the sampler has atoms.
    """

    grid: np.ndarray
    values: np.ndarray  # (n, M + 1, d)
    epsilon: float
    seed: int | None = None
    weights: np.ndarray | None = None
    pairs: np.ndarray | None = None
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        grid = check_grid(self.grid)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3 or values.shape[1] != grid.size:
            raise ValidationError(f"Ensemble values of shape {values.shape} do not match the grid.")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (values.shape[0],) or not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValidationError("Ensemble weights must be positive and finite, one per path.")
            object.__setattr__(self, "weights", w)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @property
    def paths(self) -> list[Path]:
        return [Path(self.grid, v) for v in self.values]

    @property
    def normalizer(self) -> float:
        return 1.0 if self.weights is None else float(np.mean(self.weights))

    @property
    def normalized_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(len(self), 1.0 / len(self))
        return self.weights / self.weights.sum()

    @property
    def ess(self) -> float:
        """Kish effective sample size of the weights."""
        w = self.normalized_weights
        return float(1.0 / np.sum(w * w))

    def mean_path(self, weighted: bool = True) -> Path:
        w = self.normalized_weights if weighted else np.full(len(self), 1.0 / len(self))
        return Path(self.grid, np.einsum("n,nmd->md", w, self.values))


# ── Geodesics and the H-norm ───────────────────────────────────────────────────

def geodesic(x, y, grid) -> Path:
    """sigma^{xy}(t) = (1 - t) x + t y on the grid."""
    x = _as_vector(x)
    y = _as_vector(y, x.shape[0])
    grid = check_grid(grid)
    return Path(grid, _geodesic_values(x, y, grid))


def _geodesic_values(x: np.ndarray, y: np.ndarray, grid: np.ndarray) -> np.ndarray:
    t = grid[:, None]
    return (1.0 - t) * x[None, :] + t * y[None, :]


def h_norm_sq(path: Path) -> float:
    """sum |dh|^2 / dt, the exact integral of |h'|^2 for a piecewise-linear path."""
    return float(_h_norm_sq_values(path.values, path.grid))


def _h_norm_sq_values(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """H-norm squared along the second-to-last axis; values (..., M + 1, d)."""
    dv = np.diff(values, axis=-2)
    dt = np.diff(grid)[:, None]
    return np.sum(dv * dv / dt, axis=(-2, -1))


def h_inner(g: np.ndarray, xi: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """(g, xi)_H = sum dg . dxi / dt for a fixed g (M + 1, d) against xi (..., M + 1, d)."""
    dg = np.diff(g, axis=0) / np.diff(grid)[:, None]
    return np.sum(np.diff(xi, axis=-2) * dg, axis=(-2, -1))


# ── Bridge sampling ────────────────────────────────────────────────────────────

def bridge_noise(grid, size: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """`size` draws of the standard pinned process W° on the grid, shape (size, M + 1, dim)."""
    grid = check_grid(grid)
    out = np.zeros((size, grid.size, dim))
    for i in range(1, grid.size - 1):
        rest = 1.0 - grid[i - 1]
        dt = grid[i] - grid[i - 1]
        mean = out[:, i - 1] * (1.0 - dt / rest)
        var = dt * (1.0 - grid[i]) / rest
        out[:, i] = mean + np.sqrt(var) * rng.standard_normal((size, dim))
    return out


def sample_bridges(x, y, epsilon: float, grid, size: int, rng: np.random.Generator) -> np.ndarray:
    """`size` bridge paths x -> y as an array (size, M + 1, d) with exact endpoints."""
    if epsilon < 0:
        raise ValidationError(f"epsilon must be nonnegative, got {epsilon}.")
    x = _as_vector(x)
    y = _as_vector(y, x.shape[0])
    grid = check_grid(grid)
    values = np.broadcast_to(_geodesic_values(x, y, grid), (size, grid.size, x.shape[0])).copy()
    if epsilon > 0:
        values += np.sqrt(epsilon) * bridge_noise(grid, size, x.shape[0], rng)
    values[:, 0] = x
    values[:, -1] = y
    return values


def sample_brownian_bridge(x, y, epsilon: float, grid, rng: np.random.Generator) -> Path:
    """One Brownian bridge from x to y at noise level epsilon; epsilon = 0 gives the geodesic."""
    return Path(check_grid(grid), sample_bridges(x, y, epsilon, grid, 1, rng)[0])


def sample_schrodinger_bridge(
    plan,
    epsilon: float,
    grid,
    n: int,
    seed: int,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> PathEnsemble:
    """Plan-weighted mixture of Brownian bridges: draw an atom pair from the plan, then a bridge.

    With an exact OT plan and epsilon = 0 every path is a geodesic of the plan's support.
    """
    if n < 1:
        raise ValidationError(f"n must be at least 1, got {n}.")
    if epsilon < 0:
        raise ValidationError(f"epsilon must be nonnegative, got {epsilon}.")
    grid = check_grid(grid)
    flat = np.asarray(plan.plan, dtype=float).ravel()
    probs = flat / flat.sum()
    m = plan.target.size

    def _chunk(size: int, rng: np.random.Generator):
        k = rng.choice(flat.size, size=size, p=probs)
        i, j = np.divmod(k, m)
        x = plan.source.points[i]
        y = plan.target.points[j]
        values = (1.0 - grid)[None, :, None] * x[:, None, :] + grid[None, :, None] * y[:, None, :]
        if epsilon > 0:
            values += np.sqrt(epsilon) * bridge_noise(grid, size, plan.source.dim, rng)
        values[:, 0] = x
        values[:, -1] = y
        return values, np.stack([i, j], axis=1)

    chunks = map_chunks(_chunk, n, seed, chunk_size)
    values = concat_chunks([c[0] for c in chunks])
    pairs = concat_chunks([c[1] for c in chunks])
    logger.info("sampled %d Schrödinger-bridge paths (eps=%g, %d grid points)", n, epsilon, grid.size)
    return PathEnsemble(grid, values, epsilon, seed=seed, pairs=pairs)


# ── Support geometry ───────────────────────────────────────────────────────────

def support_distances(values: np.ndarray, grid, plan) -> np.ndarray:
    """Grid sup-norm distance of each path in values (n, M + 1, d) to the nearest support geodesic."""
    grid = check_grid(grid)
    rows, cols = np.nonzero(plan.plan > MASS_EPS)
    if rows.size == 0:
        raise ValidationError("The plan has no positive-mass pair.")
    values = np.asarray(values, dtype=float)
    best = np.full(values.shape[0], np.inf)
    for i, j in zip(rows, cols):
        geo = _geodesic_values(plan.source.points[i], plan.target.points[j], grid)
        best = np.minimum(best, np.max(np.abs(values - geo[None]), axis=(1, 2)))
    return best


def support_distance(path: Path, plan) -> float:
    """min over positive-mass pairs (x, y) of the grid sup-norm distance to sigma^{xy}."""
    return float(support_distances(path.values[None], path.grid, plan)[0])
