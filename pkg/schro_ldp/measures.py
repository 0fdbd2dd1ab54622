"""Discrete measures, the quadratic cost and cost matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from schro_ldp.config import SNAP_TOL
from schro_ldp.errors import ValidationError

WEIGHT_SUM_TOL = 1e-12


# ── Measures ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms in R^d; immutable after construction."""

    points: np.ndarray   # (n, d)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        points = np.atleast_2d(np.array(self.points, dtype=float))
        weights = np.atleast_1d(np.array(self.weights, dtype=float))
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValidationError("A measure needs at least one atom given as an (n, d) array.")
        if weights.shape != (points.shape[0],):
            raise ValidationError(
                f"Got {weights.shape[0]} weights for {points.shape[0]} atoms."
            )
        if not np.all(np.isfinite(points)) or not np.all(np.isfinite(weights)):
            raise ValidationError("Atoms and weights must be finite.")
        if np.any(weights < 0):
            raise ValidationError("Weights must be nonnegative.")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f"Weights sum to {weights.sum():.15g}, expected 1.")
        if np.unique(points, axis=0).shape[0] != points.shape[0]:
            raise ValidationError("Duplicate atoms are not allowed.")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def dirac(cls, x) -> DiscreteMeasure:
        return cls(np.atleast_2d(np.asarray(x, dtype=float)), np.ones(1))

    @classmethod
    def uniform(cls, points) -> DiscreteMeasure:
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        return cls(points, np.full(points.shape[0], 1.0 / points.shape[0]))

    @classmethod
    def normalized(cls, points, weights) -> DiscreteMeasure:
        """Build a measure from unnormalized nonnegative weights."""
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if total <= 0:
            raise ValidationError("Weights must have positive total mass.")
        return cls(points, weights / total)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def find_atom(self, x, tol: float = SNAP_TOL) -> int | None:
        """Index of the atom within sup-distance tol of x (lowest index wins), else None."""
        x = _as_vector(x, self.dim)
        gaps = np.max(np.abs(self.points - x), axis=1)
        idx = int(np.argmin(gaps))
        return idx if gaps[idx] <= tol else None

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.size, size=n, p=self.weights)

    def __repr__(self) -> str:
        return f"DiscreteMeasure(size={self.size}, dim={self.dim})"


def displacement_interpolation(plan, t: float) -> DiscreteMeasure:
    """Time-t marginal of the zero-noise path law carried by a discrete plan.

    Mass pi_ij sits at (1-t) x_i + t y_j; atoms landing on the same point merge.
    """
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"t must lie in [0, 1], got {t}.")
    rows, cols = np.nonzero(plan.plan > 0)
    pts = (1.0 - t) * plan.source.points[rows] + t * plan.target.points[cols]
    mass = plan.plan[rows, cols]
    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    merged = np.zeros(uniq.shape[0])
    np.add.at(merged, inverse.ravel(), mass)
    return DiscreteMeasure.normalized(uniq, merged)


# ── Cost ───────────────────────────────────────────────────────────────────────

def _as_vector(x, dim: int | None = None) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ValidationError(f"Expected a vector, got shape {x.shape}.")
    if dim is not None and x.shape[0] != dim:
        raise ValidationError(f"Dimension mismatch: expected {dim}, got {x.shape[0]}.")
    return x


def quad_cost(x, y) -> float:
    """c(x, y) = |x - y|^2 / 2."""
    x = _as_vector(x)
    y = _as_vector(y, x.shape[0])
    diff = x - y
    return float(0.5 * np.sum(diff * diff))


def pairwise_cost(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Quadratic cost between every row of xs (n, d) and every row of ys (m, d)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if xs.shape[1] != ys.shape[1]:
        raise ValidationError(f"Dimension mismatch: {xs.shape[1]} vs {ys.shape[1]}.")
    diff = xs[:, None, :] - ys[None, :, :]
    return 0.5 * np.sum(diff * diff, axis=-1)


def cost_matrix(mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> np.ndarray:
    """CostMatrix with entry (i, j) = c(x_i, y_j); rows index mu0, columns mu1."""
    if mu0.dim != mu1.dim:
        raise ValidationError(f"Dimension mismatch: mu0 is {mu0.dim}-d, mu1 is {mu1.dim}-d.")
    return pairwise_cost(mu0.points, mu1.points)


def as_points(values, dim: int) -> np.ndarray:
    """Coerce a point or a list of points to an (n, dim) array.

    A flat array is read as n scalar points when dim == 1 and as a single
    point otherwise.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None] if dim == 1 else arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValidationError(f"Dimension mismatch: expected {dim}-d points, got shape {arr.shape}.")
    return arr
