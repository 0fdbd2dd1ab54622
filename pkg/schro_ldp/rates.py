"""Rate functionals on paths and their infima over events.

    J_xy(h)  = |h|_H^2 / 2 - c(x, y)          bridges pinned at (x, y)
    J_mix(h) = min over support pairs of J_xy  mixtures of bridges
    I(h)     = |h|_H^2 / 2 - psi^c(h(0)) - psi(h(1))   Schrödinger bridges

All three are +inf when the endpoints leave the admissible atoms; infinity
is a value here, never an error.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

from schro_ldp.config import DEFAULT_GRID_SIZE, NEGATIVE_RATE_TOL, QP_MAX_SWEEPS, QP_TOL, SNAP_TOL
from schro_ldp.errors import ConvergenceError, NumericalError, ValidationError
from schro_ldp.events import EventSet
from schro_ldp.measures import DiscreteMeasure, _as_vector, as_points, pairwise_cost, quad_cost
from schro_ldp.ot_dual import DualPotentials, c_superdiff_residual
from schro_ldp.paths import Path, _h_norm_sq_values, check_grid, geodesic, grid_with_knots, h_norm_sq, has_knot, uniform_grid

logger = logging.getLogger(__name__)

RATES = ("Jxy", "Jmix", "I")


def _close(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.max(np.abs(a - b)) <= SNAP_TOL)


def _support_atom(mu: DiscreteMeasure, x) -> int | None:
    k = mu.find_atom(x)
    if k is None or mu.weights[k] <= 0:
        return None
    return k


# ── Rate functionals ───────────────────────────────────────────────────────────

def rate_J_xy(path: Path, x, y) -> float:
    """Schilder-type rate of the bridge pinned at (x, y)."""
    x = _as_vector(x, path.dim)
    y = _as_vector(y, path.dim)
    if not (_close(path.start, x) and _close(path.end, y)):
        return math.inf
    cost = quad_cost(x, y)
    value = h_norm_sq(path) / 2.0 - cost
    if value < -NEGATIVE_RATE_TOL * (1.0 + cost):
        raise NumericalError(f"Bridge rate {value:.3g} is negative beyond rounding; the path energy is inconsistent.")
    return max(value, 0.0)


def _pair_list(support) -> list[tuple[np.ndarray, np.ndarray]]:
    if hasattr(support, "support_pairs"):
        return [(support.source.points[i], support.target.points[j]) for i, j in support.support_pairs()]
    pairs = [(np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(y, dtype=float))) for x, y in support]
    return pairs


def rate_J_mix(path: Path, support) -> float:
    """Rate of a mixture of bridges; support is a Coupling or a list of (x, y) pairs."""
    pairs = _pair_list(support)
    if not pairs:
        raise ValidationError("The mixture support is empty.")
    return min(rate_J_xy(path, x, y) for x, y in pairs)


def _require_normalized(duals: DualPotentials) -> None:
    if not duals.normalized:
        raise ValidationError("OT potentials must be normalized.")


def rate_I(path: Path, duals: DualPotentials) -> float:
    """Rate of the Schrödinger bridges; +inf unless both endpoints snap to positive-mass atoms."""
    _require_normalized(duals)
    i = _support_atom(duals.source, path.start)
    j = _support_atom(duals.target, path.end)
    if i is None or j is None:
        return math.inf
    return h_norm_sq(path) / 2.0 - float(duals.psi_c[i]) - float(duals.psi[j])


def _atom_index(mu: DiscreteMeasure, atom) -> int:
    if isinstance(atom, (int, np.integer)):
        k = int(atom)
        if not 0 <= k < mu.size:
            raise ValidationError(f"Atom index {k} is out of range.")
    else:
        k = mu.find_atom(atom)
        if k is None:
            raise ValidationError(f"{np.asarray(atom).tolist()} is not an atom.")
    if mu.weights[k] <= 0:
        raise ValidationError(f"Atom {k} carries no mass.")
    return k


def phi_gap(x_atom, y_atom, duals: DualPotentials) -> float:
    """c(x, y) - psi^c(x) - psi(y) for atoms given by index or by location."""
    return c_superdiff_residual(duals, (_atom_index(duals.source, x_atom), _atom_index(duals.target, y_atom)))


# ── Hopf-Lax and two-point marginals ───────────────────────────────────────────

def hopf_lax(f, atoms, t: float, queries) -> np.ndarray:
    """Q_t f(y) = min over atoms x of c(x, y) / t + f(x); Q_0 f = f on the atoms."""
    f = np.atleast_1d(np.asarray(f, dtype=float))
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    if f.shape != (atoms.shape[0],):
        raise ValidationError(f"Got {f.size} values for {atoms.shape[0]} atoms.")
    if not np.any(np.isfinite(f)):
        raise ValidationError("f must be finite on at least one atom.")
    if t < 0:
        raise ValidationError(f"t must be nonnegative, got {t}.")
    queries = as_points(queries, atoms.shape[1])
    if t == 0:
        gaps = np.max(np.abs(queries[:, None, :] - atoms[None, :, :]), axis=2)
        idx = np.argmin(gaps, axis=1)
        if np.any(gaps[np.arange(queries.shape[0]), idx] > SNAP_TOL):
            raise ValidationError("Q_0 is only defined on the atoms.")
        return f[idx]
    return np.min(pairwise_cost(queries, atoms) / t + f[None, :], axis=1)


def _supported(mu: DiscreteMeasure) -> np.ndarray:
    return np.flatnonzero(mu.weights > 0)


def intermediate_potentials(s: float, t: float, x, y, duals: DualPotentials) -> tuple[float, float]:
    """(phi_s(x), psi_t(y)) with phi_s = -Q_s(-psi^c), psi_t = -Q_{1-t}(-psi), -inf off the atoms."""
    _require_normalized(duals)
    xs, ys = _supported(duals.source), _supported(duals.target)
    if s == 0:
        k = _support_atom(duals.source, x)
        phi_s = -math.inf if k is None else float(duals.psi_c[k])
    else:
        phi_s = -float(hopf_lax(-duals.psi_c[xs], duals.source.points[xs], s, x)[0])
    if t == 1:
        k = _support_atom(duals.target, y)
        psi_t = -math.inf if k is None else float(duals.psi[k])
    else:
        psi_t = -float(hopf_lax(-duals.psi[ys], duals.target.points[ys], 1.0 - t, y)[0])
    return phi_s, psi_t


def two_point_rate(s: float, t: float, x, y, duals: DualPotentials) -> float:
    """Rate of (h(s), h(t)) under the Schrödinger bridges: c(x, y)/(t - s) - phi_s(x) - psi_t(y)."""
    if not 0.0 <= s < t <= 1.0:
        raise ValidationError(f"Times must satisfy 0 <= s < t <= 1, got ({s}, {t}).")
    x = _as_vector(x, duals.source.dim)
    y = _as_vector(y, duals.source.dim)
    phi_s, psi_t = intermediate_potentials(s, t, x, y, duals)
    if math.isinf(phi_s) or math.isinf(psi_t):
        return math.inf
    return quad_cost(x, y) / (t - s) - phi_s - psi_t


def _leg(a: np.ndarray, b: np.ndarray, dt: float) -> float:
    if dt == 0:
        return 0.0 if _close(a, b) else math.inf
    return quad_cost(a, b) / dt


def three_leg_energy(xp, x, y, yp, s: float, t: float) -> float:
    """c(x', x)/s + c(x, y)/(t - s) + c(y, y')/(1 - t); a zero-length leg must not move."""
    xp, x, y, yp = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (xp, x, y, yp))
    return _leg(xp, x, s) + _leg(x, y, t - s) + _leg(y, yp, 1.0 - t)


def constrained_optimal_path(xp, x, y, yp, s: float, t: float, grid) -> Path:
    """Straight legs through (0, x'), (s, x), (t, y), (1, y'); s and t must be grid knots."""
    if not 0.0 <= s < t <= 1.0:
        raise ValidationError(f"Times must satisfy 0 <= s < t <= 1, got ({s}, {t}).")
    grid = check_grid(grid)
    if not (has_knot(grid, s) and has_knot(grid, t)):
        raise ValidationError(f"The grid must contain the knots s={s} and t={t}.")
    xp = _as_vector(xp)
    x, y, yp = (_as_vector(v, xp.shape[0]) for v in (x, y, yp))
    if math.isinf(three_leg_energy(xp, x, y, yp, s, t)):
        raise ValidationError("A zero-length leg cannot join distinct points.")
    times, points = [s, t], [x, y]
    if s > 0:
        times.insert(0, 0.0)
        points.insert(0, xp)
    if t < 1:
        times.append(1.0)
        points.append(yp)
    knots = np.array(times)
    pts = np.array(points)
    values = np.stack([np.interp(grid, knots, pts[:, k]) for k in range(xp.shape[0])], axis=1)
    return Path(grid, values)


# ── Tube minimization ──────────────────────────────────────────────────────────

def _polish(h: np.ndarray, lo: np.ndarray, hi: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Red-black projected Gauss-Seidel on the interior points until no point moves by QP_TOL."""
    dt = np.diff(grid)
    a = 1.0 / dt[:-1]  # weight of the left neighbour of interior point i
    b = 1.0 / dt[1:]
    interior = np.arange(1, grid.size - 1)
    colors = [interior[0::2], interior[1::2]]
    for sweep in range(1, QP_MAX_SWEEPS + 1):
        moved = 0.0
        for idx in colors:
            if idx.size == 0:
                continue
            k = idx - 1
            target = (a[k, None] * h[idx - 1] + b[k, None] * h[idx + 1]) / (a[k] + b[k])[:, None]
            new = np.clip(target, lo[idx], hi[idx])
            moved = max(moved, float(np.max(np.abs(new - h[idx]))))
            h[idx] = new
        if moved <= QP_TOL:
            return h
    raise ConvergenceError(f"Tube minimization did not settle within {QP_MAX_SWEEPS} sweeps.", residual=moved, iterations=QP_MAX_SWEEPS)


def clamped_qp(center: Path, radius: float, grid, x, y) -> tuple[float, Path | None]:
    """min |h|_H^2 over grid paths from x to y with |h(t_i) - center(t_i)| <= radius.

    Coordinates decouple; each is a bounded least-squares problem solved by
    BVLS and then polished. Returns (inf, None) when x or y lies outside the tube.
    """
    grid = check_grid(grid)
    x = _as_vector(x, center.dim)
    y = _as_vector(y, center.dim)
    cvals = center.at(grid)
    lo, hi = cvals - radius, cvals + radius
    if np.any(np.abs(x - cvals[0]) > radius) or np.any(np.abs(y - cvals[-1]) > radius):
        return math.inf, None

    m = grid.size - 1
    h = np.empty((grid.size, center.dim))
    h[0], h[-1] = x, y
    if m >= 2:
        sq = np.sqrt(np.diff(grid))
        a = np.zeros((m, m - 1))
        a[np.arange(m - 1), np.arange(m - 1)] = 1.0 / sq[:-1]
        a[np.arange(1, m), np.arange(m - 1)] = -1.0 / sq[1:]
        for k in range(center.dim):
            rhs = np.zeros(m)
            rhs[0] = x[k] / sq[0]
            rhs[-1] = -y[k] / sq[-1]
            res = lsq_linear(a, rhs, bounds=(lo[1:-1, k], hi[1:-1, k]), method="bvls")
            h[1:-1, k] = np.clip(res.x, lo[1:-1, k], hi[1:-1, k])
        h = _polish(h, lo, hi, grid)
    return float(_h_norm_sq_values(h, grid)), Path(grid, h)


# ── Infima over events ─────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Candidate:
    """An admissible endpoint pair and the offset subtracted from the action."""

    i: int
    j: int
    x: np.ndarray
    y: np.ndarray
    offset: float


@dataclass(frozen=True, eq=False)
class RateContext:
    """Which rate functional to minimize and over which endpoint pairs."""

    rate: str
    candidates: tuple[Candidate, ...]

    @classmethod
    def bridge(cls, x, y) -> RateContext:
        x = _as_vector(x)
        y = _as_vector(y, x.shape[0])
        return cls("Jxy", (Candidate(0, 0, x, y, quad_cost(x, y)),))

    @classmethod
    def mixture(cls, support) -> RateContext:
        """support: a Coupling (positive-mass pairs) or a list of (x, y) pairs."""
        if hasattr(support, "support_pairs"):
            idx = support.support_pairs()
        else:
            idx = [(k, k) for k in range(len(support))]
        pairs = _pair_list(support)
        if not pairs:
            raise ValidationError("The mixture support is empty.")
        return cls("Jmix", tuple(Candidate(i, j, x, y, quad_cost(x, y)) for (i, j), (x, y) in zip(idx, pairs)))

    @classmethod
    def product(cls, mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> RateContext:
        """J_mix over the support of mu0 x mu1."""
        cands = [
            Candidate(int(i), int(j), mu0.points[i], mu1.points[j], quad_cost(mu0.points[i], mu1.points[j]))
            for i in _supported(mu0) for j in _supported(mu1)
        ]
        return cls("Jmix", tuple(cands))

    @classmethod
    def schrodinger(cls, duals: DualPotentials) -> RateContext:
        _require_normalized(duals)
        cands = [
            Candidate(int(i), int(j), duals.source.points[i], duals.target.points[j], float(duals.psi_c[i] + duals.psi[j]))
            for i in _supported(duals.source) for j in _supported(duals.target)
        ]
        return cls("I", tuple(cands))


@dataclass(frozen=True, eq=False)
class PairRate:
    value: float
    path: Path


@dataclass(frozen=True, eq=False)
class RateInfimum:
    """inf over the event of the rate; `per_pair` holds each admissible pair's own minimizer."""

    value: float
    argmin: Path | None = None
    pair: tuple[int, int] | None = None
    per_pair: dict[tuple[int, int], PairRate] = field(default_factory=dict)


def default_event_grid(event: EventSet, m: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    if event.kind == "tube":
        return grid_with_knots(m, event.center.grid)
    if event.kind == "two_point":
        return grid_with_knots(m, [event.s, event.t])
    return uniform_grid(m)


def inf_rate_over_event(event: EventSet, context: RateContext, grid=None) -> RateInfimum:
    """Minimize the context's rate over the event; +inf when no endpoint pair is admissible."""
    grid = default_event_grid(event) if grid is None else check_grid(grid)
    per_pair: dict[tuple[int, int], PairRate] = {}

    for cand in context.candidates:
        key = (cand.i, cand.j)
        if event.kind == "tube":
            energy, path = clamped_qp(event.center, event.radius, grid, cand.x, cand.y)
            if path is not None:
                per_pair[key] = PairRate(energy / 2.0 - cand.offset, path)
        elif event.kind == "endpoint":
            if event.admits_endpoints(cand.x, cand.y):
                per_pair[key] = PairRate(quad_cost(cand.x, cand.y) - cand.offset, geodesic(cand.x, cand.y, grid))
        else:
            if not (has_knot(grid, event.s) and has_knot(grid, event.t)):
                raise ValidationError("The grid must contain the two event times.")
            best = None
            for xs, ys in event.pairs:
                value = three_leg_energy(cand.x, xs, ys, cand.y, event.s, event.t) - cand.offset
                if math.isfinite(value) and (best is None or value < best[0]):
                    best = (value, xs, ys)
            if best is not None:
                path = constrained_optimal_path(cand.x, best[1], best[2], cand.y, event.s, event.t, grid)
                per_pair[key] = PairRate(best[0], path)

    if not per_pair:
        logger.info("event admits no endpoint pair; rate infimum is +inf")
        return RateInfimum(math.inf)
    key = min(per_pair, key=lambda k: (per_pair[k].value, k))
    best = per_pair[key]
    logger.info("rate infimum %s over %s event: %.10g at pair %s", context.rate, event.kind, best.value, key)
    return RateInfimum(best.value, best.path, key, per_pair)
