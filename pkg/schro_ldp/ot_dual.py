"""Exact quadratic OT on discrete marginals: plan, Kantorovich potentials, c-transforms."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.sparse.csgraph import NegativeCycleError, csgraph_from_dense, shortest_path

from schro_ldp.config import DUALITY_TOL, FEASIBILITY_TOL, MASS_EPS
from schro_ldp.eot import Coupling
from schro_ldp.errors import NumericalError, ValidationError
from schro_ldp.measures import DiscreteMeasure, as_points, cost_matrix, pairwise_cost

logger = logging.getLogger(__name__)

MAX_ATOMS = 200


@dataclass(frozen=True, eq=False)
class DualPotentials:
    """OT potential psi on mu1 atoms and its c-transform psi_c on mu0 atoms."""

    psi: np.ndarray
    psi_c: np.ndarray
    source: DiscreteMeasure
    target: DiscreteMeasure
    normalized: bool = False

    def normalize(self) -> DualPotentials:
        """Shift so that int psi_c dmu0 = int psi dmu1."""
        a = 0.5 * (self.target.integrate(self.psi) - self.source.integrate(self.psi_c))
        return DualPotentials(self.psi - a, self.psi_c + a, self.source, self.target, normalized=True)

    def dual_value(self) -> float:
        return self.source.integrate(self.psi_c) + self.target.integrate(self.psi)


# ── c-transform ────────────────────────────────────────────────────────────────

def c_transform(psi, atoms, queries, *, return_argmin: bool = False):
    """psi^c(x) = min over atoms y of c(x, y) - psi(y), for every query point x.

    Ties go to the lowest atom index. Atoms with psi = -inf never attain the min.
    """
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    atoms = np.asarray(atoms, dtype=float)
    if atoms.size == 0 or psi.size == 0:
        raise ValidationError("c-transform needs a nonempty atom set.")
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    if psi.shape != (atoms.shape[0],):
        raise ValidationError(f"Got {psi.size} potential values for {atoms.shape[0]} atoms.")
    if not np.any(np.isfinite(psi)):
        raise ValidationError("The potential must be finite on at least one atom.")
    queries = as_points(queries, atoms.shape[1])
    values = pairwise_cost(queries, atoms) - psi[None, :]
    idx = np.argmin(values, axis=1)
    result = values[np.arange(values.shape[0]), idx]
    if return_argmin:
        return result, idx
    return result


# ── Exact solve ────────────────────────────────────────────────────────────────

def _transport_lp(cost: np.ndarray, a: np.ndarray, b: np.ndarray):
    n, m = cost.shape
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    a_eq = sparse.vstack([rows, cols]).tocsr()
    res = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise NumericalError(f"Transport LP failed: {res.message}")
    return res


def _centered_potential(plan: np.ndarray, cost: np.ndarray) -> np.ndarray | None:
    """Canonical psi on the optimal dual face of a fixed optimal plan.

    With psi_k - psi_j <= min over support rows i of (c_ik - c_ij) for every
    pair of supported columns, the feasible set is the potential polyhedron of
    a difference-constraint graph. Averaging the forward and backward
    shortest-path potentials over all roots picks a point independent of the
    LP vertex; unsupported columns get -inf and are filled in by polishing.
    Returns None when the graph has a negative cycle (plan not cyclically
    monotone to working precision).
    """
    support = plan > MASS_EPS
    cols = np.flatnonzero(support.any(axis=0))
    sub = cost[:, cols]
    k = cols.size
    weights = np.full((k, k), np.inf)
    for i in np.flatnonzero(support.any(axis=1)):
        s = np.flatnonzero(support[i, cols])
        weights[s, :] = np.minimum(weights[s, :], sub[i][None, :] - sub[i, s][:, None])
    np.fill_diagonal(weights, np.inf)
    try:
        dist = shortest_path(csgraph_from_dense(weights, null_value=np.inf), method="FW", directed=True)
    except NegativeCycleError:
        return None
    if not np.all(np.isfinite(dist)):
        return None
    centered = np.mean(dist - dist.T, axis=0) / 2.0
    psi = np.full(cost.shape[1], -np.inf)
    psi[cols] = centered
    return psi


def ot_solve_exact(mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> tuple[Coupling, DualPotentials]:
    """Optimal plan and normalized OT potentials for the quadratic cost.

    The plan comes from a simplex solve of the transport LP. The potential is
    the centered point of the optimal dual face (see _centered_potential),
    falling back to the LP multipliers, then polished to psi = (psi^c)^c and
    normalized. Raises NumericalError if feasibility or strong duality fail.
    """
    if mu0.size > MAX_ATOMS or mu1.size > MAX_ATOMS:
        logger.warning("exact OT on %dx%d atoms exceeds the desk-scale limit of %d", mu0.size, mu1.size, MAX_ATOMS)
    cost = cost_matrix(mu0, mu1)
    res = _transport_lp(cost, mu0.weights, mu1.weights)
    plan = res.x.reshape(cost.shape)
    plan = np.where(plan > MASS_EPS, plan, 0.0)

    psi = _centered_potential(plan, cost)
    if psi is None:
        logger.warning("dual centering failed; using LP multipliers")
        psi = np.asarray(res.eqlin.marginals[mu0.size:], dtype=float)

    psi_c = c_transform(psi, mu1.points, mu0.points)
    psi = c_transform(psi_c, mu0.points, mu1.points)
    psi_c = c_transform(psi, mu1.points, mu0.points)
    duals = DualPotentials(psi, psi_c, mu0, mu1).normalize()

    feas = float(np.max(duals.psi_c[:, None] + duals.psi[None, :] - cost))
    if feas > FEASIBILITY_TOL:
        raise NumericalError(f"OT potentials violate feasibility by {feas:.3g}.", residual=feas)
    primal = float(np.sum(plan * cost))
    dual = duals.dual_value()
    gap = abs(primal - dual)
    if gap > DUALITY_TOL:
        raise NumericalError(f"Duality gap {gap:.3g} exceeds {DUALITY_TOL:g} (primal {primal}, dual {dual}).", residual=gap)
    logger.info("exact OT solved: %dx%d atoms, cost=%.12g, gap=%.3g", mu0.size, mu1.size, primal, gap)
    return Coupling(plan, mu0, mu1, epsilon=None), duals


def c_superdiff_residual(duals: DualPotentials, pair: tuple[int, int]) -> float:
    """c(x_i, y_j) - psi^c(x_i) - psi(y_j); zero on the support of the optimal plan."""
    i, j = pair
    if not (0 <= i < duals.source.size and 0 <= j < duals.target.size):
        raise ValidationError(f"Atom pair {pair} is out of range.")
    diff = duals.source.points[i] - duals.target.points[j]
    return float(0.5 * np.sum(diff * diff) - duals.psi_c[i] - duals.psi[j])
