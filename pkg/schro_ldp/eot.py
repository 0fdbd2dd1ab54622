"""Static entropic optimal transport: Sinkhorn fixed point of the Schrödinger system.

With marginals mu0 = sum_i w_i delta_{x_i} and mu1 = sum_j v_j delta_{y_j}, the
potentials (phi, psi) solve

    log sum_j v_j exp((phi_i + psi_j - c_ij) / eps) = 0   for every i,
    log sum_i w_i exp((phi_i + psi_j - c_ij) / eps) = 0   for every j,

and the plan is pi_ij = w_i v_j exp((phi_i + psi_j - c_ij) / eps). All updates
run in the log domain so small eps does not underflow the Gibbs kernel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.special import logsumexp

from schro_ldp.config import (
    DEFAULT_SINKHORN_MAX_ITER,
    DEFAULT_SINKHORN_TOL,
    MARGINAL_TOL,
    MASS_EPS,
)
from schro_ldp.errors import ConvergenceError, NumericalError, ValidationError
from schro_ldp.measures import DiscreteMeasure, cost_matrix

if TYPE_CHECKING:
    from schro_ldp.ot_dual import DualPotentials

logger = logging.getLogger(__name__)


# ── Types ──────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class PotentialPair:
    """EOT potentials on the atoms of mu0 (phi) and mu1 (psi) at noise level epsilon."""

    phi: np.ndarray
    psi: np.ndarray
    epsilon: float
    residual: float = 0.0
    iterations: int = 0
    tol: float = DEFAULT_SINKHORN_TOL

    def __post_init__(self):
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.psi))):
            raise NumericalError("EOT potentials must be finite.")
        if self.epsilon <= 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}.")

    def shifted(self, a: float) -> PotentialPair:
        """(phi + a, psi - a): the same plan, a different additive normalization."""
        return PotentialPair(
            self.phi + a, self.psi - a, self.epsilon,
            residual=self.residual, iterations=self.iterations, tol=self.tol,
        )


@dataclass(frozen=True, eq=False)
class Coupling:
    """A joint plan on source x target atoms; epsilon is None for exact OT plans."""

    plan: np.ndarray
    source: DiscreteMeasure
    target: DiscreteMeasure
    epsilon: float | None = None

    def __post_init__(self):
        plan = np.asarray(self.plan, dtype=float)
        if plan.shape != (self.source.size, self.target.size):
            raise ValidationError(
                f"Plan shape {plan.shape} does not match {self.source.size}x{self.target.size} atoms."
            )
        if np.any(plan < 0):
            raise ValidationError("Plan entries must be nonnegative.")
        row_gap = np.max(np.abs(plan.sum(axis=1) - self.source.weights))
        col_gap = np.max(np.abs(plan.sum(axis=0) - self.target.weights))
        if max(row_gap, col_gap) > MARGINAL_TOL:
            raise ValidationError(
                f"Plan marginals off by {max(row_gap, col_gap):.3g} (limit {MARGINAL_TOL})."
            )
        plan.setflags(write=False)
        object.__setattr__(self, "plan", plan)

    def support_pairs(self) -> list[tuple[int, int]]:
        """Atom index pairs carrying positive mass, in row-major order."""
        rows, cols = np.nonzero(self.plan > MASS_EPS)
        return list(zip(rows.tolist(), cols.tolist()))

    def total_cost(self, cost: np.ndarray | None = None) -> float:
        cost = cost_matrix(self.source, self.target) if cost is None else cost
        return float(np.sum(self.plan * cost))


@dataclass(frozen=True)
class ConvergenceRow:
    epsilon: float
    phi_gap: float  # sup |phi_eps - psi^c| over mu0 atoms
    psi_gap: float  # sup |psi_eps - psi| over mu1 atoms


# ── Solver ─────────────────────────────────────────────────────────────────────

def _checked_cost(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cost: np.ndarray | None) -> np.ndarray:
    if cost is None:
        return cost_matrix(mu0, mu1)
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (mu0.size, mu1.size) or not np.all(np.isfinite(cost)):
        raise ValidationError(f"Cost override must be a finite {mu0.size}x{mu1.size} matrix.")
    return cost


def _log_weights(mu: DiscreteMeasure) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(mu.weights)


def _residuals(phi, psi, cost, log_a, log_b, epsilon) -> tuple[np.ndarray, np.ndarray]:
    z = (phi[:, None] + psi[None, :] - cost) / epsilon
    r0 = logsumexp(z + log_b[None, :], axis=1)
    r1 = logsumexp(z + log_a[:, None], axis=0)
    return r0, r1


def schrodinger_residuals(
    pot: PotentialPair,
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    cost: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom log residuals of both Schrödinger identities (zero at the fixed point)."""
    cost = _checked_cost(mu0, mu1, cost)
    return _residuals(pot.phi, pot.psi, cost, _log_weights(mu0), _log_weights(mu1), pot.epsilon)


def sinkhorn(
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    epsilon: float,
    tol: float = DEFAULT_SINKHORN_TOL,
    max_iter: int = DEFAULT_SINKHORN_MAX_ITER,
    *,
    cost: np.ndarray | None = None,
    init: PotentialPair | None = None,
) -> PotentialPair:
    """Solve the Schrödinger system by alternating log-domain updates.

    Stops when the larger of the two per-atom log residuals is at most tol.
    The returned potentials are normalized so that their integrals coincide.
    Raises ConvergenceError (carrying the last residual) after max_iter sweeps.
    """
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}.")
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}.")
    cost = _checked_cost(mu0, mu1, cost)
    log_a, log_b = _log_weights(mu0), _log_weights(mu1)

    if init is not None:
        if init.phi.shape != (mu0.size,) or init.psi.shape != (mu1.size,):
            raise ValidationError("Warm-start potentials do not match the atom counts.")
        psi = np.array(init.psi, dtype=float)
    else:
        psi = np.zeros(mu1.size)

    residual = np.inf
    for it in range(1, max_iter + 1):
        phi = -epsilon * logsumexp((psi[None, :] - cost) / epsilon + log_b[None, :], axis=1)
        psi = -epsilon * logsumexp((phi[:, None] - cost) / epsilon + log_a[:, None], axis=0)
        r0, r1 = _residuals(phi, psi, cost, log_a, log_b, epsilon)
        residual = float(max(np.max(np.abs(r0)), np.max(np.abs(r1))))
        if residual <= tol:
            logger.info("sinkhorn converged: eps=%g iterations=%d residual=%.3g", epsilon, it, residual)
            pot = PotentialPair(phi, psi, epsilon, residual=residual, iterations=it, tol=tol)
            return normalize_potentials(pot, mu0, mu1)
        if it % 1000 == 0:
            logger.debug("sinkhorn eps=%g iteration=%d residual=%.3g", epsilon, it, residual)

    raise ConvergenceError(
        f"Sinkhorn did not reach tol={tol:g} within {max_iter} iterations "
        f"(eps={epsilon:g}, last residual {residual:.3g}).",
        residual=residual,
        iterations=max_iter,
    )


def sinkhorn_schedule(
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    eps_schedule: Sequence[float],
    tol: float = DEFAULT_SINKHORN_TOL,
    max_iter: int = DEFAULT_SINKHORN_MAX_ITER,
    *,
    cost: np.ndarray | None = None,
) -> list[PotentialPair]:
    """Solve along a strictly decreasing schedule, warm-starting each eps from the previous one."""
    eps = [float(e) for e in eps_schedule]
    if not eps:
        raise ValidationError("The eps schedule is empty.")
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError("The eps schedule must be positive and strictly decreasing.")
    pots: list[PotentialPair] = []
    init = None
    for e in eps:
        pot = sinkhorn(mu0, mu1, e, tol, max_iter, cost=cost, init=init)
        pots.append(pot)
        init = pot
    return pots


def eot_plan(
    pot: PotentialPair,
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    cost: np.ndarray | None = None,
) -> Coupling:
    """Plan with density exp((phi + psi - c) / eps) against mu0 x mu1."""
    cost = _checked_cost(mu0, mu1, cost)
    if pot.phi.shape != (mu0.size,) or pot.psi.shape != (mu1.size,):
        raise ValidationError("Potentials do not match the atom counts.")
    r0, r1 = _residuals(pot.phi, pot.psi, cost, _log_weights(mu0), _log_weights(mu1), pot.epsilon)
    residual = float(max(np.max(np.abs(r0)), np.max(np.abs(r1))))
    if residual > pot.tol + 1e-12:
        raise NumericalError(
            f"Potentials are not solved to tolerance (residual {residual:.3g} > {pot.tol:g}).",
            residual=residual,
        )
    plan = np.outer(mu0.weights, mu1.weights) * np.exp(
        (pot.phi[:, None] + pot.psi[None, :] - cost) / pot.epsilon
    )
    return Coupling(plan, mu0, mu1, epsilon=pot.epsilon)


def normalize_potentials(pot: PotentialPair, mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> PotentialPair:
    """Shift (phi, psi) to (phi + a, psi - a) so that int phi dmu0 = int psi dmu1."""
    a = 0.5 * (mu1.integrate(pot.psi) - mu0.integrate(pot.phi))
    return pot.shifted(a)


def eot_objective(pot: PotentialPair, plan: Coupling, cost: np.ndarray | None = None) -> tuple[float, float]:
    """Primal value int c dpi + eps H(pi | mu0 x mu1) and dual value int phi dmu0 + int psi dmu1."""
    cost = _checked_cost(plan.source, plan.target, cost)
    ref = np.outer(plan.source.weights, plan.target.weights)
    mask = plan.plan > 0
    entropy = float(np.sum(plan.plan[mask] * np.log(plan.plan[mask] / ref[mask])))
    primal = float(np.sum(plan.plan * cost)) + pot.epsilon * entropy
    dual = plan.source.integrate(pot.phi) + plan.target.integrate(pot.psi)
    return primal, dual


# ── Zero-noise convergence ─────────────────────────────────────────────────────

def potential_convergence_curve(
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    eps_schedule: Sequence[float],
    duals: DualPotentials,
    tol: float = 1e-9,
    max_iter: int = DEFAULT_SINKHORN_MAX_ITER,
) -> list[ConvergenceRow]:
    """Sup-norm gaps between normalized EOT potentials and normalized OT potentials, per eps."""
    if not duals.normalized:
        raise ValidationError("OT potentials must be normalized before comparison.")
    rows = []
    for pot in sinkhorn_schedule(mu0, mu1, eps_schedule, tol, max_iter):
        row = ConvergenceRow(
            epsilon=pot.epsilon,
            phi_gap=float(np.max(np.abs(pot.phi - duals.psi_c))),
            psi_gap=float(np.max(np.abs(pot.psi - duals.psi))),
        )
        logger.info("eps=%g phi_gap=%.3g psi_gap=%.3g", row.epsilon, row.phi_gap, row.psi_gap)
        rows.append(row)
    return rows
