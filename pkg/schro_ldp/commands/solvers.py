"""`sinkhorn` and `ot`: static solvers on two measure CSVs."""

from __future__ import annotations

import logging

from schro_ldp.commands import nonnegative_float, positive_int
from schro_ldp.config import DEFAULT_SINKHORN_MAX_ITER, DEFAULT_SINKHORN_TOL
from schro_ldp.eot import eot_objective, eot_plan, potential_convergence_curve, sinkhorn_schedule
from schro_ldp.errors import ValidationError
from schro_ldp.io import dumps_json, emit, read_measure_csv
from schro_ldp.ot_dual import ot_solve_exact

logger = logging.getLogger(__name__)


def register(sub, common) -> None:
    p = sub.add_parser("sinkhorn", parents=[common], help="solve the Schrödinger system (EOT potentials)")
    p.add_argument("--mu0", required=True, metavar="CSV")
    p.add_argument("--mu1", required=True, metavar="CSV")
    p.add_argument("--eps", required=True, nargs="+", type=nonnegative_float, help="one value or a decreasing schedule")
    p.add_argument("--tol", type=float, default=DEFAULT_SINKHORN_TOL)
    p.add_argument("--max-iter", type=positive_int, default=DEFAULT_SINKHORN_MAX_ITER)
    p.add_argument("--plan", action="store_true", help="include the EOT plan")
    p.add_argument("--compare-ot", action="store_true", help="add sup-norm gaps to the normalized OT potentials")
    p.add_argument("--out", metavar="PATH", help="JSON output file (default stdout)")
    p.set_defaults(func=run_sinkhorn)

    p = sub.add_parser("ot", parents=[common], help="exact OT plan and Kantorovich potentials")
    p.add_argument("--mu0", required=True, metavar="CSV")
    p.add_argument("--mu1", required=True, metavar="CSV")
    p.add_argument("--out", metavar="PATH", help="JSON output file (default stdout)")
    p.set_defaults(func=run_ot)


def run_sinkhorn(args, run) -> None:
    """One eps prints a flat {phi, psi, residual, iters, ...} object; a schedule prints {"solves": [...]}."""
    if any(e <= 0 for e in args.eps):
        raise ValidationError("epsilon must be positive for the Schrödinger system.")
    mu0, mu1 = read_measure_csv(args.mu0), read_measure_csv(args.mu1)
    pots = sinkhorn_schedule(mu0, mu1, args.eps, args.tol, args.max_iter)
    solves = []
    for pot in pots:
        plan = eot_plan(pot, mu0, mu1)
        primal, dual = eot_objective(pot, plan)
        row = {
            "eps": pot.epsilon,
            "phi": pot.phi,
            "psi": pot.psi,
            "residual": pot.residual,
            "iters": pot.iterations,
            "primal": primal,
            "dual": dual,
        }
        if args.plan:
            row["plan"] = plan.plan
        solves.append(row)
        run.event("STAGE", {"stage": "sinkhorn", "eps": pot.epsilon, "iters": pot.iterations})
    out = solves[0] if len(solves) == 1 else {"solves": solves}
    if args.compare_ot:
        _, duals = ot_solve_exact(mu0, mu1)
        rows = potential_convergence_curve(mu0, mu1, args.eps, duals, args.tol, args.max_iter)
        out["ot_gaps"] = [{"eps": r.epsilon, "phi_gap": r.phi_gap, "psi_gap": r.psi_gap} for r in rows]
    emit(dumps_json(out), args.out)


def run_ot(args, run) -> None:
    mu0, mu1 = read_measure_csv(args.mu0), read_measure_csv(args.mu1)
    plan, duals = ot_solve_exact(mu0, mu1)
    primal = plan.total_cost()
    out = {
        "plan": plan.plan,
        "psi": duals.psi,
        "psi_c": duals.psi_c,
        "primal": primal,
        "dual": duals.dual_value(),
    }
    run.event("RESULT", {"primal": primal})
    emit(dumps_json(out), args.out)
