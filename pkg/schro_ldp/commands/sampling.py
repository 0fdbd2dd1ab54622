"""`sample`, `follmer` and `langevin-cost`: path sampling and the Langevin cost."""

from __future__ import annotations

import argparse

import numpy as np

from schro_ldp.commands import nonnegative_float, positive_int, vector
from schro_ldp.config import DEFAULT_GRID_SIZE
from schro_ldp.dynamics import FollmerModel, PotentialField, euler_maruyama, langevin_cost, langevin_cost_matrix
from schro_ldp.eot import Coupling, eot_plan, sinkhorn
from schro_ldp.errors import ValidationError
from schro_ldp.io import dumps_json, emit, read_measure_csv, write_ensemble_csv
from schro_ldp.measures import DiscreteMeasure, quad_cost
from schro_ldp.ot_dual import ot_solve_exact
from schro_ldp.paths import sample_schrodinger_bridge, uniform_grid


def _potential(text: str) -> PotentialField:
    try:
        return PotentialField.parse(text)
    except ValidationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def register(sub, common) -> None:
    p = sub.add_parser("sample", parents=[common], help="sample Schrödinger-bridge paths")
    p.add_argument("--mu0", metavar="CSV")
    p.add_argument("--mu1", metavar="CSV")
    p.add_argument("--x", type=vector, help="single bridge start instead of --mu0")
    p.add_argument("--y", type=vector, help="single bridge end instead of --mu1")
    p.add_argument("--eps", required=True, type=nonnegative_float, help="0 samples the exact OT geodesics")
    p.add_argument("--n", required=True, type=positive_int)
    p.add_argument("--grid-size", type=positive_int, default=DEFAULT_GRID_SIZE)
    p.add_argument("--out", metavar="CSV", help="ensemble CSV (default stdout)")
    p.set_defaults(func=run_sample)

    p = sub.add_parser("follmer", parents=[common], help="simulate the Föllmer SDE by Euler-Maruyama")
    p.add_argument("--mu0", required=True, metavar="CSV")
    p.add_argument("--mu1", required=True, metavar="CSV")
    p.add_argument("--eps", required=True, type=float)
    p.add_argument("--steps", required=True, type=positive_int)
    p.add_argument("--n", required=True, type=positive_int)
    p.add_argument("--record-stride", type=positive_int, default=1, help="keep every k-th grid point")
    p.add_argument("--out", metavar="CSV", help="ensemble CSV (default stdout)")
    p.add_argument("--summary", metavar="JSON", help="write terminal atom frequencies here")
    p.set_defaults(func=run_follmer)

    p = sub.add_parser("langevin-cost", parents=[common], help="Monte Carlo c_eps for a Langevin reference")
    p.add_argument("--V", required=True, type=_potential, metavar="FIELD", help="zero | cosine:A,w[,phase] | bump:A,width[,c...]")
    p.add_argument("--x", type=vector)
    p.add_argument("--y", type=vector)
    p.add_argument("--mu0", metavar="CSV", help="with --mu1: cost matrix and Langevin Schrödinger plan")
    p.add_argument("--mu1", metavar="CSV")
    p.add_argument("--eps", required=True, type=float)
    p.add_argument("--n", type=positive_int, default=100_000)
    p.add_argument("--grid-size", type=positive_int, default=DEFAULT_GRID_SIZE)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=run_langevin_cost)


def run_sample(args, run) -> None:
    if args.x is not None and args.y is not None:
        mu0, mu1 = DiscreteMeasure.dirac(args.x), DiscreteMeasure.dirac(args.y)
        plan = Coupling(np.ones((1, 1)), mu0, mu1)
    elif args.mu0 and args.mu1:
        mu0, mu1 = read_measure_csv(args.mu0), read_measure_csv(args.mu1)
        if args.eps == 0:
            plan, _ = ot_solve_exact(mu0, mu1)
        else:
            plan = eot_plan(sinkhorn(mu0, mu1, args.eps), mu0, mu1)
    else:
        raise ValidationError("sample needs --mu0 and --mu1, or --x and --y.")
    ensemble = sample_schrodinger_bridge(plan, args.eps, uniform_grid(args.grid_size), args.n, args.seed)
    run.event("RESULT", {"paths": len(ensemble)})
    write_ensemble_csv(args.out, ensemble)


def run_follmer(args, run) -> None:
    mu0, mu1 = read_measure_csv(args.mu0), read_measure_csv(args.mu1)
    model = FollmerModel.from_marginals(mu0, mu1, args.eps)
    ensemble = euler_maruyama(model, args.n, args.steps, args.seed, record_stride=args.record_stride)
    freq = np.bincount(ensemble.pairs[:, 1], minlength=mu1.size) / len(ensemble)
    summary = {
        "eps": args.eps,
        "steps": args.steps,
        "n": args.n,
        "terminal_frequencies": freq,
        "target_weights": mu1.weights,
        "total_variation": 0.5 * float(np.sum(np.abs(freq - mu1.weights))),
    }
    run.event("RESULT", summary)
    if args.summary:
        emit(dumps_json(summary), args.summary)
    write_ensemble_csv(args.out, ensemble)


def run_langevin_cost(args, run) -> None:
    grid = uniform_grid(args.grid_size)
    if args.mu0 and args.mu1:
        mu0, mu1 = read_measure_csv(args.mu0), read_measure_csv(args.mu1)
        cost = langevin_cost_matrix(mu0, mu1, args.V, args.eps, args.n, args.seed, grid)
        plan = eot_plan(sinkhorn(mu0, mu1, args.eps, cost=cost), mu0, mu1, cost=cost)
        out = {"V": str(args.V), "eps": args.eps, "cost": cost, "plan": plan.plan}
    elif args.x is not None and args.y is not None:
        est = langevin_cost(args.x, args.y, args.V, args.eps, args.n, args.seed, grid)
        out = {
            "V": str(args.V),
            "eps": args.eps,
            "value": est.value,
            "se": est.se,
            "normalizer": est.normalizer,
            "reduced": est.reduced,
            "quad_cost": quad_cost(args.x, args.y),
            "n": est.n,
            "warning": est.warning,
        }
    else:
        raise ValidationError("langevin-cost needs --x and --y, or --mu0 and --mu1.")
    run.event("RESULT", {"V": str(args.V), "eps": args.eps})
    emit(dumps_json(out), args.out)
