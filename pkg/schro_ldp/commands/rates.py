"""`rate` and `inf-rate`: rate functionals of a path and their infima over events."""

from __future__ import annotations

from schro_ldp.commands import positive_int, vector
from schro_ldp.config import DEFAULT_GRID_SIZE
from schro_ldp.errors import ValidationError
from schro_ldp.events import EventSet
from schro_ldp.io import atomic_write_text, dumps_json, emit, path_csv, read_json, read_measure_csv, read_path_csv
from schro_ldp.ot_dual import ot_solve_exact
from schro_ldp.rates import (
    RATES,
    RateContext,
    default_event_grid,
    inf_rate_over_event,
    rate_I,
    rate_J_mix,
    rate_J_xy,
    two_point_rate,
)


def _instance_args(p) -> None:
    p.add_argument("--kind", required=True, choices=RATES)
    p.add_argument("--x", type=vector, help="pinned start for Jxy, e.g. 0 or 0,1")
    p.add_argument("--y", type=vector, help="pinned end for Jxy")
    p.add_argument("--mu0", metavar="CSV", help="source measure for I and Jmix")
    p.add_argument("--mu1", metavar="CSV", help="target measure for I and Jmix")


def register(sub, common) -> None:
    p = sub.add_parser("rate", parents=[common], help="evaluate a rate functional")
    _instance_args(p)
    p.add_argument("--path", metavar="CSV", help="path with columns t,x1..xd")
    p.add_argument("--two-point", nargs=2, type=float, metavar=("S", "T"),
                   help="with --kind I: rate of (h(S), h(T)) = (x, y)")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=run_rate)

    p = sub.add_parser("inf-rate", parents=[common], help="infimum of a rate over an event")
    _instance_args(p)
    p.add_argument("--event", required=True, metavar="JSON")
    p.add_argument("--grid-size", type=positive_int, default=DEFAULT_GRID_SIZE)
    p.add_argument("--argmin-out", metavar="CSV", help="write the minimizing path here")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=run_inf_rate)


def _measures(args):
    if not (args.mu0 and args.mu1):
        raise ValidationError(f"--kind {args.kind} needs --mu0 and --mu1.")
    return read_measure_csv(args.mu0), read_measure_csv(args.mu1)


def _context(args) -> RateContext:
    if args.kind == "Jxy":
        if args.x is None or args.y is None:
            raise ValidationError("--kind Jxy needs --x and --y.")
        return RateContext.bridge(args.x, args.y)
    mu0, mu1 = _measures(args)
    if args.kind == "Jmix":
        return RateContext.product(mu0, mu1)
    _, duals = ot_solve_exact(mu0, mu1)
    return RateContext.schrodinger(duals)


def run_rate(args, run) -> None:
    """Print the rate as a bare JSON scalar; an infinite rate prints "inf"."""
    if args.two_point is not None:
        if args.kind != "I" or args.x is None or args.y is None:
            raise ValidationError("--two-point needs --kind I with --x, --y, --mu0 and --mu1.")
        s, t = args.two_point
        _, duals = ot_solve_exact(*_measures(args))
        value = two_point_rate(s, t, args.x, args.y, duals)
        run.event("RESULT", {"kind": "I", "s": s, "t": t, "value": value})
        emit(dumps_json(value), args.out)
        return
    if not args.path:
        raise ValidationError("rate needs --path (or --two-point).")
    path = read_path_csv(args.path)
    if args.kind == "Jxy":
        if args.x is None or args.y is None:
            raise ValidationError("--kind Jxy needs --x and --y.")
        value = rate_J_xy(path, args.x, args.y)
    elif args.kind == "Jmix":
        mu0, mu1 = _measures(args)
        value = rate_J_mix(path, [(c.x, c.y) for c in RateContext.product(mu0, mu1).candidates])
    else:
        _, duals = ot_solve_exact(*_measures(args))
        value = rate_I(path, duals)
    run.event("RESULT", {"kind": args.kind, "value": value})
    emit(dumps_json(value), args.out)


def run_inf_rate(args, run) -> None:
    data = read_json(args.event)
    if not isinstance(data, dict):
        raise ValidationError("The event file must hold a JSON object.")
    event = EventSet.from_dict(data)
    context = _context(args)
    result = inf_rate_over_event(event, context, default_event_grid(event, args.grid_size))
    argmin = None
    if result.argmin is not None:
        text = path_csv(result.argmin)
        if args.argmin_out:
            atomic_write_text(args.argmin_out, text)
            argmin = args.argmin_out
        else:
            argmin = text
    run.event("RESULT", {"kind": args.kind, "value": result.value})
    emit(dumps_json({"kind": args.kind, "value": result.value, "pair": result.pair, "argmin_path_csv": argmin}), args.out)
