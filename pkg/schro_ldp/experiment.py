"""LDP verification experiments: config schema, orchestration and the rate report."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

from schro_ldp import __version__
from schro_ldp.config import (
    DEFAULT_CHUNK_SIZE,
    DEFAULT_GRID_SIZE,
    DEFAULT_SINKHORN_TOL,
    MIN_EVENT_SAMPLES,
    RARE_EVENT_THRESHOLD,
    THREADS,
)
from schro_ldp.eot import eot_plan, sinkhorn
from schro_ldp.errors import ConfigError, NumericalError, SchroError, ValidationError
from schro_ldp.events import EventSet
from schro_ldp.harness import (
    BridgeSampler,
    MixtureSampler,
    ProbabilityEstimate,
    SchrodingerSampler,
    event_probability,
    ldp_slope,
)
from schro_ldp.io import dumps_json, read_json, read_measure_csv
from schro_ldp.ledger import RunHandle
from schro_ldp.measures import DiscreteMeasure
from schro_ldp.ot_dual import ot_solve_exact
from schro_ldp.rates import RateContext, RateInfimum, default_event_grid, inf_rate_over_event

logger = logging.getLogger(__name__)

SAMPLERS = ("schrodinger", "mixture", "bridge")
IMPORTANCE_MODES = ("auto", "always", "never")
OUTPUT_FORMATS = ("json", "csv")

CONFIG_KEYS = {
    "instance", "sampler", "event", "schedule", "n", "seed", "tol",
    "grid_size", "importance", "chunk_size", "sinkhorn_tol", "output",
}
REQUIRED_KEYS = {"instance", "event", "schedule", "n", "seed", "tol"}


# ── Config ─────────────────────────────────────────────────────────────────────

def _load_measure(source: Any, base_dir: str) -> DiscreteMeasure:
    if isinstance(source, str):
        path = source if os.path.isabs(source) else os.path.join(base_dir, source)
        return read_measure_csv(path)
    if isinstance(source, dict) and set(source) == {"points", "weights"}:
        return DiscreteMeasure(source["points"], source["weights"])
    raise ConfigError("A measure is a CSV path or an object with 'points' and 'weights'.")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Validated experiment description; `raw` keeps the normalized tree that is hashed."""

    raw: dict
    sampler: str
    event: EventSet
    schedule: tuple[float, ...]
    n: int
    seed: int
    tol: float
    grid_size: int = DEFAULT_GRID_SIZE
    importance: str = "auto"
    chunk_size: int = DEFAULT_CHUNK_SIZE
    sinkhorn_tol: float = DEFAULT_SINKHORN_TOL
    output_dir: str | None = None
    formats: tuple[str, ...] = OUTPUT_FORMATS
    mu0: DiscreteMeasure | None = None
    mu1: DiscreteMeasure | None = None
    x: tuple[float, ...] | None = None
    y: tuple[float, ...] | None = None

    @classmethod
    def from_file(cls, path: str) -> ExperimentConfig:
        try:
            data = read_json(path)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from None
        return cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_dict(cls, data: Any, base_dir: str = ".") -> ExperimentConfig:
        """Validate the whole tree before anything is computed; unknown keys are rejected."""
        if not isinstance(data, dict):
            raise ConfigError("The config must be a JSON object.")
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(sorted(unknown))}.")
        missing = REQUIRED_KEYS - set(data)
        if missing:
            raise ConfigError(f"Missing config keys: {', '.join(sorted(missing))}.")

        sampler = data.get("sampler", "schrodinger")
        if sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {', '.join(SAMPLERS)}, got {sampler!r}.")
        importance = data.get("importance", "auto")
        if importance not in IMPORTANCE_MODES:
            raise ConfigError(f"importance must be one of {', '.join(IMPORTANCE_MODES)}, got {importance!r}.")

        schedule = data["schedule"]
        if not isinstance(schedule, list) or not schedule or not all(isinstance(e, (int, float)) and e > 0 for e in schedule):
            raise ConfigError("schedule must be a nonempty list of positive numbers.")
        if len(set(schedule)) != len(schedule):
            raise ConfigError("schedule entries must be distinct.")
        for key, low in (("n", MIN_EVENT_SAMPLES), ("grid_size", 1), ("chunk_size", 1)):
            value = data.get(key, 1 if key != "n" else None)
            if not isinstance(value, int) or isinstance(value, bool) or value < low:
                raise ConfigError(f"{key} must be an integer of at least {low}.")
        seed = data["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer.")
        for key in ("tol", "sinkhorn_tol"):
            value = data.get(key, 1.0)
            if not isinstance(value, (int, float)) or not value > 0:
                raise ConfigError(f"{key} must be a positive number.")

        try:
            event = EventSet.from_dict(data["event"]) if isinstance(data["event"], dict) else None
        except (ValidationError, TypeError, ValueError) as exc:
            raise ConfigError(f"event: {exc}") from None
        if event is None:
            raise ConfigError("event must be an object.")
        if event.kind == "two_point":
            raise ConfigError("Two-point events have no Monte Carlo probability; use the rate commands.")

        output = data.get("output", {})
        if not isinstance(output, dict) or set(output) - {"dir", "formats"}:
            raise ConfigError("output accepts only 'dir' and 'formats'.")
        formats = tuple(output.get("formats", OUTPUT_FORMATS))
        if not formats or set(formats) - set(OUTPUT_FORMATS):
            raise ConfigError(f"output.formats must be drawn from {', '.join(OUTPUT_FORMATS)}.")
        output_dir = output.get("dir")
        if output_dir is not None and not os.path.isabs(output_dir):
            output_dir = os.path.join(base_dir, output_dir)

        instance = data["instance"]
        if not isinstance(instance, dict):
            raise ConfigError("instance must be an object.")
        fields: dict[str, Any] = {}
        try:
            if sampler == "bridge":
                if set(instance) != {"x", "y"}:
                    raise ConfigError("A bridge instance has exactly the keys 'x' and 'y'.")
                fields["x"] = tuple(float(v) for v in _as_list(instance["x"]))
                fields["y"] = tuple(float(v) for v in _as_list(instance["y"]))
                if len(fields["x"]) != len(fields["y"]):
                    raise ConfigError("x and y differ in dimension.")
            else:
                if set(instance) != {"mu0", "mu1"}:
                    raise ConfigError("An instance has exactly the keys 'mu0' and 'mu1'.")
                fields["mu0"] = _load_measure(instance["mu0"], base_dir)
                fields["mu1"] = _load_measure(instance["mu1"], base_dir)
        except ConfigError:
            raise
        except (ValidationError, TypeError, ValueError) as exc:
            raise ConfigError(f"instance: {exc}") from None

        if sampler != "bridge":
            instance = {
                key: {"points": fields[key].points.tolist(), "weights": fields[key].weights.tolist()}
                for key in ("mu0", "mu1")
            }
        else:
            instance = {"x": list(fields["x"]), "y": list(fields["y"])}
        raw = {
            "instance": instance,
            "sampler": sampler,
            "event": event.to_dict(),
            "schedule": [float(e) for e in schedule],
            "n": data["n"],
            "seed": seed,
            "tol": float(data["tol"]),
            "grid_size": data.get("grid_size", DEFAULT_GRID_SIZE),
            "importance": importance,
            "chunk_size": data.get("chunk_size", DEFAULT_CHUNK_SIZE),
            "sinkhorn_tol": float(data.get("sinkhorn_tol", DEFAULT_SINKHORN_TOL)),
        }
        return cls(
            raw=raw,
            sampler=sampler,
            event=event,
            schedule=tuple(raw["schedule"]),
            n=raw["n"],
            seed=seed,
            tol=raw["tol"],
            grid_size=raw["grid_size"],
            importance=importance,
            chunk_size=raw["chunk_size"],
            sinkhorn_tol=raw["sinkhorn_tol"],
            output_dir=output_dir,
            formats=formats,
            **fields,
        )

    @property
    def config_hash(self) -> str:
        """sha256 of the canonical JSON of the normalized config (output settings excluded)."""
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


# ── Report ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class RateReport:
    event: dict
    eps_schedule: list[float]
    estimates: list[ProbabilityEstimate]
    slope: float
    slope_ci: tuple[float, float]
    rate_inf: float
    verdict: str
    tol: float
    seed: int
    config_hash: str
    version: str = __version__
    sampler: str = "schrodinger"
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "sampler": self.sampler,
            "event": self.event,
            "eps_schedule": self.eps_schedule,
            "estimates": [
                {
                    "eps": e.epsilon, "p_hat": e.p_hat, "se": e.se, "n": e.n, "ess": e.ess,
                    "hits": e.hits, "shifted": e.shifted, "resolvable": e.resolvable, "flags": list(e.flags),
                }
                for e in self.estimates
            ],
            "slope": self.slope,
            "slope_ci": list(self.slope_ci),
            "rate_inf": self.rate_inf,
            "tol": self.tol,
            "verdict": self.verdict,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    def to_csv(self) -> str:
        """Companion table (eps, p_hat, se, eps_log_p) for plotting."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["eps", "p_hat", "se", "eps_log_p"])
        for e in self.estimates:
            writer.writerow([repr(e.epsilon), repr(e.p_hat), repr(e.se), "-inf" if e.p_hat <= 0 else repr(e.eps_log_p)])
        return buf.getvalue()


# ── Orchestration ──────────────────────────────────────────────────────────────

def _rate_context(config: ExperimentConfig) -> RateContext:
    if config.sampler == "bridge":
        return RateContext.bridge(config.x, config.y)
    if config.sampler == "mixture":
        return RateContext.product(config.mu0, config.mu1)
    _, duals = ot_solve_exact(config.mu0, config.mu1)
    return RateContext.schrodinger(duals)


def rate_infimum(config: ExperimentConfig) -> RateInfimum:
    """inf over the config's event of its sampler's rate, on the experiment grid."""
    event = config.event
    return inf_rate_over_event(event, _rate_context(config), default_event_grid(event, config.grid_size))


def _sampler_at(config: ExperimentConfig, epsilon: float):
    if config.sampler == "bridge":
        return BridgeSampler(config.x, config.y)
    if config.sampler == "mixture":
        return MixtureSampler(config.mu0, config.mu1)
    pot = sinkhorn(config.mu0, config.mu1, epsilon, tol=config.sinkhorn_tol)
    return SchrodingerSampler(eot_plan(pot, config.mu0, config.mu1))


def run_ldp_experiment(config: ExperimentConfig, ledger: RunHandle | None = None) -> RateReport:
    """Estimate eps log P(A) along the schedule, extrapolate, and compare with inf_A of the rate.

    Per-eps runs use independent streams derived from (seed, eps index), so
    they execute concurrently without changing any number in the report.
    """
    event = config.event
    grid = default_event_grid(event, config.grid_size)
    rate = rate_infimum(config)
    logger.info("rate infimum over the event: %.10g", rate.value)
    if ledger is not None:
        ledger.event("STAGE", {"stage": "rate_inf", "value": rate.value})
    can_shift = event.kind == "tube" and math.isfinite(rate.value)

    def _estimate(k: int, epsilon: float) -> ProbabilityEstimate:
        sampler = _sampler_at(config, epsilon)
        common = dict(grid=grid, chunk_size=config.chunk_size)
        if config.importance == "always" and can_shift:
            return event_probability(sampler, event, epsilon, config.n, config.seed, shift=rate, stream=(k, 1), **common)
        est = event_probability(sampler, event, epsilon, config.n, config.seed, stream=(k, 0), **common)
        if config.importance == "auto" and can_shift and est.p_hat < RARE_EVENT_THRESHOLD:
            logger.info("eps=%g: p_hat %.3g below %g, switching to the shifted estimator", epsilon, est.p_hat, RARE_EVENT_THRESHOLD)
            est = event_probability(sampler, event, epsilon, config.n, config.seed, shift=rate, stream=(k, 1), **common)
        return est

    workers = max(1, min(THREADS, len(config.schedule)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        estimates = list(pool.map(_estimate, range(len(config.schedule)), config.schedule))
    if ledger is not None:
        for est in estimates:
            ledger.event("STAGE", {"stage": "estimate", "eps": est.epsilon, "p_hat": est.p_hat, "se": est.se})

    usable = [(e.epsilon, (e.p_hat, e.se)) for e in estimates if e.resolvable]
    notes = [f"eps={e.epsilon:g} not resolvable ({', '.join(e.flags) or 'too few hits'})" for e in estimates if not e.resolvable]
    if len(usable) < 3:
        raise NumericalError(f"Only {len(usable)} of {len(estimates)} estimates are resolvable; at least 3 are needed.")
    fit = ldp_slope([u[0] for u in usable], [u[1] for u in usable])

    if math.isfinite(rate.value):
        passed = abs(fit.slope - rate.value) <= config.tol * max(1.0, rate.value)
    else:
        passed = False
        notes.append("the event admits no endpoint pair; the rate infimum is infinite")
    report = RateReport(
        event=event.to_dict(),
        eps_schedule=list(config.schedule),
        estimates=estimates,
        slope=fit.slope,
        slope_ci=fit.ci,
        rate_inf=rate.value,
        verdict="pass" if passed else "fail",
        tol=config.tol,
        seed=config.seed,
        config_hash=config.config_hash,
        sampler=config.sampler,
        notes=notes,
    )
    logger.info("slope %.6g vs rate infimum %.6g: %s", fit.slope, rate.value, report.verdict)
    if ledger is not None:
        ledger.event("RESULT", {"slope": fit.slope, "rate_inf": rate.value, "verdict": report.verdict})
    return report


def error_report(exc: SchroError, config_hash: str | None = None) -> dict:
    """Structured description of a failed run."""
    return {
        "version": __version__,
        "config_hash": config_hash,
        "error": {"type": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code},
    }
