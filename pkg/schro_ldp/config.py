"""Configuration from environment variables and numerical defaults."""

import os


THREADS: int = max(1, int(os.environ.get("SCHRO_LDP_THREADS", str(os.cpu_count() or 1))))
LEDGER_URL: str | None = os.environ.get("SCHRO_LDP_LEDGER") or None
LOG_LEVEL: str = os.environ.get("SCHRO_LDP_LOG_LEVEL", "WARNING")

# Solver defaults
DEFAULT_SINKHORN_TOL: float = 1e-10
DEFAULT_SINKHORN_MAX_ITER: int = 100_000
MARGINAL_TOL: float = 1e-8
DUALITY_TOL: float = 1e-9
FEASIBILITY_TOL: float = 1e-10
MASS_EPS: float = 1e-14      # plan entries below this count as zero mass

# Paths and rates
DEFAULT_GRID_SIZE: int = 200
SNAP_TOL: float = 1e-9       # endpoint-to-atom snapping tolerance
NEGATIVE_RATE_TOL: float = 1e-8  # rounding allowance below zero for J_xy, relative to 1 + c(x, y)
QP_TOL: float = 1e-10
QP_MAX_SWEEPS: int = 200_000

# Dynamics
DRIFT_TIME_CLAMP: float = 1e-9
CLAMP_STEPS: int = 10        # drift frozen for the last CLAMP_STEPS steps

# Monte Carlo
DEFAULT_CHUNK_SIZE: int = 10_000
RARE_EVENT_THRESHOLD: float = 1e-4
MIN_HITS: int = 20           # unweighted estimate resolvable if p_hat * n >= MIN_HITS
MIN_ESS: float = 100.0       # shifted estimate resolvable if ESS >= MIN_ESS
MIN_EVENT_SAMPLES: int = 1_000
