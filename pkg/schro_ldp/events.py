"""Path events: sup-norm tubes, endpoint sets and two-point sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from schro_ldp.config import SNAP_TOL
from schro_ldp.errors import ValidationError
from schro_ldp.paths import Path, check_grid

KINDS = ("tube", "endpoint", "two_point")


@dataclass(frozen=True, eq=False)
class EventSet:
    """A set of paths.

    tube:      {h : max_i |h(t_i) - center(t_i)|_inf <= radius}, endpoints included.
    endpoint:  {h : (h(0), h(1)) in C}, C a finite pair list or a box on (x, y).
    two_point: {h : (h(s), h(t)) in B}, B a finite pair list.
    Pairs are stored as an array (k, 2, d).
    """

    kind: str
    center: Path | None = None
    radius: float | None = None
    pairs: np.ndarray | None = None
    lower: np.ndarray | None = None  # box on the concatenated (x, y), shape (2d,)
    upper: np.ndarray | None = None
    s: float | None = None
    t: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"Unknown event kind {self.kind!r}; expected one of {', '.join(KINDS)}.")
        if self.kind == "tube":
            if self.center is None or self.radius is None:
                raise ValidationError("A tube needs a center path and a radius.")
            if not self.radius > 0:
                raise ValidationError(f"Tube radius must be positive, got {self.radius}.")
        if self.pairs is not None:
            pairs = np.asarray(self.pairs, dtype=float)
            if pairs.ndim == 2 and pairs.shape[1] == 2:
                pairs = pairs[:, :, None]
            if pairs.ndim != 3 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
                raise ValidationError("Event pairs must be a nonempty list of (x, y) vectors.")
            object.__setattr__(self, "pairs", pairs)
        if self.kind == "endpoint":
            has_box = self.lower is not None and self.upper is not None
            if (self.pairs is None) == (not has_box):
                raise ValidationError("An endpoint event needs exactly one of a pair list or a box.")
            if has_box:
                lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
                upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
                if lower.shape != upper.shape or lower.size % 2 or np.any(lower > upper):
                    raise ValidationError("An endpoint box needs matching lower <= upper bounds on (x, y).")
                object.__setattr__(self, "lower", lower)
                object.__setattr__(self, "upper", upper)
        if self.kind == "two_point":
            if self.s is None or self.t is None or self.pairs is None:
                raise ValidationError("A two-point event needs times s, t and a pair list.")
            if not 0.0 <= self.s < self.t <= 1.0:
                raise ValidationError(f"Two-point times must satisfy 0 <= s < t <= 1, got ({self.s}, {self.t}).")

    # ── constructors ──

    @classmethod
    def tube(cls, center: Path, radius: float) -> EventSet:
        return cls("tube", center=center, radius=float(radius))

    @classmethod
    def endpoint(cls, pairs=None, lower=None, upper=None) -> EventSet:
        return cls("endpoint", pairs=pairs, lower=lower, upper=upper)

    @classmethod
    def two_point(cls, s: float, t: float, pairs) -> EventSet:
        return cls("two_point", pairs=pairs, s=float(s), t=float(t))

    # ── membership ──

    @property
    def dim(self) -> int:
        if self.center is not None:
            return self.center.dim
        if self.pairs is not None:
            return self.pairs.shape[2]
        return self.lower.size // 2

    def admits_endpoints(self, x, y) -> bool:
        """Whether some path with these endpoints can lie in the event."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.kind == "tube":
            return bool(
                np.max(np.abs(x - self.center.start)) <= self.radius
                and np.max(np.abs(y - self.center.end)) <= self.radius
            )
        if self.kind == "endpoint":
            return bool(self._endpoint_mask(x[None], y[None])[0])
        return True

    def _endpoint_mask(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        if self.pairs is not None:
            gx = np.max(np.abs(xs[:, None, :] - self.pairs[None, :, 0, :]), axis=2)
            gy = np.max(np.abs(ys[:, None, :] - self.pairs[None, :, 1, :]), axis=2)
            return np.any((gx <= SNAP_TOL) & (gy <= SNAP_TOL), axis=1)
        z = np.concatenate([xs, ys], axis=1)
        return np.all((z >= self.lower) & (z <= self.upper), axis=1)

    def contains(self, values, grid) -> np.ndarray:
        """Membership of each path in values (n, M + 1, d) sampled on grid; boolean (n,)."""
        grid = check_grid(grid)
        values = np.asarray(values, dtype=float)
        if values.ndim == 2:
            values = values[None]
        if self.kind == "tube":
            center = self.center.at(grid)
            return np.max(np.abs(values - center[None]), axis=(1, 2)) <= self.radius
        if self.kind == "endpoint":
            return self._endpoint_mask(values[:, 0, :], values[:, -1, :])
        raise ValidationError("Two-point events have probability zero under a diffusion; only their rate is defined.")

    # ── serialization ──

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "tube":
            knots = np.column_stack([self.center.grid, self.center.values])
            out["center"] = knots.tolist()
            out["radius"] = self.radius
        if self.pairs is not None:
            out["pairs"] = self.pairs.tolist()
        if self.lower is not None:
            out["lower"] = self.lower.tolist()
            out["upper"] = self.upper.tolist()
        if self.kind == "two_point":
            out["s"] = self.s
            out["t"] = self.t
        return out

    @classmethod
    def from_dict(cls, data: dict) -> EventSet:
        """Inverse of to_dict; a tube center is a list of knot rows (t, x1..xd)."""
        allowed = {"kind", "center", "radius", "pairs", "lower", "upper", "s", "t"}
        unknown = set(data) - allowed
        if unknown:
            raise ValidationError(f"Unknown event keys: {', '.join(sorted(unknown))}.")
        kind = data.get("kind")
        if kind == "tube":
            if "center" not in data or "radius" not in data:
                raise ValidationError("A tube event needs 'center' and 'radius'.")
            return cls.tube(Path.from_knots(data["center"]), float(data["radius"]))
        if kind == "endpoint":
            return cls.endpoint(pairs=data.get("pairs"), lower=data.get("lower"), upper=data.get("upper"))
        if kind == "two_point":
            if "s" not in data or "t" not in data:
                raise ValidationError("A two-point event needs 's' and 't'.")
            return cls.two_point(data["s"], data["t"], data.get("pairs"))
        raise ValidationError(f"Unknown event kind {kind!r}; expected one of {', '.join(KINDS)}.")
