"""CSV and JSON artifacts; every file is written atomically."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import tempfile
from typing import Any

import numpy as np

from schro_ldp.errors import ValidationError
from schro_ldp.measures import DiscreteMeasure
from schro_ldp.paths import Path, PathEnsemble


def _stage(path: str, text: str) -> str:
    """Write text to a temp file next to path and return the temp file's name."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
    except BaseException:
        os.remove(tmp)
        raise
    return tmp


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the target directory and os.replace; no partial file on failure."""
    atomic_write_files({path: text})


def atomic_write_files(files: dict[str, str]) -> None:
    """Stage every file, then rename them in order; on any failure none of them is left behind."""
    staged: list[tuple[str, str]] = []
    placed: list[str] = []
    try:
        for path, text in files.items():
            staged.append((_stage(path, text), path))
        for tmp, path in staged:
            os.replace(tmp, path)
            placed.append(path)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)
        for path in placed:
            os.remove(path)
        raise


def emit(text: str, out: str | None) -> None:
    """Write to `out` atomically, or to stdout when out is None."""
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


# ── JSON ───────────────────────────────────────────────────────────────────────

def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            raise ValidationError("NaN cannot be serialized.")
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return obj


def dumps_json(obj: Any) -> str:
    """Deterministic JSON: sorted keys, infinities as the strings "inf" / "-inf"."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def read_json(path: str) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc}).") from None
    except OSError as exc:
        raise ValidationError(f"Cannot read {path}: {exc.strerror}.") from None


# ── CSV ────────────────────────────────────────────────────────────────────────

def _read_rows(path: str) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            lines = [line for line in fh if line.strip() and not line.lstrip().startswith("#")]
    except OSError as exc:
        raise ValidationError(f"Cannot read {path}: {exc.strerror}.") from None
    rows = list(csv.reader(lines))
    if not rows:
        raise ValidationError(f"{path}: empty CSV.")
    return [h.strip() for h in rows[0]], rows[1:]


def _floats(path: str, rows: list[list[str]]) -> np.ndarray:
    try:
        return np.array([[float(v) for v in row] for row in rows], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric entry ({exc}).") from None


def read_measure_csv(path: str) -> DiscreteMeasure:
    """Columns `w,x1..xd`, one atom per row."""
    header, rows = _read_rows(path)
    if len(header) < 2 or header[0] != "w":
        raise ValidationError(f"{path}: expected header w,x1..xd.")
    data = _floats(path, rows)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValidationError(f"{path}: rows do not match the header.")
    return DiscreteMeasure(data[:, 1:], data[:, 0])


def measure_csv(measure: DiscreteMeasure) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["w"] + [f"x{k + 1}" for k in range(measure.dim)])
    for w, p in zip(measure.weights, measure.points):
        writer.writerow([repr(float(w))] + [repr(float(v)) for v in p])
    return buf.getvalue()


def write_measure_csv(path: str, measure: DiscreteMeasure) -> None:
    atomic_write_text(path, measure_csv(measure))


def ensemble_csv(ensemble: PathEnsemble) -> str:
    """Long format `path_id,t,x1..xd,weight` under a `# eps=..., seed=...` comment line."""
    buf = io.StringIO()
    buf.write(f"# eps={ensemble.epsilon!r}, seed={ensemble.seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["path_id", "t"] + [f"x{k + 1}" for k in range(ensemble.dim)] + ["weight"])
    weights = np.ones(len(ensemble)) if ensemble.weights is None else ensemble.weights
    for pid, (values, w) in enumerate(zip(ensemble.values, weights)):
        for t, v in zip(ensemble.grid, values):
            writer.writerow([pid, repr(float(t))] + [repr(float(c)) for c in v] + [repr(float(w))])
    return buf.getvalue()


def write_ensemble_csv(path: str | None, ensemble: PathEnsemble) -> None:
    emit(ensemble_csv(ensemble), path)


def path_csv(path: Path) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"x{k + 1}" for k in range(path.dim)])
    for t, v in zip(path.grid, path.values):
        writer.writerow([repr(float(t))] + [repr(float(c)) for c in v])
    return buf.getvalue()


def read_path_csv(path: str) -> Path:
    """A single path from columns `t,x1..xd`; an ensemble CSV yields its first path."""
    header, rows = _read_rows(path)
    if "t" not in header:
        raise ValidationError(f"{path}: missing a 't' column.")
    data = _floats(path, rows)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValidationError(f"{path}: rows do not match the header.")
    if "path_id" in header:
        pid = data[:, header.index("path_id")]
        data = data[pid == pid[0]]
    xcols = [k for k, h in enumerate(header) if h.startswith("x")]
    if not xcols:
        raise ValidationError(f"{path}: no coordinate columns x1..xd.")
    return Path(data[:, header.index("t")], data[:, xcols])
