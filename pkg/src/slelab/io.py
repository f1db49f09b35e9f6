"""CSV and JSON files for paths, traces, tables and experiment reports.

Every file starts with ``# key=value`` comment lines (tool version, command
line, seed and whatever the producer adds); readers skip them.  Floats are
written with ``repr`` so a file round-trips bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import TableMismatch
from .greens import PhiTable
from .loewner import DrivingPath, TracePolyline
from .natparam import ContentProfile, ThetaSeries


def provenance(seed=None, argv=None, **extra) -> dict:
    """Standard metadata block: version, command line and seed."""
    argv = sys.argv if argv is None else argv
    meta = {"slelab": __version__, "command": shlex.join(str(a) for a in argv)}
    if seed is not None:
        meta["seed"] = seed
    meta.update(extra)
    return meta


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write(path, meta: dict | None, header: list[str], rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={_fmt(v)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    return path


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """``(metadata, header, rows)`` of a file written by this module."""
    meta: dict = {}
    lines = []
    with Path(path).open(newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val
            else:
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    return meta, header, [r for r in reader]


def data_lines(path) -> list[str]:
    """Non-comment lines of a file, for byte-level comparisons."""
    with Path(path).open() as fh:
        return [ln for ln in fh if not ln.startswith("#")]


# ---------------------------------------------------------------------------
# paths and traces


def write_driving(path, drv: DrivingPath, meta: dict | None = None) -> Path:
    m = {"a": drv.a, "dt": drv.dt, **(meta or {})}
    return _write(path, m, ["k", "t", "u"], zip(range(drv.values.size), drv.t, drv.values))


def read_driving(path) -> DrivingPath:
    meta, _, rows = read_csv(path)
    t = np.array([float(r[1]) for r in rows])
    u = np.array([float(r[2]) for r in rows])
    dt = float(meta["dt"])
    uniform = np.array_equal(t, np.arange(t.size) * dt)
    return DrivingPath(dt, u, float(meta["a"]), None if uniform else t)


def write_trace(path, tr: TracePolyline, meta: dict | None = None) -> Path:
    m = {"kappa": tr.kappa, "dt": tr.dt, **(meta or {})}
    p = tr.points
    return _write(path, m, ["k", "t", "re", "im"], zip(range(p.size), tr.t, p.real, p.imag))


def read_trace(path) -> TracePolyline:
    meta, _, rows = read_csv(path)
    t = np.array([float(r[1]) for r in rows])
    pts = np.array([complex(float(r[2]), float(r[3])) for r in rows])
    dt = float(meta["dt"])
    uniform = np.array_equal(t, np.arange(t.size) * dt)
    return TracePolyline(dt, pts, float(meta["kappa"]), None if uniform else t)


# ---------------------------------------------------------------------------
# hitting-time tables


def write_phi_table(path, table: PhiTable, meta: dict | None = None) -> Path:
    m = {"kappa": table.kappa, "seed": table.master_seed, **table.meta, **(meta or {})}
    cens = table.censored if table.censored is not None else np.zeros(table.theta_grid.size, dtype=int)
    m["censored"] = " ".join(str(int(c)) for c in cens)
    rows = []
    for i, th in enumerate(table.theta_grid):
        for j, s in enumerate(table.s_grid):
            rows.append((th, s, table.values[i, j], table.stderr[i, j], table.n_samples[i]))
    return _write(path, m, ["theta", "s", "phi", "stderr", "n"], rows)


def read_phi_table(path, kappa: float | None = None) -> PhiTable:
    """Load a table; ``kappa`` (when given) must match the one it was built for."""
    meta, _, rows = read_csv(path)
    arr = np.array([[float(x) for x in r] for r in rows])
    thetas = np.unique(arr[:, 0])
    svals = np.unique(arr[:, 1])
    shape = (thetas.size, svals.size)
    if arr.shape[0] != shape[0] * shape[1]:
        raise ValueError(f"{path}: rows do not form a full grid")
    values = arr[:, 2].reshape(shape)
    stderr = arr[:, 3].reshape(shape)
    n = arr[:: svals.size, 4].astype(int)
    cens = np.array([int(c) for c in meta.pop("censored", "").split()] or np.zeros(shape[0]), dtype=int)
    tk = float(meta.pop("kappa"))
    seed = int(meta.pop("seed", 0))
    keep = {}
    for k in ("dt", "hit_rel", "horizon", "thresh"):
        if k in meta:
            keep[k] = float(meta[k])
    if "grid" in meta:
        keep["grid"] = meta["grid"]
    table = PhiTable(tk, thetas, svals, values, stderr, n, cens, seed, keep)
    if kappa is not None:
        table.check_kappa(float(kappa))
    return table


# ---------------------------------------------------------------------------
# estimator outputs


def write_content_profile(path, prof: ContentProfile, meta: dict | None = None) -> Path:
    m = {"f_rule": prof.f_rule, "domain": prof.domain.kind, **(meta or {})}
    return _write(path, m, ["eps", "content"], zip(prof.epsilons, prof.contents))


def write_theta_series(path, series: ThetaSeries, meta: dict | None = None) -> Path:
    m = {"n_level": series.n, **(meta or {})}
    return _write(path, m, ["t", "increment", "cumulative"],
                  zip(series.times, series.increments, series.cumulative))


# ---------------------------------------------------------------------------
# experiment reports


def write_report_csv(path, report, meta: dict | None = None) -> Path:
    keys: list[str] = []
    for row in report.rows:
        for k in row.inputs:
            if k not in keys:
                keys.append(k)
    header = ["row_id", *keys, "mean", "stderr", "n", "censored", "verdict"]
    rows = []
    for row in report.rows:
        est = row.estimate
        ins = [row.inputs.get(k, "") for k in keys]
        rows.append([row.row_id, *ins, est.mean, est.stderr, est.n, row.censored, row.verdict])
    m = {"experiment": report.name, **(meta or {})}
    return _write(path, m, header, rows)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return str(x)


def versions() -> dict:
    import numba
    import scipy

    return {"slelab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def write_summary_json(path, report, meta: dict | None = None) -> Path:
    doc = {
        "experiment": report.name,
        "master_seed": report.master_seed,
        "passed": report.passed,
        "verdicts": report.verdicts,
        "fits": report.fits,
        "config": report.params,
        "wall_time": report.wall_time,
        "versions": versions(),
        "meta": meta or {},
    }
    path = Path(path)
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=False) + "\n")
    return path
