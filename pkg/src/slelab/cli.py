"""``slelab`` command line: simulate, trace, phi-table, experiment, selftest.

Exit codes: 0 success, 1 a verdict or invariant failed, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as E
from . import greens as G
from . import io as IO
from . import loewner as L
from . import natparam as N
from . import sampler as S
from .errors import ConfigInvalid, SLELabError, TableMismatch, UnknownExperiment

SCHEMA_HELP = """\
experiment config (JSON object; every key optional except kappa):
  name        experiment name, must match the command line when given
  kappa       number in (0, 8), or a list for multi-kappa experiments
  n           replicas per row (integer >= 2)
  seed        master seed (integer >= 0); --seed overrides it
  dt, horizon sampler step and time horizon where the experiment uses them
  geometry    points are [re, im] pairs; see `slelab experiment NAME --show-defaults`
  grid        eps lists, time levels and other sweep parameters
  thresholds  pass/fail tolerances
  table       phi-table build settings (grid "NTxNS:smin-smax", n_per_node, seed, dt)
unknown keys and wrong types are rejected.
experiments: """ + ", ".join(E.CATALOG)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n\n{SCHEMA_HELP}\n")
        raise SystemExit(2)


def _positive(kind):
    def conv(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _kappa(text):
    v = float(text)
    if not 0 < v < 8:
        raise argparse.ArgumentTypeError(f"kappa must lie in (0, 8), got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="slelab", description="Monte-Carlo laboratory for chordal SLE.")
    p.add_argument("--version", action="version", version=f"slelab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--out-dir", type=Path, default=Path("."), help="created if absent")
        sp.add_argument("--overwrite", action="store_true", help="replace existing outputs")
        if seed:
            sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("simulate", help="sample a driving path and its trace")
    sp.add_argument("--kappa", type=_kappa, required=True)
    sp.add_argument("--horizon", type=_positive(float), required=True)
    sp.add_argument("--dt", type=_positive(float), required=True)
    sp.add_argument("--prefix", default="sle")
    common(sp)

    sp = sub.add_parser("trace", help="extract the trace (and content profile) of a driving CSV")
    sp.add_argument("driving", type=Path)
    sp.add_argument("--kappa", type=_kappa, required=True)
    sp.add_argument("--eps", type=_positive(float), nargs="*", default=[])
    sp.add_argument("--f-rule", choices=["sqrt", "none"], default="sqrt")
    sp.add_argument("--prefix", default="trace")
    common(sp, seed=False)

    sp = sub.add_parser("phi-table", help="build the hitting-time table for one kappa")
    sp.add_argument("--kappa", type=_kappa, required=True)
    sp.add_argument("--n-per-node", type=int, default=2000)
    sp.add_argument("--grid", default=E.TABLE_DEFAULT["grid"], help='"NTxNS:smin-smax"')
    sp.add_argument("--dt", type=_positive(float), default=E.TABLE_DEFAULT["dt"])
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--check-scaling", action="store_true", help="also run the r=2 scaling check")
    common(sp)

    sp = sub.add_parser("experiment", help="run one catalog experiment")
    sp.add_argument("name")
    sp.add_argument("--config", type=Path, help="JSON config; see the schema below")
    sp.add_argument("--kappa", type=float, nargs="+", default=None, help="overrides the config")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--phi-table", type=Path, nargs="*", default=[], help="prebuilt table CSVs")
    sp.add_argument("--show-defaults", action="store_true", help="print the default config and exit")
    common(sp)

    sp = sub.add_parser("selftest", help="exact-identity checks (no Monte Carlo)")
    return p


def _target(out_dir: Path, name: str, overwrite: bool) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    if path.exists() and not overwrite:
        raise UsageError(f"{path} exists; pass --overwrite to replace it")
    return path


def _cmd_simulate(args, argv) -> int:
    seed = 0 if args.seed is None else args.seed
    names = [f"{args.prefix}_driving.csv", f"{args.prefix}_trace.csv"]
    paths = [_target(args.out_dir, n, args.overwrite) for n in names]
    params = S.kappa_params(args.kappa)
    drv = S.sample_chordal(params, args.horizon, args.dt, seed)
    tr = L.extract_trace(drv)
    meta = IO.provenance(seed, argv, kappa=args.kappa)
    IO.write_driving(paths[0], drv, meta)
    IO.write_trace(paths[1], tr, meta)
    for p in paths:
        print(p)
    return 0


def _cmd_trace(args, argv) -> int:
    try:
        drv = IO.read_driving(args.driving)
    except (OSError, KeyError, ValueError, StopIteration) as exc:
        raise UsageError(f"cannot read driving path {args.driving}: {exc}") from exc
    expected = 2.0 / args.kappa
    if abs(drv.a - expected) > 1e-9 * expected:
        raise UsageError(f"{args.driving} was sampled with a={drv.a}, not kappa={args.kappa}")
    trace_path = _target(args.out_dir, f"{args.prefix}.csv", args.overwrite)
    prof_path = _target(args.out_dir, f"{args.prefix}_content.csv", args.overwrite) if args.eps else None
    tr = L.extract_trace(drv)
    meta = IO.provenance(None, argv, kappa=args.kappa, source=str(args.driving))
    IO.write_trace(trace_path, tr, meta)
    print(trace_path)
    if prof_path is not None:
        # the content needs a polyline finer than eps/4, which the hull walk provides
        fine = L.hull_polyline(drv, max_gap=min(args.eps) / 4.0)
        prof = N.content_profile(fine, None, args.eps, f_rule=args.f_rule)
        IO.write_content_profile(prof_path, prof, meta)
        print(prof_path)
    return 0


def _cmd_phi_table(args, argv) -> int:
    try:
        grid = G.PhiGrid.parse(args.grid)
    except ValueError as exc:
        raise UsageError(f"bad --grid {args.grid!r}: {exc}") from exc
    if args.n_per_node < 100 or args.workers < 1:
        raise UsageError("--n-per-node must be >= 100 and --workers >= 1")
    seed = 0 if args.seed is None else args.seed
    path = _target(args.out_dir, f"phi_table_kappa{args.kappa:g}.csv", args.overwrite)
    params = S.kappa_params(args.kappa)
    table = G.build_phi_table(params, grid, args.n_per_node, seed, dt=args.dt, workers=args.workers)
    IO.write_phi_table(path, table, IO.provenance(seed, argv))
    v = table.values
    checks = {
        "range": bool(np.all((v >= 0) & (v <= 1))),
        "monotone_in_s": bool(np.all(np.diff(v, axis=1) >= 0)),
    }
    full = E.phi_table_checks(table, seed=seed + 1) if args.check_scaling else None
    if full is None:
        th, sg = np.meshgrid(table.theta_grid, table.s_grid, indexing="ij")
        checks["zero_region"] = bool(np.all(v[2 * params.a * sg <= np.sin(th) ** 2] == 0))
    else:
        checks["zero_region"] = full["zero_region"]
        checks["scaling"] = full["scaling_ok"]
    cens = float(np.sum(table.censored) / np.sum(table.n_samples))
    checks["censoring"] = cens < 0.01
    print(path)
    for k, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {k}")
    print(f"censored fraction {cens:.4f}")
    return 0 if all(checks.values()) else 1


def _load_config(args) -> dict:
    if args.config is None:
        cfg = {}
    else:
        try:
            cfg = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
    if args.kappa is not None:
        cfg["kappa"] = args.kappa[0] if len(args.kappa) == 1 else args.kappa
    if "kappa" not in cfg:
        raise UsageError("kappa must be given explicitly (config key or --kappa)")
    return cfg


def _cmd_experiment(args, argv) -> int:
    if args.name not in E.CATALOG:
        raise UsageError(f"unknown experiment {args.name!r}")
    if args.show_defaults:
        print(json.dumps(E.DEFAULTS[args.name], indent=2))
        return 0
    cfg = _load_config(args)
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    tables = {}
    for p in args.phi_table:
        try:
            t = IO.read_phi_table(p)
        except (OSError, KeyError, ValueError) as exc:
            raise UsageError(f"cannot read table {p}: {exc}") from exc
        tables[t.kappa] = t
    E.validate_config(args.name, cfg)
    csv_path = _target(args.out_dir, f"{args.name}.csv", args.overwrite)
    json_path = _target(args.out_dir, f"{args.name}.json", args.overwrite)
    rep = E.run_experiment(args.name, cfg, args.seed, workers=args.workers, tables=tables)
    meta = IO.provenance(rep.master_seed, argv)
    IO.write_report_csv(csv_path, rep, meta)
    IO.write_summary_json(json_path, rep, meta)
    print(csv_path)
    print(json_path)
    for k, ok in rep.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'}  {k}")
    return 0 if rep.passed else 1


def _cmd_selftest(args, argv) -> int:
    from .selftest import run_selftest

    results = run_selftest(verbose=True)
    return 0 if all(r.passed for r in results) else 1


_COMMANDS = {
    "simulate": _cmd_simulate,
    "trace": _cmd_trace,
    "phi-table": _cmd_phi_table,
    "experiment": _cmd_experiment,
    "selftest": _cmd_selftest,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    full_argv = ["slelab", *argv]
    try:
        return _COMMANDS[args.command](args, full_argv)
    except (UsageError, ConfigInvalid, UnknownExperiment, TableMismatch) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        sys.stderr.write(f"slelab: error: {msg}\n\n{SCHEMA_HELP}\n")
        return 2
    except SLELabError as exc:
        sys.stderr.write(f"slelab: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
