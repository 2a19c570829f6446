"""Command-line front end: ``solve``, ``table``, ``sweep``, ``paths`` and ``validate``.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ._accel import set_threads
from .errors import CarbonThresholdError, ConfigError, NumericalError
from .model import Scenario, build_scenario, load_config
from .tables import (
    TABLE_JOBS,
    SweepPlan,
    calibrate,
    format_cell,
    packaged_config,
    read_targets,
    run_sweep,
    run_table,
    solve_scenario,
    write_csv,
)

log = logging.getLogger("carbon_threshold")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS, EXIT_IO = 0, 2, 3, 4


# -- argument handling ---------------------------------------------------------------

def _global_options(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="config file, or a packaged name (baseline, ou)")
    p.add_argument("--out", default=d(None), help="output file (stdout when omitted)")
    p.add_argument("--seed", type=int, default=d(0), help="Monte-Carlo seed (u64)")
    p.add_argument("--threads", type=int, default=d(1), help="worker processes / numba threads")
    p.add_argument("--mc-paths", type=int, default=d(0), help="Monte-Carlo paths for cross-checks (0 = off)")
    p.add_argument("--digits", type=int, default=d(6), help="significant digits in CSV output")
    p.add_argument("--set", action="append", default=d([]), metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carbon-threshold",
                                description="Threshold emission strategies under present-biased discounting.")
    _global_options(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        sp = sub.add_parser(name, help=help_)
        _global_options(sp, suppress=True)
        return sp

    sp = cmd("solve", "thresholds, depletion probability and value samples for one config")
    sp.add_argument("--samples", default=None, help="write value-function samples x,V_E,V to this CSV")
    sp.add_argument("--sample-step", type=float, default=0.5)
    sp.add_argument("--no-psi", action="store_true", help="skip the depletion probability")

    sp = cmd("table", "reproduce a threshold table as CSV")
    sp.add_argument("table_id", choices=sorted(TABLE_JOBS))
    sp.add_argument("--no-psi", action="store_true")
    sp.add_argument("--targets", default=None,
                    help="CSV of target thresholds (param columns + b_star) for a calibration report")
    sp.add_argument("--calibrate", default="econ.beta_override", metavar="KEY")
    sp.add_argument("--bounds", default="0,0.5", help="search interval for the calibrated key")
    sp.add_argument("--pinned", type=float, default=None, help="value of the calibrated key to report first")
    sp.add_argument("--tolerance", type=float, default=0.05)

    sp = cmd("sweep", "parameter sweep over one or more config keys (Cartesian product)")
    sp.add_argument("--param", action="append", required=True, metavar="KEY=VALUES",
                    help="e.g. econ.c_tax=0:0.8:0.05 or bias.lambda=0.1,1,4")
    sp.add_argument("--outputs", default="b_star_E,b_star,roots",
                    help="comma list from b_star_E,b_star,psi,value_x0,roots")
    sp.add_argument("--roots-upper", type=float, default=None,
                    help="scan the threshold equation up to here to report every sign change")

    sp = cmd("paths", "simulate paths with shared noise for several thresholds")
    sp.add_argument("--thresholds", default=None, help="comma list; defaults to b*_E and b*")
    sp.add_argument("--seeds", default=None, help="comma list; defaults to --seed")
    sp.add_argument("--dt", type=float, default=1 / 365)
    sp.add_argument("--horizon", type=float, default=None, help="years (defaults to the config T)")
    sp.add_argument("--out-dir", default="paths")

    sp = cmd("validate", "compare the numerical pipeline with the closed forms (constant coefficients)")
    return p


def _kv(items) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"expected KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_scenario(config: str | None, overrides: dict) -> Scenario:
    if config is None:
        doc = packaged_config("baseline")
    elif not os.path.exists(config) and config in ("baseline", "ou"):
        doc = packaged_config(config)
    else:
        doc = load_config(config)
    doc = dict(doc)
    doc.update(overrides)
    if any(k in overrides for k in ("init.x0",)) and "grid.x_max" not in overrides:
        doc.pop("grid.x_max", None)
    return build_scenario(doc)


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


# -- commands ------------------------------------------------------------------------

def cmd_solve(args, s: Scenario) -> int:
    res = solve_scenario(s, psi=not args.no_psi, values=True)
    rows = [
        ["b_star_E", res.b_star_E, ""],
        ["b_star", res.b_star, "no bias" if res.no_bias else ""],
        ["roots", res.roots, ""],
    ]
    if res.psi is not None:
        rows.append(["psi", res.psi, f"x0={format_cell(s.x0)} T={format_cell(s.horizon_T)} via {res.psi_method}"])
    rows += [["value_E_x0", res.value_E_x0, ""], ["value_x0", res.value_x0, ""]]
    if args.mc_paths > 0:
        from .mc import mc_depletion_prob

        est = mc_depletion_prob(s, res.b_star, s.x0, s.horizon_T, args.mc_paths, args.seed)
        rows.append(["psi_mc", est.mean, f"stderr={format_cell(est.stderr, 3)} n={est.n} seed={est.seed}"])
    with _output(args.out) as fh:
        write_csv(fh, ["quantity", "value", "note"], rows, args.digits)
    if args.samples:
        from .exp_value import ExpBasis, PiecewiseValue
        from .qh import QhBasis

        qb = QhBasis(s, ExpBasis(s))
        x = np.arange(0.0, min(s.grid.x_max, 3 * max(s.x0, res.b_star_E)) + 1e-9, args.sample_step)
        ve = PiecewiseValue.build(qb.exp, res.b_star_E)(x)
        v = qb.sampled_value(res.b_star)(x)
        with _output(args.samples) as fh:
            write_csv(fh, ["x", "V_E", "V"], np.column_stack([x, ve, v]).tolist(), args.digits)
    return EXIT_OK


def cmd_table(args, s: Scenario | None, overrides: dict) -> int:
    job = TABLE_JOBS[args.table_id]
    base = s
    res = run_table(args.table_id, base, overrides, workers=args.threads,
                    psi=False if args.no_psi else None)
    with _output(args.out) as fh:
        write_csv(fh, res.header, res.rows, args.digits)
    if args.targets:
        with open(args.targets, newline="") as fh:
            targets = read_targets(fh, job)
        try:
            lo, hi = (float(v) for v in args.bounds.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --bounds {args.bounds!r}") from exc
        rep = calibrate([(args.table_id, targets)], args.calibrate, (lo, hi), pinned=args.pinned,
                        fixed=overrides, base=base, tolerance=args.tolerance)
        for line in rep.lines():
            print(line, file=sys.stderr)
    if any(r.error for r in res.results):
        return EXIT_NUMERICS
    return EXIT_OK


def cmd_sweep(args, s: Scenario) -> int:
    params = []
    for item in args.param:
        if "=" not in item:
            raise ConfigError(f"expected KEY=VALUES, got {item!r}")
        k, v = item.split("=", 1)
        params.append((k.strip(), SweepPlan.parse_values(v)))
    outputs = tuple(o.strip() for o in args.outputs.split(",") if o.strip())
    plan = SweepPlan(params, outputs, args.roots_upper)
    header, rows = run_sweep(plan, s, workers=args.threads)
    with _output(args.out) as fh:
        write_csv(fh, header, rows, args.digits)
    return EXIT_OK


def cmd_paths(args, s: Scenario) -> int:
    from .mc import simulate_path

    if args.thresholds:
        thresholds = SweepPlan.parse_values(args.thresholds)
    else:
        res = solve_scenario(s)
        thresholds = [res.b_star_E] if res.no_bias else [res.b_star_E, res.b_star]
    seeds = [int(v) for v in args.seeds.split(",")] if args.seeds else [args.seed]
    horizon = s.horizon_T if args.horizon is None else args.horizon
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for seed in seeds:
        for b in thresholds:
            rec = simulate_path(s, b, s.x0, args.dt, horizon, seed)
            name = f"path_b{format_cell(b, args.digits)}_seed{seed}.csv"
            with open(out_dir / name, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\r\n")
                w.writerow(["t", "X", "emitting"])
                for t, x, e in zip(rec.t, rec.x, rec.emitting):
                    w.writerow([format_cell(t, args.digits), format_cell(x, args.digits), int(e)])
            summary.append([b, seed, name, rec.tau if rec.depleted else None, rec.depleted and rec.tau <= horizon])
    with _output(args.out if args.out else out_dir / "summary.csv") as fh:
        write_csv(fh, ["threshold", "seed", "file", "tau", "depleted_by_T"], summary, args.digits)
    return EXIT_OK


def cmd_validate(args, s: Scenario) -> int:
    from .brownian import from_scenario as closed_form
    from .depletion import DepletionSolver

    if not s.diffusion.is_constant:
        raise ConfigError("validate needs a constant-coefficient config")
    res = solve_scenario(s, values=True)
    bm = closed_form(s)
    be = bm.exp_threshold().first
    bq = bm.qh_threshold().first if not res.no_bias else be
    psi_num = DepletionSolver(s, res.b_star).cdf(s.x0, s.horizon_T).value
    step = 2 * s.grid.h
    rows = [
        ["b_star_E", res.b_star_E, be, step],
        ["b_star", res.b_star, bq, step],
        ["value_E_x0", res.value_E_x0, bm.exp_value(be, s.x0)[0], 1e-4 * abs(bm.exp_value(be, s.x0)[0])],
        ["value_x0", res.value_x0, (bm.qh_value(bq, s.x0)[0] if not res.no_bias else bm.exp_value(be, s.x0)[0]),
         1e-4 * abs(res.value_x0)],
        ["psi", psi_num, bm.depletion_prob(res.b_star, s.x0, s.horizon_T), 1e-4],
    ]
    out, ok = [], True
    for name, a, b, tol in rows:
        diff = abs(a - b)
        good = diff <= tol
        ok &= good
        out.append([name, a, b, diff, tol, "ok" if good else "FAIL"])
    with _output(args.out) as fh:
        write_csv(fh, ["quantity", "pipeline", "closed_form", "abs_diff", "tolerance", "status"], out, args.digits)
    return EXIT_OK if ok else EXIT_NUMERICS


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.digits < 1 or args.threads < 1 or args.mc_paths < 0 or args.seed < 0:
            raise ConfigError("--digits and --threads must be >= 1; --mc-paths and --seed must be >= 0")
        set_threads(args.threads)
        overrides = _kv(args.set)
        if args.command == "table":
            # job settings apply on top of the config, user overrides on top of both
            s = load_scenario(args.config, {}) if args.config is not None else None
            return cmd_table(args, s, overrides)
        s = load_scenario(args.config, overrides)
        return {"solve": cmd_solve, "sweep": cmd_sweep, "paths": cmd_paths, "validate": cmd_validate}[
            args.command](args, s)
    except ConfigError as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except CarbonThresholdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
