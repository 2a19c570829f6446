"""Table jobs, parameter sweeps and calibration reports.

Every number in an output row is computed here from the solver modules;
the jobs only name the varied keys and the values to run.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.resources import files

import numpy as np
from scipy.optimize import minimize_scalar

from .depletion import DepletionSolver
from .errors import CarbonThresholdError, ConfigError, UnknownKey
from .exp_value import ExpBasis, threshold_exp
from .model import CONFIG_KEYS, Scenario, build_scenario, load_config
from .qh import QhBasis, equilibrium_threshold

log = logging.getLogger(__name__)


def packaged_config(name: str) -> dict[str, str]:
    return load_config(files("carbon_threshold") / "configs" / f"{name}.cfg")


@dataclass(frozen=True)
class TableJob:
    table_id: str
    config: str
    keys: tuple
    values: tuple
    fixed: tuple = ()
    psi: bool = False
    # scan the threshold equation this far to expose every sign change
    roots_upper: float | None = None
    description: str = ""

    @property
    def param_names(self) -> list[str]:
        return [k.split(".", 1)[1] for k in self.keys]

    def points(self) -> list[tuple]:
        return list(itertools.product(*self.values))


_LAMBDAS = (0.0, 0.1, 0.25, 1.0, 4.0, 12.0)
_ALPHAS = (0.5, 0.7, 0.8, 0.9, 0.95, 1.0)
_LAMBDA_BARS = (0.0, 0.1, 0.2, 0.5, 0.8)
_TAX_LOW = (0.0, 0.05, 0.1, 0.3, 0.5, 0.7, 0.8, 0.802, 0.803, 0.804, 0.805, 0.809)
_TAX_HIGH = (0.0, 0.05, 0.10, 0.30, 0.50, 0.66, 0.67, 0.68, 0.69, 0.70, 0.72, 0.73, 0.74, 0.75,
             0.76, 0.77, 0.78, 0.79, 0.8, 0.801, 0.802, 0.803, 0.804, 0.805, 0.806, 0.807, 0.808, 0.809)
# carbon-tax tables run at c_ind = 0.04, so beta = 0.086 at c_tax = 0.05
_TAX_FIXED = (("econ.c_ind", 0.04), ("bias.alpha", 0.9))

TABLE_JOBS = {
    "T1": TableJob("T1", "baseline", ("bias.lambda",), (_LAMBDAS,), (("bias.alpha", 0.9),), psi=True,
                   description="threshold and depletion probability against present-period intensity"),
    "T2": TableJob("T2", "baseline", ("bias.alpha",), (_ALPHAS,), (("bias.lambda", 1.0),), psi=True,
                   description="threshold and depletion probability against future-period weight"),
    "T3": TableJob("T3", "baseline", ("econ.Lambda_bar",), (_LAMBDA_BARS,),
                   (("bias.lambda", 1.0), ("bias.alpha", 0.9)),
                   description="threshold against sustainability weight"),
    "T4": TableJob("T4", "baseline", ("econ.c_tax",), (_TAX_LOW,), _TAX_FIXED + (("bias.lambda", 1.0),),
                   roots_upper=60.0, description="threshold against carbon tax, lambda = 1"),
    "T5": TableJob("T5", "baseline", ("econ.c_tax",), (_TAX_HIGH,), _TAX_FIXED + (("bias.lambda", 12.0),),
                   roots_upper=60.0, description="threshold against carbon tax, lambda = 12"),
    "OU-main": TableJob("OU-main", "ou", ("bias.alpha", "bias.lambda"),
                        ((0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0), (0.1, 0.25, 0.5, 1.0, 4.0, 12.0)),
                        description="mean-reverting budget: threshold against lambda and alpha"),
    "OU-Lambda": TableJob("OU-Lambda", "ou", ("econ.Lambda_bar",), (_LAMBDA_BARS,),
                          (("bias.lambda", 1.0), ("bias.alpha", 0.9)),
                          description="mean-reverting budget: threshold against sustainability weight"),
}


def job_scenario(job: TableJob, base: Scenario | None = None, overrides: dict | None = None) -> Scenario:
    s = base if base is not None else build_scenario(packaged_config(job.config))
    upd = dict(job.fixed)
    upd.update(overrides or {})
    return s.with_updates(upd) if upd else s


# -- single solves ---------------------------------------------------------------------

@dataclass
class SolveResult:
    b_star_E: float = math.nan
    b_star: float = math.nan
    roots: list = field(default_factory=list)
    min_gap: float | None = None
    psi: float | None = None
    psi_method: str = ""
    value_E_x0: float | None = None
    value_x0: float | None = None
    no_bias: bool = False
    error: str = ""


class SolveCache:
    """Reuses the exponential basis across scenarios differing only in the present-bias parameters."""

    def __init__(self):
        self._exp = {}

    def exp(self, s: Scenario):
        key = (s.diffusion, s.econ, s.grid)
        hit = self._exp.get(key)
        if hit is None:
            basis = ExpBasis(s)
            hit = (basis, threshold_exp(basis))
            self._exp = {key: hit}  # one entry is enough for table-order reuse
        return hit


def solve_scenario(s: Scenario, psi: bool = False, values: bool = False, roots_upper: float | None = None,
                   cache: SolveCache | None = None) -> SolveResult:
    cache = cache or SolveCache()
    basis, et = cache.exp(s)
    qb = QhBasis(s, basis)
    upper = None if roots_upper is None else min(roots_upper, qb.b_max)
    qt = equilibrium_threshold(qb, exp_threshold=et if qb.exp is basis else None, roots_upper=upper)
    res = SolveResult(qt.b_star_E, qt.b_star, list(qt.roots), qt.crossing.min_gap_after,
                      no_bias=qb.unbiased)
    if psi:
        inv = DepletionSolver(s, qt.b_star).cdf(s.x0, s.horizon_T)
        res.psi, res.psi_method = inv.value, inv.method
    if values:
        res.value_E_x0 = float(qb.exp.value(qt.b_star_E, s.x0)[0])
        res.value_x0 = float(qb.value(qt.b_star, s.x0)[0])
    return res


def _solve_row(args) -> SolveResult:
    s, psi, values, roots_upper = args
    try:
        return solve_scenario(s, psi, values, roots_upper)
    except CarbonThresholdError as exc:
        return SolveResult(error=f"{type(exc).__name__}: {exc}")


def _solve_many(scenarios, psi, values, roots_upper, workers: int) -> list[SolveResult]:
    if workers > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_solve_row, [(s, psi, values, roots_upper) for s in scenarios]))
    cache = SolveCache()
    out = []
    for s in scenarios:
        try:
            out.append(solve_scenario(s, psi, values, roots_upper, cache))
        except CarbonThresholdError as exc:
            out.append(SolveResult(error=f"{type(exc).__name__}: {exc}"))
    return out


# -- tables ------------------------------------------------------------------------------

@dataclass
class TableResult:
    job: TableJob
    header: list
    rows: list
    results: list

    def b_stars(self) -> list[float]:
        return [r.b_star for r in self.results]


def run_table(table_id: str, base: Scenario | None = None, overrides: dict | None = None,
              workers: int = 1, psi: bool | None = None) -> TableResult:
    if table_id not in TABLE_JOBS:
        raise ConfigError(f"unknown table id {table_id!r}; known: {', '.join(TABLE_JOBS)}")
    job = TABLE_JOBS[table_id]
    with_psi = job.psi if psi is None else psi
    s0 = job_scenario(job, base, overrides)
    points = job.points()
    scenarios = [s0.with_updates(dict(zip(job.keys, p))) for p in points]
    results = _solve_many(scenarios, with_psi, False, job.roots_upper, workers)
    header = job.param_names + ["b_star"] + (["psi"] if with_psi else [])
    if job.roots_upper is not None:
        header += ["b_star_E", "roots", "min_gap"]
    header.append("error")
    rows = []
    for p, r in zip(points, results):
        row = list(p) + [r.b_star]
        if with_psi:
            row.append(r.psi)
        if job.roots_upper is not None:
            row += [r.b_star_E, r.roots, r.min_gap]
        row.append(r.error)
        rows.append(row)
    return TableResult(job, header, rows, results)


# -- sweeps ------------------------------------------------------------------------------

SWEEP_OUTPUTS = ("b_star_E", "b_star", "psi", "value_x0", "roots")


@dataclass
class SweepPlan:
    params: list  # [(key, values), ...]; rows are the Cartesian product
    outputs: tuple = ("b_star_E", "b_star", "roots")
    roots_upper: float | None = None

    def __post_init__(self):
        for key, _ in self.params:
            if key not in CONFIG_KEYS or key == "model.kind":
                raise UnknownKey(key)
        bad = [o for o in self.outputs if o not in SWEEP_OUTPUTS]
        if bad:
            raise ConfigError(f"unknown sweep outputs {bad}; choose from {', '.join(SWEEP_OUTPUTS)}")

    @staticmethod
    def parse_values(text: str) -> list[float]:
        """``a,b,c`` or ``start:stop:step`` (inclusive of ``stop`` within rounding)."""
        text = text.strip()
        if ":" in text:
            parts = [float(v) for v in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise ConfigError(f"bad range {text!r}; expected start:stop:step")
            lo, hi, step = parts
            n = int(math.floor((hi - lo) / step + 1e-9))
            return [round(lo + i * step, 12) for i in range(n + 1)]
        try:
            return [float(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad value list {text!r}") from exc


def run_sweep(plan: SweepPlan, base: Scenario, workers: int = 1):
    keys = [k for k, _ in plan.params]
    points = list(itertools.product(*[v for _, v in plan.params]))
    scenarios = []
    errors = {}
    for i, p in enumerate(points):
        try:
            scenarios.append(base.with_updates(dict(zip(keys, p))))
        except ConfigError as exc:
            scenarios.append(None)
            errors[i] = f"{type(exc).__name__}: {exc}"
    valid = [s for s in scenarios if s is not None]
    solved = iter(_solve_many(valid, "psi" in plan.outputs, "value_x0" in plan.outputs,
                              plan.roots_upper, workers))
    header = [k.split(".", 1)[1] for k in keys]
    for o in plan.outputs:
        header += ["value_E_x0", "value_x0"] if o == "value_x0" else [o]
    header.append("error")
    rows = []
    for i, (p, s) in enumerate(zip(points, scenarios)):
        r = SolveResult(error=errors[i]) if s is None else next(solved)
        row = list(p)
        for o in plan.outputs:
            if o == "value_x0":
                row += [r.value_E_x0, r.value_x0]
            else:
                row.append(getattr(r, o))
        row.append(r.error)
        rows.append(row)
    return header, rows


# -- calibration -------------------------------------------------------------------------

@dataclass
class CalibrationReport:
    key: str
    pinned_value: float | None
    pinned_max_error: float | None
    best_value: float
    best_max_error: float
    best_b_stars: list
    targets: list
    fixed: dict
    tolerance: float

    @property
    def pinned_ok(self) -> bool:
        return self.pinned_max_error is not None and self.pinned_max_error <= self.tolerance

    @property
    def best_ok(self) -> bool:
        return self.best_max_error <= self.tolerance

    def lines(self) -> list[str]:
        out = [f"calibration of {self.key} (fixed: {self.fixed or 'none'})"]
        if self.pinned_value is not None:
            out.append(f"pinned {self.key}={self.pinned_value:.6g}: max |b* - target| = {self.pinned_max_error:.4g}"
                       + (" (within tolerance)" if self.pinned_ok else " (misses)"))
        out.append(f"best fit {self.key}={self.best_value:.6g}: max |b* - target| = {self.best_max_error:.4g}")
        return out


def _job_errors(jobs_targets, base, fixed, key, value) -> tuple[float, list]:
    worst, all_b = 0.0, []
    for table_id, targets in jobs_targets:
        ov = dict(fixed)
        ov[key] = value
        res = run_table(table_id, base, ov, psi=False)
        b = res.b_stars()
        all_b.append(b)
        errs = [abs(x - y) for x, y in zip(b, targets) if y is not None]
        worst = max([worst] + [e if math.isfinite(e) else math.inf for e in errs])
    return worst, all_b


def calibrate(jobs_targets, key: str = "econ.beta_override", bounds: tuple = (0.0, 0.5),
              pinned: float | None = None, fixed: dict | None = None, base: Scenario | None = None,
              tolerance: float = 0.05) -> CalibrationReport:
    """Best single value of ``key`` for reproducing target thresholds of one or more table jobs.

    ``jobs_targets`` is a list of ``(table_id, targets)`` with targets aligned
    to the job's rows (``None`` skips a row).  The objective is the largest
    absolute threshold error.
    """
    # trial values of the calibrated key are expected to disagree with the formula; keep the log quiet
    model_log = logging.getLogger("carbon_threshold.model")
    level = model_log.level
    model_log.setLevel(logging.ERROR)
    try:
        return _calibrate(jobs_targets, key, bounds, pinned, dict(fixed or {}), base, tolerance)
    finally:
        model_log.setLevel(level)


def _calibrate(jobs_targets, key, bounds, pinned, fixed, base, tolerance) -> CalibrationReport:
    pin_err = None
    if pinned is not None:
        pin_err = _job_errors(jobs_targets, base, fixed, key, pinned)[0]
    lo, hi = bounds
    grid = np.linspace(lo, hi, 11)
    errs = [_job_errors(jobs_targets, base, fixed, key, float(v))[0] for v in grid]
    i = int(np.argmin(errs))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    opt = minimize_scalar(lambda v: _job_errors(jobs_targets, base, fixed, key, float(v))[0],
                          bounds=(a, b), method="bounded", options={"xatol": 1e-4})
    best = float(opt.x) if opt.fun <= errs[i] else float(grid[i])
    best_err, best_b = _job_errors(jobs_targets, base, fixed, key, best)
    return CalibrationReport(key, pinned, pin_err, best, best_err, best_b,
                             [list(t) for _, t in jobs_targets], fixed, tolerance)


# -- CSV -----------------------------------------------------------------------------------

def format_cell(v, digits: int = 6) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (list, tuple)):
        return ";".join(format_cell(x, digits) for x in v)
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.{digits}g}"


def write_csv(fh, header, rows, digits: int = 6) -> None:
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_cell(v, digits) for v in row])


def read_targets(fh, job: TableJob) -> list:
    """Target thresholds from a CSV with the job's parameter columns and ``b_star``."""
    reader = csv.DictReader(fh)
    names = job.param_names
    if reader.fieldnames is None or "b_star" not in reader.fieldnames or any(n not in reader.fieldnames for n in names):
        raise ConfigError(f"targets need columns {names + ['b_star']}")
    table = {tuple(float(r[n]) for n in names): float(r["b_star"]) for r in reader if r["b_star"].strip()}
    return [table.get(tuple(float(v) for v in p)) for p in job.points()]
