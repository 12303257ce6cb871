"""Config-driven experiment: supply, assemble, solve, recover, compare, write."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .config import RunConfig
from .discretization import Grid, assemble_constraints, assemble_objective
from .metrics import ErrorReport, RefinementRow, attach_orders, compare, order_table, refinement_table
from .problem import ProblemInstance
from .solution import MfgSolution, NumericResult, analytic_solution, recover_solution
from .solver import solve

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_INVARIANT = 4

MASS_TOL = 1e-12


@dataclass
class LevelResult:
    level: int
    grid: Grid
    instance: ProblemInstance
    numeric: NumericResult
    analytic: MfgSolution
    errors: ErrorReport
    timings: dict[str, float]
    violations: list[str] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.numeric.report.converged


def run_level(cfg: RunConfig, level: int = 0) -> LevelResult:
    """One grid of the experiment; ``level`` doubles both resolutions that many times."""
    timings: dict[str, float] = {}
    clock = time.perf_counter()

    def lap(name: str):
        nonlocal clock
        now = time.perf_counter()
        timings[name] = now - clock
        clock = now

    grid = cfg.grid(level)
    instance = cfg.instance(level)
    lap("supply")
    scheme = cfg.scheme
    objective = assemble_objective(instance, grid, scheme.v_sampling)
    constraints = assemble_constraints(instance, grid, scheme.balance_time_rule)
    lap("assemble")
    report = solve(objective, constraints, cfg.solver)
    lap("solve")
    numeric = NumericResult(recover_solution(report, instance, constraints, scheme), report, constraints)
    lap("recover")
    analytic = analytic_solution(instance, grid)
    lap("analytic")
    errors = compare(numeric.solution, analytic, grid)
    lap("compare")
    result = LevelResult(level, grid, instance, numeric, analytic, errors, timings)
    result.violations = check_invariants(result, cfg.solver.tol_feas)
    log.info("level %d (%dx%d): objective %.8f, kkt %.2e, %s", level, grid.n_t, grid.n_x,
             report.objective_value, report.kkt_residual, "converged" if report.converged else "NOT converged")
    return result


def check_invariants(res: LevelResult, tol_feas: float) -> list[str]:
    """Structural properties every accepted solution must have."""
    out = []
    sol = res.numeric.solution
    for name, sol_ in (("numeric", sol), ("analytic", res.analytic)):
        for key in ("phi", "m", "u", "varpi"):
            if not np.all(np.isfinite(getattr(sol_, key))):
                out.append(f"{name} {key} has non-finite entries")
    d = sol.diagnostics
    if d["boundary_residual"] != 0.0 or d["initial_residual"] != 0.0:
        out.append("pinned rows are not held exactly")
    if not res.converged:
        return out
    if d["balance_residual"] > tol_feas:
        out.append(f"balance residual {d['balance_residual']:.3g} exceeds {tol_feas:.3g}")
    if d["min_density"] < -tol_feas:
        out.append(f"density {d['min_density']:.3g} is negative")
    if d["mass_defect"] > MASS_TOL:
        out.append(f"per-level mass deviates from one by {d['mass_defect']:.3g}")
    return out


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


FMT = "%.17g"


def _write_table(path: Path, header: list[str], rows: np.ndarray):
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if not np.all(np.isfinite(rows)):
        raise ValueError(f"refusing to write non-finite values to {path.name}")
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(FMT % v for v in row) + "\n")


def _field_table(path: Path, t: np.ndarray, x: np.ndarray, values: np.ndarray):
    _write_table(path, ["t"] + [FMT % v for v in x], np.column_stack([t, values]))


def write_level(out: Path, res: LevelResult, formats: list[str]) -> list[Path]:
    """CSV fields, price, supply and two-column plot data for one grid."""
    g = res.grid
    num, ana = res.numeric.solution, res.analytic
    x_nodes, x_cells = g.x, g.x[:-1]
    files: list[Path] = []

    def table(name, header, rows):
        p = out / name
        _write_table(p, header, rows)
        files.append(p)

    if "csv" in formats:
        for name, xs, vals in (("phi.csv", x_nodes, num.phi), ("m.csv", x_cells, num.m), ("u.csv", x_cells, num.u)):
            p = out / name
            _field_table(p, g.t, xs, vals)
            files.append(p)
        table("price.csv", ["t", "varpi_numeric", "varpi_analytic", "abs_error"],
              np.column_stack([num.times, num.varpi, ana.varpi, np.abs(num.varpi - ana.varpi)]))
        sup = res.instance.supply
        table("supply.csv", ["t", "Q", "q_cum"], np.column_stack([sup.t_nodes, sup.Q, sup.q_cum]))

    if "plotdata" in formats:
        pd = "plotdata/"
        table(pd + "price_numeric.csv", ["t", "varpi"], np.column_stack([num.times, num.varpi]))
        table(pd + "price_analytic.csv", ["t", "varpi"], np.column_stack([ana.times, ana.varpi]))
        table(pd + "price_abs_error.csv", ["t", "abs_error"],
              np.column_stack([num.times, np.abs(num.varpi - ana.varpi)]))
        sup = res.instance.supply
        table(pd + "supply.csv", ["t", "Q"], np.column_stack([sup.t_nodes, sup.Q]))
        for i in sorted({0, g.n_t // 2, g.n_t}):
            table(pd + f"m_numeric_level{i}.csv", ["x", "m"], np.column_stack([x_cells, num.m[i]]))
            table(pd + f"m_analytic_level{i}.csv", ["x", "m"], np.column_stack([x_cells, ana.m[i]]))
            table(pd + f"u_numeric_level{i}.csv", ["x", "u"], np.column_stack([x_cells, num.u[i]]))
            table(pd + f"u_analytic_level{i}.csv", ["x", "u"], np.column_stack([x_cells, ana.u[i]]))
        table(pd + "phi_error_sup.csv", ["t", "sup_error"],
              np.column_stack([g.t, np.max(np.abs(num.phi - ana.phi), axis=1)]))
        mask = num.mask
        u_err = np.where(mask, np.abs(num.u - ana.u), 0.0).max(axis=1)
        table(pd + "u_error_sup_on_mask.csv", ["t", "sup_error"], np.column_stack([g.t, u_err]))
    return files


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    return obj


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def level_summary(res: LevelResult, directory: str) -> dict:
    rep = res.numeric.report
    return {
        "directory": directory,
        "grid": {"T": res.grid.T, "R": res.grid.R, "n_t": res.grid.n_t, "n_x": res.grid.n_x,
                 "h_t": res.grid.h_t, "h_x": res.grid.h_x},
        "timings_s": res.timings,
        "solver": rep.summary(),
        "objective_discrete": rep.objective_value,
        "objective_analytic": res.analytic.objective,
        "objective_analytic_grid": res.analytic.diagnostics["objective_grid"],
        "errors": res.errors.to_dict(),
        "diagnostics": res.numeric.solution.diagnostics,
        "analytic_diagnostics": res.analytic.diagnostics,
        "invariant_violations": res.violations,
    }


def refinement_rows(results: list[LevelResult]) -> list[RefinementRow]:
    rows = [RefinementRow(grid=r.grid, h_t=r.grid.h_t, h_x=r.grid.h_x, objective=r.numeric.report.objective_value,
                          objective_analytic=r.analytic.objective, errors=r.errors, converged=r.converged)
            for r in results]
    return attach_orders(rows)


@dataclass
class RunOutcome:
    exit_code: int
    out_dir: Path
    results: list[LevelResult]
    manifest: dict


def run_experiment(cfg: RunConfig, out_dir: Optional[str | Path] = None, refine: int = 1) -> RunOutcome:
    """Run ``refine`` grids (each doubling the last) and write all artifacts."""
    if refine < 1:
        raise ValueError("refine must be >= 1")
    out = Path(out_dir if out_dir is not None else cfg["output.directory"])
    out.mkdir(parents=True, exist_ok=True)
    formats = cfg["output.formats"]
    started = _dt.datetime.now(_dt.timezone.utc)

    results: list[LevelResult] = []
    files: list[Path] = []
    levels = []
    for level in range(refine):
        res = run_level(cfg, level)
        results.append(res)
        sub = out if refine == 1 else out / f"level_{level}"
        t0 = time.perf_counter()
        files += write_level(sub, res, formats)
        res.timings["write"] = time.perf_counter() - t0
        levels.append(level_summary(res, "." if refine == 1 else f"level_{level}"))

    table = orders = None
    if refine > 1:
        rows = refinement_rows(results)
        table, orders = refinement_table(rows), order_table(rows)
        for name, recs in (("refinement.csv", table), ("refinement_orders.csv", orders)):
            keys = list(recs[0].keys())
            # an order is undefined when an error vanishes; such pairs are left out
            body = [[rec[k] for k in keys] for rec in recs if all(math.isfinite(rec[k]) for k in keys)]
            p = out / name
            _write_table(p, keys, np.array(body).reshape(len(body), len(keys)))
            files.append(p)

    violations = [v for r in results for v in r.violations]
    converged = all(r.converged for r in results)
    if violations:
        status, code = "invariant_violation", EXIT_INVARIANT
    elif not converged:
        status, code = "not_converged", EXIT_NOT_CONVERGED
    else:
        status, code = "ok", EXIT_OK

    manifest = {
        "software": {"package": "pricemfg", "version": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "created_utc": started.isoformat(timespec="seconds"),
        "config_path": str(cfg.source) if cfg.source else None,
        "config": cfg.echo(),
        "warnings": [str(d) for d in cfg.warnings],
        "status": status,
        "converged": converged,
        "objective_discrete": levels[0]["objective_discrete"],
        "objective_analytic": levels[0]["objective_analytic"],
        "levels": levels,
        "refinement": table,
        "refinement_orders": orders,
        "files": [{"path": p.relative_to(out).as_posix(), "sha256": sha256(p)} for p in files],
    }
    (out / "report.json").write_text(json.dumps(_json_safe(manifest), indent=2, sort_keys=True) + "\n")
    return RunOutcome(code, out, results, manifest)
