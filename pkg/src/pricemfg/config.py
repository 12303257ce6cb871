"""Run configuration: TOML file with dotted keys, validated before any solve."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .analytic import LqParams, lq_instance
from .discretization import Grid
from .errors import ConfigError, DomainError
from .problem import (
    InitialDensity,
    ProblemInstance,
    SupplyModel,
    SupplyPath,
    integrate_supply,
    radius_lower_bound,
    sine_qbar,
    zero_qbar,
)
from .solution import BALANCE_RULES, Scheme
from .discretization import SAMPLING_RULES
from .recovery import TIME_RULES
from .solver import SolverConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

QBAR_KINDS = ("sine", "zero")
M0_KINDS = ("bump", "uniform")
FORMATS = ("csv", "plotdata")

# dotted key -> (type, default)
KEYS: dict[str, tuple[type, Any]] = {
    "cost.c": (float, 1.0),
    "lq.eta": (float, 1.0),
    "lq.kappa": (float, 0.0),
    "supply.alpha": (float, 4.0),
    "supply.q0": (float, -0.5),
    "supply.qbar_kind": (str, "sine"),
    "supply.qbar_amplitude": (float, 5.0),
    "supply.qbar_frequency": (float, 3.0),
    "supply.refine": (int, 10),
    "grid.T": (float, 1.0),
    "grid.R": (float, 1.0),
    "grid.n_t": (int, 20),
    "grid.n_x": (int, 40),
    "m0.kind": (str, "bump"),
    "m0.support_radius": (float, 0.5),
    "scheme.balance_time_rule": (str, Scheme.balance_time_rule),
    "scheme.v_sampling": (str, Scheme.v_sampling),
    "scheme.price_time_rule": (str, Scheme.price_time_rule),
    "solver.max_outer": (int, SolverConfig.max_outer),
    "solver.max_inner": (int, SolverConfig.max_inner),
    "solver.tol_kkt": (float, SolverConfig.tol_kkt),
    "solver.tol_feas": (float, SolverConfig.tol_feas),
    "solver.barrier_mu0": (float, SolverConfig.barrier_mu0),
    "solver.barrier_shrink": (float, SolverConfig.barrier_shrink),
    "solver.mu_final": (float, SolverConfig.mu_final),
    "solver.stall_tol": (float, SolverConfig.stall_tol),
    "solver.stall_window": (int, SolverConfig.stall_window),
    "solver.snap_tol": (float, SolverConfig.snap_tol),
    "output.directory": (str, "results"),
    "output.formats": (list, ["csv", "plotdata"]),
}


@dataclass(frozen=True)
class Diagnostic:
    key: str
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.severity}: {self.key}: {self.message}"


@dataclass(frozen=True)
class RunConfig:
    values: dict[str, Any]
    source: Optional[Path] = None
    warnings: tuple[Diagnostic, ...] = field(default_factory=tuple)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def params(self) -> LqParams:
        return LqParams(self["cost.c"], self["lq.eta"], self["lq.kappa"])

    @property
    def scheme(self) -> Scheme:
        return Scheme(self["scheme.balance_time_rule"], self["scheme.v_sampling"],
                      self["scheme.price_time_rule"])

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(**{k.split(".", 1)[1]: v for k, v in self.values.items()
                               if k.startswith("solver.")})

    def grid(self, level: int = 0) -> Grid:
        f = 2**level
        return Grid(self["grid.T"], self["grid.R"], self["grid.n_t"] * f, self["grid.n_x"] * f)

    def supply_model(self) -> SupplyModel:
        if self["supply.qbar_kind"] == "zero":
            qbar = zero_qbar
        else:
            qbar = sine_qbar(self["supply.qbar_amplitude"], self["supply.qbar_frequency"])
        return SupplyModel(qbar, self["supply.alpha"], self["supply.q0"], self["grid.T"])

    def supply(self, level: int = 0) -> SupplyPath:
        return integrate_supply(self.supply_model(), self["supply.refine"] * self.grid(level).n_t)

    def m0(self) -> InitialDensity:
        return InitialDensity(self["m0.kind"], self["m0.support_radius"])

    def instance(self, level: int = 0) -> ProblemInstance:
        return lq_instance(self.params, self.supply(level), self.m0(), self["grid.R"])

    def echo(self) -> dict:
        """Nested copy of every value, defaults included."""
        out: dict[str, dict] = {}
        for key, val in self.values.items():
            sec, name = key.split(".", 1)
            out.setdefault(sec, {})[name] = list(val) if isinstance(val, list) else val
        return out


def _flatten(data: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key: str, value: Any, kind: type) -> tuple[Any, Optional[str]]:
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None, f"must be a number, got {value!r}"
        if not math.isfinite(value):
            return None, "must be finite"
        return float(value), None
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            return None, f"must be an integer, got {value!r}"
        return value, None
    if kind is str:
        if not isinstance(value, str):
            return None, f"must be a string, got {value!r}"
        return value, None
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        return None, f"must be a list of strings, got {value!r}"
    return list(value), None


def _rules(v: dict[str, Any]) -> list[Diagnostic]:
    out = []

    def need(ok: bool, key: str, msg: str):
        if not ok:
            out.append(Diagnostic(key, msg))

    need(v["cost.c"] > 0, "cost.c", "cost.c must be > 0")
    need(v["lq.eta"] >= 0, "lq.eta", "lq.eta must be ≥ 0")
    need(v["supply.qbar_kind"] in QBAR_KINDS, "supply.qbar_kind", f"supply.qbar_kind must be one of {QBAR_KINDS}")
    need(v["supply.refine"] >= 1, "supply.refine", "supply.refine must be ≥ 1")
    need(v["grid.T"] > 0, "grid.T", "grid.T must be > 0")
    need(v["grid.R"] > 0, "grid.R", "grid.R must be > 0")
    need(v["grid.n_t"] >= 2, "grid.n_t", "grid.n_t must be ≥ 2")
    need(v["grid.n_x"] >= 2, "grid.n_x", "grid.n_x must be ≥ 2")
    need(v["m0.kind"] in M0_KINDS, "m0.kind", f"m0.kind must be one of {M0_KINDS}")
    need(v["m0.support_radius"] > 0, "m0.support_radius", "m0.support_radius must be > 0")
    need(v["grid.R"] > v["m0.support_radius"], "grid.R",
         "grid.R must exceed m0.support_radius so the grid covers the initial density")
    need(v["scheme.balance_time_rule"] in BALANCE_RULES, "scheme.balance_time_rule",
         f"scheme.balance_time_rule must be one of {BALANCE_RULES}")
    need(v["scheme.v_sampling"] in SAMPLING_RULES, "scheme.v_sampling",
         f"scheme.v_sampling must be one of {SAMPLING_RULES}")
    need(v["scheme.price_time_rule"] in TIME_RULES, "scheme.price_time_rule",
         f"scheme.price_time_rule must be one of {TIME_RULES}")
    bad = [f for f in v["output.formats"] if f not in FORMATS]
    need(not bad, "output.formats", f"unknown output formats {bad}; allowed {FORMATS}")
    try:
        SolverConfig(**{k.split(".", 1)[1]: val for k, val in v.items() if k.startswith("solver.")})
    except DomainError as exc:
        out.append(Diagnostic("solver", str(exc)))
    return out


def _radius_check(v: dict[str, Any]) -> list[Diagnostic]:
    """Warn when ``grid.R`` does not clear ``R0 + ||Q||_L1``."""
    cfg = RunConfig(v)
    try:
        lower = radius_lower_bound(cfg.m0(), cfg.supply())
    except DomainError as exc:
        return [Diagnostic("supply", str(exc))]
    if v["grid.R"] <= lower:
        return [Diagnostic("grid.R", f"radius {v['grid.R']} does not exceed R0 + ||Q||_L1 = {lower:.6g}; "
                                     "feasibility is not guaranteed", "warning")]
    return []


def parse_config(data: dict, source: Optional[Path] = None) -> tuple[Optional[RunConfig], list[Diagnostic]]:
    """Typed, defaulted configuration and every diagnostic found.

    The config is ``None`` whenever an error-level diagnostic is present.
    """
    diags: list[Diagnostic] = []
    flat = _flatten(data)
    values: dict[str, Any] = {}
    for key in flat:
        if key not in KEYS:
            diags.append(Diagnostic(key, "unknown key"))
    for key, (kind, default) in KEYS.items():
        if key not in flat:
            values[key] = list(default) if isinstance(default, list) else default
            continue
        val, err = _coerce(key, flat[key], kind)
        if err:
            diags.append(Diagnostic(key, f"{key} {err}"))
        else:
            values[key] = val
    if diags:
        return None, diags
    diags += _rules(values)
    if not any(d.key in ("supply.qbar_kind", "supply.refine", "grid.T", "grid.n_t", "m0.kind", "m0.support_radius")
               for d in diags):
        diags += _radius_check(values)
    if any(d.severity == "error" for d in diags):
        return None, diags
    return RunConfig(values, source, tuple(diags)), diags


def read_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    """Read and validate; raises ``ConfigError`` listing every error."""
    cfg, diags = parse_config(read_config(path), Path(path))
    if cfg is None:
        raise ConfigError([str(d) for d in diags if d.severity == "error"])
    return cfg


def validate_file(path: str | Path) -> list[Diagnostic]:
    try:
        data = read_config(path)
    except ConfigError as exc:
        return [Diagnostic("file", str(exc))]
    return parse_config(data, Path(path))[1]
