"""Experiment configurations, the single-run driver and the batch reproduction."""

from __future__ import annotations

import csv
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .integrate import TimeGrid
from .mcf_lp import InfeasibleFlowError, solve_mcf, write_solution_csv
from .network import BUILTIN_NAMES, Network, builtin_instance, read_dimacs
from .optimize import (
    ArmijoParams,
    BarrierParams,
    Controls,
    CirculationProjector,
    OptimizerRun,
    dynamic_flow_cost,
    fd_gradient_check,
    run_dynamic,
    run_static_barrier,
    run_static_kkt,
    static_linear_cost,
    switching_reference_cost,
    write_run,
)
from .optimize.drivers import STATIC_GRID
from .phs import flow_phs

__all__ = [
    "MODES",
    "ConfigError",
    "ExperimentConfig",
    "RunResult",
    "parse_config_text",
    "load_config",
    "resolve_instance",
    "run",
    "ReportRow",
    "reproduce_all",
    "EXPECTED_ORACLE_COSTS",
]

MODES = ("static-kkt", "static-barrier", "dynamic-linear", "dynamic-hat", "oracle", "gradcheck")

# barrier parameters per instance for static-barrier runs
BARRIER_DEFAULTS = {"ep1": (0.7, 1.3), "ep2": (1.0, 2.0), "ep3": (0.7, 1.1)}

MODE_DEFAULTS: dict[str, dict] = {
    "static-kkt": {"steps": 10, "horizon": 1.0, "sigma0": 1.0, "max_iters": 10, "max_backtracks": 20, "eps_stop": 1e-6},
    "static-barrier": {
        "steps": 10,
        "horizon": 1.0,
        "alpha0": 1.0,
        "eps0": 1.0,
        "sigma0": 1.0,
        "max_iters": 300,
        "max_backtracks": 20,
        "eps_stop": 1e-6,
        "alpha_factor": 0.9,
        "alpha_min": 0.01,
        "eps_factor": 0.99,
        "normalize": True,
    },
    "dynamic": {
        "steps": 1000,
        "horizon": 1.0,
        "lam": 1e-3,
        "alpha0": 1.0,
        "eps0": 1e-3,
        "sigma0": 1000.0,
        "max_iters": 50,
        "max_backtracks": 20,
        "eps_stop": 1e-6,
        "alpha_factor": 0.9,
        "alpha_min": 0.01,
        "eps_factor": 0.99,
        "normalize": False,
    },
    "oracle": {},
    "gradcheck": {"steps": 1000, "horizon": 1.0, "lam": 1e-3, "fd_step": 1e-5, "n_directions": 3, "seed": 0, "cost_kind": "linear"},
}

_INT_KEYS = {"steps", "max_iters", "max_backtracks", "n_directions", "seed"}
_BOOL_KEYS = {"normalize"}
_STR_KEYS = {"cost_kind"}
PARAM_KEYS = sorted({k for d in MODE_DEFAULTS.values() for k in d})


class ConfigError(ValueError):
    """Invalid configuration: unknown key, bad value or unsupported combination."""


def _defaults_key(mode: str) -> str:
    return "dynamic" if mode.startswith("dynamic") else mode


def _coerce(key: str, value):
    if key not in PARAM_KEYS:
        raise ConfigError(f"unknown parameter {key!r}; known: {', '.join(PARAM_KEYS)}")
    if key in _STR_KEYS:
        return str(value)
    if key in _BOOL_KEYS:
        if isinstance(value, bool):
            return value
        s = str(value).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} expects a boolean, got {value!r}")
    try:
        if key in _INT_KEYS:
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} expects a number, got {value!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    """One run: a mode, an instance (builtin name or DIMACS path), parameter overrides and an output directory.

    Parameters not given explicitly take the per-mode defaults; see
    :meth:`resolved`.
    """

    mode: str
    instance: str
    out: Optional[str] = None
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        coerced = {k: _coerce(k, v) for k, v in dict(self.params).items()}
        allowed = MODE_DEFAULTS[_defaults_key(self.mode)]
        extra = sorted(set(coerced) - set(allowed))
        if extra:
            raise ConfigError(f"parameter(s) {', '.join(extra)} do not apply to mode {self.mode}")
        object.__setattr__(self, "params", coerced)

    def resolved(self) -> dict:
        p = dict(MODE_DEFAULTS[_defaults_key(self.mode)])
        if self.mode == "static-barrier":
            name = os.path.basename(self.instance)
            if name in BARRIER_DEFAULTS:
                p["alpha0"], p["eps0"] = BARRIER_DEFAULTS[name]
        p.update(self.params)
        return p

    def with_params(self, **changes) -> "ExperimentConfig":
        merged = dict(self.params)
        merged.update(changes)
        return dataclasses.replace(self, params=merged)


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path, overrides: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """Read a config file; ``mode``, ``instance`` and ``out`` are top-level keys, the rest are parameters."""
    with open(path) as fh:
        data = parse_config_text(fh.read())
    data.update(overrides or {})
    try:
        mode = data.pop("mode")
        instance = data.pop("instance")
    except KeyError as exc:
        raise ConfigError(f"config is missing {exc.args[0]!r}") from None
    out = data.pop("out", None)
    return ExperimentConfig(mode, instance, out, data)


def resolve_instance(spec: str, cost_kind: str = "linear") -> Network:
    """Builtin fixture by name, otherwise a DIMACS file path."""
    if spec in BUILTIN_NAMES:
        return builtin_instance(spec, cost_kind)
    if os.path.exists(spec):
        return read_dimacs(spec)
    raise ConfigError(f"unknown instance {spec!r}: not a builtin ({', '.join(BUILTIN_NAMES)}) and no such file")


@dataclass
class RunResult:
    config: ExperimentConfig
    summary: dict
    run: Optional[OptimizerRun] = None


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_summary(summary: Mapping, path) -> None:
    with open(path, "w") as fh:
        for k, v in summary.items():
            fh.write(f"{k}={_fmt(v)}\n")


def read_summary(path) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


def relative_error(value: float, reference: float) -> float:
    if reference == 0:
        return abs(value)
    return abs(value - reference) / abs(reference)


def _oracle_cost(net: Network) -> float:
    sol = solve_mcf(net)
    if sol.status != "optimal":
        raise InfeasibleFlowError(sol.cut, float("nan"))
    return sol.cost


def _armijo(p) -> ArmijoParams:
    return ArmijoParams(sigma0=p["sigma0"], max_backtracks=p["max_backtracks"])


def _execute(cfg: ExperimentConfig, net: Network, p: dict) -> RunResult:
    mode = cfg.mode
    summary: dict = {"mode": mode, "instance": net.name or cfg.instance}
    if mode == "oracle":
        sol = solve_mcf(net)
        if sol.status != "optimal":
            raise InfeasibleFlowError(sol.cut, float("nan"))
        summary.update(final_cost=sol.cost, oracle_cost=sol.cost, relative_error=0.0, iterations=0, termination="optimal")
        if cfg.out:
            os.makedirs(cfg.out, exist_ok=True)
            write_solution_csv(net, sol, os.path.join(cfg.out, "flow.csv"))
        return RunResult(cfg, summary)

    if mode == "gradcheck":
        return RunResult(cfg, {**summary, **_gradcheck(net, p)})

    grid = TimeGrid(p["horizon"], p["steps"])
    if mode == "static-kkt":
        r = run_static_kkt(net, eps_stop=p["eps_stop"], max_iters=p["max_iters"], armijo_params=_armijo(p), grid=grid)
        oracle = _oracle_cost(net)
    elif mode == "static-barrier":
        r = run_static_barrier(
            net,
            p["alpha0"],
            p["eps0"],
            max_iters=p["max_iters"],
            armijo_params=_armijo(p),
            alpha_factor=p["alpha_factor"],
            alpha_min=p["alpha_min"],
            eps_factor=p["eps_factor"],
            eps_stop=p["eps_stop"],
            normalize=p["normalize"],
            grid=grid,
        )
        oracle = _oracle_cost(net)
    else:
        r = run_dynamic(
            net,
            lam=p["lam"],
            grid=grid,
            max_iters=p["max_iters"],
            armijo_params=_armijo(p),
            alpha0=p["alpha0"],
            eps0=p["eps0"],
            alpha_factor=p["alpha_factor"],
            alpha_min=p["alpha_min"],
            eps_factor=p["eps_factor"],
            eps_stop=p["eps_stop"],
            normalize=p["normalize"],
        )
        oracle = switching_reference_cost(net.cost_function, horizon=grid.horizon)
    summary.update(
        final_cost=r.final_cost,
        oracle_cost=oracle,
        relative_error=relative_error(r.final_cost, oracle),
        iterations=r.iterations,
        termination=r.termination,
    )
    if mode.startswith("dynamic"):
        for label, t in (("x_half", 0.5 * grid.horizon), ("x_end", grid.horizon)):
            try:
                x = r.flow_at(t)
            except ValueError:
                continue
            for e, v in enumerate(x):
                summary[f"{label}_{e + 1}"] = float(v)
        summary["cost_nonincreasing"] = bool(np.all(np.diff(r.costs) <= 1e-9 * max(1.0, abs(oracle))))
    if cfg.out:
        write_run(r, cfg.out)
    return RunResult(cfg, summary, r)


def _gradcheck(net: Network, p: dict) -> dict:
    """Finite-difference check of the adjoint gradient at the default start of the matching driver."""
    nv = net.n_nodes
    if net.cost_function is not None:
        grid = TimeGrid(p["horizon"], p["steps"])
        sys = flow_phs(net, dynamic=True)
        cost = dynamic_flow_cost(net, p["lam"], barrier=BarrierParams(1.0, 1e-3), horizon=grid.horizon)
        u = np.zeros((grid.steps + 1, nv + net.n_edges))
        u[:, :nv] = -net.supply
        x0 = solve_mcf(net.replace(cost=net.cost_at(0.0))).x
        w = Controls(u, np.concatenate([np.zeros(nv), x0]))
        proj = CirculationProjector.for_network(net)

        def admissible(h):
            hu = np.zeros_like(h.u)
            hu[:, nv:] = proj(h.u[:, nv:])
            hu[0] = 0.0
            return Controls(hu, np.zeros_like(h.z0))

    else:
        from .mcf_lp import worst_case_flow

        grid = STATIC_GRID
        sys = flow_phs(net)
        cost = static_linear_cost(net, horizon=grid.horizon)
        u = np.zeros((grid.steps + 1, sys.dim_input))
        u[:, :nv] = -net.supply
        w = Controls(u, np.concatenate([np.zeros(nv), worst_case_flow(net).x]))
        proj = CirculationProjector.for_network(net)

        def admissible(h):
            z = np.zeros_like(h.z0)
            z[nv:] = proj(h.z0[nv:])
            return Controls(np.zeros_like(h.u), z)

    err = fd_gradient_check(
        sys, grid, w, cost, n_directions=p["n_directions"], step=p["fd_step"], seed=p["seed"], project=admissible
    )
    return {"max_relative_error": err, "n_directions": p["n_directions"], "fd_step": p["fd_step"]}


def run(cfg: ExperimentConfig, net: Optional[Network] = None) -> RunResult:
    """Execute one configuration and write its result files into ``cfg.out`` (if set).

    Dynamic modes need an instance with time-dependent costs; ``net``
    overrides instance resolution.
    """
    p = cfg.resolved()
    if net is None:
        kind = "hat" if cfg.mode == "dynamic-hat" else p.get("cost_kind", "linear")
        net = resolve_instance(cfg.instance, kind)
    if cfg.mode.startswith("dynamic") and net.cost_function is None:
        raise ConfigError(f"mode {cfg.mode} needs an instance with time-dependent edge costs (try 'diamond')")
    result = _execute(cfg, net, p)
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        write_summary(result.summary, os.path.join(cfg.out, "summary"))
    return result


# ---------------------------------------------------------------------------
# batch reproduction

# optimal costs of the static fixtures, produced by the exact oracle
EXPECTED_ORACLE_COSTS = {"fig1": 10.0, "ep1": 210.0, "ep2": 200.0, "ep3": 365.0}

TABLE_RELATIVE_ERRORS = {"ep1": 0.0392, "ep2": 0.0277, "ep3": 0.0430}
ENDPOINTS = {
    "linear": {1.0: (0.0213, 3.9787, 0.0213, 3.9787)},
    "hat": {0.5: (0.0011, 3.9989, 0.0011, 3.9989), 1.0: (3.9984, 0.0016, 3.9984, 0.0016)},
}
REFERENCE_COST = 1000.0


@dataclass(frozen=True)
class ReportRow:
    name: str
    check: str
    value: str
    expected: str
    passed: bool


def _row(name, check, value, expected, passed) -> ReportRow:
    return ReportRow(name, check, value, expected, bool(passed))


def _static_rows(name: str, net: Network, result: RunResult, quick: bool) -> list[ReportRow]:
    rows = []
    s = result.summary
    frozen = EXPECTED_ORACLE_COSTS[name]
    rows.append(
        _row(name, "oracle_cost", _fmt(s["oracle_cost"]), _fmt(frozen), abs(s["oracle_cost"] - frozen) <= 1e-7)
    )
    if result.config.mode == "static-kkt":
        rows.append(_row(name, "relative_error", _fmt(s["relative_error"]), "0 (1e-9)", s["relative_error"] <= 1e-9))
        rows.append(_row(name, "iterations", _fmt(s["iterations"]), "1", s["iterations"] == 1))
        return rows
    if quick:
        start = result.run.costs[0]
        rows.append(
            _row(name, "cost_decrease", _fmt(s["final_cost"]), f"< {_fmt(start)}", s["final_cost"] < start)
        )
        return rows
    target = TABLE_RELATIVE_ERRORS[name]
    rows.append(
        _row(
            name,
            "relative_error",
            _fmt(s["relative_error"]),
            f"{target} +- 0.02",
            abs(s["relative_error"] - target) <= 0.02,
        )
    )
    return rows


def _dynamic_rows(name: str, kind: str, result: RunResult, quick: bool) -> list[ReportRow]:
    s = result.summary
    rows = []
    ref = s["oracle_cost"]
    rows.append(_row(name, "reference_cost", _fmt(ref), "1000 (1e-9)", abs(ref - REFERENCE_COST) <= 1e-9))
    if quick:
        start = result.run.costs[0]
        rows.append(_row(name, "cost_decrease", _fmt(s["final_cost"]), f"< {_fmt(start)}", s["final_cost"] < start))
        return rows
    for t, target in ENDPOINTS[kind].items():
        label = "x_half" if t == 0.5 else "x_end"
        got = np.array([s[f"{label}_{e + 1}"] for e in range(4)])
        gap = float(np.max(np.abs(got - np.array(target))))
        rows.append(
            _row(name, f"x({t:g})", " ".join(f"{v:.4f}" for v in got), " ".join(map(str, target)) + " +- 0.05", gap <= 0.05)
        )
    fc = s["final_cost"]
    rows.append(_row(name, "final_cost", _fmt(fc), "[1000, 1100]", 1000.0 <= fc <= 1100.0))
    rows.append(_row(name, "cost_nonincreasing", _fmt(s["cost_nonincreasing"]), "true", s["cost_nonincreasing"]))
    return rows


def canonical_configs(out_dir: Optional[str], quick: bool = False) -> list[tuple[str, ExperimentConfig]]:
    def sub(name):
        return os.path.join(out_dir, name) if out_dir else None

    quick_static = {"max_iters": 10} if quick else {}
    quick_dyn = {"max_iters": 10, "steps": 100} if quick else {}
    cfgs = [("fig1-kkt", ExperimentConfig("static-kkt", "fig1", sub("fig1-kkt")))]
    for ep in ("ep1", "ep2", "ep3"):
        cfgs.append((f"{ep}-barrier", ExperimentConfig("static-barrier", ep, sub(f"{ep}-barrier"), quick_static)))
    cfgs.append(("diamond-linear", ExperimentConfig("dynamic-linear", "diamond", sub("diamond-linear"), quick_dyn)))
    cfgs.append(("diamond-hat", ExperimentConfig("dynamic-hat", "diamond", sub("diamond-hat"), quick_dyn)))
    return cfgs


def reproduce_all(
    out_dir: Optional[str] = None,
    quick: bool = False,
    instances: Optional[Mapping[str, Network]] = None,
) -> list[ReportRow]:
    """Run the six canonical configurations and check them against the recorded expectations.

    ``instances`` replaces fixtures by name (for instance a corrupted copy).
    ``quick`` shortens the runs (10 steps, 100 time steps) and only checks
    oracle values, one-step optimality and cost decrease. A sub-run that
    raises produces a failed ``error`` row.
    """
    instances = dict(instances or {})
    rows: list[ReportRow] = []
    for name, cfg in canonical_configs(out_dir, quick):
        kind = "hat" if cfg.mode == "dynamic-hat" else "linear"
        try:
            net = instances.get(cfg.instance) or resolve_instance(cfg.instance, kind)
            result = run(cfg, net)
        except (ArithmeticError, ValueError, OSError, np.linalg.LinAlgError) as exc:
            rows.append(_row(name, "error", type(exc).__name__, str(exc), False))
            continue
        if cfg.mode.startswith("dynamic"):
            rows.extend(_dynamic_rows(name, kind, result, quick))
        else:
            rows.extend(_static_rows(cfg.instance, net, result, quick))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run", "check", "value", "expected", "status"])
            for r in rows:
                w.writerow([r.name, r.check, r.value, r.expected, "pass" if r.passed else "FAIL"])
    return rows


def format_report(rows) -> str:
    widths = [max(len(str(getattr(r, f))) for r in rows) for f in ("name", "check", "value", "expected")]
    widths = [max(w, len(h)) for w, h in zip(widths, ("run", "check", "value", "expected"))]
    lines = []
    head = ("run", "check", "value", "expected")
    lines.append("  ".join(h.ljust(w) for h, w in zip(head, widths)) + "  status")
    for r in rows:
        cells = (r.name, r.check, r.value, r.expected)
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + ("  pass" if r.passed else "  FAIL"))
    return "\n".join(lines)
