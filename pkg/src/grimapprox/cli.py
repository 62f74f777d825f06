"""Command-line front end.

Exit status: 0 success, 2 configuration error, 3 data or I/O error,
4 numerical failure.  Set ``GRIM_LOG_LEVEL`` (e.g. ``INFO``) for progress logs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from . import __version__
from .diagnostics import separation_check, step_bound_report
from .errors import ConfigError, DataError, NumericalError
from .geim import geim_fit
from .grim import GrimConfig, max_steps_for, run_grim
from .kernel_quadrature import (KernelSpec, gram_matrix, kernel_instance, median_heuristic,
                                read_point_csv, wce_squared)
from .problems import (L2DemoSpec, MomentSpec, build_l2_demo, build_monomial_cubature,
                       eval_l2_metrics, load_csv_instance, monomial_rows, read_matrix_csv)
from .reporting import OutputError, write_results

log = logging.getLogger("grimapprox")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4
MODES = ("approx", "quadrature", "cubature", "l2-demo", "geim-compare")
#: quadrature diagnostics build a Lambda x Lambda distance matrix; skipped above this size
DIAGNOSTIC_MAX_POINTS = 500

Schedule = Union[int, list[int]]


class RunConfigFile(BaseModel):
    """Keys accepted in a ``--config`` YAML/JSON file; command-line flags override them."""

    model_config = ConfigDict(extra="forbid")

    mode: Optional[Literal["approx", "quadrature", "cubature", "l2-demo", "geim-compare"]] = None
    epsilon: Optional[float] = None
    epsilon0: Optional[float] = None
    max_steps: Optional[int] = None
    k_schedule: Optional[Schedule] = None
    s_schedule: Optional[Schedule] = None
    seed: Optional[int] = None
    grouped: Optional[bool] = None
    method: Optional[Literal["basic", "tree"]] = None
    evals: Optional[str] = None
    weights: Optional[str] = None
    norms: Optional[str] = None
    groups: Optional[str] = None
    distances: Optional[str] = None
    points: Optional[str] = None
    bandwidth: Optional[float] = None
    budget: Optional[int] = None
    degree: Optional[int] = None
    n: Optional[int] = None
    functionals: Optional[int] = None
    width: Optional[float] = None
    geim_features: Optional[int] = None
    out: Optional[str] = None
    trace: Optional[str] = None
    diagnostics: Optional[bool] = None

    @field_validator("k_schedule", "s_schedule")
    @classmethod
    def _positive(cls, v):
        values = [v] if isinstance(v, int) else v
        if v is not None and (not values or any(x < 1 for x in values)):
            raise ValueError("schedule entries must be positive integers")
        return v


def _schedule_arg(text: str):
    try:
        values = [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer schedule: {text!r}") from None
    return values[0] if len(values) == 1 else values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run parameters")
    g.add_argument("--config", help="YAML or JSON run configuration file")
    g.add_argument("--epsilon", type=float, help="target sup accuracy over all functionals")
    g.add_argument("--epsilon0", type=float, help="acceptable recombination error (default 1e-10*C)")
    g.add_argument("--max-steps", dest="max_steps", type=int)
    g.add_argument("--k", dest="k_schedule", type=_schedule_arg,
                   help="functionals added per step: integer or comma list")
    g.add_argument("--s", dest="s_schedule", type=_schedule_arg,
                   help="shuffle trials per step: integer or comma list")
    g.add_argument("--seed", type=int)
    g.add_argument("--grouped", action="store_true", default=None)
    g.add_argument("--method", choices=("basic", "tree"))
    g.add_argument("--out", help="JSON report path")
    g.add_argument("--trace", help="trace CSV path (default: <out>.trace.csv)")
    g.add_argument("--diagnostics", action="store_true", default=None,
                   help="add separation / step-bound diagnostics to the report")

    parser = argparse.ArgumentParser(
        prog="grimapprox", description="Sparse approximation by greedy recombination.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="mode", metavar="MODE")

    p = sub.add_parser("approx", parents=[common], help="generic instance from CSV files")
    p.add_argument("--evals", help="evaluation matrix CSV (one functional per line)")
    p.add_argument("--weights", help="feature weights CSV")
    p.add_argument("--norms", help="feature norms CSV (default: all ones)")
    p.add_argument("--groups", help="group id per functional, one per line")
    p.add_argument("--distances", help="Lambda x Lambda dual-distance CSV for diagnostics")

    p = sub.add_parser("quadrature", parents=[common], help="RBF kernel quadrature of a point cloud")
    p.add_argument("--points", help="point cloud CSV")
    p.add_argument("--bandwidth", type=float, help="RBF bandwidth (default: median heuristic)")
    p.add_argument("--budget", type=int, help="maximum number of quadrature nodes")

    p = sub.add_parser("cubature", parents=[common], help="moment-preserving measure reduction")
    p.add_argument("--points", help="point cloud CSV")
    p.add_argument("--degree", type=int, help="preserve moments up to this total degree")

    for name, text in (("l2-demo", "GRIM on the L2(0,1) demo"),
                       ("geim-compare", "GEIM vs GRIM on the L2(0,1) demo")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--n", type=int, help="parameter grid points per axis (features = n^2)")
        p.add_argument("--functionals", type=int, help="number of mollified functionals")
        p.add_argument("--width", type=float, help="mollifier width s")
        p.add_argument("--geim-features", dest="geim_features", type=int,
                       help="GEIM reference size (default n)")
    return parser


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        raw = yaml.safe_load(text) if path.suffix.lower() != ".json" else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        model = RunConfigFile(**raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{path}: {loc}: {first['msg']}") from None
    return model.model_dump(exclude_none=True)


def merged_settings(args: argparse.Namespace) -> dict:
    settings = {}
    if getattr(args, "config", None):
        settings.update(load_config_file(args.config))
        base = Path(args.config).parent
        for key in ("evals", "weights", "norms", "groups", "distances", "points"):
            if key in settings and not Path(settings[key]).is_absolute():
                settings[key] = str(base / settings[key])
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            settings[key] = value
    if settings.get("mode") not in (None, args.mode):
        raise ConfigError(f"config file mode {settings['mode']!r} conflicts with {args.mode!r}")
    settings["mode"] = args.mode
    return settings


def _require(settings, *keys):
    missing = [k for k in keys if settings.get(k) is None]
    if missing:
        raise ConfigError(f"{settings['mode']}: missing required setting(s): {', '.join(missing)}")


def make_grim_config(settings, default_steps, default_epsilon=None) -> GrimConfig:
    k = settings.get("k_schedule", 1)
    s = settings.get("s_schedule", 1)
    steps = settings.get("max_steps")
    if steps is None:
        steps = len(k) if isinstance(k, list) else default_steps(k)
    epsilon = settings.get("epsilon", default_epsilon)
    if epsilon is None:
        raise ConfigError("epsilon is required")
    return GrimConfig(
        epsilon=float(epsilon),
        epsilon0=settings.get("epsilon0"),
        max_steps=int(steps),
        k_schedule=k,
        s_schedule=s,
        seed=int(settings.get("seed", 0)),
        grouped=bool(settings.get("grouped", False)),
        method=settings.get("method", "tree"),
    )


def config_echo(settings, config: GrimConfig | None) -> dict:
    echo = {k: v for k, v in sorted(settings.items()) if k not in ("out", "trace", "trace_path")}
    if config is not None:
        echo.update(
            epsilon=config.epsilon, epsilon0=config.epsilon0, max_steps=config.max_steps,
            k_schedule=list(config.k_schedule), s_schedule=list(config.s_schedule),
            seed=config.seed, grouped=config.grouped, method=config.method,
        )
    return echo


def grim_block(result) -> dict:
    return {
        "support": [int(i) for i in result.support],
        "coefficients": [float(c) for c in result.coefficients],
        "steps": result.steps_completed,
        "terminated_early": result.terminated_early,
        "best_step": result.trace.best_step,
        "mass": result.mass,
        "epsilon0_used": result.epsilon0,
        "metrics": {"sup_error": result.achieved_sup},
    }


def _diagnostics(result, dist, config, n_features, n_functionals) -> dict:
    args = (result.trace, dist, config.epsilon, result.epsilon0, result.mass)
    sched = dict(k_schedule=config.k_schedule, s_schedule=config.s_schedule)
    block = {"step_bound": step_bound_report(*args, n_features, n_functionals, **sched)}
    if dist is not None:
        block["separation"] = separation_check(*args, **sched)
    return block


def _groups_file(path):
    ids = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                ids.append(line)
    return np.array(ids)


def run_approx(settings):
    _require(settings, "evals", "weights")
    inst = load_csv_instance(settings["evals"], settings["weights"], settings.get("norms"))
    if settings.get("groups") or settings.get("distances"):
        from dataclasses import replace
        groups = _groups_file(settings["groups"]) if settings.get("groups") else None
        dist = read_matrix_csv(settings["distances"]) if settings.get("distances") else None
        inst = replace(inst, group_of=groups, dual_distance=dist, target=None)
    config = make_grim_config(settings, lambda k: max_steps_for(inst, k), default_epsilon=1e-6)
    result = run_grim(inst, config)
    report = {"result": grim_block(result)}
    if settings.get("diagnostics"):
        report["diagnostics"] = _diagnostics(result, inst.dual_distance, config,
                                             inst.n_features, inst.n_functionals)
    return config, result.trace, report


def run_quadrature(settings):
    _require(settings, "points")
    pts, w = read_point_csv(settings["points"])
    n = pts.shape[0]
    mu = np.full(n, 1.0 / n) if w is None else w / w.sum()
    lam = settings.get("bandwidth") or median_heuristic(pts, seed=int(settings.get("seed", 0)))
    spec = KernelSpec(float(lam))
    gram = gram_matrix(pts, spec)
    want_diag = bool(settings.get("diagnostics")) and n <= DIAGNOSTIC_MAX_POINTS
    inst = kernel_instance(gram, mu, with_distances=want_diag)
    budget = settings.get("budget")
    if budget is not None and settings.get("max_steps") is None:
        k = settings.get("k_schedule", 1)
        if isinstance(k, list):
            raise ConfigError("--budget needs a scalar k schedule")
        kappa = min(budget - 1, inst.n_features - 1, inst.n_functionals)
        if kappa < 1:
            raise ConfigError("budget must allow at least two nodes")
        steps = -(-kappa // k)
        settings = dict(settings, max_steps=steps,
                        k_schedule=[k] * (steps - 1) + [kappa - k * (steps - 1)])
    config = make_grim_config(settings, lambda k: max_steps_for(inst, k), default_epsilon=1e-6)
    result = run_grim(inst, config)
    full = np.zeros(n)
    full[result.support] = result.coefficients
    block = grim_block(result)
    block["metrics"]["wce_squared"] = wce_squared(mu, full, gram)
    block["bandwidth"] = spec.bandwidth
    report = {"result": block}
    if settings.get("diagnostics"):
        if want_diag:
            report["diagnostics"] = _diagnostics(result, inst.dual_distance, config, n, n)
        else:
            report["diagnostics"] = {"skipped": f"more than {DIAGNOSTIC_MAX_POINTS} points"}
    return config, result.trace, report


def run_cubature(settings):
    _require(settings, "points", "degree")
    pts, w = read_point_csv(settings["points"])
    w = np.full(pts.shape[0], 1.0 / pts.shape[0]) if w is None else w
    spec = MomentSpec(int(settings["degree"]), pts.shape[1])
    inst = build_monomial_cubature(pts, w, spec)
    config = make_grim_config(settings, lambda k: max_steps_for(inst, k), default_epsilon=1e-9)
    result = run_grim(inst, config)
    reduced = np.zeros(pts.shape[0])
    reduced[result.support] = result.coefficients
    rows = monomial_rows(pts, spec)
    moments = rows @ w
    err = np.abs(rows @ reduced - moments) / np.maximum(np.abs(moments), 1.0)
    block = grim_block(result)
    block["metrics"]["max_relative_moment_error"] = float(err.max())
    block["exponents"] = [list(e) for e in spec.exponents]
    return config, result.trace, {"result": block}


def _l2_setup(settings):
    spec = L2DemoSpec(
        n_grid=int(settings.get("n", 20)),
        n_functionals=int(settings.get("functionals", 1000)),
        width=float(settings.get("width", 5e-4)),
    )
    demo = build_l2_demo(spec)
    return demo, demo.instance


def _table_block(demo, fit, result) -> dict:
    inst = demo.instance
    geim_coef = fit.interpolants[-1]
    g_l2, g_sup = eval_l2_metrics(inst, demo.norm, np.arange(inst.n_features), geim_coef)
    match = None
    for st in result.trace.steps:
        l2, sup = eval_l2_metrics(inst, demo.norm, st.support, st.coefficients)
        if l2 <= g_l2 and sup <= g_sup:
            match = {"step": st.step, "nonzero_weights": st.support_size,
                     "l2_error": l2, "sup_error": sup}
            break
    return {
        "geim": {"features": len(fit.state.selected_features), "nonzero_weights":
                 int(np.count_nonzero(geim_coef)), "l2_error": g_l2, "sup_error": g_sup},
        "grim_first_match": match,
    }


def _step_metrics(demo, result):
    out = []
    for st in result.trace.steps:
        l2, sup = eval_l2_metrics(demo.instance, demo.norm, st.support, st.coefficients)
        out.append({"step": st.step, "support_size": st.support_size,
                    "l2_error": l2, "sup_error": sup})
    return out


def run_l2_demo(settings, compare=False):
    demo, inst = _l2_setup(settings)
    config = make_grim_config(settings, lambda k: max_steps_for(inst, k), default_epsilon=0.01)
    result = run_grim(inst, config)
    n_geim = int(settings.get("geim_features") or demo.spec.n_grid)
    fit = geim_fit(inst, demo.norm, n_geim)
    block = grim_block(result)
    l2, sup = eval_l2_metrics(inst, demo.norm, result.support, result.coefficients)
    block["metrics"].update(l2_error=l2, sup_error=sup)
    report = {"result": block, "table": _table_block(demo, fit, result)}
    if compare:
        report["geim_steps"] = [
            dict(zip(("features", "l2_error", "sup_error"),
                     (k,) + eval_l2_metrics(inst, demo.norm, np.arange(inst.n_features), j)))
            for k, j in enumerate(fit.interpolants, start=1)
        ]
        report["geim_selected_features"] = [int(i) for i in fit.state.selected_features]
        report["geim_selected_functionals"] = [int(i) for i in fit.state.selected_functionals]
    else:
        report["steps"] = _step_metrics(demo, result)
    return config, result.trace, report


RUNNERS = {
    "approx": run_approx,
    "quadrature": run_quadrature,
    "cubature": run_cubature,
    "l2-demo": run_l2_demo,
    "geim-compare": lambda s: run_l2_demo(s, compare=True),
}


def execute(settings) -> tuple:
    """Run one mode and return ``(report, trace)``; the report carries a ``wall_time``."""
    start = time.perf_counter()
    config, trace, body = RUNNERS[settings["mode"]](settings)
    report = {"mode": settings["mode"], "config": config_echo(settings, config)}
    report.update(body)
    report["wall_time"] = round(time.perf_counter() - start, 6)
    return report, trace


def _configure_logging():
    level = os.environ.get("GRIM_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def run_command(argv=None) -> int:
    """Parse ``argv``, run the pipeline, write outputs; returns the exit status."""
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.mode is None:
        parser.print_usage(sys.stderr)
        print("grimapprox: error: a mode is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        settings = merged_settings(args)
        out = settings.get("out") or f"grim-{settings['mode']}.json"
        trace_path = settings.get("trace") or str(Path(out).with_suffix("")) + ".trace.csv"
        settings["trace_path"] = trace_path
        report, trace = execute(settings)
        report["trace_path"] = trace_path
        write_results(report, trace, out, trace_path)
    except ConfigError as exc:
        print(f"grimapprox: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OutputError) as exc:
        print(f"grimapprox: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"grimapprox: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


def main() -> None:
    sys.exit(run_command())
