"""Command-line front end.

Commands::

    boxcar simulate       --config cfg.json [--out DIR] [--seed S]
    boxcar distance       A.csv B.csv
    boxcar optimize       --config cfg.json [--out DIR] [--seed S]
    boxcar refine         --config cfg.json [--out DIR] [--seed S]
    boxcar convergence    --config cfg.json [--out DIR] [--seed S]
    boxcar gradient-check --config cfg.json [--out DIR] [--seed S]
    boxcar welfare-demo   [--config overrides.json] [--out DIR] [--seed S]

Exit codes: 0 success, 2 configuration error, 3 numeric failure.  All CSV
output uses 17-significant-digit scientific notation and carries the config
hash in a header comment so reruns diff exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from .control import Control
from .ebt import Discretization, as_measure, convergence_study, simulate
from .errors import ConfigError, NumericsError
from .measure import DiscreteMeasure, flat_distance, normalize, pairing_bound
from .optimizer import minimize, refine
from .sensitivity import check_gradient
from .svg import line_chart, step_series
from .welfare import (default_fertility, default_initial_atoms,
                      default_mortality, default_wage)

__all__ = ["main"]


def _fmt(x) -> str:
    return format(float(x), ".16e")


@dataclass
class RunReport:
    command: str
    config_hash: str
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def write(self, outdir: str) -> str:
        path = os.path.join(outdir, "report.json")
        self.outputs.append(path)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _write_csv(path: str, header: str, rows, cfg_hash: str, report: RunReport):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash={cfg_hash}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    report.outputs.append(path)


def write_measure_csv(path, mu: DiscreteMeasure, cfg_hash, report):
    rows = [(_fmt(x), _fmt(m)) for x, m in zip(mu.points, mu.masses)]
    _write_csv(path, "x,m", rows, cfg_hash, report)


def read_measure_csv(path) -> DiscreteMeasure:
    pts, ms = [], []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("x"):
                    continue
                a, b = line.split(",")
                pts.append(float(a))
                ms.append(float(b))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read measure file {path}: {exc}") from exc
    if any(m < 0 for m in ms):
        raise ConfigError(f"negative mass in measure file {path}")
    return normalize(pts, ms)


def write_trajectory_csv(path, traj, cfg_hash, report):
    rows = []
    for t, state in zip(traj.times, traj.states):
        for i in range(state.cohorts):
            rows.append((_fmt(t), str(i), _fmt(state.x[i]), _fmt(state.m[i])))
    _write_csv(path, "t,i,x,m", rows, cfg_hash, report)


def write_control_csv(path, control: Control, cfg_hash, report):
    cols = ",".join(f"u{j}" for j in range(control.dim))
    rows = []
    for k in range(control.pieces):
        rows.append((_fmt(control.breakpoints[k]),)
                    + tuple(_fmt(v) for v in control.values[k]))
    rows.append((_fmt(control.breakpoints[-1]),)
                + tuple(_fmt(v) for v in control.values[-1]))
    _write_csv(path, "t," + cols, rows, cfg_hash, report)


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path: str, payload: dict, report: RunReport) -> None:
    payload = dict(payload, config_hash=report.config_hash)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    report.outputs.append(path)


def _cost_summary(cv) -> dict:
    out = {"jtilde": cv.jtilde, "tv": cv.tv, "j": cv.total}
    if cv.tail_bound is not None:
        out["discount_tail_bound"] = cv.tail_bound
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg, outdir, seed, report):
    model = cfgmod.build_model(cfg)
    mu0 = cfgmod.build_measure(cfg)
    disc = cfgmod.build_discretization(cfg)
    control = cfgmod.build_control(cfg, model.control_box)
    horizon = float(cfg["horizon"])
    save_every = cfg.get("output", {}).get("save_every", 1)
    birth_flag = cfg.get("birth_includes_boundary", False)

    t0 = time.perf_counter()
    traj = simulate(model, mu0, control, horizon, disc, save_every=save_every,
                    birth_includes_boundary=birth_flag)
    report.timings["simulate_s"] = time.perf_counter() - t0

    h = report.config_hash
    write_trajectory_csv(os.path.join(outdir, "trajectory.csv"), traj, h, report)
    write_measure_csv(os.path.join(outdir, "measure_initial.csv"),
                      as_measure(traj.states[0]), h, report)
    write_measure_csv(os.path.join(outdir, "measure_final.csv"),
                      as_measure(traj.states[-1]), h, report)
    snap = cfg.get("output", {}).get("snapshot_every", 0)
    if snap:
        for idx in range(0, len(traj.states), snap):
            write_measure_csv(os.path.join(outdir, f"measure_{idx:04d}.csv"),
                              as_measure(traj.states[idx]), h, report)
    return 0


def cmd_distance(file_a, file_b):
    mu1 = read_measure_csv(file_a)
    mu2 = read_measure_csv(file_b)
    d = flat_distance(mu1, mu2)
    bound = pairing_bound(mu1, mu2)
    print(f"flat_distance={_fmt(d)}")
    print(f"pairing_bound={_fmt(bound)}")
    return 0


def cmd_optimize(cfg, outdir, seed, report):
    model = cfgmod.build_model(cfg)
    mu0 = cfgmod.build_measure(cfg)
    disc = cfgmod.build_discretization(cfg)
    cost = cfgmod.build_cost(cfg)
    settings = cfgmod.build_settings(cfg, seed_override=seed)
    horizon = float(cfg["horizon"])
    pieces = cfg.get("control", {}).get("pieces")
    if pieces is None:
        raise ConfigError("optimize needs control.pieces")
    initial = cfg.get("control", {}).get("initial")
    if initial is not None:
        initial = np.asarray(initial, dtype=float)
    birth_flag = cfg.get("birth_includes_boundary", False)

    t0 = time.perf_counter()
    result = minimize(model, cost, mu0, horizon, disc, pieces, settings,
                      initial_values=initial,
                      birth_includes_boundary=birth_flag)
    report.timings["optimize_s"] = time.perf_counter() - t0

    h = report.config_hash
    rows = [(str(i), _fmt(j)) for i, j in enumerate(result.j_history)]
    _write_csv(os.path.join(outdir, "history.csv"), "iteration,j", rows, h,
               report)
    if result.grad_norm_history:
        rows = [(str(i), _fmt(g)) for i, g in enumerate(result.grad_norm_history)]
        _write_csv(os.path.join(outdir, "gradient_norms.csv"),
                   "iteration,grad_norm", rows, h, report)
    write_control_csv(os.path.join(outdir, "control_opt.csv"), result.control,
                      h, report)
    summary = dict(_cost_summary(result.cost), termination=result.termination,
                   evaluations=result.evaluations)
    _write_json(os.path.join(outdir, "optimize_summary.json"), summary, report)
    print(f"J={_fmt(result.cost.total)} termination={result.termination}")
    return 0


def _run_refine(cfg, outdir, seed, report):
    model = cfgmod.build_model(cfg)
    mu0 = cfgmod.build_measure(cfg)
    cost = cfgmod.build_cost(cfg)
    settings = cfgmod.build_settings(cfg, seed_override=seed)
    levels = cfgmod.build_levels(cfg)
    horizon = float(cfg["horizon"])
    birth_flag = cfg.get("birth_includes_boundary", False)

    t0 = time.perf_counter()
    cert = refine(model, cost, mu0, horizon, levels, settings,
                  birth_includes_boundary=birth_flag)
    report.timings["refine_s"] = time.perf_counter() - t0

    h = report.config_hash
    rows = [(str(r.n), _fmt(r.dt), str(r.pieces), _fmt(r.d0), _fmt(r.j_star))
            for r in cert.rows]
    _write_csv(os.path.join(outdir, "certificate.csv"), "n,dt,M,d0,Jstar",
               rows, h, report)
    for idx, row in enumerate(cert.rows):
        write_control_csv(os.path.join(outdir, f"control_level{idx}.csv"),
                          row.control, h, report)
    if cert.increased:
        report.warnings.append(
            f"optimal value rose at levels {cert.increased}; possible "
            "local-minimum capture")
    return cert


def cmd_refine(cfg, outdir, seed, report):
    cert = _run_refine(cfg, outdir, seed, report)
    print("Jstar per level: " + " ".join(_fmt(r.j_star) for r in cert.rows))
    return 0


def cmd_convergence(cfg, outdir, seed, report):
    model = cfgmod.build_model(cfg)
    mu0 = cfgmod.build_measure(cfg)
    base = cfgmod.build_discretization(cfg)
    control = cfgmod.build_control(cfg, model.control_box)
    horizon = float(cfg["horizon"])
    section = cfg.get("convergence")
    if not section:
        raise ConfigError("configuration lacks a convergence section")
    birth_flag = cfg.get("birth_includes_boundary", False)

    def with_dt(dt):
        return Discretization(n=base.n, dt=dt, substeps=base.substeps,
                              dx=base.dx, placement=base.placement)

    schedule = [with_dt(dt) for dt in section["dts"]]
    reference = with_dt(section["reference_dt"])

    t0 = time.perf_counter()
    table = convergence_study(model, mu0, control, horizon, schedule,
                              reference, save_dt=section.get("save_dt"),
                              birth_includes_boundary=birth_flag)
    report.timings["convergence_s"] = time.perf_counter() - t0

    h = report.config_hash
    ratios = table.ratios() + [float("nan")]
    rows = [(_fmt(r.dt), _fmt(r.d0), _fmt(r.error), _fmt(ratios[i]),
             _fmt(r.error / (r.dt + r.d0) if r.dt + r.d0 > 0 else 0.0))
            for i, r in enumerate(table.rows)]
    _write_csv(os.path.join(outdir, "convergence.csv"),
               "dt,d0,error,ratio_to_next,row_constant", rows, h, report)
    xs = [r.dt for r in table.rows]
    ys = [max(r.error, 1e-300) for r in table.rows]
    fit = [table.fit_constant * (r.dt + r.d0) for r in table.rows]
    svg_path = os.path.join(outdir, "convergence.svg")
    line_chart(svg_path, [(xs, ys, "error"), (xs, fit, "fit C*(dt+d0)")],
               title="self-convergence", xlabel="dt", ylabel="max flat distance",
               loglog=True, comment=f"config_hash={h}")
    report.outputs.append(svg_path)
    print(f"fit_constant={_fmt(table.fit_constant)}")
    return 0


def cmd_gradient_check(cfg, outdir, seed, report):
    model = cfgmod.build_model(cfg)
    mu0 = cfgmod.build_measure(cfg)
    disc = cfgmod.build_discretization(cfg)
    cost = cfgmod.build_cost(cfg)
    control = cfgmod.build_control(cfg, model.control_box)
    fd_step = cfg.get("gradient_check", {}).get("fd_step", 1e-5)
    birth_flag = cfg.get("birth_includes_boundary", False)

    t0 = time.perf_counter()
    check = check_gradient(model, cost, mu0, control, disc, fd_step=fd_step,
                           birth_includes_boundary=birth_flag)
    report.timings["gradient_check_s"] = time.perf_counter() - t0

    payload = {
        "fd_step": fd_step,
        "max_abs_error": check.max_abs_error,
        "max_rel_error": check.max_rel_error,
        "worst_dof": list(check.worst_dof),
        "analytic": check.analytic.tolist(),
        "finite_difference": check.finite_difference.tolist(),
    }
    _write_json(os.path.join(outdir, "gradient_check.json"), payload, report)
    print(f"max_rel_error={_fmt(check.max_rel_error)} "
          f"worst_dof={check.worst_dof}")
    return 0


def default_welfare_config() -> dict:
    """Demonstration configuration for the welfare policy problem."""
    ages, masses = default_initial_atoms(100)
    mort = default_mortality()
    fert = default_fertility()
    wage = default_wage()
    return {
        "model": {
            "rates": {
                "growth": {"family": "constant", "value": 1.0},
                "mortality": {"family": "tabulated",
                              "nodes": list(mort.nodes),
                              "values": list(mort.values)},
                "birth": {"family": "separable",
                          "profile": {"family": "tabulated",
                                      "nodes": list(fert.nodes),
                                      "values": list(fert.values)},
                          "control_term": {"type": "affine", "const": 1.0,
                                           "coeffs": [1.0]}},
            },
            "control_box": {"lower": [0.0], "upper": [1.0]},
        },
        "initial_measure": {"atoms": {"points": ages.tolist(),
                                      "masses": masses.tolist()}},
        "horizon": 50.0,
        "cost": {
            "moments": [{"family": "tabulated", "nodes": list(wage.nodes),
                         "values": list(wage.values)}],
            "running": {"family": "welfare_income", "discount": 0.03},
            "boundary_channel": True,
        },
        "optimizer": {"method": "proximal-gradient", "multistart": 2,
                      "max_iterations": 60, "tolerance": 1e-5, "seed": 0},
        "refine": {
            "levels": [
                {"n": 100, "dt": 1.0, "pieces": 5, "substeps": 2, "dx": 1.0,
                 "placement": "centroid"},
                {"n": 200, "dt": 0.5, "pieces": 10, "substeps": 2, "dx": 0.5,
                 "placement": "centroid"},
                {"n": 400, "dt": 0.25, "pieces": 20, "substeps": 2,
                 "dx": 0.25, "placement": "centroid"},
            ],
        },
    }


def cmd_welfare_demo(cfg_overrides, outdir, seed, report):
    cfg = cfgmod.deep_merge(default_welfare_config(), cfg_overrides or {})
    cfgmod.validate_config(cfg)
    report.config_hash = cfgmod.config_hash(cfg)

    cert = _run_refine(cfg, outdir, seed, report)
    h = report.config_hash

    best = cert.final_control
    write_control_csv(os.path.join(outdir, "policy.csv"), best, h, report)
    svg_path = os.path.join(outdir, "policy.svg")
    xs, ys = step_series(best.breakpoints, best.values[:, 0])
    line_chart(svg_path, [(xs, ys, "subsidy")], title="optimal policy",
               xlabel="t", ylabel="u", comment=f"config_hash={h}")
    report.outputs.append(svg_path)

    final = cert.results[-1]
    summary = dict(_cost_summary(final.cost), income=-final.cost.jtilde,
                   levels=[{"n": r.n, "dt": r.dt, "pieces": r.pieces,
                            "d0": r.d0, "j_star": r.j_star}
                           for r in cert.rows],
                   plateau=cert.plateau)
    _write_json(os.path.join(outdir, "cost_breakdown.json"), summary, report)
    print("Jstar per level: " + " ".join(_fmt(r.j_star) for r in cert.rows))
    return 0


# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(prog="boxcar",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, needs_config=True):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=(name != "welfare-demo"))
        p.add_argument("--out", default="out")
        p.add_argument("--seed", type=int, default=None)
        return p

    add("simulate")
    add("optimize")
    add("refine")
    add("convergence")
    add("gradient-check")
    demo = add("welfare-demo")
    demo.set_defaults(config=None)

    dist = sub.add_parser("distance")
    dist.add_argument("measure_a")
    dist.add_argument("measure_b")
    return parser


_HANDLERS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "refine": cmd_refine,
    "convergence": cmd_convergence,
    "gradient-check": cmd_gradient_check,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "distance":
            return cmd_distance(args.measure_a, args.measure_b)

        outdir = _ensure_outdir(args.out)
        if args.command == "welfare-demo":
            # overrides are a partial document; only the merged config is
            # schema-validated
            overrides = {}
            if args.config:
                try:
                    with open(args.config, "r", encoding="utf-8") as fh:
                        overrides = json.load(fh)
                except (OSError, json.JSONDecodeError) as exc:
                    raise ConfigError(
                        f"cannot read overrides {args.config}: {exc}") from exc
            report = RunReport("welfare-demo", "")
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                code = cmd_welfare_demo(overrides, outdir, args.seed, report)
            report.warnings.extend(str(w.message) for w in caught)
            report.write(outdir)
            return code

        cfg = cfgmod.load_config(args.config)
        report = RunReport(args.command, cfgmod.config_hash(cfg))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            code = _HANDLERS[args.command](cfg, outdir, args.seed, report)
        report.warnings.extend(str(w.message) for w in caught)
        report.write(outdir)
        return code
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
