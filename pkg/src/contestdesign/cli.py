"""Command-line entry point: ``contestdesign <subcommand> --config PATH``.

Exit codes: 0 success, 2 invalid configuration, 3 size cap exceeded,
4 numerically infeasible problem. Errors go to stderr as one JSON line.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import _io
from ._validation import CapacityError, ContestDesignError, InfeasibleError
from .config import ConfigError, build_design, build_measure, build_surface, load, tabulate
from .contest import (
    OptimalDesign,
    best_response_dynamics,
    constant_rule_best_responses,
    design_for,
    evaluate_design,
    two_atom_profile,
    verify_equilibrium,
    win_probabilities,
)
from .extreme_oracle import PolytopeSpec, certify_two_step, enumerate_vertices
from .measures import GridMeasure, NoiseKernel
from .solver import NON_MONOTONE, ObjectiveSpec, fan_lorentz_check, optimal_over_prior, optimal_rule, sweep_budget

EXIT_CONFIG, EXIT_CAP, EXIT_INFEASIBLE = 2, 3, 4


def _header(command, cfg, seed):
    return {"command": command, "config_hash": cfg.hash, "seed": seed}


def _write(out_dir, name, text):
    path = Path(out_dir) / name
    path.write_text(text)
    return str(path)


def _require_line(cfg, command):
    if cfg.domain.kind != "line":
        raise ConfigError("domain", f"'{command}' needs a 1D domain")


def cmd_solve(cfg, args):
    _require_line(cfg, "solve")
    result = optimal_rule(cfg.objective, cfg.measure, cfg.k, slack=args.slack)
    out = _header("solve", cfg, args.seed)
    out["result"] = result.to_dict()
    if cfg.prior:
        sol = optimal_over_prior(cfg.objective, cfg.prior, cfg.k)
        out["prior"] = {
            "expected_payoff": float(sol.expected_payoff),
            "results": [dict(weight=float(w), **r.to_dict()) for w, r in zip(sol.weights, sol.results)],
        }
    return {"solve.json": _io.dumps(out) + "\n"}


def cmd_vertices(cfg, args):
    constraint = "inequality" if args.slack else cfg.constraint
    spec = PolytopeSpec(cfg.domain, cfg.measure, cfg.k, constraint)
    certs = [certify_two_step(v) for v in enumerate_vertices(spec)]
    out = _header("vertices", cfg, args.seed)
    out.update(
        {
            "constraint": constraint,
            "count": len(certs),
            "all_certified": all(c.certified for c in certs),
            "vertices": [c.to_dict() for c in certs],
        }
    )
    return {"vertices.json": _io.dumps(out) + "\n"}


def cmd_sweep(cfg, args):
    _require_line(cfg, "sweep")
    ks = np.linspace(args.k_min, args.k_max, args.k_steps)
    table = sweep_budget(cfg.objective, cfg.measure, ks, jobs=args.jobs)
    summary = _header("sweep", cfg, args.seed)
    summary.update(
        {
            "concave": table.concave,
            "max_second_difference": table.max_second_difference,
            "marginal_match_fraction": table.marginal_match_fraction,
            "marginal_tolerance": table.marginal_tolerance,
        }
    )
    files = {"sweep.json": None}
    if args.format == "csv":
        comment = f"config_hash={cfg.hash} seed={args.seed}"
        files["sweep.csv"] = _io.csv_text(table.columns, table.rows, comment)
    else:
        summary["rows"] = list(table.rows)
    files["sweep.json"] = _io.dumps(summary) + "\n"
    return files


def _design(cfg):
    cls = cfg.objective.classification
    if cls == NON_MONOTONE:
        return OptimalDesign(cfg.k, cfg.objective)
    return design_for(cls, cfg.k)


def cmd_equilibrium(cfg, args):
    _require_line(cfg, "equilibrium")
    prim = cfg.primitives
    design = _design(cfg)
    if "profile" in cfg.raw:
        profile = build_measure(cfg.raw["profile"], cfg.domain, "profile")
    else:
        profile = two_atom_profile(prim, cfg.k)
    report = verify_equilibrium(profile, prim, cfg.k, design=design)
    dyn = cfg.raw.get("dynamics", {})
    initial = build_measure(dyn["initial"], cfg.domain, "dynamics.initial") if "initial" in dyn else profile
    run = best_response_dynamics(
        initial,
        prim,
        design,
        damping=args.damping if args.damping is not None else dyn.get("damping", 1.0),
        max_iters=args.max_iters if args.max_iters is not None else dyn.get("max_iters", 200),
        tol=args.tol if args.tol is not None else dyn.get("tol", 1e-12),
        tie_break=dyn.get("tie_break", "lowest"),
    )
    out = _header("equilibrium", cfg, args.seed)
    out.update(report.to_dict())
    out.update(
        {
            "iterations": run.iterations,
            "converged": run.converged,
            "cycle_detected": run.cycle_detected,
            "cycle_length": run.cycle_length,
            "terminal_max_gain": verify_equilibrium(run.terminal, prim, cfg.k, design=design).max_gain,
        }
    )
    comment = f"config_hash={cfg.hash} seed={args.seed}"
    files = {"equilibrium.json": _io.dumps(out) + "\n"}
    if args.format == "csv":
        files["trace.csv"] = _io.csv_text(run.trace_columns, run.trace, comment)
    else:
        files["trace.json"] = _io.dumps(list(run.trace)) + "\n"
    return files


def cmd_check(cfg, args):
    _require_line(cfg, "check")
    surface = build_surface(cfg.raw.get("surface", {"family": "designer"}), cfg)
    fl = fan_lorentz_check(surface, cfg.measure, samples=cfg.raw.get("samples", 1000), seed=args.seed)

    prim = cfg.primitives
    levels = np.linspace(0.0, 1.0, 11)
    br_sets = constant_rule_best_responses(prim, levels)
    topkis = {"levels": list(levels), "argmax_invariant": all(s == br_sets[0] for s in br_sets)}

    kernel = prim.kernel if prim.kernel is not None else NoiseKernel.identity(cfg.domain)
    noisy = type(prim)(prim.domain, prim.prize_utility, prim.cost, kernel)
    rng = np.random.default_rng(args.seed)
    profiles = [cfg.measure, GridMeasure.uniform(cfg.domain), two_atom_profile(prim, cfg.k)]
    for _ in range(3):
        w = rng.random(cfg.domain.size)
        profiles.append(GridMeasure(cfg.domain, w / w.sum()))
    design = design_for("increasing", cfg.k)
    errors = []
    monotone = True
    for mu in profiles:
        wp = win_probabilities(design, mu, noisy)
        errors.append(abs(float(np.dot(mu.mass.astype(float), wp)) - cfg.k))
        monotone &= bool(np.all(np.diff(wp) >= -1e-12))
    conservation = {"max_error": max(errors), "passed": max(errors) <= 1e-12, "win_probability_monotone": monotone}

    out = _header("check", cfg, args.seed)
    out.update({"fan_lorentz": fl.to_dict(), "topkis": topkis, "budget_conservation": conservation})
    return {"check.json": _io.dumps(out) + "\n"}


def cmd_compare(cfg, args):
    _require_line(cfg, "compare")
    raw = cfg.raw
    kind = raw.get("compare_objective", "aggregate" if "aggregate_objective" in raw else "designer")
    if kind == "aggregate":
        spec = raw.get("aggregate_objective", raw.get("objective", {"family": "linear"}))
        objective = ObjectiveSpec(cfg.domain, tabulate(spec, cfg.domain, "aggregate_objective"))
    else:
        objective = cfg.objective
    specs = raw.get("designs", [{"family": "single-threshold"}, {"family": "constant"}])
    dyn = raw.get("dynamics", {})
    initial = build_measure(dyn["initial"], cfg.domain, "dynamics.initial") if "initial" in dyn else None
    results = []
    for i, spec in enumerate(specs):
        design = build_design(spec, cfg.k, f"designs.{i}")
        ev = evaluate_design(
            design,
            cfg.primitives,
            objective,
            kind=kind,
            initial=initial,
            damping=args.damping if args.damping is not None else dyn.get("damping", 1.0),
            max_iters=args.max_iters if args.max_iters is not None else dyn.get("max_iters", 500),
            tie_break=dyn.get("tie_break", "lowest"),
        )
        results.append(dict(ev.to_dict(), **{k: v for k, v in spec.items() if k != "family"}))
    out = _header("compare", cfg, args.seed)
    out.update({"objective_kind": kind, "designs": results})
    return {"compare.json": _io.dumps(out) + "\n"}


COMMANDS = {
    "solve": cmd_solve,
    "vertices": cmd_vertices,
    "sweep": cmd_sweep,
    "equilibrium": cmd_equilibrium,
    "check": cmd_check,
    "compare": cmd_compare,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="contestdesign", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--k-min", type=float, default=0.02)
    parser.add_argument("--k-max", type=float, default=0.98)
    parser.add_argument("--k-steps", type=int, default=50)
    parser.add_argument("--max-iters", type=int, default=None)
    parser.add_argument("--damping", type=float, default=None)
    parser.add_argument("--tol", type=float, default=None)
    parser.add_argument("--slack", action="store_true", help="budget as an upper bound")
    parser.add_argument("--format", choices=("json", "csv"), default="csv")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for sweeps")
    return parser


def _fail(code, kind, path, message):
    sys.stderr.write(json.dumps({"error": kind, "path": path, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("<config>", str(exc)) from exc
        cfg = load(raw)
        if args.seed is None:
            args.seed = cfg.seed
        for name, value in (("k_min", args.k_min), ("k_max", args.k_max)):
            if not 0 < value < 1:
                raise ConfigError(name, "must lie in (0, 1)")
        files = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc.path, exc.message)
    except CapacityError as exc:
        return _fail(EXIT_CAP, "capacity", args.command, str(exc))
    except InfeasibleError as exc:
        return _fail(EXIT_INFEASIBLE, "infeasible", args.command, str(exc))
    except ContestDesignError as exc:
        return _fail(EXIT_CONFIG, "config", args.command, str(exc))

    Path(args.out).mkdir(parents=True, exist_ok=True)
    written = [_write(args.out, name, text) for name, text in files.items()]
    print(json.dumps({"command": args.command, "written": written}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
