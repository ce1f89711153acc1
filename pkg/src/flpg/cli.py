"""Command line front end: ``flpg <subcommand> ...``.

Every JSON report has the shape ``{"manifest": {...}, "result": {...}}``.
CSV outputs get a ``<path>.manifest.json`` sidecar.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .dynamics import RepeatedGameSpec, cce_gap, empirical_regret, flpg_game, run_dynamics
from .equilibrium import RegularityError, robust_equilibrium, region_scan
from .model import ConfigError, GameConfig, RobustOperator, StrategyProfile, attacker_payoff_bounds, \
    defender_payoff_bounds, privacy_leakage_bounds, robust_value
from .oracle import CorrelatedGame2x2, Family, coefficients, solve_oracle_lp, DEFAULT_MARGIN
from .sandbox import LinearTask, fit_constants, required_data_bound, simulate_attack, validate_bounds

EXIT_OK, EXIT_VALIDATION, EXIT_REGULARITY = 0, 1, 2

_num = {"type": "number"}
_num_or_null = {"type": ["number", "null"]}
_interval = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["subcommand", "config", "seed", "outputs", "version", "duration_s"],
    "properties": {
        "subcommand": {"type": "string"},
        "config": {"type": ["string", "null"]},
        "seed": {"type": ["integer", "null"]},
        "outputs": {"type": "array", "items": {"type": "string"}},
        "version": {"type": "string"},
        "duration_s": _num,
    },
}

RESULT_SCHEMAS = {
    "bounds": {
        "type": "object",
        "required": ["deltas", "rounds", "operator", "leakage", "defenders", "attacker"],
        "properties": {
            "leakage": {"type": "array", "items": {
                "type": "object", "required": ["bounds", "regime", "c_lo", "c_hi"],
                "properties": {"bounds": _interval, "regime": {"enum": ["interior", "exterior"]}}}},
            "defenders": {"type": "array", "items": {
                "type": "object", "required": ["bounds", "robust"],
                "properties": {"bounds": _interval, "robust": _num}}},
            "attacker": {"type": "object", "required": ["bounds", "robust"],
                         "properties": {"bounds": _interval, "robust": _num}},
        },
    },
    "equilibrium": {
        "type": "object",
        "required": ["deltas", "attack_rounds", "hat_ca", "threshold", "classification",
                     "regularity", "robust_payoffs", "fixed_point"],
        "properties": {
            "deltas": {"type": "array", "items": _num},
            "attack_rounds": _num,
            "hat_ca": _num_or_null,
            "threshold": _num_or_null,
            "classification": {"enum": ["zero_equilibrium", "tau_equilibrium", "general"]},
            "fixed_point": {"type": "boolean"},
        },
    },
    "scan": {
        "type": "object",
        "required": ["csv", "rows", "counts"],
        "properties": {"rows": {"type": "integer"}, "counts": {"type": "object"}},
    },
    "oracle": {
        "type": "object",
        "required": ["x", "margins", "multipliers", "family"],
        "properties": {
            "x": {"type": ["array", "null"], "items": _num},
            "margins": {"type": ["array", "null"], "items": _num},
            "multipliers": {"type": ["array", "null"], "items": _num},
            "family": {"enum": [f.value for f in Family]},
        },
    },
    "dynamics": {
        "type": "object",
        "required": ["per_player_regret", "cce_gap", "empirical_joint", "normalization_constants"],
        "properties": {
            "per_player_regret": {"type": "array", "items": _num},
            "cce_gap": _num,
            "empirical_joint": {"type": "array", "items": {
                "type": "object", "required": ["actions", "probability"]}},
            "normalization_constants": {"type": "array", "items": _interval},
        },
    },
    "sandbox": {
        "type": "object",
        "required": ["fitted_constants", "D", "traces", "contained_count"],
        "properties": {
            "traces": {"type": "array", "items": {
                "type": "object",
                "required": ["seed", "rounds", "empirical_vp", "bounds", "contained"]}},
            "contained_count": {"type": "integer"},
        },
    },
}


def report_schema(subcommand: str) -> dict:
    return {
        "type": "object",
        "required": ["manifest", "result"],
        "properties": {"manifest": MANIFEST_SCHEMA, "result": RESULT_SCHEMAS[subcommand]},
    }


def validate_report(subcommand: str, document: dict):
    jsonschema.validate(document, report_schema(subcommand))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _threads() -> int:
    env = os.environ.get("FLPG_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def _load_config(args) -> GameConfig:
    return GameConfig.load(args.config, strict=not args.relaxed)


def _op(name: str) -> RobustOperator:
    return RobustOperator(name)


def cmd_bounds(args) -> dict:
    cfg = _load_config(args)
    op = _op(args.op)
    deltas = _floats(args.deltas)
    prof = StrategyProfile(deltas, args.rounds)
    prof.check(cfg)
    leak = [privacy_leakage_bounds(d, args.rounds, cfg) for d in deltas]
    defenders = []
    for k in range(cfg.num_defenders):
        iv = defender_payoff_bounds(prof, k, cfg)
        defenders.append({"bounds": [iv.lower, iv.upper], "robust": robust_value(iv, op)})
    att = attacker_payoff_bounds(prof, cfg)
    return {
        "deltas": deltas,
        "rounds": args.rounds,
        "operator": op.value,
        "leakage": [{"bounds": [lb.bounds.lower, lb.bounds.upper], "regime": lb.regime.value,
                     "c_lo": _finite(lb.c_lo), "c_hi": _finite(lb.c_hi)} for lb in leak],
        "defenders": defenders,
        "attacker": {"bounds": [att.lower, att.upper], "robust": robust_value(att, op)},
    }


def _finite(v):
    return v if np.isfinite(v) else None


def cmd_equilibrium(args) -> dict:
    cfg = _load_config(args)
    report = robust_equilibrium(cfg, _op(args.op), tau=args.tau)
    return report.to_dict()


def cmd_scan(args) -> tuple[dict, str]:
    cfg = _load_config(args)
    scan = region_scan(cfg, np.linspace(0, cfg.D, args.delta_steps),
                       np.linspace(0, cfg.round_cap, args.rounds_steps))
    csv = scan.to_csv()
    signs = scan.signs
    counts = {"pos": int((signs > 0).sum()), "zero": int((signs == 0).sum()), "neg": int((signs < 0).sum())}
    return {"csv": args.out, "rows": int(signs.size), "counts": counts}, csv


def cmd_oracle(args) -> tuple[dict, bool]:
    with open(args.config) as fh:
        doc = json.load(fh)
    unknown = set(doc) - {"defender_payoff", "attacker_payoff", "cost", "margin"}
    if unknown:
        raise ConfigError(f"unknown oracle fields: {sorted(unknown)}")
    game = CorrelatedGame2x2.from_dict(doc)
    margin = args.margin if args.margin is not None else doc.get("margin", DEFAULT_MARGIN)
    sol = solve_oracle_lp(coefficients(game), game.cost, margin)
    return sol.to_dict(), sol.family is not Family.INFEASIBLE


def cmd_dynamics(args) -> tuple[dict, str | None]:
    cfg = _load_config(args)
    acts = _ints(args.attacker_actions) if args.attacker_actions else None
    game = flpg_game(cfg, _op(args.op), args.delta_levels, acts)
    trace = run_dynamics(RepeatedGameSpec(game.action_counts, game.losses, args.rounds, seed=args.seed))
    joint = trace.empirical_joint()
    sparse = [{"actions": [int(i) for i in idx], "probability": float(joint[idx])}
              for idx in zip(*np.nonzero(joint))]
    result = {
        "per_player_regret": [float(r) for r in empirical_regret(trace, game.losses)],
        "cce_gap": cce_gap(joint, 1 - game.losses) if trace.horizon else 0.0,
        "empirical_joint": sparse,
        "normalization_constants": [list(nc) for nc in game.normalization],
        "delta_levels": [float(v) for v in game.delta_levels],
        "attacker_actions": [float(v) for v in game.attacker_actions],
        "rounds": args.rounds,
    }
    csv = None
    if args.per_round_csv:
        lines = ["t,player,action,loss"]
        for t in range(trace.horizon):
            for i in range(trace.actions.shape[1]):
                lines.append(f"{t + 1},{i},{trace.actions[t, i]},{trace.realized[t, i]:.17g}")
        csv = "\n".join(lines) + "\n"
    return result, csv


def cmd_sandbox(args) -> tuple[dict, dict[str, str]]:
    horizons = sorted(set(_ints(args.horizons)) | {args.rounds})
    task = LinearTask.make(dim=args.dim, seed=args.task_seed, cond=args.cond, D=1.0)
    if not 0 <= args.delta <= task.D:
        raise ValueError("--delta must lie in [0, 1]")
    jobs = [(s, T) for s in range(args.seeds) for T in horizons]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        traces = list(pool.map(lambda job: simulate_attack(task, args.delta, job[1], seed=job[0]), jobs))
    fitted = fit_constants(traces)
    if fitted.exact_recovery:
        D = task.D
    else:
        D = max(task.D, required_data_bound(fitted, task.c_a, task.c_b),
                max(float(tr.distances.max(initial=0.0)) for tr in traces))
    entries, csvs = [], {}
    for (seed, T), tr in zip(jobs, traces):
        chk = validate_bounds(tr, fitted, task.c_a, task.c_b, D)
        entries.append({
            "seed": seed, "rounds": T, "delta": tr.delta,
            "empirical_vp": chk.empirical,
            "bounds": None if chk.lower is None else [chk.lower, chk.upper],
            "regime": chk.regime,
            "contained": chk.contained,
            "intermediate_ok": chk.intermediate_ok,
            "skipped": chk.skipped,
        })
        csvs[f"trace_seed{seed}_T{T}.csv"] = tr.to_csv()
    result = {
        "fitted_constants": fitted.to_dict(),
        "c_a": task.c_a,
        "c_b": task.c_b,
        "D": D,
        "traces": entries,
        "contained_count": sum(1 for e in entries if e["contained"]),
    }
    return result, csvs


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flpg", description="Privacy game between federated defenders and an attacker.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(p, config=True, seed=False):
        if config:
            p.add_argument("--config", required=True, help="path to a JSON game config")
            p.add_argument("--relaxed", action="store_true",
                           help="skip the data-bound assumptions (range checks still apply)")
        if seed:
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output path (default: standard output)")

    ops = [o.value for o in RobustOperator]

    p = sub.add_parser("bounds", help="payoff and leakage bounds at one profile")
    common(p)
    p.add_argument("--deltas", required=True, help="comma-separated protection extents")
    p.add_argument("--rounds", type=float, required=True)
    p.add_argument("--op", choices=ops, default="worst_case")

    p = sub.add_parser("equilibrium", help="robust equilibrium and its classification")
    common(p)
    p.add_argument("--op", choices=ops, default="worst_case")
    p.add_argument("--tau", type=int)

    p = sub.add_parser("scan", help="sign grid of the lower attacker payoff (CSV)")
    common(p)
    p.add_argument("--delta-steps", type=int, default=101)
    p.add_argument("--rounds-steps", type=int, default=101)

    p = sub.add_parser("oracle", help="cost-minimizing correlation device for a 2x2 game")
    p.add_argument("--config", required=True,
                   help="JSON with defender_payoff, attacker_payoff, cost and optional margin")
    p.add_argument("--margin", type=float)
    p.add_argument("--out")

    p = sub.add_parser("dynamics", help="bandit no-regret dynamics on the discretized game")
    common(p, seed=True)
    p.add_argument("--rounds", type=int, default=2000)
    p.add_argument("--delta-levels", type=int, default=17)
    p.add_argument("--attacker-actions", help="comma-separated integer attack extents")
    p.add_argument("--op", choices=ops, default="worst_case")
    p.add_argument("--per-round-csv", help="optional path for the t,player,action,loss table")

    p = sub.add_parser("sandbox", help="linear attack sandbox and bound containment")
    common(p, config=False)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--rounds", type=int, default=200)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--horizons", default="20,50,100,200,400")
    p.add_argument("--cond", type=float, default=3.0, help="condition number of the gradient map")
    p.add_argument("--task-seed", type=int, default=0)
    p.add_argument("--csv-dir", help="directory for one t,distance,residual CSV per trace")
    return parser


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path, text):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _manifest(args, outputs, start) -> dict:
    return {
        "subcommand": args.subcommand,
        "config": getattr(args, "config", None),
        "seed": getattr(args, "seed", None),
        "outputs": outputs,
        "version": __version__,
        "duration_s": round(time.perf_counter() - start, 6),
    }


def dispatch(argv=None) -> int:
    start = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as err:  # --help / --version
        return int(err.code or 0)
    code = EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if args.subcommand == "scan":
                result, csv = cmd_scan(args)
                _write(args.out, csv)
                if args.out:
                    side = _dump({"manifest": _manifest(args, [args.out], start), "result": result})
                    Path(args.out + ".manifest.json").write_text(side)
                return EXIT_OK
            outputs = [args.out] if args.out else []
            if args.subcommand == "bounds":
                result = cmd_bounds(args)
            elif args.subcommand == "equilibrium":
                result = cmd_equilibrium(args)
            elif args.subcommand == "oracle":
                result, feasible = cmd_oracle(args)
                if not feasible:
                    cert = ",".join(str(c) for c in result["certificate"])
                    print(f"infeasible: incentive constraints {{{cert}}} cannot hold together",
                          file=sys.stderr)
                    code = EXIT_REGULARITY
            elif args.subcommand == "dynamics":
                result, csv = cmd_dynamics(args)
                if csv is not None:
                    Path(args.per_round_csv).write_text(csv)
                    outputs.append(args.per_round_csv)
            else:
                result, csvs = cmd_sandbox(args)
                if args.csv_dir:
                    folder = Path(args.csv_dir)
                    folder.mkdir(parents=True, exist_ok=True)
                    for name, text in csvs.items():
                        (folder / name).write_text(text)
                        outputs.append(str(folder / name))
        doc = {"manifest": _manifest(args, outputs, start), "result": result}
        validate_report(args.subcommand, doc)
        _write(args.out, _dump(doc))
        return code
    except RegularityError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_REGULARITY
    except (ConfigError, ValueError, KeyError, TypeError, OSError) as err:
        # json.JSONDecodeError is a ValueError
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


def main():
    sys.exit(dispatch())
