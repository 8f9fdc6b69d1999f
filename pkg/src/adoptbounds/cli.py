"""Command-line front end: ``adoptbounds <subcommand> [options]``.

Exit status: 0 success, 2 usage error, 3 invalid input or configuration,
4 data inconsistent with the identifying assumptions.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .descriptives import adoption_by_quartile, adoption_test, summarize, welch_t_test
from .errors import AssumptionViolation, DataValidationError
from .resampling import BootstrapConfig, bootstrap_bounds
from .strata_bounds import (
    StrataInput,
    baseline_outcomes,
    strata_input_from_dataset,
    stratum_proportions,
    sweep_from_parts,
    sweep_row_record,
)
from .theory_model import ThetaDistribution, TheoryConfig, run_simulation, generate_trial, write_trial
from .trial_data import GRADE_SCALE, Arm, GradeScale, canonical_metric, load_dataset

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_ASSUMPTION = 4

DEFAULT_METRICS = (
    "grade_point",
    "issues_missed",
    "fk_grade",
    "word_count",
    "rule_misstatements",
    "case_misstatements",
)
ARM_PAIRS = ((Arm.NoAI, Arm.AIOnly), (Arm.NoAI, Arm.AITrained), (Arm.AIOnly, Arm.AITrained))
DEFAULT_GAMMAS = (0.0, 0.5, 1.0)
SUMMARY_FLAGS = (
    ("n_z0", int),
    ("n_z0_d1", int),
    ("n_z1", int),
    ("n_z1_d1", int),
    ("mean_z0_d0", float),
    ("mean_z0_d1", float),
    ("mean_z1_d0", float),
    ("mean_z1_d1", float),
)


@dataclass
class RunManifest:
    subcommand: str
    input_path: str | None
    seed: int | None
    options: dict = field(default_factory=dict)
    tool_version: str = __version__


def _jsonable(value):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


# ---------------------------------------------------------------------------
# Plain-text tables


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.3f}"
    return str(value)


def format_table(title: str, headers: list[str], rows: list[list]) -> str:
    body = [[_cell(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(headers)]
    lines = [title, "  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in body]
    return "\n".join(lines)


def _bracket(ci) -> str:
    return f"[{ci[0]:.3f}, {ci[1]:.3f}]"


# ---------------------------------------------------------------------------
# Report builders (return JSON-ready dicts)


def _parse_tails(specs: list[str]) -> dict[str, str]:
    tails = {}
    for spec in specs or []:
        if "=" not in spec:
            raise DataValidationError(f"--tail expects METRIC=TAIL, got {spec!r}")
        metric, tail = spec.split("=", 1)
        metric = metric.strip()
        tails["adoption" if metric == "adoption" else canonical_metric(metric)] = tail.strip()
    return tails


def describe_report(dataset, metrics, tails) -> dict:
    for arm in Arm:
        if not dataset.arm(arm):
            raise DataValidationError(f"arm empty: {arm.name} has no records")
    summaries = []
    tests = []
    for metric in metrics:
        by_arm = {arm: summarize(dataset, arm, metric) for arm in Arm}
        for arm in Arm:
            s = by_arm[arm]
            summaries.append({"metric": metric, "arm": arm.name, "n": s.n, "mean": s.mean, "sd": s.sd})
        for a, b in ARM_PAIRS:
            res = welch_t_test(by_arm[a], by_arm[b], tails.get(metric, "two_tailed"))
            tests.append(res.to_dict())
    return {
        "summaries": summaries,
        "tests": tests,
        "adoption_test": adoption_test(dataset, tails.get("adoption", "greater")).to_dict(),
        "quartiles": _quartile_report(dataset),
    }


def _quartile_report(dataset) -> dict:
    table = adoption_by_quartile(dataset)
    return {
        "cutpoints": list(table.cutpoints),
        "cells": [
            {"quartile": c.quartile, "arm": c.arm.name, "rate": c.rate, "numerator": c.numerator, "denominator": c.denominator}
            for c in table.cells
        ],
    }


def strata_report(inp: StrataInput, gammas, sharp=False) -> dict:
    props = stratum_proportions(inp)
    base = baseline_outcomes(inp, props)
    sweep = sweep_from_parts(inp, props, base, gammas, sharp)
    support = []
    for b in (sweep.support.adoption, sweep.support.effectiveness):
        if b is None:
            continue
        support.append(
            {"effect": b.effect, "lower": b.lower, "upper": b.upper, "width": b.width,
             "lower_clamped": b.lower_clamped, "upper_clamped": b.upper_clamped}
        )
    return {
        "inputs": inp.to_dict(),
        "proportions": props.to_dict(),
        "baselines": base.to_dict(),
        "support_bounds": support,
        "sweep": sweep.to_records(include_support=False),
        "crossover_gamma": sweep.crossover_gamma,
    }


def bootstrap_report(dataset, gammas, config: BootstrapConfig) -> list[dict]:
    return [ci.to_dict() for ci in bootstrap_bounds(dataset, gammas, config)]


# ---------------------------------------------------------------------------
# Text renderers


def _render_manifest(manifest: dict) -> str:
    return "# manifest: " + json.dumps(manifest, sort_keys=True)


def render_describe(report: dict) -> str:
    parts = [
        format_table(
            "Arm summaries",
            ["metric", "arm", "n", "mean", "sd"],
            [[r["metric"], r["arm"], r["n"], r["mean"], r["sd"]] for r in report["summaries"]],
        ),
        format_table(
            "Welch t-tests (effect = mean(b) - mean(a))",
            ["metric", "a", "b", "effect", "t", "df", "tail", "p"],
            [[t["metric"], t["arms"][0], t["arms"][1], t["effect"], t["statistic"], t["df"], t["alternative"], t["p_value"]]
             for t in report["tests"]],
        ),
    ]
    z = report["adoption_test"]
    parts.append(
        format_table(
            "Adoption z-test (AITrained vs AIOnly)",
            ["effect", "z", "tail", "p"],
            [[z["effect"], z["statistic"], z["alternative"], z["p_value"]]],
        )
    )
    q = report["quartiles"]
    parts.append(
        format_table(
            "Adoption by grade-point quartile (cut points " + ", ".join(f"{c:.2f}" for c in q["cutpoints"]) + ")",
            ["quartile", "arm", "rate", "users", "total"],
            [[c["quartile"], c["arm"], c["rate"], c["numerator"], c["denominator"]] for c in q["cells"]],
        )
    )
    return "\n\n".join(parts)


def render_strata(report: dict) -> str:
    p = report["proportions"]
    b = report["baselines"]
    parts = [
        format_table(
            "Stratum proportions and baselines",
            ["quantity", "value"],
            [["pi_A (always)", p["pi_A"]], ["pi_N (never)", p["pi_N"]], ["pi_C (induced)", p["pi_C"]],
             ["E[Y(0,0)|N]", b["e_y00_never"]], ["E[Y(0,1)|A]", b["e_y01_always"]], ["E[Y(0,0)|C]", b["e_y00_induced"]]],
        ),
        format_table(
            "Bounds under support restriction only",
            ["effect", "lower", "upper", "width", "lower clamped", "upper clamped"],
            [[r["effect"], r["lower"], r["upper"], r["width"], r["lower_clamped"], r["upper_clamped"]]
             for r in report["support_bounds"]],
        ),
        format_table(
            "Bounds under mean dominance",
            ["gamma", "L_eff", "U_eff", "L_adopt", "U_adopt"],
            [[r["gamma"], r["L_eff"], r["U_eff"], r["L_adopt"], r["U_adopt"]] for r in report["sweep"]],
        ),
        f"crossover gamma: {_cell(report['crossover_gamma'])}",
    ]
    if "bootstrap" in report:
        parts.append(render_bootstrap(report["bootstrap"]))
    return "\n\n".join(parts)


def render_bootstrap(rows: list[dict]) -> str:
    table = []
    for r in rows:
        table.append([r["gamma"], r["effect"], "lower", r["point_lower"], _bracket(r["lower_bound_ci"])])
        table.append([r["gamma"], r["effect"], "upper", r["point_upper"], _bracket(r["upper_bound_ci"])])
        table.append([r["gamma"], r["effect"], "set", None, _bracket((r["lower_ci"], r["upper_ci"]))])
    return format_table("Percentile bootstrap intervals", ["gamma", "effect", "bound", "estimate", "CI"], table)


def render_simulate(report: dict) -> str:
    keys = [
        "trials", "n_per_arm", "valid", "coverage_tau_adoption", "coverage_tau_effectiveness",
        "bias_pi_A", "bias_pi_N", "bias_pi_C", "ci_coverage_adoption", "ci_coverage_effectiveness",
    ]
    t = report["truth"]
    rows = [[k, report[k]] for k in keys]
    rows += [[f"truth {k}", t[k]] for k in ("pi_A", "pi_N", "pi_C", "tau_adoption", "tau_effectiveness")]
    return format_table("Simulation study", ["quantity", "value"], rows)


# ---------------------------------------------------------------------------
# Argument parsing


def _global_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--input", help="trial CSV file")
    parent.add_argument("--json", action="store_true", help="emit structured JSON instead of tables")
    parent.add_argument("--seed", type=int, default=None)
    parent.add_argument("--gamma", type=float, action="append", help="mean-dominance relaxation (repeatable)")
    parent.add_argument("--replications", type=int, default=2000)
    parent.add_argument("--level", type=float, default=0.95)
    parent.add_argument("--y-min", type=float, default=None)
    parent.add_argument("--y-max", type=float, default=None)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adoptbounds", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    parent = _global_flags()

    p = sub.add_parser("describe", parents=[parent], help="arm summaries and two-sample tests")
    p.add_argument("--metric", action="append", help=f"metric to test (default: {', '.join(DEFAULT_METRICS)})")
    p.add_argument("--tail", action="append", metavar="METRIC=TAIL",
                   help="two_tailed, greater or less for a metric, or adoption=TAIL")

    for name in ("strata", "sweep-gamma"):
        p = sub.add_parser(name, parents=[parent], help="stratum proportions, bounds and gamma sweep")
        for flag, kind in SUMMARY_FLAGS:
            p.add_argument("--" + flag.replace("_", "-"), type=kind, default=None)
        p.add_argument("--sharp", action="store_true", help="impose the mixture constraint on every endpoint")
        p.add_argument("--bootstrap", action="store_true", help="add percentile bootstrap intervals (needs --input)")

    p = sub.add_parser("bootstrap", parents=[parent], help="percentile bootstrap intervals for the bounds")
    p.add_argument("--sharp", action="store_true")

    p = sub.add_parser("simulate", parents=[parent], help="simulate trials from the adoption model")
    p.add_argument("--config", help="JSON theory config (defaults if omitted)")
    p.add_argument("--n-per-arm", type=int, default=120)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--noise-sd", type=float, default=0.3)
    p.add_argument("--theta-dist", default="uniform", help="uniform or beta:A,B")
    p.add_argument("--bootstrap", action="store_true", help="also check bootstrap coverage of the identified set")
    p.add_argument("--emit-dir", help="write the first trial as CSV plus truth JSON into this directory")
    return parser


def _scale(args) -> GradeScale:
    if args.y_min is None and args.y_max is None:
        return GRADE_SCALE
    y_min = GRADE_SCALE.y_min if args.y_min is None else args.y_min
    y_max = GRADE_SCALE.y_max if args.y_max is None else args.y_max
    pairs = tuple((l, p) for l, p in GRADE_SCALE.pairs if y_min - 1e-9 <= p <= y_max + 1e-9)
    if not pairs or abs(pairs[0][1] - y_min) > 1e-9 or abs(pairs[-1][1] - y_max) > 1e-9:
        raise DataValidationError("--y-min/--y-max must be grade points for dataset input")
    return GradeScale(pairs)


def _load(args):
    if not args.input:
        raise DataValidationError("--input is required")
    return load_dataset(args.input, _scale(args))


def _summary_input(args) -> StrataInput:
    values = {flag: getattr(args, flag) for flag, _ in SUMMARY_FLAGS}
    missing = []
    for flag, value in values.items():
        if value is None and not flag.startswith("mean"):
            missing.append(flag)
    if missing:
        raise DataValidationError("incomplete summary statistics; missing " + ", ".join("--" + m.replace("_", "-") for m in missing))
    sizes = {
        "mean_z0_d0": values["n_z0"] - values["n_z0_d1"],
        "mean_z0_d1": values["n_z0_d1"],
        "mean_z1_d0": values["n_z1"] - values["n_z1_d1"],
        "mean_z1_d1": values["n_z1_d1"],
    }
    missing = [m for m, size in sizes.items() if size > 0 and values[m] is None]
    if missing:
        raise DataValidationError("incomplete summary statistics; missing " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return StrataInput(
        values["n_z0"], values["n_z0_d1"], values["n_z1"], values["n_z1_d1"],
        values["mean_z0_d0"], values["mean_z0_d1"], values["mean_z1_d0"], values["mean_z1_d1"],
        y_min=GRADE_SCALE.y_min if args.y_min is None else args.y_min,
        y_max=GRADE_SCALE.y_max if args.y_max is None else args.y_max,
    )


def _bootstrap_config(args, sharp=False) -> BootstrapConfig:
    try:
        return BootstrapConfig(args.replications, args.level, args.seed or 0, sharp=sharp)
    except ValueError as exc:
        raise DataValidationError(str(exc)) from None


def _manifest(args) -> dict:
    options = {k: v for k, v in sorted(vars(args).items()) if k not in ("subcommand", "input", "seed", "json")}
    return asdict(RunManifest(args.subcommand, args.input, args.seed, _jsonable(options)))


def run(args) -> tuple[dict, str]:
    """Execute a parsed command; returns (json report, text report)."""
    manifest = _manifest(args)
    gammas = args.gamma if args.gamma else list(DEFAULT_GAMMAS)
    cmd = args.subcommand
    if cmd == "describe":
        metrics = [canonical_metric(m) for m in (args.metric or DEFAULT_METRICS)]
        report = describe_report(_load(args), metrics, _parse_tails(args.tail))
        text = render_describe(report)
    elif cmd in ("strata", "sweep-gamma"):
        has_summary = any(getattr(args, f) is not None for f, _ in SUMMARY_FLAGS)
        if args.input and has_summary:
            raise DataValidationError("give either --input or summary statistics, not both")
        if args.input:
            dataset = _load(args)
            inp = strata_input_from_dataset(dataset)
        else:
            dataset = None
            inp = _summary_input(args)
        report = strata_report(inp, gammas, args.sharp)
        if args.bootstrap:
            if dataset is None:
                raise DataValidationError("--bootstrap needs unit-level data (--input)")
            report["bootstrap"] = bootstrap_report(dataset, gammas, _bootstrap_config(args, args.sharp))
        text = render_strata(report)
    elif cmd == "bootstrap":
        report = {"bootstrap": bootstrap_report(_load(args), gammas, _bootstrap_config(args, args.sharp))}
        text = render_bootstrap(report["bootstrap"])
    elif cmd == "simulate":
        config = TheoryConfig.load(args.config) if args.config else TheoryConfig()
        dist = ThetaDistribution.parse(args.theta_dist)
        boot = _bootstrap_config(args) if args.bootstrap else None
        if args.trials < 1 or args.n_per_arm < 2:
            raise DataValidationError("--trials must be >= 1 and --n-per-arm >= 2")
        sim = run_simulation(args.trials, args.n_per_arm, args.seed or 0, config, dist, args.noise_sd, boot)
        report = sim.summary()
        if args.emit_dir:
            out = Path(args.emit_dir)
            out.mkdir(parents=True, exist_ok=True)
            first = sim.outcomes[0]
            dataset, truth = generate_trial(args.n_per_arm, dist, args.noise_sd, config, first.seed)
            write_trial(dataset, truth, out / f"trial-{first.seed}")
        text = render_simulate(report)
    else:  # pragma: no cover - argparse rejects unknown subcommands
        raise DataValidationError(f"unknown subcommand {cmd}")
    report = _jsonable({"manifest": manifest, **report})
    return report, _render_manifest(report["manifest"]) + "\n\n" + text


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report, text = run(args)
    except AssumptionViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("hint: the identifying assumptions (no defiers, exclusion for never users, "
              "bounded support) are inconsistent with these data", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (DataValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.json:
        sys.stdout.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text + "\n")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
