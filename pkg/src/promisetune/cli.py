"""Command-line entry point: ``promisetune {tune,ablate,bench,explain}``.

Exit status is 0 on success, 1 on runtime failure and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .bench import (SYNTHETIC_KINDS, CommandObjective, OfflineFormatError, OfflineTable, load_offline,
                    run_comparison, synthetic_landscape)
from .causal import CiTestConfig
from .explain import ExplainConfig, explain
from .rules import RuleSet, SchemaError
from .space import ConfigSpace, InvalidSpaceError
from .tuner import TUNERS, ObjectiveError, TunerConfig, read_trials, run, trials_csv

log = logging.getLogger("promisetune")

DEFAULT_BUDGETS = "50,100,150,200"


class UsageError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("PROMISETUNE_SEED", "").strip()
    if not raw:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"PROMISETUNE_SEED must be an integer, got {raw!r}") from None


def _budgets(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"budgets must be comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("budgets must be positive")
    return vals


def _add_source(p: argparse.ArgumentParser, multiple: bool = False) -> None:
    action = "append" if multiple else "store"
    g = p.add_argument_group("objective")
    src = g if multiple else g.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset", action=action, metavar="CSV", help="offline measurement table")
    src.add_argument("--command", action=action, metavar="TEMPLATE",
                     help="command with {option} placeholders, run once per configuration")
    src.add_argument("--synthetic", action=action, choices=SYNTHETIC_KINDS, help="synthetic landscape")
    g.add_argument("--space", metavar="JSON", help="space definition (required with --command)")
    g.add_argument("--regex", default=r"(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)",
                   help="regex whose first group is the performance in the command output")
    g.add_argument("--timeout", type=float, default=60.0, help="seconds per command run")
    g.add_argument("--dims", type=int, default=10, help="options in a synthetic landscape")
    g.add_argument("--landscape-seed", type=int, default=0, help="seed of the synthetic landscape itself")
    g.add_argument("--allow-missing", action="store_true",
                   help="accept a non-exhaustive table; absent configurations count as failed trials")


def _add_tuner(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (default: $PROMISETUNE_SEED or 0)")
    p.add_argument("--initial", type=int, default=10, help="initial random sample size")
    p.add_argument("--l", dest="leaf", type=int, default=10, help="minimum samples per leaf of the rule forest")
    p.add_argument("--trees", type=int, default=100, help="trees per forest")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level of the independence tests")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for forest training")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promisetune", description="Rule-guided configuration tuning.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("tune", help="tune one objective")
    _add_source(t)
    _add_tuner(t)
    t.add_argument("--budget", type=int, default=100, help="total measurements B")
    t.add_argument("--k", type=float, default=10.0, help="top-k%% used for explainable rules")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--emit-causal-report", default="causal.json", metavar="NAME",
                   help="causal report file name inside --out")
    t.add_argument("--emit-report", default="explain.json", metavar="NAME",
                   help="explanation report file name inside --out")

    for name, helptext in (("ablate", "PromiseTune vs without-rules vs random search"),
                           ("bench", "compare tuners over several objectives")):
        a = sub.add_parser(name, help=helptext)
        _add_source(a, multiple=name == "bench")
        _add_tuner(a)
        a.add_argument("--budgets", type=_budgets, default=_budgets(DEFAULT_BUDGETS))
        a.add_argument("--repeats", type=int, default=30)
        a.add_argument("--out", required=True, help="output directory")
        if name == "bench":
            a.add_argument("--tuners", default=",".join(TUNERS), help="comma-separated tuner names")

    e = sub.add_parser("explain", help="re-explain a finished run at another k")
    e.add_argument("--result", required=True, help="directory written by tune")
    e.add_argument("--k", type=float, default=10.0)
    e.add_argument("--min-hits", type=int, default=1)
    e.add_argument("--out", default=None, help="output directory (default: the --result directory)")
    e.add_argument("--emit-report", default="explain.json", metavar="NAME")
    return parser


def _objective(args, dataset=None, command=None, synthetic=None):
    if synthetic is not None:
        obj = synthetic_landscape(synthetic, args.dims, args.landscape_seed)
        return obj.space, obj
    if dataset is not None:
        space, table = load_offline(dataset)
        if args.space:
            declared = ConfigSpace.load(args.space)
            if declared.names != space.names:
                raise UsageError("--space options do not match the dataset columns")
            space, table = declared, _rekey(table, declared)
        if not table.exhaustive and not args.allow_missing:
            raise RuntimeError(
                f"{dataset} covers {len(table)} of {space.size} configurations; "
                "pass --allow-missing to record absent ones as failed trials"
            )
        return space, table
    if not args.space:
        raise UsageError("--command needs --space")
    space = ConfigSpace.load(args.space)
    return space, CommandObjective(command, space, args.regex, args.timeout)


def _rekey(table: OfflineTable, space: ConfigSpace) -> OfflineTable:
    """The same measurements keyed against a declared space with matching columns."""
    rows = {}
    for config, perf in table.rows.items():
        labels = [o.format_value(v) for o, v in zip(table.space.options, config)]
        rows[tuple(o.parse_value(x) for o, x in zip(space.options, labels))] = perf
    return OfflineTable(table.name, space, rows)


def _tuner_config(args, budget: int, seed: int) -> TunerConfig:
    return TunerConfig(
        budget=budget,
        initial_size=min(args.initial, budget),
        leaf_param=args.leaf,
        tree_count=args.trees,
        ci=CiTestConfig(alpha=args.alpha),
        seed=seed,
        n_jobs=args.jobs,
    )


def _check_name(name: str) -> str:
    if not name or Path(name).name != name or name in (".", ".."):
        raise UsageError(f"{name!r} must be a plain file name inside the output directory")
    return name


def _explain_config(k: float, min_hits: int = 1) -> ExplainConfig:
    try:
        return ExplainConfig(k=k, min_hits=min_hits)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write(out: Path, name: str, text: str) -> Path:
    path = out / _check_name(name)
    path.write_text(text)
    return path


def cmd_tune(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    space, objective = _objective(args, args.dataset, args.command, args.synthetic)
    ecfg = _explain_config(args.k)
    _check_name(args.emit_report)
    _check_name(args.emit_causal_report)
    try:
        cfg = _tuner_config(args, args.budget, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    result = run(space, objective, cfg)

    best = float("inf")
    print("incumbent trajectory:")
    for i, t in enumerate(result.history, start=1):
        if t.sample.performance < best:
            best = t.sample.performance
            print(f"  measurement {i:4d}  {best:.6g}  ({t.source})")
    samples = [t.sample for t in result.history]
    report = explain(result.final_rules, samples, space, ecfg)

    _write(out, "trials.csv", trials_csv(result))
    _write(out, "result.json", json.dumps({
        "objective": getattr(objective, "name", "objective"),
        "space": space.to_json(),
        "settings": {
            "budget": cfg.budget,
            "initial_size": cfg.initial_size,
            "leaf_param": cfg.leaf_param,
            "tree_count": cfg.tree_count,
            "alpha": cfg.ci.alpha,
            "seed": cfg.seed,
            "k": ecfg.k,
        },
        "best": {
            "config": space.decode(result.best_config) if result.best_config is not None else None,
            "performance": result.best_performance,
        },
        "evaluations": result.evaluations,
        "purified_rules": result.final_rules.to_json(space),
        "purified_rules_iteration": result.final_rules_iteration,
        "notes": result.notes,
    }, indent=2))
    causal = result.causal_report.to_json(space=space) if result.causal_report else None
    _write(out, args.emit_causal_report, json.dumps(causal, indent=2))
    _write(out, args.emit_report, json.dumps(report.to_json(space), indent=2))

    print(f"best {result.best_performance:.6g} at {space.decode(result.best_config)}")
    print(report.to_text(space), end="")
    for note in result.notes:
        print(f"note: {note}")
    return 0


def _comparison(args, sources, tuners) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.repeats < 2:
        raise UsageError("--repeats must be >= 2")
    objectives = []
    for kind, value in sources:
        space, obj = _objective(args, **{kind: value})
        objectives.append(obj)
    try:
        base = _tuner_config(args, max(args.budgets), seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(name, budget, tuner, r, best):
        log.info("%s B=%d %s repeat %d: %g", name, budget, tuner, r, best)

    table = run_comparison(objectives, tuners, args.budgets, args.repeats, seed, base, progress)
    _write(out, "ranks.csv", table.to_csv())
    _write(out, "ranks.json", table.to_json())
    md = table.to_markdown()
    _write(out, "ranks.md", md)
    print(md, end="")
    return 0


def cmd_ablate(args) -> int:
    kind = next(k for k in ("dataset", "command", "synthetic") if getattr(args, k) is not None)
    return _comparison(args, [(kind, getattr(args, kind))], list(TUNERS))


def cmd_bench(args) -> int:
    sources = [(k, v) for k in ("dataset", "command", "synthetic") for v in (getattr(args, k) or [])]
    if not sources:
        raise UsageError("give at least one --dataset, --command or --synthetic")
    tuners = [t.strip() for t in args.tuners.split(",") if t.strip()]
    unknown = [t for t in tuners if t not in TUNERS]
    if unknown or not tuners:
        raise UsageError(f"unknown tuner(s) {unknown}; choose from {list(TUNERS)}")
    return _comparison(args, sources, tuners)


def cmd_explain(args) -> int:
    _check_name(args.emit_report)
    src = Path(args.result)
    result_path, trials_path = src / "result.json", src / "trials.csv"
    for p in (result_path, trials_path):
        if not p.is_file():
            raise FileNotFoundError(f"missing {p}; run `promisetune tune --out {src}` first")
    data = json.loads(result_path.read_text())
    space = ConfigSpace.from_json(data["space"])
    rules = RuleSet.from_json(data["purified_rules"], space)
    samples = [t.sample for t in read_trials(trials_path.read_text(), space)]
    report = explain(rules, samples, space, _explain_config(args.k, args.min_hits))
    out = Path(args.out) if args.out else src
    out.mkdir(parents=True, exist_ok=True)
    _write(out, args.emit_report, json.dumps(report.to_json(space), indent=2))
    print(report.to_text(space), end="")
    return 0


COMMANDS = {"tune": cmd_tune, "ablate": cmd_ablate, "bench": cmd_bench, "explain": cmd_explain}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"promisetune: error: {exc}", file=sys.stderr)
        return 2
    except (ObjectiveError, OfflineFormatError, InvalidSpaceError, SchemaError, OSError, ValueError,
            RuntimeError, KeyError, json.JSONDecodeError) as exc:
        print(f"promisetune: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
