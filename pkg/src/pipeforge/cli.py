"""Command-line entry points: run, split, bench, report, show-config."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import canonical
from .bench import format_table, run_bench
from .config import resolve_config
from .errors import EngineError, UsageError
from .runner import run_task
from .split import split_dataset


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (lowest-precedence overrides)")
    parser.add_argument("--provider", choices=["scripted", "http"])
    parser.add_argument("--fixtures", dest="fixtures_dir", help="scripted-provider fixture dir")
    parser.add_argument("--endpoint", help="chat-completions endpoint URL")
    parser.add_argument("--model", help="backbone model name")
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--debug-budget", dest="debug_budget", type=int, metavar="K")
    parser.add_argument(
        "--tracks",
        help="comma-separated subset of traditional,pretrained,custom_neural",
    )
    parser.add_argument(
        "--aggregate", choices=["best", "voting", "averaging", "stacking"]
    )
    parser.add_argument("--strip-description", dest="strip_description",
                        action="store_const", const=True)
    parser.add_argument("--time-budget", dest="time_budget", type=float, metavar="S")
    parser.add_argument("--stage-timeout", dest="stage_timeout", type=float, metavar="S")
    parser.add_argument("--sample-limit", dest="sample_limit", type=int)
    parser.add_argument("--interpreter", help="sandbox interpreter command")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--catalog", help="model-candidate catalog JSON")
    parser.add_argument("--validate-urls", dest="validate_urls",
                        action="store_const", const=True)
    parser.add_argument("--parallel-tracks", dest="parallel_tracks",
                        action="store_const", const=True)
    parser.add_argument("--shim", dest="shim_command",
                        help="runner-shim command for execution-side reports")


_CONFIG_KEYS = (
    "provider", "fixtures_dir", "endpoint", "model", "temperature", "debug_budget",
    "tracks", "aggregate", "strip_description", "time_budget", "stage_timeout",
    "sample_limit", "interpreter", "seed", "catalog", "validate_urls",
    "parallel_tracks", "shim_command",
)


def _config_from_args(args: argparse.Namespace):
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    return resolve_config(overrides, config_file=getattr(args, "config", None))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pipeforge",
        description="Turn a task description plus raw data into a verified, "
        "executable ML pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="solve one task end to end")
    p_run.add_argument("task_dir", type=Path)
    p_run.add_argument("--out", type=Path, required=True, help="run directory")
    _add_run_flags(p_run)

    p_split = sub.add_parser("split", help="stratified train/test split with sealed truth")
    p_split.add_argument("dataset", type=Path, help="csv file or directory holding one")
    p_split.add_argument("--out", type=Path, required=True)
    p_split.add_argument("--ratio", type=float, default=0.8)
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--target", help="target column (inferred when omitted)")

    p_bench = sub.add_parser("bench", help="run and grade a batch of split tasks")
    p_bench.add_argument("task_dirs", nargs="+", type=Path)
    p_bench.add_argument("--out", type=Path, required=True)
    p_bench.add_argument("--thresholds", type=Path,
                         help="optional leaderboard thresholds JSON")
    _add_run_flags(p_bench)

    p_report = sub.add_parser("report", help="recompute report.json from a run directory")
    p_report.add_argument("run_dir", type=Path)

    p_show = sub.add_parser("show-config", help="print the resolved configuration")
    _add_run_flags(p_show)

    return parser


def cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    outcome = run_task(args.task_dir, args.out, config)
    print(canonical.dumps({"run_dir": str(outcome.run_dir), "valid": outcome.valid,
                           "selected": outcome.report.get("selected"),
                           "failure": outcome.report.get("failure")}), end="")
    return 0 if outcome.valid else 1


def cmd_split(args: argparse.Namespace) -> int:
    result = split_dataset(
        args.dataset, args.out, ratio=args.ratio, seed=args.seed, target=args.target
    )
    payload = {
        "out_dir": str(result.out_dir),
        "train_rows": result.train_rows,
        "test_rows": result.test_rows,
        "stratified": result.stratified,
    }
    if result.warning:
        payload["warning"] = result.warning
        print(f"warning: {result.warning}", file=sys.stderr)
    print(canonical.dumps(payload), end="")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    report = run_bench(args.task_dirs, args.out, config, thresholds_path=args.thresholds)
    print(format_table(report))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    """Recompute the report from on-disk state; flag drift from the stored one."""
    from .runner import rebuild_report

    run_dir = Path(args.run_dir)
    if not (run_dir / "run_meta.json").exists():
        raise UsageError(f"{run_dir} is not a run directory (no run_meta.json)")
    text = canonical.dumps(rebuild_report(run_dir))
    print(text, end="")
    stored = run_dir / "report.json"
    if stored.exists() and stored.read_text(encoding="utf-8") != text:
        print("warning: recomputed report differs from stored report.json", file=sys.stderr)
        return 1
    return 0


def cmd_show_config(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    print(canonical.dumps(config.to_dict()), end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": cmd_run,
        "split": cmd_split,
        "bench": cmd_bench,
        "report": cmd_report,
        "show-config": cmd_show_config,
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(canonical.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr, end="")
        return 1


if __name__ == "__main__":
    sys.exit(main())
