"""Command-line entry point: run, validate, generate, diff and review."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .config import EngineConfig, load_config
from .dsl import ScriptSyntaxError, TestScript, has_errors, parse, serialize, validate
from .engine import (
    EXIT_FAILED,
    EXIT_OK,
    EXIT_USAGE,
    ReportError,
    ValidationBlocked,
    execute_suite,
    exit_code,
    load_report,
    render_report,
)
from .maintainer import PatchError, diff_models, propose_patches
from .model import ModelError, load_model
from .recovery import KnowledgeBase, KnowledgeBaseError, dump_kb, load_kb
from .repo import RepositoryError, dump_repository, load_repository
from .review import ReviewError, review
from .testgen import BUILTIN_HEURISTICS, GenerationResult, crawl_generate, load_heuristics, load_log, mine_logs

SKIPPED_SUFFIXES = (".json", ".md")


class UsageError(Exception):
    pass


def suite_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise UsageError(f"{directory}: not a directory")
    return sorted(
        p
        for p in directory.iterdir()
        if p.is_file() and not p.name.startswith(".") and p.suffix not in SKIPPED_SUFFIXES
    )


def load_suite(directory: Path, lenient: bool = False) -> list[tuple[Path, TestScript]]:
    out = []
    for path in suite_files(directory):
        try:
            out.append((path, parse(path.read_text(encoding="utf-8"), lenient=lenient)))
        except ScriptSyntaxError as exc:
            raise UsageError(f"{path}: {exc}") from exc
    return out


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from exc


def _load_kb(path: str | None) -> KnowledgeBase:
    if path is None or not Path(path).exists():
        return KnowledgeBase()
    return load_kb(_read(path))


def _write_generated(result: GenerationResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for i, script in enumerate(result.scripts, start=1):
        (out / f"{i:03d}_{script.id}.test").write_text(serialize(script), encoding="utf-8")
    if result.repository is not None:
        (out / "repository.json").write_text(dump_repository(result.repository), encoding="utf-8")
    (out / "metadata.json").write_text(
        json.dumps(result.metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(_read(args.config)) if args.config else EngineConfig()
    config.adaptive = args.adaptive == "on"
    config.legacy_mode = args.legacy_mode
    suite = [s for _, s in load_suite(Path(args.suite))]
    try:
        report = execute_suite(
            suite,
            load_model(_read(args.model)),
            load_repository(_read(args.repo)),
            config,
            _load_kb(args.kb),
            args.seed,
            suite_id=Path(args.suite).name,
            force=args.force,
            fixed_clock=args.fixed_clock,
        )
    except ValidationBlocked as exc:
        for script_id, issues in sorted(exc.issues.items()):
            for issue in issues:
                print(f"{script_id}: {issue}", file=sys.stderr)
        print(str(exc), file=sys.stderr)
        return EXIT_FAILED
    text = render_report(report, args.format)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return exit_code(report)


def cmd_validate(args: argparse.Namespace) -> int:
    repo = load_repository(_read(args.repo))
    model = load_model(_read(args.model)) if args.model else None
    failed = False
    for path, script in load_suite(Path(args.suite), lenient=True):
        issues = validate(script, repo, model)
        for issue in issues:
            print(f"{path.name}:{issue.span[0]}: {issue.severity} {issue.kind} (step {issue.step}): {issue.message}")
        failed = failed or has_errors(issues)
    return EXIT_FAILED if failed else EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    if args.source == "crawl":
        # user patterns are tried before the builtin ones
        extra = load_heuristics(_read(args.heuristics)) if args.heuristics else ()
        result = crawl_generate(load_model(_read(args.model)), heuristics=extra + BUILTIN_HEURISTICS)
    else:
        result = mine_logs(load_log(_read(args.log)))
        for warning in result.metadata.get("warnings", []):
            print(f"warning: {warning}", file=sys.stderr)
    _write_generated(result, Path(args.out))
    print(f"{len(result.scripts)} scripts written to {args.out}")
    return EXIT_OK


def cmd_diff(args: argparse.Namespace) -> int:
    old, new = load_model(_read(args.old)), load_model(_read(args.new))
    diff = diff_models(old, new)
    document = {"diff": diff.to_dict()}
    if args.propose:
        if not (args.suite and args.repo):
            raise UsageError("--propose needs --suite and --repo")
        scripts = [s for _, s in load_suite(Path(args.suite))]
        patches = propose_patches(diff, scripts, load_repository(_read(args.repo)), old, new)
        document["patches"] = [p.to_dict() for p in patches]
    sys.stdout.write(json.dumps(document, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_review(args: argparse.Namespace) -> int:
    report = load_report(_read(args.report))
    kb = _load_kb(args.kb)
    decisions = [(k, "accept") for k in args.accept] + [(k, "reject") for k in args.reject]
    repo = load_repository(_read(args.repo)) if args.repo else None
    suite = load_suite(Path(args.suite)) if args.suite else []
    model = load_model(_read(args.model)) if args.model else None
    outcome = review(report, decisions, kb, repo, [s for _, s in suite], model, apply=args.apply_patches)
    Path(args.kb).write_text(dump_kb(outcome.kb), encoding="utf-8")
    for p in outcome.proposals:
        print(f"proposed {p.key}: {p.rationale}")
    if outcome.patches is not None:
        paths = {s.id: path for path, s in suite}
        Path(args.repo).write_text(dump_repository(outcome.patches.repo), encoding="utf-8")
        for script in outcome.patches.scripts:
            path = paths.get(script.id) or Path(args.suite) / f"{script.id}.test"
            path.write_text(serialize(script), encoding="utf-8")
        for p in outcome.patches.patches:
            print(f"{p.status} {p.key}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptest", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a suite against a model")
    run.add_argument("suite")
    run.add_argument("--model", required=True)
    run.add_argument("--repo", required=True)
    run.add_argument("--kb")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--adaptive", choices=("on", "off"), default="on")
    run.add_argument("--legacy-mode", choices=("abort", "continue"), default="abort")
    run.add_argument("--force", action="store_true")
    run.add_argument("--fixed-clock", action="store_true")
    run.add_argument("--report")
    run.add_argument("--format", choices=("json", "text"), default="json")
    run.add_argument("--config")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="statically check scripts")
    val.add_argument("suite")
    val.add_argument("--repo", required=True)
    val.add_argument("--model")
    val.set_defaults(func=cmd_validate)

    gen = sub.add_parser("generate", help="generate scripts")
    gen_sub = gen.add_subparsers(dest="source", required=True)
    crawl = gen_sub.add_parser("crawl")
    crawl.add_argument("--model", required=True)
    crawl.add_argument("--heuristics")
    crawl.add_argument("--out", required=True)
    mine = gen_sub.add_parser("mine")
    mine.add_argument("--log", required=True)
    mine.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)

    diff = sub.add_parser("diff", help="compare two model versions")
    diff.add_argument("--old", required=True)
    diff.add_argument("--new", required=True)
    diff.add_argument("--propose", action="store_true")
    diff.add_argument("--suite")
    diff.add_argument("--repo")
    diff.set_defaults(func=cmd_diff)

    rev = sub.add_parser("review", help="accept or reject pending recoveries")
    rev.add_argument("--report", required=True)
    rev.add_argument("--kb", required=True)
    rev.add_argument("--accept", nargs="+", default=[])
    rev.add_argument("--reject", nargs="+", default=[])
    rev.add_argument("--apply-patches", action="store_true")
    rev.add_argument("--repo")
    rev.add_argument("--suite")
    rev.add_argument("--model")
    rev.set_defaults(func=cmd_review)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        UsageError,
        ModelError,
        RepositoryError,
        KnowledgeBaseError,
        ReportError,
        ReviewError,
        PatchError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
