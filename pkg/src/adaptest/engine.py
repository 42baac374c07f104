"""Suite execution against the simulator, with recovery and run reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Mapping, Sequence

from .config import EngineConfig
from .dsl import Step, TestScript, has_errors, validate
from .model import (
    BLOCKED_BY_POPUP,
    GUARD_UNSATISFIED,
    LOAD_FAILURE,
    NO_SUCH_OBJECT,
    OK,
    AppModel,
    SimSession,
    start_session,
)
from .recovery import (
    OBJECT_NOT_FOUND,
    PENDING,
    RESUMED,
    KnowledgeBase,
    PopupDefinition,
    RecoveryContext,
    RecoveryEvent,
    StepRun,
    attempt_recovery,
)
from .repo import AmbiguousObjectError, Repository, resolve_exact

FIXED_CLOCK = "1970-01-01T00:00:00+00:00"
EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_PENDING = 0, 1, 2, 3

PASSED, RECOVERED, FAILED, SKIPPED = "passed", "recovered", "failed", "skipped"


class ValidationBlocked(RuntimeError):
    def __init__(self, issues: Mapping[str, list[Any]]) -> None:
        self.issues = dict(issues)
        names = ", ".join(sorted(self.issues))
        super().__init__(f"validation errors in: {names} (use force to run anyway)")


class ReportError(ValueError):
    pass


@dataclass
class StepResult:
    index: int
    status: str
    events: list[RecoveryEvent] = field(default_factory=list)
    duration_ticks: int = 0
    message: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "status": self.status,
            "events": [e.to_dict() for e in self.events],
            "duration_ticks": self.duration_ticks,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "StepResult":
        return cls(
            data["index"],
            data["status"],
            [RecoveryEvent.from_dict(e) for e in data.get("events", [])],
            data.get("duration_ticks", 0),
            data.get("message", ""),
        )


@dataclass
class ScriptResult:
    script_id: str
    status: str
    steps: list[StepResult]
    seed: int
    learned_popups: list[PopupDefinition] = field(default_factory=list)

    @property
    def events(self) -> list[RecoveryEvent]:
        return [e for s in self.steps for e in s.events]

    def to_dict(self) -> dict[str, Any]:
        return {
            "script_id": self.script_id,
            "status": self.status,
            "seed": self.seed,
            "steps": [s.to_dict() for s in self.steps],
        }


def _tally(scripts: Sequence[ScriptResult]) -> dict[str, dict[str, int]]:
    summary = {
        "scripts": {PASSED: 0, RECOVERED: 0, FAILED: 0},
        "steps": {PASSED: 0, RECOVERED: 0, FAILED: 0, SKIPPED: 0},
    }
    for s in scripts:
        summary["scripts"][s.status] += 1
        for step in s.steps:
            summary["steps"][step.status] += 1
    return summary


@dataclass
class RunReport:
    suite_id: str
    config: dict[str, Any]
    model_version: str
    seed: int
    scripts: list[ScriptResult]
    summary: dict[str, dict[str, int]]
    pending_decisions: list[str]
    learned_popups: list[PopupDefinition] = field(default_factory=list)
    generated_at: str = FIXED_CLOCK

    @property
    def events(self) -> list[RecoveryEvent]:
        return [e for s in self.scripts for e in s.events]

    def check(self) -> None:
        if self.summary != _tally(self.scripts):
            raise ReportError("summary counts disagree with step results")

    def to_dict(self) -> dict[str, Any]:
        return {
            "suite_id": self.suite_id,
            "config": self.config,
            "model_version": self.model_version,
            "seed": self.seed,
            "scripts": [s.to_dict() for s in self.scripts],
            "summary": self.summary,
            "pending_decisions": list(self.pending_decisions),
            "learned_popups": [d.to_dict() for d in self.learned_popups],
            "generated_at": self.generated_at,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunReport":
        return cls(
            suite_id=data["suite_id"],
            config=data["config"],
            model_version=data["model_version"],
            seed=data["seed"],
            scripts=[
                ScriptResult(s["script_id"], s["status"], [StepResult.from_dict(x) for x in s["steps"]], s["seed"])
                for s in data["scripts"]
            ],
            summary=data["summary"],
            pending_decisions=list(data["pending_decisions"]),
            learned_popups=[PopupDefinition(**d) for d in data.get("learned_popups", [])],
            generated_at=data.get("generated_at", FIXED_CLOCK),
        )


def load_report(document: str) -> RunReport:
    try:
        report = RunReport.from_dict(json.loads(document))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ReportError(f"malformed report: {exc}") from exc
    report.check()
    return report


# ---------------------------------------------------------------- step execution


def run_step(session: SimSession, step: Step, repo: Repository, override: str | None = None) -> StepRun:
    """Attempt one step once. ``override`` binds the step to a specific object id."""
    verb = step.verb
    arg = step.args[0] if step.args else None
    if verb == "wait":
        return StepRun(True)
    if verb == "open":
        out = session.perform("open", value=arg)
        return _from_outcome(out.status, out.unmet, out.message, navigated=True)
    view = session.observe()
    if view.popup is not None:
        return StepRun(False, BLOCKED_BY_POPUP)
    if view.loading:
        return StepRun(False, LOAD_FAILURE)
    if verb == "assert_screen":
        if view.screen_id == arg:
            return StepRun(True)
        return StepRun(False, message=f"expected screen {arg!r}, on {view.screen_id!r}")
    descriptor = repo.get(step.object_ref or "")
    if descriptor is None:
        return StepRun(False, message=f"{step.object_ref!r} is not in the object repository")
    if override is not None:
        obj = view.find(override)
    else:
        try:
            obj = resolve_exact(view, descriptor)
        except AmbiguousObjectError as exc:
            return StepRun(False, message=str(exc))
    if obj is None:
        return StepRun(False, OBJECT_NOT_FOUND, message=f"{step.object_ref!r} not found on {view.screen_id!r}")
    if verb == "assert_exists":
        return StepRun(True)
    if verb == "assert_text":
        if arg in (obj.text, obj.value):
            return StepRun(True)
        return StepRun(False, message=f"{step.object_ref!r} text is {obj.text!r}, expected {arg!r}")
    before = session.current_screen
    out = session.perform(verb, obj.id, arg)
    return _from_outcome(out.status, out.unmet, out.message, navigated=session.current_screen != before)


def _from_outcome(status: str, unmet: tuple[str, ...], message: str, navigated: bool) -> StepRun:
    if status != OK and not message:
        message = f"{status} ({', '.join(unmet)})" if unmet else status
    if status == OK:
        return StepRun(True, message=message)
    if status == NO_SUCH_OBJECT:
        return StepRun(False, OBJECT_NOT_FOUND, message=message)
    if status in (BLOCKED_BY_POPUP, GUARD_UNSATISFIED, LOAD_FAILURE):
        return StepRun(False, status, unmet=unmet, navigated=navigated and status == LOAD_FAILURE, message=message)
    return StepRun(False, message=message)


def execute_script(
    script: TestScript,
    model: AppModel,
    repo: Repository,
    config: EngineConfig | None = None,
    kb: KnowledgeBase | None = None,
    seed: int = 0,
) -> ScriptResult:
    config = config or EngineConfig()
    kb = kb or KnowledgeBase()
    session = start_session(model, seed)
    learned: list[PopupDefinition] = []
    results: list[StepResult] = []
    halted = False
    for step in script.steps:
        if halted:
            results.append(StepResult(step.index, SKIPPED))
            continue
        start_ticks = session.action_counter
        run = run_step(session, step, repo)
        events: list[RecoveryEvent] = []
        override = None
        passes = 0
        while config.adaptive and not run.ok and run.trigger is not None and passes < config.max_passes:
            passes += 1
            ctx = RecoveryContext(
                session=session,
                script=script,
                step=step,
                trigger=run.trigger,
                repo=repo,
                config=config,
                kb=kb,
                retry=lambda obj_id, s=step: run_step(session, s, repo, obj_id),
                last=run,
                override=override,
                learned=learned,
            )
            result = attempt_recovery(ctx)
            events.extend(result.events)
            if not result.resume or result.run is None:
                break
            override = result.override
            run = result.run
        ticks = session.action_counter - start_ticks
        if step.verb == "wait" and step.args:
            ticks += int(step.args[0])
        if run.ok:
            status = RECOVERED if any(e.outcome == RESUMED for e in events) else PASSED
        else:
            status = FAILED
            halted = config.legacy_mode == "abort"
        results.append(StepResult(step.index, status, events, ticks, "" if run.ok else run.message))
    statuses = {r.status for r in results}
    overall = FAILED if FAILED in statuses else RECOVERED if RECOVERED in statuses else PASSED
    return ScriptResult(script.id, overall, results, seed, learned)


def execute_suite(
    scripts: Sequence[TestScript],
    model: AppModel,
    repo: Repository,
    config: EngineConfig | None = None,
    kb: KnowledgeBase | None = None,
    seed: int = 0,
    *,
    suite_id: str = "suite",
    force: bool = False,
    fixed_clock: bool = False,
) -> RunReport:
    """Run each script in a fresh session seeded with ``seed + ordinal``."""
    config = config or EngineConfig()
    kb = kb or KnowledgeBase()
    if not force:
        blocked = {}
        for s in scripts:
            issues = validate(s, repo, model)
            if has_errors(issues):
                blocked[s.id] = [i for i in issues if i.severity == "error"]
        if blocked:
            raise ValidationBlocked(blocked)
    results = [execute_script(s, model, repo, config, kb, seed + i) for i, s in enumerate(scripts)]
    pending: list[str] = []
    learned: dict[str, PopupDefinition] = {}
    for r in results:
        for e in r.events:
            if e.outcome == RESUMED and e.decision == PENDING and e.key not in pending:
                pending.append(e.key)
        for d in r.learned_popups:
            learned.setdefault(d.id, d)
    return RunReport(
        suite_id=suite_id,
        config=config.to_dict(),
        model_version=model.version,
        seed=seed,
        scripts=results,
        summary=_tally(results),
        pending_decisions=pending,
        learned_popups=list(learned.values()),
        generated_at=FIXED_CLOCK if fixed_clock else datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


def exit_code(report: RunReport) -> int:
    if report.summary["scripts"][FAILED]:
        return EXIT_FAILED
    if report.pending_decisions:
        return EXIT_PENDING
    return EXIT_OK


# ---------------------------------------------------------------- rendering


def render_report(report: RunReport, fmt: str = "json") -> str:
    report.check()
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    lines = [
        f"suite {report.suite_id}  model {report.model_version}  seed {report.seed}  at {report.generated_at}",
        "",
        f"{'script':<32} {'status':<10} {'steps':>5} {'pass':>5} {'recov':>5} {'fail':>5} {'skip':>5}",
    ]
    for s in report.scripts:
        counts = {k: sum(1 for x in s.steps if x.status == k) for k in (PASSED, RECOVERED, FAILED, SKIPPED)}
        lines.append(
            f"{s.script_id:<32} {s.status:<10} {len(s.steps):>5} {counts[PASSED]:>5} "
            f"{counts[RECOVERED]:>5} {counts[FAILED]:>5} {counts[SKIPPED]:>5}"
        )
    failures = [(s.script_id, x) for s in report.scripts for x in s.steps if x.status == FAILED]
    if failures:
        lines += ["", "failed steps:"]
        lines += [f"  {sid} step {x.index}: {x.message}" for sid, x in failures]
    events = report.events
    if events:
        lines += ["", "recovery events:"]
        for e in events:
            detail = json.dumps(e.detail, sort_keys=True, ensure_ascii=False)
            lines.append(
                f"  {e.script_id} step {e.step}: {e.trigger} -> {e.strategy} [{e.outcome}, {e.decision}] "
                f"key={e.key} detail={detail}"
            )
    sc, st = report.summary["scripts"], report.summary["steps"]
    lines += [
        "",
        f"scripts: {sc[PASSED]} passed, {sc[RECOVERED]} recovered, {sc[FAILED]} failed",
        f"steps: {st[PASSED]} passed, {st[RECOVERED]} recovered, {st[FAILED]} failed, {st[SKIPPED]} skipped",
        f"pending decisions: {len(report.pending_decisions)}",
    ]
    lines += [f"  {k}" for k in report.pending_decisions]
    return "\n".join(lines) + "\n"
