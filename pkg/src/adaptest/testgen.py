"""Automatic test generation: model crawling and interaction-log mining."""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .dsl import Step, TestScript
from .model import INPUT_TYPES, SELECT_TYPES, AppModel, ObjectView, Screen, Transition, static_view
from .repo import ObjectDescriptor, Repository, descriptor_for

log = logging.getLogger(__name__)

MASK = "«masked»"
DEFAULT_VALUE = "test value"


@dataclass(frozen=True)
class ValueHeuristic:
    name_pattern: str
    valid_value: str
    invalid_value: str | None = None
    expect_rejection_of_invalid: bool = False

    def __post_init__(self) -> None:
        if not self.name_pattern:
            raise ValueError("name_pattern must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "name_pattern": self.name_pattern,
            "valid_value": self.valid_value,
            "invalid_value": self.invalid_value,
            "expect_rejection_of_invalid": self.expect_rejection_of_invalid,
        }


# email and age come from the field-name examples; the rest are extensions
BUILTIN_HEURISTICS: tuple[ValueHeuristic, ...] = (
    ValueHeuristic("email", "user@example.com", "not-an-email", True),
    ValueHeuristic("age", "30", "-1", True),
    ValueHeuristic("phone", "0400 000 000", "not-a-phone", True),
    ValueHeuristic("date", "2020-01-31", "2020-13-45", True),
    ValueHeuristic("zip", "3000", "ABCDE", True),
    ValueHeuristic("postcode", "3000", "ABCDE", True),
    ValueHeuristic("name", "Alex Smith"),
)


def load_heuristics(document: str) -> tuple[ValueHeuristic, ...]:
    return tuple(ValueHeuristic(**record) for record in json.loads(document))


@dataclass(frozen=True)
class HeuristicValue:
    valid: str
    invalid: str | None = None
    expect_rejection: bool = False


def heuristic_value(field_obj: Any, heuristics: Sequence[ValueHeuristic] = BUILTIN_HEURISTICS) -> HeuristicValue:
    """Value to put into an input object, chosen from its name.

    Selects take their first option and checkboxes are switched on; text
    fields use the first heuristic whose pattern occurs in the name.
    """
    if field_obj.obj_type in SELECT_TYPES:
        return HeuristicValue(field_obj.options[0])
    if field_obj.obj_type == "checkbox":
        return HeuristicValue("on")
    lowered = field_obj.name.lower()
    for h in heuristics:
        if h.name_pattern.lower() in lowered:
            return HeuristicValue(h.valid_value, h.invalid_value, h.expect_rejection_of_invalid)
    return HeuristicValue(DEFAULT_VALUE)


def fill_step_for(obj: Any, logical_name: str, value: str) -> Step:
    if obj.obj_type in SELECT_TYPES:
        return Step(0, "select", logical_name, (value,))
    if obj.obj_type == "checkbox":
        return Step(0, "check", logical_name, (value,))
    return Step(0, "enter", logical_name, (value,))


@dataclass
class GenerationConfig:
    max_depth: int = 5
    max_scripts: int = 50
    options_per_select: int = 3
    top_k_sessions: int = 10
    mask_fields: tuple[str, ...] = ("password",)
    negative_probes: bool = True

    def __post_init__(self) -> None:
        for key in ("max_depth", "max_scripts", "options_per_select", "top_k_sessions"):
            if getattr(self, key) <= 0:
                raise ValueError(f"{key} must be positive")


@dataclass
class GenerationResult:
    scripts: list[TestScript]
    repository: Repository | None = None
    metadata: dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------- crawling


def derive_repository(model: AppModel) -> tuple[Repository, dict[tuple[str, str], str]]:
    """Repository with a {name, obj_type, parent_name} entry for every visible object.

    Logical names are object names; a name reused with different attributes on
    another screen gets a ``screen.name`` logical name instead.
    """
    entries: dict[str, ObjectDescriptor] = {}
    names: dict[tuple[str, str], str] = {}
    for screen in model.screens:
        for obj in static_view(screen).objects:
            attrs = descriptor_for(obj, ("name", "obj_type", "parent_name"))
            logical = obj.name
            if logical in entries and dict(entries[logical].attributes) != attrs:
                logical = f"{screen.id}.{obj.name}"
            entries.setdefault(logical, ObjectDescriptor(logical, attrs))
            names[(screen.id, obj.id)] = logical
    return Repository(entries, model.version), names


def _paths(model: AppModel, max_depth: int) -> list[list[Transition]]:
    """Maximal simple transition paths from the start screen, in breadth-first order."""
    out: list[list[Transition]] = []
    queue: list[tuple[list[Transition], list[str]]] = [([], [model.start_screen])]
    while queue:
        path, visited = queue.pop(0)
        screen = model.screen(visited[-1])
        extended = False
        if len(path) < max_depth:
            for t in screen.transitions:
                trigger = screen.get(t.trigger_object)
                if t.target in visited or trigger is None or not trigger.visible or not trigger.enabled:
                    continue
                queue.append((path + [t], visited + [t.target]))
                extended = True
        if not extended:
            out.append(path)
    return out


def _inputs(screen: Screen) -> list[ObjectView]:
    return [o for o in static_view(screen).objects if o.obj_type in INPUT_TYPES and o.enabled]


def crawl_generate(
    model: AppModel,
    config: GenerationConfig | None = None,
    heuristics: Sequence[ValueHeuristic] = BUILTIN_HEURISTICS,
) -> GenerationResult:
    """One script per maximal path, plus option variants and negative probes."""
    config = config or GenerationConfig()
    repo, names = derive_repository(model)
    candidates: list[tuple[str, list[Step]]] = []
    seen_variants: set[tuple[str, str, str]] = set()
    seen_probes: set[tuple[str, str]] = set()

    for path in _paths(model, config.max_depth):
        screens = [model.start_screen] + [t.target for t in path]
        # (screen id, inputs with values, outgoing trigger step) per visited screen
        fills: list[tuple[str, list[tuple[ObjectView, str]], Step | None]] = []
        for i, sid in enumerate(screens):
            screen = model.screen(sid)
            t = path[i] if i < len(path) else None
            trigger_step = None
            if t is not None:
                obj = static_view(screen).find(t.trigger_object)
                value = heuristic_value(obj, heuristics).valid if t.trigger_action != "click" else None
                trigger_step = Step(0, t.trigger_action, names[(sid, obj.id)], (value,) if value else ())
            entries = [
                (o, heuristic_value(o, heuristics).valid)
                for o in _inputs(screen)
                if t is None or o.id != t.trigger_object
            ]
            fills.append((sid, entries, trigger_step))

        def build(override: dict[tuple[str, str], str], probe: tuple[str, str] | None = None) -> list[Step]:
            steps: list[Step] = []
            for sid, entries, trigger_step in fills:
                for obj, value in entries:
                    value = override.get((sid, obj.id), value)
                    steps.append(fill_step_for(obj, names[(sid, obj.id)], value))
                if probe is not None and probe[0] == sid:
                    if trigger_step is not None:
                        steps.append(trigger_step)
                    steps.append(Step(0, "assert_screen", None, (sid,)))
                    return steps
                if trigger_step is not None:
                    steps.append(trigger_step)
            steps.append(Step(0, "assert_screen", None, (screens[-1],)))
            return steps

        candidates.append(("", build({})))
        for sid, entries, _ in fills:
            for obj, _value in entries:
                if obj.obj_type not in SELECT_TYPES:
                    continue
                for option in obj.options[1 : config.options_per_select]:
                    key = (sid, obj.id, option)
                    if key not in seen_variants:
                        seen_variants.add(key)
                        candidates.append(("", build({(sid, obj.id): option})))
        if config.negative_probes:
            for sid, entries, trigger_step in fills:
                if trigger_step is None:
                    continue
                for obj, _value in entries:
                    hv = heuristic_value(obj, heuristics)
                    if hv.invalid is None or not hv.expect_rejection or (sid, obj.id) in seen_probes:
                        continue
                    seen_probes.add((sid, obj.id))
                    candidates.append(("negative", build({(sid, obj.id): hv.invalid}, probe=(sid, obj.id))))

    truncated = len(candidates) > config.max_scripts
    scripts = []
    negative = []
    for i, (tag, steps) in enumerate(candidates[: config.max_scripts], start=1):
        name = f"crawl-{i:03d}" + (f"-{tag}" if tag else "")
        if tag == "negative":
            negative.append(name)
        scripts.append(TestScript(name, name, ()).with_steps(steps))
    metadata = {
        "source": "crawl",
        "model_version": model.version,
        "candidates": len(candidates),
        "truncated": truncated,
        "negative": negative,
    }
    return GenerationResult(scripts, repo, metadata)


# ---------------------------------------------------------------- log mining


@dataclass(frozen=True)
class InteractionLogRecord:
    session_id: str
    seq: int
    screen: str
    object: str
    action: str
    value: str | None = None


def load_log(text: str) -> list[InteractionLogRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        data = json.loads(line)
        try:
            records.append(
                InteractionLogRecord(
                    session_id=str(data["session_id"]),
                    seq=int(data["seq"]),
                    screen=data["screen"],
                    object=data.get("object") or "",
                    action=data["action"],
                    value=data.get("value"),
                )
            )
        except KeyError as exc:
            raise ValueError(f"line {lineno}: missing key {exc}") from exc
    return records


def _step_from_record(r: InteractionLogRecord, mask_fields: Iterable[str]) -> Step:
    if r.action == "open":
        return Step(0, "open", None, (r.value or r.screen,))
    value = r.value
    if value is not None and any(p.lower() in r.object.lower() for p in mask_fields):
        value = MASK
    if r.action in ("click", "assert_exists"):
        return Step(0, r.action, r.object)
    return Step(0, r.action, r.object, (value if value is not None else "",))


def mine_logs(records: Iterable[InteractionLogRecord], config: GenerationConfig | None = None) -> GenerationResult:
    """Scripts for the most frequent distinct action sequences across sessions.

    Sequences are compared on (screen, object, action). Each emitted script
    takes its values from the occurrence with the greatest session id.
    """
    config = config or GenerationConfig()
    by_session: dict[str, list[InteractionLogRecord]] = defaultdict(list)
    for r in records:
        by_session[r.session_id].append(r)
    warnings = []
    counts: Counter[tuple[tuple[str, str, str], ...]] = Counter()
    latest: dict[tuple[tuple[str, str, str], ...], tuple[str, list[InteractionLogRecord]]] = {}
    for sid in sorted(by_session):
        rows = sorted(by_session[sid], key=lambda r: r.seq)
        seqs = [r.seq for r in rows]
        if seqs != list(range(seqs[0], seqs[0] + len(seqs))):
            warnings.append(f"session {sid!r} skipped: seq not dense")
            log.warning("session %s skipped: seq not dense", sid)
            continue
        key = tuple((r.screen, r.object, r.action) for r in rows)
        counts[key] += 1
        latest[key] = (sid, rows)  # sids ascend, so the last write wins
    ranked = sorted(counts, key=lambda k: (-counts[k], k))[: config.top_k_sessions]
    scripts = []
    for i, key in enumerate(ranked, start=1):
        name = f"mined-{i:03d}"
        steps = [_step_from_record(r, config.mask_fields) for r in latest[key][1]]
        scripts.append(TestScript(name, name, ()).with_steps(steps))
    metadata = {
        "source": "log",
        "frequencies": {f"mined-{i:03d}": counts[k] for i, k in enumerate(ranked, start=1)},
        "sessions": sum(counts.values()),
        "warnings": warnings,
    }
    return GenerationResult(scripts, None, metadata)
