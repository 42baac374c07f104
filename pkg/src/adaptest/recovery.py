"""Recovery pipeline run when a step is blocked, plus the knowledge base that
remembers tester decisions and popup resolutions between runs."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping

from .config import EngineConfig
from .dsl import TestScript, Step
from .matching import fuzzy_match, string_similarity
from .model import OK, ObjectView, ScreenView, SimSession, TEXT_INPUT_TYPES, SELECT_TYPES
from .repo import AmbiguousObjectError, Repository, descriptor_for, matches_exactly, resolve_exact
from .testgen import heuristic_value
from .util import detail_hash

# triggers
OBJECT_NOT_FOUND = "object_not_found"
BLOCKED_BY_POPUP = "blocked_by_popup"
GUARD_UNSATISFIED = "guard_unsatisfied"
LOAD_FAILURE = "load_failure"
TRIGGERS = (OBJECT_NOT_FOUND, BLOCKED_BY_POPUP, GUARD_UNSATISFIED, LOAD_FAILURE)

RESUMED = "resumed"
EXHAUSTED = "exhausted"
PENDING, ACCEPTED, REJECTED = "pending", "accepted", "rejected"

APPLIES_TO = {
    "popup_resolution": {BLOCKED_BY_POPUP},
    "fill_required_field": {GUARD_UNSATISFIED},
    "fuzzy_rebind": {OBJECT_NOT_FOUND},
    "refresh_retry": {LOAD_FAILURE},
    "relogin": {OBJECT_NOT_FOUND},
    "adjacent_exploration": {OBJECT_NOT_FOUND},
    "custom": set(TRIGGERS),
}
LOGIN_WORDS = ("login", "log in", "sign in", "signin", "submit")


class KnowledgeBaseError(ValueError):
    pass


@dataclass(frozen=True)
class PopupDefinition:
    id: str
    title_pattern: str
    text_pattern: str
    resolution_button: str
    source: str = "builtin"
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not self.resolution_button:
            raise KnowledgeBaseError(f"popup definition {self.id!r}: empty resolution_button")
        if not 0.0 <= self.confidence <= 1.0:
            raise KnowledgeBaseError(f"popup definition {self.id!r}: confidence outside [0, 1]")
        if self.source not in ("builtin", "learned"):
            raise KnowledgeBaseError(f"popup definition {self.id!r}: unknown source {self.source!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "title_pattern": self.title_pattern,
            "text_pattern": self.text_pattern,
            "resolution_button": self.resolution_button,
            "source": self.source,
            "confidence": self.confidence,
        }


BUILTIN_POPUPS = (
    PopupDefinition("security-certificate", "Security Certificate", "The security certificate has expired", "Accept"),
    PopupDefinition("session-warning", "Session Warning", "Your session is about to expire", "OK"),
    PopupDefinition("terms-changed", "Terms and Conditions", "Our terms and conditions have changed", "Accept"),
    PopupDefinition("duplicate-payment", "Duplicate Payment", "A payment was made recently with this card", "Continue"),
)


@dataclass(frozen=True)
class CustomAction:
    """Recovery recipe: when the view matches ``when``, perform ``actions``.

    ``when`` keys (all optional, all must hold): ``screen``, ``title_contains``,
    ``has_object`` (object name). Actions are ``{verb, object, value}`` records
    with objects referenced by name.
    """

    name: str
    when: Mapping[str, str]
    actions: tuple[Mapping[str, Any], ...]

    def matches(self, view: ScreenView) -> bool:
        if "screen" in self.when and view.screen_id != self.when["screen"]:
            return False
        if "title_contains" in self.when and self.when["title_contains"].lower() not in view.title.lower():
            return False
        if "has_object" in self.when and not any(o.name == self.when["has_object"] for o in view.objects):
            return False
        return True

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "when": dict(self.when), "actions": [dict(a) for a in self.actions]}


@dataclass
class KnowledgeBase:
    popup_definitions: list[PopupDefinition] = field(default_factory=lambda: list(BUILTIN_POPUPS))
    decisions: dict[str, str] = field(default_factory=dict)
    custom_actions: list[CustomAction] = field(default_factory=list)

    def decision(self, key: str) -> str:
        return self.decisions.get(key, PENDING)

    def to_dict(self) -> dict[str, Any]:
        return {
            "popup_definitions": [d.to_dict() for d in self.popup_definitions],
            "decisions": dict(sorted(self.decisions.items())),
            "custom_actions": [c.to_dict() for c in self.custom_actions],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "KnowledgeBase":
        decisions = dict(data.get("decisions", {}))
        for key, value in decisions.items():
            if value not in (ACCEPTED, REJECTED):
                raise KnowledgeBaseError(f"decision {key!r}: expected accepted or rejected")
        if "popup_definitions" in data:
            defs = [PopupDefinition(**d) for d in data["popup_definitions"]]
        else:
            defs = list(BUILTIN_POPUPS)
        if len({d.id for d in defs}) != len(defs):
            raise KnowledgeBaseError("duplicate popup definition id")
        return cls(
            popup_definitions=defs,
            decisions=decisions,
            custom_actions=[
                CustomAction(c["name"], dict(c.get("when", {})), tuple(c.get("actions", [])))
                for c in data.get("custom_actions", [])
            ],
        )

    def copy(self) -> "KnowledgeBase":
        return KnowledgeBase(list(self.popup_definitions), dict(self.decisions), list(self.custom_actions))


def load_kb(document: str) -> KnowledgeBase:
    return KnowledgeBase.from_dict(json.loads(document))


def dump_kb(kb: KnowledgeBase) -> str:
    return json.dumps(kb.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def decision_key(script_id: str, step: int, strategy: str, plan: Any) -> str:
    return f"{script_id}:{step}:{strategy}:{detail_hash(plan)}"


@dataclass
class RecoveryEvent:
    script_id: str
    step: int
    trigger: str
    strategy: str
    detail: dict[str, Any]
    outcome: str
    decision: str = PENDING
    key: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "script_id": self.script_id,
            "step": self.step,
            "trigger": self.trigger,
            "strategy": self.strategy,
            "detail": self.detail,
            "outcome": self.outcome,
            "decision": self.decision,
            "key": self.key,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RecoveryEvent":
        return cls(**{k: data[k] for k in ("script_id", "step", "trigger", "strategy", "detail", "outcome", "decision", "key")})


@dataclass
class StepRun:
    """Result of one attempt at a step: success, or the trigger that blocked it."""

    ok: bool
    trigger: str | None = None
    unmet: tuple[str, ...] = ()
    navigated: bool = False
    message: str = ""


@dataclass
class RecoveryContext:
    session: SimSession
    script: TestScript
    step: Step
    trigger: str
    repo: Repository
    config: EngineConfig
    kb: KnowledgeBase
    retry: Callable[[str | None], StepRun]
    last: StepRun = field(default_factory=lambda: StepRun(False))
    override: str | None = None
    learned: list[PopupDefinition] = field(default_factory=list)

    def key(self, strategy: str, plan: Any) -> str:
        return decision_key(self.script.id, self.step.index, strategy, plan)

    def event(self, strategy: str, plan: dict[str, Any], outcome: str, **extra: Any) -> RecoveryEvent:
        key = self.key(strategy, plan)
        return RecoveryEvent(
            self.script.id,
            self.step.index,
            self.trigger,
            strategy,
            {**plan, **extra},
            outcome,
            self.kb.decision(key),
            key,
        )

    def rejected(self, strategy: str, plan: Any) -> bool:
        return self.kb.decision(self.key(strategy, plan)) == REJECTED

    def skipped(self, strategy: str, plan: dict[str, Any]) -> RecoveryEvent:
        return self.event(strategy, plan, EXHAUSTED, skipped="rejected by tester")


@dataclass
class RecoveryResult:
    events: list[RecoveryEvent]
    resume: bool
    run: StepRun | None = None
    override: str | None = None


# ---------------------------------------------------------------- helpers


def _claimed_ids(view: ScreenView, repo: Repository, logical_name: str | None) -> set[str]:
    """Objects that another repository entry already identifies exactly."""
    claimed = set()
    for name, descriptor in repo.entries.items():
        if name == logical_name:
            continue
        for o in view.objects:
            if matches_exactly(descriptor, o):
                claimed.add(o.id)
    return claimed


def _locate(ctx: RecoveryContext, view: ScreenView) -> tuple[ObjectView | None, dict[str, Any]]:
    """Exact then fuzzy lookup of the step's object on ``view``."""
    descriptor = ctx.repo.get(ctx.step.object_ref or "")
    if descriptor is None:
        return None, {}
    try:
        obj = resolve_exact(view, descriptor)
    except AmbiguousObjectError:
        obj = None
    if obj is not None:
        return obj, {"match": "exact"}
    claimed = _claimed_ids(view, ctx.repo, descriptor.logical_name)
    candidates = [o for o in view.objects if o.id not in claimed]
    best, _ = fuzzy_match(descriptor, candidates, ctx.config.similarity, view.dimensions)
    if best is None:
        return None, {}
    return view.find(best.candidate), {"match": "fuzzy", "score": best.overall}


def _resumed(run: StepRun, trigger: str) -> bool:
    return run.ok or (run.trigger is not None and run.trigger != trigger)


def is_login_page(view: ScreenView) -> bool:
    types = [o.obj_type for o in view.objects]
    return "password_field" in types and "textfield" in types and "button" in types


# ---------------------------------------------------------------- strategies


def detect_and_resolve_popup(
    session: SimSession,
    kb: KnowledgeBase,
    config: EngineConfig | None = None,
    learned: list[PopupDefinition] | None = None,
) -> tuple[RecoveryEvent | None, PopupDefinition | None]:
    """Dismiss the active popup using a stored definition or the dismissal lexicon.

    Returns the event (script/step fields left blank) and, when no definition
    matched, the newly learned definition.
    """
    config = config or EngineConfig()
    view = session.observe()
    popup = view.popup
    if popup is None:
        return None, None
    buttons = {b.lower(): b for b in popup.buttons}
    best: tuple[float, PopupDefinition] | None = None
    for d in list(kb.popup_definitions) + list(learned or []):
        if d.confidence < config.learned_popup_confidence or d.resolution_button.lower() not in buttons:
            continue
        score = max(string_similarity(d.title_pattern, popup.title), string_similarity(d.text_pattern, popup.body_text))
        if score >= config.popup_match_threshold and (best is None or score > best[0]):
            best = (score, d)
    new_def = None
    if best is not None:
        button = buttons[best[1].resolution_button.lower()]
        detail = {"popup": popup.title, "button": button, "definition": best[1].id, "source": best[1].source}
    else:
        button = next((buttons[w.lower()] for w in config.popup_lexicon if w.lower() in buttons), None)
        if button is None:
            detail = {"popup": popup.title, "buttons": list(popup.buttons)}
            return RecoveryEvent("", -1, BLOCKED_BY_POPUP, "popup_resolution", detail, EXHAUSTED), None
        new_def = PopupDefinition(
            id="learned-" + detail_hash({"title": popup.title, "text": popup.body_text})[:12],
            title_pattern=popup.title,
            text_pattern=popup.body_text,
            resolution_button=button,
            source="learned",
            confidence=config.learned_popup_confidence,
        )
        detail = {"popup": popup.title, "button": button, "definition": new_def.id, "source": "lexicon",
                  "learned_definition": new_def.to_dict()}
    session.perform("popup", value=button)
    outcome = RESUMED if session.observe().popup is None else EXHAUSTED
    return RecoveryEvent("", -1, BLOCKED_BY_POPUP, "popup_resolution", detail, outcome), new_def


def _popup_resolution(ctx: RecoveryContext) -> tuple[RecoveryEvent | None, StepRun | None]:
    snap = ctx.session.snapshot()
    ev, new_def = detect_and_resolve_popup(ctx.session, ctx.kb, ctx.config, ctx.learned)
    if ev is None:
        return None, None
    plan = {"popup": ev.detail["popup"], "button": ev.detail.get("button")}
    if ctx.rejected("popup_resolution", plan):
        ctx.session.restore(snap)
        return ctx.skipped("popup_resolution", plan), None
    extra = {k: v for k, v in ev.detail.items() if k not in plan}
    if ev.outcome != RESUMED:
        return ctx.event("popup_resolution", plan, EXHAUSTED, **extra), None
    if new_def is not None:
        ctx.learned.append(new_def)
    return ctx.event("popup_resolution", plan, RESUMED, **extra), ctx.retry(ctx.override)


def fill_required_fields(ctx: RecoveryContext) -> tuple[RecoveryEvent | None, StepRun | None]:
    """Give every unmet guard a heuristic value, then retry the step once."""
    view = ctx.session.observe()
    fields = []
    for oid in ctx.last.unmet:
        obj = view.find(oid)
        if obj is None or obj.obj_type not in (TEXT_INPUT_TYPES | SELECT_TYPES | {"checkbox"}):
            plan = {"fields": [{"id": oid, "fillable": False}]}
            return ctx.event("fill_required_field", plan, EXHAUSTED), None
        value = heuristic_value(obj, ctx.config.heuristics).valid
        logical = next((n for n, d in ctx.repo.entries.items() if matches_exactly(d, obj)), obj.name)
        fields.append(
            {
                "id": obj.id,
                "logical_name": logical,
                "value": value,
                "descriptor": descriptor_for(obj, ("name", "obj_type", "parent_name")),
            }
        )
    plan = {"fields": fields}
    if ctx.rejected("fill_required_field", plan):
        return ctx.skipped("fill_required_field", plan), None
    for f in fields:
        obj = view.find(f["id"])
        verb = "select" if obj.obj_type in SELECT_TYPES else "check" if obj.obj_type == "checkbox" else "enter"
        out = ctx.session.perform(verb, obj.id, f["value"])
        if out.status != OK:
            return ctx.event("fill_required_field", plan, EXHAUSTED, failed_on=obj.id, status=out.status), None
    run = ctx.retry(ctx.override)
    outcome = RESUMED if _resumed(run, GUARD_UNSATISFIED) else EXHAUSTED
    return ctx.event("fill_required_field", plan, outcome), run


def _fuzzy_rebind(ctx: RecoveryContext) -> tuple[RecoveryEvent | None, StepRun | None]:
    descriptor = ctx.repo.get(ctx.step.object_ref or "")
    if descriptor is None:
        return None, None
    view = ctx.session.observe()
    claimed = _claimed_ids(view, ctx.repo, descriptor.logical_name)
    candidates = [o for o in view.objects if o.id not in claimed]
    best, ranking = fuzzy_match(descriptor, candidates, ctx.config.similarity, view.dimensions)
    top = [{"candidate": r.candidate, "overall": r.overall} for r in ranking[:3]]
    if best is None:
        return ctx.event("fuzzy_rebind", {"logical_name": descriptor.logical_name, "screen": view.screen_id},
                         EXHAUSTED, ranking=top), None
    obj = view.find(best.candidate)
    plan = {
        "logical_name": descriptor.logical_name,
        "screen": view.screen_id,
        "candidate": obj.id,
        "candidate_name": obj.name,
    }
    if ctx.rejected("fuzzy_rebind", plan):
        return ctx.skipped("fuzzy_rebind", plan), None
    run = ctx.retry(obj.id)
    outcome = RESUMED if _resumed(run, OBJECT_NOT_FOUND) else EXHAUSTED
    ctx.override = obj.id if outcome == RESUMED else ctx.override
    return (
        ctx.event(
            "fuzzy_rebind",
            plan,
            outcome,
            score=best.overall,
            per_attribute=dict(best.per_attribute),
            candidate_attributes={k: list(v) if isinstance(v, tuple) else v for k, v in descriptor_for(obj).items()},
            ranking=top,
        ),
        run,
    )


def refresh_retry(ctx: RecoveryContext) -> tuple[RecoveryEvent | None, StepRun | None]:
    """Reload the current screen until it renders, up to the configured attempts."""
    view = ctx.session.observe()
    plan = {"screen": view.screen_id}
    if ctx.rejected("refresh_retry", plan):
        return ctx.skipped("refresh_retry", plan), None
    attempts = 0
    loaded = False
    while attempts < ctx.config.max_refresh_attempts and not loaded:
        attempts += 1
        ctx.session.perform("refresh")
        loaded = not ctx.session.observe().loading
    if not loaded:
        return ctx.event("refresh_retry", plan, EXHAUSTED, attempts=attempts), None
    # a navigation that landed on a failed load already did its work
    run = StepRun(True) if ctx.last.navigated else ctx.retry(ctx.override)
    outcome = RESUMED if _resumed(run, LOAD_FAILURE) else EXHAUSTED
    return ctx.event("refresh_retry", plan, outcome, attempts=attempts), run


def relogin(ctx: RecoveryContext) -> tuple[RecoveryEvent | None, StepRun | None]:
    """Log back in with the configured credentials when the view is a login page."""
    session = ctx.session
    view = session.observe()
    if not is_login_page(view):
        return None, None
    user_field = next(o for o in view.objects if o.obj_type == "textfield")
    pass_field = next(o for o in view.objects if o.obj_type == "password_field")
    buttons = [o for o in view.objects if o.obj_type == "button"]
    submit = next(
        (b for b in buttons if any(w in f"{b.name} {b.text}".lower() for w in LOGIN_WORDS)), buttons[0]
    )
    username = ctx.config.credentials.get("username", "")
    plan = {"screen": view.screen_id, "username": username, "submit": submit.id}
    if ctx.rejected("relogin", plan):
        return ctx.skipped("relogin", plan), None
    session.perform("enter", user_field.id, username)
    session.perform("enter", pass_field.id, ctx.config.credentials.get("password", ""))
    session.perform("click", submit.id)
    after = session.observe()
    if not (session.logged_in and after.screen_id != view.screen_id):
        return ctx.event("relogin", plan, EXHAUSTED, landed_on=after.screen_id), None
    run = ctx.retry(ctx.override)
    outcome = RESUMED if run.ok or run.trigger != OBJECT_NOT_FOUND else EXHAUSTED
    return ctx.event("relogin", plan, outcome, landed_on=after.screen_id), run


def _nav_buttons(view: ScreenView, lexicon: tuple[str, ...]) -> list[ObjectView]:
    words = [w.lower() for w in lexicon]
    navs = [
        o
        for o in view.objects
        if o.obj_type in ("button", "link") and o.enabled and o.text.strip().lower() in words
    ]
    return sorted(navs, key=lambda o: words.index(o.text.strip().lower()))


def explore_adjacent(ctx: RecoveryContext) -> tuple[RecoveryEvent | None, StepRun | None]:
    """Breadth-first search over navigation buttons for the missing object.

    Every probe starts from a snapshot, so a failed search leaves the session
    exactly as it was.
    """
    session = ctx.session
    start = session.observe()
    if not _nav_buttons(start, ctx.config.nav_lexicon):
        return None, None
    root = session.snapshot()

    def replay(path: list[ObjectView]) -> bool:
        session.restore(root)
        return all(session.perform("click", nav.id).status == OK for nav in path)

    visited = {start.screen_id}
    explored: list[str] = []
    queue: deque[list[ObjectView]] = deque([[]])
    found: tuple[list[ObjectView], ObjectView, dict[str, Any]] | None = None
    while queue and found is None:
        path = queue.popleft()
        if len(path) >= ctx.config.max_explore_depth or not replay(path):
            continue
        for nav in _nav_buttons(session.observe(), ctx.config.nav_lexicon):
            if not replay(path + [nav]):
                continue
            view = session.observe()
            if view.screen_id in visited or view.loading or view.popup is not None:
                continue
            visited.add(view.screen_id)
            explored.append(view.screen_id)
            obj, how = _locate(ctx, view)
            if obj is not None:
                found = (path + [nav], obj, how)
                break
            queue.append(path + [nav])
    if found is None:
        session.restore(root)
        return ctx.event("adjacent_exploration", {"screen": start.screen_id}, EXHAUSTED, explored=explored), None
    path, obj, how = found
    plan = {
        "screen": start.screen_id,
        "path": [nav.text for nav in path],
        "found_on": session.observe().screen_id,
        "candidate": obj.id,
    }
    if ctx.rejected("adjacent_exploration", plan):
        session.restore(root)
        return ctx.skipped("adjacent_exploration", plan), None
    run = ctx.retry(obj.id)
    if not _resumed(run, OBJECT_NOT_FOUND):
        session.restore(root)
        return ctx.event("adjacent_exploration", plan, EXHAUSTED, explored=explored, **how), None
    ctx.override = obj.id
    return ctx.event("adjacent_exploration", plan, RESUMED, explored=explored, **how), run


def _custom(ctx: RecoveryContext) -> tuple[RecoveryEvent | None, StepRun | None]:
    session = ctx.session
    view = session.observe()
    action = next((c for c in ctx.kb.custom_actions if c.matches(view)), None)
    if action is None:
        return None, None
    plan = {"action": action.name, "screen": view.screen_id}
    if ctx.rejected("custom", plan):
        return ctx.skipped("custom", plan), None
    for a in action.actions:
        current = session.observe()
        target = next((o.id for o in current.objects if o.name == a.get("object")), a.get("object"))
        out = session.perform(a["verb"], target, a.get("value"))
        if out.status != OK:
            return ctx.event("custom", plan, EXHAUSTED, failed_action=dict(a), status=out.status), None
    run = ctx.retry(ctx.override)
    outcome = RESUMED if _resumed(run, ctx.trigger) else EXHAUSTED
    return ctx.event("custom", plan, outcome), run


STRATEGY_FUNCS = {
    "popup_resolution": _popup_resolution,
    "fill_required_field": fill_required_fields,
    "fuzzy_rebind": _fuzzy_rebind,
    "refresh_retry": refresh_retry,
    "relogin": relogin,
    "adjacent_exploration": explore_adjacent,
    "custom": _custom,
}


def attempt_recovery(ctx: RecoveryContext) -> RecoveryResult:
    """Run applicable strategies in configured order until one resumes the step."""
    events: list[RecoveryEvent] = []
    for strategy in ctx.config.strategy_order:
        if ctx.trigger not in APPLIES_TO[strategy]:
            continue
        event, run = STRATEGY_FUNCS[strategy](ctx)
        if event is None:
            continue
        events.append(event)
        if event.outcome == RESUMED:
            return RecoveryResult(events, True, run, ctx.override)
    return RecoveryResult(events, False)


def with_decision(kb: KnowledgeBase, key: str, decision: str) -> KnowledgeBase:
    if decision not in (ACCEPTED, REJECTED):
        raise KnowledgeBaseError(f"decision must be accepted or rejected, not {decision!r}")
    new = kb.copy()
    new.decisions[key] = decision
    return new


def set_popup_confidence(kb: KnowledgeBase, definition: PopupDefinition, confidence: float) -> KnowledgeBase:
    new = kb.copy()
    for i, d in enumerate(new.popup_definitions):
        if d.id == definition.id:
            new.popup_definitions[i] = replace(d, confidence=confidence)
            return new
    new.popup_definitions.append(replace(definition, confidence=confidence))
    return new
