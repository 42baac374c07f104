"""Simulated application-under-test.

An ``AppModel`` is an immutable description of screens, objects, transitions,
popups and flakiness. All runtime state lives in ``SimSession``; a session is
fully determined by (model, seed, action sequence).
"""

from __future__ import annotations

import copy
import json
import random
import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

OBJ_TYPES = frozenset(
    {"button", "textfield", "password_field", "listbox", "combobox", "checkbox", "link", "label"}
)
SELECT_TYPES = frozenset({"listbox", "combobox"})
TEXT_INPUT_TYPES = frozenset({"textfield", "password_field"})
INPUT_TYPES = TEXT_INPUT_TYPES | SELECT_TYPES | {"checkbox"}
POPUP_EFFECTS = frozenset({"dismiss", "abort"})
OBJECT_VERBS = {
    "click": frozenset({"button", "link", "checkbox"}),
    "enter": TEXT_INPUT_TYPES,
    "select": SELECT_TYPES,
    "check": frozenset({"checkbox"}),
}
MUTATION_KINDS = frozenset(
    {
        "rename_object",
        "retype_object",
        "reparent_object",
        "move_object",
        "delete_object",
        "add_object",
        "add_select_option",
        "add_popup",
        "set_load_failure",
    }
)

# perform() outcomes
OK = "ok"
NO_SUCH_OBJECT = "no_such_object"
BLOCKED_BY_POPUP = "blocked_by_popup"
GUARD_UNSATISFIED = "guard_unsatisfied"
LOAD_FAILURE = "load_failure"
INVALID_ACTION = "invalid_action"


class ModelError(ValueError):
    """Base class for model loading and mutation errors."""


class ModelParseError(ModelError):
    def __init__(self, message: str, location: str = "") -> None:
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class ModelReferenceError(ModelError):
    def __init__(self, ref: str, message: str) -> None:
        self.ref = ref
        super().__init__(message)


class MutationError(ModelError):
    pass


@dataclass(frozen=True)
class UIObject:
    id: str
    name: str
    obj_type: str
    parent_id: str | None = None
    text: str = ""
    position: tuple[int, int] = (0, 0)
    size: tuple[int, int] = (1, 1)
    required: bool = False
    options: tuple[str, ...] = ()
    enabled: bool = True
    visible: bool = True


@dataclass(frozen=True)
class Transition:
    trigger_object: str
    trigger_action: str
    target: str
    guards: tuple[str, ...] = ()


@dataclass(frozen=True)
class Screen:
    id: str
    title: str
    dimensions: tuple[int, int] = (1024, 768)
    objects: tuple[UIObject, ...] = ()
    transitions: tuple[Transition, ...] = ()
    is_loading_stub: bool = False
    requires_login: bool = False

    def get(self, object_id: str) -> UIObject | None:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        return None


@dataclass(frozen=True)
class PopupButton:
    text: str
    effect: str


@dataclass(frozen=True)
class PopupSpec:
    id: str
    title: str
    body_text: str
    buttons: tuple[PopupButton, ...]
    screen: str
    fire_on_nth_action: int = 1
    one_shot: bool = True


@dataclass(frozen=True)
class LoadFailure:
    probability: float = 0.0
    screens: tuple[str, ...] = ()


@dataclass(frozen=True)
class LoginSpec:
    """Login screen wiring plus the credentials the simulated app accepts."""

    screen: str
    username_field: str
    password_field: str
    submit: str
    username: str = ""
    password: str = ""
    expire_after_actions: int | None = None


@dataclass(frozen=True)
class AppModel:
    version: str
    start_screen: str
    screens: tuple[Screen, ...]
    popups: tuple[PopupSpec, ...] = ()
    load_failure: LoadFailure = LoadFailure()
    login_screen: LoginSpec | None = None

    def screen(self, screen_id: str) -> Screen:
        for s in self.screens:
            if s.id == screen_id:
                return s
        raise KeyError(screen_id)

    def has_screen(self, screen_id: str) -> bool:
        return any(s.id == screen_id for s in self.screens)

    @property
    def screen_ids(self) -> list[str]:
        return [s.id for s in self.screens]


# ---------------------------------------------------------------- loading


class _Reader:
    """Walks a decoded JSON document and reports schema errors with a path."""

    def __init__(self, data: Any, path: str) -> None:
        self.data = data
        self.path = path

    def fail(self, message: str, key: str | None = None) -> ModelParseError:
        loc = self.path if key is None else f"{self.path}.{key}"
        return ModelParseError(message, loc)

    def _get(self, key: str, default: Any, required: bool) -> Any:
        if not isinstance(self.data, dict):
            raise self.fail("expected an object")
        if key not in self.data:
            if required:
                raise self.fail(f"missing key {key!r}")
            return default
        return self.data[key]

    def str(self, key: str, default: str | None = None, required: bool = True) -> Any:
        value = self._get(key, default, required and default is None)
        if value is None and not required:
            return None
        if not isinstance(value, str):
            raise self.fail("expected a string", key)
        return value

    def opt_str(self, key: str) -> str | None:
        value = self._get(key, None, False)
        if value is not None and not isinstance(value, str):
            raise self.fail("expected a string or null", key)
        return value

    def bool(self, key: str, default: bool) -> bool:
        value = self._get(key, default, False)
        if not isinstance(value, bool):
            raise self.fail("expected a boolean", key)
        return value

    def int(self, key: str, default: int | None = None) -> int:
        value = self._get(key, default, default is None)
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail("expected an integer", key)
        return value

    def opt_int(self, key: str) -> int | None:
        value = self._get(key, None, False)
        if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
            raise self.fail("expected an integer or null", key)
        return value

    def number(self, key: str, default: float) -> float:
        value = self._get(key, default, False)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.fail("expected a number", key)
        return float(value)

    def pair(self, key: str, default: tuple[int, int] | None = None) -> tuple[int, int]:
        value = self._get(key, default, default is None)
        if (
            not isinstance(value, (list, tuple))
            or len(value) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
        ):
            raise self.fail("expected a pair of integers", key)
        return (value[0], value[1])

    def list(self, key: str, required: bool = False) -> list[Any]:
        value = self._get(key, [], required)
        if not isinstance(value, list):
            raise self.fail("expected a list", key)
        return value

    def strings(self, key: str) -> tuple[str, ...]:
        items = self.list(key)
        if not all(isinstance(v, str) for v in items):
            raise self.fail("expected a list of strings", key)
        return tuple(items)

    def child(self, key: str) -> "_Reader":
        return _Reader(self._get(key, None, True), f"{self.path}.{key}")

    def opt_child(self, key: str) -> "_Reader | None":
        value = self._get(key, None, False)
        return None if value is None else _Reader(value, f"{self.path}.{key}")

    def items(self, key: str, required: bool = False) -> Iterable["_Reader"]:
        for i, item in enumerate(self.list(key, required)):
            yield _Reader(item, f"{self.path}.{key}[{i}]")


def _parse_object(r: _Reader) -> UIObject:
    obj_type = r.str("obj_type")
    if obj_type not in OBJ_TYPES:
        raise r.fail(f"unknown obj_type {obj_type!r}", "obj_type")
    obj = UIObject(
        id=r.str("id"),
        name=r.str("name"),
        obj_type=obj_type,
        parent_id=r.opt_str("parent_id"),
        text=r.str("text", ""),
        position=r.pair("position", (0, 0)),
        size=r.pair("size", (1, 1)),
        required=r.bool("required", False),
        options=r.strings("options"),
        enabled=r.bool("enabled", True),
        visible=r.bool("visible", True),
    )
    return obj


def _parse_screen(r: _Reader) -> Screen:
    transitions = []
    for t in r.items("transitions"):
        trig = t.child("trigger")
        transitions.append(
            Transition(
                trigger_object=trig.str("object"),
                trigger_action=trig.str("action", "click"),
                target=t.str("target"),
                guards=t.strings("guards"),
            )
        )
    return Screen(
        id=r.str("id"),
        title=r.str("title", ""),
        dimensions=r.pair("dimensions", (1024, 768)),
        objects=tuple(_parse_object(o) for o in r.items("objects")),
        transitions=tuple(transitions),
        is_loading_stub=r.bool("is_loading_stub", False),
        requires_login=r.bool("requires_login", False),
    )


def _parse_popup(r: _Reader) -> PopupSpec:
    buttons = []
    for b in r.items("buttons"):
        effect = b.str("effect")
        if effect not in POPUP_EFFECTS:
            raise b.fail(f"unknown popup effect {effect!r}", "effect")
        buttons.append(PopupButton(b.str("text"), effect))
    trig = r.child("trigger")
    return PopupSpec(
        id=r.str("id"),
        title=r.str("title", ""),
        body_text=r.str("body_text", ""),
        buttons=tuple(buttons),
        screen=trig.str("screen"),
        fire_on_nth_action=trig.int("fire_on_nth_action", 1),
        one_shot=trig.bool("one_shot", True),
    )


def model_from_dict(data: dict[str, Any]) -> AppModel:
    r = _Reader(data, "$")
    lf = r.opt_child("load_failure")
    login = r.opt_child("login_screen")
    model = AppModel(
        version=r.str("version"),
        start_screen=r.str("start_screen"),
        screens=tuple(_parse_screen(s) for s in r.items("screens", required=True)),
        popups=tuple(_parse_popup(p) for p in r.items("popups")),
        load_failure=LoadFailure(lf.number("probability", 0.0), lf.strings("screens"))
        if lf
        else LoadFailure(),
        login_screen=LoginSpec(
            screen=login.str("screen"),
            username_field=login.str("username_field"),
            password_field=login.str("password_field"),
            submit=login.str("submit"),
            username=login.str("username", ""),
            password=login.str("password", ""),
            expire_after_actions=login.opt_int("expire_after_actions"),
        )
        if login
        else None,
    )
    validate_model(model)
    return model


def load_model(document: str | bytes | dict[str, Any]) -> AppModel:
    """Parse and validate a model document (JSON text or decoded dict)."""
    if isinstance(document, dict):
        return model_from_dict(document)
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return model_from_dict(data)


def validate_model(model: AppModel) -> None:
    """Check every cross-reference and structural invariant; raise on the first violation."""
    seen_screens: set[str] = set()
    for s in model.screens:
        if s.id in seen_screens:
            raise ModelError(f"duplicate screen id {s.id!r}")
        seen_screens.add(s.id)
    if model.start_screen not in seen_screens:
        raise ModelReferenceError(model.start_screen, f"start_screen {model.start_screen!r} does not exist")
    for s in model.screens:
        if s.dimensions[0] <= 0 or s.dimensions[1] <= 0:
            raise ModelError(f"screen {s.id!r}: dimensions must be positive")
        ids: set[str] = set()
        for o in s.objects:
            if o.id in ids:
                raise ModelError(f"screen {s.id!r}: duplicate object id {o.id!r}")
            ids.add(o.id)
        for o in s.objects:
            if o.size[0] <= 0 or o.size[1] <= 0:
                raise ModelError(f"object {o.id!r}: size must be positive")
            if bool(o.options) != (o.obj_type in SELECT_TYPES):
                raise ModelError(f"object {o.id!r}: options must be non-empty iff listbox/combobox")
            if o.parent_id is not None and o.parent_id not in ids:
                raise ModelReferenceError(o.parent_id, f"object {o.id!r}: parent {o.parent_id!r} not on screen {s.id!r}")
        for t in s.transitions:
            if t.trigger_object not in ids:
                raise ModelReferenceError(t.trigger_object, f"screen {s.id!r}: transition trigger {t.trigger_object!r} does not exist")
            if t.target not in seen_screens:
                raise ModelReferenceError(t.target, f"screen {s.id!r}: transition target {t.target!r} does not exist")
            for g in t.guards:
                if g not in ids:
                    raise ModelReferenceError(g, f"screen {s.id!r}: guard {g!r} does not exist")
    for p in model.popups:
        if p.screen not in seen_screens:
            raise ModelReferenceError(p.screen, f"popup {p.id!r}: screen {p.screen!r} does not exist")
        if not p.buttons:
            raise ModelError(f"popup {p.id!r}: needs at least one button")
        if sum(b.effect == "dismiss" for b in p.buttons) != 1:
            raise ModelError(f"popup {p.id!r}: exactly one button must dismiss")
        if p.fire_on_nth_action < 1:
            raise ModelError(f"popup {p.id!r}: fire_on_nth_action must be positive")
    lf = model.load_failure
    if not 0.0 <= lf.probability <= 1.0:
        raise ModelError(f"load_failure probability {lf.probability} outside [0, 1]")
    for sid in lf.screens:
        if sid not in seen_screens:
            raise ModelReferenceError(sid, f"load_failure screen {sid!r} does not exist")
    login = model.login_screen
    if login is not None:
        if login.screen not in seen_screens:
            raise ModelReferenceError(login.screen, f"login screen {login.screen!r} does not exist")
        ls = model.screen(login.screen)
        for ref in (login.username_field, login.password_field, login.submit):
            if ls.get(ref) is None:
                raise ModelReferenceError(ref, f"login object {ref!r} not on screen {login.screen!r}")


# ---------------------------------------------------------------- serialization


def _object_to_dict(o: UIObject) -> dict[str, Any]:
    return {
        "id": o.id,
        "name": o.name,
        "obj_type": o.obj_type,
        "parent_id": o.parent_id,
        "text": o.text,
        "position": list(o.position),
        "size": list(o.size),
        "required": o.required,
        "options": list(o.options),
        "enabled": o.enabled,
        "visible": o.visible,
    }


def model_to_dict(model: AppModel) -> dict[str, Any]:
    return {
        "version": model.version,
        "start_screen": model.start_screen,
        "screens": [
            {
                "id": s.id,
                "title": s.title,
                "dimensions": list(s.dimensions),
                "is_loading_stub": s.is_loading_stub,
                "requires_login": s.requires_login,
                "objects": [_object_to_dict(o) for o in s.objects],
                "transitions": [
                    {
                        "trigger": {"object": t.trigger_object, "action": t.trigger_action},
                        "target": t.target,
                        "guards": list(t.guards),
                    }
                    for t in s.transitions
                ],
            }
            for s in model.screens
        ],
        "popups": [
            {
                "id": p.id,
                "title": p.title,
                "body_text": p.body_text,
                "buttons": [{"text": b.text, "effect": b.effect} for b in p.buttons],
                "trigger": {
                    "screen": p.screen,
                    "fire_on_nth_action": p.fire_on_nth_action,
                    "one_shot": p.one_shot,
                },
            }
            for p in model.popups
        ],
        "load_failure": {
            "probability": model.load_failure.probability,
            "screens": list(model.load_failure.screens),
        },
        "login_screen": None
        if model.login_screen is None
        else {
            "screen": model.login_screen.screen,
            "username_field": model.login_screen.username_field,
            "password_field": model.login_screen.password_field,
            "submit": model.login_screen.submit,
            "username": model.login_screen.username,
            "password": model.login_screen.password,
            "expire_after_actions": model.login_screen.expire_after_actions,
        },
    }


def dump_model(model: AppModel) -> str:
    return json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- session


@dataclass(frozen=True)
class ObjectView:
    id: str
    name: str
    obj_type: str
    parent_id: str | None
    parent_name: str
    text: str
    position: tuple[int, int]
    size: tuple[int, int]
    required: bool
    options: tuple[str, ...]
    value: str
    enabled: bool
    blocked: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "obj_type": self.obj_type,
            "parent_id": self.parent_id,
            "parent_name": self.parent_name,
            "text": self.text,
            "position": list(self.position),
            "size": list(self.size),
            "required": self.required,
            "options": list(self.options),
            "value": self.value,
            "enabled": self.enabled,
            "blocked": self.blocked,
        }


@dataclass(frozen=True)
class PopupView:
    id: str
    title: str
    body_text: str
    buttons: tuple[str, ...]


@dataclass(frozen=True)
class ScreenView:
    """What the current page exposes to the engine."""

    screen_id: str
    title: str
    dimensions: tuple[int, int]
    loading: bool
    objects: tuple[ObjectView, ...]
    popup: PopupView | None = None
    logged_in: bool = False

    def find(self, object_id: str) -> ObjectView | None:
        for o in self.objects:
            if o.id == object_id:
                return o
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "screen_id": self.screen_id,
            "title": self.title,
            "dimensions": list(self.dimensions),
            "loading": self.loading,
            "logged_in": self.logged_in,
            "objects": [o.to_dict() for o in self.objects],
            "popup": None
            if self.popup is None
            else {
                "id": self.popup.id,
                "title": self.popup.title,
                "body_text": self.popup.body_text,
                "buttons": list(self.popup.buttons),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def static_view(screen: Screen, values: dict[str, str] | None = None) -> ScreenView:
    """View of a screen straight from the model, ignoring runtime effects."""
    values = values or {}
    names = {o.id: o.name for o in screen.objects}
    objects = tuple(
        ObjectView(
            id=o.id,
            name=o.name,
            obj_type=o.obj_type,
            parent_id=o.parent_id,
            parent_name=names.get(o.parent_id, "") if o.parent_id else "",
            text=o.text,
            position=o.position,
            size=o.size,
            required=o.required,
            options=o.options,
            value=values.get(o.id, ""),
            enabled=o.enabled,
        )
        for o in screen.objects
        if o.visible
    )
    return ScreenView(screen.id, screen.title, screen.dimensions, False, objects)


@dataclass(frozen=True)
class ActionOutcome:
    status: str
    unmet: tuple[str, ...] = ()
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OK


@dataclass
class Snapshot:
    state: dict[str, Any]


@dataclass
class SimSession:
    model: AppModel
    seed: int
    current_screen: str = ""
    values: dict[str, dict[str, str]] = field(default_factory=dict)
    active_popup: str | None = None
    action_counter: int = 0
    logged_in: bool = False
    loading: bool = False
    screen_actions: dict[str, int] = field(default_factory=dict)
    fired_popups: list[str] = field(default_factory=list)
    return_to: str | None = None
    actions_since_login: int = 0
    rng: random.Random = field(default_factory=random.Random)

    # -- navigation

    def _enter(self, screen_id: str) -> None:
        model = self.model
        screen = model.screen(screen_id)
        login = model.login_screen
        if screen.requires_login and not self.logged_in and login is not None:
            self.return_to = screen_id
            screen = model.screen(login.screen)
        self.current_screen = screen.id
        self.loading = screen.is_loading_stub
        lf = model.load_failure
        if not self.loading and screen.id in lf.screens:
            self.loading = self.rng.random() < lf.probability

    def _screen(self) -> Screen:
        return self.model.screen(self.current_screen)

    # -- observation

    def observe(self) -> ScreenView:
        screen = self._screen()
        popup = None
        if self.active_popup is not None:
            spec = next(p for p in self.model.popups if p.id == self.active_popup)
            popup = PopupView(spec.id, spec.title, spec.body_text, tuple(b.text for b in spec.buttons))
        if self.loading:
            return ScreenView(screen.id, screen.title, screen.dimensions, True, (), popup, self.logged_in)
        base = static_view(screen, self.values.get(screen.id, {}))
        objects = base.objects
        if popup is not None:
            objects = tuple(replace(o, blocked=True) for o in objects)
        return ScreenView(screen.id, screen.title, screen.dimensions, False, objects, popup, self.logged_in)

    # -- actions

    def perform(self, verb: str, object_id: str | None = None, value: str | None = None) -> ActionOutcome:
        """Execute one user action. Verbs: click/enter/select/check on objects,
        ``open`` (value or object_id = screen id), ``refresh`` and ``popup``
        (value = button text)."""
        self.action_counter += 1
        if verb == "popup":
            return self._popup_click(value if value is not None else object_id or "")
        if self.active_popup is not None:
            return ActionOutcome(BLOCKED_BY_POPUP)
        if verb == "refresh":
            self._enter(self.current_screen)
            return ActionOutcome(LOAD_FAILURE if self.loading else OK)
        if verb == "open":
            target = value if value is not None else object_id
            if target is None or not self.model.has_screen(target):
                return ActionOutcome(NO_SUCH_OBJECT, message=f"no screen {target!r}")
            self._enter(target)
            return ActionOutcome(LOAD_FAILURE if self.loading else OK)
        if verb not in OBJECT_VERBS:
            return ActionOutcome(INVALID_ACTION, message=f"unknown verb {verb!r}")
        if self.loading:
            return ActionOutcome(LOAD_FAILURE)
        screen = self._screen()
        obj = screen.get(object_id) if object_id is not None else None
        if obj is None or not obj.visible:
            return ActionOutcome(NO_SUCH_OBJECT)

        count = self.screen_actions.get(screen.id, 0) + 1
        self.screen_actions[screen.id] = count
        for spec in self.model.popups:
            if spec.screen != screen.id:
                continue
            if spec.one_shot:
                fires = count == spec.fire_on_nth_action and spec.id not in self.fired_popups
            else:
                fires = count % spec.fire_on_nth_action == 0
            if fires:
                self.active_popup = spec.id
                self.fired_popups.append(spec.id)
                return ActionOutcome(BLOCKED_BY_POPUP)

        if obj.obj_type not in OBJECT_VERBS[verb] or not obj.enabled:
            return ActionOutcome(INVALID_ACTION, message=f"cannot {verb} a {obj.obj_type}")
        values = self.values.setdefault(screen.id, {})
        if verb == "enter":
            values[obj.id] = value or ""
        elif verb == "select":
            if value not in obj.options:
                return ActionOutcome(INVALID_ACTION, message=f"{value!r} is not an option")
            values[obj.id] = value
        elif verb == "check":
            if value not in ("on", "off"):
                return ActionOutcome(INVALID_ACTION, message="check expects on/off")
            values[obj.id] = "on" if value == "on" else ""
        elif obj.obj_type == "checkbox":
            values[obj.id] = "" if values.get(obj.id) else "on"

        self._tick_login()
        return self._fire_transitions(screen, obj, verb)

    def _fire_transitions(self, screen: Screen, obj: UIObject, verb: str) -> ActionOutcome:
        login = self.model.login_screen
        if login is not None and screen.id == login.screen and obj.id == login.submit and verb == "click":
            values = self.values.get(screen.id, {})
            if values.get(login.username_field) == login.username and values.get(login.password_field) == login.password:
                self.logged_in = True
                self.actions_since_login = 0
                if self.return_to is not None:
                    target, self.return_to = self.return_to, None
                    self._enter(target)
                    return ActionOutcome(LOAD_FAILURE if self.loading else OK)
            else:
                return ActionOutcome(OK, message="login rejected")
        for t in screen.transitions:
            if t.trigger_object != obj.id or t.trigger_action != verb:
                continue
            values = self.values.get(screen.id, {})
            unmet = tuple(g for g in t.guards if not values.get(g))
            if unmet:
                return ActionOutcome(GUARD_UNSATISFIED, unmet=unmet)
            self._enter(t.target)
            return ActionOutcome(LOAD_FAILURE if self.loading else OK)
        return ActionOutcome(OK)

    def _tick_login(self) -> None:
        login = self.model.login_screen
        if login is None or not self.logged_in or login.expire_after_actions is None:
            return
        self.actions_since_login += 1
        if self.actions_since_login >= login.expire_after_actions:
            self.logged_in = False

    def _popup_click(self, text: str) -> ActionOutcome:
        if self.active_popup is None:
            return ActionOutcome(INVALID_ACTION, message="no active popup")
        spec = next(p for p in self.model.popups if p.id == self.active_popup)
        for b in spec.buttons:
            if b.text.lower() == text.lower():
                self.active_popup = None
                if b.effect == "abort":
                    self._enter(self.model.start_screen)
                return ActionOutcome(OK)
        return ActionOutcome(NO_SUCH_OBJECT, message=f"popup has no button {text!r}")

    # -- state capture

    _STATE_FIELDS = (
        "current_screen",
        "values",
        "active_popup",
        "action_counter",
        "logged_in",
        "loading",
        "screen_actions",
        "fired_popups",
        "return_to",
        "actions_since_login",
    )

    def snapshot(self) -> Snapshot:
        state = {name: copy.deepcopy(getattr(self, name)) for name in self._STATE_FIELDS}
        state["rng"] = self.rng.getstate()
        return Snapshot(state)

    def restore(self, snap: Snapshot) -> None:
        for name in self._STATE_FIELDS:
            setattr(self, name, copy.deepcopy(snap.state[name]))
        self.rng.setstate(snap.state["rng"])

    def value_of(self, object_id: str) -> str:
        return self.values.get(self.current_screen, {}).get(object_id, "")


def start_session(model: AppModel, seed: int) -> SimSession:
    session = SimSession(model=model, seed=seed, rng=random.Random(seed))
    session._enter(model.start_screen)
    return session


# ---------------------------------------------------------------- mutations


@dataclass(frozen=True)
class MutationOp:
    kind: str
    target: str
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "target": self.target, "payload": self.payload}


def load_mutations(document: str | list[Any]) -> list[MutationOp]:
    data = json.loads(document) if isinstance(document, str) else document
    if not isinstance(data, list):
        raise ModelParseError("mutation script must be a list", "$")
    ops = []
    for i, item in enumerate(data):
        r = _Reader(item, f"$[{i}]")
        kind = r.str("kind")
        if kind not in MUTATION_KINDS:
            raise r.fail(f"unknown mutation kind {kind!r}", "kind")
        payload = item.get("payload", {})
        if not isinstance(payload, dict):
            raise r.fail("expected an object", "payload")
        ops.append(MutationOp(kind, r.str("target"), payload))
    return ops


def bump_version(version: str) -> str:
    m = re.fullmatch(r"(.*?)(\d+)", version)
    if m:
        return f"{m.group(1)}{int(m.group(2)) + 1}"
    return f"{version}.1"


def _locate(model: AppModel, target: str) -> tuple[Screen, UIObject]:
    """Resolve ``screen/object`` or a bare object id that is unique across the model."""
    if "/" in target:
        sid, oid = target.split("/", 1)
        if model.has_screen(sid):
            obj = model.screen(sid).get(oid)
            if obj is not None:
                return model.screen(sid), obj
        raise MutationError(f"unknown target {target!r}")
    hits = [(s, o) for s in model.screens for o in s.objects if o.id == target]
    if not hits:
        raise MutationError(f"unknown target {target!r}")
    if len(hits) > 1:
        raise MutationError(f"target {target!r} is ambiguous; use screen/object")
    return hits[0]


def _with_screen(model: AppModel, screen: Screen, **changes: Any) -> AppModel:
    if "screens" in changes:
        return replace(model, **changes)
    new = replace(screen, **changes) if changes else screen
    return replace(model, screens=tuple(new if s.id == screen.id else s for s in model.screens))


def _with_object(model: AppModel, screen: Screen, obj: UIObject) -> AppModel:
    objects = tuple(obj if o.id == obj.id else o for o in screen.objects)
    return _with_screen(model, screen, objects=objects)


def apply_mutation(model: AppModel, op: MutationOp) -> AppModel:
    """Return a mutated copy of ``model`` with a bumped version."""
    p = op.payload
    kind = op.kind
    if kind == "rename_object":
        screen, obj = _locate(model, op.target)
        changes: dict[str, Any] = {"name": p["name"]}
        if "text" in p:
            changes["text"] = p["text"]
        new = _with_object(model, screen, replace(obj, **changes))
    elif kind == "retype_object":
        screen, obj = _locate(model, op.target)
        obj_type = p["obj_type"]
        if obj_type not in OBJ_TYPES:
            raise MutationError(f"unknown obj_type {obj_type!r}")
        options = tuple(p.get("options", obj.options if obj_type in SELECT_TYPES else ()))
        new = _with_object(model, screen, replace(obj, obj_type=obj_type, options=options))
    elif kind == "reparent_object":
        screen, obj = _locate(model, op.target)
        new = _with_object(model, screen, replace(obj, parent_id=p.get("parent_id")))
    elif kind == "move_object":
        screen, obj = _locate(model, op.target)
        if "position" in p:
            pos = tuple(p["position"])
        else:
            pos = (obj.position[0] + p.get("dx", 0), obj.position[1] + p.get("dy", 0))
        new = _with_object(model, screen, replace(obj, position=pos))
    elif kind == "delete_object":
        screen, obj = _locate(model, op.target)
        objects = tuple(
            replace(o, parent_id=obj.parent_id) if o.parent_id == obj.id else o
            for o in screen.objects
            if o.id != obj.id
        )
        transitions = tuple(
            replace(t, guards=tuple(g for g in t.guards if g != obj.id))
            for t in screen.transitions
            if t.trigger_object != obj.id
        )
        new = _with_screen(model, screen, objects=objects, transitions=transitions)
    elif kind == "add_object":
        if not model.has_screen(op.target):
            raise MutationError(f"unknown screen {op.target!r}")
        screen = model.screen(op.target)
        obj = _parse_object(_Reader(p["object"], "payload.object"))
        if screen.get(obj.id) is not None:
            raise MutationError(f"object {obj.id!r} already exists on {screen.id!r}")
        guard = p.get("guard", obj.required)
        guarded = p.get("guard_transitions")
        transitions = screen.transitions
        if guard:
            transitions = tuple(
                replace(t, guards=t.guards + (obj.id,))
                if guarded is None or t.trigger_object in guarded
                else t
                for t in transitions
            )
        new = _with_screen(model, screen, objects=screen.objects + (obj,), transitions=transitions)
    elif kind == "add_select_option":
        screen, obj = _locate(model, op.target)
        if obj.obj_type not in SELECT_TYPES:
            raise MutationError(f"{op.target!r} is not a select")
        option = p["option"]
        if option in obj.options:
            raise MutationError(f"{op.target!r} already has option {option!r}")
        new = _with_object(model, screen, replace(obj, options=obj.options + (option,)))
    elif kind == "add_popup":
        data = dict(p["popup"])
        data.setdefault("trigger", {})
        data["trigger"] = {"screen": op.target, **data["trigger"]}
        popup = _parse_popup(_Reader(data, "payload.popup"))
        if any(x.id == popup.id for x in model.popups):
            raise MutationError(f"popup {popup.id!r} already exists")
        new = replace(model, popups=model.popups + (popup,))
    elif kind == "set_load_failure":
        if not model.has_screen(op.target):
            raise MutationError(f"unknown screen {op.target!r}")
        screens = model.load_failure.screens
        if op.target not in screens:
            screens = screens + (op.target,)
        new = replace(model, load_failure=LoadFailure(float(p["probability"]), screens))
    else:
        raise MutationError(f"unknown mutation kind {kind!r}")
    new = replace(new, version=p.get("version", bump_version(model.version)))
    try:
        validate_model(new)
    except ModelError as exc:
        raise MutationError(f"{kind} on {op.target!r} breaks the model: {exc}") from exc
    return new


def apply_mutations(model: AppModel, ops: Iterable[MutationOp]) -> AppModel:
    for op in ops:
        model = apply_mutation(model, op)
    return model
