"""Line-oriented test-script language.

    test "signup basic"
    # comment
    enter "NameField" "Alice"
    click "SubmitButton"
    assert_screen "welcome"

Tokens are bare words or double-quoted strings with backslash escapes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

from .model import AppModel, static_view
from .repo import Repository, matches_exactly

OBJECT_VERBS = ("click", "enter", "select", "check", "assert_text", "assert_exists")
VERBS = OBJECT_VERBS + ("open", "assert_screen", "wait")
# args after the object reference
ARITY = {
    "open": 1,
    "click": 0,
    "enter": 1,
    "select": 1,
    "check": 1,
    "assert_screen": 1,
    "assert_text": 1,
    "assert_exists": 0,
    "wait": 1,
}
ALL_TYPES = frozenset(
    {"button", "textfield", "password_field", "listbox", "combobox", "checkbox", "link", "label"}
)
VERB_TYPES = {
    "click": frozenset({"button", "link", "checkbox"}),
    "enter": frozenset({"textfield", "password_field"}),
    "select": frozenset({"listbox", "combobox"}),
    "check": frozenset({"checkbox"}),
    "assert_text": frozenset({"label", "textfield", "link"}),
    "assert_exists": ALL_TYPES,
}
ISSUE_SEVERITY = {
    "unknown_object": "error",
    "invalid_verb_for_type": "error",
    "missing_parameter": "error",
    "extra_parameter": "error",
    "unknown_screen": "warning",
    "unreachable_object": "warning",
}


@dataclass(frozen=True)
class Step:
    index: int
    verb: str
    object_ref: str | None = None
    args: tuple[str, ...] = ()
    span: tuple[int, int] = field(default=(0, 0), compare=False)

    def to_dict(self) -> dict[str, Any]:
        return {"index": self.index, "verb": self.verb, "object": self.object_ref, "args": list(self.args)}


@dataclass(frozen=True)
class TestScript:
    __test__ = False  # not a pytest class

    id: str
    name: str
    steps: tuple[Step, ...]

    def with_steps(self, steps: list[Step] | tuple[Step, ...]) -> "TestScript":
        """Copy with ``steps`` renumbered densely from 0."""
        return replace(self, steps=tuple(replace(s, index=i) for i, s in enumerate(steps)))

    def renamed(self, name: str) -> "TestScript":
        return replace(self, id=name, name=name)


@dataclass(frozen=True)
class SyntaxIssue:
    line: int
    column: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}, column {self.column}: {self.message}"


class ScriptSyntaxError(ValueError):
    def __init__(self, errors: list[SyntaxIssue]) -> None:
        self.errors = errors
        super().__init__("; ".join(str(e) for e in errors))


@dataclass(frozen=True)
class ValidationIssue:
    severity: str
    kind: str
    step: int
    message: str
    span: tuple[int, int] = (0, 0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "severity": self.severity,
            "kind": self.kind,
            "step": self.step,
            "message": self.message,
            "line": self.span[0],
            "column": self.span[1],
        }


def _issue(kind: str, step: Step, message: str) -> ValidationIssue:
    return ValidationIssue(ISSUE_SEVERITY[kind], kind, step.index, message, step.span)


# ---------------------------------------------------------------- lexing


def _tokenize(line: str, lineno: int) -> list[tuple[str, int]]:
    """Split a line into (token, column) pairs; columns are 1-based."""
    tokens: list[tuple[str, int]] = []
    i, n = 0, len(line)
    while i < n:
        ch = line[i]
        if ch in " \t":
            i += 1
        elif ch == "#":
            break
        elif ch == '"':
            start = i
            i += 1
            buf = []
            while True:
                if i >= n:
                    raise ScriptSyntaxError([SyntaxIssue(lineno, start + 1, "unterminated string")])
                c = line[i]
                if c == "\\":
                    if i + 1 >= n:
                        raise ScriptSyntaxError([SyntaxIssue(lineno, i + 1, "dangling escape")])
                    buf.append(line[i + 1])
                    i += 2
                elif c == '"':
                    i += 1
                    break
                else:
                    buf.append(c)
                    i += 1
            tokens.append(("".join(buf), start + 1))
        else:
            start = i
            while i < n and line[i] not in ' \t"#':
                i += 1
            tokens.append((line[start:i], start + 1))
    return tokens


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


# ---------------------------------------------------------------- parse / serialize


def parse(text: str, *, lenient: bool = False) -> TestScript:
    """Parse script text. Raises ScriptSyntaxError listing every problem found.

    With ``lenient`` set, arity violations are kept in the returned script so
    ``validate`` can report them as missing/extra parameters.
    """
    errors: list[SyntaxIssue] = []
    name: str | None = None
    steps: list[Step] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        try:
            tokens = _tokenize(raw, lineno)
        except ScriptSyntaxError as exc:
            errors.extend(exc.errors)
            continue
        if not tokens:
            continue
        word, col = tokens[0]
        if name is None:
            if word != "test" or len(tokens) != 2:
                errors.append(SyntaxIssue(lineno, col, 'expected header: test "<name>"'))
                name = ""
            else:
                name = tokens[1][0]
            continue
        if word not in VERBS:
            errors.append(SyntaxIssue(lineno, col, f"unknown verb {word!r}"))
            continue
        rest = [t for t, _ in tokens[1:]]
        obj = None
        if word in OBJECT_VERBS:
            if not rest:
                errors.append(SyntaxIssue(lineno, col, f"{word} needs an object reference"))
                continue
            obj, rest = rest[0], rest[1:]
        if len(rest) != ARITY[word] and not lenient:
            errors.append(
                SyntaxIssue(lineno, col, f"{word} takes {ARITY[word]} argument(s), got {len(rest)}")
            )
            continue
        if word == "check" and len(rest) == 1 and rest[0] not in ("on", "off"):
            errors.append(SyntaxIssue(lineno, col, "check expects on or off"))
            continue
        if word == "wait" and len(rest) == 1 and not rest[0].isdigit():
            errors.append(SyntaxIssue(lineno, col, "wait expects a tick count"))
            continue
        steps.append(Step(len(steps), word, obj, tuple(rest), (lineno, col)))
    if name is None:
        errors.append(SyntaxIssue(1, 1, "empty script"))
    elif not steps and not errors:
        errors.append(SyntaxIssue(1, 1, "script has no steps"))
    if errors:
        raise ScriptSyntaxError(errors)
    return TestScript(name, name, tuple(steps))


def serialize_step(step: Step) -> str:
    parts = [step.verb]
    if step.object_ref is not None:
        parts.append(_quote(step.object_ref))
    parts.extend(_quote(a) for a in step.args)
    return " ".join(parts)


def serialize(script: TestScript) -> str:
    lines = [f"test {_quote(script.name)}"]
    lines.extend(serialize_step(s) for s in script.steps)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- validation


def validate(script: TestScript, repo: Repository, model: AppModel | None = None) -> list[ValidationIssue]:
    """Authoring-time checks against the repository and, optionally, the model."""
    issues: list[ValidationIssue] = []
    screens = set(model.screen_ids) if model is not None else None
    views = [static_view(s) for s in model.screens] if model is not None else []
    reported_unreachable: set[str] = set()
    for step in script.steps:
        expected = ARITY.get(step.verb)
        if expected is not None and len(step.args) < expected:
            issues.append(_issue("missing_parameter", step, f"{step.verb} expects {expected} argument(s)"))
        elif expected is not None and len(step.args) > expected:
            issues.append(_issue("extra_parameter", step, f"{step.verb} expects {expected} argument(s)"))
        if step.verb in ("open", "assert_screen") and screens is not None and step.args:
            if step.args[0] not in screens:
                issues.append(_issue("unknown_screen", step, f"no screen {step.args[0]!r} in model"))
        if step.verb not in OBJECT_VERBS:
            continue
        ref = step.object_ref or ""
        descriptor = repo.get(ref)
        if descriptor is None:
            issues.append(_issue("unknown_object", step, f"{ref!r} is not in the object repository"))
            continue
        obj_type = descriptor.obj_type
        if obj_type is not None and obj_type not in VERB_TYPES[step.verb]:
            issues.append(_issue("invalid_verb_for_type", step, f"cannot {step.verb} a {obj_type} ({ref!r})"))
        if model is not None and ref not in reported_unreachable:
            if not any(matches_exactly(descriptor, o) for v in views for o in v.objects):
                reported_unreachable.add(ref)
                issues.append(_issue("unreachable_object", step, f"{ref!r} matches no object in model {model.version}"))
    return issues


def has_errors(issues: list[ValidationIssue]) -> bool:
    return any(i.severity == "error" for i in issues)
