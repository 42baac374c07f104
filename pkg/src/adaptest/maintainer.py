"""Script maintenance from UI model changes.

Two model versions are compared object by object; the resulting diff drives
patch proposals against scripts and the repository, which the test owner
confirms before they are applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

from .dsl import Step, TestScript, has_errors, validate
from .matching import SimilarityConfig, object_similarity, rank_key
from .model import SELECT_TYPES, AppModel, ObjectView, static_view
from .repo import (
    AmbiguousObjectError,
    ObjectDescriptor,
    Repository,
    apply_repo_patch,
    descriptor_for,
    matches_exactly,
    resolve_exact,
    with_entry,
)
from .testgen import BUILTIN_HEURISTICS, ValueHeuristic, fill_step_for, heuristic_value
from .util import detail_hash

DEFAULT_DIFF_THRESHOLD = 0.6
PATCH_KINDS = ("rename_ref", "remove_step", "add_step", "add_option_script", "update_repo_descriptor")
_COMPARED = ("name", "obj_type", "parent_name", "text", "position", "size", "required", "options", "enabled")


class PatchError(ValueError):
    def __init__(self, patch_key: str, message: str) -> None:
        self.patch_key = patch_key
        super().__init__(f"{patch_key}: {message}")


@dataclass(frozen=True)
class ObjectRef:
    screen: str
    id: str
    name: str
    obj_type: str

    @classmethod
    def of(cls, screen: str, obj: ObjectView) -> "ObjectRef":
        return cls(screen, obj.id, obj.name, obj.obj_type)

    def to_dict(self) -> dict[str, Any]:
        return {"screen": self.screen, "id": self.id, "name": self.name, "obj_type": self.obj_type}


@dataclass(frozen=True)
class ObjectChange:
    old: ObjectRef
    new: ObjectRef
    score: float
    changed: tuple[str, ...]
    added_options: tuple[str, ...] = ()
    removed_options: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "old": self.old.to_dict(),
            "new": self.new.to_dict(),
            "score": self.score,
            "changed": list(self.changed),
            "added_options": list(self.added_options),
            "removed_options": list(self.removed_options),
        }


@dataclass
class ModelDiff:
    old_version: str
    new_version: str
    renamed: list[ObjectChange] = field(default_factory=list)
    changed: list[ObjectChange] = field(default_factory=list)
    deleted: list[ObjectRef] = field(default_factory=list)
    added: list[ObjectRef] = field(default_factory=list)
    unchanged: list[tuple[ObjectRef, ObjectRef]] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.renamed or self.changed or self.deleted or self.added)

    def to_dict(self) -> dict[str, Any]:
        return {
            "versions": [self.old_version, self.new_version],
            "renamed": [c.to_dict() for c in self.renamed],
            "changed": [c.to_dict() for c in self.changed],
            "deleted": [r.to_dict() for r in self.deleted],
            "added": [r.to_dict() for r in self.added],
            "unchanged": len(self.unchanged),
        }


def _full_descriptor(obj: ObjectView) -> ObjectDescriptor:
    return ObjectDescriptor(obj.name, descriptor_for(obj))


def _compare(screen: str, old: ObjectView, new: ObjectView, score: float) -> ObjectChange | None:
    changed = tuple(k for k in _COMPARED if getattr(old, k) != getattr(new, k))
    if not changed:
        return None
    return ObjectChange(
        ObjectRef.of(screen, old),
        ObjectRef.of(screen, new),
        score,
        changed,
        tuple(o for o in new.options if o not in old.options),
        tuple(o for o in old.options if o not in new.options),
    )


def diff_models(
    old: AppModel,
    new: AppModel,
    threshold: float = DEFAULT_DIFF_THRESHOLD,
    config: SimilarityConfig | None = None,
) -> ModelDiff:
    """Classify every object of both versions as unchanged, renamed, changed, deleted or added."""
    config = config or SimilarityConfig()
    diff = ModelDiff(old.version, new.version)

    def record(screen: str, a: ObjectView, b: ObjectView, score: float) -> None:
        change = _compare(screen, a, b, score)
        if change is None:
            diff.unchanged.append((ObjectRef.of(screen, a), ObjectRef.of(screen, b)))
        elif "name" in change.changed:
            diff.renamed.append(change)
        else:
            diff.changed.append(change)

    new_ids = set(new.screen_ids)
    for old_screen in old.screens:
        old_view = static_view(old_screen)
        if old_screen.id not in new_ids:
            diff.deleted.extend(ObjectRef.of(old_screen.id, o) for o in old_view.objects)
            continue
        new_view = static_view(new.screen(old_screen.id))
        sid = old_screen.id
        old_left = [o for o in old_view.objects if new_view.find(o.id) is None]
        new_left = [o for o in new_view.objects if old_view.find(o.id) is None]
        for o in old_view.objects:
            match = new_view.find(o.id)
            if match is not None:
                score = object_similarity(_full_descriptor(o), match, config, new_view.dimensions).overall
                record(sid, o, match, score)
        scored = []
        for o in old_left:
            descriptor = _full_descriptor(o)
            for n in new_left:
                result = object_similarity(descriptor, n, config, new_view.dimensions)
                if result.overall >= threshold:
                    scored.append((rank_key(result), o.id, o, n, result.overall))
        scored.sort(key=lambda item: (item[0], item[1]))
        used_old: set[str] = set()
        used_new: set[str] = set()
        for _, _, o, n, score in scored:
            if o.id in used_old or n.id in used_new:
                continue
            used_old.add(o.id)
            used_new.add(n.id)
            record(sid, o, n, score)
        diff.deleted.extend(ObjectRef.of(sid, o) for o in old_left if o.id not in used_old)
        diff.added.extend(ObjectRef.of(sid, n) for n in new_left if n.id not in used_new)
    old_ids = set(old.screen_ids)
    for new_screen in new.screens:
        if new_screen.id not in old_ids:
            diff.added.extend(ObjectRef.of(new_screen.id, o) for o in static_view(new_screen).objects)
    return diff


# ---------------------------------------------------------------- patches


@dataclass
class ScriptPatch:
    kind: str
    target: str
    payload: dict[str, Any]
    rationale: str
    status: str = "pending"

    @property
    def key(self) -> str:
        return f"{self.kind}:{self.target}:{detail_hash(self.payload)}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.key,
            "kind": self.kind,
            "target": self.target,
            "payload": self.payload,
            "rationale": self.rationale,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScriptPatch":
        return cls(data["kind"], data["target"], dict(data["payload"]), data.get("rationale", ""), data.get("status", "pending"))


def step_target(script_id: str, index: int) -> str:
    return f"{script_id}#{index}"


def _split_target(target: str) -> tuple[str, int]:
    script_id, _, index = target.rpartition("#")
    return script_id, int(index)


@dataclass(frozen=True)
class TracedStep:
    screen: str
    object_id: str | None


def trace_script(script: TestScript, repo: Repository, model: AppModel) -> list[TracedStep]:
    """Statically follow a script through the model: the screen each step runs
    on and the object it binds to (None when unresolved)."""
    current = model.start_screen
    out = []
    for step in script.steps:
        view = static_view(model.screen(current))
        obj = None
        descriptor = repo.get(step.object_ref or "") if step.object_ref else None
        if descriptor is not None:
            try:
                obj = resolve_exact(view, descriptor)
            except AmbiguousObjectError:
                obj = None
        out.append(TracedStep(current, obj.id if obj else None))
        if step.verb == "open" and step.args and model.has_screen(step.args[0]):
            current = step.args[0]
        elif obj is not None:
            screen = model.screen(current)
            for t in screen.transitions:
                if t.trigger_object == obj.id and t.trigger_action == step.verb:
                    current = t.target
                    break
    return out


def _descriptor_update(descriptor: ObjectDescriptor, new: ObjectView) -> dict[str, Any]:
    actual = descriptor_for(new)
    return {
        k: (list(actual[k]) if isinstance(actual[k], tuple) else actual[k])
        for k in descriptor.attributes
        if (tuple(descriptor.attributes[k]) if isinstance(descriptor.attributes[k], list) else descriptor.attributes[k])
        != actual[k]
    }


def propose_patches(
    diff: ModelDiff,
    scripts: Sequence[TestScript],
    repo: Repository,
    old: AppModel,
    new: AppModel,
    heuristics: Sequence[ValueHeuristic] = BUILTIN_HEURISTICS,
) -> list[ScriptPatch]:
    """Turn a model diff into pending patches for the scripts and repository."""
    patches: list[ScriptPatch] = []
    traces = {s.id: trace_script(s, repo, old) for s in scripts}

    def bound(screen: str, object_id: str) -> list[str]:
        """Logical names that resolve to the object in the old model."""
        view = static_view(old.screen(screen))
        names = []
        for name, d in repo.entries.items():
            try:
                hit = resolve_exact(view, d)
            except AmbiguousObjectError:
                continue
            if hit is not None and hit.id == object_id:
                names.append(name)
        return names

    for change in diff.renamed + diff.changed:
        new_obj = static_view(new.screen(change.new.screen)).find(change.new.id)
        for logical in bound(change.old.screen, change.old.id):
            update = _descriptor_update(repo[logical], new_obj)
            if not update:
                continue
            payload: dict[str, Any] = {"attributes": update}
            rename = "name" in change.changed and logical == change.old.name and change.new.name not in repo
            if rename:
                payload["new_logical_name"] = change.new.name
            patches.append(
                ScriptPatch(
                    "update_repo_descriptor",
                    logical,
                    payload,
                    f"{change.old.name} on {change.old.screen} changed ({', '.join(change.changed)}) "
                    f"in {diff.new_version}; match score {change.score:.3f}",
                )
            )
            if rename:
                for script in scripts:
                    for step in script.steps:
                        if step.object_ref == logical:
                            patches.append(
                                ScriptPatch(
                                    "rename_ref",
                                    step_target(script.id, step.index),
                                    {"old": logical, "new": change.new.name},
                                    f"{logical} was renamed to {change.new.name}",
                                )
                            )
        if change.added_options:
            patches.extend(_option_patches(change, scripts, traces, heuristics))

    for ref in diff.deleted:
        for script in scripts:
            for step, trace in zip(script.steps, traces[script.id]):
                if trace.screen == ref.screen and trace.object_id == ref.id:
                    patches.append(
                        ScriptPatch(
                            "remove_step",
                            step_target(script.id, step.index),
                            {"step": _step_payload(step)},
                            f"{ref.name} was deleted from {ref.screen} in {diff.new_version}",
                        )
                    )

    for ref in diff.added:
        if not new.has_screen(ref.screen):
            continue
        screen = new.screen(ref.screen)
        obj = static_view(screen).find(ref.id)
        if obj is None or not obj.required or obj.obj_type not in {"textfield", "password_field", "checkbox"} | SELECT_TYPES:
            continue
        guarded = {(t.trigger_object, t.trigger_action) for t in screen.transitions if ref.id in t.guards}
        logical = next((n for n, d in repo.entries.items() if matches_exactly(d, obj)), obj.name)
        value = heuristic_value(obj, heuristics).valid
        new_step = fill_step_for(obj, logical, value)
        for script in scripts:
            for step, trace in zip(script.steps, traces[script.id]):
                if trace.screen == ref.screen and (trace.object_id, step.verb) in guarded:
                    payload = {"step": _step_payload(new_step)}
                    if logical not in repo:
                        payload["descriptor"] = {
                            "logical_name": logical,
                            "attributes": descriptor_for(obj, ("name", "obj_type", "parent_name")),
                        }
                    patches.append(
                        ScriptPatch(
                            "add_step",
                            step_target(script.id, step.index),
                            payload,
                            f"required {obj.name} added to {ref.screen} in {diff.new_version}; "
                            f"it guards the transition fired at this step",
                        )
                    )
                    break
    return patches


def _step_payload(step: Step) -> dict[str, Any]:
    return {"verb": step.verb, "object": step.object_ref, "args": list(step.args)}


def _step_from_payload(data: Mapping[str, Any]) -> Step:
    return Step(0, data["verb"], data.get("object"), tuple(data.get("args", ())))


def _option_patches(
    change: ObjectChange,
    scripts: Sequence[TestScript],
    traces: Mapping[str, list[TracedStep]],
    heuristics: Sequence[ValueHeuristic],
) -> list[ScriptPatch]:
    patches = []
    exercised = [
        (script, step)
        for script in scripts
        for step, trace in zip(script.steps, traces[script.id])
        if step.verb == "select" and trace.screen == change.old.screen and trace.object_id == change.old.id
    ]
    if not exercised:
        return patches
    script, step = exercised[0]
    for option in change.added_options:
        patches.append(
            ScriptPatch(
                "add_option_script",
                step_target(script.id, step.index),
                {"option": option, "new_script": f"{script.name} [{option}]"},
                f"new option {option!r} on {change.new.name}; cloned from {script.id}, "
                f"which selects {step.args[0] if step.args else '?'!r}",
            )
        )
    return patches


@dataclass
class PatchOutcome:
    scripts: list[TestScript]
    repo: Repository
    patches: list[ScriptPatch]

    @property
    def applied(self) -> list[ScriptPatch]:
        return [p for p in self.patches if p.status == "applied"]

    @property
    def declined(self) -> list[ScriptPatch]:
        return [p for p in self.patches if p.status == "declined"]


def apply_patches(
    patches: Sequence[ScriptPatch],
    accepted: set[str] | Sequence[str],
    scripts: Sequence[TestScript],
    repo: Repository,
    model: AppModel | None = None,
) -> PatchOutcome:
    """Apply accepted patches as one batch; any validation error rolls back everything."""
    accepted = set(accepted)
    known = {p.key for p in patches}
    unknown = accepted - known
    if unknown:
        raise PatchError(sorted(unknown)[0], "not among the proposed patches")
    chosen = [p for p in patches if p.key in accepted]
    new_repo = repo
    for p in chosen:
        if p.kind == "update_repo_descriptor":
            if p.target not in new_repo:
                raise PatchError(p.key, f"unknown logical name {p.target!r}")
            new_repo = apply_repo_patch(new_repo, p.target, p.payload["attributes"])
            new_name = p.payload.get("new_logical_name")
            if new_name:
                descriptor = new_repo[p.target]
                entries = {(new_name if k == p.target else k): v for k, v in new_repo.entries.items()}
                entries[new_name] = ObjectDescriptor(new_name, descriptor.attributes, descriptor.weights)
                new_repo = Repository(entries, new_repo.version)
        elif p.kind == "add_step" and "descriptor" in p.payload:
            d = p.payload["descriptor"]
            if d["logical_name"] not in new_repo:
                new_repo = with_entry(new_repo, ObjectDescriptor(d["logical_name"], d["attributes"]))

    by_script: dict[str, list[ScriptPatch]] = {}
    for p in chosen:
        if p.kind in ("rename_ref", "remove_step", "add_step", "add_option_script"):
            by_script.setdefault(_split_target(p.target)[0], []).append(p)
    ids = {s.id for s in scripts}
    for sid in by_script:
        if sid not in ids:
            raise PatchError(by_script[sid][0].key, f"unknown script {sid!r}")

    out: list[TestScript] = []
    for script in scripts:
        mine = by_script.get(script.id, [])
        steps: list[Step | None] = list(script.steps)
        inserts: dict[int, list[Step]] = {}
        for p in mine:
            _, index = _split_target(p.target)
            if p.kind == "rename_ref":
                steps[index] = replace(steps[index], object_ref=p.payload["new"])
            elif p.kind == "remove_step":
                steps[index] = None
            elif p.kind == "add_step":
                inserts.setdefault(index, []).append(_step_from_payload(p.payload["step"]))
        merged: list[Step] = []
        for i, step in enumerate(steps):
            merged.extend(inserts.get(i, []))
            if step is not None:
                merged.append(step)
        patched = script.with_steps(merged) if mine else script
        out.append(patched)
        for p in mine:
            if p.kind == "add_option_script":
                _, index = _split_target(p.target)
                clone = list(patched.steps)
                # the select step may have shifted if other patches touched this script
                original = script.steps[index]
                pos = next(i for i, s in enumerate(clone) if s == replace(original, index=s.index))
                clone[pos] = replace(clone[pos], args=(p.payload["option"],))
                out.append(patched.renamed(p.payload["new_script"]).with_steps(clone))

    if model is not None:
        touched = {s.id for s in out} - {s.id for s in scripts} | set(by_script)
        for script in out:
            if script.id not in touched:
                continue
            issues = validate(script, new_repo, model)
            if has_errors(issues):
                culprit = next((p for p in chosen if _split_target(p.target)[0] == script.id), chosen[0])
                raise PatchError(culprit.key, f"script {script.id!r} no longer validates: {issues[0].message}")

    statuses = [replace(p, status="applied" if p.key in accepted else "declined") for p in patches]
    return PatchOutcome(out, new_repo, statuses)
