"""Object repository: logical test-side names mapped to identifying attributes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from .model import ObjectView, ScreenView, bump_version

ATTRIBUTE_KEYS = ("name", "obj_type", "parent_name", "text", "position", "size")


class RepositoryError(ValueError):
    pass


class AmbiguousObjectError(LookupError):
    def __init__(self, logical_name: str, candidates: list[str]) -> None:
        self.logical_name = logical_name
        self.candidates = candidates
        super().__init__(f"{logical_name!r} matches {len(candidates)} objects: {', '.join(candidates)}")


@dataclass(frozen=True)
class ObjectDescriptor:
    logical_name: str
    attributes: Mapping[str, Any]
    weights: Mapping[str, float] | None = None

    def __post_init__(self) -> None:
        if not self.attributes:
            raise RepositoryError(f"{self.logical_name!r}: empty attribute set")
        for key in self.attributes:
            if key not in ATTRIBUTE_KEYS:
                raise RepositoryError(f"{self.logical_name!r}: unknown attribute {key!r}")
        for key, w in (self.weights or {}).items():
            if key not in self.attributes:
                raise RepositoryError(f"{self.logical_name!r}: weight for unspecified attribute {key!r}")
            if w < 0:
                raise RepositoryError(f"{self.logical_name!r}: negative weight for {key!r}")

    @property
    def obj_type(self) -> str | None:
        return self.attributes.get("obj_type")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"attributes": _plain(self.attributes)}
        if self.weights:
            out["weights"] = dict(self.weights)
        return out


def _plain(attrs: Mapping[str, Any]) -> dict[str, Any]:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in attrs.items()}


def _normalize(attrs: Mapping[str, Any]) -> dict[str, Any]:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in attrs.items()}


@dataclass(frozen=True)
class Repository:
    entries: Mapping[str, ObjectDescriptor] = field(default_factory=dict)
    version: str = "1"

    def __contains__(self, logical_name: object) -> bool:
        return logical_name in self.entries

    def __getitem__(self, logical_name: str) -> ObjectDescriptor:
        return self.entries[logical_name]

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, logical_name: str) -> ObjectDescriptor | None:
        return self.entries.get(logical_name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "entries": {name: d.to_dict() for name, d in self.entries.items()},
        }


def _reject_duplicates(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in pairs:
        if key in out:
            raise RepositoryError(f"duplicate key {key!r}")
        out[key] = value
    return out


def load_repository(document: str | bytes | Mapping[str, Any]) -> Repository:
    if isinstance(document, Mapping):
        data = document
    else:
        try:
            data = json.loads(document, object_pairs_hook=_reject_duplicates)
        except json.JSONDecodeError as exc:
            raise RepositoryError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, Mapping) or not isinstance(data.get("entries"), Mapping):
        raise RepositoryError("repository document needs an 'entries' object")
    entries = {}
    for name, record in data["entries"].items():
        if not name:
            raise RepositoryError("empty logical name")
        if not isinstance(record, Mapping) or not isinstance(record.get("attributes"), Mapping):
            raise RepositoryError(f"{name!r}: expected {{'attributes': {{...}}}}")
        entries[name] = ObjectDescriptor(name, _normalize(record["attributes"]), record.get("weights"))
    return Repository(entries, str(data.get("version", "1")))


def dump_repository(repo: Repository) -> str:
    return json.dumps(repo.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def descriptor_for(view_obj: ObjectView, keys: tuple[str, ...] = ATTRIBUTE_KEYS) -> dict[str, Any]:
    """Attribute set describing a concrete object, restricted to ``keys``."""
    full = {
        "name": view_obj.name,
        "obj_type": view_obj.obj_type,
        "parent_name": view_obj.parent_name,
        "text": view_obj.text,
        "position": tuple(view_obj.position),
        "size": tuple(view_obj.size),
    }
    return {k: full[k] for k in keys}


def matches_exactly(descriptor: ObjectDescriptor, obj: ObjectView) -> bool:
    actual = descriptor_for(obj)
    return all(actual[k] == (tuple(v) if isinstance(v, list) else v) for k, v in descriptor.attributes.items())


def resolve_exact(view: ScreenView, descriptor: ObjectDescriptor) -> ObjectView | None:
    """Unique visible object matching every attribute of ``descriptor``.

    Returns None when nothing matches; raises AmbiguousObjectError on more than one hit.
    """
    hits = [o for o in view.objects if matches_exactly(descriptor, o)]
    if len(hits) > 1:
        raise AmbiguousObjectError(descriptor.logical_name, [o.id for o in hits])
    return hits[0] if hits else None


def apply_repo_patch(repo: Repository, logical_name: str, new_attributes: Mapping[str, Any]) -> Repository:
    """Merge ``new_attributes`` into an entry; a value of None drops that attribute."""
    if logical_name not in repo.entries:
        raise RepositoryError(f"unknown logical name {logical_name!r}")
    old = repo.entries[logical_name]
    attrs = dict(old.attributes)
    for k, v in _normalize(new_attributes).items():
        if v is None:
            attrs.pop(k, None)
        else:
            attrs[k] = v
    weights = {k: w for k, w in (old.weights or {}).items() if k in attrs} or None
    entries = dict(repo.entries)
    entries[logical_name] = ObjectDescriptor(logical_name, attrs, weights)
    return Repository(entries, bump_version(repo.version))


def with_entry(repo: Repository, descriptor: ObjectDescriptor, bump: bool = True) -> Repository:
    entries = dict(repo.entries)
    entries[descriptor.logical_name] = descriptor
    return Repository(entries, bump_version(repo.version) if bump else repo.version)


def without_entry(repo: Repository, logical_name: str) -> Repository:
    if logical_name not in repo.entries:
        raise RepositoryError(f"unknown logical name {logical_name!r}")
    entries = {k: v for k, v in repo.entries.items() if k != logical_name}
    return Repository(entries, bump_version(repo.version))
