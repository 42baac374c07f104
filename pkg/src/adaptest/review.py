"""Post-run review: tester decisions on recovery events feed the knowledge base
and, for accepted adaptations, patches to the repository and scripts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .engine import RunReport
from .maintainer import PatchOutcome, ScriptPatch, apply_patches, step_target
from .model import AppModel
from .recovery import (
    ACCEPTED,
    REJECTED,
    KnowledgeBase,
    KnowledgeBaseError,
    PopupDefinition,
    RecoveryEvent,
    set_popup_confidence,
    with_decision,
)
from .dsl import TestScript
from .repo import Repository


class ReviewError(ValueError):
    pass


def record_decision(
    kb: KnowledgeBase,
    event: RecoveryEvent,
    decision: str,
    repo: Repository | None = None,
) -> tuple[KnowledgeBase, list[ScriptPatch]]:
    """Store a decision; accepted adaptations also yield patch proposals."""
    if not event.key:
        raise KnowledgeBaseError("event has no decision key")
    new = with_decision(kb, event.key, decision)
    proposals: list[ScriptPatch] = []
    if decision != ACCEPTED:
        return new, proposals
    detail = event.detail
    if event.strategy == "fuzzy_rebind" and repo is not None:
        logical = detail["logical_name"]
        if logical in repo:
            wanted = repo[logical].attributes
            attrs = {k: v for k, v in detail["candidate_attributes"].items() if k in wanted}
            proposals.append(
                ScriptPatch(
                    "update_repo_descriptor",
                    logical,
                    {"attributes": attrs},
                    f"accepted rebind of {logical} to {detail['candidate_name']} on {detail['screen']}",
                )
            )
    elif event.strategy == "fill_required_field":
        for f in detail.get("fields", []):
            obj_type = f["descriptor"]["obj_type"]
            verb = "select" if obj_type in ("listbox", "combobox") else "check" if obj_type == "checkbox" else "enter"
            payload = {"step": {"verb": verb, "object": f["logical_name"], "args": [f["value"]]}}
            if repo is None or f["logical_name"] not in repo:
                payload["descriptor"] = {"logical_name": f["logical_name"], "attributes": f["descriptor"]}
            proposals.append(
                ScriptPatch(
                    "add_step",
                    step_target(event.script_id, event.step),
                    payload,
                    f"accepted fill of required {f['logical_name']} before step {event.step}",
                )
            )
    elif event.strategy == "popup_resolution" and "definition" in detail:
        existing = next((d for d in new.popup_definitions if d.id == detail["definition"]), None)
        learned = detail.get("learned_definition")
        definition = existing or (PopupDefinition(**learned) if learned else None)
        if definition is not None:
            new = set_popup_confidence(new, definition, 1.0)
    return new, proposals


@dataclass
class ReviewOutcome:
    kb: KnowledgeBase
    proposals: list[ScriptPatch] = field(default_factory=list)
    patches: PatchOutcome | None = None


def review(
    report: RunReport,
    decisions: Iterable[tuple[str, str]],
    kb: KnowledgeBase,
    repo: Repository | None = None,
    scripts: Sequence[TestScript] = (),
    model: AppModel | None = None,
    apply: bool = False,
) -> ReviewOutcome:
    """Apply ``(key, "accept"|"reject")`` decisions to pending report events."""
    chosen: dict[str, str] = {}
    for key, verdict in decisions:
        verdict = {"accept": ACCEPTED, "reject": REJECTED}.get(verdict, verdict)
        if verdict not in (ACCEPTED, REJECTED):
            raise ReviewError(f"{key}: decision must be accept or reject")
        if key in chosen and chosen[key] != verdict:
            raise ReviewError(f"{key}: both accepted and rejected")
        chosen[key] = verdict
    pending = set(report.pending_decisions)
    for key in chosen:
        if key not in pending:
            raise ReviewError(f"{key}: not a pending decision in this report")
    events = {e.key: e for e in report.events}

    new = kb.copy()
    known = {d.id for d in new.popup_definitions}
    for d in report.learned_popups:
        if d.id not in known:
            new.popup_definitions.append(d)
    proposals: list[ScriptPatch] = []
    for key, verdict in chosen.items():
        new, props = record_decision(new, events[key], verdict, repo)
        proposals.extend(props)
    outcome = ReviewOutcome(new, proposals)
    if apply and proposals:
        if repo is None:
            raise ReviewError("applying patches needs the repository")
        outcome.patches = apply_patches(proposals, [p.key for p in proposals], scripts, repo, model)
    return outcome
