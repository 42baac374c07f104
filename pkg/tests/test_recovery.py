import json

import pytest

from adaptest import fixtures
from adaptest.config import EngineConfig, load_config
from adaptest.dsl import parse
from adaptest.engine import execute_script
from adaptest.matching import object_similarity
from adaptest.model import MutationOp, apply_mutation, start_session, static_view
from adaptest.recovery import (
    BUILTIN_POPUPS,
    CustomAction,
    KnowledgeBase,
    KnowledgeBaseError,
    PopupDefinition,
    RecoveryEvent,
    decision_key,
    detect_and_resolve_popup,
    dump_kb,
    load_kb,
    set_popup_confidence,
    with_decision,
)
from adaptest.util import canonical_json, fnv1a_64

from oracles import FNV1A_64_VECTORS, fnv1a_64_reference

BUY = '''test "buy"
select "CitiesDropDown" "Melbourne"
click "NextButton"
select "SizeBox" "Small"
click "AddToCartButton"
enter "EmailField" "a@b.co"
click "CheckoutButton"
assert_screen "confirm"
'''


def popup(title, body, buttons, dismiss=None, nth=1):
    dismiss = dismiss or buttons[0]
    return {
        "popup": {
            "id": title.lower().replace(" ", "-"),
            "title": title,
            "body_text": body,
            "buttons": [{"text": b, "effect": "dismiss" if b == dismiss else "abort"} for b in buttons],
            "trigger": {"fire_on_nth_action": nth},
        }
    }


def events_of(result):
    return [(e.step, e.strategy, e.outcome) for e in result.events]


@pytest.mark.parametrize("data,expected", FNV1A_64_VECTORS.items())
def test_fnv_vectors(data, expected):
    assert fnv1a_64(data) == expected


def test_decision_key_format():
    plan = {"logical_name": "Größe", "screen": "home", "candidate": "x"}
    canonical = json.dumps(plan, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    assert canonical_json(plan) == canonical
    expected = format(fnv1a_64_reference(canonical.encode("utf-8")), "016x")
    assert decision_key("s1", 3, "fuzzy_rebind", plan) == f"s1:3:fuzzy_rebind:{expected}"


def test_builtin_popup_resolved(store, store_repo):
    m = apply_mutation(store, MutationOp("add_popup", "home", popup("Security Certificate", "The security certificate has expired", ["Accept", "Cancel"])))
    result = execute_script(parse(BUY), m, store_repo)
    assert result.status == "recovered"
    (ev,) = result.events
    assert ev.strategy == "popup_resolution" and ev.outcome == "resumed"
    assert ev.detail["definition"] == "security-certificate"
    assert ev.detail["button"] == "Accept"
    assert result.learned_popups == []


def test_unknown_popup_learned_from_lexicon(store, store_repo):
    m = apply_mutation(store, MutationOp("add_popup", "home", popup("Newsletter", "Join us?", ["Sign up", "No thanks"], "No thanks")))
    result = execute_script(parse(BUY), m, store_repo)
    (ev,) = result.events
    assert ev.detail["button"] == "No thanks" and ev.detail["source"] == "lexicon"
    (learned,) = result.learned_popups
    assert learned.source == "learned" and learned.confidence == 0.5
    assert learned.id == ev.detail["definition"]


def test_learned_definition_reused_once_stored(store, store_repo):
    m = apply_mutation(store, MutationOp("add_popup", "home", popup("Newsletter", "Join us?", ["Sign up", "No thanks"], "No thanks")))
    first = execute_script(parse(BUY), m, store_repo)
    kb = KnowledgeBase(popup_definitions=list(BUILTIN_POPUPS) + first.learned_popups)
    second = execute_script(parse(BUY), m, store_repo, kb=kb)
    assert second.events[0].detail["source"] == "learned"
    assert second.learned_popups == []


def test_low_confidence_definition_ignored(store):
    m = apply_mutation(store, MutationOp("add_popup", "home", popup("Session Warning", "Your session is about to expire", ["OK", "Log out"])))
    s = start_session(m, 0)
    s.perform("click", "NextButton")
    weak = set_popup_confidence(KnowledgeBase(), BUILTIN_POPUPS[1], 0.2)
    ev, new_def = detect_and_resolve_popup(s, weak)
    assert ev.detail["source"] == "lexicon"
    assert new_def is not None


def test_popup_without_known_button_is_exhausted(store, store_repo):
    m = apply_mutation(store, MutationOp("add_popup", "home", popup("Survey", "Rate us", ["Maybe"])))
    result = execute_script(parse(BUY), m, store_repo)
    assert result.status == "failed"
    assert events_of(result) == [(0, "popup_resolution", "exhausted")]
    assert [s.status for s in result.steps][1:] == ["skipped"] * 6


def test_no_popup_no_event(store):
    assert detect_and_resolve_popup(start_session(store, 0), KnowledgeBase()) == (None, None)


def test_fuzzy_rebind_after_rename(store, store_repo):
    m = apply_mutation(store, MutationOp("rename_object", "CitiesDropDown", {"name": "CitiesList"}))
    result = execute_script(parse(BUY), m, store_repo)
    (ev,) = result.events
    assert ev.strategy == "fuzzy_rebind" and ev.outcome == "resumed"
    assert ev.detail["candidate"] == "CitiesDropDown"
    assert ev.detail["candidate_attributes"]["name"] == "CitiesList"
    assert ev.detail["score"] >= 0.65
    assert result.steps[0].status == "recovered"
    assert result.status == "recovered"


def test_claimed_objects_are_not_candidates(store, store_repo):
    # AgeField is close enough to EmailField's descriptor, but AgeField has its own entry
    cart = static_view(store.screen("cart"))
    assert object_similarity(store_repo["EmailField"], cart.find("AgeField"), dimensions=cart.dimensions).overall >= 0.65
    m = apply_mutation(store, MutationOp("delete_object", "cart/EmailField"))
    result = execute_script(parse(BUY), m, store_repo)
    step = result.steps[4]
    assert step.status == "failed"
    assert [e.strategy for e in step.events] == ["fuzzy_rebind"]
    assert "candidate" not in step.events[0].detail


def test_refresh_retry_recovers_some_seeds(store, store_repo):
    m = apply_mutation(store, MutationOp("set_load_failure", "product", {"probability": 0.5}))
    outcomes = set()
    for seed in range(20):
        result = execute_script(parse(BUY), m, store_repo, seed=seed)
        for e in result.events:
            assert e.strategy == "refresh_retry"
            outcomes.add(e.outcome)
            assert 1 <= e.detail["attempts"] <= 3
    assert "resumed" in outcomes


def test_refresh_retry_gives_up(store, store_repo):
    m = apply_mutation(store, MutationOp("set_load_failure", "product", {"probability": 1.0}))
    result = execute_script(parse(BUY), m, store_repo)
    assert events_of(result) == [(1, "refresh_retry", "exhausted")]
    assert result.events[0].detail["attempts"] == 3


def test_relogin(portal, portal_repo):
    config = load_config(fixtures.read("portal_config.json"))
    script = parse(next(fixtures.path("portal_suite").iterdir()).read_text())
    result = execute_script(script, portal, portal_repo, config)
    strategies = [(e.strategy, e.outcome) for e in result.events]
    assert strategies[-1] == ("relogin", "resumed")
    assert result.status == "recovered"


def test_relogin_with_wrong_password_is_exhausted(portal, portal_repo):
    config = EngineConfig(credentials={"username": "tester", "password": "wrong"})
    script = parse(next(fixtures.path("portal_suite").iterdir()).read_text())
    result = execute_script(script, portal, portal_repo, config)
    assert ("relogin", "exhausted") in [(e.strategy, e.outcome) for e in result.events]
    assert result.status == "failed"
    assert "s3cret" not in json.dumps([e.to_dict() for e in result.events])


def test_adjacent_exploration_finds_object(store, store_repo):
    script = parse('test "skip"\nselect "CitiesDropDown" "Sydney"\nselect "SizeBox" "Small"\n')
    result = execute_script(script, store, store_repo)
    ev = result.events[-1]
    assert ev.strategy == "adjacent_exploration" and ev.outcome == "resumed"
    assert ev.detail["path"] == ["Next"] and ev.detail["found_on"] == "product"
    assert result.status == "recovered"


def test_adjacent_exploration_restores_when_nothing_found(store, store_repo):
    script = parse('test "lost"\nclick "HomeLink"\n')
    result = execute_script(script, store, store_repo)
    ev = result.events[-1]
    assert ev.strategy == "adjacent_exploration" and ev.outcome == "exhausted"
    assert ev.detail["explored"] == ["product", "cart"][: len(ev.detail["explored"])]
    assert result.status == "failed"


def test_custom_action(store, store_repo):
    kb = KnowledgeBase(
        custom_actions=[CustomAction("go-product", {"screen": "home"}, ({"verb": "click", "object": "NextButton"},))]
    )
    config = EngineConfig(strategy_order=("custom",))
    script = parse('test "c"\nselect "SizeBox" "Small"\n')
    result = execute_script(script, store, store_repo, config, kb)
    assert events_of(result) == [(0, "custom", "resumed")]


def test_rejected_strategy_is_skipped(store, store_repo):
    m = apply_mutation(store, MutationOp("rename_object", "CitiesDropDown", {"name": "CitiesList"}))
    first = execute_script(parse(BUY), m, store_repo)
    kb = with_decision(KnowledgeBase(), first.events[0].key, "rejected")
    again = execute_script(parse(BUY), m, store_repo, kb=kb)
    ev = again.events[0]
    assert ev.key == first.events[0].key
    assert ev.outcome == "exhausted" and ev.decision == "rejected"
    assert "skipped" in ev.detail
    assert again.steps[0].status == "failed"


def test_accepted_decision_is_echoed(signup_v2, signup_repo, signup_suite):
    first = execute_script(signup_suite[0], signup_v2, signup_repo)
    kb = with_decision(KnowledgeBase(), first.events[0].key, "accepted")
    again = execute_script(signup_suite[0], signup_v2, signup_repo, kb=kb)
    assert again.events[0].decision == "accepted"
    assert again.status == "recovered"


def test_adaptive_off_has_no_events(store, store_repo):
    m = apply_mutation(store, MutationOp("rename_object", "CitiesDropDown", {"name": "CitiesList"}))
    result = execute_script(parse(BUY), m, store_repo, EngineConfig(adaptive=False))
    assert result.events == []
    assert result.status == "failed"


def test_kb_roundtrip_and_defaults():
    kb = KnowledgeBase(decisions={"a:0:custom:00": "accepted"})
    assert load_kb(dump_kb(kb)) == kb
    assert load_kb("{}").popup_definitions == list(BUILTIN_POPUPS)


@pytest.mark.parametrize(
    "doc",
    [
        {"decisions": {"k": "maybe"}},
        {"popup_definitions": [BUILTIN_POPUPS[0].to_dict(), BUILTIN_POPUPS[0].to_dict()]},
        {"popup_definitions": [{**BUILTIN_POPUPS[0].to_dict(), "resolution_button": ""}]},
        {"popup_definitions": [{**BUILTIN_POPUPS[0].to_dict(), "confidence": 2}]},
    ],
)
def test_kb_validation(doc):
    with pytest.raises(KnowledgeBaseError):
        load_kb(json.dumps(doc))


def test_with_decision_rejects_unknown_value():
    with pytest.raises(KnowledgeBaseError):
        with_decision(KnowledgeBase(), "k", "perhaps")


def test_event_roundtrip():
    ev = RecoveryEvent("s", 1, "object_not_found", "fuzzy_rebind", {"a": 1}, "resumed", "pending", "k")
    assert RecoveryEvent.from_dict(ev.to_dict()) == ev


def test_popup_definition_validation():
    with pytest.raises(KnowledgeBaseError):
        PopupDefinition("x", "t", "b", "OK", source="scraped")
