import json

import pytest

from adaptest import fixtures
from adaptest.model import (
    BLOCKED_BY_POPUP,
    GUARD_UNSATISFIED,
    INVALID_ACTION,
    LOAD_FAILURE,
    NO_SUCH_OBJECT,
    ModelError,
    ModelParseError,
    ModelReferenceError,
    MutationError,
    MutationOp,
    apply_mutation,
    apply_mutations,
    bump_version,
    dump_model,
    load_model,
    load_mutations,
    model_to_dict,
    start_session,
)

POPUP = {
    "id": "promo",
    "title": "Security Certificate",
    "body_text": "The certificate for this site is not trusted.",
    "buttons": [{"text": "Accept", "effect": "dismiss"}, {"text": "Abort", "effect": "abort"}],
    "trigger": {"fire_on_nth_action": 2},
}


def test_fixture_roundtrip_is_byte_identical():
    text = fixtures.read("store_v1.json")
    assert dump_model(load_model(text)) == text


def test_signup_v2_adds_gender_guard(signup_v2):
    submit = signup_v2.screen("signup").transitions[0]
    assert submit.guards == ("NameField", "GenderField")
    assert signup_v2.version == "v2"


def test_parse_error_reports_path():
    data = json.loads(fixtures.read("signup_v1.json"))
    data["screens"][0]["objects"][1]["obj_type"] = "slider"
    with pytest.raises(ModelParseError) as exc:
        load_model(data)
    assert exc.value.location == "$.screens[0].objects[1].obj_type"


def test_missing_key_reported():
    with pytest.raises(ModelParseError):
        load_model({"version": "1", "screens": []})


def test_bad_json_is_a_parse_error():
    with pytest.raises(ModelParseError):
        load_model("{not json")


@pytest.mark.parametrize(
    "edit",
    [
        lambda d: d.__setitem__("start_screen", "nowhere"),
        lambda d: d["screens"][0]["transitions"][0].__setitem__("target", "nowhere"),
        lambda d: d["screens"][0]["transitions"][0]["guards"].append("Ghost"),
    ],
)
def test_dangling_references_rejected(edit):
    data = json.loads(fixtures.read("signup_v1.json"))
    edit(data)
    with pytest.raises(ModelReferenceError):
        load_model(data)


def test_duplicate_object_id_rejected():
    data = json.loads(fixtures.read("signup_v1.json"))
    data["screens"][0]["objects"].append(dict(data["screens"][0]["objects"][0]))
    with pytest.raises(ModelError, match="duplicate object id"):
        load_model(data)


def test_walkthrough_reaches_dashboard(signup_v1):
    s = start_session(signup_v1, 1)
    assert s.observe().screen_id == "signup"
    assert s.perform("enter", "NameField", "Alice").ok
    assert s.perform("click", "SubmitButton").ok
    assert s.observe().screen_id == "welcome"
    assert s.perform("click", "ContinueLink").ok
    assert s.observe().screen_id == "dashboard"


def test_guard_blocks_transition(signup_v2):
    s = start_session(signup_v2, 1)
    s.perform("enter", "NameField", "Alice")
    out = s.perform("click", "SubmitButton")
    assert out.status == GUARD_UNSATISFIED
    assert out.unmet == ("GenderField",)
    assert s.observe().screen_id == "signup"
    s.perform("select", "GenderField", "Other")
    assert s.perform("click", "SubmitButton").ok


def test_unknown_object_and_bad_verbs(store):
    s = start_session(store, 0)
    assert s.perform("click", "Ghost").status == NO_SUCH_OBJECT
    assert s.perform("enter", "NextButton", "x").status == INVALID_ACTION
    assert s.perform("select", "CitiesDropDown", "Paris").status == INVALID_ACTION
    assert s.perform("fly", "NextButton").status == INVALID_ACTION


def test_disabled_object_refuses_input(store):
    s = start_session(store, 0)
    s.perform("open", value="cart")
    assert s.perform("enter", "PromoField", "X").status == INVALID_ACTION


def test_checkbox_click_toggles(store):
    s = start_session(store, 0)
    s.perform("open", value="product")
    s.perform("click", "GiftWrapBox")
    assert s.value_of("GiftWrapBox") == "on"
    s.perform("click", "GiftWrapBox")
    assert s.value_of("GiftWrapBox") == ""


def test_popup_fires_on_nth_action_and_blocks(store):
    m = apply_mutation(store, MutationOp("add_popup", "home", {"popup": POPUP}))
    s = start_session(m, 0)
    assert s.perform("enter", "SearchField", "x").ok
    assert s.perform("select", "CitiesDropDown", "Perth").status == BLOCKED_BY_POPUP
    view = s.observe()
    assert view.popup is not None and view.popup.buttons == ("Accept", "Abort")
    assert all(o.blocked for o in view.objects)
    # the blocked action had no effect
    assert s.value_of("CitiesDropDown") == ""
    assert s.perform("popup", value="Accept").ok
    assert s.perform("select", "CitiesDropDown", "Perth").ok
    # one-shot: never again in this session
    assert s.perform("click", "NextButton").ok


def test_popup_abort_returns_to_start(store):
    m = apply_mutation(store, MutationOp("add_popup", "product", {"popup": {**POPUP, "trigger": {}}}))
    s = start_session(m, 0)
    s.perform("click", "NextButton")
    assert s.perform("enter", "QuantityField", "1").status == BLOCKED_BY_POPUP
    assert s.perform("popup", value="abort").ok
    assert s.observe().screen_id == "home"


def test_load_failure_is_seeded(store):
    m = apply_mutation(store, MutationOp("set_load_failure", "product", {"probability": 0.5}))

    def trace(seed):
        s = start_session(m, seed)
        out = []
        for _ in range(20):
            s.perform("open", value="product")
            out.append(s.observe().loading)
        return out

    assert trace(3) == trace(3)
    assert any(trace(3)) and not all(trace(3))


def test_load_failure_certain_then_refresh(store):
    m = apply_mutation(store, MutationOp("set_load_failure", "product", {"probability": 1.0}))
    s = start_session(m, 0)
    assert s.perform("click", "NextButton").status == LOAD_FAILURE
    view = s.observe()
    assert view.loading and view.objects == ()
    assert s.perform("refresh").status == LOAD_FAILURE


def test_login_expiry_redirects_and_returns(portal):
    s = start_session(portal, 0)
    s.perform("enter", "UsernameField", "tester")
    s.perform("enter", "PasswordField", "s3cret")
    s.perform("click", "LoginButton")
    assert s.observe().screen_id == "account" and s.logged_in
    s.perform("click", "ProfileLink")
    s.perform("click", "SettingsLink")
    assert not s.logged_in
    assert s.observe().screen_id == "login"
    s.perform("enter", "UsernameField", "tester")
    s.perform("enter", "PasswordField", "s3cret")
    s.perform("click", "LoginButton")
    assert s.observe().screen_id == "settings"


def test_wrong_password_stays_on_login(portal):
    s = start_session(portal, 0)
    s.perform("enter", "UsernameField", "tester")
    s.perform("enter", "PasswordField", "nope")
    assert s.perform("click", "LoginButton").message == "login rejected"
    assert s.observe().screen_id == "login"


def test_snapshot_restore_replays_identically(store):
    m = apply_mutation(store, MutationOp("set_load_failure", "product", {"probability": 0.5}))
    s = start_session(m, 9)
    s.perform("select", "CitiesDropDown", "Sydney")
    snap = s.snapshot()
    first = [(s.perform("open", value="product").status, s.observe().to_json()) for _ in range(5)]
    s.restore(snap)
    second = [(s.perform("open", value="product").status, s.observe().to_json()) for _ in range(5)]
    assert first == second


def test_same_seed_same_trace(store):
    def run(seed):
        s = start_session(store, seed)
        return [s.perform("click", "NextButton").status, s.observe().to_json()]

    assert run(5) == run(5)


def test_mutations_do_not_touch_original(store):
    before = dump_model(store)
    apply_mutation(store, MutationOp("rename_object", "CitiesDropDown", {"name": "CitiesList"}))
    apply_mutation(store, MutationOp("delete_object", "cart/EmailField"))
    assert dump_model(store) == before


def test_delete_cascades_guards_and_children(store):
    m = apply_mutation(store, MutationOp("delete_object", "cart/CartPanel"))
    email = m.screen("cart").get("EmailField")
    assert email.parent_id is None
    m = apply_mutation(store, MutationOp("delete_object", "cart/EmailField"))
    assert m.screen("cart").transitions[0].guards == ()
    m = apply_mutation(store, MutationOp("delete_object", "product/AddToCartButton"))
    assert [t.target for t in m.screen("product").transitions] == ["home"]


def test_mutation_kinds(store):
    ops = load_mutations(
        json.dumps(
            [
                {"kind": "retype_object", "target": "CitiesDropDown", "payload": {"obj_type": "combobox"}},
                {"kind": "move_object", "target": "NextButton", "payload": {"dx": -10, "dy": 5}},
                {"kind": "add_select_option", "target": "SizeBox", "payload": {"option": "Extra Large"}},
                {"kind": "reparent_object", "target": "AgeField", "payload": {"parent_id": None}},
            ]
        )
    )
    m = apply_mutations(store, ops)
    assert m.version == "v5"
    home = m.screen("home")
    assert home.get("CitiesDropDown").obj_type == "combobox"
    assert home.get("NextButton").position == (890, 705)
    assert m.screen("product").get("SizeBox").options[-1] == "Extra Large"
    assert m.screen("cart").get("AgeField").parent_id is None


@pytest.mark.parametrize(
    "op",
    [
        MutationOp("rename_object", "Ghost", {"name": "x"}),
        MutationOp("add_select_option", "NextButton", {"option": "x"}),
        MutationOp("add_select_option", "SizeBox", {"option": "Small"}),
        MutationOp("add_object", "home", {"object": {"id": "NextButton", "name": "n", "obj_type": "button"}}),
        MutationOp("set_load_failure", "nowhere", {"probability": 0.1}),
    ],
)
def test_bad_mutations(store, op):
    with pytest.raises(MutationError):
        apply_mutation(store, op)


def test_unknown_mutation_kind_in_script():
    with pytest.raises(ModelParseError):
        load_mutations('[{"kind": "explode", "target": "x"}]')


@pytest.mark.parametrize("before,after", [("v1", "v2"), ("1", "2"), ("2.9", "2.10"), ("beta", "beta.1")])
def test_bump_version(before, after):
    assert bump_version(before) == after


def test_model_to_dict_is_json(store):
    assert json.loads(json.dumps(model_to_dict(store)))["start_screen"] == "home"
