import json
import shutil

import pytest

from adaptest import fixtures
from adaptest.cli import main, suite_files


@pytest.fixture
def work(tmp_path):
    for name in ("signup_v1.json", "signup_v2.json", "signup_repo.json", "store_v1.json", "store_repo.json", "portal_log.jsonl"):
        shutil.copy(fixtures.path(name), tmp_path / name)
    shutil.copytree(fixtures.path("signup_suite"), tmp_path / "suite")
    return tmp_path


def run(work, model, *extra):
    return main(["run", str(work / "suite"), "--model", str(work / model), "--repo", str(work / "signup_repo.json"), *extra])


def test_suite_files_skip_hidden_and_json(tmp_path):
    for name in ("b.test", "a.txt", ".hidden", "notes.md", "data.json"):
        (tmp_path / name).write_text("")
    assert [p.name for p in suite_files(tmp_path)] == ["a.txt", "b.test"]


def test_run_exit_codes(work, capsys):
    assert run(work, "signup_v1.json") == 0
    assert run(work, "signup_v2.json") == 3
    assert run(work, "signup_v2.json", "--adaptive", "off") == 1
    assert run(work, "signup_v2.json", "--adaptive", "off", "--legacy-mode", "continue") == 1


def test_run_usage_errors(work, capsys):
    assert run(work, "missing.json") == 2
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 2
    (work / "suite" / "broken.test").write_text('test "x"\nfly "Y"\n')
    assert run(work, "signup_v1.json") == 2
    assert "broken.test" in capsys.readouterr().err


def test_run_blocked_by_validation(work, capsys):
    (work / "suite" / "bad.test").write_text('test "bad"\nclick "Nope"\n')
    assert run(work, "signup_v1.json") == 1
    assert "unknown_object" in capsys.readouterr().err
    assert run(work, "signup_v1.json", "--force") == 1


def test_fixed_clock_reports_identical(work):
    a, b = work / "a.json", work / "b.json"
    run(work, "signup_v2.json", "--seed", "42", "--fixed-clock", "--report", str(a))
    run(work, "signup_v2.json", "--seed", "42", "--fixed-clock", "--report", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_text_report(work, capsys):
    run(work, "signup_v2.json", "--format", "text")
    out = capsys.readouterr().out
    assert "fill_required_field" in out and "signup-full:2:fill_required_field:" in out


def test_validate(work, capsys):
    assert main(["validate", str(work / "suite"), "--repo", str(work / "signup_repo.json")]) == 0
    (work / "suite" / "bad.test").write_text('test "bad"\nenter "SubmitButton"\n')
    assert main(["validate", str(work / "suite"), "--repo", str(work / "signup_repo.json")]) == 1
    out = capsys.readouterr().out
    assert "missing_parameter" in out and "invalid_verb_for_type" in out and "bad.test:2" in out


def test_generate_crawl_and_mine(work, capsys):
    out = work / "gen"
    assert main(["generate", "crawl", "--model", str(work / "store_v1.json"), "--out", str(out)]) == 0
    assert (out / "repository.json").exists()
    assert main(["validate", str(out), "--repo", str(out / "repository.json"), "--model", str(work / "store_v1.json")]) == 0
    mined = work / "mined"
    assert main(["generate", "mine", "--log", str(work / "portal_log.jsonl"), "--out", str(mined)]) == 0
    assert json.loads((mined / "metadata.json").read_text())["frequencies"]["mined-001"] == 7


def test_generate_with_heuristics(work):
    h = work / "h.json"
    h.write_text(json.dumps([{"name_pattern": "search", "valid_value": "boots"}]))
    out = work / "gen"
    main(["generate", "crawl", "--model", str(work / "store_v1.json"), "--heuristics", str(h), "--out", str(out)])
    assert 'enter "SearchField" "boots"' in next(out.glob("001_*")).read_text()


def test_diff_and_propose(work, capsys):
    assert main(["diff", "--old", str(work / "signup_v1.json"), "--new", str(work / "signup_v2.json")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["diff"]["added"][0]["id"] == "GenderField"
    argv = ["diff", "--old", str(work / "signup_v1.json"), "--new", str(work / "signup_v2.json"), "--propose",
            "--suite", str(work / "suite"), "--repo", str(work / "signup_repo.json")]
    assert main(argv) == 0
    assert [p["kind"] for p in json.loads(capsys.readouterr().out)["patches"]] == ["add_step", "add_step"]
    assert main(argv[:6] + ["--propose"]) == 2


def test_review_workflow(work, capsys):
    report, kb = work / "r.json", work / "kb.json"
    run(work, "signup_v2.json", "--report", str(report))
    keys = json.loads(report.read_text())["pending_decisions"]
    assert main(["review", "--report", str(report), "--kb", str(kb), "--accept", *keys, "--apply-patches",
                 "--repo", str(work / "signup_repo.json"), "--suite", str(work / "suite"),
                 "--model", str(work / "signup_v2.json")]) == 0
    assert json.loads(kb.read_text())["decisions"] == {k: "accepted" for k in keys}
    assert 'select "gender" "Female"' in (work / "suite" / "01_full.test").read_text()
    assert run(work, "signup_v2.json") == 0


def test_review_rejects_unknown_key(work, capsys):
    report, kb = work / "r.json", work / "kb.json"
    run(work, "signup_v2.json", "--report", str(report))
    assert main(["review", "--report", str(report), "--kb", str(kb), "--accept", "nope"]) == 2
    assert not kb.exists()
