import json

import pytest

from bestanswer.cli import main
from bestanswer.config import CONFIG_ENV
from bestanswer.evaluate import METRIC_NAMES


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    dump = root / "synth"
    assert main(["synth", "--out-dir", str(dump), "--threads", "150", "--seed", "3"]) == 0
    assert main(["synth", "--out-dir", str(root / "nousers"), "--threads", "60", "--no-users"]) == 0
    corpus = root / "corpus.jsonl"
    assert main(["ingest", "--posts", str(dump / "Posts.xml"), "--users", str(dump / "Users.xml"),
                 "--out", str(corpus)]) == 0
    return root, corpus


def test_stats(workspace, capsys):
    _, corpus = workspace
    assert main(["stats", "--corpus", str(corpus)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["threads"] == 150 and stats["accepted_answers"] == 150
    assert 0 < stats["positive_rate"] < 1


def test_ingest_site_name_defaults_to_directory(workspace, capsys):
    root, corpus = workspace
    with open(corpus, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
    assert header["site_name"] == "synth"


def test_evaluate_writes_reports_deterministically(workspace):
    root, corpus = workspace
    outputs = []
    for run in ("a", "b"):
        out = root / f"eval-{run}"
        args = ["evaluate", "--corpus", str(corpus), "--case", "2", "--k", "10", "--seed", "7",
                "--max-depth", "6", "--min-leaf", "10", "--out-dir", str(out)]
        assert main(args) == 0
        outputs.append(((out / "synth_case2.json").read_text(), (out / "synth_case2.csv").read_text()))
    assert outputs[0] == outputs[1]
    doc = json.loads(outputs[0][0])
    assert doc["case"] == 2 and doc["k"] == 10 and doc["seed"] == 7 and len(doc["folds"]) == 10
    for m in doc["folds"]:
        assert all(0.0 <= m[name] <= 1.0 for name in METRIC_NAMES)


@pytest.mark.slow
def test_evaluate_all_cases(workspace):
    root, corpus = workspace
    out = root / "all"
    assert main(["evaluate", "--corpus", str(corpus), "--all-cases", "--k", "5", "--max-depth", "6",
                 "--min-leaf", "10", "--out-dir", str(out)]) == 0
    assert sorted(p.name for p in out.glob("*.json")) == [f"synth_case{c}.json" for c in range(1, 7)]


def test_train_case6_without_users(workspace, capsys):
    root, _ = workspace
    corpus = root / "nousers.jsonl"
    assert main(["ingest", "--posts", str(root / "nousers" / "Posts.xml"), "--out", str(corpus)]) == 0
    capsys.readouterr()
    assert main(["train", "--corpus", str(corpus), "--case", "6", "--out", str(root / "m6.json")]) == 1
    err = capsys.readouterr().err
    assert "missing input" in err and "Users.xml" in err
    assert not (root / "m6.json").exists()


def test_train_and_predict(workspace, capsys):
    root, corpus = workspace
    model = root / "m2.json"
    assert main(["train", "--corpus", str(corpus), "--case", "2", "--out", str(model), "--min-leaf", "10"]) == 0
    assert (root / "m2.json.bg.json").exists()
    req = root / "req.json"
    long_body = "<p>" + "Configure the parser before running the second stage of the job. " * 10 + "</p>"
    req.write_text(json.dumps({"answers": [
        {"body": "<p>No.</p>", "creation_date": "2013-01-01T00:00:00"},
        {"body": long_body, "creation_date": "2013-01-02T00:00:00"},
    ]}))
    out = root / "resp.json"
    assert main(["predict", "--model", str(model), "--request", str(req), "--out", str(out)]) == 0
    resp = json.loads(out.read_text())
    assert [a["rank"] for a in resp["answers"]] == [2, 1]


def test_predict_rejected_request(workspace, capsys):
    root, corpus = workspace
    model = root / "m1.json"
    assert main(["train", "--corpus", str(corpus), "--case", "1", "--out", str(model)]) == 0
    req = root / "bad.json"
    req.write_text(json.dumps({"answers": []}))
    assert main(["predict", "--model", str(model), "--request", str(req)]) == 1


def test_features_csv(workspace):
    root, corpus = workspace
    out = root / "f3.csv"
    assert main(["features", "--corpus", str(corpus), "--case", "3", "--out", str(out)]) == 0
    header, *rows = out.read_text().splitlines()
    assert header.split(",")[-3:] == ["question_id", "answer_id", "label"]
    assert len(header.split(",")) == 3 + 13
    assert len(rows) > 150


def test_drift(workspace):
    root, corpus = workspace
    out = root / "drift.csv"
    assert main(["drift", "--corpus", str(corpus), "--out", str(out), "--std"]) == 0
    header, *rows = out.read_text().splitlines()
    assert header.startswith("month,n_answers") and "length_other_std" in header
    months = [r.split(",")[0] for r in rows]
    assert months == sorted(months) and len(months) > 1


def test_config_file_and_flag_override(workspace, tmp_path, monkeypatch):
    root, corpus = workspace
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 3, "cases": [1], "classifier": {"tree": {"max_depth": 3, "min_leaf": 10}}}))
    monkeypatch.setenv(CONFIG_ENV, str(cfg))
    assert main(["evaluate", "--corpus", str(corpus), "--out-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "synth_case1.json").read_text())
    assert doc["k"] == 3
    assert main(["evaluate", "--corpus", str(corpus), "--k", "4", "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "synth_case1.json").read_text())["k"] == 4


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nope": 1}))
    assert main(["--config", str(cfg), "stats", "--corpus", str(tmp_path / "x")]) == 1


def test_missing_corpus(tmp_path):
    assert main(["stats", "--corpus", str(tmp_path / "absent.jsonl")]) == 1


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
