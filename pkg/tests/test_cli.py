import json
import subprocess
import sys

import pytest

import toydata
from opinion_miner.cli import main
from opinion_miner.corpus import load_dataset


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def xml_files(tmp_path):
    train = tmp_path / "R14_train.xml"
    test = tmp_path / "R14_test.xml"
    train.write_text(toydata.semeval2014_xml(toydata.R14, "train"))
    test.write_text(toydata.semeval2014_xml(toydata.R14, "test"))
    tsv = tmp_path / "R14_opinions.tsv"
    tsv.write_text(toydata.opinion_tsv(toydata.R14))
    return train, test, tsv


def test_prepare(tmp_path, xml_files, capsys):
    train, test, tsv = xml_files
    out = tmp_path / "r14.jsonl"
    assert run("prepare", "R14", "--train", train, "--test", test, "--opinions", tsv, "--out", out) == 0
    assert "7 sentences, 10 instances, 9 with opinions" in capsys.readouterr().out
    assert load_dataset(out) == toydata.build_dataset("R14")


def test_prepare_missing_file_is_io_error(tmp_path):
    assert run("prepare", "R14", "--test", tmp_path / "nope.xml", "--out", tmp_path / "o.jsonl") == 1


def test_prepare_warnings_need_lenient(tmp_path, xml_files):
    train, test, _ = xml_files
    test.write_text(test.read_text().replace('from="4" to="9"', 'from="3" to="8"'))
    out = tmp_path / "r14.jsonl"
    assert run("prepare", "R14", "--train", train, "--test", test, "--out", out) == 2
    assert not out.exists()
    assert run("prepare", "R14", "--train", train, "--test", test, "--out", out, "--lenient") == 0
    assert len(load_dataset(out).instances) == 9


def test_prepare_malformed_xml(tmp_path):
    bad = tmp_path / "bad.xml"
    bad.write_text("<sentences><sentence id='1'><text>x</sentence>")
    assert run("prepare", "R14", "--test", bad, "--out", tmp_path / "o.jsonl") == 2


def test_adapt_untrainable_exits_3(workspace, tmp_path):
    assert run("adapt", "--config", workspace["config"], "--set", "backend.trainable=false",
               "--dataset", workspace["R14"]) == 3


def test_adapt_creates_run_dirs(workspace, tmp_path, capsys):
    out = tmp_path / "adapt"
    assert run("adapt", "--config", workspace["config"], "--dataset", workspace["R14"],
               "--seed", 1, "--seed", 2, "--set", "adapt.epochs=1", "--out", out) == 0
    dirs = capsys.readouterr().out.split()
    assert len(dirs) == 2 and len(set(dirs)) == 2
    for d in dirs:
        cfg = json.loads((tmp_path / "adapt" / d.split("/")[-1] / "config.json").read_text())
        assert cfg["adaptation"]["epochs"] == 1


def test_adapt_empty_corpus(workspace, tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("\n\n")
    assert run("adapt", "--config", workspace["config"], "--extra", empty) == 2


def test_extract_and_evaluate(workspace, tmp_path, capsys):
    preds = tmp_path / "preds.jsonl"
    assert run("extract", "--config", workspace["config"], "--dataset", workspace["L14"], "--out", preds) == 0
    recs = [json.loads(l) for l in preds.read_text().splitlines()]
    assert len(recs) == 4
    by = {(r["sentence_id"], r["aspect"]): r for r in recs}
    assert by[("l_te1", "screen")]["predicted_opinion"] == "very good"
    assert "attention" not in recs[0]
    capsys.readouterr()
    scores = tmp_path / "scores.json"
    assert run("evaluate", preds, "--out", scores) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("AOOE")
    payload = json.loads(scores.read_text())
    assert [p["task"] for p in payload] == ["AOOE", "ATSC", "AOOSPE"]
    assert payload[0]["n_eligible"] == 3


def test_extract_dump_attention_and_adapted_weights(workspace, tmp_path, capsys):
    out = tmp_path / "adapt"
    run("adapt", "--config", workspace["config"], "--dataset", workspace["L14"], "--seed", 1, "--out", out)
    run_dir = capsys.readouterr().out.split()[0]
    preds = tmp_path / "p.jsonl"
    assert run("extract", "--config", workspace["config"], "--dataset", workspace["L14"], "--out", preds,
               "--model-path", run_dir, "--dump-attention") == 0
    rec = json.loads(preds.read_text().splitlines()[0])
    assert len(rec["attention"]) == 3


def test_extract_empty_split(workspace, tmp_path):
    ds = tmp_path / "trainonly.jsonl"
    ds.write_text("\n".join(l for l in workspace["R14"].read_text().splitlines() if '"train"' in l) + "\n")
    assert run("extract", "--config", workspace["config"], "--dataset", ds, "--out", tmp_path / "o.jsonl") == 2


def test_extract_missing_parse(workspace, tmp_path):
    (workspace["parses"]).write_text("")
    assert run("extract", "--config", workspace["config"], "--dataset", workspace["L14"],
               "--out", tmp_path / "o.jsonl") == 2


def write_plan(tmp_path, workspace, plans):
    p = tmp_path / "plan.json"
    p.write_text(json.dumps({"datasets": {"R14": str(workspace["R14"]), "L14": str(workspace["L14"])},
                             "plans": plans}))
    return p


PLANS = [
    {"setting": "in_domain", "test_datasets": ["R14", "L14"], "adaptation": "without"},
    {"setting": "cross_domain", "test_datasets": ["R14"], "adaptation": "with", "train_domains": ["laptop"]},
    {"setting": "joint_domain", "test_datasets": ["L14"], "adaptation": "with",
     "train_domains": ["laptop", "restaurant"]},
]


def test_matrix_and_report(workspace, tmp_path, capsys):
    plan = write_plan(tmp_path, workspace, PLANS)
    out = tmp_path / "runs"
    assert run("matrix", plan, "--config", workspace["config"], "--out", out, "--seed", 1, "--seed", 2) == 0
    (run_dir,) = list(out.iterdir())
    md = (run_dir / "report.md").read_text()
    for group in ("| in_domain | without |", "| cross_domain | with |", "| joint_domain | with |"):
        assert group in md
    assert len(list((run_dir / "cells").iterdir())) == 2 * 4
    capsys.readouterr()
    assert run("report", run_dir, "--format", "csv") == 0
    csv_text = capsys.readouterr().out
    assert csv_text.startswith("task,setting,adaptation,cell")
    assert run("report", run_dir, "--out", tmp_path / "r.md") == 0
    assert (tmp_path / "r.md").read_text() == md


def test_matrix_resume_keeps_cells(workspace, tmp_path):
    plan = write_plan(tmp_path, workspace, PLANS[:1])
    out = tmp_path / "runs"
    run("matrix", plan, "--config", workspace["config"], "--out", out, "--seed", 1)
    (run_dir,) = list(out.iterdir())
    metrics = next((run_dir / "cells").glob("*/metrics.json"))
    before = metrics.stat().st_mtime_ns
    run("matrix", plan, "--config", workspace["config"], "--out", out, "--seed", 1)
    assert metrics.stat().st_mtime_ns == before


def test_matrix_invalid_plan(workspace, tmp_path):
    bad = write_plan(tmp_path, workspace, [{"setting": "cross_domain", "test_datasets": ["R14"],
                                           "train_domains": ["restaurant"]}])
    assert run("matrix", bad, "--config", workspace["config"]) == 2
    bad.write_text("{not json")
    assert run("matrix", bad, "--config", workspace["config"]) == 2


def test_bad_override_exit_2(workspace, tmp_path):
    assert run("extract", "--config", workspace["config"], "--set", "attention.layers=99",
               "--dataset", workspace["L14"], "--out", tmp_path / "o.jsonl") == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "opinion_miner", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "matrix" in out.stdout
