import hashlib
import json

import pytest

from shopstream.cli import main
from shopstream.sessions import read_sessions


def _sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


GEN_CONFIG = """
# compact generator setup for CLI runs
n_customers = 250
seed = 4
purchase_length_mean = 9
nonpurchase_length_mean = 7
min_session_length = 7
purchaser_share = 0.5
purchase_rate = 0.5
"""


@pytest.fixture()
def gen_dir(tmp_path):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text(GEN_CONFIG)
    out = tmp_path / "gen"
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_generate_writes_log_and_manifest(gen_dir):
    assert (gen_dir / "events.tsv").exists()
    assert (gen_dir / "truth.jsonl").exists()
    manifest = json.loads((gen_dir / "manifest.json").read_text())
    assert manifest["subcommand"] == "generate"
    assert manifest["outputs"]["n_sessions"] > 0


def test_generate_same_seed_identical(tmp_path):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text(GEN_CONFIG)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["generate", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["generate", "--config", str(cfg), "--out", str(b)]) == 0
    assert _sha(a / "events.tsv") == _sha(b / "events.tsv")


def test_generate_invalid_mix_exit_2(tmp_path, capsys):
    out = tmp_path / "x"
    code = main([
        "generate", "--set", 'purchase_channel_mix={"Direct": 0.5, "Paid": 0.4}',
        "--out", str(out),
    ])
    assert code == 2
    assert "purchase_channel_mix" in capsys.readouterr().err


def test_generate_unknown_key_exit_2(tmp_path, capsys):
    assert main(["generate", "--set", "warp_speed=9", "--out", str(tmp_path / "x")]) == 2
    assert "warp_speed" in capsys.readouterr().err


def test_ingest_pipeline(gen_dir, tmp_path):
    out = tmp_path / "ingest"
    assert main(["ingest", str(gen_dir / "events.tsv"), "--out", str(out)]) == 0
    sessions = read_sessions(out / "sessions.jsonl")
    truth = [json.loads(l) for l in open(gen_dir / "truth.jsonl")]
    assert len(sessions) == len(truth)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["sessions"] == len(truth)
    assert manifest["anonymous_sessions"] + manifest["identified_sessions"] == len(truth)


def test_ingest_malformed_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("1000\tC1\tPC\n")  # wrong column count
    assert main(["ingest", str(bad), "--out", str(tmp_path / "out")]) == 3
    assert "line 1" in capsys.readouterr().err


def test_ingest_missing_file_exit_3(tmp_path):
    assert main(["ingest", str(tmp_path / "nope.tsv"), "--out", str(tmp_path / "out")]) == 3


@pytest.fixture()
def sessions_file(gen_dir, tmp_path):
    out = tmp_path / "ing"
    assert main(["ingest", str(gen_dir / "events.tsv"), "--out", str(out)]) == 0
    return out / "sessions.jsonl"


def test_analyze_outputs(sessions_file, tmp_path):
    out = tmp_path / "an"
    assert main(["analyze", str(sessions_file), "--out", str(out)]) == 0
    for name in ("ccdf.csv", "weekday.csv", "hour.csv", "channels.csv", "devices.csv",
                 "ownership.csv", "transitions.csv", "queries.csv", "report.json",
                 "manifest.json"):
        assert (out / name).exists(), name
    header = open(out / "channels.csv").readline().strip()
    assert header == "label,channel,percent_within_label"


def test_analyze_empty_corpus(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    out = tmp_path / "an"
    assert main(["analyze", str(empty), "--out", str(out)]) == 0
    assert open(out / "ccdf.csv").read() == "device,label,length,tail\n"


def test_analyze_rerun_identical(sessions_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["analyze", str(sessions_file), "--out", str(a)]) == 0
    assert main(["analyze", str(sessions_file), "--out", str(b)]) == 0
    for name in ("ccdf.csv", "weekday.csv", "channels.csv", "queries.csv"):
        assert _sha(a / name) == _sha(b / name)


def test_evaluate_and_report(sessions_file, tmp_path, capsys):
    out = tmp_path / "ev"
    code = main([
        "evaluate", str(sessions_file), "--out", str(out), "--seed", "3", "--threads", "1",
        "--set", "steps=[0,1,2]", "--set", 'models=["rf","lr"]', "--set", "folds=3",
        "--set", "n_trees=8", "--set", "max_depth=4", "--set", "epochs=60",
    ])
    assert code == 0
    lines = open(out / "step_report.csv").read().strip().splitlines()
    # settings x variants x steps x models rows
    assert len(lines) == 1 + 2 * 2 * 3 * 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3
    # dynamic features are constant at step 0: their rows are exactly zero and
    # static importance carries everything (CSV is rounded to 6 decimals)
    dynamic = {"dwell_mean", "dwell_std", "page_sequence_score", "n_pages", "dwell_count"}
    static_share = 0.0
    for line in open(out / "importance.csv").read().strip().splitlines()[1:]:
        model, setting, step, feature, value = line.split(",")
        if (model, setting, step) != ("rf", "anonymous", "0"):
            continue
        if feature in dynamic:
            assert value == "0.000000"
        else:
            static_share += float(value)
    assert static_share == pytest.approx(1.0, abs=1e-4)
    assert main(["report", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "rf" in printed and "anonymous" in printed


def test_evaluate_too_few_sessions_exit_2(tmp_path, sessions_file):
    out = tmp_path / "ev2"
    code = main([
        "evaluate", str(sessions_file), "--out", str(out),
        "--set", "steps=[0,1,2,3,4,5,6,7,8,9,10]", "--set", "folds=10",
    ])
    # corpus has min_session_length 7: nothing passes the 12-page filter
    assert code == 2


def test_report_missing_dir_exit_3(tmp_path):
    assert main(["report", "--out", str(tmp_path / "void")]) == 3
