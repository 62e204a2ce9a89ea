from __future__ import annotations

import json
import subprocess
import sys

import pytest

from rmshaping.cli import main
from rmshaping.harness import CSV_COLUMNS, load_demos
from rmshaping.rm_core import deserialize_rm


@pytest.fixture
def demo_file(tmp_path):
    path = tmp_path / "demos.jsonl"
    assert main(["demo", "--task", "kitting", "--count", "4", "--seed", "2", "--out", str(path)]) == 0
    return path


def test_demo_and_build_rm(tmp_path, demo_file, capsys):
    header, demos = load_demos(demo_file)
    assert header["task"] == "kitting" and len(demos) == 4
    rm_path = tmp_path / "rm.json"
    assert main(["build-rm", "--demos", str(demo_file), "--gamma", "0.7", "--out", str(rm_path)]) == 0
    rm = deserialize_rm(rm_path.read_bytes())
    assert len(rm) == 7 and rm.distance[rm.initial] == 6
    stats = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert stats["nodes"] == 7


def test_train_is_byte_identical(tmp_path, demo_file):
    rm_path = tmp_path / "rm.json"
    main(["build-rm", "--demos", str(demo_file), "--out", str(rm_path)])
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        code = main(["train", "--task", "kitting", "--variant", "QRM", "--rm", str(rm_path),
                     "--demos", str(demo_file), "--demo-count", "4", "--episodes", "20",
                     "--seed", "3", "--eval-every", "5", "--out", str(out)])
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].decode().splitlines()[0] == ",".join(CSV_COLUMNS)


def test_train_flags_cover_run_config(tmp_path, demo_file):
    out = tmp_path / "x.csv"
    code = main(["train", "--task", "kitting", "--demos", str(demo_file), "--episodes", "4",
                 "--eval-every", "2", "--epsilon", "0.5", "--alpha", "0.2", "--batch-size", "8",
                 "--train-cadence", "steps", "--train-every", "4", "--observation-mode", "aliased",
                 "--tie-break", "lowest", "--no-randomize-layout", "--out", str(out)])
    assert code == 0 and len(out.read_text().splitlines()) == 3


def test_configuration_errors_exit_2(tmp_path, demo_file, capsys):
    out = str(tmp_path / "x.csv")
    assert main(["train", "--task", "kitting", "--episodes", "2", "--out", out]) == 2
    assert main(["train", "--task", "kitting", "--demos", str(demo_file), "--demo-count", "9",
                 "--out", out]) == 2
    assert main(["train", "--task", "kitting", "--demos", str(demo_file), "--epsilon", "2",
                 "--out", out]) == 2
    assert main(["build-rm", "--demos", str(tmp_path / "missing"), "--out", out]) == 2
    bad_rm = tmp_path / "bad.json"
    bad_rm.write_text('{"propositions": []')
    assert main(["train", "--task", "kitting", "--rm", str(bad_rm), "--out", out]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["oracle", "--task", "kitting", "--check", "zero-value", "--grid", "2", "2"]) == 2
    assert main(["train", "--task", "sorting", "--out", out]) == 2


@pytest.mark.parametrize("task", ["stacking", "kitting"])
@pytest.mark.parametrize("check", ["zero-value", "policy-preservation", "preconditions"])
def test_oracle_checks_pass(task, check, capsys):
    assert main(["oracle", "--task", task, "--check", check, "--grid", "3", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["check"] == check and doc["pass"] is True


def test_oracle_telescoping(capsys):
    assert main(["oracle", "--task", "stacking", "--check", "telescoping", "--episodes", "200"]) == 0
    assert json.loads(capsys.readouterr().out)["details"]["episodes"] == 200


def test_ablate_from_config(tmp_path, capsys):
    cfg = {"task": "stacking", "episodes": 10, "eval_every": 5, "variants": ["Q", "QRM"],
           "demo_counts": [0, 2], "seeds": [0, 1], "out_dir": str(tmp_path / "abl")}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["ablate", "--config", str(path)]) == 0
    assert (tmp_path / "abl" / "metrics.csv").exists()
    summary = capsys.readouterr().out.splitlines()
    assert summary[0] == "variant,demo_count,seed,auc" and len(summary) == 9
    path.write_text(json.dumps({**cfg, "gamma_typo": 1}))
    assert main(["ablate", "--config", str(path)]) == 2
    path.write_text(json.dumps({"task": "stacking"}))
    assert main(["ablate", "--config", str(path)]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rmshaping", "oracle", "--task", "stacking",
                           "--check", "preconditions", "--grid", "2", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["pass"] is True
    proc = subprocess.run([sys.executable, "-m", "rmshaping", "frobnicate"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
