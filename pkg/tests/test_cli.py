"""CLI flows: file outputs, exit codes, failure reporting."""

import json
import subprocess
import sys

import numpy as np
import pytest

from verislice.cli import main

from conftest import LENET_JSON


def run_cli(*argv):
    return main(list(argv))


def test_slice_preset_writes_five_slices(tmp_path):
    out = tmp_path / "slices"
    assert run_cli("slice", "--model", LENET_JSON, "--preset", "lenet5", "--out", str(out)) == 0
    files = sorted(p.name for p in out.glob("slice_*.json"))
    assert files == [f"slice_{i}.json" for i in range(5)]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["plan"] == "0-3,3-6,6-8,8-10,10-11"
    assert len(manifest["slices"]) == 5
    shapes = [tuple(s["input_shape"]) for s in manifest["slices"]]
    assert shapes[0] == (3, 32, 32)
    assert shapes[2] == (16, 5, 5)


def test_slice_whole_model_plan(tmp_path):
    out = tmp_path / "one"
    assert run_cli("slice", "--model", LENET_JSON, "--plan", "0-11", "--out", str(out)) == 0
    assert sorted(p.name for p in out.glob("slice_*.json")) == ["slice_0.json"]


def test_slice_bad_plan_exits_nonzero(tmp_path, capsys):
    code = run_cli("slice", "--model", LENET_JSON, "--plan", "0-3,5-11", "--out", str(tmp_path))
    assert code == 1
    assert "gap" in capsys.readouterr().err


def test_adapt_emits_circuit_digests(tmp_path):
    out = tmp_path / "adapted"
    assert run_cli(
        "adapt", "--model", LENET_JSON, "--preset", "lenet5",
        "--scale-bits", "16", "--out", str(out),
    ) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    digests = [s["circuit_digest"] for s in manifest["slices"]]
    assert len(digests) == 5 and all(len(d) == 64 for d in digests)
    adapted0 = json.loads((out / "adapted_0.json").read_text())
    assert adapted0["scale_bits"] == 16
    assert adapted0["weights"]["conv1.bias"]["scale_bits"] == 32


def test_run_writes_artifacts_and_record(tmp_path):
    out = tmp_path / "runs"
    assert run_cli(
        "run", "--model", LENET_JSON, "--preset", "lenet5",
        "--seed", "5", "--out", str(out),
    ) == 0
    run_dirs = list(out.iterdir())
    assert len(run_dirs) == 1
    run_dir = run_dirs[0]
    assert len(list(run_dir.glob("*.proof"))) == 5
    assert len(list(run_dir.glob("*.witness"))) == 5
    record = json.loads((run_dir / "record.json").read_text())
    assert record["accepted"] is True
    assert record["assurance"] == "per-slice-proved"


def test_run_strategic_single_proof(tmp_path):
    out = tmp_path / "runs"
    assert run_cli(
        "run", "--model", LENET_JSON, "--strategic", "10-11",
        "--seed", "5", "--out", str(out),
    ) == 0
    run_dir = next(out.iterdir())
    assert len(list(run_dir.glob("*.proof"))) == 1
    record = json.loads((run_dir / "record.json").read_text())
    assert record["assurance"] == "strategically-proved"
    assert record["roles"] == ["public-pre", "private"]


def test_prove_then_verify_round_trip(tmp_path):
    out = tmp_path / "runs"
    assert run_cli(
        "prove", "--model", LENET_JSON, "--preset", "lenet5",
        "--seed", "3", "--out", str(out),
    ) == 0
    run_dir = next(out.iterdir())
    assert (run_dir / "proofs.json").exists()
    assert run_cli(
        "verify", "--model", LENET_JSON, "--preset", "lenet5",
        "--run-dir", str(run_dir), "--out", str(tmp_path / "unused"),
    ) == 0


def test_verify_rejects_corrupted_proof(tmp_path, capsys):
    out = tmp_path / "runs"
    run_cli("run", "--model", LENET_JSON, "--preset", "lenet5", "--seed", "3", "--out", str(out))
    run_dir = next(out.iterdir())
    proof = run_dir / "slice_2.proof"
    blob = bytearray(proof.read_bytes())
    blob[-5] ^= 0xFF  # flip a payload byte
    proof.write_bytes(bytes(blob))
    code = run_cli(
        "verify", "--model", LENET_JSON, "--preset", "lenet5",
        "--run-dir", str(run_dir), "--out", str(tmp_path / "unused"),
    )
    captured = capsys.readouterr()
    assert code == 1
    assert "slice 2" in captured.err
    assert "rejected" in captured.err or "mismatch" in captured.err


def test_fidelity_batch_outputs(tmp_path):
    out = tmp_path / "fid"
    assert run_cli(
        "fidelity", "--model", LENET_JSON, "--preset", "lenet5",
        "--seed", "0", "--count", "8", "--out", str(out),
    ) == 0
    csv_lines = (out / "fidelity.csv").read_text().strip().splitlines()
    assert len(csv_lines) == 9  # header + 8 rows
    summary = json.loads((out / "fidelity.json").read_text())
    assert summary["inputs"] == 8
    assert set(summary["summary"]) == {"d1", "d2", "tvd", "jsd"}


def test_fidelity_single_input_std_zero(tmp_path):
    out = tmp_path / "fid1"
    assert run_cli(
        "fidelity", "--model", LENET_JSON, "--preset", "lenet5",
        "--seed", "0", "--count", "1", "--out", str(out),
    ) == 0
    summary = json.loads((out / "fidelity.json").read_text())
    assert summary["summary"]["d1"]["std"] == 0.0


def test_fidelity_bad_input_recorded_batch_continues(tmp_path):
    good = tmp_path / "good.json"
    good.write_text(json.dumps(np.zeros((3, 32, 32)).tolist()))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(np.zeros((3, 16, 16)).tolist()))
    out = tmp_path / "fid2"
    assert run_cli(
        "fidelity", "--model", LENET_JSON, "--preset", "lenet5",
        "--inputs", str(good), str(bad), "--out", str(out),
    ) == 0
    summary = json.loads((out / "fidelity.json").read_text())
    assert summary["inputs"] == 1
    assert len(summary["errors"]) == 1
    assert summary["errors"][0]["input_id"] == "bad.json"


def test_fidelity_jobs_flag_matches_serial(tmp_path):
    out1, out4 = tmp_path / "serial", tmp_path / "jobs"
    run_cli("fidelity", "--model", LENET_JSON, "--seed", "1", "--count", "6", "--out", str(out1))
    run_cli("fidelity", "--model", LENET_JSON, "--seed", "1", "--count", "6",
            "--jobs", "4", "--out", str(out4))
    a = json.loads((out1 / "fidelity.json").read_text())["summary"]
    b = json.loads((out4 / "fidelity.json").read_text())["summary"]
    assert a == b


def test_bench_sliced_only(tmp_path):
    out = tmp_path / "bench"
    assert run_cli(
        "bench", "--model", LENET_JSON, "--preset", "lenet5",
        "--config", "sliced", "--count", "2", "--interval", "10", "--out", str(out),
    ) == 0
    doc = json.loads((out / "bench.json").read_text())
    assert set(doc["time_seconds"]) == {"sliced"}
    assert doc["environment"]["sampling_interval_ms"] == 10
    assert (out / "bench.csv").exists()
    assert "Per-slice Witness" in (out / "bench.txt").read_text()


def test_bench_both_configs(tmp_path):
    out = tmp_path / "bench2"
    assert run_cli(
        "bench", "--model", LENET_JSON, "--preset", "lenet5",
        "--count", "2", "--interval", "10", "--out", str(out),
    ) == 0
    doc = json.loads((out / "bench.json").read_text())
    assert set(doc["time_seconds"]) == {"full", "sliced"}
    assert set(doc["time_seconds"]["sliced"]["proof"]) == {
        "Total", "Slice 1", "Slice 2", "Slice 3", "Slice 4", "Slice 5",
    }
    assert list(doc["time_seconds"]["full"]["proof"]) == ["Total"]


def test_missing_model_reports_error(tmp_path, capsys):
    code = run_cli("slice", "--model", str(tmp_path / "nope.json"), "--out", str(tmp_path))
    assert code == 1


def test_console_entry_point_installed():
    proc = subprocess.run(
        [sys.executable, "-m", "verislice.cli", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    for sub in ("slice", "adapt", "run", "prove", "verify", "fidelity", "bench"):
        assert sub in proc.stdout
