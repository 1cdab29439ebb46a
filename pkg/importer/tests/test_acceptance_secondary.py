"""Secondary acceptance: exchange-format round trip, and generated models
feeding the inference framework through its public file format and CLI."""

import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from model_importer import modeljson
from model_importer.cli import main
from model_importer.importer import import_model

from onnx_fixture import lenet_onnx_bytes, lenet_weights


def framework_cli():
    exe = shutil.which("verislice")
    if exe:
        return [exe]
    try:
        import verislice  # noqa: F401

        return [sys.executable, "-m", "verislice.cli"]
    except ImportError:
        pytest.skip("inference framework CLI not installed")


def test_exchange_format_round_trip_vs_source_runtime(tmp_path):
    """Reference model imported from the exchange format reproduces the
    source runtime's logits within 1e-5 elementwise on 10 random inputs."""
    torch = pytest.importorskip("torch")
    import torch.nn as nn

    # source model in the training framework, weights shared with the file
    weights = lenet_weights(9)
    module = nn.Sequential(
        nn.Conv2d(3, 6, 5), nn.ReLU(), nn.MaxPool2d(2, 2),
        nn.Conv2d(6, 16, 5), nn.ReLU(), nn.MaxPool2d(2, 2),
        nn.Flatten(),
        nn.Linear(400, 120), nn.ReLU(),
        nn.Linear(120, 84), nn.ReLU(),
        nn.Linear(84, 10),
    ).eval()
    with torch.no_grad():
        params = [
            ("0", "c1"), ("3", "c2"), ("7", "f1"), ("9", "f2"), ("11", "f3"),
        ]
        state = module.state_dict()
        for mod_key, fix_key in params:
            state[f"{mod_key}.weight"] = torch.from_numpy(weights[f"{fix_key}.w"].copy())
            state[f"{mod_key}.bias"] = torch.from_numpy(weights[f"{fix_key}.b"].copy())
        module.load_state_dict(state)

    src = tmp_path / "lenet.onnx"
    src.write_bytes(lenet_onnx_bytes(weights))
    data, manifest = import_model(src)
    doc = json.loads(data)

    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10):
        x = rng.uniform(0, 1, (3, 32, 32)).astype(np.float32).astype(np.float64)
        imported = modeljson.evaluate(doc, x)
        with torch.no_grad():
            source = module(torch.from_numpy(x.astype(np.float32))[None]).numpy().reshape(-1)
        worst = max(worst, float(np.abs(imported - source).max()))
    print(f"ACCEPTANCE PASS [importer-round-trip] max deviation {worst:.2e} (<=1e-5)")
    assert worst <= 1e-5


def test_generated_model_passes_framework_validation(tmp_path):
    """gen-lenet output passes the framework's constraint validation and a
    full proved pipeline run, through the CLI and model JSON only."""
    cli = framework_cli()
    out = tmp_path / "gen.json"
    assert main(["gen-lenet", "--seed", "4", "--out", str(out)]) == 0

    proc = subprocess.run(
        cli + ["slice", "--model", str(out), "--preset", "lenet5",
               "--out", str(tmp_path / "slices")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    manifest = json.loads((tmp_path / "slices" / "manifest.json").read_text())
    assert len(manifest["slices"]) == 5

    proc = subprocess.run(
        cli + ["run", "--model", str(out), "--preset", "lenet5",
               "--seed", "2", "--out", str(tmp_path / "runs")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    run_dirs = list((tmp_path / "runs").iterdir())
    record = json.loads((run_dirs[0] / "record.json").read_text())
    assert record["accepted"] is True
    print("ACCEPTANCE PASS [importer-framework-integration] "
          "generated model sliced and proved through the framework CLI")


def test_imported_model_runs_in_framework(tmp_path):
    """An ONNX-imported model drives the framework pipeline end to end."""
    cli = framework_cli()
    src = tmp_path / "lenet.onnx"
    src.write_bytes(lenet_onnx_bytes(lenet_weights(4)))
    out = tmp_path / "imported.json"
    assert main(["import", "--in", str(src), "--out", str(out)]) == 0

    proc = subprocess.run(
        cli + ["run", "--model", str(out), "--preset", "lenet5",
               "--seed", "0", "--out", str(tmp_path / "runs")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "accepted" in proc.stdout
