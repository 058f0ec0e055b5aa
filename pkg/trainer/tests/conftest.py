import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """A small paired dataset produced by the simulator CLI (the trainer's
    only upstream interface is these files)."""
    out = tmp_path_factory.mktemp("toyds")
    cmd = [
        sys.executable, "-m", "dualsmoke.cli",
        "dataset",
        "--train", "8", "--test", "2",
        "--seed", "77",
        "--grid", "64x64",
        "--frames", "80",
        "--out", str(out),
    ]
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=900)
    assert proc.returncode == 0, proc.stderr
    manifest = out / "manifest.jsonl"
    assert manifest.exists()
    return manifest
