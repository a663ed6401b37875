"""GPU-bound integration checks; they skip cleanly without a device.

On a GPU host:
    pip install -e '.[gpu]'
    pytest runner/tests/test_gpu_integration.py -v
"""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

EXAMPLES = Path(__file__).parent.parent / "examples"


def _gpu_available() -> bool:
    try:
        import torch
        import triton  # noqa: F401

        return torch.cuda.is_available()
    except ImportError:
        return False


pytestmark = pytest.mark.skipif(
    not _gpu_available(), reason="needs torch + triton with a visible GPU"
)


def runner_cmd():
    return (
        f"{sys.executable} -m ktune_triton_runner "
        f"--binding {EXAMPLES / 'vector_add.binding.json'} --backend triton --protocol 1"
    )


def test_vector_add_probe_measures_positive_latencies():
    proc = subprocess.Popen(
        runner_cmd().split(),
        stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1,
    )
    try:
        def request(obj):
            proc.stdin.write(json.dumps(obj) + "\n")
            proc.stdin.flush()
            return json.loads(proc.stdout.readline())

        hello = request({"type": "hello", "protocol": 1})
        assert hello["fingerprint"]["device_name"]
        reply = request({
            "type": "evaluate",
            "config": {"BLOCK_SIZE": 1024},
            "shape": {"n_elements": 1 << 20},
            "warmups": 3,
            "reps": 10,
        })
        assert reply["status"] == "ok"
        assert len(reply["latencies_ms"]) == 10
        assert all(v > 0 for v in reply["latencies_ms"])
        assert reply["compile_ms"] > 0
        request({"type": "shutdown"})
        assert proc.wait(timeout=10) == 0
    finally:
        if proc.poll() is None:
            proc.kill()


@pytest.mark.skipif(shutil.which("ktune") is None, reason="ktune CLI not installed")
def test_vector_add_tuning_run(tmp_path):
    proc = subprocess.run(
        ["ktune", "tune", "--space", str(EXAMPLES / "vector_add.space.json"),
         "--runner", runner_cmd(), "--shape", "n_elements=1048576",
         "--timeout-ms", "60000",
         "--cache-dir", str(tmp_path / "cache"), "--json"],
        capture_output=True, text=True, timeout=600,
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    shape = json.loads(proc.stdout)["shapes"][0]
    assert shape["best"] is not None
    assert shape["time_split"]["total_compile_ms"] > 0
    assert shape["time_split"]["total_run_ms"] > 0
