"""Shared fixtures: a small generated dataset and a platform file.

Everything the agent touches comes from the simulator's public surface:
the ``dagsched`` CLI for generation/serving and the JSON file formats.
"""

import json
import shutil
import subprocess

import pytest

from dagrl import EnvClient


def require_dagsched():
    if shutil.which("dagsched") is None:
        pytest.skip("dagsched CLI not on PATH", allow_module_level=True)


require_dagsched()


@pytest.fixture(scope="session")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("agentdata")


@pytest.fixture(scope="session")
def platform_file(workdir):
    path = workdir / "platform.json"
    path.write_text(json.dumps({
        "K": 1, "M": 1, "procs_per_es": 1,
        "f_ue": 1e9, "f_es": 1e10, "tr_l": 2e6, "tr_s": 2e7,
    }))
    return path


@pytest.fixture(scope="session")
def two_server_platform_file(workdir):
    path = workdir / "platform2.json"
    path.write_text(json.dumps({
        "K": 2, "M": 2, "procs_per_es": 1,
        "f_ue": 1e9, "f_es": 1e10, "tr_l": 2e6, "tr_s": 2e7,
    }))
    return path


def generate(out_dir, n, count, seed, k=1):
    subprocess.run(
        ["dagsched", "gen", "--n", str(n), "--count", str(count),
         "--seed", str(seed), "--k", str(k), "--out", str(out_dir)],
        check=True, capture_output=True)
    return out_dir


@pytest.fixture(scope="session")
def dataset_dir(workdir):
    return generate(workdir / "ds", n=6, count=6, seed=21)


@pytest.fixture()
def client(dataset_dir, platform_file):
    c = EnvClient.spawn(dataset_dir, platform_file)
    yield c
    c.close()
