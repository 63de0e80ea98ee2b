"""Shared fixtures.

One small synthetic corpus is pushed through the whole batch pipeline a
single time per session; the snapshot, report, and service suites all
read from it. Suites that mutate labels copy the directory first.
"""

import shutil

import pytest

from horizonscan import cli


@pytest.fixture(scope="session")
def pipeline_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    synth_dir = root / "synth"
    rc = cli.main(["--out", str(synth_dir), "synth",
                   "--n-docs", "300", "--n-topics", "5"])
    assert rc == 0
    out = root / "run"
    rc = cli.main(["--config", str(synth_dir / "pipeline.cfg"),
                   "--out", str(out), "run"])
    assert rc == 0
    return out


@pytest.fixture(scope="session")
def synth_dir(pipeline_dir):
    return pipeline_dir.parent / "synth"


@pytest.fixture()
def snapshot_copy(pipeline_dir, tmp_path):
    """Private copy for tests that write labels or tamper with files."""
    dest = tmp_path / "snap"
    shutil.copytree(pipeline_dir, dest)
    return dest
