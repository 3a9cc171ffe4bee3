from typing import Any, Generator
import json
import math
import os
import sys
import numpy as np
import pytest
import kslab

from . import utils


@pytest.fixture
def _provide_tmp_directory() -> Generator[str, None, None]:
    tmp_dir_path = utils.provide_tmp_directory()
    yield tmp_dir_path
    os.system(f"rm -rf /tmp/kslab_test_*_{sys.version.split(' ')[0]}/")


def _load_report(output_dir: str) -> Any:
    with open(os.path.join(output_dir, "report.json")) as f:
        return json.load(f)


SHORT_RUN = [
    "--set", "grid.points=15",
    "--set", "time.dt=0.01",
    "--set", "time.t_end=0.05",
]  # yapf: disable


@pytest.mark.order(10)
def test_run_and_restore(_provide_tmp_directory: str) -> None:
    output_dir = os.path.join(_provide_tmp_directory, "run")
    argv = ["run", *SHORT_RUN, "--set", "initial.preset=zero", "--output-dir", output_dir]
    assert kslab.cli.main(argv) == 0

    manifest = kslab.io.load_manifest(output_dir)
    assert manifest.outcome == "completed"
    assert {"config.txt", "monitors.csv", "final.kslc"} <= set(manifest.outputs)
    assert kslab.io.unlisted_outputs(output_dir, manifest) == []
    _, data = kslab.io.read_monitors(os.path.join(output_dir, "monitors.csv"))
    assert data.shape == (6, 3)
    assert np.all(data[:, 1 :] == 0)

    restored_dir = os.path.join(_provide_tmp_directory, "restored")
    argv = [
        "run", *SHORT_RUN, "--set", "time.t_end=0.1", "--restore",
        os.path.join(output_dir, "final.kslc"), "--output-dir", restored_dir
    ]
    assert kslab.cli.main(argv) == 0
    _, data = kslab.io.read_monitors(os.path.join(restored_dir, "monitors.csv"))
    assert data[0, 0] == pytest.approx(0.05)
    assert data[-1, 0] == pytest.approx(0.1)

    argv = [
        "flow", "--set", "grid.dim=2", "--set", "grid.points=16", "--set",
        "initial.preset=taylor_green", "--restore",
        os.path.join(output_dir, "final.kslc"), "--output-dir", restored_dir
    ]
    assert kslab.cli.main(argv) == kslab.cli.FAILURE_EXIT_CODE


@pytest.mark.order(10)
def test_config_errors(_provide_tmp_directory: str) -> None:
    output_dir = os.path.join(_provide_tmp_directory, "bad")
    for argv in [
        ["run", "--set", "model.colour=red", "--output-dir", output_dir],
        ["run", "--set", "time.dt=-1", "--output-dir", output_dir],
        ["certify", "--case", "zero", "--output-dir", output_dir],
    ]:
        assert kslab.cli.main(argv) == kslab.cli.CONFIG_ERROR_EXIT_CODE

    assert kslab.cli.main([
        "run", "--config", os.path.join(_provide_tmp_directory, "missing.txt")
    ]) == kslab.cli.FAILURE_EXIT_CODE


@pytest.mark.order(10)
def test_kernel(_provide_tmp_directory: str) -> None:
    output_dir = os.path.join(_provide_tmp_directory, "kernel")
    assert kslab.cli.main(["kernel", "--m", "1", "--output-dir", output_dir]) == 0

    report = _load_report(output_dir)
    assert report["mass"] == pytest.approx(1.0, abs=1e-8)
    assert report["alpha_expected"] == pytest.approx(2.0)
    assert report["decay_fit"] is not None
    with open(os.path.join(output_dir, "kernel.csv")) as f:
        assert f.readline().strip() == "y,F"


@pytest.mark.order(10)
def test_certify(_provide_tmp_directory: str) -> None:
    output_dir = os.path.join(_provide_tmp_directory, "certify")
    argv = [
        "certify", "--case", "strict", "--j0", "0", "--kappa", "1", "--a", "1", "--output-dir",
        output_dir
    ]
    assert kslab.cli.main(argv) == 0

    report = _load_report(output_dir)
    assert report["certificate"]["case"] == "strict"
    assert report["certificate"]["t_infinity_bound"] == pytest.approx(math.pi / 2)
    t_low, t_high = report["oracle_divergence"]
    assert t_low <= math.pi / 2 * (1 + 1e-3)
    assert t_high > t_low


@pytest.mark.order(10)
def test_volterra(_provide_tmp_directory: str) -> None:
    output_dir = os.path.join(_provide_tmp_directory, "volterra")
    argv = ["volterra", "--t-end", "1", "--set", "volterra.steps=1000", "--output-dir", output_dir]
    assert kslab.cli.main(argv) == 0
    report = _load_report(output_dir)
    assert report["beta"] == pytest.approx(0.625)
    assert report["bounded"] is True
    assert "times" not in report
    assert os.path.isfile(os.path.join(output_dir, "volterra.csv"))

    unbounded_dir = os.path.join(_provide_tmp_directory, "unbounded")
    assert kslab.cli.main(["volterra", "--p", "7", "--output-dir", unbounded_dir]) == 0
    assert _load_report(unbounded_dir)["unbounded_regime"] is True


@pytest.mark.order(10)
def test_rescale(_provide_tmp_directory: str) -> None:
    output_dir = os.path.join(_provide_tmp_directory, "rescale")
    argv = [
        "rescale", "--kind", "ck_l2", "--c-k", "10", "--set", "model.family=mkse", "--set",
        "grid.points=64", "--output-dir", output_dir
    ]
    assert kslab.cli.main(argv) == 0

    report = _load_report(output_dir)
    assert report["law"]["derived"]["nu_k"] == pytest.approx(1e-5)
    assert report["norm_after"] == pytest.approx(report["norm_before"], rel=1e-10)
    rescaled = kslab.io.read_snapshot(os.path.join(output_dir, "rescaled.kslb"))
    assert isinstance(rescaled, kslab.fields.Field)
    assert float(np.max(np.abs(rescaled.values))) == pytest.approx(0.1, rel=1e-6)


@pytest.mark.order(10)
def test_sweep(_provide_tmp_directory: str) -> None:
    output_dir = os.path.join(_provide_tmp_directory, "sweep")
    argv = [
        "sweep", "--set", "model.family=mkse", "--set", "grid.points=16", "--set",
        "initial.preset=zero", "--set", "time.dt=0.01", "--set", "time.t_end=0.02", "--set",
        "sweep.model.p=2, 3", "--output-dir", output_dir
    ]
    assert kslab.cli.main(argv) == 0

    runs = _load_report(output_dir)["runs"]
    assert [r["label"] for r in runs] == ["run-p=2", "run-p=3"]
    assert [r["outcome"] for r in runs] == ["completed", "completed"]
    for run in runs:
        manifest = kslab.io.load_manifest(os.path.join(output_dir, run["output_dir"]))
        assert manifest.threads.workers == kslab.utils.configured_workers(2)
        assert "monitors.csv" in manifest.outputs
    assert kslab.io.load_manifest(output_dir).outcome == "completed"


@pytest.mark.order(10)
def test_check(_provide_tmp_directory: str) -> None:
    output_dir = os.path.join(_provide_tmp_directory, "check")
    argv = [
        "check", "--only", "critical_exponents", "--only", "rescaling_laws", "--output-dir",
        output_dir
    ]
    assert kslab.cli.main(argv) == 0
    names = [r["name"] for r in _load_report(output_dir)["results"]]
    assert names == ["critical_exponents", "rescaling_laws"]

    argv = ["check", "--only", "no_such_check", "--output-dir", output_dir]
    assert kslab.cli.main(argv) == kslab.cli.FAILURE_EXIT_CODE
