from typing import Generator
import json
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


def _short_trajectory() -> kslab.evolve.Trajectory:
    grid = kslab.fields.Grid.interval(4.0, 15, "navier")
    cfg = kslab.evolve.RunConfig(
        spec=kslab.models.ModelSpec(family="kse_ibvp"),
        v0=kslab.fields.Field.from_function(grid, lambda x: 0.1 * np.sin(np.pi * x / 4)),
        dt=0.01,
        t_end=0.05,
        snapshot_every=5,
        monitors=["lp_4", "l2", "sup_norm", "lp_2"],
    )
    return kslab.evolve.integrate(cfg, kslab.utils.silent_callbacks())


@pytest.mark.order(9)
def test_monitor_csv(_provide_tmp_directory: str) -> None:
    assert kslab.io.monitor_columns(["lp_4", "l2", "sup_norm", "lp_2.5", "hminus1"]) == [
        "sup_norm", "l2", "lp_2.5", "lp_4", "hminus1"
    ]
    trajectory = _short_trajectory()
    path = os.path.join(_provide_tmp_directory, "monitors.csv")
    kslab.io.write_monitors(path, trajectory)

    header, data = kslab.io.read_monitors(path)
    assert header == ["t", "sup_norm", "l2", "lp_2", "lp_4"]
    assert data.shape == (6, 5)
    assert np.array_equal(data[:, 0], np.array(trajectory.times))
    assert np.array_equal(data[:, 2], trajectory.get("l2"))


@pytest.mark.order(9)
def test_snapshots(_provide_tmp_directory: str) -> None:
    grid = utils.periodic_grid(16, dim=2)
    scalar = kslab.fields.random_field(grid, 3, seed=1)
    path = os.path.join(_provide_tmp_directory, "scalar.kslb")
    kslab.io.write_snapshot(path, scalar)
    with open(path, "rb") as f:
        assert f.read(6) == b"KSLB1\n"

    restored = kslab.io.read_snapshot(path)
    assert isinstance(restored, kslab.fields.Field)
    assert np.array_equal(restored.values, scalar.values)

    velocity = kslab.flows.taylor_green(grid)
    vector_path = os.path.join(_provide_tmp_directory, "vector.kslb")
    kslab.io.write_snapshot(vector_path, velocity)
    restored_vector = kslab.io.read_snapshot(vector_path, grid)
    assert isinstance(restored_vector, kslab.fields.VectorField)
    assert np.array_equal(restored_vector.components, velocity.components)

    with pytest.raises(ValueError, match="does not match"):
        kslab.io.read_snapshot(path, utils.periodic_grid(32, dim=2))


@pytest.mark.order(9)
def test_checkpoints(_provide_tmp_directory: str) -> None:
    grid = kslab.fields.Grid.interval(4.0, 31, "dirichlet")
    field = kslab.fields.random_field(grid, 5, seed=2)
    path = os.path.join(_provide_tmp_directory, "field.kslc")
    kslab.io.save_checkpoint(path, field, time=0.125, seed=2)

    checkpoint = kslab.io.load_checkpoint(path, grid)
    assert checkpoint.header.kind == "field"
    assert checkpoint.header.time == 0.125
    assert checkpoint.header.seed == 2
    assert isinstance(checkpoint.state, kslab.fields.Field)
    assert np.array_equal(checkpoint.state.values, field.values)
    assert checkpoint.state.grid == grid

    with pytest.raises(kslab.io.CheckpointError, match="grid mismatch"):
        kslab.io.load_checkpoint(path, kslab.fields.Grid.interval(4.0, 31, "navier"))

    flow_grid = utils.periodic_grid(16, dim=2)
    state = kslab.flows.FlowState(
        velocity=kslab.flows.taylor_green(flow_grid), m=2, time=0.5, seed=9
    )
    flow_path = os.path.join(_provide_tmp_directory, "flow.kslc")
    kslab.io.save_checkpoint(flow_path, state)
    restored = kslab.io.load_checkpoint(flow_path).state
    assert isinstance(restored, kslab.flows.FlowState)
    assert (restored.m, restored.time, restored.seed) == (2, 0.5, 9)
    assert np.array_equal(restored.velocity.components, state.velocity.components)


@pytest.mark.order(9)
def test_broken_checkpoints(_provide_tmp_directory: str) -> None:
    grid = utils.periodic_grid(16)
    path = os.path.join(_provide_tmp_directory, "broken.kslc")

    with open(path, "wb") as f:
        f.write(b"NOPE\n{}\n")
    with pytest.raises(kslab.io.CheckpointError, match="not a KSLC1 checkpoint"):
        kslab.io.load_checkpoint(path)

    header = kslab.io.CheckpointHeader(version=2, kind="field", grid=grid, time=0.0)
    with open(path, "wb") as f:
        f.write(b"KSLC1\n" + header.model_dump_json().encode() + b"\n")
        f.write(np.zeros(16, dtype="<f8").tobytes())
    with pytest.raises(kslab.io.CheckpointError, match="version 2"):
        kslab.io.load_checkpoint(path)

    header = kslab.io.CheckpointHeader(version=1, kind="field", grid=grid, time=0.0)
    with open(path, "wb") as f:
        f.write(b"KSLC1\n" + header.model_dump_json().encode() + b"\n")
        f.write(np.zeros(8, dtype="<f8").tobytes())
    with pytest.raises(kslab.io.CheckpointError, match="expected 16"):
        kslab.io.load_checkpoint(path)

    with pytest.raises(kslab.io.CheckpointError, match="could not read"):
        kslab.io.load_checkpoint(os.path.join(_provide_tmp_directory, "missing.kslc"))


@pytest.mark.order(9)
def test_run_writer_manifest(_provide_tmp_directory: str) -> None:
    config = kslab.config.parse_config("model.family = mkse\ngrid.points = 16\n")
    output_dir = os.path.join(_provide_tmp_directory, "run")
    writer = kslab.io.RunWriter(output_dir)
    writer.trajectory(_short_trajectory())
    writer.text("config.txt", kslab.config.render_config(config))
    writer.report({"outcome": "completed"})
    manifest = writer.manifest(config, outcome="completed")

    assert "monitors.csv" in manifest.outputs
    assert "snapshot_0001.kslb" in manifest.outputs
    assert manifest.config_digest == kslab.config.config_digest(config)
    assert manifest.threads.workers >= 1
    assert kslab.io.load_manifest(output_dir) == manifest
    assert kslab.io.unlisted_outputs(output_dir, manifest) == []

    with open(os.path.join(output_dir, "report.json")) as f:
        assert json.load(f) == {"outcome": "completed"}

    with open(os.path.join(output_dir, "stray.txt"), "w") as f:
        f.write("not part of the run")
    assert kslab.io.unlisted_outputs(output_dir, manifest) == ["stray.txt"]
