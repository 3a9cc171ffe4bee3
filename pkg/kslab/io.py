from __future__ import annotations
from typing import Literal, Optional, Union
import importlib.metadata
import json
import os
import numpy as np
import pydantic
import scipy.fft
import tum_esm_utils
import kslab

Array = kslab.fields.Array

SNAPSHOT_MAGIC = b"KSLB1"
CHECKPOINT_MAGIC = b"KSLC1"
CHECKPOINT_VERSION = 1

MONITOR_ORDER = (
    "sup_norm",
    "l2",
    "l2_bound_ratio",
    "lp_*",
    "hminus1",
    "mean",
    "energy_residual",
    "J_lambda",
    "energy",
    "enstrophy",
    "divergence",
    "momentum",
)


def tool_version() -> str:
    try:
        return importlib.metadata.version("kslab")
    except importlib.metadata.PackageNotFoundError:
        return "unknown"


# monitor series


def monitor_columns(names: list[str]) -> list[str]:
    """Monitor names in the fixed CSV column order; `lp_<p>` columns sorted by p."""

    lp_columns = sorted(
        [n for n in names if kslab.evolve.LP_MONITOR_PATTERN.match(n) is not None],
        key=lambda n: float(n[3 :]),
    )
    columns: list[str] = []
    for name in MONITOR_ORDER:
        if name == "lp_*":
            columns += lp_columns
        elif name in names:
            columns.append(name)
    return columns


def write_monitors(path: str, trajectory: kslab.evolve.Trajectory) -> None:
    columns = monitor_columns(list(trajectory.series.keys()))
    data = np.column_stack(
        [np.array(trajectory.times)] + [np.array(trajectory.series[c]) for c in columns]
    )
    np.savetxt(
        path,
        data.reshape(len(trajectory.times), len(columns) + 1),
        fmt="%.17g",
        delimiter=",",
        header=",".join(["t"] + columns),
        comments="",
    )


def read_monitors(path: str) -> tuple[list[str], Array]:
    """Column names and the data rows of a monitor CSV."""

    with open(path) as f:
        header = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


# snapshots


def write_snapshot(
    path: str,
    field: Union[kslab.fields.Field, kslab.fields.VectorField],
) -> None:
    """`KSLB1`, then `dim points... extents...` on one line, then the values as
    little-endian binary64 in row-major order (components one after another)."""

    grid = field.grid
    values = field.values if isinstance(field, kslab.fields.Field) else field.components
    header = " ".join(
        [str(grid.dim)] + [str(n) for n in grid.points] + [repr(e) for e in grid.extents]
    )
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC + b"\n")
        f.write(header.encode() + b"\n")
        f.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_snapshot(
    path: str,
    grid: Optional[kslab.fields.Grid] = None,
) -> Union[kslab.fields.Field, kslab.fields.VectorField]:
    """Read a snapshot onto `grid`, or onto a periodic grid with origin zero
    when no grid is given."""

    with open(path, "rb") as f:
        content = f.read()
    magic, header, payload = content.split(b"\n", 2)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f'"{path}" is not a KSLB1 snapshot')
    parts = header.decode().split()
    dim = int(parts[0])
    points = tuple(int(n) for n in parts[1 : 1 + dim])
    extents = tuple(float(e) for e in parts[1 + dim : 1 + 2 * dim])
    if grid is None:
        grid = kslab.fields.Grid.periodic(extents, points)
    elif grid.points != points or grid.extents != extents:
        raise ValueError(
            f"snapshot grid {points} × {extents} does not match {grid.points} × {grid.extents}"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if values.size == grid.size:
        return kslab.fields.Field(grid=grid, values=values.reshape(grid.shape))
    if values.size % grid.size != 0:
        raise ValueError(f'"{path}" holds {values.size} values, not a multiple of {grid.size}')
    return kslab.fields.VectorField(
        grid=grid, components=values.reshape((values.size // grid.size, ) + grid.shape)
    )


# checkpoints


class CheckpointError(ValueError):
    pass


class CheckpointHeader(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")

    version: int
    kind: Literal["field", "flow"]
    grid: kslab.fields.Grid
    time: float
    seed: Optional[int] = None
    m: Optional[int] = None
    components: int = 1


class Checkpoint(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(arbitrary_types_allowed=True)

    header: CheckpointHeader
    state: Union[kslab.fields.Field, kslab.flows.FlowState]


def save_checkpoint(
    path: str,
    state: Union[kslab.fields.Field, kslab.flows.FlowState],
    time: float = 0.0,
    seed: Optional[int] = None,
) -> None:
    """Bit-exact dump of a scalar field (at `time`) or a flow state (at its own time)."""

    if isinstance(state, kslab.flows.FlowState):
        header = CheckpointHeader(
            version=CHECKPOINT_VERSION,
            kind="flow",
            grid=state.grid,
            time=state.time,
            seed=state.seed,
            m=state.m,
            components=state.velocity.n_components,
        )
        values = state.velocity.components
    else:
        header = CheckpointHeader(
            version=CHECKPOINT_VERSION, kind="field", grid=state.grid, time=time, seed=seed
        )
        values = state.values
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC + b"\n")
        f.write(header.model_dump_json().encode() + b"\n")
        f.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def load_checkpoint(path: str, grid: Optional[kslab.fields.Grid] = None) -> Checkpoint:
    """Restore a checkpoint; `grid` (when given) must equal the stored grid."""

    try:
        with open(path, "rb") as f:
            content = f.read()
    except OSError as e:
        raise CheckpointError(f'could not read checkpoint "{path}": {e}') from e
    parts = content.split(b"\n", 2)
    if len(parts) != 3 or parts[0] != CHECKPOINT_MAGIC:
        raise CheckpointError(f'"{path}" is not a KSLC1 checkpoint')
    try:
        header = CheckpointHeader.model_validate_json(parts[1])
    except pydantic.ValidationError as e:
        raise CheckpointError(f'"{path}" has an invalid header: {e}') from e
    if header.version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {header.version} is not supported " +
            f"(expected {CHECKPOINT_VERSION})"
        )
    if grid is not None and grid != header.grid:
        raise CheckpointError(f"grid mismatch: checkpoint has {header.grid}, expected {grid}")

    values = np.frombuffer(parts[2], dtype="<f8").astype(np.float64)
    expected = header.components * header.grid.size
    if values.size != expected:
        raise CheckpointError(f'"{path}" holds {values.size} values, expected {expected}')

    state: Union[kslab.fields.Field, kslab.flows.FlowState]
    if header.kind == "flow":
        velocity = kslab.fields.VectorField(
            grid=header.grid,
            components=values.reshape((header.components, ) + header.grid.shape),
        )
        state = kslab.flows.FlowState(
            velocity=velocity, m=header.m or 1, time=header.time, seed=header.seed
        )
    else:
        state = kslab.fields.Field(grid=header.grid, values=values.reshape(header.grid.shape))
    return Checkpoint(header=header, state=state)


# manifest and reports


class ThreadConfig(pydantic.BaseModel):
    workers: int = pydantic.Field(..., description="Size of the run worker pool")
    fft_workers: int = pydantic.Field(..., description="Threads used inside one FFT")


class RunManifest(pydantic.BaseModel):
    config_digest: str
    seed: Optional[int]
    tool_version: str
    threads: ThreadConfig
    outcome: Optional[str] = None
    outputs: list[str] = pydantic.Field(
        default_factory=list, description="Paths relative to the output directory"
    )


def thread_config(n_tasks: int = 1) -> ThreadConfig:
    return ThreadConfig(
        workers=kslab.utils.configured_workers(n_tasks),
        fft_workers=scipy.fft.get_workers(),
    )


def write_manifest(output_dir: str, manifest: RunManifest) -> str:
    path = os.path.join(output_dir, "manifest.json")
    tum_esm_utils.files.dump_file(path, manifest.model_dump_json(indent=4))
    return path


def load_manifest(output_dir: str) -> RunManifest:
    return RunManifest.model_validate_json(
        tum_esm_utils.files.load_file(os.path.join(output_dir, "manifest.json"))
    )


def write_report(output_dir: str, report: pydantic.BaseModel | dict[str, object]) -> str:
    path = os.path.join(output_dir, "report.json")
    if isinstance(report, pydantic.BaseModel):
        content = report.model_dump_json(indent=4)
    else:
        content = json.dumps(report, indent=4)
    tum_esm_utils.files.dump_file(path, content)
    return path


def unlisted_outputs(output_dir: str, manifest: RunManifest) -> list[str]:
    """Files in `output_dir` the manifest does not mention (the manifest and lock excluded)."""

    files = tum_esm_utils.files.list_directory(
        output_dir, include_directories=False, include_files=True, include_links=False
    )
    listed = set(manifest.outputs) | {"manifest.json", ".kslab.lock"}
    return sorted(f for f in files if f not in listed)


class RunWriter:
    """Writes the artifacts of one run into its output directory and remembers them
    for the manifest."""

    def __init__(self, output_dir: str) -> None:
        self.output_dir = output_dir
        self.outputs: list[str] = []
        os.makedirs(output_dir, exist_ok=True)

    def path(self, name: str) -> str:
        if name not in self.outputs:
            self.outputs.append(name)
        return os.path.join(self.output_dir, name)

    def trajectory(self, trajectory: kslab.evolve.Trajectory) -> None:
        write_monitors(self.path("monitors.csv"), trajectory)
        for index, snapshot in enumerate(trajectory.snapshots):
            write_snapshot(self.path(f"snapshot_{index:04d}.kslb"), snapshot.field)

    def report(self, report: pydantic.BaseModel | dict[str, object]) -> None:
        write_report(self.output_dir, report)
        self.path("report.json")

    def text(self, name: str, content: str) -> None:
        tum_esm_utils.files.dump_file(self.path(name), content)

    def manifest(
        self,
        config: kslab.config.KslabConfig,
        outcome: Optional[str] = None,
        n_tasks: int = 1,
    ) -> RunManifest:
        manifest = RunManifest(
            config_digest=kslab.config.config_digest(config),
            seed=config.run.seed,
            tool_version=tool_version(),
            threads=thread_config(n_tasks),
            outcome=outcome,
            outputs=sorted(self.outputs),
        )
        write_manifest(self.output_dir, manifest)
        return manifest
