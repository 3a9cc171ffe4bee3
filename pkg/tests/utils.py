from typing import Callable
import os
import sys
import time
import numpy as np
import kslab


def generate_tmp_directory_path() -> str:
    """Generate a path to a temporary directory that does not exist yet."""
    current_timestamp = int(time.time())
    python_version = sys.version.split(" ")[0]
    current_filepath: Callable[
        [], str] = lambda: f"/tmp/kslab_test_{current_timestamp}_{python_version}"
    while os.path.exists(current_filepath()):
        current_timestamp += 1
    return current_filepath()


def provide_tmp_directory() -> str:
    tmp_dir_path = generate_tmp_directory_path()
    os.mkdir(tmp_dir_path)
    print("tmp_dir_path = ", tmp_dir_path)
    return tmp_dir_path


def periodic_grid(n: int = 64, dim: int = 1, extent: float = 2 * np.pi) -> kslab.fields.Grid:
    return kslab.fields.Grid.periodic([extent] * dim, [n] * dim)


def collecting_callbacks() -> tuple[kslab.utils.SimulationCallbacks, list[str], list[str]]:
    """Callbacks that record every message instead of printing it."""

    infos: list[str] = []
    errors: list[str] = []
    callbacks = kslab.utils.SimulationCallbacks(
        log_info=lambda msg: infos.append(msg),
        log_error=lambda msg: errors.append(msg),
    )
    return callbacks, infos, errors
