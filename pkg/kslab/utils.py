from __future__ import annotations
from typing import Any, Callable, Iterable, Optional, TypeVar
import concurrent.futures
import os
import threading
import filelock
import pydantic

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV_VARIABLE = "KSLAB_WORKERS"


class SimulationCallbacks(pydantic.BaseModel):
    """A collection of callbacks passed to the long-running operations."""

    model_config = pydantic.ConfigDict(extra="forbid")

    log_info: Callable[[str], None] = pydantic.Field(
        default=(lambda msg: print(f"INFO - {msg}")),
        description="Function to be called when logging a message of type INFO.",
    )
    log_error: Callable[[str], None] = pydantic.Field(
        default=(lambda msg: print(f"ERROR - {msg}")),
        description="Function to be called when logging a message of type ERROR.",
    )
    progress_interval: float = pydantic.Field(
        default=60.0,
        description=
        "Minimum number of seconds between two progress messages of a run. The final progress message is always logged.",
    )

    @pydantic.field_validator("progress_interval", mode="after")
    @classmethod
    def _validate_progress_interval(cls, v: float) -> float:
        if v < 0:
            raise ValueError(f"value `{v}` is invalid: progress interval must not be negative")
        return v

    def prefixed(self, label: str) -> SimulationCallbacks:
        """Return a copy whose messages are prefixed with `label`."""

        log_info, log_error = self.log_info, self.log_error
        return SimulationCallbacks(
            log_info=lambda msg: log_info(f"{label}: {msg}"),
            log_error=lambda msg: log_error(f"{label}: {msg}"),
            progress_interval=self.progress_interval,
        )


def serialized(callbacks: SimulationCallbacks) -> SimulationCallbacks:
    """Wrap the log functions so that concurrent runs never interleave lines."""

    lock = threading.Lock()
    log_info, log_error = callbacks.log_info, callbacks.log_error

    def _info(msg: str) -> None:
        with lock:
            log_info(msg)

    def _error(msg: str) -> None:
        with lock:
            log_error(msg)

    return SimulationCallbacks(
        log_info=_info, log_error=_error, progress_interval=callbacks.progress_interval
    )


def silent_callbacks() -> SimulationCallbacks:
    return SimulationCallbacks(log_info=lambda msg: None, log_error=lambda msg: None)


def configured_workers(n_tasks: int) -> int:
    """Size of the worker pool: `KSLAB_WORKERS` if set, one worker per task otherwise."""

    value = os.getenv(WORKERS_ENV_VARIABLE)
    if value is None or value.strip() == "":
        return max(1, n_tasks)
    try:
        workers = int(value)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV_VARIABLE} must be a positive integer, got {repr(value)}")
    if workers < 1:
        raise ValueError(f"{WORKERS_ENV_VARIABLE} must be a positive integer, got {workers}")
    return min(workers, max(1, n_tasks))


def map_concurrently(
    function: Callable[[T], R],
    items: Iterable[T],
    workers: Optional[int] = None,
) -> list[R]:
    """Apply `function` to every item on a bounded thread pool.

    The results keep the order of `items`, so the outcome does not depend on
    the pool size or on scheduling."""

    item_list = list(items)
    n_workers = configured_workers(len(item_list)) if workers is None else max(1, workers)
    if n_workers == 1 or len(item_list) <= 1:
        return [function(item) for item in item_list]
    with concurrent.futures.ThreadPoolExecutor(max_workers=n_workers) as executor:
        return list(executor.map(function, item_list))


class OutputDirectoryLock:
    """Marks an output directory as "in use" for the duration of a run.

    A second run pointed at the same directory fails instead of mixing its
    files with the running one."""

    def __init__(
        self,
        output_dir: str,
        log_info: Optional[Callable[[str], None]] = None,
    ) -> None:
        self.lock_filepath = os.path.join(output_dir, ".kslab.lock")
        self.log_info = log_info
        self.lock = filelock.FileLock(self.lock_filepath, timeout=0)

    def acquire(self) -> None:
        if self.log_info is not None:
            self.log_info(f'acquiring lock at "{self.lock_filepath}"')
        try:
            self.lock.acquire()
        except filelock.Timeout:
            raise RuntimeError(
                f"path is used by another run: filelock at {self.lock_filepath} is locked"
            )

    def release(self) -> None:
        if self.log_info is not None:
            self.log_info(f'releasing lock at "{self.lock_filepath}"')
        self.lock.release()
        if os.path.isfile(self.lock_filepath):
            os.remove(self.lock_filepath)

    def __enter__(self) -> OutputDirectoryLock:
        self.acquire()
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        self.release()
