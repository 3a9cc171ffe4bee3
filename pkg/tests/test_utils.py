from typing import Generator
import os
import sys
import time
import pydantic
import pytest
import kslab

from . import utils


@pytest.fixture
def _provide_tmp_directory() -> Generator[str, None, None]:
    tmp_dir_path = utils.provide_tmp_directory()
    yield tmp_dir_path
    os.system(f"rm -rf /tmp/kslab_test_*_{sys.version.split(' ')[0]}/")


@pytest.mark.order(0)
def test_callbacks() -> None:
    callbacks, infos, errors = utils.collecting_callbacks()
    prefixed = callbacks.prefixed("p=2")
    prefixed.log_info("started")
    prefixed.log_error("diverged")
    kslab.utils.serialized(callbacks).log_info("done")
    assert infos == ["p=2: started", "done"]
    assert errors == ["p=2: diverged"]

    with pytest.raises(pydantic.ValidationError, match="must not be negative"):
        kslab.utils.SimulationCallbacks(progress_interval=-1)


@pytest.mark.order(0)
def test_configured_workers(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv(kslab.utils.WORKERS_ENV_VARIABLE, raising=False)
    assert kslab.utils.configured_workers(5) == 5
    assert kslab.utils.configured_workers(0) == 1

    monkeypatch.setenv(kslab.utils.WORKERS_ENV_VARIABLE, "3")
    assert kslab.utils.configured_workers(5) == 3
    assert kslab.utils.configured_workers(2) == 2

    for value in ("0", "many"):
        monkeypatch.setenv(kslab.utils.WORKERS_ENV_VARIABLE, value)
        with pytest.raises(ValueError, match="positive integer"):
            kslab.utils.configured_workers(5)


@pytest.mark.order(0)
def test_map_concurrently_keeps_order() -> None:
    def slow_square(x: int) -> int:
        time.sleep(0.01 * (5 - x))
        return x * x

    for workers in (1, 2, 5):
        assert kslab.utils.map_concurrently(slow_square, range(5), workers) == [0, 1, 4, 9, 16]
    assert kslab.utils.map_concurrently(slow_square, [], 4) == []


@pytest.mark.order(0)
def test_output_directory_lock(_provide_tmp_directory: str) -> None:
    messages: list[str] = []
    lock_path = os.path.join(_provide_tmp_directory, ".kslab.lock")

    with kslab.utils.OutputDirectoryLock(_provide_tmp_directory, messages.append):
        assert os.path.isfile(lock_path)
        with pytest.raises(RuntimeError, match="used by another run"):
            kslab.utils.OutputDirectoryLock(_provide_tmp_directory).acquire()

    assert not os.path.isfile(lock_path)
    assert messages[0].startswith("acquiring lock")
    assert messages[1].startswith("releasing lock")
