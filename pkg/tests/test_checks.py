import pytest
import kslab

from . import utils


@pytest.mark.order(11)
@pytest.mark.parametrize(
    "name", ["critical_exponents", "rescaling_laws", "blowup_closed_forms", "volterra"]
)
def test_fast_checks_pass(name: str) -> None:
    result = kslab.checks.CHECKS[name]()
    assert result.name == name
    assert result.passed, result.detail


SOLVER_CHECKS = [
    "energy_identity",
    "l2_growth",
    "fundamental_solution",
    "leray_projector",
    "taylor_green",
    "mkse_uniform_bound",
    "hminus1_monotone",
    "duhamel_oracle",
    "cahn_hilliard_blowup",
]


@pytest.mark.order(11)
@pytest.mark.parametrize("name", SOLVER_CHECKS)
def test_solver_checks_pass(name: str) -> None:
    result = kslab.checks.CHECKS[name]()
    assert result.name == name
    assert result.passed, f"{result.detail} (measured {result.value}, threshold {result.threshold})"


@pytest.mark.order(11)
def test_every_check_is_exercised() -> None:
    fast = {"critical_exponents", "rescaling_laws", "blowup_closed_forms", "volterra"}
    assert fast | set(SOLVER_CHECKS) == set(kslab.checks.CHECKS)


@pytest.mark.order(11)
def test_run_checks() -> None:
    callbacks, infos, errors = utils.collecting_callbacks()
    report = kslab.checks.run_checks(
        ["rescaling_laws", "critical_exponents"], callbacks, workers=2
    )
    assert [r.name for r in report.results] == ["rescaling_laws", "critical_exponents"]
    assert report.passed
    assert all(r.seconds >= 0 for r in report.results)
    assert len(infos) == 2 and all("passed" in message for message in infos)
    assert errors == []

    with pytest.raises(ValueError, match="unknown checks"):
        kslab.checks.run_checks(["rescaling_laws", "no_such_check"])


@pytest.mark.order(11)
def test_failing_check_is_reported(monkeypatch: pytest.MonkeyPatch) -> None:
    def broken() -> kslab.checks.CheckResult:
        raise RuntimeError("solver diverged")

    monkeypatch.setitem(kslab.checks.CHECKS, "broken", broken)
    callbacks, infos, errors = utils.collecting_callbacks()
    report = kslab.checks.run_checks(["broken"], callbacks)

    assert not report.passed
    assert report.results[0].detail == "RuntimeError: solver diverged"
    assert errors == ["broken: RuntimeError: solver diverged"]
    assert "broken: FAILED" in infos[0]
