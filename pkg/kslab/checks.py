"""Desk-scale acceptance suite behind `kslab check`.

Every check builds its own inputs, runs them and returns one `CheckResult`
with the measured value next to the threshold it was compared against."""

from __future__ import annotations
from fractions import Fraction
from typing import Callable, Optional
import math
import time
import numpy as np
import pydantic
import kslab


class CheckResult(pydantic.BaseModel):
    name: str
    passed: bool
    value: float = pydantic.Field(..., description="The measured quantity")
    threshold: float
    detail: str = ""
    seconds: float = 0.0


class CheckReport(pydantic.BaseModel):
    results: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


def _result(name: str, passed: bool, value: float, threshold: float, detail: str) -> CheckResult:
    return CheckResult(
        name=name, passed=bool(passed), value=float(value), threshold=threshold, detail=detail
    )


def _kse_ibvp_run(
    v0: kslab.fields.Field,
    dt: float,
    t_end: float,
    monitors: list[str],
) -> kslab.evolve.Trajectory:
    config = kslab.evolve.RunConfig(
        spec=kslab.models.ModelSpec(family="kse_ibvp", bc="navier"),
        v0=v0,
        dt=dt,
        t_end=t_end,
        monitors=monitors,
    )
    return kslab.evolve.integrate(config, kslab.utils.silent_callbacks())


def check_energy_identity() -> CheckResult:
    """Residual of the energy identity of the KSE IBVP; shortened to t ∈ [0, 0.1]."""

    grid = kslab.fields.Grid.interval(4.0, 63, "navier")
    v0 = kslab.fields.Field.from_function(grid, lambda x: np.sin(np.pi * x / 4))
    residuals = []
    for dt in (1e-4, 5e-5):
        trajectory = _kse_ibvp_run(v0, dt, 0.1, ["l2", "energy_residual"])
        scale = np.maximum(1.0, trajectory.get("l2")**2)
        residuals.append(float(np.max(np.abs(trajectory.get("energy_residual")) / scale)))
    ratio = residuals[1] / residuals[0] if residuals[0] > 0 else 0.0
    return _result(
        "energy_identity",
        residuals[0] <= 1e-6 and ratio <= 0.6,
        residuals[0],
        1e-6,
        f"residual {residuals[0]:.3e} at dt = 1e-4, halving dt scales it by {ratio:.3f}",
    )


def check_l2_growth() -> CheckResult:
    """E(t) ≤ E(0) e^{t/2} for 20 seeded initial data on the KSE IBVP."""

    grid = kslab.fields.Grid.interval(4.0, 63, "navier")
    worst = 0.0
    for seed in range(20):
        v0 = kslab.fields.random_field(grid, 8, seed)
        trajectory = _kse_ibvp_run(v0, 1e-3, 5.0, ["l2"])
        worst = max(worst, kslab.evolve.l2_growth_check(trajectory, 1e-4).max_ratio)
    return _result(
        "l2_growth", worst <= 1 + 1e-4, worst, 1 + 1e-4, "max E(t)/(E(0)e^{t/2}) over 20 seeds"
    )


def check_fundamental_solution() -> CheckResult:
    """Gaussian match, unit mass, operator residual and decay exponents of the kernels."""

    gaussian_kernel = kslab.kernels.fundamental_solution(1, 1)
    y = gaussian_kernel.profile.grid.coordinates()[0]
    gaussian = np.exp(-y**2 / 4) / math.sqrt(4 * math.pi)
    gaussian_error = float(np.max(np.abs(gaussian_kernel.profile.values - gaussian)))

    mass_error, residual = 0.0, 0.0
    for m in (1, 2, 3):
        for dim in (1, 2):
            kernel = kslab.kernels.fundamental_solution(m, dim)
            mass_error = max(mass_error, abs(kernel.mass - 1))
            if dim == 1:
                residual = max(residual, kslab.kernels.kernel_residual(kernel))

    alpha_errors = []
    for m in (2, 3):
        fit = kslab.kernels.fit_decay(kslab.kernels.fundamental_solution(m, 1)).decay_fit
        assert fit is not None
        expected = kslab.kernels.decay_exponent(m)
        alpha_errors.append(abs(fit.alpha - expected) / expected)

    passed = (
        gaussian_error <= 1e-10 and mass_error <= 1e-8 and residual <= 1e-6 and
        max(alpha_errors) <= 0.05
    )
    return _result(
        "fundamental_solution",
        passed,
        gaussian_error,
        1e-10,
        f"gaussian {gaussian_error:.2e}, mass {mass_error:.2e}, residual {residual:.2e}, " +
        f"alpha errors {', '.join(f'{e:.3f}' for e in alpha_errors)}",
    )


def check_blowup_closed_forms() -> CheckResult:
    """Closed-form envelopes against the Riccati oracle for the three certificate cases."""

    cases: list[tuple[kslab.blowup.CertificateCase, float, float, float]] = [
        ("strict", 0.0, 1.0, 1.0),
        ("zero", 1.0, 2.0, 0.0),
        ("negative", 2.0, 1.0, 1.0),
    ]
    worst, diverged_in_time = 0.0, True
    for case, J0, k, a in cases:
        certificate = kslab.blowup.closed_form_certificate(case, J0, k, a)
        T = certificate.t_infinity_bound
        t_grid = np.linspace(0, 0.9 * T, 10)
        oracle = kslab.blowup.riccati_oracle(case, J0, k, a, t_grid)
        closed = certificate.lower_bound(np.array(oracle.times))
        error = np.abs(np.array(oracle.values) - closed) / np.maximum(np.abs(closed), 1.0)
        worst = max(worst, float(np.max(error)))
        beyond = kslab.blowup.riccati_oracle(case, J0, k, a, np.array([0.0, 1.5 * T]))
        diverged_in_time &= (
            beyond.divergence_bracket is not None and
            beyond.divergence_bracket[0] <= T + 10 * 1e-5 * T
        )
    return _result(
        "blowup_closed_forms",
        worst <= 1e-8 and diverged_in_time,
        worst,
        1e-8,
        "oracle diverges no later than every bound" if diverged_in_time else
        "oracle outlived a bound",
    )


def check_volterra() -> CheckResult:
    """β = 5/8 and V ≤ V̂ on [0, 3] for (m, N, p) = (2, 1, 2)."""

    report = kslab.volterra.volterra_bound(2.0, 2, 1, 3.0)
    beta_exact = kslab.volterra.beta_exact(Fraction(2), 2, 1)
    margin = float(np.min(np.array(report.V_hat) - np.array(report.V)))
    return _result(
        "volterra",
        beta_exact == Fraction(5, 8) and report.bounded and report.monotone,
        margin,
        0.0,
        f"beta = {beta_exact}, min(V̂ − V) = {margin:.3e}",
    )


def check_critical_exponents() -> CheckResult:
    """Exact values of the critical-exponent table."""

    def exact(m: int, dim: int, name: str) -> Optional[Fraction]:
        return kslab.models.exact_exponents(m, dim)[name]

    failures: list[str] = []
    if exact(2, 1, "p0_mkse") != 7:
        failures.append("p0(m=2, N=1) != 7")
    for dim in range(1, 10):
        p0 = exact(2, dim, "p0_mkse")
        assert p0 is not None
        if (Fraction(2) < p0) != (dim < 6):
            failures.append(f"p = 2 subcritical flag wrong at N = {dim}")
    if exact(2, 5, "p_sobolev") != 9:
        failures.append("p_S(m=2, N=5) != 9")
    if exact(1, 3, "p0_burnett") != 3:
        failures.append("Burnett p0(m=1, N=3) != 3")
    if not kslab.models.critical_exponents(1, 2).burnett_global:
        failures.append("N = 2, m = 1 not flagged as global")
    return _result(
        "critical_exponents", len(failures) == 0, len(failures), 0, "; ".join(failures)
    )


def check_leray_projector() -> CheckResult:
    """Idempotence and gradient annihilation on 100 random fields, 128² grid."""

    grid = kslab.fields.Grid.periodic([2 * math.pi] * 2, [128, 128])
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        u = kslab.fields.VectorField(grid=grid, components=rng.standard_normal((2, 128, 128)))
        once = kslab.flows.leray_project(u)
        twice = kslab.flows.leray_project(once)
        phi = kslab.fields.Field(grid=grid, values=rng.standard_normal((128, 128)))
        gradient = kslab.flows.gradient(phi)
        annihilated = kslab.flows.leray_project(gradient)
        scale = max(1.0, float(np.max(np.abs(gradient.components))))
        worst = max(
            worst,
            float(np.max(np.abs(twice.components - once.components))),
            float(np.max(np.abs(annihilated.components))) / scale,
        )
    return _result("leray_projector", worst <= 1e-13, worst, 1e-13, "")


def check_taylor_green() -> CheckResult:
    """Exponential decay of the Taylor–Green vortex for m = 1, 2 at t = 1 on 64²."""

    grid = kslab.fields.Grid.periodic([2 * math.pi] * 2, [64, 64])
    worst_error, worst_residual = 0.0, 0.0
    for m in (1, 2):
        state = kslab.flows.FlowState(velocity=kslab.flows.taylor_green(grid), m=m)
        trajectory = kslab.flows.integrate_flow(
            state,
            1e-3,
            1.0,
            ["sup_norm", "energy", "energy_residual"],
            callbacks=kslab.utils.silent_callbacks(),
        )
        expected = math.exp(-2 * m * 1.0)
        worst_error = max(worst_error, abs(trajectory.get("sup_norm")[-1] - expected))
        scale = np.maximum(1.0, 2 * trajectory.get("energy"))
        worst_residual = max(
            worst_residual, float(np.max(np.abs(trajectory.get("energy_residual")) / scale))
        )
    return _result(
        "taylor_green",
        worst_error <= 1e-8 and worst_residual <= 1e-6,
        worst_error,
        1e-8,
        f"energy-law residual {worst_residual:.2e}",
    )


def check_mkse_uniform_bound() -> CheckResult:
    """Subcritical mKSE (m = 2, N = 1, p = 2) stays below C₀e^{0.3t} on [0, 20]."""

    grid = kslab.fields.Grid.periodic([16 * math.pi], [256])
    v0 = kslab.fields.random_field(grid, 8, 0)
    v0 = v0.with_values(v0.values / kslab.fields.lp_norm(v0, 2))
    config = kslab.evolve.RunConfig(
        spec=kslab.models.ModelSpec(family="mkse", l=1), v0=v0, dt=1e-2, t_end=20.0
    )
    trajectory = kslab.evolve.integrate(config, kslab.utils.silent_callbacks())
    times, sup = np.array(trajectory.times), trajectory.get("sup_norm")
    c0 = float(np.interp(1.0, times, sup)) * math.exp(-0.3)
    after = times >= 1.0
    worst = float(np.max(sup[after] / (c0 * np.exp(0.3 * times[after]))))
    return _result(
        "mkse_uniform_bound",
        trajectory.outcome == "completed" and worst <= 1.0,
        worst,
        1.0,
        f"outcome {trajectory.outcome}, C0 = {c0:.3e}",
    )


def check_hminus1_monotone() -> CheckResult:
    """Non-increasing H⁻¹ norm of dispersion3 runs (m = 2, p = 2, N = 1), 10 seeds."""

    grid = kslab.fields.Grid.periodic([2 * math.pi], [128])
    worst = -math.inf
    for seed in range(10):
        config = kslab.evolve.RunConfig(
            spec=kslab.models.ModelSpec(family="dispersion3", m=2, p=2.0),
            v0=kslab.fields.random_field(grid, 6, seed),
            dt=1e-3,
            t_end=1.0,
            monitors=["hminus1"],
        )
        trajectory = kslab.evolve.integrate(config, kslab.utils.silent_callbacks())
        increase = np.diff(trajectory.get("hminus1")) / np.diff(np.array(trajectory.times))
        worst = max(worst, float(np.max(increase)))
    return _result(
        "hminus1_monotone", worst <= 1e-8, worst, 1e-8, "largest growth rate of ‖v‖₋₁"
    )


def check_duhamel_oracle() -> CheckResult:
    """Picard iteration against the time stepper for small mKSE data at t = 0.01."""

    grid = kslab.fields.Grid.periodic([2 * math.pi], [64])
    spec = kslab.models.ModelSpec(family="mkse", l=1)
    v0 = kslab.fields.Field.from_function(grid, lambda x: 0.01 * np.sin(x))
    picard = kslab.evolve.picard_local_solve(spec, v0, 0.01, 5)
    config = kslab.evolve.RunConfig(spec=spec, v0=v0, dt=1e-4, t_end=0.01)
    final = kslab.evolve.integrate(config, kslab.utils.silent_callbacks()).final
    assert isinstance(final, kslab.fields.Field)
    discrepancy = float(np.max(np.abs(final.values - picard.solution.values)))
    return _result(
        "duhamel_oracle",
        discrepancy <= 1e-5 and picard.converging,
        discrepancy,
        1e-5,
        f"increments {', '.join(f'{d:.1e}' for d in picard.increments)}",
    )


def check_cahn_hilliard_blowup() -> CheckResult:
    """Blow-up of u_t = −Δ²u − Δ(|u|²u) from 10 sin x and its rate exponent.

    The run stops at sup|u| = 32, where the collapsing profile still spans
    a few grid cells, and T is estimated from the recorded samples."""

    grid = kslab.fields.Grid.periodic([2 * math.pi], [1024])
    config = kslab.evolve.RunConfig(
        spec=kslab.models.ModelSpec(family="cahn_hilliard", p=3.0),
        v0=kslab.fields.Field.from_function(grid, lambda x: 10 * np.sin(x)),
        dt=5e-8,
        t_end=2e-3,
        blowup_threshold=32.0,
        monitors=["sup_norm"],
    )
    trajectory = kslab.evolve.integrate(config, kslab.utils.silent_callbacks())
    if trajectory.outcome != "blowup":
        return _result(
            "cahn_hilliard_blowup", False, math.nan, -0.25, f"outcome {trajectory.outcome}"
        )
    fit = kslab.rescale.fit_trajectory_blowup_rate(trajectory, decades=1.0)
    expected = -1 / (2 * (3.0 - 1))
    return _result(
        "cahn_hilliard_blowup",
        abs(fit.exponent - expected) <= 0.2 * abs(expected),
        fit.exponent,
        expected,
        f"blow-up at T ≈ {fit.T:.4e} after the bracket {trajectory.blowup_bracket}, "
        f"{fit.n_points} samples in the fit",
    )


def check_rescaling_laws() -> CheckResult:
    """Norm preservation of the C_k scalings and the closed-form ν_k values."""

    grid = kslab.fields.Grid.periodic([2 * math.pi], [64])
    v = kslab.fields.Field.from_function(grid, np.sin)
    w = kslab.rescale.ck_rescale(v, 4.0, "ck_l2")
    norm_error = abs(kslab.fields.lp_norm(w, 2) - kslab.fields.lp_norm(v, 2))
    norm_error /= kslab.fields.lp_norm(v, 2)
    nu = kslab.rescale.scaling_coefficients("ck_l2", 2, 1, 2.0, 10.0).derived["nu_k"]
    critical = kslab.rescale.scaling_coefficients("ck_lp", 1, 3, 3.0, 7.0)
    passed = (
        norm_error <= 1e-10 and math.isclose(nu, 1e-5, rel_tol=1e-12) and
        critical.classification == "critical"
    )
    return _result(
        "rescaling_laws",
        passed,
        norm_error,
        1e-10,
        f"nu_k = {nu:.6e}, p = N = 3 is {critical.classification}",
    )


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "energy_identity": check_energy_identity,
    "l2_growth": check_l2_growth,
    "fundamental_solution": check_fundamental_solution,
    "blowup_closed_forms": check_blowup_closed_forms,
    "volterra": check_volterra,
    "critical_exponents": check_critical_exponents,
    "leray_projector": check_leray_projector,
    "taylor_green": check_taylor_green,
    "mkse_uniform_bound": check_mkse_uniform_bound,
    "hminus1_monotone": check_hminus1_monotone,
    "duhamel_oracle": check_duhamel_oracle,
    "cahn_hilliard_blowup": check_cahn_hilliard_blowup,
    "rescaling_laws": check_rescaling_laws,
}


def run_checks(
    names: Optional[list[str]] = None,
    callbacks: Optional[kslab.utils.SimulationCallbacks] = None,
    workers: Optional[int] = None,
) -> CheckReport:
    """Run the named checks (all by default) on the worker pool."""

    names = list(CHECKS.keys()) if names is None else names
    unknown = [n for n in names if n not in CHECKS]
    if len(unknown) > 0:
        raise ValueError(f"unknown checks {unknown}, available: {list(CHECKS.keys())}")
    callbacks = kslab.utils.serialized(callbacks or kslab.utils.SimulationCallbacks())

    def run_one(name: str) -> CheckResult:
        started = time.time()
        try:
            result = CHECKS[name]()
        except Exception as e:
            callbacks.log_error(f"{name}: {type(e).__name__}: {e}")
            result = _result(name, False, math.nan, math.nan, f"{type(e).__name__}: {e}")
        result.seconds = round(time.time() - started, 3)
        status = "passed" if result.passed else "FAILED"
        callbacks.log_info(f"{name}: {status} ({result.value:.3e} vs {result.threshold:.3e})")
        return result

    return CheckReport(results=kslab.utils.map_concurrently(run_one, names, workers))
