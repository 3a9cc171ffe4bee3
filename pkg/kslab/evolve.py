from __future__ import annotations
from typing import Any, Callable, Literal, Optional, Union
import math
import re
import time
import numpy as np
import pydantic
import scipy.sparse
import scipy.sparse.linalg
import kslab

Array = kslab.fields.Array

Scheme = Literal["etd_midpoint", "etdrk4"]
Outcome = Literal["completed", "blowup", "numerical_failure"]

SCALAR_MONITORS = (
    "sup_norm",
    "l2",
    "l2_bound_ratio",
    "hminus1",
    "mean",
    "energy_residual",
    "J_lambda",
)
LP_MONITOR_PATTERN = re.compile(r"^lp_(\d+(\.\d+)?)$")


class NumericalFailureError(ArithmeticError):
    """A time step produced non-finite values."""


def phi1(z: Array) -> Array:
    """(e^z − 1)/z, continuously extended by 1 at z = 0."""

    z = np.asarray(z, dtype=np.float64)
    safe = np.where(z == 0, 1.0, z)
    return np.where(z == 0, 1.0, np.expm1(safe) / safe)


class ExponentialIntegrator:
    """Exponential time stepping for c' = Λc + N(c) with diagonal Λ.

    `etd_midpoint` is the second-order exponential midpoint rule

        a  = e^{Λh/2} c + (h/2) φ₁(Λh/2) N(c)
        c⁺ = e^{Λh} c + h φ₁(Λh) N(a)

    and `etdrk4` the fourth-order scheme with φ-coefficients evaluated by
    contour integrals around each Λh."""

    def __init__(
        self,
        symbol: Array,
        nonlinear: Callable[[Array], Array],
        dt: float,
        scheme: Scheme = "etd_midpoint",
        contour_points: int = 32,
    ) -> None:
        self.symbol = symbol
        self.nonlinear = nonlinear
        self.dt = dt
        self.scheme = scheme
        z = symbol * dt
        self.E = np.exp(z)
        self.E2 = np.exp(z / 2)
        if scheme == "etd_midpoint":
            self.half_weight = (dt / 2) * phi1(z / 2)
            self.full_weight = dt * phi1(z)
        elif scheme == "etdrk4":
            r = np.exp(1j * np.pi * (np.arange(1, contour_points + 1) - 0.5) / contour_points)
            LR = z[..., None] + r
            self.Q = dt * np.real(np.mean((np.exp(LR / 2) - 1) / LR, axis=-1))
            self.f1 = dt * np.real(
                np.mean((-4 - LR + np.exp(LR) * (4 - 3 * LR + LR**2)) / LR**3, axis=-1)
            )
            self.f2 = dt * np.real(np.mean((2 + LR + np.exp(LR) * (-2 + LR)) / LR**3, axis=-1))
            self.f3 = dt * np.real(
                np.mean((-4 - 3 * LR - LR**2 + np.exp(LR) * (4 - LR)) / LR**3, axis=-1)
            )
        else:
            raise ValueError(f"unknown scheme {repr(scheme)}")

    def step(self, c: Array) -> Array:
        N = self.nonlinear
        if self.scheme == "etd_midpoint":
            a = self.E2 * c + self.half_weight * N(c)
            return self.E * c + self.full_weight * N(a)

        Nc = N(c)
        a = self.E2 * c + self.Q * Nc
        Na = N(a)
        b = self.E2 * c + self.Q * Na
        Nb = N(b)
        d = self.E2 * a + self.Q * (2 * Nb - Nc)
        Nd = N(d)
        return self.E * c + Nc * self.f1 + 2 * (Na + Nb) * self.f2 + Nd * self.f3


def logarithmic_mean(a: Array, b: Array) -> Array:
    """(b − a)/ln(b/a), elementwise, for nonnegative a and b."""

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    positive = (a > 0) & (b > 0)
    safe_a = np.where(positive, a, 1.0)
    x = np.where(positive, (b - a) / safe_a, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(x == 0, 1.0, x / np.log1p(x))
    return np.where(positive, safe_a * ratio, 0.0)


class Stepper:
    """Advances sampled values of one model by a fixed time step."""

    def advance(self, values: Array) -> Array:
        raise NotImplementedError

    def linear_energy_rate(self, before: Array, after: Array) -> float:
        """Mean over one step of d/dt ∫v² / 2 due to the linear part alone."""
        raise NotImplementedError


class SpectralStepper(Stepper):
    """Exponential integrator in the Fourier or sine basis of the grid."""

    def __init__(
        self,
        spec: kslab.models.ModelSpec,
        grid: kslab.fields.Grid,
        dt: float,
        scheme: Scheme = "etd_midpoint",
    ) -> None:
        self.grid = grid
        self.symbol = kslab.models.linear_symbol(spec, grid)
        self.weights = kslab.fields.parseval_weights(grid)
        self.integrator = ExponentialIntegrator(
            np.broadcast_to(self.symbol, self.weights.shape).copy(),
            lambda c: kslab.models.nonlinear_term(spec, grid, c),
            dt,
            scheme,
        )

    def advance(self, values: Array) -> Array:
        coefficients = kslab.fields.to_spectral(self.grid, values)
        return kslab.fields.from_spectral(self.grid, self.integrator.step(coefficients))

    def linear_energy_rate(self, before: Array, after: Array) -> float:
        e_before = self.weights * np.abs(kslab.fields.to_spectral(self.grid, before))**2
        e_after = self.weights * np.abs(kslab.fields.to_spectral(self.grid, after))**2
        return float(np.sum(self.symbol * logarithmic_mean(e_before, e_after)))


class ClampedStepper(Stepper):
    """Crank–Nicolson for −D⁴ − D² on a clamped interval, explicit midpoint for ½D(v²).

    The midpoint state comes from a half Crank–Nicolson step, so both linear
    solves reuse a factorization computed once per time step size."""

    def __init__(self, grid: kslab.fields.Grid, dt: float) -> None:
        self.grid = grid
        self.dt = dt
        self.operator = kslab.models.clamped_linear_operator(grid)
        identity = scipy.sparse.identity(grid.points[0], format="csc")
        self.solve_full = scipy.sparse.linalg.factorized(
            scipy.sparse.csc_matrix(identity - (dt / 2) * self.operator)
        )
        self.solve_half = scipy.sparse.linalg.factorized(
            scipy.sparse.csc_matrix(identity - (dt / 4) * self.operator)
        )

    def advance(self, values: Array) -> Array:
        h, A = self.dt, self.operator
        N = lambda v: kslab.models.clamped_nonlinear_term(self.grid, v)
        midpoint = self.solve_half(values + (h / 4) * (A @ values) + (h / 2) * N(values))
        return np.asarray(self.solve_full(values + (h / 2) * (A @ values) + h * N(midpoint)))

    def linear_energy_rate(self, before: Array, after: Array) -> float:
        average = (before + after) / 2
        return kslab.fields.integrate(average * (self.operator @ average), self.grid)


def make_stepper(
    spec: kslab.models.ModelSpec,
    grid: kslab.fields.Grid,
    dt: float,
    scheme: Scheme = "etd_midpoint",
) -> Stepper:
    spec.check_grid(grid)
    if grid.kind == "interval" and grid.bc == "dirichlet":
        return ClampedStepper(grid, dt)
    return SpectralStepper(spec, grid, dt, scheme)


def step(
    spec: kslab.models.ModelSpec,
    v: kslab.fields.Field,
    dt: float,
    scheme: Scheme = "etd_midpoint",
) -> kslab.fields.Field:
    """Advance `v` by one step of size `dt`; raises `NumericalFailureError` on non-finite output."""

    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    values = make_stepper(spec, v.grid, dt, scheme).advance(v.values)
    if not np.all(np.isfinite(values)):
        raise NumericalFailureError(f"step of size {dt} produced non-finite values")
    return v.with_values(values)


def monitor_names_valid(names: list[str]) -> list[str]:
    return [n for n in names if n not in SCALAR_MONITORS and LP_MONITOR_PATTERN.match(n) is None]


class RunConfig(pydantic.BaseModel):
    """One scalar PDE run."""

    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: kslab.models.ModelSpec
    v0: kslab.fields.Field
    dt: float = pydantic.Field(..., gt=0)
    t_end: float = pydantic.Field(..., gt=0)
    t_start: float = pydantic.Field(
        default=0.0, ge=0, description="Time of v0, non-zero when continuing from a checkpoint"
    )
    snapshot_every: int = pydantic.Field(
        default=0, ge=0, description="Store the field every n steps, 0 disables snapshots"
    )
    blowup_threshold: float = pydantic.Field(default=1e6, gt=0)
    monitors: list[str] = pydantic.Field(default_factory=lambda: ["sup_norm", "l2"])
    scheme: Scheme = "etd_midpoint"
    capacity_lambda: float = pydantic.Field(
        default=7.0, gt=0, description="Exponent λ of the J_lambda monitor weight |x − L|^λ"
    )
    label: str = "run"
    seed: Optional[int] = None

    @pydantic.model_validator(mode="after")
    def _validate(self) -> RunConfig:
        sup = float(np.max(np.abs(self.v0.values)))
        unknown = monitor_names_valid(self.monitors)
        checks: list[tuple[bool, str]] = [
            (self.dt < self.t_end - self.t_start, "dt must be smaller than the run length"),
            (self.blowup_threshold > sup, "blowup threshold must exceed sup|v0|"),
            (len(unknown) == 0, f"unknown monitors {unknown}"),
            (
                "J_lambda" not in self.monitors or self.v0.grid.kind == "interval",
                "the J_lambda monitor needs an interval grid",
            ),
            (
                "hminus1" not in self.monitors or self.v0.grid.kind == "periodic",
                "the hminus1 monitor needs a periodic grid",
            ),
        ]
        error_message = "; ".join([m for (c, m) in checks if not c])
        if len(error_message) > 0:
            raise ValueError(error_message)
        self.spec.check_grid(self.v0.grid)
        return self

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))


class Snapshot(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(arbitrary_types_allowed=True)

    step: int
    time: float
    field: Union[kslab.fields.Field, kslab.fields.VectorField]


class Trajectory(pydantic.BaseModel):
    """Monitor series of one run, its snapshots and how it ended."""

    model_config = pydantic.ConfigDict(arbitrary_types_allowed=True)

    label: str = "run"
    times: list[float] = pydantic.Field(default_factory=list)
    series: dict[str, list[float]] = pydantic.Field(default_factory=dict)
    snapshots: list[Snapshot] = pydantic.Field(default_factory=list)
    outcome: Outcome = "completed"
    blowup_bracket: Optional[tuple[float, float]] = None
    failure_time: Optional[float] = None
    final: Optional[Any] = pydantic.Field(
        default=None, description="Last finite state (Field or FlowState)"
    )
    metadata: dict[str, Any] = pydantic.Field(default_factory=dict)

    @pydantic.model_validator(mode="after")
    def _validate(self) -> Trajectory:
        checks: list[tuple[bool, str]] = [
            (
                all(len(s) == len(self.times) for s in self.series.values()),
                "all series must share the times axis",
            ),
            (
                all(a < b for a, b in zip(self.times, self.times[1 :])),
                "times must be increasing",
            ),
        ]
        error_message = "; ".join([m for (c, m) in checks if not c])
        if len(error_message) > 0:
            raise ValueError(f"trajectory is invalid: {error_message}")
        return self

    def get(self, name: str) -> Array:
        if name not in self.series:
            raise ValueError(f"trajectory has no {name} monitor")
        return np.array(self.series[name])


class MonitorRecorder:
    """Evaluates the requested scalar monitors of a run at every recorded time."""

    def __init__(
        self,
        names: list[str],
        grid: kslab.fields.Grid,
        stepper: Optional[Stepper],
        dt: float,
        capacity_lambda: float = 7.0,
    ) -> None:
        self.names = list(names)
        self.grid = grid
        self.stepper = stepper
        self.dt = dt
        self.capacity_lambda = capacity_lambda
        self.initial_energy: Optional[float] = None
        self.t0 = 0.0

    def energy(self, values: Array) -> float:
        return kslab.fields.integrate(values * values, self.grid)

    def record(
        self,
        series: dict[str, list[float]],
        t: float,
        values: Array,
        previous: Optional[Array],
    ) -> None:
        energy = self.energy(values)
        if self.initial_energy is None:
            self.initial_energy, self.t0 = energy, t
        for name in self.names:
            series.setdefault(name, []).append(self._evaluate(name, t, values, previous, energy))

    def _evaluate(
        self,
        name: str,
        t: float,
        values: Array,
        previous: Optional[Array],
        energy: float,
    ) -> float:
        if name == "sup_norm":
            return float(np.max(np.abs(values)))
        if name == "l2":
            return math.sqrt(energy)
        if name == "l2_bound_ratio":
            assert self.initial_energy is not None
            if self.initial_energy == 0:
                return 0.0
            return energy / (self.initial_energy * math.exp((t - self.t0) / 2))
        if name == "mean":
            return kslab.fields.integrate(values, self.grid) / self.grid.volume
        if name == "hminus1":
            return kslab.fields.hminus1_norm(kslab.fields.Field(grid=self.grid, values=values))
        if name == "energy_residual":
            if previous is None or self.stepper is None:
                return 0.0
            delta = energy - self.energy(previous)
            return delta / (2 * self.dt) - self.stepper.linear_energy_rate(previous, values)
        if name == "J_lambda":
            return kslab.blowup.capacity_integral(
                kslab.fields.Field(grid=self.grid, values=values), self.capacity_lambda
            )
        match = LP_MONITOR_PATTERN.match(name)
        assert match is not None, f"unknown monitor {name}"
        p = float(match.group(1))
        return float(kslab.fields.integrate(np.abs(values)**p, self.grid)**(1.0 / p))


class ProgressLogger:
    """Logs `" 42.0 % (420/1000) steps"` at most once per interval."""

    def __init__(self, callbacks: kslab.utils.SimulationCallbacks, total: int) -> None:
        self.callbacks = callbacks
        self.total = total
        self.last_log = time.time()

    def update(self, done: int, force: bool = False) -> None:
        now = time.time()
        if force or (now - self.last_log) >= self.callbacks.progress_interval:
            pct = 100 * done / max(1, self.total)
            self.callbacks.log_info(f"{pct:5.1f} % ({done}/{self.total}) steps")
            self.last_log = now


def integrate(
    cfg: RunConfig,
    callbacks: Optional[kslab.utils.SimulationCallbacks] = None,
) -> Trajectory:
    """Step `cfg.v0` until `cfg.t_end`, a blow-up bracket, or a numerical failure."""

    callbacks = (callbacks or kslab.utils.SimulationCallbacks()).prefixed(cfg.label)
    grid = cfg.v0.grid
    stepper = make_stepper(cfg.spec, grid, cfg.dt, cfg.scheme)
    recorder = MonitorRecorder(cfg.monitors, grid, stepper, cfg.dt, cfg.capacity_lambda)
    n_steps = cfg.n_steps
    callbacks.log_info(
        f"starting {cfg.spec.family} run with {n_steps} steps of size {cfg.dt} " +
        f"from t = {cfg.t_start}"
    )

    trajectory = Trajectory(label=cfg.label, metadata={"seed": cfg.seed, "scheme": cfg.scheme})
    values = np.array(cfg.v0.values)
    recorder.record(trajectory.series, cfg.t_start, values, None)
    trajectory.times.append(cfg.t_start)
    if cfg.snapshot_every > 0:
        trajectory.snapshots.append(Snapshot(step=0, time=cfg.t_start, field=cfg.v0))

    progress = ProgressLogger(callbacks, n_steps)
    for k in range(1, n_steps + 1):
        t_previous = cfg.t_start + (k - 1) * cfg.dt
        t = cfg.t_start + k * cfg.dt
        with np.errstate(over="ignore", invalid="ignore"):
            new_values = stepper.advance(values)
        if not np.all(np.isfinite(new_values)):
            trajectory.outcome = "numerical_failure"
            trajectory.failure_time = t
            callbacks.log_error(f"non-finite values at t = {t}")
            break
        sup = float(np.max(np.abs(new_values)))
        if sup > cfg.blowup_threshold:
            trajectory.outcome = "blowup"
            trajectory.blowup_bracket = (t_previous, t)
            callbacks.log_info(
                f"sup-norm {sup:.3e} crossed {cfg.blowup_threshold:.1e} in [{t_previous}, {t}]"
            )
            break
        recorder.record(trajectory.series, t, new_values, values)
        trajectory.times.append(t)
        values = new_values
        if cfg.snapshot_every > 0 and k % cfg.snapshot_every == 0:
            trajectory.snapshots.append(
                Snapshot(step=k, time=t, field=kslab.fields.Field(grid=grid, values=values))
            )
        progress.update(k)

    progress.update(len(trajectory.times) - 1, force=True)
    trajectory.final = kslab.fields.Field(grid=grid, values=values)
    callbacks.log_info(f"done ({trajectory.outcome})")
    return trajectory


class L2GrowthReport(pydantic.BaseModel):
    max_ratio: float = pydantic.Field(..., description="max_t E(t) / (E(0) e^{t/2})")
    tolerance: float
    violated: bool


def l2_growth_check(trajectory: Trajectory, tolerance: float = 1e-6) -> L2GrowthReport:
    """Compare E(t) = ‖v(t)‖₂² with the a-priori bound E(0) e^{t/2}."""

    l2 = trajectory.get("l2")
    times = np.array(trajectory.times)
    energy = l2**2
    if energy[0] == 0:
        max_ratio = 0.0
    else:
        max_ratio = float(np.max(energy / (energy[0] * np.exp((times - times[0]) / 2))))
    return L2GrowthReport(
        max_ratio=max_ratio, tolerance=tolerance, violated=max_ratio > 1 + tolerance
    )


class PicardReport(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(arbitrary_types_allowed=True)

    solution: kslab.fields.Field
    increments: list[float] = pydantic.Field(
        ..., description="sup-norm distance between successive iterates over the time grid"
    )
    converging: bool


def picard_local_solve(
    spec: kslab.models.ModelSpec,
    v0: kslab.fields.Field,
    t: float,
    iterations: int,
    quadrature_points: int = 64,
) -> PicardReport:
    """Fixed-point iteration of the Duhamel equation

        v(t) = b(t) * v₀ + ∫₀ᵗ b(t − s) * [(Λ + |ξ|^{2m}) v(s) + N(v(s))] ds

    where b is the heat kernel of −(−Δ)^m, Λ the full linear symbol of the
    model and N its (divergence-form) nonlinearity. Time integrals use
    left-endpoint product integration with exact kernel weights on
    `quadrature_points` subintervals."""

    grid = v0.grid
    if grid.kind != "periodic":
        raise ValueError("picard_local_solve needs a periodic grid")
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    if iterations < 1:
        raise ValueError(f"at least one iteration is needed, got {iterations}")
    spec.check_grid(grid)

    M = quadrature_points
    ds = t / M
    mu = kslab.fields.spectral_abs_wavenumber(grid)**(2 * spec.m)
    extra_symbol = kslab.models.linear_symbol(spec, grid) + mu

    # kernel weights ∫_{s_j}^{s_{j+1}} e^{−μ(s_i − s)} ds for i − j = 1..M
    safe_mu = np.where(mu > 0, mu, 1.0)
    weights = [
        np.where(
            mu > 0,
            -np.exp(-mu * (d - 1) * ds) * np.expm1(-mu * ds) / safe_mu,
            ds,
        ) for d in range(1, M + 1)
    ]
    free = [
        kslab.fields.to_spectral(
            grid,
            kslab.kernels.heat_semigroup_apply(spec.m, i * ds, v0).values,
        ) for i in range(M + 1)
    ]

    iterate = [free[0].copy() for _ in range(M + 1)]
    increments: list[float] = []
    for _ in range(iterations):
        forcing = [
            extra_symbol * c + kslab.models.nonlinear_term(spec, grid, c) for c in iterate[: M]
        ]
        updated = []
        for i in range(M + 1):
            c = free[i].copy()
            for j in range(i):
                c = c + weights[i - j - 1] * forcing[j]
            updated.append(c)
        increments.append(
            max(
                float(np.max(np.abs(kslab.fields.from_spectral(grid, a - b))))
                for a, b in zip(updated, iterate)
            )
        )
        iterate = updated

    scale = max(1.0, float(np.max(np.abs(v0.values))))
    converging = all(
        later <= earlier or later <= 1e-13 * scale
        for earlier, later in zip(increments, increments[1 :])
    )
    return PicardReport(
        solution=v0.with_values(kslab.fields.from_spectral(grid, iterate[M])),
        increments=increments,
        converging=converging,
    )
