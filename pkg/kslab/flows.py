from __future__ import annotations
from typing import Optional
import math
import numpy as np
import pydantic
import scipy.integrate
import kslab

Array = kslab.fields.Array

DIVERGENCE_TOLERANCE = 1e-10
FLOW_MONITORS = (
    "sup_norm",
    "l2",
    "energy",
    "enstrophy",
    "energy_residual",
    "divergence",
    "momentum",
)


def _derivative_wavenumbers(grid: kslab.fields.Grid) -> list[Array]:
    """Real ξ_a per axis with the Nyquist entries zeroed, as used by first derivatives."""
    return [
        np.imag(kslab.fields.spectral_derivative_factor(grid, axis, 1))
        for axis in range(grid.dim)
    ]


def _spectral(u: kslab.fields.VectorField) -> Array:
    return np.stack([kslab.fields.to_spectral(u.grid, c) for c in u.components])


def _physical(grid: kslab.fields.Grid, coefficients: Array) -> Array:
    return np.stack([kslab.fields.from_spectral(grid, c) for c in coefficients])


def project_spectral(grid: kslab.fields.Grid, coefficients: Array) -> Array:
    """û ↦ û − ξ(ξ·û)/|ξ|², modes with ξ = 0 untouched."""

    xi = _derivative_wavenumbers(grid)
    xi_squared = sum(k**2 for k in xi)
    safe = np.where(xi_squared > 0, xi_squared, 1.0)
    dot = sum(k * c for k, c in zip(xi, coefficients))
    return np.stack([c - np.where(xi_squared > 0, k * dot / safe, 0.0)
                     for k, c in zip(xi, coefficients)])


def leray_project(u: kslab.fields.VectorField) -> kslab.fields.VectorField:
    """Orthogonal projection onto divergence-free fields."""

    if u.grid.kind != "periodic":
        raise ValueError("the Leray projection needs a periodic grid")
    if u.n_components != u.grid.dim:
        raise ValueError("the vector field needs one component per axis")
    return u.with_components(_physical(u.grid, project_spectral(u.grid, _spectral(u))))


def divergence_spectral(grid: kslab.fields.Grid, coefficients: Array) -> Array:
    return sum(1j * k * c for k, c in zip(_derivative_wavenumbers(grid), coefficients))


def divergence(u: kslab.fields.VectorField) -> kslab.fields.Field:
    values = kslab.fields.from_spectral(u.grid, divergence_spectral(u.grid, _spectral(u)))
    return kslab.fields.Field(grid=u.grid, values=values)


def gradient(phi: kslab.fields.Field) -> kslab.fields.VectorField:
    return kslab.fields.VectorField(
        grid=phi.grid,
        components=np.stack([
            kslab.fields.derivative(phi, axis, 1).values for axis in range(phi.grid.dim)
        ]),
    )


def advection_spectral(grid: kslab.fields.Grid, coefficients: Array) -> Array:
    """Dealiased spectral coefficients of (v·∇)v."""

    mask = kslab.fields.dealias_mask(grid)
    xi = _derivative_wavenumbers(grid)
    masked = coefficients * mask
    v = _physical(grid, masked)
    result = []
    for component in masked:
        convective = sum(
            v[axis] * kslab.fields.from_spectral(grid, 1j * xi[axis] * component)
            for axis in range(grid.dim)
        )
        result.append(mask * kslab.fields.to_spectral(grid, convective))
    return np.stack(result)


class FlowState(pydantic.BaseModel):
    """Velocity of an incompressible flow with dissipation −(−Δ)^m."""

    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    velocity: kslab.fields.VectorField
    m: int = pydantic.Field(default=1, ge=1)
    time: float = 0.0
    seed: Optional[int] = None

    @pydantic.model_validator(mode="after")
    def _validate(self) -> FlowState:
        grid = self.velocity.grid
        checks: list[tuple[bool, str]] = [
            (grid.kind == "periodic", "flows live on periodic grids"),
            (grid.dim >= 2, "flows need at least two dimensions"),
            (self.velocity.n_components == grid.dim, "one velocity component per axis required"),
        ]
        error_message = "; ".join([m for (c, m) in checks if not c])
        if len(error_message) > 0:
            raise ValueError(f"flow state is invalid: {error_message}")
        max_divergence = divergence_norm(self.velocity)
        tolerance = DIVERGENCE_TOLERANCE * max(1.0, velocity_sup_norm(self.velocity))
        if max_divergence > tolerance:
            raise ValueError(
                f"velocity is not solenoidal: sup|div v| = {max_divergence:.3e} > {tolerance:.1e}"
            )
        return self

    @property
    def grid(self) -> kslab.fields.Grid:
        return self.velocity.grid


def velocity_sup_norm(u: kslab.fields.VectorField) -> float:
    return float(np.max(np.sqrt(np.sum(u.components**2, axis=0))))


def divergence_norm(u: kslab.fields.VectorField) -> float:
    return float(np.max(np.abs(divergence(u).values)))


def rhs_flow(state: FlowState) -> kslab.fields.VectorField:
    """−(−Δ)^m v − ℙ(v·∇)v."""

    grid = state.grid
    coefficients = _spectral(state.velocity)
    xi = kslab.fields.spectral_abs_wavenumber(grid)
    result = -xi**(2 * state.m) * coefficients - project_spectral(
        grid, advection_spectral(grid, coefficients)
    )
    return state.velocity.with_components(_physical(grid, result))


def recover_pressure(state: FlowState) -> kslab.fields.Field:
    """Zero-mean p with −Δp = ∇·((v·∇)v)."""

    grid = state.grid
    advection = advection_spectral(grid, _spectral(state.velocity))
    xi_squared = kslab.fields.spectral_abs_wavenumber(grid)**2
    safe = np.where(xi_squared > 0, xi_squared, 1.0)
    pressure = np.where(xi_squared > 0, divergence_spectral(grid, advection) / safe, 0.0)
    return kslab.fields.Field(grid=grid, values=kslab.fields.from_spectral(grid, pressure))


def taylor_green(grid: kslab.fields.Grid, amplitude: float = 1.0) -> kslab.fields.VectorField:
    """(cos x sin y, −sin x cos y) in 2D; (sin x cos y cos z, −cos x sin y cos z, 0) in 3D."""

    x = grid.coordinates()
    if grid.dim == 2:
        components = [np.cos(x[0]) * np.sin(x[1]), -np.sin(x[0]) * np.cos(x[1])]
    elif grid.dim == 3:
        components = [
            np.sin(x[0]) * np.cos(x[1]) * np.cos(x[2]),
            -np.cos(x[0]) * np.sin(x[1]) * np.cos(x[2]),
            np.zeros(grid.shape),
        ]
    else:
        raise ValueError("Taylor–Green fields exist in 2 and 3 dimensions")
    return kslab.fields.VectorField(grid=grid, components=amplitude * np.stack(components))


def random_solenoidal(
    grid: kslab.fields.Grid,
    max_mode: int,
    seed: int,
    amplitude: float = 1.0,
) -> kslab.fields.VectorField:
    """Projected band-limited random field with sup-norm `amplitude`."""

    raw = kslab.fields.VectorField(
        grid=grid,
        components=np.stack([
            kslab.fields.random_field(grid, max_mode, seed + axis).values
            for axis in range(grid.dim)
        ]),
    )
    projected = leray_project(raw)
    scale = velocity_sup_norm(projected)
    return projected.with_components(
        amplitude * projected.components / (scale if scale > 0 else 1.0)
    )


class FlowMonitorRecorder:
    def __init__(self, names: list[str], grid: kslab.fields.Grid, m: int, dt: float) -> None:
        self.names = list(names)
        self.grid = grid
        self.m = m
        self.dt = dt
        self.weights = kslab.fields.parseval_weights(grid)
        self.dissipation = kslab.fields.spectral_abs_wavenumber(grid)**(2 * m)

    def modal_energy(self, coefficients: Array) -> Array:
        return self.weights * np.sum(np.abs(coefficients)**2, axis=0)

    def record(
        self,
        series: dict[str, list[float]],
        coefficients: Array,
        previous: Optional[Array],
    ) -> None:
        values = _physical(self.grid, coefficients)
        modal = self.modal_energy(coefficients)
        energy = float(np.sum(modal))
        momentum = np.array([np.real(c.flat[0]) for c in coefficients])
        for name in self.names:
            if name == "sup_norm":
                value = float(np.max(np.sqrt(np.sum(values**2, axis=0))))
            elif name == "l2":
                value = math.sqrt(energy)
            elif name == "energy":
                value = energy / 2
            elif name == "enstrophy":
                value = float(np.sum(self.dissipation * modal))
            elif name == "energy_residual":
                if previous is None:
                    value = 0.0
                else:
                    before = self.modal_energy(previous)
                    value = (energy - float(np.sum(before))) / (2 * self.dt) + float(
                        np.sum(self.dissipation * kslab.evolve.logarithmic_mean(before, modal))
                    )
            elif name == "divergence":
                value = float(
                    np.max(
                        np.abs(
                            kslab.fields.from_spectral(
                                self.grid, divergence_spectral(self.grid, coefficients)
                            )
                        )
                    )
                )
            elif name == "momentum":
                value = float(np.sqrt(np.sum(momentum**2)))
            else:
                match = kslab.evolve.LP_MONITOR_PATTERN.match(name)
                assert match is not None, f"unknown flow monitor {name}"
                p = float(match.group(1))
                magnitude = np.sqrt(np.sum(values**2, axis=0))
                value = float(kslab.fields.integrate(magnitude**p, self.grid)**(1.0 / p))
            series.setdefault(name, []).append(value)


def integrate_flow(
    state0: FlowState,
    dt: float,
    t_end: float,
    monitors: Optional[list[str]] = None,
    scheme: kslab.evolve.Scheme = "etd_midpoint",
    snapshot_every: int = 0,
    blowup_threshold: float = 1e6,
    label: str = "flow",
    callbacks: Optional[kslab.utils.SimulationCallbacks] = None,
) -> kslab.evolve.Trajectory:
    """Exponential-integrator run of the projected flow from `state0.time` to `t_end`."""

    monitors = list(monitors or ["sup_norm", "energy", "enstrophy", "divergence"])
    unknown = [
        n for n in monitors
        if n not in FLOW_MONITORS and kslab.evolve.LP_MONITOR_PATTERN.match(n) is None
    ]
    checks: list[tuple[bool, str]] = [
        (dt > 0, "dt must be positive"),
        (dt < t_end - state0.time, "dt must be smaller than the run length"),
        (len(unknown) == 0, f"unknown flow monitors {unknown}"),
    ]
    error_message = "; ".join([m for (c, m) in checks if not c])
    if len(error_message) > 0:
        raise ValueError(error_message)

    callbacks = (callbacks or kslab.utils.SimulationCallbacks()).prefixed(label)
    grid = state0.grid
    xi = kslab.fields.spectral_abs_wavenumber(grid)
    symbol = np.broadcast_to(-xi**(2 * state0.m), (grid.dim, ) + xi.shape).copy()
    integrator = kslab.evolve.ExponentialIntegrator(
        symbol,
        lambda c: -project_spectral(grid, advection_spectral(grid, c)),
        dt,
        scheme,
    )
    recorder = FlowMonitorRecorder(monitors, grid, state0.m, dt)
    n_steps = int(round((t_end - state0.time) / dt))
    callbacks.log_info(f"starting m = {state0.m} flow with {n_steps} steps of size {dt}")

    trajectory = kslab.evolve.Trajectory(
        label=label, metadata={"seed": state0.seed, "scheme": scheme, "m": state0.m}
    )
    coefficients = _spectral(state0.velocity)
    recorder.record(trajectory.series, coefficients, None)
    trajectory.times.append(state0.time)
    if snapshot_every > 0:
        trajectory.snapshots.append(
            kslab.evolve.Snapshot(step=0, time=state0.time, field=state0.velocity)
        )

    progress = kslab.evolve.ProgressLogger(callbacks, n_steps)
    for k in range(1, n_steps + 1):
        t_previous = state0.time + (k - 1) * dt
        t = state0.time + k * dt
        with np.errstate(over="ignore", invalid="ignore"):
            new_coefficients = project_spectral(grid, integrator.step(coefficients))
            values = _physical(grid, new_coefficients)
        if not np.all(np.isfinite(values)):
            trajectory.outcome = "numerical_failure"
            trajectory.failure_time = t
            callbacks.log_error(f"non-finite values at t = {t}")
            break
        sup = float(np.max(np.sqrt(np.sum(values**2, axis=0))))
        if sup > blowup_threshold:
            trajectory.outcome = "blowup"
            trajectory.blowup_bracket = (t_previous, t)
            callbacks.log_info(f"sup-norm {sup:.3e} crossed {blowup_threshold:.1e}")
            break
        recorder.record(trajectory.series, new_coefficients, coefficients)
        trajectory.times.append(t)
        coefficients = new_coefficients
        if snapshot_every > 0 and k % snapshot_every == 0:
            trajectory.snapshots.append(
                kslab.evolve.Snapshot(
                    step=k, time=t, field=kslab.fields.VectorField(grid=grid, components=values)
                )
            )
        progress.update(k)

    progress.update(len(trajectory.times) - 1, force=True)
    trajectory.final = FlowState(
        velocity=kslab.fields.VectorField(grid=grid, components=_physical(grid, coefficients)),
        m=state0.m,
        time=trajectory.times[-1],
        seed=state0.seed,
    )
    callbacks.log_info(f"done ({trajectory.outcome})")
    return trajectory


class RegularityReport(pydantic.BaseModel):
    p: float
    m: int
    dim: int
    p0: float = pydantic.Field(..., description="N/(2m − 1)")
    sup_lp: float
    above_critical: bool = pydantic.Field(..., description="p > N/(2m−1)")
    critical: bool = pydantic.Field(..., description="p = N/(2m−1)")
    horizon: float
    serrin_times: list[float]
    serrin_values: list[float] = pydantic.Field(
        ..., description="(1/(T−t)) ∫_t^T ‖v(s)‖₃³ ds at every recorded t < T"
    )
    serrin_max: float


def regularity_monitor(
    trajectory: kslab.evolve.Trajectory,
    p: float,
    horizon: float,
    m: int,
    dim: int,
) -> RegularityReport:
    """L^p boundedness and the running Serrin-type integral of a flow trajectory."""

    lp = trajectory.get(f"lp_{p:g}")
    l3 = trajectory.get("lp_3")
    times = np.array(trajectory.times)
    if not times[0] < horizon <= times[-1]:
        raise ValueError(f"horizon {horizon} must lie within ({times[0]}, {times[-1]}]")
    p0 = kslab.models.exact_exponents(m, dim)["p0_burnett"]
    assert p0 is not None

    inside = times <= horizon
    t_inside = times[inside]
    cubes = l3[inside]**3
    # ∫_t^T as the total minus the cumulative integral up to t
    cumulative = scipy.integrate.cumulative_trapezoid(cubes, t_inside, initial=0.0)
    remaining = cumulative[-1] - cumulative
    before_horizon = t_inside < horizon
    serrin = remaining[before_horizon] / (horizon - t_inside[before_horizon])
    return RegularityReport(
        p=p,
        m=m,
        dim=dim,
        p0=float(p0),
        sup_lp=float(np.max(lp)),
        above_critical=p > float(p0),
        critical=math.isclose(p, float(p0)),
        horizon=horizon,
        serrin_times=t_inside[before_horizon].tolist(),
        serrin_values=serrin.tolist(),
        serrin_max=float(np.max(serrin)) if serrin.size > 0 else 0.0,
    )
