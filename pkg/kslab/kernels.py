from __future__ import annotations
from typing import Optional
import math
import numpy as np
import pydantic
import scipy.fft
import scipy.optimize
import scipy.signal
import kslab

Array = kslab.fields.Array

TAIL_TOLERANCE = 1e-14
MASS_TOLERANCE = 1e-6
KERNEL_POINTS = {1: 2048, 2: 512}


class DecayFit(pydantic.BaseModel):
    """|F(y)| ≈ D exp(−d |y|^alpha) along the oscillation envelope."""

    D: float = pydantic.Field(..., gt=0)
    d: float
    alpha: float
    n_samples: int = pydantic.Field(..., description="Number of envelope samples in the fit")


class Kernel(pydantic.BaseModel):
    """Rescaled profile F of the polyharmonic heat kernel b(x,t) = t^{−N/2m} F(x/t^{1/2m})."""

    model_config = pydantic.ConfigDict(frozen=True)

    m: int = pydantic.Field(..., ge=1)
    dim: int = pydantic.Field(..., ge=1)
    profile: kslab.fields.Field
    mass: float
    decay_fit: Optional[DecayFit] = None

    @pydantic.model_validator(mode="after")
    def _validate(self) -> Kernel:
        checks: list[tuple[bool, str]] = [
            (self.profile.grid.dim == self.dim, "profile dimension differs from dim"),
            (abs(self.mass - 1) <= MASS_TOLERANCE, f"mass {self.mass} differs from 1"),
        ]
        if self.decay_fit is not None:
            checks.append((
                1 < self.decay_fit.alpha <= 2 + 1e-6,
                f"fitted alpha {self.decay_fit.alpha} outside (1, 2]",
            ))
        error_message = "; ".join([m for (c, m) in checks if not c])
        if len(error_message) > 0:
            raise ValueError(f"kernel is invalid: {error_message}")
        return self


def decay_exponent(m: int) -> float:
    """α = 2m/(2m−1)."""
    return 2 * m / (2 * m - 1)


def asymptotic_decay_rate(m: int) -> float:
    """Saddle-point decay constant d of F(y) ~ exp(−d |y|^α)."""

    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    return ((2 * m - 1) * (2 * m)**(-2 * m / (2 * m - 1)) *
            abs(math.cos(m * math.pi / (2 * m - 1))))


def kernel_half_width(m: int) -> float:
    """Smallest multiple of 10 (at least 40) where the asymptotic tail falls below e^{−32}."""

    reach = (32.0 / asymptotic_decay_rate(m))**(1.0 / decay_exponent(m))
    return float(max(40, 10 * math.ceil(reach / 10)))


def kernel_grid(m: int, dim: int) -> kslab.fields.Grid:
    if dim not in KERNEL_POINTS:
        raise ValueError(f"kernels are computed in 1 or 2 dimensions, got {dim}")
    half_width = kernel_half_width(m)
    return kslab.fields.Grid.periodic(
        extents=[2 * half_width] * dim,
        points=[KERNEL_POINTS[dim]] * dim,
        origin=[-half_width] * dim,
    )


def _full_wavenumbers(grid: kslab.fields.Grid) -> list[Array]:
    return list(
        np.meshgrid(
            *[
                2 * np.pi * scipy.fft.fftfreq(n, d=h)
                for n, h in zip(grid.points, grid.spacing)
            ],
            indexing="ij",
        )
    )


def _tail_magnitude(grid: kslab.fields.Grid, values: Array) -> float:
    """Largest |F| in the outermost percent of the box, per axis."""

    outer = np.zeros(grid.shape, dtype=bool)
    for axis, y in enumerate(grid.coordinates()):
        center = grid.origin[axis] + grid.extents[axis] / 2
        outer |= np.abs(y - center) >= 0.49 * grid.extents[axis]
    return float(np.max(np.abs(values[outer])))


def fundamental_solution(
    m: int,
    dim: int,
    grid: Optional[kslab.fields.Grid] = None,
) -> Kernel:
    """F as the inverse Fourier transform of exp(−|ξ|^{2m}), sampled on a centered box."""

    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    grid = grid or kernel_grid(m, dim)
    if grid.kind != "periodic" or grid.dim != dim:
        raise ValueError(f"the kernel needs a {dim}-dimensional periodic grid")

    wavenumbers = _full_wavenumbers(grid)
    xi_squared = sum(k**2 for k in wavenumbers)
    phase = sum(k * o for k, o in zip(wavenumbers, grid.origin))
    spectrum = np.exp(-xi_squared**m) * np.exp(1j * phase)
    values = np.real(scipy.fft.ifftn(spectrum)) * grid.size / grid.volume

    tail = _tail_magnitude(grid, values)
    if tail >= TAIL_TOLERANCE:
        raise ValueError(
            f"domain too small: kernel tail {tail:.2e} exceeds {TAIL_TOLERANCE:.0e} " +
            f"at the box boundary (extents {grid.extents})"
        )
    profile = kslab.fields.Field(grid=grid, values=values)
    return Kernel(m=m, dim=dim, profile=profile, mass=kslab.fields.integrate(profile))


def kernel_residual(kernel: Kernel) -> float:
    """sup |−(−Δ)^m F + (1/2m) y·∇F + (N/2m) F|."""

    F = kernel.profile
    m, n_dim = kernel.m, kernel.dim
    result = -kslab.fields.neg_laplacian_power(F, m).values + (n_dim / (2 * m)) * F.values
    for axis, y in enumerate(F.grid.coordinates()):
        result = result + y * kslab.fields.derivative(F, axis, 1).values / (2 * m)
    return float(np.max(np.abs(result)))


def fit_decay(kernel: Kernel, min_peaks: int = 5) -> Kernel:
    """Fit ln D − d|y|^α to the oscillation envelope of a one-dimensional profile.

    The envelope is sampled at the local maxima of |F| in 3 ≤ |y| ≤ 0.8 y_max
    (every window sample when |F| does not oscillate) and corrected by the
    algebraic prefactor |y|^{−(m−1)/(2m−1)} of the saddle-point asymptotics.
    Returns a copy of the kernel with `decay_fit` set."""

    if kernel.dim != 1:
        raise ValueError("decay fits need a one-dimensional profile")
    grid = kernel.profile.grid
    y = grid.axis_coordinates(0) - (grid.origin[0] + grid.extents[0] / 2)
    magnitude = np.abs(kernel.profile.values)
    y_max = grid.extents[0] / 2

    window = (np.abs(y) >= 3) & (np.abs(y) <= 0.8 * y_max)
    window &= magnitude > 1e-11 * float(np.max(magnitude))
    peaks, _ = scipy.signal.find_peaks(magnitude)
    oscillating = bool(np.any(kernel.profile.values < 0)) and kernel.m > 1
    if oscillating:
        selected = np.array([i for i in peaks if window[i]], dtype=int)
    else:
        selected = np.flatnonzero(window)
    if selected.size < min_peaks:
        raise ValueError(
            f"too few envelope peaks ({selected.size} < {min_peaks}) in the fit window"
        )

    distance = np.abs(y[selected])
    correction = (kernel.m - 1) / (2 * kernel.m - 1) * np.log(distance)
    data = np.log(magnitude[selected]) + correction

    def model(r: Array, log_D: float, d: float, alpha: float) -> Array:
        return log_D - d * np.power(r, alpha)

    (log_D, d, alpha), _ = scipy.optimize.curve_fit(
        model,
        distance,
        data,
        p0=(0.0, asymptotic_decay_rate(kernel.m), decay_exponent(kernel.m)),
        maxfev=20000,
    )
    fit = DecayFit(D=math.exp(log_D), d=float(d), alpha=float(alpha), n_samples=int(selected.size))
    return kernel.model_copy(update={"decay_fit": fit})


def heat_semigroup_apply(m: int, t: float, v: kslab.fields.Field) -> kslab.fields.Field:
    """b(t) * v: Fourier coefficients times exp(−|ξ|^{2m} t)."""

    if t < 0:
        raise ValueError(f"t must not be negative, got {t}")
    grid = v.grid
    if grid.kind != "periodic":
        raise ValueError("the heat semigroup is applied on periodic grids")
    if t == 0:
        return v.with_values(v.values)
    xi = kslab.fields.spectral_abs_wavenumber(grid)
    coefficients = kslab.fields.to_spectral(grid, v.values)
    return v.with_values(
        kslab.fields.from_spectral(grid, coefficients * np.exp(-xi**(2 * m) * t))
    )
