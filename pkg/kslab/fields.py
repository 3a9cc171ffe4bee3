from __future__ import annotations
from typing import Any, Callable, Literal, Optional
import math
import numpy as np
import numpy.typing as npt
import pydantic
import scipy.fft
import scipy.sparse

Array = npt.NDArray[Any]

MEAN_TOLERANCE = 1e-10


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


class Grid(pydantic.BaseModel):
    """Discrete domain descriptor.

    `periodic` grids sample `[origin, origin + extent)` per axis at `points`
    equidistant nodes. `interval` grids are one-dimensional, span
    `(origin, origin + extent)` and sample the `points` interior nodes
    `origin + j * extent / (points + 1)`; the boundary values are zero."""

    model_config = pydantic.ConfigDict(frozen=True, extra="forbid")

    dim: int = pydantic.Field(..., ge=1, description="Number of spatial dimensions")
    kind: Literal["periodic", "interval"] = pydantic.Field(..., description="Domain kind")
    extents: tuple[float, ...] = pydantic.Field(..., description="Domain length per axis")
    points: tuple[int, ...] = pydantic.Field(..., description="Number of samples per axis")
    origin: tuple[float, ...] = pydantic.Field(
        default=(), description="Lower domain corner per axis, zero when omitted"
    )
    bc: Optional[Literal["dirichlet", "navier"]] = pydantic.Field(
        default=None, description="Boundary condition kind of an interval grid"
    )

    @pydantic.model_validator(mode="before")
    @classmethod
    def _default_origin(cls, data: Any) -> Any:
        if isinstance(data, dict) and not data.get("origin"):
            data = {**data, "origin": tuple(0.0 for _ in range(int(data.get("dim", 0))))}
        return data

    @pydantic.model_validator(mode="after")
    def _validate(self) -> Grid:
        checks: list[tuple[bool, str]] = [
            (len(self.extents) == self.dim, "one extent per axis required"),
            (len(self.points) == self.dim, "one point count per axis required"),
            (len(self.origin) == self.dim, "one origin coordinate per axis required"),
            (all(e > 0 for e in self.extents), "all extents must be strictly positive"),
            (all(n >= 8 for n in self.points), "at least 8 points per axis required"),
        ]
        if self.kind == "periodic":
            checks += [
                (
                    all(_is_power_of_two(n) for n in self.points),
                    "periodic grids need a power of two points per axis"
                ),
                (self.bc is None, "periodic grids carry no boundary condition"),
            ]
        else:
            checks += [
                (self.dim == 1, "interval grids are one-dimensional"),
                (self.bc is not None, "interval grids need a boundary condition"),
            ]
        error_message = "; ".join([m for (c, m) in checks if not c])
        if len(error_message) > 0:
            raise ValueError(f"grid is invalid: {error_message}")
        return self

    @staticmethod
    def periodic(
        extents: tuple[float, ...] | list[float],
        points: tuple[int, ...] | list[int],
        origin: Optional[tuple[float, ...] | list[float]] = None,
    ) -> Grid:
        return Grid(
            dim=len(extents),
            kind="periodic",
            extents=tuple(float(e) for e in extents),
            points=tuple(int(n) for n in points),
            origin=tuple(float(o) for o in origin) if origin is not None else (),
        )

    @staticmethod
    def interval(
        length: float,
        points: int,
        bc: Literal["dirichlet", "navier"],
        origin: float = 0.0,
    ) -> Grid:
        return Grid(
            dim=1,
            kind="interval",
            extents=(float(length), ),
            points=(int(points), ),
            origin=(float(origin), ),
            bc=bc,
        )

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.points)

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple[float, ...]:
        if self.kind == "periodic":
            return tuple(e / n for e, n in zip(self.extents, self.points))
        return (self.extents[0] / (self.points[0] + 1), )

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def axis_coordinates(self, axis: int) -> Array:
        h = self.spacing[axis]
        if self.kind == "periodic":
            return self.origin[axis] + h * np.arange(self.points[axis])
        return self.origin[axis] + h * np.arange(1, self.points[axis] + 1)

    def coordinates(self) -> list[Array]:
        """Nodes per axis as broadcast-ready arrays (`indexing="ij"`)."""
        return list(
            np.meshgrid(*[self.axis_coordinates(a) for a in range(self.dim)], indexing="ij")
        )

    def wavenumbers(self, axis: int) -> Array:
        """Angular wavenumbers of `axis` in the real-FFT layout, shaped for broadcasting."""
        assert self.kind == "periodic", "wavenumbers are defined on periodic grids only"
        n, h = self.points[axis], self.spacing[axis]
        if axis == self.dim - 1:
            k = 2 * np.pi * scipy.fft.rfftfreq(n, d=h)
        else:
            k = 2 * np.pi * scipy.fft.fftfreq(n, d=h)
        shape = [1] * self.dim
        shape[axis] = k.size
        return np.reshape(k, shape)

    def wavenumber_indices(self, axis: int) -> Array:
        n = self.points[axis]
        if axis == self.dim - 1:
            k = np.arange(n // 2 + 1)
        else:
            k = np.fft.fftfreq(n, d=1.0 / n)
        shape = [1] * self.dim
        shape[axis] = k.size
        return np.reshape(np.abs(k), shape)

    def sine_wavenumbers(self) -> Array:
        assert self.kind == "interval", "sine wavenumbers are defined on interval grids only"
        n = self.points[0]
        return np.pi * np.arange(1, n + 1) / self.extents[0]


class Field(pydantic.BaseModel):
    """Sampled real-valued scalar state on a grid; immutable."""

    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    values: Array = pydantic.Field(..., description="One value per grid node, shaped like the grid")

    @pydantic.field_validator("values", mode="before")
    @classmethod
    def _freeze_values(cls, v: Any) -> Array:
        array = np.array(v, dtype=np.float64, copy=True)
        array.setflags(write=False)
        return array

    @pydantic.model_validator(mode="after")
    def _validate(self) -> Field:
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field has shape {self.values.shape} but the grid has shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")
        return self

    @staticmethod
    def zeros(grid: Grid) -> Field:
        return Field(grid=grid, values=np.zeros(grid.shape))

    @staticmethod
    def from_function(grid: Grid, function: Callable[..., Array]) -> Field:
        """Sample `function(x0, x1, ...)` at the grid nodes."""
        return Field(grid=grid, values=np.broadcast_to(function(*grid.coordinates()), grid.shape))

    def with_values(self, values: Array) -> Field:
        return Field(grid=self.grid, values=values)


class VectorField(pydantic.BaseModel):
    """Sampled real-valued vector state, one array per component."""

    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    components: Array = pydantic.Field(
        ..., description="Array of shape (number of components, *grid shape)"
    )

    @pydantic.field_validator("components", mode="before")
    @classmethod
    def _freeze_components(cls, v: Any) -> Array:
        array = np.array(v, dtype=np.float64, copy=True)
        array.setflags(write=False)
        return array

    @pydantic.model_validator(mode="after")
    def _validate(self) -> VectorField:
        if self.components.shape[1 :] != self.grid.shape:
            raise ValueError(
                f"components have shape {self.components.shape[1:]} " +
                f"but the grid has shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.components)):
            raise ValueError("vector field contains non-finite values")
        return self

    @property
    def n_components(self) -> int:
        return int(self.components.shape[0])

    def component(self, index: int) -> Field:
        return Field(grid=self.grid, values=self.components[index])

    def with_components(self, components: Array) -> VectorField:
        return VectorField(grid=self.grid, components=components)


class NormReport(pydantic.BaseModel):
    l2: float = pydantic.Field(..., ge=0)
    lp: dict[float, float] = pydantic.Field(default_factory=dict)
    linf: float = pydantic.Field(..., ge=0)
    hminus1: Optional[float] = pydantic.Field(
        default=None, ge=0, description="Only present for (numerically) zero-mean fields"
    )
    mean: float = pydantic.Field(..., description="Signed domain average")


class InequalityCheck(pydantic.BaseModel):
    name: str
    lhs: float
    rhs: float
    ratio: float = pydantic.Field(..., description="lhs / rhs, zero when both sides vanish")
    satisfied: bool


class InterpolationReport(pydantic.BaseModel):
    checks: list[InequalityCheck]

    def get(self, name: str) -> InequalityCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    @property
    def satisfied(self) -> bool:
        return all(c.satisfied for c in self.checks)


class BoundaryTraces(pydantic.BaseModel):
    """v, Dv, D²v and D³v at one end of an interval."""

    v: float = 0.0
    dv: float = 0.0
    d2v: float = 0.0
    d3v: float = 0.0


# spectral representation ----------------------------------------------------


def to_spectral(grid: Grid, values: Array) -> Array:
    """Normalized real-FFT coefficients (periodic) or sine coefficients (interval)."""

    if grid.kind == "periodic":
        return scipy.fft.rfftn(values, axes=tuple(range(grid.dim))) / grid.size
    return scipy.fft.dst(values, type=1) / (grid.points[0] + 1)


def from_spectral(grid: Grid, coefficients: Array) -> Array:
    if grid.kind == "periodic":
        return scipy.fft.irfftn(
            coefficients * grid.size, s=grid.shape, axes=tuple(range(grid.dim))
        )
    return scipy.fft.dst(coefficients, type=1) / 2


def cosine_series(grid: Grid, coefficients: Array) -> Array:
    """Evaluate sum_k c_k cos(k pi x / L) at all n + 2 nodes, both ends included."""

    padded = np.concatenate([[0.0], coefficients, [0.0]])
    return scipy.fft.dct(padded, type=1) / 2


def spectral_abs_wavenumber(grid: Grid) -> Array:
    """|ξ| in the spectral layout of `to_spectral`."""

    if grid.kind == "interval":
        return grid.sine_wavenumbers()
    squared = sum(grid.wavenumbers(a)**2 for a in range(grid.dim))
    return np.sqrt(np.broadcast_to(squared, _spectral_shape(grid)))


def _spectral_shape(grid: Grid) -> tuple[int, ...]:
    return grid.shape[:-1] + (grid.shape[-1] // 2 + 1, )


def parseval_weights(grid: Grid) -> Array:
    """Weights w with ∫ v² dx = Σ w |c|² for the coefficients of `to_spectral`."""

    if grid.kind == "interval":
        return np.full(grid.points[0], grid.extents[0] / 2)
    n_last = grid.shape[-1]
    multiplicity = np.full(n_last // 2 + 1, 2.0)
    multiplicity[0] = 1.0
    if n_last % 2 == 0:
        multiplicity[-1] = 1.0
    shape = [1] * grid.dim
    shape[-1] = multiplicity.size
    return np.broadcast_to(grid.volume * np.reshape(multiplicity, shape), _spectral_shape(grid))


def dealias_mask(grid: Grid) -> Array:
    """2/3-rule mask: keeps the modes a quadratic product cannot alias onto."""

    if grid.kind == "interval":
        k = np.arange(1, grid.points[0] + 1)
        return (3 * k < 2 * (grid.points[0] + 1)).astype(np.float64)
    mask: Array = np.ones(_spectral_shape(grid))
    for axis in range(grid.dim):
        mask = mask * (3 * grid.wavenumber_indices(axis) < grid.points[axis])
    return mask.astype(np.float64)


def spectral_derivative_factor(grid: Grid, axis: int, order: int) -> Array:
    """(iξ_axis)^order with the Nyquist mode removed for odd orders."""

    k = grid.wavenumbers(axis)
    if order % 2 == 1 and grid.points[axis] % 2 == 0:
        k = np.where(grid.wavenumber_indices(axis) == grid.points[axis] // 2, 0.0, k)
    return (1j * k)**order


# clamped finite differences -------------------------------------------------


def clamped_difference_matrix(grid: Grid, order: int) -> scipy.sparse.csr_matrix:
    """Centered second-order D^order on the interior nodes of a clamped interval.

    The boundary values vanish and the ghost nodes beyond each end are
    eliminated with Dv = 0 (mirror condition u(-h) = u(h))."""

    n, h = grid.points[0], grid.spacing[0]
    e = np.ones(n)
    if order == 1:
        matrix = scipy.sparse.diags([-e[1 :], e[1 :]], [-1, 1], shape=(n, n), format="lil")
        matrix = matrix / (2 * h)
    elif order == 2:
        matrix = scipy.sparse.diags([e[1 :], -2 * e, e[1 :]], [-1, 0, 1], shape=(n, n),
                                    format="lil")
        matrix = matrix / h**2
    elif order == 3:
        matrix = scipy.sparse.diags([-e[2 :], 2 * e[1 :], -2 * e[1 :], e[2 :]], [-2, -1, 1, 2],
                                    shape=(n, n),
                                    format="lil")
        # ghosts v_{-1} = v_1 and v_{n+2} = v_n
        matrix[0, 0] = -1.0
        matrix[n - 1, n - 1] = 1.0
        matrix = matrix / (2 * h**3)
    elif order == 4:
        matrix = scipy.sparse.diags([e[2 :], -4 * e[1 :], 6 * e, -4 * e[1 :], e[2 :]],
                                    [-2, -1, 0, 1, 2],
                                    shape=(n, n),
                                    format="lil")
        matrix[0, 0] = 7.0
        matrix[n - 1, n - 1] = 7.0
        matrix = matrix / h**4
    else:
        raise ValueError(f"order must be in 1..4, got {order}")
    return scipy.sparse.csr_matrix(matrix)


# operations -----------------------------------------------------------------


def derivative(f: Field, axis: int, order: int) -> Field:
    """Sampled derivative ∂^order f / ∂x_axis^order."""

    grid = f.grid
    if order not in (1, 2, 3, 4):
        raise ValueError(f"order must be in 1..4, got {order}")
    if not 0 <= axis < grid.dim:
        raise ValueError(f"axis {axis} is out of range for a {grid.dim}-dimensional grid")

    if grid.kind == "periodic":
        coefficients = to_spectral(grid, f.values)
        return f.with_values(
            from_spectral(grid, coefficients * spectral_derivative_factor(grid, axis, order))
        )

    if grid.bc == "dirichlet":
        return f.with_values(clamped_difference_matrix(grid, order) @ f.values)

    # D^r sin(ωx) = ω^r sin(ωx + rπ/2)
    b = to_spectral(grid, f.values)
    omega = grid.sine_wavenumbers()
    if order % 2 == 0:
        return f.with_values(from_spectral(grid, b * omega**order * (-1)**(order // 2)))
    sign = 1.0 if order == 1 else -1.0
    return f.with_values(cosine_series(grid, sign * b * omega**order)[1 :-1])


def laplacian(f: Field) -> Field:
    result = np.zeros(f.grid.shape)
    for axis in range(f.grid.dim):
        result = result + derivative(f, axis, 2).values
    return f.with_values(result)


def neg_laplacian_power(f: Field, l: float) -> Field:
    """(−Δ)^l f on a periodic grid: Fourier coefficients times |ξ|^{2l}."""

    grid = f.grid
    if grid.kind != "periodic":
        raise ValueError("neg_laplacian_power requires a periodic grid")
    if l == 0:
        return f.with_values(f.values)
    coefficients = to_spectral(grid, f.values)
    if l < 0:
        mean = float(np.real(coefficients.flat[0]))
        tolerance = MEAN_TOLERANCE * max(1.0, float(np.max(np.abs(f.values))))
        if abs(mean) > tolerance:
            raise ValueError(
                f"(−Δ)^{l} needs a zero-mean field, the mean is {mean:.3e} " +
                f"(tolerance {tolerance:.1e})"
            )
    xi = spectral_abs_wavenumber(grid)
    multiplier = np.zeros_like(xi)
    nonzero = xi > 0
    multiplier[nonzero] = xi[nonzero]**(2 * l)
    return f.with_values(from_spectral(grid, coefficients * multiplier))


def integrate(f: Field | Array, grid: Optional[Grid] = None) -> float:
    """Trapezoidal quadrature over the grid (boundary zeros of interval grids included)."""

    if isinstance(f, Field):
        grid, values = f.grid, f.values
    else:
        assert grid is not None, "a grid is needed to integrate raw values"
        values = f
    return float(grid.cell_volume * np.sum(values))


def inner(f: Field, g: Field) -> float:
    return integrate(f.values * g.values, f.grid)


def mean_value(f: Field) -> float:
    return integrate(f) / f.grid.volume


def hminus1_norm(f: Field) -> float:
    """‖f‖₋₁ of the zero-mean part, by Fourier weights |ξ|^{-2}."""

    grid = f.grid
    if grid.kind != "periodic":
        raise ValueError("the H⁻¹ norm is computed on periodic grids")
    coefficients = to_spectral(grid, f.values)
    xi = spectral_abs_wavenumber(grid)
    nonzero = xi > 0
    weights = parseval_weights(grid)
    return math.sqrt(
        float(np.sum(weights[nonzero] * np.abs(coefficients[nonzero])**2 / xi[nonzero]**2))
    )


def lp_norm(f: Field, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be at least 1, got {p}")
    return float(integrate(np.abs(f.values)**p, f.grid)**(1.0 / p))


def norms(f: Field, ps: Optional[list[float]] = None) -> NormReport:
    for p in (ps or []):
        if p < 1:
            raise ValueError(f"p must be at least 1, got {p}")
    linf = float(np.max(np.abs(f.values)))
    mean = mean_value(f)
    hminus1: Optional[float] = None
    if f.grid.kind == "periodic" and abs(mean) <= MEAN_TOLERANCE * max(1.0, linf):
        hminus1 = hminus1_norm(f)
    return NormReport(
        l2=math.sqrt(inner(f, f)),
        lp={float(p): lp_norm(f, p)
            for p in (ps or [])},
        linf=linf,
        hminus1=hminus1,
        mean=mean,
    )


def _inequality(name: str, lhs: float, rhs: float) -> InequalityCheck:
    ratio = 0.0 if rhs == 0 and lhs == 0 else (lhs / rhs if rhs > 0 else math.inf)
    return InequalityCheck(
        name=name,
        lhs=lhs,
        rhs=rhs,
        ratio=ratio,
        satisfied=lhs <= rhs * (1 + 1e-10) + 1e-300,
    )


def interpolation_check(v: Field) -> InterpolationReport:
    """Residuals of the interpolation chain ∫|Dv|² ≤ ‖v‖₂‖D²v‖₂ and ‖v‖²_∞ ≤ c_∞ ∫|Dv|².

    ∫|Dv|² is measured as −⟨v, Δv⟩ (integration by parts, exact for the
    boundary conditions and for periodic data). For periodic grids the mean is
    removed first. The embedding constant c_∞ is the interval length or the
    period and is only reported in one dimension."""

    if v.grid.kind == "periodic":
        v = v.with_values(v.values - mean_value(v))
    lap = laplacian(v)
    gradient_squared = max(0.0, -inner(v, lap))
    checks = [
        _inequality(
            "gradient_interpolation",
            gradient_squared,
            math.sqrt(inner(v, v)) * math.sqrt(inner(lap, lap)),
        )
    ]
    if v.grid.dim == 1:
        c_infinity = v.grid.extents[0]
        checks.append(
            _inequality(
                "sup_embedding",
                float(np.max(np.abs(v.values)))**2,
                c_infinity * gradient_squared,
            )
        )
    return InterpolationReport(checks=checks)


def boundary_traces(v: Field, end: Literal["left", "right"] = "left") -> BoundaryTraces:
    """v, Dv, D²v, D³v at one end of an interval field."""

    grid = v.grid
    if grid.kind != "interval":
        raise ValueError("boundary traces are defined for interval grids")
    if grid.bc == "navier":
        b = to_spectral(grid, v.values)
        omega = grid.sine_wavenumbers()
        sign = np.ones_like(omega) if end == "left" else (-1.0)**np.arange(1, omega.size + 1)
        return BoundaryTraces(
            v=0.0,
            dv=float(np.sum(sign * b * omega)),
            d2v=0.0,
            d3v=float(-np.sum(sign * b * omega**3)),
        )
    # clamped: one-sided second-order stencils through the zero boundary node
    h = grid.spacing[0]
    u = v.values if end == "left" else v.values[::-1]
    orientation = 1.0 if end == "left" else -1.0
    d2v = (-5 * u[0] + 4 * u[1] - u[2]) / h**2
    d3v = (18 * u[0] - 24 * u[1] + 14 * u[2] - 3 * u[3]) / (2 * h**3)
    return BoundaryTraces(v=0.0, dv=0.0, d2v=float(d2v), d3v=float(orientation * d3v))


def random_field(
    grid: Grid,
    max_mode: int,
    seed: int,
    zero_mean: bool = True,
    amplitude: float = 1.0,
) -> Field:
    """Seeded band-limited random field with modes |k| <= max_mode per axis."""

    rng = np.random.default_rng(seed)
    if grid.kind == "interval":
        b = np.zeros(grid.points[0])
        count = min(max_mode, grid.points[0])
        b[: count] = rng.standard_normal(count) / np.arange(1, count + 1)
        return Field(grid=grid, values=amplitude * from_spectral(grid, b))
    shape = _spectral_shape(grid)
    coefficients = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = np.ones(shape, dtype=bool)
    for axis in range(grid.dim):
        mask &= np.broadcast_to(grid.wavenumber_indices(axis) <= max_mode, shape)
    coefficients = np.where(mask, coefficients, 0.0)
    if zero_mean:
        coefficients.flat[0] = 0.0
    values = from_spectral(grid, coefficients)
    scale = float(np.max(np.abs(values)))
    return Field(grid=grid, values=amplitude * values / (scale if scale > 0 else 1.0))


def evaluate_band_limited(f: Field, coordinates: list[Array]) -> Array:
    """Evaluate the trigonometric interpolant of a periodic field at arbitrary points."""

    grid = f.grid
    if grid.kind != "periodic":
        raise ValueError("band-limited evaluation needs a periodic grid")
    if len(coordinates) != grid.dim:
        raise ValueError("one coordinate array per axis required")
    coefficients = scipy.fft.fftn(f.values) / grid.size
    shape = np.broadcast(*coordinates).shape
    points = [np.ravel(np.broadcast_to(c, shape)) - o for c, o in zip(coordinates, grid.origin)]
    phase = np.ones((points[0].size, ) + grid.shape, dtype=np.complex128)
    for axis in range(grid.dim):
        k = 2 * np.pi * scipy.fft.fftfreq(grid.points[axis], d=grid.spacing[axis])
        factor = np.exp(1j * np.outer(points[axis], k))
        expand = [slice(None)] + [None] * grid.dim
        expand[axis + 1] = slice(None)
        phase = phase * factor[tuple(expand)]
    values = np.real(np.sum(phase * coefficients[None, ...], axis=tuple(range(1, grid.dim + 1))))
    return np.reshape(values, shape)
