from __future__ import annotations
from fractions import Fraction
from typing import Any, Literal, Optional
import numpy as np
import pydantic
import kslab

Array = kslab.fields.Array

Family = Literal[
    "kse_ibvp",
    "mkse",
    "mkse_zero_order",
    "non_divergent",
    "pure_divergent",
    "dispersion3",
    "cahn_hilliard",
]
DIVERGENCE_FORM_FAMILIES: tuple[Family, ...] = (
    "mkse", "pure_divergent", "dispersion3", "cahn_hilliard"
)


class ModelSpec(pydantic.BaseModel):
    """PDE family with its parameters.

    `m` is the diffusion parameter of −(−Δ)^m. The `mkse` family writes the
    diffusion as −(−Δ)^{2l}, so `m = 2l` there and either one may be given.
    `kse_ibvp` is the classic equation v_t + D⁴v + D²v = ½D(v²) on an
    interval (m = 2, l = 1, p = 2)."""

    model_config = pydantic.ConfigDict(frozen=True, extra="forbid")

    family: Family
    m: int = pydantic.Field(default=2, ge=1, description="Half order of the dissipation")
    l: Optional[int] = pydantic.Field(
        default=None, ge=1, description="Order of the destabilizing term (mkse only)"
    )
    p: float = pydantic.Field(default=2.0, description="Nonlinearity exponent, p > 1")
    drift: Optional[tuple[float, ...]] = pydantic.Field(
        default=None, description="Drift coefficients d_k, one per axis; 1 on every axis if omitted"
    )
    bc: Optional[Literal["dirichlet", "navier"]] = pydantic.Field(
        default=None, description="Boundary condition kind (kse_ibvp only)"
    )

    @pydantic.model_validator(mode="before")
    @classmethod
    def _resolve_orders(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        family = data.get("family")
        if family == "mkse":
            if data.get("l") is not None and data.get("m") is None:
                data["m"] = 2 * int(data["l"])
            elif data.get("l") is None and data.get("m") is not None and int(data["m"]) % 2 == 0:
                data["l"] = int(data["m"]) // 2
            elif data.get("l") is None and data.get("m") is None:
                data["l"] = 1
                data["m"] = 2
        if family in ("kse_ibvp", "cahn_hilliard"):
            data.setdefault("m", 2)
        if family == "kse_ibvp":
            data.setdefault("l", 1)
        return data

    @pydantic.model_validator(mode="after")
    def _validate(self) -> ModelSpec:
        checks: list[tuple[bool, str]] = [
            (self.p > 1, "p must exceed 1"),
        ]
        if self.family == "mkse":
            checks.append((
                self.m % 2 == 0 and self.l is not None and self.m == 2 * self.l,
                "mkse requires even diffusion order m = 2l",
            ))
        if self.family == "kse_ibvp":
            checks += [
                (self.m == 2, "kse_ibvp has m = 2"),
                (self.p == 2, "kse_ibvp has p = 2"),
            ]
        if self.family == "cahn_hilliard":
            checks.append((self.m == 2, "cahn_hilliard has m = 2"))
        if self.family != "kse_ibvp":
            checks.append((self.bc is None, "boundary conditions are only used by kse_ibvp"))
        error_message = "; ".join([m for (c, m) in checks if not c])
        if len(error_message) > 0:
            raise ValueError(error_message)
        return self

    def drift_for(self, dim: int) -> tuple[float, ...]:
        if self.drift is None:
            return tuple(1.0 for _ in range(dim))
        return self.drift

    def check_grid(self, grid: kslab.fields.Grid) -> None:
        """Raise `ValueError` if the family cannot be posed on `grid`."""

        checks: list[tuple[bool, str]] = []
        if self.family == "kse_ibvp":
            checks.append((grid.kind == "interval", "kse_ibvp needs an interval grid"))
            checks.append((
                self.bc is None or self.bc == grid.bc,
                f"model boundary condition {self.bc} differs from the grid's {grid.bc}",
            ))
        else:
            checks.append((grid.kind == "periodic", f"{self.family} needs a periodic grid"))
            checks.append((
                self.drift is None or len(self.drift) == grid.dim,
                "drift length must equal the grid dimension",
            ))
        error_message = "; ".join([m for (c, m) in checks if not c])
        if len(error_message) > 0:
            raise ValueError(f"incompatible grid: {error_message}")


class ExponentReport(pydantic.BaseModel):
    """Critical exponents of the model hierarchy for given (m, N[, p])."""

    m: int
    dim: int
    p: Optional[float] = None
    p0_mkse: float = pydantic.Field(..., description="1 + 2(2m−1)/N")
    p0_h1N3: Optional[float] = pydantic.Field(
        default=None, description="1 + 2(2m−3)/(N+2), only for 2m > 3"
    )
    p_sobolev: Optional[float] = pydantic.Field(
        default=None, description="(N+2m)/(N−2m), only for N > 2m"
    )
    p0_burnett: float = pydantic.Field(..., description="N/(2m−1)")
    gamma0: Optional[float] = pydantic.Field(
        default=None, description="(2m−1)/(2N(p₀−p)), only for p < p₀"
    )
    mkse_global: Optional[bool] = pydantic.Field(
        default=None, description="1 < p ≤ 3 and p < p₀ (global existence range)"
    )
    burnett_global: bool = pydantic.Field(..., description="N ≤ 2(2m−1)")
    burnett_critical: bool = pydantic.Field(..., description="N = 2(2m−1)")


def exact_exponents(m: int, dim: int) -> dict[str, Optional[Fraction]]:
    """The critical exponents as exact rationals."""

    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    if dim < 1:
        raise ValueError(f"the dimension must be at least 1, got {dim}")
    return {
        "p0_mkse": 1 + Fraction(2 * (2 * m - 1), dim),
        "p0_h1N3": (1 + Fraction(2 * (2 * m - 3), dim + 2)) if 2 * m > 3 else None,
        "p_sobolev": Fraction(dim + 2 * m, dim - 2 * m) if dim > 2 * m else None,
        "p0_burnett": Fraction(dim, 2 * m - 1),
    }


def critical_exponents(m: int, dim: int, p: Optional[float] = None) -> ExponentReport:
    exponents = exact_exponents(m, dim)
    p0 = exponents["p0_mkse"]
    assert p0 is not None
    gamma0: Optional[float] = None
    mkse_global: Optional[bool] = None
    if p is not None:
        if p <= 1:
            raise ValueError("p must exceed 1")
        p_exact = Fraction(p).limit_denominator(10**9)
        if p_exact < p0:
            gamma0 = float(Fraction(2 * m - 1, 2 * dim) / (p0 - p_exact))
        mkse_global = (1 < p_exact <= 3) and (p_exact < p0)
    return ExponentReport(
        m=m,
        dim=dim,
        p=p,
        p0_mkse=float(p0),
        p0_h1N3=None if exponents["p0_h1N3"] is None else float(exponents["p0_h1N3"]),
        p_sobolev=None if exponents["p_sobolev"] is None else float(exponents["p_sobolev"]),
        p0_burnett=float(exponents["p0_burnett"] or 0),
        gamma0=gamma0,
        mkse_global=mkse_global,
        burnett_global=dim <= 2 * (2 * m - 1),
        burnett_critical=dim == 2 * (2 * m - 1),
    )


# linear / nonlinear split ---------------------------------------------------


def abs_power(values: Array, p: float) -> Array:
    """|v|^p with 0^p = 0."""
    return np.power(np.abs(values), p)


def signed_power(values: Array, p: float) -> Array:
    """|v|^{p−1} v, sign preserving."""
    return np.power(np.abs(values), p - 1) * values


def linear_symbol(spec: ModelSpec, grid: kslab.fields.Grid) -> Array:
    """Fourier (or sine) multiplier of the linear part of the right-hand side."""

    if spec.family == "kse_ibvp":
        if grid.bc != "navier":
            raise ValueError("clamped intervals have no diagonal linear symbol")
        omega = grid.sine_wavenumbers()
        return -omega**4 + omega**2
    xi = kslab.fields.spectral_abs_wavenumber(grid)
    diffusion = -xi**(2 * spec.m)
    if spec.family == "mkse":
        assert spec.l is not None
        return diffusion + xi**(2 * spec.l)
    if spec.family == "mkse_zero_order":
        return diffusion + 0.25
    if spec.family == "cahn_hilliard":
        return -xi**4
    return diffusion


def _drift_divergence(spec: ModelSpec, grid: kslab.fields.Grid, g_hat: Array) -> Array:
    """B₁g = (1/p) Σ d_k D_k g in spectral form."""

    result = np.zeros_like(g_hat)
    for axis, d in enumerate(spec.drift_for(grid.dim)):
        if d != 0:
            result = result + d * kslab.fields.spectral_derivative_factor(grid, axis, 1) * g_hat
    return result / spec.p


def nonlinear_term(spec: ModelSpec, grid: kslab.fields.Grid, coefficients: Array) -> Array:
    """Dealiased spectral coefficients of the nonlinear part of the right-hand side."""

    mask = kslab.fields.dealias_mask(grid)
    v = kslab.fields.from_spectral(grid, coefficients * mask)

    if spec.family == "kse_ibvp":
        # ½D(v²) = v·Dv, an odd function that the sine transform represents
        omega = grid.sine_wavenumbers()
        dv = kslab.fields.cosine_series(grid, coefficients * mask * omega)[1 :-1]
        return mask * kslab.fields.to_spectral(grid, v * dv)

    if spec.family == "non_divergent":
        return mask * kslab.fields.to_spectral(grid, -signed_power(v, spec.p))

    xi_squared = kslab.fields.spectral_abs_wavenumber(grid)**2
    if spec.family == "cahn_hilliard":
        return mask * xi_squared * kslab.fields.to_spectral(grid, signed_power(v, spec.p))

    b1 = _drift_divergence(spec, grid, kslab.fields.to_spectral(grid, abs_power(v, spec.p)))
    if spec.family == "dispersion3":
        return mask * xi_squared * b1
    return mask * b1


def clamped_linear_operator(grid: kslab.fields.Grid) -> Any:
    """Sparse −D⁴ − D² for the clamped interval."""

    return (
        -kslab.fields.clamped_difference_matrix(grid, 4) -
        kslab.fields.clamped_difference_matrix(grid, 2)
    )


def clamped_nonlinear_term(grid: kslab.fields.Grid, values: Array) -> Array:
    """½D(v²) in the skew-symmetric form (1/3)(D(v²) + v·Dv), exactly orthogonal to v."""

    d1 = kslab.fields.clamped_difference_matrix(grid, 1)
    return (d1 @ (values * values) + values * (d1 @ values)) / 3.0


def rhs(spec: ModelSpec, v: kslab.fields.Field) -> kslab.fields.Field:
    """∂v/∂t of the model, sampled on the grid of `v`."""

    grid = v.grid
    spec.check_grid(grid)
    if spec.family == "kse_ibvp" and grid.bc == "dirichlet":
        return v.with_values(
            clamped_linear_operator(grid) @ v.values + clamped_nonlinear_term(grid, v.values)
        )
    coefficients = kslab.fields.to_spectral(grid, v.values)
    return v.with_values(
        kslab.fields.from_spectral(
            grid,
            linear_symbol(spec, grid) * coefficients + nonlinear_term(spec, grid, coefficients),
        )
    )


def apply_bcs(
    spec: ModelSpec,
    v: kslab.fields.Field,
    modes: Optional[int] = None,
) -> kslab.fields.Field:
    """Impose the interval boundary conditions on `v`.

    Navier: L²-projection onto the first `modes` sine modes (all resolved
    modes by default); the sine basis satisfies v = D²v = 0 at both ends.
    Dirichlet: the samples are the interior nodes, v = 0 holds at the
    implicit end nodes and the clamped difference operators mirror the ghost
    nodes. Dv = 0 is imposed on the samples by resetting the first and last
    one so that the one-sided slope (4v_1 − v_2) / 2h through the end node
    vanishes."""

    grid = v.grid
    if grid.kind != "interval":
        raise ValueError("boundary conditions apply to interval grids only")
    bc = spec.bc or grid.bc
    if bc == "dirichlet":
        values = np.array(v.values)
        values[0] = values[1] / 4
        values[-1] = values[-2] / 4
        return v.with_values(values)
    b = kslab.fields.to_spectral(grid, v.values)
    if modes is not None:
        b[modes :] = 0.0
    return v.with_values(kslab.fields.from_spectral(grid, b))
