from __future__ import annotations
from typing import Callable, Literal, Optional, Union
import math
import numpy as np
import pydantic
import scipy.integrate
import kslab

Array = kslab.fields.Array
Profile = Union[kslab.fields.Field, Callable[[Array], Array]]
CertificateCase = Literal["strict", "zero", "negative"]


def kappa(lam: float, L: float) -> float:
    """κ = (λ(λ+2)/4 · L^{−(λ+2)})^{1/2}."""
    return math.sqrt(lam * (lam + 2) / 4 * L**(-(lam + 2)))


def c_lambda(lam: float, L: float) -> float:
    """C_λ(L) = λ(λ−1)L^{λ−6}[(λ−2)²(λ−3)²/(λ−6) + 2(λ−2)(λ−3)L²/(λ−4) + L⁴/(λ−2)]."""

    if lam <= 6:
        raise ValueError(f"lambda must exceed 6, got {lam}")
    return lam * (lam - 1) * L**(lam - 6) * (
        (lam - 2)**2 * (lam - 3)**2 / (lam - 6) + 2 * (lam - 2) * (lam - 3) * L**2 /
        (lam - 4) + L**4 / (lam - 2)
    )


def boundary_functional(traces: kslab.fields.BoundaryTraces, lam: float, L: float) -> float:
    """B₀(v) from the traces of v at x = 0."""

    v, dv, d2v, d3v = traces.v, traces.dv, traces.d2v, traces.d3v
    return (
        -0.5 * L**lam * v**2 + lam * (lam - 1) * (lam - 2) * L**(lam - 3) * v +
        L**lam * (1 + lam * (lam - 1) * L**(-2)) * dv + lam * L**(lam - 1) * d2v + L**lam * d3v
    )


def capacity_integral(v: kslab.fields.Field, lam: float, L: Optional[float] = None) -> float:
    """J = ∫₀^L v(x)|x − L|^λ dx for an interval field (boundary values zero)."""

    grid = v.grid
    if grid.kind != "interval":
        raise ValueError("the capacity integral is taken over an interval")
    length = grid.extents[0] if L is None else L
    x = np.concatenate([[0.0], grid.axis_coordinates(0) - grid.origin[0], [grid.extents[0]]])
    values = np.concatenate([[0.0], v.values, [0.0]])
    inside = x <= length
    return float(
        scipy.integrate.trapezoid(values[inside] * np.abs(x[inside] - length)**lam, x[inside])
    )


def profile_integral(profile: Profile, lam: float, L: float, samples: int = 2049) -> float:
    if isinstance(profile, kslab.fields.Field):
        return capacity_integral(profile, lam, L)
    x = np.linspace(0.0, L, samples)
    return float(scipy.integrate.trapezoid(profile(x) * (L - x)**lam, x))


class CapacityReport(pydantic.BaseModel):
    lam: float
    L: float
    J: float
    B0: float
    c_lambda: float
    H_lambda: float
    kappa: float


def capacity_functional(
    v: Profile,
    lam: float,
    L: float,
    traces: Optional[kslab.fields.BoundaryTraces] = None,
) -> CapacityReport:
    """J, B₀, C_λ and H_λ = B₀ − C_λ for the weight |x − L|^λ.

    Without explicit `traces` the boundary data are taken from the field at
    x = 0 (all zero for a callable profile)."""

    if lam <= 6:
        raise ValueError(f"lambda must exceed 6, got {lam}")
    if L <= 0:
        raise ValueError(f"L must be positive, got {L}")
    if traces is None:
        if isinstance(v, kslab.fields.Field):
            traces = kslab.fields.boundary_traces(v, "left")
        else:
            traces = kslab.fields.BoundaryTraces()
    b0 = boundary_functional(traces, lam, L)
    c = c_lambda(lam, L)
    return CapacityReport(
        lam=lam,
        L=L,
        J=profile_integral(v, lam, L),
        B0=b0,
        c_lambda=c,
        H_lambda=b0 - c,
        kappa=kappa(lam, L),
    )


class BlowupCertificate(pydantic.BaseModel):
    """Closed-form blow-up time bound of the Riccati inequality J' ≥ κ²J² + H."""

    model_config = pydantic.ConfigDict(frozen=True)

    lam: Optional[float] = pydantic.Field(default=None, description="Weight exponent, > 6")
    L: Optional[float] = pydantic.Field(default=None, gt=0)
    kappa: float = pydantic.Field(..., gt=0)
    c_lambda: Optional[float] = None
    J0: float
    case: CertificateCase
    a: float = pydantic.Field(default=0.0, ge=0, description="√|H_λ|, zero in the zero case")
    c0: float = pydantic.Field(..., description="arctan(κJ₀/a) or (κJ₀−a)/(κJ₀+a)")
    t_infinity_bound: float

    @pydantic.model_validator(mode="after")
    def _validate(self) -> BlowupCertificate:
        checks: list[tuple[bool, str]] = [
            (
                math.isfinite(self.t_infinity_bound) and self.t_infinity_bound > 0,
                "t_infinity_bound must be finite and positive",
            ),
        ]
        if self.lam is not None:
            checks.append((self.lam > 6, "lambda must exceed 6"))
        if self.lam is not None and self.L is not None and self.lam > 6:
            checks.append((
                math.isclose(self.kappa, kappa(self.lam, self.L), rel_tol=1e-12),
                "kappa differs from its closed form",
            ))
        if self.case == "zero":
            checks.append((self.J0 > 0, "the zero case requires J0 > 0"))
        if self.case in ("strict", "negative"):
            checks.append((self.a > 0, f"the {self.case} case requires a > 0"))
        if self.case == "negative":
            checks.append((
                self.J0 > self.a / self.kappa, "the negative case requires J0 > a/kappa"
            ))
        error_message = "; ".join([m for (c, m) in checks if not c])
        if len(error_message) > 0:
            raise ValueError(f"certificate is invalid: {error_message}")
        return self

    @property
    def H(self) -> float:
        return {"strict": self.a**2, "zero": 0.0, "negative": -self.a**2}[self.case]

    def lower_bound(self, t: Array) -> Array:
        """Solution of J' = κ²J² + H through J₀, a lower envelope for J(t) before T∞."""

        t = np.asarray(t, dtype=np.float64)
        a, k = self.a, self.kappa
        if self.case == "strict":
            return (a / k) * np.tan(a * k * t + self.c0)
        if self.case == "zero":
            return self.J0 / (1 - self.J0 * k**2 * t)
        growth = self.c0 * np.exp(2 * a * k * t)
        return (a / k) * (1 + growth) / (1 - growth)


def closed_form_certificate(
    case: CertificateCase,
    J0: float,
    kappa_value: float,
    a: float = 0.0,
    lam: Optional[float] = None,
    L: Optional[float] = None,
    c_lambda_value: Optional[float] = None,
) -> BlowupCertificate:
    """T∞ bound of one case; raises `ValueError` if the case hypotheses fail."""

    if kappa_value <= 0:
        raise ValueError(f"kappa must be positive, got {kappa_value}")
    if case == "strict":
        if a <= 0:
            raise ValueError("the strict case requires a > 0")
        c0 = math.atan(kappa_value * J0 / a)
        bound = (math.pi / 2 - c0) / (a * kappa_value)
    elif case == "zero":
        if J0 <= 0:
            raise ValueError("the zero case requires J0 > 0")
        c0 = 0.0
        bound = 1 / (kappa_value**2 * J0)
    else:
        if a <= 0 or kappa_value * J0 <= a:
            raise ValueError("the negative case requires a > 0 and J0 > a/kappa")
        c0 = (kappa_value * J0 - a) / (kappa_value * J0 + a)
        bound = math.log(1 / c0) / (2 * a * kappa_value)
    return BlowupCertificate(
        lam=lam,
        L=L,
        kappa=kappa_value,
        c_lambda=c_lambda_value,
        J0=J0,
        case=case,
        a=a,
        c0=c0,
        t_infinity_bound=bound,
    )


def certificate_from_report(report: CapacityReport) -> Optional[BlowupCertificate]:
    """Classify one (λ, L) point by the sign of H_λ; None if no case applies."""

    H, k, J0 = report.H_lambda, report.kappa, report.J
    kwargs = {"lam": report.lam, "L": report.L, "c_lambda_value": report.c_lambda}
    try:
        if H > 0:
            return closed_form_certificate("strict", J0, k, math.sqrt(H), **kwargs)  # type: ignore
        if H == 0:
            return closed_form_certificate("zero", J0, k, 0.0, **kwargs)  # type: ignore
        return closed_form_certificate("negative", J0, k, math.sqrt(-H), **kwargs)  # type: ignore
    except ValueError:
        return None


def _best(certificates: list[Optional[BlowupCertificate]]) -> Optional[BlowupCertificate]:
    found = [c for c in certificates if c is not None]
    if len(found) == 0:
        return None
    return min(found, key=lambda c: c.t_infinity_bound)


def certify_blowup(
    profile: Profile,
    traces: Optional[kslab.fields.BoundaryTraces] = None,
    lambda_range: tuple[float, float] = (6.5, 30.0),
    L_range: tuple[float, float] = (0.5, 4.0),
    lattice: int = 64,
    refine: bool = True,
    workers: Optional[int] = None,
) -> Optional[BlowupCertificate]:
    """Grid-search (λ, L) for the certificate with the smallest T∞ bound.

    λ and L run over logarithmic lattices. The search is refined once on the
    cells around the best lattice point. Lattice rows are evaluated
    concurrently; the result does not depend on the number of workers."""

    checks: list[tuple[bool, str]] = [
        (6 < lambda_range[0] <= lambda_range[1], "lambda range must lie in (6, ∞)"),
        (0 < L_range[0] <= L_range[1], "L range must be positive"),
        (lattice >= 2, "lattice must have at least 2 points per axis"),
    ]
    if isinstance(profile, kslab.fields.Field):
        checks.append((profile.grid.kind == "interval", "profiles must live on an interval"))
    error_message = "; ".join([m for (c, m) in checks if not c])
    if len(error_message) > 0:
        raise ValueError(error_message)
    if traces is None and isinstance(profile, kslab.fields.Field):
        traces = kslab.fields.boundary_traces(profile, "left")

    def search(lams: Array, Ls: Array) -> tuple[Optional[BlowupCertificate], int, int]:
        def row(lam: float) -> list[Optional[BlowupCertificate]]:
            return [
                certificate_from_report(capacity_functional(profile, lam, L, traces))
                for L in Ls
            ]

        rows = kslab.utils.map_concurrently(row, [float(x) for x in lams], workers)
        best_index = (-1, -1)
        best: Optional[BlowupCertificate] = None
        for i, certificates in enumerate(rows):
            for j, c in enumerate(certificates):
                if c is not None and (best is None or c.t_infinity_bound < best.t_infinity_bound):
                    best, best_index = c, (i, j)
        return best, best_index[0], best_index[1]

    lams = np.geomspace(lambda_range[0], lambda_range[1], lattice)
    Ls = np.geomspace(L_range[0], L_range[1], lattice)
    best, i, j = search(lams, Ls)
    if best is None or not refine:
        return best
    refined, _, _ = search(
        np.geomspace(lams[max(i - 1, 0)], lams[min(i + 1, lattice - 1)], lattice),
        np.geomspace(Ls[max(j - 1, 0)], Ls[min(j + 1, lattice - 1)], lattice),
    )
    return _best([best, refined])


class OracleResult(pydantic.BaseModel):
    times: list[float]
    values: list[float]
    divergence_bracket: Optional[tuple[float, float]] = None


def riccati_oracle(
    case: CertificateCase,
    J0: float,
    kappa_value: float,
    a: float,
    t_grid: Array,
    dt: Optional[float] = None,
) -> OracleResult:
    """Integrate J' = κ²J² + H (H = a², 0 or −a²) with classic RK4.

    The step defaults to 1e−5 of the closed-form blow-up time (or of the last
    grid time when there is none). Integration stops with a divergence
    bracket once κ²|J|·dt exceeds 10, i.e. the singularity is closer than a
    tenth of a step."""

    H = {"strict": a**2, "zero": 0.0, "negative": -a**2}[case]
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.size == 0 or t_grid[0] != 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must start at 0 and increase")
    if dt is None:
        try:
            t_guess = closed_form_certificate(case, J0, kappa_value, a).t_infinity_bound
        except ValueError:
            t_guess = float(t_grid[-1])
        dt = 1e-5 * t_guess
    k2 = kappa_value**2

    def f(J: float) -> float:
        return k2 * J * J + H

    times, values = [0.0], [J0]
    J, t = J0, 0.0
    for t_next in t_grid[1 :]:
        n_sub = max(1, int(math.ceil((t_next - t) / dt)))
        h = (t_next - t) / n_sub
        for s in range(n_sub):
            t_start = t + s * h
            k1 = f(J)
            k2_ = f(J + h / 2 * k1)
            k3 = f(J + h / 2 * k2_)
            k4 = f(J + h * k3)
            J_new = J + h / 6 * (k1 + 2 * k2_ + 2 * k3 + k4)
            if not math.isfinite(J_new) or k2 * abs(J_new) * h > 10:
                return OracleResult(
                    times=times, values=values, divergence_bracket=(t_start, t_start + h)
                )
            J = J_new
        t = float(t_next)
        times.append(t)
        values.append(J)
    return OracleResult(times=times, values=values)
