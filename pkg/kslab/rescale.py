from __future__ import annotations
from fractions import Fraction
from typing import Literal, Optional
import math
import numpy as np
import pydantic
import kslab

Array = kslab.fields.Array

ScalingKind = Literal["ck_l2", "ck_lp", "ck_hminus1", "t_minus_t", "leray"]
SpectrumCase = Literal["nse", "burnett", "generic"]
Classification = Literal["subcritical", "critical", "supercritical"]


class ScalingLaw(pydantic.BaseModel):
    """Closed-form coefficients of one rescaling."""

    kind: ScalingKind
    m: int
    dim: int
    p: float
    c_k: Optional[float] = None
    derived: dict[str, float] = pydantic.Field(default_factory=dict)
    nu_exponent: Optional[float] = pydantic.Field(
        default=None, description="Exponent e in ν_k = C_k^e"
    )
    classification: Optional[Classification] = pydantic.Field(
        default=None, description="Limit of ν_k as C_k → ∞"
    )


def _exact(p: float) -> Fraction:
    return Fraction(p).limit_denominator(10**9)


def _classify(exponent: Fraction) -> Classification:
    if exponent < 0:
        return "subcritical"
    if exponent == 0:
        return "critical"
    return "supercritical"


def spatial_exponent(kind: ScalingKind, dim: int, p: float) -> Fraction:
    """e with a_k = C_k^e for the norm-preserving C_k scalings."""

    if kind == "ck_l2":
        return Fraction(-2, dim)
    if kind == "ck_lp":
        return -_exact(p) / dim
    if kind == "ck_hminus1":
        return Fraction(-2, dim + 2)
    raise ValueError(f"{kind} is not a C_k scaling")


def self_similar_alpha(kind: ScalingKind, m: int, p: float) -> Fraction:
    if kind == "t_minus_t":
        return Fraction(2 * m - 1, 2 * m) / (_exact(p) - 1)
    if kind == "leray":
        return Fraction(2 * m - 1, 2 * m)
    raise ValueError(f"{kind} is not a self-similar scaling")


def scaling_coefficients(
    kind: ScalingKind,
    m: int,
    dim: int,
    p: float,
    c_k: Optional[float] = None,
) -> ScalingLaw:
    checks: list[tuple[bool, str]] = [
        (m >= 1, "m must be at least 1"),
        (dim >= 1, "the dimension must be at least 1"),
        (p > 1, "p must exceed 1"),
    ]
    if kind.startswith("ck_"):
        checks.append((c_k is not None and c_k > 0, f"{kind} needs C_k > 0"))
    error_message = "; ".join([msg for (c, msg) in checks if not c])
    if len(error_message) > 0:
        raise ValueError(error_message)

    p_exact = _exact(p)
    if kind in ("t_minus_t", "leray"):
        alpha = self_similar_alpha(kind, m, p)
        derived = {"alpha": float(alpha), "beta": 1 / (2 * m)}
        if kind == "t_minus_t":
            report = kslab.models.critical_exponents(m, dim, p)
            if report.gamma0 is not None:
                derived["gamma0"] = report.gamma0
        return ScalingLaw(kind=kind, m=m, dim=dim, p=p, derived=derived)

    assert c_k is not None
    a_exponent = spatial_exponent(kind, dim, p)
    if kind == "ck_l2":
        nu_exponent = p_exact - 1 - Fraction(2 * (2 * m - 1), dim)
    elif kind == "ck_lp":
        nu_exponent = 1 - p_exact * (2 * m - 1) / dim
    else:
        nu_exponent = p_exact - 1 - Fraction(2 * (2 * m - 3), dim + 2)
    a_k = c_k**float(a_exponent)
    derived = {
        "a_k": a_k,
        "b_k": a_k**(2 * m),
        "nu_k": c_k**float(nu_exponent),
    }
    if kind == "ck_l2":
        derived["mu_k"] = c_k**(-2 * m / dim)
        gamma0 = kslab.models.critical_exponents(m, dim, p).gamma0
        if gamma0 is not None:
            derived["gamma0"] = gamma0
    return ScalingLaw(
        kind=kind,
        m=m,
        dim=dim,
        p=p,
        c_k=c_k,
        derived=derived,
        nu_exponent=float(nu_exponent),
        classification=_classify(nu_exponent),
    )


def _argmax_center(v: kslab.fields.Field) -> tuple[float, ...]:
    index = np.unravel_index(int(np.argmax(np.abs(v.values))), v.grid.shape)
    return tuple(float(v.grid.axis_coordinates(a)[i]) for a, i in enumerate(index))


def _scaled_grid(
    grid: kslab.fields.Grid,
    center: tuple[float, ...],
    factor: float,
) -> kslab.fields.Grid:
    """Grid of y with x = center + factor·y."""

    return grid.model_copy(
        update={
            "extents": tuple(e / factor for e in grid.extents),
            "origin": tuple((o - c) / factor for o, c in zip(grid.origin, center)),
        }
    )


def _resample(w: kslab.fields.Field, target: Optional[kslab.fields.Grid]) -> kslab.fields.Field:
    if target is None:
        return w
    return kslab.fields.Field(
        grid=target, values=kslab.fields.evaluate_band_limited(w, target.coordinates())
    )


def ck_rescale(
    v: kslab.fields.Field,
    c_k: float,
    kind: ScalingKind,
    p: Optional[float] = None,
    center: Optional[tuple[float, ...]] = None,
    target: Optional[kslab.fields.Grid] = None,
) -> kslab.fields.Field:
    """w(y) = v(x_k + a_k y)/C_k, sampled on the rescaled grid (or resampled onto `target`).

    `x_k` defaults to the location of max |v|."""

    if c_k <= 0:
        raise ValueError(f"C_k must be positive, got {c_k}")
    if kind == "ck_lp" and (p is None or p < 1):
        raise ValueError("ck_lp needs p ≥ 1")
    if kind == "ck_hminus1":
        mean = kslab.fields.mean_value(v)
        if abs(mean) > kslab.fields.MEAN_TOLERANCE * max(1.0, float(np.max(np.abs(v.values)))):
            raise ValueError(f"ck_hminus1 needs a zero-mean field, the mean is {mean:.3e}")
    a_k = c_k**float(spatial_exponent(kind, v.grid.dim, p if p is not None else 2.0))
    center = center if center is not None else _argmax_center(v)
    w = kslab.fields.Field(grid=_scaled_grid(v.grid, center, a_k), values=v.values / c_k)
    return _resample(w, target)


def to_selfsimilar(
    v: kslab.fields.Field,
    T: float,
    t: float,
    m: int,
    p: float = 2.0,
    kind: ScalingKind = "t_minus_t",
    center: Optional[tuple[float, ...]] = None,
    target: Optional[kslab.fields.Grid] = None,
) -> tuple[kslab.fields.Field, float]:
    """v(x,t) = (T−t)^{−α} w(y,τ), y = (x − x₀)/(T−t)^{1/2m}, τ = −ln(T−t)."""

    if not 0 <= t < T:
        raise ValueError(f"need 0 ≤ t < T, got t = {t}, T = {T}")
    alpha = float(self_similar_alpha(kind, m, p))
    remaining = T - t
    center = center if center is not None else tuple(0.0 for _ in range(v.grid.dim))
    w = kslab.fields.Field(
        grid=_scaled_grid(v.grid, center, remaining**(1 / (2 * m))),
        values=remaining**alpha * v.values,
    )
    return _resample(w, target), -math.log(remaining)


def from_selfsimilar(
    w: kslab.fields.Field,
    tau: float,
    T: float,
    m: int,
    p: float = 2.0,
    kind: ScalingKind = "t_minus_t",
    center: Optional[tuple[float, ...]] = None,
    target: Optional[kslab.fields.Grid] = None,
) -> tuple[kslab.fields.Field, float]:
    """Inverse of `to_selfsimilar`; returns v and t = T − e^{−τ}."""

    alpha = float(self_similar_alpha(kind, m, p))
    remaining = math.exp(-tau)
    center = center if center is not None else tuple(0.0 for _ in range(w.grid.dim))
    grid = w.grid
    factor = remaining**(1 / (2 * m))
    x_grid = grid.model_copy(
        update={
            "extents": tuple(e * factor for e in grid.extents),
            "origin": tuple(c + o * factor for o, c in zip(grid.origin, center)),
        }
    )
    v = kslab.fields.Field(grid=x_grid, values=remaining**(-alpha) * w.values)
    return _resample(v, target), T - remaining


def reference_spectrum(
    case: SpectrumCase,
    m: int = 1,
    alpha: Optional[float] = None,
    k_max: int = 4,
) -> list[float]:
    """Eigenvalues of the linearized rescaled operators, k = 0..k_max."""

    if k_max < 0:
        raise ValueError(f"k_max must not be negative, got {k_max}")
    if case == "nse":
        return [-0.5 - k / 2 for k in range(k_max + 1)]
    leading = (2 * m - 1) / (2 * m)
    if case == "generic" and alpha is not None:
        leading = alpha
    return [-leading - k / (2 * m) for k in range(k_max + 1)]


class RateFit(pydantic.BaseModel):
    exponent: float = pydantic.Field(..., description="γ in sup|v| ≈ C (T − t)^γ")
    prefactor: float
    T: float
    n_points: int


def estimate_blowup_time(times: Array, sup_norm: Array, decades: float = 1.0) -> float:
    """Blow-up time T of samples following sup|v| ≈ C (T − t)^γ, without knowing T.

    For that law 1 / (d ln sup|v| / dt) = (t − T) / γ is linear in t, so T is
    the root of a straight-line fit. The first fit uses the last quarter of the
    growing samples and is repeated on the last `decades` before the current
    estimate of T."""

    times = np.asarray(times, dtype=np.float64)
    sup_norm = np.asarray(sup_norm, dtype=np.float64)
    if len(times) < 5 or np.any(sup_norm <= 0):
        raise ValueError("at least 5 samples with a positive sup-norm are needed")
    rate = np.gradient(np.log(sup_norm), times)

    # one-sided differences at both ends are only first order
    candidates = np.arange(1, len(times) - 1)
    candidates = candidates[rate[candidates] > 0]
    window = candidates[len(candidates) * 3 // 4 :]
    T = math.nan
    for _ in range(3):
        if len(window) < 3:
            raise ValueError("at least 3 growing samples are needed to locate the blow-up")
        slope, intercept = np.polyfit(times[window], 1 / rate[window], 1)
        if slope >= 0:
            raise ValueError("the sup-norm does not accelerate towards a blow-up")
        T = float(-intercept / slope)
        remaining = T - times[candidates]
        if not np.any(remaining > 0):
            break
        closest = float(np.min(remaining[remaining > 0]))
        window = candidates[(remaining > 0) & (remaining <= closest * 10**decades)]
    if T <= times[-1]:
        raise ValueError(f"estimated blow-up time {T} precedes the last sample {times[-1]}")
    return T


def fit_blowup_rate(
    times: Array,
    sup_norm: Array,
    T: Optional[float] = None,
    decades: float = 1.0,
) -> RateFit:
    """Log–log least squares of sup|v| against T − t over the last `decades` before T.

    Without a T it is taken from `estimate_blowup_time`."""

    times = np.asarray(times, dtype=np.float64)
    sup_norm = np.asarray(sup_norm, dtype=np.float64)
    if T is None:
        T = estimate_blowup_time(times, sup_norm, decades)
    remaining = T - times
    valid = (remaining > 0) & (sup_norm > 0)
    if not np.any(valid):
        raise ValueError("no samples before the blow-up time")
    closest = float(np.min(remaining[valid]))
    window = valid & (remaining <= closest * 10**decades)
    if np.count_nonzero(window) < 3:
        raise ValueError("at least 3 samples are needed in the fit window")
    slope, intercept = np.polyfit(np.log(remaining[window]), np.log(sup_norm[window]), 1)
    return RateFit(
        exponent=float(slope),
        prefactor=float(np.exp(intercept)),
        T=T,
        n_points=int(np.count_nonzero(window)),
    )


def fit_trajectory_blowup_rate(
    trajectory: kslab.evolve.Trajectory,
    decades: float = 1.0,
    skip_last: int = 0,
) -> RateFit:
    """`fit_blowup_rate` of a run that crossed its blow-up threshold.

    T is estimated from the recorded samples, since the upper end of the
    bracket only bounds the threshold crossing and not the singularity.
    `skip_last` drops the final recorded samples, where the discrete solution
    no longer resolves the singularity."""

    if trajectory.blowup_bracket is None:
        raise ValueError("trajectory has no blow-up bracket")
    if skip_last < 0:
        raise ValueError(f"skip_last must not be negative, got {skip_last}")
    end = len(trajectory.times) - skip_last
    return fit_blowup_rate(
        np.array(trajectory.times[: end]),
        trajectory.get("sup_norm")[: end],
        decades=decades,
    )


class AdvectionScaling(pydantic.BaseModel):
    c_k: float
    p: float
    measured: float
    expected: float
    relative_error: float


def measure_advection_coefficient(
    state: kslab.flows.FlowState,
    c_k: float,
    p: float,
    center: Optional[tuple[float, ...]] = None,
) -> AdvectionScaling:
    """Apply the L^p-preserving C_k scaling to a flow and measure the coefficient ν of
    the rescaled advection term, w_s = −(−Δ)^m w − ν ℙ(w·∇)w."""

    grid = state.grid
    law = scaling_coefficients("ck_lp", state.m, grid.dim, p, c_k)
    a_k, b_k = law.derived["a_k"], law.derived["b_k"]
    center = center if center is not None else tuple(0.0 for _ in range(grid.dim))
    scaled_grid = _scaled_grid(grid, center, a_k)

    def projected_advection(g: kslab.fields.Grid, components: Array) -> Array:
        coefficients = np.stack([kslab.fields.to_spectral(g, c) for c in components])
        advection = kslab.flows.project_spectral(
            g, kslab.flows.advection_spectral(g, coefficients)
        )
        return np.stack([kslab.fields.from_spectral(g, c) for c in advection])

    original = (b_k / c_k) * projected_advection(grid, state.velocity.components)
    rescaled = projected_advection(scaled_grid, state.velocity.components / c_k)
    denominator = float(np.sum(rescaled * rescaled))
    if denominator == 0:
        raise ValueError("the advection term vanishes, no coefficient can be measured")
    measured = float(np.sum(original * rescaled)) / denominator
    expected = law.derived["nu_k"]
    return AdvectionScaling(
        c_k=c_k,
        p=p,
        measured=measured,
        expected=expected,
        relative_error=abs(measured - expected) / abs(expected),
    )
