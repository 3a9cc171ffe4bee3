from __future__ import annotations
from fractions import Fraction
import numpy as np
import pydantic
import kslab

Array = kslab.fields.Array


class VolterraReport(pydantic.BaseModel):
    """Weighted Gronwall comparison V ≤ V̂ on a uniform time grid."""

    p: float
    m: int
    dim: int
    beta: float = pydantic.Field(..., description="(4m − 2 − N(p − 1))/(4m)")
    epsilon: float
    times: list[float]
    V: list[float]
    V_hat: list[float]
    bounded: bool = pydantic.Field(..., description="V ≤ V̂ at every grid time")
    monotone: bool


def beta_exact(p: Fraction, m: int, dim: int) -> Fraction:
    return (4 * m - 2 - dim * (p - 1)) / Fraction(4 * m)


def gronwall_beta(p: float, m: int, dim: int) -> float:
    if m < 1 or dim < 1:
        raise ValueError("m and the dimension must be at least 1")
    return float(beta_exact(Fraction(p).limit_denominator(10**9), m, dim))


def supersolution(t: Array, beta: float, p: float, epsilon: float = 0.01) -> Array:
    """V̂(t) = exp{[4/(β(p−1)) + ε] t^β e^{(p−1)t/4}}."""

    t = np.asarray(t, dtype=np.float64)
    return np.exp((4 / (beta * (p - 1)) + epsilon) * t**beta * np.exp((p - 1) * t / 4))


def product_trapezoid_weights(n: int, beta: float) -> Array:
    """Weights a_{j,n}, j = 0..n, of ∫₀^{t_n} (t_n − s)^{β−1} g(s) ds ≈ h^β/(β(β+1)) Σ a_{j,n} g_j."""

    weights = np.empty(n + 1)
    weights[0] = (n - 1)**(beta + 1) - (n - 1 - beta) * n**beta
    j = np.arange(1, n)
    weights[1 : n] = ((n - j + 1)**(beta + 1) + (n - j - 1)**(beta + 1) - 2 *
                      (n - j)**(beta + 1))
    weights[n] = 1.0
    return weights


def volterra_bound(
    p: float,
    m: int,
    dim: int,
    t_end: float,
    steps: int = 3000,
    epsilon: float = 0.01,
) -> VolterraReport:
    """Solve V(t) = 1 + ∫₀ᵗ e^{(p−1)s/4} (t − s)^{β−1} V(s) ds and compare with V̂.

    The weakly singular kernel is integrated with product-trapezoid weights;
    the implicit term of every step is linear in V_n."""

    if p <= 1:
        raise ValueError("p must exceed 1")
    beta = gronwall_beta(p, m, dim)
    if beta <= 0:
        raise ValueError(
            f"beta = {beta:.6g} is not positive: p = {p} is outside the bounded regime p < p0"
        )
    if t_end <= 0 or steps < 1:
        raise ValueError("t_end must be positive and steps at least 1")

    h = t_end / steps
    times = h * np.arange(steps + 1)
    growth = np.exp((p - 1) * times / 4)
    scale = h**beta / (beta * (beta + 1))
    V = np.ones(steps + 1)
    for n in range(1, steps + 1):
        a = product_trapezoid_weights(n, beta)
        history = float(np.dot(a[: n], growth[: n] * V[: n]))
        denominator = 1 - scale * a[n] * growth[n]
        if denominator <= 0:
            raise ValueError(f"time step {h} is too large for the implicit Volterra solve")
        V[n] = (1 + scale * history) / denominator

    V_hat = supersolution(times, beta, p, epsilon)
    return VolterraReport(
        p=p,
        m=m,
        dim=dim,
        beta=beta,
        epsilon=epsilon,
        times=times.tolist(),
        V=V.tolist(),
        V_hat=V_hat.tolist(),
        bounded=bool(np.all(V <= V_hat)),
        monotone=bool(np.all(np.diff(V) >= 0)),
    )


