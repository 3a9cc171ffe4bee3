import math
from fractions import Fraction
import numpy as np
import pydantic
import pytest
import kslab


@pytest.mark.order(4)
def test_capacity_constants() -> None:
    assert kslab.blowup.kappa(8.0, 1.0) == pytest.approx(math.sqrt(20))
    with pytest.raises(ValueError):
        kslab.blowup.c_lambda(6.0, 1.0)

    report = kslab.blowup.capacity_functional(lambda x: np.ones_like(x), 8.0, 1.0)
    assert report.J == pytest.approx(1 / 9, rel=1e-4)
    assert report.B0 == 0
    assert report.H_lambda == pytest.approx(-report.c_lambda)
    assert report.c_lambda > 0


@pytest.mark.order(4)
def test_closed_form_certificates() -> None:
    strict = kslab.blowup.closed_form_certificate("strict", 0.0, 1.0, a=1.0)
    assert strict.t_infinity_bound == pytest.approx(math.pi / 2)

    zero = kslab.blowup.closed_form_certificate("zero", 1.0, 2.0)
    assert zero.t_infinity_bound == pytest.approx(0.25)

    negative = kslab.blowup.closed_form_certificate("negative", 2.0, 1.0, a=1.0)
    assert negative.t_infinity_bound == pytest.approx(0.5 * math.log(3))

    for certificate in (strict, zero, negative):
        assert float(certificate.lower_bound(np.array(0.0))) == pytest.approx(certificate.J0)

    with pytest.raises(ValueError):
        kslab.blowup.closed_form_certificate("negative", 1.0, 1.0, a=1.0)
    with pytest.raises(ValueError):
        kslab.blowup.closed_form_certificate("zero", 0.0, 1.0)
    with pytest.raises(ValueError):
        kslab.blowup.closed_form_certificate("strict", 1.0, 1.0, a=0.0)


@pytest.mark.order(4)
def test_certificate_invariants() -> None:
    with pytest.raises(pydantic.ValidationError):
        kslab.blowup.BlowupCertificate(
            lam=8.0, L=1.0, kappa=1.0, J0=1.0, case="zero", c0=0.0, t_infinity_bound=1.0
        )
    bigger_a = kslab.blowup.closed_form_certificate("strict", 1.0, 1.0, a=2.0)
    smaller_a = kslab.blowup.closed_form_certificate("strict", 1.0, 1.0, a=1.0)
    assert bigger_a.t_infinity_bound < smaller_a.t_infinity_bound


@pytest.mark.order(4)
def test_riccati_oracle() -> None:
    result = kslab.blowup.riccati_oracle("zero", 1.0, 1.0, 0.0, np.array([0.0, 0.5, 2.0]))
    assert result.values[1] == pytest.approx(2.0, rel=1e-8)
    assert result.divergence_bracket is not None
    assert abs(result.divergence_bracket[0] - 1.0) < 1e-4

    steady = kslab.blowup.riccati_oracle("negative", 1.0, 1.0, 1.0, np.linspace(0, 1, 5))
    assert steady.divergence_bracket is None
    assert np.allclose(steady.values, 1.0)

    with pytest.raises(ValueError):
        kslab.blowup.riccati_oracle("zero", 1.0, 1.0, 0.0, np.array([0.1, 0.2]))


@pytest.mark.order(4)
def test_certificate_search_is_deterministic() -> None:
    profile = lambda x: 1e4 * np.ones_like(x)
    serial = kslab.blowup.certify_blowup(profile, lattice=8, workers=1)
    parallel = kslab.blowup.certify_blowup(profile, lattice=8, workers=4)

    assert serial is not None
    assert serial == parallel
    assert serial.case == "negative"
    assert 0 < serial.t_infinity_bound < math.inf

    with pytest.raises(ValueError):
        kslab.blowup.certify_blowup(profile, lambda_range=(5.0, 10.0))


@pytest.mark.order(4)
def test_volterra_bound() -> None:
    assert kslab.volterra.beta_exact(Fraction(2), 2, 1) == Fraction(5, 8)

    report = kslab.volterra.volterra_bound(2.0, 2, 1, 3.0, steps=1000)
    assert report.beta == pytest.approx(5 / 8)
    assert report.V[0] == 1.0
    assert report.bounded
    assert report.monotone

    with pytest.raises(ValueError, match="not positive"):
        kslab.volterra.volterra_bound(3.0, 1, 1, 1.0)


@pytest.mark.order(4)
def test_product_trapezoid_weights_integrate_constants() -> None:
    beta = 0.5
    for n in (1, 2, 5, 20):
        weights = kslab.volterra.product_trapezoid_weights(n, beta)
        assert float(np.sum(weights)) == pytest.approx((beta + 1) * n**beta)
