import math
import numpy as np
import pytest
import kslab

from . import utils


@pytest.mark.order(3)
def test_decay_constants() -> None:
    assert kslab.kernels.decay_exponent(1) == 2
    assert kslab.kernels.decay_exponent(2) == pytest.approx(4 / 3)
    assert kslab.kernels.asymptotic_decay_rate(1) == pytest.approx(0.25)
    assert kslab.kernels.kernel_half_width(1) == 40
    with pytest.raises(ValueError):
        kslab.kernels.asymptotic_decay_rate(0)
    with pytest.raises(ValueError):
        kslab.kernels.kernel_grid(1, 3)


@pytest.mark.order(3)
def test_gaussian_kernel() -> None:
    kernel = kslab.kernels.fundamental_solution(1, 1)
    y = kernel.profile.grid.axis_coordinates(0)
    gaussian = np.exp(-y**2 / 4) / math.sqrt(4 * math.pi)

    assert float(np.max(np.abs(kernel.profile.values - gaussian))) < 1e-10
    assert kernel.mass == pytest.approx(1.0, abs=1e-8)
    assert kslab.kernels.kernel_residual(kernel) < 1e-6

    fitted = kslab.kernels.fit_decay(kernel)
    assert fitted.decay_fit is not None
    assert fitted.decay_fit.alpha == pytest.approx(2.0, abs=1e-3)
    assert fitted.decay_fit.d == pytest.approx(0.25, rel=1e-3)
    assert kernel.decay_fit is None


@pytest.mark.order(3)
def test_biharmonic_kernel_oscillates() -> None:
    kernel = kslab.kernels.fundamental_solution(2, 1)
    assert kernel.mass == pytest.approx(1.0, abs=1e-8)
    assert float(np.min(kernel.profile.values)) < 0

    fitted = kslab.kernels.fit_decay(kernel)
    assert fitted.decay_fit is not None
    assert fitted.decay_fit.alpha == pytest.approx(4 / 3, rel=0.05)


@pytest.mark.order(3)
def test_small_box_is_rejected() -> None:
    grid = kslab.fields.Grid.periodic([8.0], [256], origin=[-4.0])
    with pytest.raises(ValueError, match="domain too small"):
        kslab.kernels.fundamental_solution(1, 1, grid)


@pytest.mark.order(3)
def test_heat_semigroup() -> None:
    grid = utils.periodic_grid(32)
    v = kslab.fields.Field.from_function(grid, lambda x: np.sin(x) + np.cos(2 * x))
    x = grid.axis_coordinates(0)

    evolved = kslab.kernels.heat_semigroup_apply(1, 0.5, v)
    assert np.allclose(
        evolved.values,
        math.exp(-0.5) * np.sin(x) + math.exp(-2.0) * np.cos(2 * x),
        atol=1e-13,
    )

    twice = kslab.kernels.heat_semigroup_apply(
        2, 0.1, kslab.kernels.heat_semigroup_apply(2, 0.2, v)
    )
    once = kslab.kernels.heat_semigroup_apply(2, 0.3, v)
    assert float(np.max(np.abs(twice.values - once.values))) < 1e-12

    with pytest.raises(ValueError):
        kslab.kernels.heat_semigroup_apply(1, -1.0, v)
