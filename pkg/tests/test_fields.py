import math
import numpy as np
import pydantic
import pytest
import kslab

from . import utils


@pytest.mark.order(1)
def test_grid_validation() -> None:
    with pytest.raises(pydantic.ValidationError):
        kslab.fields.Grid.periodic([1.0], [12])
    with pytest.raises(pydantic.ValidationError):
        kslab.fields.Grid.periodic([0.0], [16])
    with pytest.raises(pydantic.ValidationError):
        kslab.fields.Grid(dim=1, kind="interval", extents=(1.0, ), points=(16, ))

    grid = kslab.fields.Grid.interval(1.0, 9, "navier")
    assert np.allclose(grid.axis_coordinates(0), np.arange(1, 10) / 10)
    assert grid.origin == (0.0, )
    assert grid.spacing == (0.1, )

    periodic = utils.periodic_grid(16, dim=2)
    assert periodic.shape == (16, 16)
    assert periodic.origin == (0.0, 0.0)


@pytest.mark.order(1)
def test_field_rejects_bad_values() -> None:
    grid = utils.periodic_grid(16)
    with pytest.raises(pydantic.ValidationError):
        kslab.fields.Field(grid=grid, values=np.full(16, np.nan))
    with pytest.raises(pydantic.ValidationError):
        kslab.fields.Field(grid=grid, values=np.zeros(8))

    field = kslab.fields.Field.zeros(grid)
    with pytest.raises(ValueError):
        field.values[0] = 1.0


@pytest.mark.order(1)
def test_periodic_derivatives() -> None:
    grid = utils.periodic_grid(32)
    v = kslab.fields.Field.from_function(grid, lambda x: np.sin(x) + 0.5 * np.sin(3 * x))
    x = grid.axis_coordinates(0)

    assert np.allclose(
        kslab.fields.derivative(v, 0, 1).values, np.cos(x) + 1.5 * np.cos(3 * x), atol=1e-11
    )
    assert np.allclose(kslab.fields.laplacian(v).values, -np.sin(x) - 4.5 * np.sin(3 * x),
                       atol=1e-10)
    assert np.allclose(
        kslab.fields.neg_laplacian_power(v, 2).values, np.sin(x) + 40.5 * np.sin(3 * x),
        atol=1e-9
    )

    with pytest.raises(ValueError):
        kslab.fields.derivative(v, 1, 1)
    with pytest.raises(ValueError):
        kslab.fields.derivative(v, 0, 5)


@pytest.mark.order(1)
def test_sine_basis_derivatives() -> None:
    grid = kslab.fields.Grid.interval(1.0, 31, "navier")
    v = kslab.fields.Field.from_function(grid, lambda x: np.sin(np.pi * x))
    x = grid.axis_coordinates(0)

    assert np.allclose(kslab.fields.derivative(v, 0, 1).values, np.pi * np.cos(np.pi * x))
    assert np.allclose(
        kslab.fields.derivative(v, 0, 2).values, -np.pi**2 * np.sin(np.pi * x)
    )

    left = kslab.fields.boundary_traces(v, "left")
    right = kslab.fields.boundary_traces(v, "right")
    assert left.v == 0 and left.d2v == 0
    assert left.dv == pytest.approx(np.pi)
    assert right.dv == pytest.approx(-np.pi)
    assert left.d3v == pytest.approx(-np.pi**3)


@pytest.mark.order(1)
def test_clamped_derivatives() -> None:
    grid = kslab.fields.Grid.interval(1.0, 31, "dirichlet")
    h = grid.spacing[0]
    x = grid.axis_coordinates(0)
    v = kslab.fields.Field.from_function(grid, lambda x: x**2 * (1 - x)**2)
    exact = {
        1: 2 * x * (1 - x) * (1 - 2 * x),
        2: 2 - 12 * x + 12 * x**2,
        3: 24 * x - 12,
        4: np.full_like(x, 24.0),
    }

    # centered differences carry an O(h²) error; D³ and D⁴ are exact on quartics
    for order in (1, 2):
        error = kslab.fields.derivative(v, 0, order).values - exact[order]
        assert float(np.max(np.abs(error))) <= 3 * h**2
    for order in (3, 4):
        values = kslab.fields.derivative(v, 0, order).values
        assert np.allclose(values[1 :-1], exact[order][1 :-1], atol=1e-6)

    # the rows next to the ends use the mirrored ghost node
    third = kslab.fields.derivative(v, 0, 3).values
    assert third[0] < 0 < third[-1]


@pytest.mark.order(1)
def test_norms() -> None:
    grid = utils.periodic_grid(32)
    v = kslab.fields.Field.from_function(grid, np.sin)
    report = kslab.fields.norms(v, [4.0])

    assert report.l2 == pytest.approx(math.sqrt(math.pi))
    assert report.linf == pytest.approx(1.0)
    assert report.lp[4.0] == pytest.approx((3 * math.pi / 4)**0.25)
    assert abs(report.mean) < 1e-12
    assert report.hminus1 == pytest.approx(math.sqrt(math.pi))

    shifted = v.with_values(v.values + 1.0)
    assert kslab.fields.norms(shifted).hminus1 is None
    with pytest.raises(ValueError):
        kslab.fields.neg_laplacian_power(shifted, -1)
    with pytest.raises(ValueError):
        kslab.fields.norms(v, [0.5])


@pytest.mark.order(1)
def test_interpolation_check() -> None:
    grid = utils.periodic_grid(64)
    v = kslab.fields.Field.from_function(grid, lambda x: np.sin(x) + 0.5 * np.sin(3 * x))
    report = kslab.fields.interpolation_check(v)
    assert report.satisfied
    assert report.get("gradient_interpolation").ratio <= 1 + 1e-10
    assert report.get("sup_embedding").ratio < 1
    with pytest.raises(KeyError):
        report.get("unknown")


@pytest.mark.order(1)
def test_random_field_is_seeded() -> None:
    grid = utils.periodic_grid(32, dim=2)
    a = kslab.fields.random_field(grid, max_mode=4, seed=7)
    b = kslab.fields.random_field(grid, max_mode=4, seed=7)
    c = kslab.fields.random_field(grid, max_mode=4, seed=8)

    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert abs(kslab.fields.mean_value(a)) < 1e-12
    assert float(np.max(np.abs(a.values))) == pytest.approx(1.0)


@pytest.mark.order(1)
def test_band_limited_evaluation() -> None:
    grid = utils.periodic_grid(16)
    v = kslab.fields.Field.from_function(grid, lambda x: np.sin(x) + np.cos(2 * x))
    points = np.array([0.3, 1.7, 4.1])
    assert np.allclose(
        kslab.fields.evaluate_band_limited(v, [points]),
        np.sin(points) + np.cos(2 * points),
    )
