import math
import numpy as np
import pydantic
import pytest
import kslab

from . import utils


@pytest.mark.order(6)
def test_leray_projector() -> None:
    grid = utils.periodic_grid(32, dim=2)
    u = kslab.fields.VectorField(
        grid=grid,
        components=np.stack([
            kslab.fields.random_field(grid, 6, seed=1).values,
            kslab.fields.random_field(grid, 6, seed=2).values,
        ]),
    )
    projected = kslab.flows.leray_project(u)
    twice = kslab.flows.leray_project(projected)
    assert float(np.max(np.abs(twice.components - projected.components))) < 1e-13
    assert kslab.flows.divergence_norm(projected) < 1e-12

    phi = kslab.fields.random_field(grid, 6, seed=3)
    gradient = kslab.flows.gradient(phi)
    assert float(np.max(np.abs(kslab.flows.leray_project(gradient).components))) < 1e-13

    with pytest.raises(ValueError):
        kslab.flows.leray_project(
            kslab.fields.VectorField(grid=grid, components=np.zeros((1, 32, 32)))
        )


@pytest.mark.order(6)
def test_flow_state_validation() -> None:
    grid = utils.periodic_grid(16, dim=2)
    x, _ = grid.coordinates()
    compressible = kslab.fields.VectorField(
        grid=grid, components=np.stack([np.sin(x), np.zeros(grid.shape)])
    )
    with pytest.raises(pydantic.ValidationError, match="not solenoidal"):
        kslab.flows.FlowState(velocity=compressible)

    one_dimensional = kslab.fields.VectorField(
        grid=utils.periodic_grid(16), components=np.zeros((1, 16))
    )
    with pytest.raises(pydantic.ValidationError, match="at least two dimensions"):
        kslab.flows.FlowState(velocity=one_dimensional)

    state = kslab.flows.FlowState(velocity=kslab.flows.taylor_green(grid), m=2)
    assert state.grid == grid


@pytest.mark.order(6)
def test_taylor_green_rhs_and_pressure() -> None:
    grid = utils.periodic_grid(32, dim=2)
    velocity = kslab.flows.taylor_green(grid)
    state = kslab.flows.FlowState(velocity=velocity)
    assert np.allclose(kslab.flows.rhs_flow(state).components, -2 * velocity.components,
                       atol=1e-12)

    x, y = grid.coordinates()
    pressure = kslab.flows.recover_pressure(state)
    assert np.allclose(pressure.values, -(np.cos(2 * x) + np.cos(2 * y)) / 4, atol=1e-12)


@pytest.mark.order(6)
@pytest.mark.parametrize("m,rate", [(1, 2.0), (2, 4.0)])
def test_taylor_green_decay(m: int, rate: float) -> None:
    grid = utils.periodic_grid(16, dim=2)
    state = kslab.flows.FlowState(velocity=kslab.flows.taylor_green(grid), m=m, seed=3)
    trajectory = kslab.flows.integrate_flow(
        state,
        dt=0.01,
        t_end=0.5,
        monitors=["sup_norm", "energy", "energy_residual", "divergence", "lp_3", "lp_4"],
        callbacks=kslab.utils.silent_callbacks(),
    )

    assert trajectory.outcome == "completed"
    final = trajectory.final
    assert isinstance(final, kslab.flows.FlowState)
    assert final.time == pytest.approx(0.5)
    assert final.seed == 3
    expected = math.exp(-rate * 0.5) * kslab.flows.taylor_green(grid).components
    assert float(np.max(np.abs(final.velocity.components - expected))) < 1e-10
    assert trajectory.get("sup_norm")[0] == pytest.approx(1.0)
    assert float(np.max(np.abs(trajectory.get("energy_residual")))) < 1e-6
    assert float(np.max(trajectory.get("divergence"))) < 1e-12

    report = kslab.flows.regularity_monitor(trajectory, 4.0, 0.5, m, 2)
    assert report.p0 == pytest.approx(2 / (2 * m - 1))
    assert report.above_critical
    assert report.sup_lp == pytest.approx(trajectory.get("lp_4")[0])
    assert len(report.serrin_values) == len(trajectory.times) - 1
    with pytest.raises(ValueError):
        kslab.flows.regularity_monitor(trajectory, 4.0, 2.0, m, 2)


@pytest.mark.order(6)
def test_random_solenoidal() -> None:
    grid = utils.periodic_grid(32, dim=2)
    u = kslab.flows.random_solenoidal(grid, 4, seed=11, amplitude=0.5)
    assert kslab.flows.divergence_norm(u) < 1e-12
    assert kslab.flows.velocity_sup_norm(u) == pytest.approx(0.5)

    with pytest.raises(pydantic.ValidationError, match="one velocity component per axis"):
        kslab.flows.FlowState(velocity=u.with_components(u.components[: 1]))
    with pytest.raises(ValueError, match="smaller than the run length"):
        kslab.flows.integrate_flow(kslab.flows.FlowState(velocity=u), dt=0.1, t_end=0.05)
    with pytest.raises(ValueError, match="unknown flow monitors"):
        kslab.flows.integrate_flow(
            kslab.flows.FlowState(velocity=u), dt=0.01, t_end=0.05, monitors=["J_lambda"]
        )
