import math
import pytest
import kslab


@pytest.mark.order(8)
def test_value_parsing() -> None:
    parse = kslab.config.parse_value
    assert parse("true") is True
    assert parse("False") is False
    assert parse("3") == 3
    assert parse("2.5e-3") == 2.5e-3
    assert parse("pi") == pytest.approx(math.pi)
    assert parse("2*pi") == pytest.approx(2 * math.pi)
    assert parse("pi/2") == pytest.approx(math.pi / 2)
    assert parse("1, 2, 4") == [1, 2, 4]
    assert parse("sup_norm, l2") == ["sup_norm", "l2"]
    assert parse("'007'") == "007"
    assert parse("kse_ibvp") == "kse_ibvp"


@pytest.mark.order(8)
def test_line_errors() -> None:
    with pytest.raises(kslab.config.ConfigError) as e:
        kslab.config.parse_lines("model.family = mkse\n# comment\nmodel.family = kse_ibvp\n")
    assert e.value.line == 3
    assert "duplicate" in str(e.value)

    with pytest.raises(kslab.config.ConfigError) as e:
        kslab.config.parse_lines("model.family mkse")
    assert e.value.line == 1

    with pytest.raises(kslab.config.ConfigError) as e:
        kslab.config.parse_lines("family = mkse")
    assert "invalid key" in str(e.value)

    entries = kslab.config.parse_lines("  # only a comment\n\ngrid.points = 64  # inline\n")
    assert entries == {"grid.points": 64}


@pytest.mark.order(8)
def test_defaults_are_resolved() -> None:
    config = kslab.config.parse_config("")
    assert config.run.action == "simulate"
    assert config.model.family == "kse_ibvp"
    assert config.grid.kind == "interval"
    assert config.model.bc == "navier"
    assert config.grid.origin == [0.0]

    grid = kslab.config.build_grid(config)
    assert grid.kind == "interval" and grid.bc == "navier"
    assert grid.points == (128, )


@pytest.mark.order(8)
def test_overrides_and_dimensions() -> None:
    config = kslab.config.parse_config(
        "model.family = mkse\ngrid.dim = 2\n", overrides=["grid.points=32", "model.p = 3"]
    )
    assert config.grid.kind == "periodic"
    assert config.grid.points == [32, 32]
    assert len(config.grid.extent) == 2
    spec = kslab.config.build_spec(config)
    assert (spec.m, spec.l, spec.p) == (2, 1, 3.0)
    assert kslab.config.build_grid(config).shape == (32, 32)


@pytest.mark.order(8)
@pytest.mark.parametrize(
    "text,key",
    [
        ("model.colour = red", "model.colour"),
        ("colour.model = red", "colour.model"),
        ("model.family = nope", "model.family"),
        ("time.dt = -1", "time.dt"),
        ("sweep.colour.model = 1, 2", "sweep.colour.model"),
    ],
)
def test_invalid_keys_are_named(text: str, key: str) -> None:
    with pytest.raises(kslab.config.ConfigError) as e:
        kslab.config.parse_config(text)
    assert e.value.key == key


@pytest.mark.order(8)
def test_inconsistent_config() -> None:
    with pytest.raises(kslab.config.ConfigError, match="not a flow preset"):
        kslab.config.parse_config("run.action = flow\ngrid.dim = 2\ngrid.points = 16\n")
    with pytest.raises(kslab.config.ConfigError):
        kslab.config.parse_config("model.family = mkse\nmodel.m = 3\n")
    with pytest.raises(kslab.config.ConfigError, match="dt must be smaller"):
        kslab.config.parse_config("time.dt = 2\n")


@pytest.mark.order(8)
def test_initial_data() -> None:
    config = kslab.config.parse_config(
        "model.family = mkse\ngrid.points = 64\ninitial.preset = gaussian\n" +
        "initial.amplitude = 2\ninitial.normalize_l2 = true\n"
    )
    v0 = kslab.config.initial_field(config, kslab.config.build_grid(config))
    assert kslab.fields.lp_norm(v0, 2) == pytest.approx(2.0)

    flow = kslab.config.parse_config(
        "run.action = flow\ngrid.dim = 2\ngrid.points = 16\ninitial.preset = taylor_green\n" +
        "flow.m = 2\n"
    )
    state = kslab.config.initial_flow(flow, kslab.config.build_grid(flow))
    assert state.m == 2
    assert state.seed == 0


@pytest.mark.order(8)
def test_sweep_expansion() -> None:
    config = kslab.config.parse_config(
        "model.family = mkse\ngrid.points = 32\nrun.label = demo\nsweep.model.p = 2, 3\n"
    )
    runs = kslab.config.expand_sweep(config)
    assert [r.run.label for r in runs] == ["demo-p=2", "demo-p=3"]
    assert [r.model.p for r in runs] == [2.0, 3.0]
    assert runs[0].run.output_dir == "kslab-output/demo-p=2"
    assert all(len(r.sweep) == 0 for r in runs)
    assert kslab.config.expand_sweep(runs[0]) == [runs[0]]


@pytest.mark.order(8)
def test_render_and_digest() -> None:
    config = kslab.config.parse_config(
        "model.family = mkse\ngrid.points = 32\nmonitors.names = sup_norm, l2, lp_4\n" +
        "monitors.lambda = 8\nsweep.model.p = 2, 3\n"
    )
    rendered = kslab.config.render_config(config)
    assert "monitors.lambda = 8.0" in rendered
    again = kslab.config.parse_config(rendered)
    assert again == config
    assert kslab.config.config_digest(again) == kslab.config.config_digest(config)

    other = kslab.config.parse_config(rendered, overrides=["run.seed = 1"])
    assert kslab.config.config_digest(other) != kslab.config.config_digest(config)
