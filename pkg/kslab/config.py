"""Flat `section.key = value` run configuration.

    # KSE with Navier boundary conditions on (0, 4)
    model.family = kse_ibvp
    grid.extent = 4
    initial.preset = sine
    time.t_end = 1

Values are parsed as booleans (`true`/`false`), integers, floats (`pi`,
`2*pi` and `pi/2` are understood) or comma-separated lists of those;
anything else stays a string. `sweep.<section>.<key> = v1, v2, ...`
entries expand into the Cartesian product of runs."""

from __future__ import annotations
from typing import Any, Literal, NoReturn, Optional
import hashlib
import itertools
import json
import math
import re
import numpy as np
import pydantic
import kslab

Action = Literal["simulate", "flow", "kernel", "certify", "volterra", "rescale"]
Preset = Literal["zero", "sine", "random", "gaussian", "taylor_green", "random_solenoidal"]

KEY_PATTERN = re.compile(r"^[a-z_][a-z0-9_]*(\.[a-z_][a-z0-9_]*)+$")
PI_PATTERN = re.compile(r"^(?P<factor>[0-9.eE+-]+)?\s*\*?\s*pi\s*(/\s*(?P<divisor>[0-9.eE+-]+))?$")


class ConfigError(ValueError):
    """Invalid configuration, naming the offending line or key."""

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        key: Optional[str] = None,
    ) -> None:
        self.line = line
        self.key = key
        self.message = message
        if line is not None:
            super().__init__(f"line {line}: {message}")
        elif key is not None:
            super().__init__(f"{key}: {message}")
        else:
            super().__init__(message)


def _as_list(v: Any) -> Any:
    if v is None or isinstance(v, list):
        return v
    return [v]


class _Section(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(
        extra="forbid", populate_by_name=True, coerce_numbers_to_str=True
    )


class RunSection(_Section):
    action: Action = "simulate"
    output_dir: str = "kslab-output"
    seed: int = 0
    label: str = "run"


class GridSection(_Section):
    dim: int = pydantic.Field(default=1, ge=1, le=3)
    kind: Optional[Literal["periodic", "interval"]] = pydantic.Field(
        default=None, description="Inferred from the model family and action when omitted"
    )
    extent: list[float] = pydantic.Field(default_factory=lambda: [2 * math.pi])
    origin: list[float] = pydantic.Field(default_factory=list)
    points: list[int] = pydantic.Field(default_factory=lambda: [128])

    wrap_lists = pydantic.field_validator("extent", "origin", "points", mode="before")(_as_list)


class ModelSection(_Section):
    family: kslab.models.Family = "kse_ibvp"
    m: Optional[int] = None
    l: Optional[int] = None
    p: float = 2.0
    drift: Optional[list[float]] = None
    bc: Optional[Literal["dirichlet", "navier"]] = None

    wrap_lists = pydantic.field_validator("drift", mode="before")(_as_list)


class InitialSection(_Section):
    preset: Preset = "sine"
    amplitude: float = 1.0
    mode: int = pydantic.Field(default=1, ge=1, description="Wavenumber index of `sine`")
    modes: int = pydantic.Field(default=8, ge=1, description="Band limit of the random presets")
    normalize_l2: bool = pydantic.Field(
        default=False, description="Scale the field to L² norm `amplitude`"
    )


class TimeSection(_Section):
    dt: float = pydantic.Field(default=1e-3, gt=0)
    t_end: float = pydantic.Field(default=1.0, gt=0)
    snapshot_every: int = pydantic.Field(default=0, ge=0)
    blowup_threshold: float = pydantic.Field(default=1e6, gt=0)
    scheme: kslab.evolve.Scheme = "etd_midpoint"


class MonitorsSection(_Section):
    names: list[str] = pydantic.Field(default_factory=lambda: ["sup_norm", "l2"])
    capacity_lambda: float = pydantic.Field(default=7.0, gt=0, alias="lambda")
    horizon: Optional[float] = None

    wrap_lists = pydantic.field_validator("names", mode="before")(_as_list)


class FlowSection(_Section):
    m: int = pydantic.Field(default=1, ge=1)


class KernelSection(_Section):
    m: int = pydantic.Field(default=2, ge=1)
    dim: int = pydantic.Field(default=1, ge=1, le=2)


class CertifySection(_Section):
    case: Literal["search", "strict", "zero", "negative"] = "search"
    a: float = pydantic.Field(default=0.0, ge=0)
    kappa: Optional[float] = pydantic.Field(default=None, gt=0)
    j0: Optional[float] = None
    lambda_min: float = pydantic.Field(default=6.5, gt=6)
    lambda_max: float = pydantic.Field(default=30.0, gt=6)
    l_min: float = pydantic.Field(default=0.5, gt=0)
    l_max: float = pydantic.Field(default=4.0, gt=0)
    lattice: int = pydantic.Field(default=64, ge=2)
    traces: Literal["given", "computed"] = pydantic.Field(
        default="given",
        description="Use v/dv/d2v/d3v below or take the traces of the initial field at x = 0",
    )
    v: float = 0.0
    dv: float = 0.0
    d2v: float = 0.0
    d3v: float = 0.0


class VolterraSection(_Section):
    p: float = 2.0
    m: int = pydantic.Field(default=2, ge=1)
    dim: int = pydantic.Field(default=1, ge=1)
    t_end: float = pydantic.Field(default=3.0, gt=0)
    steps: int = pydantic.Field(default=3000, ge=1)
    epsilon: float = pydantic.Field(default=0.01, gt=0)


class RescaleSection(_Section):
    kind: kslab.rescale.ScalingKind = "ck_l2"
    m: int = pydantic.Field(default=2, ge=1)
    dim: int = pydantic.Field(default=1, ge=1)
    p: float = 2.0
    c_k: float = pydantic.Field(default=10.0, gt=0)


class KslabConfig(pydantic.BaseModel):
    """Fully resolved configuration; every default is filled in."""

    model_config = pydantic.ConfigDict(extra="forbid")

    run: RunSection = pydantic.Field(default_factory=RunSection)
    grid: GridSection = pydantic.Field(default_factory=GridSection)
    model: ModelSection = pydantic.Field(default_factory=ModelSection)
    initial: InitialSection = pydantic.Field(default_factory=InitialSection)
    time: TimeSection = pydantic.Field(default_factory=TimeSection)
    monitors: MonitorsSection = pydantic.Field(default_factory=MonitorsSection)
    flow: FlowSection = pydantic.Field(default_factory=FlowSection)
    kernel: KernelSection = pydantic.Field(default_factory=KernelSection)
    certify: CertifySection = pydantic.Field(default_factory=CertifySection)
    volterra: VolterraSection = pydantic.Field(default_factory=VolterraSection)
    rescale: RescaleSection = pydantic.Field(default_factory=RescaleSection)
    sweep: dict[str, list[Any]] = pydantic.Field(default_factory=dict)

    @pydantic.model_validator(mode="after")
    def _resolve_defaults(self) -> KslabConfig:
        if self.grid.kind is None:
            on_interval = (
                self.model.family == "kse_ibvp" and self.run.action in ("simulate", "certify")
            )
            self.grid.kind = "interval" if on_interval else "periodic"
        if self.model.family == "kse_ibvp" and self.model.bc is None:
            self.model.bc = "navier"
        for name in ("extent", "points"):
            values = getattr(self.grid, name)
            if len(values) == 1 and self.grid.dim > 1:
                setattr(self.grid, name, values * self.grid.dim)
        if len(self.grid.origin) == 0:
            self.grid.origin = [0.0] * self.grid.dim
        return self


def parse_value(text: str) -> Any:
    text = text.strip()
    if "," in text:
        return [parse_value(item) for item in text.split(",") if item.strip() != ""]
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1 :-1]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    match = PI_PATTERN.match(text)
    if match is not None:
        factor = float(match.group("factor")) if match.group("factor") else 1.0
        divisor = float(match.group("divisor")) if match.group("divisor") else 1.0
        return factor * math.pi / divisor
    return text


def _parse_assignment(
    text: str,
    line: Optional[int],
) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f'expected "section.key = value", got "{text}"', line=line)
    key, value = [s.strip() for s in text.split("=", 1)]
    if KEY_PATTERN.match(key) is None:
        raise ConfigError(f'invalid key "{key}"', line=line)
    if value == "":
        raise ConfigError(f'missing value for "{key}"', line=line)
    return key, parse_value(value)


def parse_lines(text: str) -> dict[str, Any]:
    """Flat `{"section.key": value}` mapping of a config text."""

    entries: dict[str, Any] = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if line == "":
            continue
        key, value = _parse_assignment(line, number)
        if key in entries:
            raise ConfigError(f'duplicate key "{key}"', line=number)
        entries[key] = value
    return entries


def _validation_messages(e: Exception) -> list[tuple[Optional[str], str]]:
    if isinstance(e, pydantic.ValidationError):
        messages: list[tuple[Optional[str], str]] = []
        for error in e.errors():
            location = ".".join(str(part) for part in error["loc"])
            message = str(error["msg"]).removeprefix("Value error, ")
            if error["type"] == "extra_forbidden":
                message = "unknown key"
            messages.append((location or None, message))
        return messages
    return [(None, str(e))]


def _raise_first(e: Exception, fallback_key: Optional[str] = None) -> NoReturn:
    location, message = _validation_messages(e)[0]
    raise ConfigError(message, key=location or fallback_key)


def resolve(entries: dict[str, Any]) -> KslabConfig:
    """Validate a flat mapping into a `KslabConfig` and check that its pieces fit together."""

    nested: dict[str, Any] = {}
    for key, value in entries.items():
        section, name = key.split(".", 1)
        if section == "sweep":
            if "." not in name:
                raise ConfigError("sweep keys look like sweep.<section>.<key>", key=key)
            nested.setdefault("sweep", {})[name] = _as_list(value)
            continue
        if section not in KslabConfig.model_fields or "." in name:
            raise ConfigError("unknown key", key=key)
        nested.setdefault(section, {})[name] = value

    try:
        config = KslabConfig.model_validate(nested)
    except pydantic.ValidationError as e:
        _raise_first(e)
    for key in config.sweep.keys():
        section, name = key.split(".", 1)
        if section == "sweep" or section not in KslabConfig.model_fields:
            raise ConfigError("unknown sweep key", key=f"sweep.{key}")

    try:
        build_spec(config)
    except ValueError as e:
        _raise_first(e, fallback_key="model")
    try:
        build_grid(config)
    except ValueError as e:
        _raise_first(e, fallback_key="grid")
    try:
        if config.run.action == "simulate":
            run_config(config)
        elif config.run.action == "flow":
            initial_flow(config, build_grid(config))
    except ValueError as e:
        _raise_first(e)
    return config


def parse_config(text: str, overrides: Optional[list[str]] = None) -> KslabConfig:
    """Parse a config text, then apply `section.key=value` overrides."""

    entries = parse_lines(text)
    for override in overrides or []:
        key, value = _parse_assignment(override, None)
        entries[key] = value
    return resolve(entries)


def expand_sweep(config: KslabConfig) -> list[KslabConfig]:
    """Cartesian product of the sweep values; a config without sweep maps onto itself."""

    if len(config.sweep) == 0:
        return [config]
    base = flatten(config)
    keys = sorted(config.sweep.keys())
    expanded: list[KslabConfig] = []
    for values in itertools.product(*[config.sweep[k] for k in keys]):
        entries = {**base, **dict(zip(keys, values))}
        suffix = "-".join(f"{k.split('.')[-1]}={v}" for k, v in zip(keys, values))
        entries["run.label"] = f"{config.run.label}-{suffix}"
        entries["run.output_dir"] = f"{config.run.output_dir}/{config.run.label}-{suffix}"
        expanded.append(resolve(entries))
    return expanded


def flatten(config: KslabConfig) -> dict[str, Any]:
    """Flat mapping of a resolved config, without its sweep entries."""

    entries: dict[str, Any] = {}
    for section, values in config.model_dump(by_alias=True, exclude={"sweep"}).items():
        for key, value in values.items():
            if value is not None:
                entries[f"{section}.{key}"] = value
    return entries


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(config: KslabConfig) -> str:
    """The resolved config in its own text format; parsing it again gives the same config."""

    lines = [f"{key} = {_format_value(value)}" for key, value in flatten(config).items()]
    lines += [
        f"sweep.{key} = {_format_value(values)}" for key, values in sorted(config.sweep.items())
    ]
    return "\n".join(lines) + "\n"


def config_digest(config: KslabConfig) -> str:
    """SHA-256 of the canonical JSON of the resolved config."""

    canonical = json.dumps(config.model_dump(mode="json", by_alias=True), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def build_grid(config: KslabConfig) -> kslab.fields.Grid:
    g = config.grid
    if g.kind == "interval":
        if g.dim != 1 or len(g.extent) != 1 or len(g.points) != 1:
            raise ValueError("interval grids are one-dimensional")
        bc = config.model.bc or "navier"
        return kslab.fields.Grid.interval(g.extent[0], g.points[0], bc, g.origin[0])
    return kslab.fields.Grid.periodic(g.extent, g.points, g.origin)


def build_spec(config: KslabConfig) -> kslab.models.ModelSpec:
    m = config.model
    arguments: dict[str, Any] = {"family": m.family, "p": m.p}
    if m.m is not None:
        arguments["m"] = m.m
    if m.l is not None:
        arguments["l"] = m.l
    if m.drift is not None:
        arguments["drift"] = tuple(m.drift)
    if m.family == "kse_ibvp":
        arguments["bc"] = m.bc
    return kslab.models.ModelSpec(**arguments)


def initial_field(config: KslabConfig, grid: kslab.fields.Grid) -> kslab.fields.Field:
    """Scalar initial data from the `initial` section."""

    initial = config.initial
    x = grid.coordinates()
    if initial.preset == "zero":
        values = np.zeros(grid.shape)
    elif initial.preset == "sine":
        # one period per extent on periodic grids, the sine basis on intervals
        factor = 2 * math.pi if grid.kind == "periodic" else math.pi
        values = np.ones(grid.shape)
        for axis in range(grid.dim):
            values = values * np.sin(
                initial.mode * factor * (x[axis] - grid.origin[axis]) / grid.extents[axis]
            )
        values = initial.amplitude * values
    elif initial.preset == "random":
        values = kslab.fields.random_field(
            grid, initial.modes, config.run.seed, amplitude=initial.amplitude
        ).values
    elif initial.preset == "gaussian":
        squared = sum((x[a] - grid.origin[a] - grid.extents[a] / 2)**2 for a in range(grid.dim))
        values = initial.amplitude * np.exp(-squared)
    else:
        raise ValueError(f'preset "{initial.preset}" describes a flow, not a scalar field')

    field = kslab.fields.Field(grid=grid, values=values)
    if initial.normalize_l2:
        norm = kslab.fields.lp_norm(field, 2)
        if norm > 0:
            field = field.with_values(initial.amplitude * field.values / norm)
    return field


def initial_flow(config: KslabConfig, grid: kslab.fields.Grid) -> kslab.flows.FlowState:
    preset = config.initial.preset
    if preset == "taylor_green":
        velocity = kslab.flows.taylor_green(grid, config.initial.amplitude)
    elif preset == "random_solenoidal":
        velocity = kslab.flows.random_solenoidal(
            grid, config.initial.modes, config.run.seed, config.initial.amplitude
        )
    elif preset == "zero":
        velocity = kslab.fields.VectorField(
            grid=grid, components=np.zeros((grid.dim, ) + grid.shape)
        )
    else:
        raise ValueError(f'preset "{preset}" is not a flow preset')
    return kslab.flows.FlowState(velocity=velocity, m=config.flow.m, seed=config.run.seed)


def run_config(
    config: KslabConfig,
    v0: Optional[kslab.fields.Field] = None,
    t_start: float = 0.0,
) -> kslab.evolve.RunConfig:
    """The scalar run of a config; `v0` and `t_start` continue from a restored state."""

    if v0 is None:
        v0 = initial_field(config, build_grid(config))
    return kslab.evolve.RunConfig(
        spec=build_spec(config),
        v0=v0,
        dt=config.time.dt,
        t_end=config.time.t_end,
        t_start=t_start,
        snapshot_every=config.time.snapshot_every,
        blowup_threshold=config.time.blowup_threshold,
        monitors=config.monitors.names,
        scheme=config.time.scheme,
        capacity_lambda=config.monitors.capacity_lambda,
        label=config.run.label,
        seed=config.run.seed,
    )
