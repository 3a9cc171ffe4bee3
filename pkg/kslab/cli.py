from __future__ import annotations
from typing import Optional
import argparse
import os
import sys
import numpy as np
import pydantic
import tum_esm_utils
import kslab

EXIT_CODES: dict[str, int] = {"completed": 0, "blowup": 10, "numerical_failure": 20}
CONFIG_ERROR_EXIT_CODE = 2
FAILURE_EXIT_CODE = 1

SUBCOMMAND_ACTIONS: dict[str, kslab.config.Action] = {
    "run": "simulate",
    "flow": "flow",
    "kernel": "kernel",
    "certify": "certify",
    "volterra": "volterra",
    "rescale": "rescale",
}


class KernelReport(pydantic.BaseModel):
    m: int
    dim: int
    mass: float
    residual: float
    alpha_expected: float
    d_asymptotic: float
    decay_fit: Optional[kslab.kernels.DecayFit] = None


class CertifyReport(pydantic.BaseModel):
    certificate: Optional[kslab.blowup.BlowupCertificate]
    traces: Optional[kslab.fields.BoundaryTraces] = None
    oracle_divergence: Optional[tuple[float, float]] = pydantic.Field(
        default=None, description="Divergence bracket of the Riccati oracle beyond the bound"
    )


class RescaleReport(pydantic.BaseModel):
    law: kslab.rescale.ScalingLaw
    norm_before: Optional[float] = None
    norm_after: Optional[float] = None


def _overall_outcome(outcomes: list[str]) -> str:
    for outcome in ("numerical_failure", "blowup"):
        if outcome in outcomes:
            return outcome
    return "completed"


def _designated_norm(field: kslab.fields.Field, law: kslab.rescale.ScalingLaw) -> float:
    if law.kind == "ck_hminus1":
        return kslab.fields.hminus1_norm(field)
    return kslab.fields.lp_norm(field, law.p if law.kind == "ck_lp" else 2.0)


def execute_simulate(
    config: kslab.config.KslabConfig,
    writer: kslab.io.RunWriter,
    callbacks: kslab.utils.SimulationCallbacks,
    restore: Optional[str] = None,
) -> str:
    if restore is not None:
        checkpoint = kslab.io.load_checkpoint(restore, kslab.config.build_grid(config))
        if not isinstance(checkpoint.state, kslab.fields.Field):
            raise kslab.io.CheckpointError(f'"{restore}" holds a flow, not a scalar field')
        run = kslab.config.run_config(config, checkpoint.state, checkpoint.header.time)
    else:
        run = kslab.config.run_config(config)
    trajectory = kslab.evolve.integrate(run, callbacks)
    writer.trajectory(trajectory)
    assert isinstance(trajectory.final, kslab.fields.Field)
    kslab.io.save_checkpoint(
        writer.path("final.kslc"), trajectory.final, trajectory.times[-1], config.run.seed
    )
    return trajectory.outcome


def execute_flow(
    config: kslab.config.KslabConfig,
    writer: kslab.io.RunWriter,
    callbacks: kslab.utils.SimulationCallbacks,
    restore: Optional[str] = None,
) -> str:
    grid = kslab.config.build_grid(config)
    if restore is not None:
        checkpoint = kslab.io.load_checkpoint(restore, grid)
        if not isinstance(checkpoint.state, kslab.flows.FlowState):
            raise kslab.io.CheckpointError(f'"{restore}" holds a scalar field, not a flow')
        state = checkpoint.state
    else:
        state = kslab.config.initial_flow(config, grid)
    trajectory = kslab.flows.integrate_flow(
        state,
        config.time.dt,
        config.time.t_end,
        monitors=config.monitors.names,
        scheme=config.time.scheme,
        snapshot_every=config.time.snapshot_every,
        blowup_threshold=config.time.blowup_threshold,
        label=config.run.label,
        callbacks=callbacks,
    )
    writer.trajectory(trajectory)
    assert isinstance(trajectory.final, kslab.flows.FlowState)
    kslab.io.save_checkpoint(writer.path("final.kslc"), trajectory.final)

    horizon = config.monitors.horizon
    if horizon is not None:
        reports = [
            kslab.flows.regularity_monitor(
                trajectory, float(name[3 :]), horizon, state.m, grid.dim
            ) for name in kslab.io.monitor_columns(config.monitors.names)
            if name.startswith("lp_")
        ]
        writer.report({"regularity": [r.model_dump() for r in reports]})
    return trajectory.outcome


def execute_kernel(
    config: kslab.config.KslabConfig,
    writer: kslab.io.RunWriter,
    callbacks: kslab.utils.SimulationCallbacks,
) -> str:
    m, dim = config.kernel.m, config.kernel.dim
    callbacks.log_info(f"computing the m = {m} kernel in {dim} dimension(s)")
    kernel = kslab.kernels.fundamental_solution(m, dim)
    if dim == 1:
        kernel = kslab.kernels.fit_decay(kernel)
        y = kernel.profile.grid.axis_coordinates(0)
        np.savetxt(
            writer.path("kernel.csv"),
            np.column_stack([y, kernel.profile.values]),
            fmt="%.17g",
            delimiter=",",
            header="y,F",
            comments="",
        )
    else:
        kslab.io.write_snapshot(writer.path("kernel.kslb"), kernel.profile)
    writer.report(
        KernelReport(
            m=m,
            dim=dim,
            mass=kernel.mass,
            residual=kslab.kernels.kernel_residual(kernel),
            alpha_expected=kslab.kernels.decay_exponent(m),
            d_asymptotic=kslab.kernels.asymptotic_decay_rate(m),
            decay_fit=kernel.decay_fit,
        )
    )
    if kernel.decay_fit is not None:
        callbacks.log_info(f"fitted alpha = {kernel.decay_fit.alpha:.4f}")
    return "completed"


def execute_certify(
    config: kslab.config.KslabConfig,
    writer: kslab.io.RunWriter,
    callbacks: kslab.utils.SimulationCallbacks,
) -> str:
    c = config.certify
    traces: Optional[kslab.fields.BoundaryTraces] = None
    certificate: Optional[kslab.blowup.BlowupCertificate]
    if c.case == "search":
        profile = kslab.config.initial_field(config, kslab.config.build_grid(config))
        if c.traces == "given":
            traces = kslab.fields.BoundaryTraces(v=c.v, dv=c.dv, d2v=c.d2v, d3v=c.d3v)
        else:
            traces = kslab.fields.boundary_traces(profile, "left")
        certificate = kslab.blowup.certify_blowup(
            profile,
            traces,
            lambda_range=(c.lambda_min, c.lambda_max),
            L_range=(c.l_min, c.l_max),
            lattice=c.lattice,
        )
    else:
        if c.kappa is None or c.j0 is None:
            raise kslab.config.ConfigError(
                f"the {c.case} case needs certify.kappa and certify.j0", key="certify"
            )
        try:
            certificate = kslab.blowup.closed_form_certificate(c.case, c.j0, c.kappa, c.a)
        except ValueError as e:
            raise kslab.config.ConfigError(str(e), key="certify") from e

    oracle_divergence = None
    if certificate is None:
        callbacks.log_info("no certificate found")
    else:
        callbacks.log_info(
            f"{certificate.case} certificate, T∞ ≤ {certificate.t_infinity_bound:.6g}"
        )
        oracle = kslab.blowup.riccati_oracle(
            certificate.case,
            certificate.J0,
            certificate.kappa,
            certificate.a,
            np.array([0.0, 2 * certificate.t_infinity_bound]),
        )
        oracle_divergence = oracle.divergence_bracket
    writer.report(
        CertifyReport(
            certificate=certificate, traces=traces, oracle_divergence=oracle_divergence
        )
    )
    return "completed"


def execute_volterra(
    config: kslab.config.KslabConfig,
    writer: kslab.io.RunWriter,
    callbacks: kslab.utils.SimulationCallbacks,
) -> str:
    v = config.volterra
    beta = kslab.volterra.gronwall_beta(v.p, v.m, v.dim)
    if beta <= 0:
        callbacks.log_info(f"beta = {beta:.6g}: p = {v.p} lies in the unbounded regime")
        writer.report({"p": v.p, "m": v.m, "dim": v.dim, "beta": beta, "unbounded_regime": True})
        return "completed"
    report = kslab.volterra.volterra_bound(v.p, v.m, v.dim, v.t_end, v.steps, v.epsilon)
    np.savetxt(
        writer.path("volterra.csv"),
        np.column_stack([report.times, report.V, report.V_hat]),
        fmt="%.17g",
        delimiter=",",
        header="t,V,V_hat",
        comments="",
    )
    writer.report(report.model_dump(exclude={"times", "V", "V_hat"}))
    callbacks.log_info(f"beta = {report.beta:.6g}, V ≤ V̂: {report.bounded}")
    return "completed"


def execute_rescale(
    config: kslab.config.KslabConfig,
    writer: kslab.io.RunWriter,
    callbacks: kslab.utils.SimulationCallbacks,
) -> str:
    r = config.rescale
    law = kslab.rescale.scaling_coefficients(
        r.kind, r.m, r.dim, r.p, r.c_k if r.kind.startswith("ck_") else None
    )
    report = RescaleReport(law=law)
    if r.kind.startswith("ck_"):
        v = kslab.config.initial_field(config, kslab.config.build_grid(config))
        w = kslab.rescale.ck_rescale(v, r.c_k, r.kind, p=r.p)
        report.norm_before = _designated_norm(v, law)
        report.norm_after = _designated_norm(w, law)
        kslab.io.write_snapshot(writer.path("rescaled.kslb"), w)
        callbacks.log_info(f"{law.kind}: nu_k exponent {law.nu_exponent} ({law.classification})")
    writer.report(report)
    return "completed"


def execute(
    config: kslab.config.KslabConfig,
    callbacks: Optional[kslab.utils.SimulationCallbacks] = None,
    restore: Optional[str] = None,
    n_tasks: int = 1,
) -> str:
    """Run the action of a resolved config in its locked output directory."""

    callbacks = callbacks or kslab.utils.SimulationCallbacks()
    os.makedirs(config.run.output_dir, exist_ok=True)
    with kslab.utils.OutputDirectoryLock(config.run.output_dir):
        writer = kslab.io.RunWriter(config.run.output_dir)
        writer.text("config.txt", kslab.config.render_config(config))
        action = config.run.action
        if action == "simulate":
            outcome = execute_simulate(config, writer, callbacks, restore)
        elif action == "flow":
            outcome = execute_flow(config, writer, callbacks, restore)
        elif action == "kernel":
            outcome = execute_kernel(config, writer, callbacks)
        elif action == "certify":
            outcome = execute_certify(config, writer, callbacks)
        elif action == "volterra":
            outcome = execute_volterra(config, writer, callbacks)
        else:
            outcome = execute_rescale(config, writer, callbacks)
        writer.manifest(config, outcome, n_tasks)
    return outcome


def execute_sweep(
    config: kslab.config.KslabConfig,
    callbacks: Optional[kslab.utils.SimulationCallbacks] = None,
) -> str:
    """Run every expanded config of a sweep on the worker pool."""

    configs = kslab.config.expand_sweep(config)
    callbacks = kslab.utils.serialized(callbacks or kslab.utils.SimulationCallbacks())
    callbacks.log_info(f"sweeping {len(configs)} runs")

    def run_one(child: kslab.config.KslabConfig) -> str:
        return execute(child, callbacks, n_tasks=len(configs))

    outcomes = kslab.utils.map_concurrently(run_one, configs)
    os.makedirs(config.run.output_dir, exist_ok=True)
    writer = kslab.io.RunWriter(config.run.output_dir)
    writer.report({
        "runs": [{
            "label": child.run.label,
            "output_dir": os.path.relpath(child.run.output_dir, config.run.output_dir),
            "outcome": outcome,
        } for child, outcome in zip(configs, outcomes)]
    })
    writer.manifest(config, _overall_outcome(outcomes), len(configs))
    return _overall_outcome(outcomes)


def execute_checks(
    output_dir: str,
    names: Optional[list[str]],
    callbacks: Optional[kslab.utils.SimulationCallbacks] = None,
) -> kslab.checks.CheckReport:
    os.makedirs(output_dir, exist_ok=True)
    with kslab.utils.OutputDirectoryLock(output_dir):
        report = kslab.checks.run_checks(names, callbacks)
        writer = kslab.io.RunWriter(output_dir)
        writer.report(report)
        config = kslab.config.KslabConfig()
        config.run.output_dir = output_dir
        writer.manifest(config, "completed" if report.passed else "failed")
    return report


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kslab",
        description="Simulations and a-priori bound checks for Kuramoto–Sivashinsky-type " +
        "equations and Navier–Stokes/Burnett flows",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", help="Path to a `section.key = value` config file")
        sub.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="Override a config entry (repeatable)",
        )
        sub.add_argument("--output-dir", help="Shorthand for --set run.output_dir=...")
        return sub

    for name in ("run", "flow"):
        sub = add(name, f"{'scalar PDE' if name == 'run' else 'incompressible flow'} simulation")
        sub.add_argument("--restore", help="Continue from a KSLC1 checkpoint")

    kernel = add("kernel", "polyharmonic heat kernel and its decay fit")
    kernel.add_argument("--m", type=int)
    kernel.add_argument("--dim", type=int)

    certify = add("certify", "blow-up certificates of the capacity functional")
    certify.add_argument("--case", choices=["search", "strict", "zero", "negative"])
    certify.add_argument("--a", type=float)
    certify.add_argument("--kappa", type=float)
    certify.add_argument("--j0", type=float)

    volterra = add("volterra", "weighted Gronwall bound")
    volterra.add_argument("--p", type=float)
    volterra.add_argument("--m", type=int)
    volterra.add_argument("--dim", type=int)
    volterra.add_argument("--t-end", type=float)

    rescale = add("rescale", "scaling laws and C_k rescaling of the initial field")
    rescale.add_argument(
        "--kind", choices=["ck_l2", "ck_lp", "ck_hminus1", "t_minus_t", "leray"]
    )
    rescale.add_argument("--m", type=int)
    rescale.add_argument("--dim", type=int)
    rescale.add_argument("--p", type=float)
    rescale.add_argument("--c-k", type=float)

    add("sweep", "Cartesian parameter sweep over the sweep.* entries of a config")

    check = subparsers.add_parser("check", help="desk-scale acceptance suite")
    check.add_argument("--only", action="append", help="Run only this check (repeatable)")
    check.add_argument("--output-dir", default="kslab-check")
    return parser


SHORTHANDS: dict[str, dict[str, str]] = {
    "kernel": {"m": "kernel.m", "dim": "kernel.dim"},
    "certify": {
        "case": "certify.case",
        "a": "certify.a",
        "kappa": "certify.kappa",
        "j0": "certify.j0",
    },
    "volterra": {
        "p": "volterra.p",
        "m": "volterra.m",
        "dim": "volterra.dim",
        "t_end": "volterra.t_end",
    },
    "rescale": {
        "kind": "rescale.kind",
        "m": "rescale.m",
        "dim": "rescale.dim",
        "p": "rescale.p",
        "c_k": "rescale.c_k",
    },
}


def _overrides(args: argparse.Namespace) -> list[str]:
    overrides: list[str] = []
    if args.command in SUBCOMMAND_ACTIONS:
        overrides.append(f"run.action={SUBCOMMAND_ACTIONS[args.command]}")
    overrides += args.overrides
    if args.output_dir is not None:
        overrides.append(f"run.output_dir={args.output_dir}")
    for attribute, key in SHORTHANDS.get(args.command, {}).items():
        value = getattr(args, attribute)
        if value is not None:
            overrides.append(f"{key}={value}")
    return overrides


def main(argv: Optional[list[str]] = None) -> int:
    args = _parser().parse_args(argv)
    callbacks = kslab.utils.SimulationCallbacks()

    if args.command == "check":
        try:
            report = execute_checks(args.output_dir, args.only, callbacks)
        except (ValueError, RuntimeError) as e:
            callbacks.log_error(str(e))
            return FAILURE_EXIT_CODE
        return 0 if report.passed else FAILURE_EXIT_CODE

    try:
        text = tum_esm_utils.files.load_file(args.config) if args.config is not None else ""
        config = kslab.config.parse_config(text, _overrides(args))
        if args.command == "sweep":
            outcome = execute_sweep(config, callbacks)
        else:
            outcome = execute(config, callbacks, getattr(args, "restore", None))
    except kslab.config.ConfigError as e:
        callbacks.log_error(f"config error: {e}")
        return CONFIG_ERROR_EXIT_CODE
    except kslab.io.CheckpointError as e:
        callbacks.log_error(f"checkpoint error: {e}")
        return FAILURE_EXIT_CODE
    except OSError as e:
        callbacks.log_error(f"I/O error at {e.filename}: {e.strerror}")
        return FAILURE_EXIT_CODE
    except (ValueError, RuntimeError) as e:
        callbacks.log_error(str(e))
        return FAILURE_EXIT_CODE
    callbacks.log_info(f"outcome: {outcome}")
    return EXIT_CODES.get(outcome, FAILURE_EXIT_CODE)


if __name__ == "__main__":
    sys.exit(main())
