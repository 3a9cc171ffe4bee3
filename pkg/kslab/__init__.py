"""Numerical lab for Kuramoto–Sivashinsky-type evolution equations, Navier-Stokes/Burnett
flows and finite-time blow-up bounds."""

from . import utils
from .utils import SimulationCallbacks, OutputDirectoryLock, map_concurrently

from . import fields
from .fields import Grid, Field, VectorField, norms, derivative, laplacian

from . import models
from .models import ModelSpec, critical_exponents, rhs, apply_bcs

from . import kernels
from .kernels import Kernel, fundamental_solution, heat_semigroup_apply

from . import blowup
from .blowup import BlowupCertificate, certify_blowup, closed_form_certificate, riccati_oracle

from . import volterra
from .volterra import volterra_bound

from . import evolve
from .evolve import RunConfig, Trajectory, NumericalFailureError, integrate, step

from . import flows
from .flows import FlowState, leray_project, integrate_flow

from . import rescale
from .rescale import ck_rescale, to_selfsimilar, from_selfsimilar, scaling_coefficients

from . import config
from .config import KslabConfig, ConfigError, parse_config

from . import io
from .io import save_checkpoint, load_checkpoint, RunWriter

from . import checks
from .checks import run_checks

from . import cli
