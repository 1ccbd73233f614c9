"""Sequential detection and localization of structural damage from sensor
networks, with exact message passing over a tree of sensors."""

__version__ = "0.1.0"

from .dsf import DsfStream, RawSignal, extract_dsf_stream, fit_ar, read_dsf_csv, select_order_aic, write_dsf_csv
from .errors import (
    DataError,
    DegenerateChunkError,
    IllConditionedFitError,
    ModelError,
    ModelIncompleteError,
    SeqDamageError,
    TreeValidationError,
)
from .evaluation import ScenarioSpec, compare_mp_local, generate_streams, monte_carlo_curve
from .graph import DamageModel, build_model, validate_tree
from .inference import RuleSpec, delay_bound_rule, full_sweep
from .models import GaussianModel, GeometricPrior, fit_gaussian, kl_divergence, log_density
from .shiryaev import SingleVarProblem, delay_bound_single, update_posterior
from .simnet import measure_traffic, run_local_baseline, run_session

__all__ = [
    "DataError",
    "DamageModel",
    "DegenerateChunkError",
    "DsfStream",
    "GaussianModel",
    "GeometricPrior",
    "IllConditionedFitError",
    "ModelError",
    "ModelIncompleteError",
    "RawSignal",
    "RuleSpec",
    "ScenarioSpec",
    "SeqDamageError",
    "SingleVarProblem",
    "TreeValidationError",
    "build_model",
    "compare_mp_local",
    "delay_bound_rule",
    "delay_bound_single",
    "extract_dsf_stream",
    "fit_ar",
    "fit_gaussian",
    "full_sweep",
    "generate_streams",
    "kl_divergence",
    "log_density",
    "measure_traffic",
    "monte_carlo_curve",
    "read_dsf_csv",
    "run_local_baseline",
    "run_session",
    "select_order_aic",
    "update_posterior",
    "validate_tree",
    "write_dsf_csv",
]
