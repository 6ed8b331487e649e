"""Surrogate-driven multiverse analysis.

Explore a space of researcher decisions with a Gaussian Process surrogate:
quasirandom designs, variance-reducing acquisition, interaction Bayes
factors, Sobol sensitivity indices, and coregional output correlations.
"""

from .analysis import (
    CorrelationReport,
    InteractionReport,
    PredictionGrid,
    SensitivityReport,
    coregional_correlations,
    interaction_bayes_factor,
    prediction_grid,
    sobol_indices,
)
from .design import (
    AcquisitionSpec,
    BatchSummary,
    LoopSettings,
    LoopState,
    StoppingRule,
    bayes_factor_conclusive,
    fixed_batches,
    ivr_score,
    ivr_scores,
    resume_loop,
    run_loop,
    select_batch,
    ucb_score,
)
from .errors import EvaluatorError, MultiverseError, NumericalError, ValidationError
from .harness import (
    EvaluationResult,
    EvaluatorSpec,
    benchmark_registry,
    classifier_accuracy,
    evaluate,
    make_evaluator,
)
from .kernels import CoregionalBlock, KernelSpec, additive_cov, icm_cov, matern52, rbf
from .runconfig import RunConfig, load_config, parse_config, save_config
from .space import Configuration, Dimension, SearchSpace, sobol_design
from .surrogate import (
    FitSettings,
    ObservationSet,
    SurrogateModel,
    fit,
    log_marginal_likelihood,
    make_model,
    predict,
)

__version__ = "0.1.0"
