"""Group-penalized Gaussian graphical modeling for trainable-node selection.

The library estimates a precision matrix under a concave group penalty on
the couplings between candidate nodes and a designated important set, then
keeps the nodes whose couplings survive.  Submodules:

* surrogates: the catalogue of concave penalty functions g
* scalar_prox: the scalar thresholding operator behind the group prox
* ggm: the penalized model and its block-coordinate solver
* nodes: SVD node definitions, sensitivity scores, sample statistics
* pipeline: planted-problem generation and end-to-end orchestration
* cli: the ggm-select command-line front end
"""

__version__ = "0.1.0"

from .errors import IterationLimitError, NumericalError
from .ggm import (
    AuxMatrix,
    GgmMode,
    GgmProblem,
    PrecisionMatrix,
    PrecisionMethod,
    SolverOptions,
    SolverReport,
    load_covariance,
    penalized_objective,
    solve_ggm,
    update_auxiliary,
    update_precision,
    update_precision_eig,
)
from .nodes import (
    ImportanceState,
    LayerDecomposition,
    LayerShape,
    NodeLayout,
    SampleSet,
    TensorKey,
    decompose_layer,
    node_value_bias,
    node_value_pair,
    read_score_dump,
    replay_scores,
    sample_statistics,
    select_important,
    sensitivity,
    update_score,
)
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    PlantedProblem,
    SelectionResult,
    make_planted,
    recovery_f1,
    run_pipeline,
    select_trainable,
)
from .scalar_prox import (
    Branch,
    ProxProblem,
    ProxSolution,
    apply_threshold,
    breakpoint_a0,
    oracle_threshold,
    prox_objective,
    solve_threshold,
)
from .surrogates import (
    SurrogateKind,
    SurrogateSpec,
    eval_g,
    grad_g,
    second_deriv_g,
)

__all__ = [
    "__version__",
    "NumericalError",
    "IterationLimitError",
    "SurrogateKind",
    "SurrogateSpec",
    "eval_g",
    "grad_g",
    "second_deriv_g",
    "Branch",
    "ProxProblem",
    "ProxSolution",
    "apply_threshold",
    "breakpoint_a0",
    "oracle_threshold",
    "prox_objective",
    "solve_threshold",
    "GgmMode",
    "GgmProblem",
    "PrecisionMatrix",
    "AuxMatrix",
    "PrecisionMethod",
    "SolverOptions",
    "SolverReport",
    "penalized_objective",
    "update_precision",
    "update_precision_eig",
    "update_auxiliary",
    "solve_ggm",
    "load_covariance",
    "LayerShape",
    "NodeLayout",
    "LayerDecomposition",
    "ImportanceState",
    "SampleSet",
    "TensorKey",
    "decompose_layer",
    "sensitivity",
    "update_score",
    "node_value_pair",
    "node_value_bias",
    "sample_statistics",
    "select_important",
    "replay_scores",
    "read_score_dump",
    "SelectionResult",
    "PlantedProblem",
    "PipelineConfig",
    "PipelineResult",
    "select_trainable",
    "make_planted",
    "run_pipeline",
    "recovery_f1",
]
