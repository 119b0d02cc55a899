"""Frustration and near-monotonicity analysis of feed-forward networks."""

from .errors import FrustraError, NumericalError, ValidationError
from .model_ir import (
    LayerSpec,
    NetworkManifest,
    TensorShape,
    WeightStore,
    generate_synthetic,
    load_manifest,
    load_model,
    read_blob,
    save_model,
    write_blob,
)
from .graph_builder import (
    SignedSparseGraph,
    SymmetrizedView,
    assemble,
    from_edges,
    load_graph,
    save_graph,
    symmetrize,
)
from .frustration import (
    DescentState,
    GroundStateResult,
    ReplicaConfig,
    ReplicaSet,
    active_frustration,
    brute_force_frustration,
    energy,
    heuristic_ground_state,
    run_replicas,
)
from .null_models import NullModelSpec, n1_shuffle, n2_shuffle, n3_reinit
from .inference import (
    ActivationTrace,
    ActiveSubgraph,
    Executor,
    extract_active,
    forward,
    jacobian_sign_check,
    sample_kink_free_input,
)
from .gauging import gauged_balanced_variant, is_balanced_under
from .monotonicity import (
    LambdaResult,
    OmegaSampleSet,
    PartialOrderPair,
    class_stability,
    direction_consistency,
    lambda_from_samples,
    omega,
    order_from_spins,
    perturb,
    random_null_order,
    run_protocol,
)
from .report import ExperimentConfig, histogram, run_pipeline, welch_t, write_histograms

__version__ = "0.1.0"
