"""gnnreg: semi-supervised node regression on graphs.

Sparse graph construction and propagation operators, a linear-convolution
plus truncated-ReLU-readout regression model with classical baselines,
masked least-squares training, synthetic data generators, computable theory
quantities, and a reproducible experiment runner.
"""

from .baselines import label_propagation, laplacian_energy, tikhonov_fit
from .datagen import (
    Dataset,
    HolderTarget,
    TopologySpec,
    brownian_target,
    export_bundle,
    gen_topology,
    load_bundle,
    make_synthetic,
    random_dnn_target,
    sample_features,
)
from .errors import DegeneracyError, FormatError, GnnRegError, NumericError
from .estimators import (
    GnnNodeRegressor,
    LabelPropagationRegressor,
    MlpNodeRegressor,
    MultiscaleNodeRegressor,
    TikhonovRegressor,
)
from .experiments import (
    ExperimentConfig,
    SlopeFit,
    fit_slope,
    run_cell,
    run_convergence,
    run_real,
    run_study,
    run_topology,
)
from .emit import emit_outputs
from .graph import SparseGraph, build_graph, knn_graph, read_edge_list, \
    write_edge_list
from .ingest import ingest_california, ingest_chameleon
from .nets import (
    GcnParams,
    GnnParams,
    MlpParams,
    MultiscaleParams,
    effective_sparsity,
    embed_polynomial_as_gcn,
    gcn_forward,
    gnn_predict,
    init_gnn_params,
    init_multiscale_params,
    load_params,
    mlp_forward,
    multiscale_forward,
    project_params,
    save_params,
)
from .operators import (
    FilterCoefficients,
    PropagationOperator,
    apply_operator,
    frobenius_distance,
    identity_operator,
    polynomial_propagate,
    propagation_operator,
    row_sum_norm,
)
from .seeding import derive_seed
from .theory import (
    DependencyPartition,
    SmoothnessSpec,
    dependency_partition,
    effective_smoothness,
    entropy_bound,
    kappa_n,
    mismatch_bound,
    predicted_rate,
    rate_exponent,
    receptive_field,
    receptive_field_bound,
    verify_mismatch,
)
from .training import (
    FitResult,
    MaskVector,
    TrainConfig,
    evaluate_risk,
    gradients,
    masked_mse,
    multiscale_gradients,
    sample_mask,
    train_lse,
)

__version__ = "0.1.0"
