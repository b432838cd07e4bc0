"""Hard-label black-box attacks on point cloud classifiers.

Boundary clouds are produced by graph-spectral fusion of a source with
differently-labeled targets, then tightened against the decision boundary
by joint coordinate- and spectrum-space walking, using nothing but label
queries.
"""
from .attack import (
    AttackConfig,
    AttackInfeasibleError,
    AttackResult,
    SourceMisclassifiedError,
    binary_search_projection,
    estimate_gradient_coordinate,
    estimate_gradient_spectrum,
    generate_candidates,
    joint_walk,
    run_attack,
    select_best_candidate,
    spectrum_fuse,
)
from .defense import DefenseConfig, defended_oracle, sor_filter, srs_filter
from .geometry import (
    PointCloud,
    chamfer_distance,
    combined_distance,
    hausdorff_distance,
    knn_graph,
    l2_norm_distance,
    max_pointwise_deviation,
    normalize_unit_ball,
    variance_distance,
)
from .oracle import (
    BudgetExhaustedError,
    HardLabelOracle,
    LinearOracle,
    NearestCentroidOracle,
    QueryLedger,
    RemoteOracle,
    indicator,
    with_budget,
)
from .spectral import (
    SpectralBasis,
    Spectrum,
    band_energy_fraction,
    build_laplacian,
    cloud_basis,
    eigendecompose,
    gft,
    igft,
    split_bands,
)

__version__ = "0.1.0"
