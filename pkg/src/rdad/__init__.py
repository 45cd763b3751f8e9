"""Density-aware distance filtrations, cubical persistence and bootstrap significance."""
__version__ = "0.1.0"

from .cubical import (
    CubicalComplex,
    CubicalPersistence,
    PersistenceDiagram,
    PersistencePoint,
    betti_at,
    build_complex,
    field_persistence,
    persistence,
)
from .diagrams import (
    SignificanceReport,
    bottleneck,
    brute_force_bottleneck,
    significance_mask,
    significant_points,
)
from .exceptions import CloudMismatch, DegenerateDistance, DuplicateOverload, GridError, RDADError
from .filtration import (
    DensityAwareDistance,
    FiltrationSpec,
    GridSpec,
    ScalarField,
    build_field,
    default_k_den,
    default_k_dtm,
    eval_dad,
    eval_distance,
    eval_dtm,
    eval_rdad,
    grid_from_rectangle,
    make_grid,
)
from .inference import (
    BootstrapConfig,
    BootstrapResult,
    BootstrapSignificance,
    Pipeline,
    oracle_bootstrap,
    quantile_radius,
    subsample_bootstrap,
)
from .neighbors import (
    DensityProfile,
    KNNDensity,
    NeighborIndex,
    PointCloud,
    build_index,
    density_profile,
    kth_distance,
    knn_density,
)
