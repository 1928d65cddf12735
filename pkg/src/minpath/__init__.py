"""Geodesic minimal-path engine for image curves.

Turns edge-alignment, elastica and region segmentation problems into
shortest-path problems for anisotropic (Riemannian / Randers) metrics,
solved by fast marching on pixel grids and orientation-lifted grids.
"""

from .errors import (
    CorruptFile,
    DegenerateCurve,
    DegenerateRegion,
    HeaderMismatch,
    MaxStepsExceeded,
    MinPathError,
    NonFiniteMetric,
    NotPositiveDefinite,
    SeedOutsideGrid,
    SegmentTraceFailed,
    SelfIntersecting,
    SolverDiverged,
    StuckDescent,
    UnreachedTarget,
    UnsupportedFormat,
)
from .grid import (
    Grid2,
    LiftedGrid3,
    Polyline,
    ScalarField,
    TensorField2,
    VectorField2,
    discrete_curvature,
    rasterize_region,
    resample_arclength,
    sample_bilinear,
    sample_trilinear_periodic,
)
from .features import (
    alignment_vector,
    edge_potential,
    gaussian_gradient,
    gradient_magnitude,
    image_grid,
    orientation_score_edge,
    orientation_score_tube,
    remap_bounded,
    rotate90,
)
from .metrics import (
    LiftedMetric3,
    Metric2,
    check_positive_definiteness,
    curve_length,
    elastica_energy,
    evaluate,
    evaluate_lifted,
    make_alignment_randers,
    make_alignment_riemannian,
    make_elastica,
    make_isotropic,
    make_region_randers,
)
from .eikonal import (
    DistanceMap,
    SolveRequest,
    residual,
    solve,
    solve_lifted,
    voronoi_labels,
)
from .tracing import (
    TraceConfig,
    backtrack,
    project_lifted,
    trace_between,
)
from .evolution import (
    EvolutionState,
    RegionGradient,
    chan_vese_means,
    divergence,
    evolve_step,
    hausdorff_distance,
    initial_state,
    region_gradient,
    remap_field,
    run_evolution,
    solve_divergence_field,
    tubular_neighborhood,
)
from .io import (
    load_field,
    load_image,
    load_path,
    save_field,
    save_overlay,
    save_path,
)

__version__ = "0.1.0"
