"""Anisotropic p-torsional rigidity, its L_q measures, and the discrete
L_q Minkowski problem on planar convex polygons."""

import os as _os

# cap BLAS/OpenMP threads before numpy loads its backend
_threads = _os.environ.get("TM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .anisotropy import (  # noqa: E402
    AnisotropicNorm,
    DualData,
    EllipseNorm,
    EuclideanNorm,
    SmoothedLsNorm,
    dual_and_wulff,
    norm_from_config,
)
from .errors import (  # noqa: E402
    DegenerateFacet,
    EmptyInterior,
    ExcludedExponent,
    IllConditioned,
    MeshFailure,
    NonConcentration,
    NonConvergence,
    OriginNotInterior,
    PreconditionError,
    TorsionError,
    Unbounded,
    VertexRay,
    ZeroArgument,
)
from .geometry import (  # noqa: E402
    ConvexPolygon,
    SupportVector,
    gauss_map_facets,
    lq_combination,
    radial_function,
    radial_map_jacobian,
    support_function,
    wulff_shape,
)
from .measures import (  # noqa: E402
    FacetMeasure,
    TorsionReport,
    lq_torsional_measure,
    polya_szego_bound,
    torsional_measure,
    torsional_rigidity,
    variational_derivative_check,
)
from .mesh import TriangleMesh, morph, triangulate  # noqa: E402
from .minkowski import (  # noqa: E402
    DiscreteMeasure,
    SolveOutcome,
    SolverConfig,
    objective_q_gt_1,
    solve_0_lt_q_lt_1,
    solve_minkowski,
    solve_q_gt_1,
    translate_maximize,
    verify_solution,
)
from .pde import TorsionSolution, boundary_flux, solve_torsion  # noqa: E402

__version__ = "0.1.0"
