"""Surface distances via area-preserving correspondences on the disk.

The package compares disk-type triangulated surfaces embedded in 3D: each
surface is flattened conformally-harmonically onto the unit disk, candidate
disk automorphisms aligned at density extrema are refined by a thin-plate
warp and a density-equalizing flow, and each resulting correspondence is
scored by the optimal rigid alignment energy. The smallest energy is the
reported distance and its correspondence the reported map.
"""

from .errors import (
    CpdistError,
    FlatteningError,
    FlowError,
    InputError,
    MeshFormatError,
    NumericalError,
    TopologyError,
    TPSFitError,
)
from .flatten import (
    DiskParam,
    ExtremaSet,
    conformal_density_at,
    find_extrema,
    flatten_to_disk,
    hyperbolic_density,
)
from .mesh import (
    SamplingSet,
    TriangleMesh,
    centroid,
    farthest_point_sample,
    geodesic_distance,
    integrate,
    load_mesh,
    normalize_area,
)
from .mobius import MobiusTransform, candidate_set, hyperbolic_distance
from .moser import (
    DiskFEMesh,
    ElementDensity,
    FlowField,
    MoserMap,
    build_disk_mesh,
    flow_point,
    moser_map,
    resample_density,
    solve_neumann_poisson,
)
from .pipeline import (
    CorrespondenceMap,
    RunConfig,
    continuous_procrustes,
    distance_matrix,
    evaluate_candidate,
    export,
    prepare_surface,
)
from .rigid import (
    PointSequence,
    RigidMotion,
    centroid_size,
    discrete_procrustes,
    optimal_rigid,
    procrustes_energy,
)
from .tps import TPSMap, apply_zeta, chi, chi_inv, fit_tps, mutually_closest_pairs

__version__ = "0.1.0"

__all__ = [
    "CpdistError",
    "InputError",
    "MeshFormatError",
    "TopologyError",
    "NumericalError",
    "FlatteningError",
    "TPSFitError",
    "FlowError",
    "TriangleMesh",
    "SamplingSet",
    "load_mesh",
    "normalize_area",
    "centroid",
    "farthest_point_sample",
    "integrate",
    "geodesic_distance",
    "RigidMotion",
    "PointSequence",
    "centroid_size",
    "optimal_rigid",
    "discrete_procrustes",
    "procrustes_energy",
    "DiskParam",
    "ExtremaSet",
    "flatten_to_disk",
    "conformal_density_at",
    "hyperbolic_density",
    "find_extrema",
    "MobiusTransform",
    "candidate_set",
    "hyperbolic_distance",
    "TPSMap",
    "chi",
    "chi_inv",
    "fit_tps",
    "apply_zeta",
    "mutually_closest_pairs",
    "DiskFEMesh",
    "ElementDensity",
    "FlowField",
    "MoserMap",
    "build_disk_mesh",
    "resample_density",
    "solve_neumann_poisson",
    "flow_point",
    "moser_map",
    "RunConfig",
    "CorrespondenceMap",
    "prepare_surface",
    "evaluate_candidate",
    "continuous_procrustes",
    "distance_matrix",
    "export",
    "__version__",
]
