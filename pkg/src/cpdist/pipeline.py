"""End-to-end surface distance: candidate search, staging and selection.

For each surface the preparation phase normalizes the area, flattens onto the
disk, draws a farthest-point sampling and extracts density extrema. Candidate
disk automorphisms from extremum pairs are then staged through the optional
TPS alignment and density-equalizing flow, lifted onto the target surface and
scored with the rigid alignment energy; the lowest-energy candidate wins.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import mobius, tps
from .errors import InputError, NumericalError
from .fem import signed_areas_2d
from .flatten import DiskParam, find_extrema, flatten_to_disk
from .locate import TriLocator
from .mesh import TriangleMesh, farthest_point_sample, normalize_area
from .mobius import MobiusTransform
from .moser import ElementDensity, build_disk_mesh, moser_map, resample_density
from .rigid import RigidMotion, procrustes_energy

__all__ = [
    "RunConfig",
    "StageFlags",
    "CorrespondenceMap",
    "PreparedSurface",
    "prepare_surface",
    "make_pair_context",
    "evaluate_candidate",
    "continuous_procrustes",
    "distance_matrix",
    "map_surface_vertices",
    "face_conformal_distortion",
    "export",
    "save_correspondence_json",
    "load_correspondence_json",
    "save_matrix_csv",
    "save_residuals_csv",
]

log = logging.getLogger(__name__)

_STAGE_ORDER = ("mobius", "tps", "moser")


@dataclass(frozen=True)
class RunConfig:
    """Knobs of the distance pipeline.

    Attributes
    ----------
    L : int
        Surface sample count for the alignment energy.
    K : int
        Rotation angles per extremum pair in the candidate sweep.
    max_extrema : int
        Extrema kept per surface.
    h : float
        FE disk mesh edge length for the density flow stage.
    n_steps : int
        Runge-Kutta steps of the flow.
    eps_floor : float or None
        Density floor; None picks 1e-3 of the mean density.
    chi_profile : str
        "atanh" (default) or "atan" coordinate stretch for the TPS stage.
    stages : tuple of str
        Subset of ("mobius", "tps", "moser"), applied in that order.
    symmetrize : bool
        Evaluate both directions and keep the smaller distance.
    refine_theta : bool
        Golden-section refinement of the rotation angle around the best
        candidate.
    seed_vertex : int
        First sample of the farthest-point sampling.
    """

    L: int = 256
    K: int = 32
    max_extrema: int = 8
    h: float = 0.06
    n_steps: int = 32
    eps_floor: float | None = None
    chi_profile: str = "atanh"
    stages: tuple = ("mobius", "tps", "moser")
    symmetrize: bool = False
    refine_theta: bool = False
    seed_vertex: int = 0

    def __post_init__(self):
        if self.L < 1 or self.K < 1 or self.max_extrema < 1 or self.n_steps < 1:
            raise InputError("L, K, max_extrema and n_steps must be positive")
        if not 0 < self.h < 1:
            raise InputError("h must lie in (0, 1)")
        if self.chi_profile not in ("atanh", "atan"):
            raise InputError("chi_profile must be 'atanh' or 'atan'")
        stages = tuple(self.stages)
        if not stages:
            raise InputError("stages must be nonempty")
        for s in stages:
            if s not in _STAGE_ORDER:
                raise InputError(f"unknown stage {s!r}")
        ordered = tuple(s for s in _STAGE_ORDER if s in stages)
        object.__setattr__(self, "stages", ordered)

    def replace(self, **kw):
        return replace(self, **kw)

    def to_json(self):
        d = asdict(self)
        d["stages"] = list(d["stages"])
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if "stages" in d:
            d["stages"] = tuple(d["stages"])
        return cls(**d)


@dataclass
class StageFlags:
    """What actually happened while evaluating one candidate."""

    tps_applied: bool = False
    moser_applied: bool = False
    degenerate: bool = False
    clamped: int = 0
    extrema_fallback: bool = False

    def to_dict(self):
        return asdict(self)


@dataclass
class CorrespondenceMap:
    """A sampled correspondence between two surfaces with its energy.

    Sample points live on the source surface (indices, positions, cell
    areas); images are stored both as face/barycentric coordinates on the
    target and as 3D points. ``dpc_value`` is the rigid alignment energy of
    exactly these samples and images.
    """

    sample_indices: np.ndarray
    sample_points: np.ndarray
    voronoi_areas: np.ndarray
    image_faces: np.ndarray
    image_bary: np.ndarray
    image_points: np.ndarray
    candidate: MobiusTransform
    dpc_value: float
    rigid_motion: RigidMotion
    stage_flags: StageFlags
    direction: str = "forward"
    area_residual: float | None = None

    def residuals(self):
        """Per-sample alignment residuals ||R* q - C q||."""
        pred = self.rigid_motion.apply(self.sample_points)
        return np.linalg.norm(pred - self.image_points, axis=1)

    def to_dict(self):
        return {
            "sample_indices": self.sample_indices.tolist(),
            "sample_points": self.sample_points.tolist(),
            "voronoi_areas": self.voronoi_areas.tolist(),
            "image_faces": self.image_faces.tolist(),
            "image_bary": self.image_bary.tolist(),
            "image_points": self.image_points.tolist(),
            "candidate": {
                "theta": self.candidate.theta,
                "a_re": self.candidate.a.real,
                "a_im": self.candidate.a.imag,
                "orientation": self.candidate.orientation,
            },
            "dpc_value": self.dpc_value,
            "rigid_motion": {
                "U": self.rigid_motion.U.ravel().tolist(),
                "t": self.rigid_motion.t.tolist(),
            },
            "stage_flags": self.stage_flags.to_dict(),
            "direction": self.direction,
            "area_residual": self.area_residual,
        }

    @classmethod
    def from_dict(cls, d):
        cand = d["candidate"]
        return cls(
            sample_indices=np.asarray(d["sample_indices"], dtype=np.int64),
            sample_points=np.asarray(d["sample_points"], dtype=float),
            voronoi_areas=np.asarray(d["voronoi_areas"], dtype=float),
            image_faces=np.asarray(d["image_faces"], dtype=np.int64),
            image_bary=np.asarray(d["image_bary"], dtype=float),
            image_points=np.asarray(d["image_points"], dtype=float),
            candidate=MobiusTransform(
                cand["theta"], cand["a_re"] + 1j * cand["a_im"], cand["orientation"]
            ),
            dpc_value=float(d["dpc_value"]),
            rigid_motion=RigidMotion(
                np.asarray(d["rigid_motion"]["U"]).reshape(3, 3),
                np.asarray(d["rigid_motion"]["t"]),
            ),
            stage_flags=StageFlags(**d["stage_flags"]),
            direction=d.get("direction", "forward"),
            area_residual=d.get("area_residual"),
        )

    def summary(self):
        return {
            "dpc": self.dpc_value,
            "theta": self.candidate.theta,
            "a_re": self.candidate.a.real,
            "a_im": self.candidate.a.imag,
            "orientation": self.candidate.orientation,
            "direction": self.direction,
            **self.stage_flags.to_dict(),
        }


@dataclass
class PreparedSurface:
    """Per-surface state computed once and reused across candidates."""

    mesh: TriangleMesh  # unit area, centered
    param: DiskParam
    samples: object
    extrema: object
    sample_z: np.ndarray  # complex planar positions of the samples
    name: str = ""

    @property
    def sample_points(self):
        return self.mesh.vertices[self.samples.sample_indices]


def prepare_surface(mesh, cfg=None, name=""):
    """Normalize, flatten, sample and extract extrema for one surface."""
    cfg = cfg or RunConfig()
    m = normalize_area(mesh)
    param = flatten_to_disk(m)
    L = min(cfg.L, m.n_vertices)
    if L < cfg.L:
        log.info("mesh has only %d vertices; sampling all of them", L)
    seed = min(cfg.seed_vertex, m.n_vertices - 1)
    samples = farthest_point_sample(m, L, seed_vertex=seed)
    extrema = find_extrema(param, max_extrema=cfg.max_extrema)
    sample_z = param.z[samples.sample_indices]
    return PreparedSurface(m, param, samples, extrema, sample_z, name)


@dataclass
class PairContext:
    """Shared per-pair state for the flow stage (FE mesh, target density)."""

    fe_mesh: object = None
    nu: ElementDensity = None


def make_pair_context(M, N, cfg):
    """Build the flow-stage context shared by all candidates of a pair."""
    if "moser" not in cfg.stages:
        return PairContext()
    fe = build_disk_mesh(cfg.h)
    nu = resample_density(N.param, fe, cfg.eps_floor)
    return PairContext(fe, nu)


class _CandidateChain:
    """The staged planar map m -> zeta -> phi for one candidate."""

    def __init__(self, M, N, m, cfg, context):
        self.m = m
        self.flags = StageFlags(extrema_fallback=(len(M.extrema) == 0 or len(N.extrema) == 0))
        self.zeta = None
        self.moser = None

        if "tps" in cfg.stages and len(M.extrema) and len(N.extrema):
            src = mobius.apply(m, M.extrema.positions)
            pairs = tps.mutually_closest_pairs(src, N.extrema.positions)
            zeta = tps.build_zeta(pairs, profile=cfg.chi_profile)
            if not zeta.is_identity:
                self.zeta = zeta
                self.flags.tps_applied = True

        if "moser" in cfg.stages and context.fe_mesh is not None:
            try:
                self.moser = self._build_moser(M, cfg, context)
                self.flags.moser_applied = True
            except NumericalError as exc:
                log.warning("flow stage skipped for a candidate: %s", exc)

    def _build_moser(self, M, cfg, context):
        # transported source density: recompute per-face density of the
        # deformed layout, then sample it at the FE element midpoints
        z_def = mobius.apply(self.m, M.param.z)
        if self.zeta is not None:
            z_def = tps.apply_zeta(self.zeta, z_def)
        coords = np.column_stack([z_def.real, z_def.imag])
        a2 = np.abs(signed_areas_2d(coords, M.param.faces))
        density = M.mesh.face_areas / np.maximum(a2, 1e-300)
        loc = TriLocator(coords, M.param.faces)
        mids = context.fe_mesh.face_midpoints
        face, _, _ = loc.locate(mids)
        mu = _normalize_density(
            density[face], context.fe_mesh, cfg.eps_floor
        )
        return moser_map(mu, context.nu, context.fe_mesh, cfg.n_steps)

    def map_planar(self, z):
        w = mobius.apply(self.m, z)
        if self.zeta is not None:
            w = tps.apply_zeta(self.zeta, w)
        if self.moser is not None:
            w = self.moser(w)
        return w


def _normalize_density(vals, fe_mesh, eps_floor):
    areas = fe_mesh.face_areas
    if eps_floor is None:
        mean = max(float(vals @ areas) / fe_mesh.total_area, 1e-12)
        eps_floor = 1e-3 * mean
    vals = np.maximum(vals, eps_floor)
    mass = float(vals @ areas)
    return ElementDensity(vals / mass, eps_floor / mass)


def _lift_to_surface(N, faces, bary):
    corners = N.mesh.vertices[N.param.faces[faces]]  # (n, 3, 3)
    return np.einsum("nc,ncd->nd", bary, corners)


def evaluate_candidate(M, N, m, cfg=None, context=None):
    """Score one candidate transform between two prepared surfaces.

    Maps every sample of M through the staged planar chain, locates the
    images in N's layout, lifts them to N in 3D and evaluates the rigid
    alignment energy.

    Parameters
    ----------
    M, N : PreparedSurface
    m : MobiusTransform
    cfg : RunConfig, optional
    context : PairContext, optional
        Shared flow-stage state; built on the fly when omitted.

    Returns
    -------
    CorrespondenceMap
    """
    cfg = cfg or RunConfig()
    if context is None:
        context = make_pair_context(M, N, cfg)
    chain = _CandidateChain(M, N, m, cfg, context)
    w = chain.map_planar(M.sample_z)
    faces, bary, clamped = N.param.locator.locate(w, tol=1e-6)
    chain.flags.clamped = int(clamped.sum())
    images = _lift_to_surface(N, faces, bary)
    dpc, motion = procrustes_energy(M.mesh, M.samples, images)
    chain.flags.degenerate = motion.degenerate
    return CorrespondenceMap(
        sample_indices=M.samples.sample_indices,
        sample_points=M.sample_points,
        voronoi_areas=M.samples.voronoi_areas,
        image_faces=faces,
        image_bary=bary,
        image_points=images,
        candidate=m,
        dpc_value=dpc,
        rigid_motion=motion,
        stage_flags=chain.flags,
        area_residual=chain.moser.r_ap if chain.moser is not None else None,
    )


def _best_correspondence(M, N, cfg):
    """Evaluate every candidate and keep the lowest energy (stable ties)."""
    context = make_pair_context(M, N, cfg)
    if "mobius" in cfg.stages:
        cands, anchors = mobius.candidate_set(
            M.extrema, N.extrema, cfg.K, return_anchors=True
        )
    else:
        cands, anchors = [MobiusTransform.identity()], [(0j, 0j)]
    best = None
    best_anchor = None
    for m, anchor in zip(cands, anchors):
        corr = evaluate_candidate(M, N, m, cfg, context)
        if best is None or corr.dpc_value < best.dpc_value:
            best = corr
            best_anchor = anchor
    if cfg.refine_theta and "mobius" in cfg.stages:
        best = _refine_theta(M, N, cfg, context, best, best_anchor)
    return best


def _refine_theta(M, N, cfg, context, best, anchor):
    """Golden-section sweep of the rotation angle around the best candidate."""
    p, q = anchor
    orient = best.candidate.orientation
    span = 2.0 * np.pi / cfg.K

    def score(theta):
        m = mobius.from_point_angle(p, q, theta, orient)
        return evaluate_candidate(M, N, m, cfg, context)

    gr = (np.sqrt(5.0) - 1.0) / 2.0
    lo = best.candidate.theta - span
    hi = best.candidate.theta + span
    c = hi - gr * (hi - lo)
    d = lo + gr * (hi - lo)
    fc, fd = score(c), score(d)
    for _ in range(20):
        if fc.dpc_value < fd.dpc_value:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = score(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = score(d)
    refined = fc if fc.dpc_value < fd.dpc_value else fd
    return refined if refined.dpc_value < best.dpc_value else best


def continuous_procrustes(mesh_m, mesh_n, cfg=None):
    """Distance and near-optimal correspondence between two surfaces.

    Parameters
    ----------
    mesh_m, mesh_n : TriangleMesh
        Valid disk meshes; they are normalized internally.
    cfg : RunConfig, optional

    Returns
    -------
    CorrespondenceMap
        The best candidate over both orientations. With ``cfg.symmetrize``
        both directions are searched and the smaller distance is returned,
        with ``direction`` recording which one ("forward" = first argument
        as source).
    """
    cfg = cfg or RunConfig()
    M = prepare_surface(mesh_m, cfg, "M")
    N = prepare_surface(mesh_n, cfg, "N")
    best = _best_correspondence(M, N, cfg)
    best.direction = "forward"
    if cfg.symmetrize:
        rev = _best_correspondence(N, M, cfg)
        rev.direction = "reverse"
        if rev.dpc_value < best.dpc_value:
            return rev
    return best


def _pair_task(args):
    i, j, M, N, cfg = args
    try:
        if cfg.symmetrize:
            fwd = _best_correspondence(M, N, cfg)
            rev = _best_correspondence(N, M, cfg)
            rev.direction = "reverse"
            corr = rev if rev.dpc_value < fwd.dpc_value else fwd
        else:
            corr = _best_correspondence(M, N, cfg)
        return i, j, corr.dpc_value, corr.summary(), None
    except Exception as exc:  # per-pair failures must not kill the matrix
        log.error("pair (%d, %d) failed: %s", i, j, exc)
        return i, j, float("nan"), None, f"{type(exc).__name__}: {exc}"


def distance_matrix(meshes, cfg=None, names=None, jobs=None):
    """All-pairs distances for a collection of surfaces.

    Flattenings and samplings are computed once per mesh and reused for all
    pairs. Pairs run in parallel across processes when ``jobs`` > 1. Any
    per-pair failure yields a NaN entry and an error log record instead of
    aborting the run.

    Parameters
    ----------
    meshes : sequence of TriangleMesh
    cfg : RunConfig, optional
    names : sequence of str, optional
    jobs : int, optional
        Worker processes; None picks the CPU count.

    Returns
    -------
    (D, summaries) : ((n, n) ndarray, list of dict)
        Symmetric matrix with zero diagonal, and one summary per evaluated
        pair (including failures).
    """
    cfg = cfg or RunConfig()
    meshes = list(meshes)
    n = len(meshes)
    if n < 2:
        raise InputError("need at least two meshes")
    if names is None:
        names = [f"mesh{i}" for i in range(n)]
    prepared = [
        prepare_surface(mesh, cfg, name) for mesh, name in zip(meshes, names)
    ]
    tasks = [
        (i, j, prepared[i], prepared[j], cfg)
        for i in range(n)
        for j in range(i + 1, n)
    ]
    D = np.zeros((n, n))
    summaries = []
    if jobs is None:
        jobs = os.cpu_count() or 1
    jobs = max(1, min(jobs, len(tasks)))

    def collect(results):
        for i, j, d, summary, err in results:
            D[i, j] = D[j, i] = d
            rec = {"i": i, "j": j, "name_i": names[i], "name_j": names[j]}
            if summary is not None:
                rec.update(summary)
            if err is not None:
                rec["error"] = err
            summaries.append(rec)

    if jobs == 1:
        collect(map(_pair_task, tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            collect(pool.map(_pair_task, tasks))
    return D, summaries


# -- diagnostics ---------------------------------------------------------------


def map_surface_vertices(M, N, m, cfg=None, context=None):
    """Image of every vertex of M on N under the staged candidate map.

    Used for map-quality diagnostics (e.g. conformal distortion); the
    correspondence itself only needs the sample points.
    """
    cfg = cfg or RunConfig()
    if context is None:
        context = make_pair_context(M, N, cfg)
    chain = _CandidateChain(M, N, m, cfg, context)
    w = chain.map_planar(M.param.z)
    faces, bary, _ = N.param.locator.locate(w, tol=1e-6)
    return _lift_to_surface(N, faces, bary)


def face_conformal_distortion(mesh, mapped_points):
    """Per-face singular-value ratio of the piecewise-linear map.

    For each face the differential is expressed in orthonormal tangent
    frames of the source and image triangles; the ratio of its singular
    values is 1 exactly when the map is conformal on that face. Degenerate
    image faces yield inf.
    """
    v = mesh.vertices[mesh.faces]
    u = np.asarray(mapped_points, dtype=float)[mesh.faces]

    def frame(e1, e2):
        b1 = e1 / np.linalg.norm(e1, axis=1, keepdims=True)
        e2p = e2 - (e2 * b1).sum(axis=1, keepdims=True) * b1
        n2 = np.linalg.norm(e2p, axis=1, keepdims=True)
        b2 = e2p / np.maximum(n2, 1e-300)
        M = np.empty(e1.shape[:1] + (2, 2))
        M[:, 0, 0] = (e1 * b1).sum(axis=1)
        M[:, 0, 1] = (e2 * b1).sum(axis=1)
        M[:, 1, 0] = 0.0
        M[:, 1, 1] = (e2 * b2).sum(axis=1)
        return M

    S = frame(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    T = frame(u[:, 1] - u[:, 0], u[:, 2] - u[:, 0])
    J = T @ np.linalg.inv(S)
    sv = np.linalg.svd(J, compute_uv=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = sv[:, 0] / sv[:, 1]
    return np.where(np.isfinite(ratio), ratio, np.inf)


# -- persistence ---------------------------------------------------------------


def save_correspondence_json(corr, path):
    with open(path, "w") as fh:
        json.dump(corr.to_dict(), fh)


def load_correspondence_json(path):
    with open(path) as fh:
        return CorrespondenceMap.from_dict(json.load(fh))


def save_matrix_csv(D, names, path):
    """Distance matrix as CSV with a header row of mesh identifiers."""
    D = np.asarray(D)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([""] + list(names))
        for name, row in zip(names, D):
            w.writerow([name] + [repr(float(x)) for x in row])


def load_matrix_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][1:]
    D = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return D, names


def save_residuals_csv(corr, path):
    """Plain per-sample residual file: one value per line, no header."""
    with open(path, "w") as fh:
        for r in corr.residuals():
            fh.write(f"{float(r)!r}\n")


def export(result, path, format):
    """Write a result in one of the supported formats.

    Parameters
    ----------
    result : CorrespondenceMap or (matrix, names)
    path : str
    format : {"json", "csv", "residuals"}
    """
    if format == "json":
        save_correspondence_json(result, path)
    elif format == "csv":
        D, names = result
        save_matrix_csv(D, names, path)
    elif format == "residuals":
        save_residuals_csv(result, path)
    else:
        raise InputError(f"unknown export format {format!r}")
