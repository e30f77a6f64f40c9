"""Density-equalizing flow on the unit disk.

Given two piecewise-constant densities mu and nu of equal mass on a finite
element disk mesh, a potential solves the Neumann Poisson problem
laplace(a) = mu - nu, its element gradients define a velocity field tangent
to the circle, and integrating dz/dt = v(z) / (t nu(z) + (1 - t) mu(z)) from
t = 0 to 1 carries mu onto nu: the end map phi satisfies
nu(phi(z)) det(grad phi) = mu(z) up to discretization error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import factorized
from scipy.spatial import Delaunay

from .errors import FlowError, InputError, NumericalError
from .fem import cotangent_stiffness, lumped_vertex_areas, p1_gradients, signed_areas_2d
from .locate import TriLocator

__all__ = [
    "DiskFEMesh",
    "ElementDensity",
    "FlowField",
    "MoserMap",
    "build_disk_mesh",
    "resample_density",
    "solve_neumann_poisson",
    "flow_point",
    "flow_points",
    "moser_map",
]

log = logging.getLogger(__name__)

_MAX_VERTICES = 1_000_000
_BOUNDARY_RADIUS_TOL = 1e-9


class DiskFEMesh:
    """Quasi-uniform triangulation of the unit disk.

    Attributes
    ----------
    vertices : (n, 2) ndarray
    faces : (m, 3) ndarray, counterclockwise
    is_boundary : (n,) bool ndarray
        Vertices lying exactly on the unit circle.
    h : float
        Target edge length.
    """

    def __init__(self, vertices, faces, is_boundary, h):
        self.vertices = np.asarray(vertices, dtype=float)
        self.faces = np.asarray(faces, dtype=np.int64)
        self.is_boundary = np.asarray(is_boundary, dtype=bool)
        self.h = float(h)
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)
        self._cache = {}

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    @property
    def face_areas(self):
        if "face_areas" not in self._cache:
            self._cache["face_areas"] = signed_areas_2d(self.vertices, self.faces)
        return self._cache["face_areas"]

    @property
    def face_midpoints(self):
        if "mid" not in self._cache:
            self._cache["mid"] = self.vertices[self.faces].mean(axis=1)
        return self._cache["mid"]

    @property
    def total_area(self):
        return float(self.face_areas.sum())

    @property
    def gradients(self):
        if "grads" not in self._cache:
            self._cache["grads"] = p1_gradients(self.vertices, self.faces)
        return self._cache["grads"]

    @property
    def locator(self):
        if "locator" not in self._cache:
            self._cache["locator"] = TriLocator(self.vertices, self.faces)
        return self._cache["locator"]

    @property
    def vertex_masses(self):
        if "masses" not in self._cache:
            self._cache["masses"] = lumped_vertex_areas(
                self.face_areas, self.faces, self.n_vertices
            )
        return self._cache["masses"]

    @property
    def edge_length_ratio(self):
        if "ratio" not in self._cache:
            p = self.vertices[self.faces]
            e = np.linalg.norm(np.roll(p, -1, axis=1) - p, axis=2)
            self._cache["ratio"] = float(e.max() / e.min())
        return self._cache["ratio"]

    def poisson_solver(self):
        """Factorized solve of the stiffness system with vertex 0 pinned.

        The stiffness matrix has the constant nullspace; pinning one vertex
        makes it definite, and the pinned solution is exact for compatible
        (zero-sum) loads. Cached, so repeated Poisson solves on the same mesh
        reuse the factorization.
        """
        if "solver" not in self._cache:
            K = cotangent_stiffness(self.vertices, self.faces).tolil()
            K = K[1:, 1:].tocsc()
            self._cache["solver"] = factorized(K)
        return self._cache["solver"]

    def __getstate__(self):
        # the cached LU factorization is not picklable; rebuild lazily
        return {
            "vertices": np.asarray(self.vertices),
            "faces": np.asarray(self.faces),
            "is_boundary": self.is_boundary,
            "h": self.h,
        }

    def __setstate__(self, state):
        self.__init__(
            state["vertices"], state["faces"], state["is_boundary"], state["h"]
        )


def build_disk_mesh(h):
    """Triangulate the unit disk with target edge length h.

    Concentric rings with 6k vertices on ring k at radius k/K keep the
    max/min edge ratio well below the quasi-uniformity bound; the outermost
    ring lies exactly on the unit circle.
    """
    if not 0 < h < 1:
        raise InputError("target edge length h must lie in (0, 1)")
    K = max(2, int(round(1.0 / h)))
    n_est = 1 + 3 * K * (K + 1)
    if n_est > _MAX_VERTICES:
        raise InputError(f"h={h} would create {n_est} vertices (> {_MAX_VERTICES})")
    pts = [np.zeros((1, 2))]
    for k in range(1, K + 1):
        nk = 6 * k
        ang = 2.0 * np.pi * (np.arange(nk) + 0.5 * (k % 2)) / nk
        r = k / K
        pts.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
    pts = np.concatenate(pts)
    tri = Delaunay(pts)
    faces = tri.simplices.astype(np.int64)
    s = signed_areas_2d(pts, faces)
    flip = s < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    keep = np.abs(s) > 1e-14
    faces = faces[keep]
    is_boundary = np.abs(np.linalg.norm(pts, axis=1) - 1.0) <= _BOUNDARY_RADIUS_TOL
    mesh = DiskFEMesh(pts, faces, is_boundary, h)
    chi = mesh.n_vertices - _count_edges(faces) + mesh.n_faces
    if chi != 1:
        raise NumericalError(f"disk triangulation has Euler characteristic {chi}")
    return mesh


def _count_edges(faces):
    he = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    return np.unique(np.sort(he, axis=1), axis=0).shape[0]


@dataclass
class ElementDensity:
    """Piecewise-constant density on the FE mesh elements, total mass 1."""

    values: np.ndarray
    eps_floor: float

    def __len__(self):
        return self.values.shape[0]

    def mass_on(self, mesh):
        return float(self.values @ mesh.face_areas)


def resample_density(source, mesh, eps_floor=None):
    """Sample a disk density at the element midpoints, floor and normalize.

    Parameters
    ----------
    source : DiskParam or callable
        Either a flattening (its face density is looked up at each midpoint)
        or a callable mapping complex points to density values.
    mesh : DiskFEMesh
    eps_floor : float, optional
        Lower clamp for the raw values; defaults to 1e-3 times the mean
        density.

    Returns
    -------
    ElementDensity
        Values >= floor with unit total mass on the mesh.
    """
    mids = mesh.face_midpoints
    zq = mids[:, 0] + 1j * mids[:, 1]
    if callable(source):
        vals = np.asarray(source(zq), dtype=float)
    else:
        face, _, _ = source.locator.locate(zq)
        vals = source.face_density[face]
    areas = mesh.face_areas
    if eps_floor is None:
        mean = max(float(vals @ areas) / mesh.total_area, 1e-12)
        eps_floor = 1e-3 * mean
    vals = np.maximum(vals, eps_floor)
    mass = float(vals @ areas)
    return ElementDensity(vals / mass, eps_floor / mass)


@dataclass
class FlowField:
    """Element-constant velocity field from a Neumann Poisson potential."""

    a: np.ndarray  # per-vertex potential, weighted zero mean
    v: np.ndarray  # per-face gradient of a, (m, 2)
    mesh: DiskFEMesh
    boundary_normal_frac: float  # max |<v, n>| / max |v| over boundary faces


def solve_neumann_poisson(mesh, rhs, tol_n=1e-3):
    """Solve laplace(a) = rhs with zero Neumann data on the circle.

    The right-hand side (per element) is projected to zero mean for
    compatibility; the potential is fixed by a mass-weighted zero mean.
    The resulting element gradients are tangent to the circle up to
    discretization error; if the worst boundary-normal component exceeds
    ``tol_n`` times the field scale a warning is logged.

    Parameters
    ----------
    mesh : DiskFEMesh
    rhs : (m,) array_like
        Element values of the source term (typically mu - nu).
    tol_n : float
        Relative boundary-tangency warning threshold.

    Returns
    -------
    FlowField
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (mesh.n_faces,):
        raise InputError("rhs must have one value per mesh face")
    areas = mesh.face_areas
    rhs0 = rhs - (rhs @ areas) / mesh.total_area

    # weak form: K a = -M rhs, with the element load lumped to corners
    load = np.zeros(mesh.n_vertices)
    np.add.at(load, mesh.faces.ravel(), np.repeat(-rhs0 * areas / 3.0, 3))
    solve = mesh.poisson_solver()
    a = np.concatenate([[0.0], solve(load[1:])])
    if not np.all(np.isfinite(a)):
        raise NumericalError("singular stiffness matrix")
    w = mesh.vertex_masses
    a = a - (a @ w) / w.sum()

    G = mesh.gradients
    av = a[mesh.faces]  # (m, 3)
    v = np.einsum("fcd,fc->fd", G, av)

    frac = _boundary_normal_fraction(mesh, v)
    if frac > tol_n:
        log.warning(
            "boundary tangency residual %.2e exceeds tol_n=%.1e", frac, tol_n
        )
    return FlowField(a, v, mesh, frac)


def _boundary_normal_fraction(mesh, v):
    bd_face = mesh.is_boundary[mesh.faces].sum(axis=1) >= 2
    if not bd_face.any():
        return 0.0
    vmax = float(np.linalg.norm(v, axis=1).max())
    if vmax == 0.0:
        return 0.0
    mid = mesh.face_midpoints[bd_face]
    n = mid / np.linalg.norm(mid, axis=1, keepdims=True)
    comp = np.abs((v[bd_face] * n).sum(axis=1))
    return float(comp.max() / vmax)


def _velocity(field, mu, nu, t, pts):
    face, _, _ = field.mesh.locator.locate(pts)
    denom = t * nu.values[face] + (1.0 - t) * mu.values[face]
    return field.v[face] / denom[:, None]


def flow_points(field, mu, nu, z0, n_steps=32, checkpoint_ts=None):
    """Integrate the density-interpolation flow from t = 0 to 1 (RK4).

    Points starting on the circle are renormalized to it after every step
    (the continuous field is tangent there; renormalization removes the
    discrete drift). Interior points that leave the disk are projected back
    radially.

    Parameters
    ----------
    field : FlowField
    mu, nu : ElementDensity
    z0 : (n, 2) array_like or complex array
        Start points in the closed disk.
    n_steps : int
    checkpoint_ts : sequence of float, optional
        Times in (0, 1] at which to record intermediate positions.

    Returns
    -------
    end : (n, 2) ndarray
    checkpoints : list of (t, (n, 2) ndarray)
        Empty unless ``checkpoint_ts`` was given.
    """
    z = np.asarray(z0)
    if np.iscomplexobj(z):
        z = np.column_stack([np.atleast_1d(z).real, np.atleast_1d(z).imag])
    z = np.atleast_2d(np.asarray(z, dtype=float)).copy()
    r0 = np.linalg.norm(z, axis=1)
    on_bd = r0 >= 1.0 - _BOUNDARY_RADIUS_TOL

    want = sorted(checkpoint_ts) if checkpoint_ts else []
    recorded = []
    dt = 1.0 / n_steps
    for k in range(n_steps):
        t = k * dt
        k1 = _velocity(field, mu, nu, t, z)
        k2 = _velocity(field, mu, nu, t + dt / 2, z + (dt / 2) * k1)
        k3 = _velocity(field, mu, nu, t + dt / 2, z + (dt / 2) * k2)
        k4 = _velocity(field, mu, nu, t + dt, z + dt * k3)
        z += (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        r = np.linalg.norm(z, axis=1)
        out = r > 1.0
        fix = out | on_bd
        if fix.any():
            z[fix] /= np.maximum(r[fix], 1e-300)[:, None]
        tk = (k + 1) * dt
        while want and want[0] <= tk + 1e-12:
            want.pop(0)
            recorded.append((tk, z.copy()))
    return z, recorded


def flow_point(field, mu, nu, z0, n_steps=32):
    """Flow a single point; see ``flow_points``."""
    z = complex(z0)
    end, _ = flow_points(field, mu, nu, np.array([z]), n_steps)
    return complex(end[0, 0] + 1j * end[0, 1])


class MoserMap:
    """The end-time flow map phi on the FE mesh, with its diagnostics.

    ``r_ap`` is the worst relative area-preservation residual
    |nu(phi) det(grad phi) - mu| / mu over elements; ``lambda_drift`` is the
    worst relative drift of the conserved quantity
    det(grad Phi_t) * ((1-t) mu + t nu)(Phi_t) along the flow.
    """

    def __init__(self, mesh, vertex_images, r_ap, lambda_drift, n_steps_used):
        self.mesh = mesh
        self.vertex_images = vertex_images
        self.r_ap = float(r_ap)
        self.lambda_drift = float(lambda_drift)
        self.n_steps_used = int(n_steps_used)

    def __call__(self, z):
        """Evaluate phi at arbitrary disk points by barycentric transfer."""
        z = np.asarray(z, dtype=complex)
        scalar = z.ndim == 0
        zq = np.atleast_1d(z)
        face, bary, _ = self.mesh.locator.locate(zq)
        corners = self.vertex_images[self.mesh.faces[face]]  # (n, 3, 2)
        out2 = np.einsum("nc,ncd->nd", bary, corners)
        out = out2[:, 0] + 1j * out2[:, 1]
        return complex(out[0]) if scalar else out


def _element_dets(mesh, images):
    """Signed area ratios of the deformed elements."""
    img_areas = signed_areas_2d(images, mesh.faces)
    return img_areas / mesh.face_areas


def _density_at(mesh, density, pts):
    face, _, _ = mesh.locator.locate(pts)
    return density.values[face]


def moser_map(mu, nu, mesh, n_steps=32, max_doublings=3):
    """Flow every mesh vertex, producing the density-equalizing map.

    If the flow folds an element (negative area ratio), the step count is
    doubled up to ``max_doublings`` times before failing.

    Parameters
    ----------
    mu, nu : ElementDensity
        Source and target densities on ``mesh``.
    mesh : DiskFEMesh
    n_steps : int

    Returns
    -------
    MoserMap

    Raises
    ------
    FlowError
        If elements remain folded at the maximum step count.
    """
    if len(mu) != mesh.n_faces or len(nu) != mesh.n_faces:
        raise InputError("densities do not match the mesh")
    field = solve_neumann_poisson(mesh, mu.values - nu.values)
    ts = [0.25, 0.5, 0.75, 1.0]
    steps = int(n_steps)
    for attempt in range(max_doublings + 1):
        images, recorded = flow_points(
            field, mu, nu, mesh.vertices, steps, checkpoint_ts=ts
        )
        dets = _element_dets(mesh, images)
        if (dets > 0).all():
            break
        if attempt == max_doublings:
            raise FlowError(
                f"flipped element in the flow map at n_steps={steps}"
            )
        steps *= 2
        log.info("flow produced flipped elements; retrying with %d steps", steps)

    mids_img = images[mesh.faces].mean(axis=1)
    nu_img = _density_at(mesh, nu, mids_img)
    r_ap = float(np.max(np.abs(nu_img * dets - mu.values) / mu.values))

    drift = 0.0
    for t, pos in recorded:
        det_t = _element_dets(mesh, pos)
        mid_t = pos[mesh.faces].mean(axis=1)
        face_t, _, _ = mesh.locator.locate(mid_t)
        dens_t = t * nu.values[face_t] + (1.0 - t) * mu.values[face_t]
        lam = det_t * dens_t
        drift = max(drift, float(np.max(np.abs(lam - mu.values) / mu.values)))
    return MoserMap(mesh, images, r_ap, drift, steps)
