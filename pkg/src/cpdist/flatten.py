"""Flattening disk-type surfaces onto the unit disk.

The boundary loop is pinned to the unit circle with spacing proportional to
its 3D arclength and the interior solves the cotangent-weight harmonic
system. The per-face area ratio between the surface and the flat layout acts
as a density over the disk; its hyperbolic normalization
(1 - |z|^2)^2 * density is invariant under disk automorphisms, and its strict
local extrema anchor the correspondence search.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import spsolve

from .errors import FlatteningError, InputError
from .fem import cotangent_stiffness, lumped_vertex_areas, signed_areas_2d
from .locate import TriLocator

__all__ = [
    "DiskParam",
    "ExtremaSet",
    "Extremum",
    "flatten_to_disk",
    "conformal_density_at",
    "hyperbolic_density",
    "find_extrema",
]


@dataclass
class DiskParam:
    """A flattening of a mesh onto the closed unit disk.

    Attributes
    ----------
    z : (V,) complex ndarray
        Planar vertex positions, |z| <= 1, boundary vertices on |z| = 1.
    faces : (F, 3) ndarray
        Triangulation shared with the source mesh.
    face_density : (F,) ndarray
        Surface area per unit parameter area on each planar face.
    mesh : TriangleMesh
        The flattened surface.
    """

    z: np.ndarray
    faces: np.ndarray
    face_density: np.ndarray
    mesh: object

    def __post_init__(self):
        self._locator = None

    @property
    def planar_coords(self):
        """(V, 2) view of the planar positions."""
        return np.column_stack([self.z.real, self.z.imag])

    @property
    def locator(self):
        if self._locator is None:
            self._locator = TriLocator(self.planar_coords, self.faces)
        return self._locator

    def to_json(self):
        return json.dumps(
            {
                "planar_coords": self.planar_coords.tolist(),
                "faces": self.faces.tolist(),
                "face_density": self.face_density.tolist(),
            }
        )

    def save_obj_uv(self, path):
        """Write the mesh with its disk layout as OBJ texture coordinates."""
        with open(path, "w") as fh:
            for p in self.mesh.vertices:
                fh.write(f"v {p[0]} {p[1]} {p[2]}\n")
            for z in self.z:
                fh.write(f"vt {(z.real + 1) / 2} {(z.imag + 1) / 2}\n")
            for f in self.faces:
                i, j, k = f + 1
                fh.write(f"f {i}/{i} {j}/{j} {k}/{k}\n")


@dataclass
class Extremum:
    vertex: int
    position: complex
    kind: str  # "max" or "min"
    value: float
    deviation: float


@dataclass
class ExtremaSet:
    """Strict local extrema of the hyperbolic density, strongest first."""

    extrema: list

    def __len__(self):
        return len(self.extrema)

    def __iter__(self):
        return iter(self.extrema)

    @property
    def positions(self):
        return np.asarray([e.position for e in self.extrema], dtype=complex)


def flatten_to_disk(mesh):
    """Flatten a disk mesh onto the unit disk by a discrete harmonic map.

    Parameters
    ----------
    mesh : TriangleMesh

    Returns
    -------
    DiskParam
        Planar coordinates with all faces positively oriented and per-face
        densities whose 2D-weighted sum equals the surface area exactly.

    Raises
    ------
    FlatteningError
        If the cotangent system is singular or the layout has flipped faces.
    """
    loop = mesh.boundary_loop
    pts = mesh.vertices[loop]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg[:-1])])
    theta = 2.0 * np.pi * cum / seg.sum()
    zb = np.exp(1j * theta)

    nv = mesh.n_vertices
    is_bd = mesh.is_boundary_vertex
    interior = np.nonzero(~is_bd)[0]
    z = np.zeros(nv, dtype=complex)
    z[loop] = zb

    if interior.size:
        K = cotangent_stiffness(mesh.vertices, mesh.faces)
        K_ii = K[interior][:, interior].tocsc()
        K_ib = K[interior][:, loop]
        rhs = -K_ib @ zb
        sol = spsolve(K_ii, rhs)
        if not np.all(np.isfinite(sol)):
            raise FlatteningError("singular cotangent system")
        z[interior] = sol

    coords = np.column_stack([z.real, z.imag])
    s2d = signed_areas_2d(coords, mesh.faces)
    if s2d.sum() < 0:  # boundary traversal ran clockwise; mirror the layout
        z = np.conj(z)
        s2d = -s2d
    n_flipped = int((s2d <= 0).sum())
    if n_flipped:
        raise FlatteningError(
            f"non_bijective_flattening: {n_flipped} flipped faces"
        )
    density = mesh.face_areas / s2d
    return DiskParam(z, mesh.faces, density, mesh)


def conformal_density_at(param, z, tol=1e-9):
    """Piecewise-constant density at points of the closed disk.

    Evaluates the density of the planar face containing each query point,
    falling back to the nearest face on edges or in the thin sliver between
    the triangulated polygon and the circle.
    """
    zq = np.asarray(z, dtype=complex)
    scalar = zq.ndim == 0
    zq = np.atleast_1d(zq)
    if (np.abs(zq) > 1.0 + tol).any():
        raise InputError("query point outside the closed unit disk")
    face, _, _ = param.locator.locate(zq)
    out = param.face_density[face]
    return float(out[0]) if scalar else out


def _vertex_density(param):
    """Area-weighted vertex average of the face densities, (V,)."""
    a3 = param.mesh.face_areas
    a2 = signed_areas_2d(param.planar_coords, param.faces)
    nv = param.z.shape[0]
    num = np.zeros(nv)
    den = np.zeros(nv)
    np.add.at(num, param.faces.ravel(), np.repeat(a3, 3))
    np.add.at(den, param.faces.ravel(), np.repeat(np.abs(a2), 3))
    return num / np.maximum(den, 1e-300)


def hyperbolic_density(param):
    """Per-vertex hyperbolic-normalized density (1 - |z|^2)^2 * density.

    Vanishes identically on the boundary loop and is invariant under disk
    automorphisms of the layout, which makes extremum detection independent
    of the rotational and translational freedom of the flattening.
    """
    mu = _vertex_density(param)
    r2 = np.abs(param.z) ** 2
    return np.clip(1.0 - r2, 0.0, None) ** 2 * mu


def _smooth_vertex_field(param, field):
    """One pass of vertex-area-weighted averaging over closed 1-rings."""
    mesh = param.mesh
    w = lumped_vertex_areas(mesh.face_areas, mesh.faces, mesh.n_vertices)
    e = mesh.edges
    num = (w * field).copy()
    den = w.copy()
    np.add.at(num, e[:, 0], w[e[:, 1]] * field[e[:, 1]])
    np.add.at(num, e[:, 1], w[e[:, 0]] * field[e[:, 0]])
    np.add.at(den, e[:, 0], w[e[:, 1]])
    np.add.at(den, e[:, 1], w[e[:, 0]])
    return num / den


def _strict_local_extrema(field, edges, interior_mask):
    """Strict 1-ring extrema of a vertex field.

    Returns (max_mask, min_mask) over interior vertices. A vertex qualifies
    only if its value is strictly greater (resp. smaller) than every
    neighbor; ties disqualify.
    """
    n = field.shape[0]
    has_ge = np.zeros(n, dtype=bool)
    has_le = np.zeros(n, dtype=bool)
    u, v = edges[:, 0], edges[:, 1]
    np.logical_or.at(has_ge, u, field[v] >= field[u])
    np.logical_or.at(has_ge, v, field[u] >= field[v])
    np.logical_or.at(has_le, u, field[v] <= field[u])
    np.logical_or.at(has_le, v, field[u] <= field[v])
    return interior_mask & ~has_ge, interior_mask & ~has_le


def find_extrema(param, max_extrema=8, smooth=True):
    """Strict interior extrema of the (smoothed) hyperbolic density.

    Parameters
    ----------
    param : DiskParam
    max_extrema : int
        Keep at most this many, ranked by deviation from the field median.
    smooth : bool
        Apply one area-weighted averaging pass before detection, which
        suppresses triangulation noise.

    Returns
    -------
    ExtremaSet
        Possibly empty; sorted by |value - median| descending.
    """
    field = hyperbolic_density(param)
    if smooth:
        field = _smooth_vertex_field(param, field)
    interior = ~param.mesh.is_boundary_vertex
    mx, mn = _strict_local_extrema(field, param.mesh.edges, interior)
    med = float(np.median(field))
    entries = []
    for vid in np.nonzero(mx)[0]:
        entries.append(Extremum(int(vid), complex(param.z[vid]), "max",
                                float(field[vid]), abs(float(field[vid]) - med)))
    for vid in np.nonzero(mn)[0]:
        entries.append(Extremum(int(vid), complex(param.z[vid]), "min",
                                float(field[vid]), abs(float(field[vid]) - med)))
    entries.sort(key=lambda e: -e.deviation)
    return ExtremaSet(entries[:max_extrema])
