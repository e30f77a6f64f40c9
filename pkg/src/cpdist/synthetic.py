"""Synthetic disk-type surfaces for tests, demos and benchmarks.

All generators return validated ``TriangleMesh`` instances: flat disks,
Gaussian-bump reliefs over the disk, hemispheres, and square grids, plus a
few small helpers (rigid copies, mirrors, midpoint subdivision).
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh
from .moser import build_disk_mesh

__all__ = [
    "flat_disk",
    "bump_disk",
    "hemisphere",
    "square_grid",
    "transformed",
    "mirrored",
    "subdivide_midpoint",
]


def _disk_points_faces(h):
    fe = build_disk_mesh(h)
    return fe.vertices, fe.faces


def flat_disk(h=0.1, radius=1.0):
    """Planar disk mesh of the given radius in the z = 0 plane."""
    pts, faces = _disk_points_faces(h)
    v = np.column_stack([radius * pts, np.zeros(pts.shape[0])])
    return TriangleMesh(v, faces)


def bump_disk(h=0.1, bumps=((0.0 + 0.0j, 0.5, 0.35),), radius=1.0):
    """Disk relief z = sum of Gaussian bumps.

    Parameters
    ----------
    h : float
        Planar mesh resolution.
    bumps : sequence of (center, height, width)
        Complex center inside the disk, bump height, and Gaussian sigma.
    radius : float
        Disk radius before the relief is applied.
    """
    pts, faces = _disk_points_faces(h)
    x, y = radius * pts[:, 0], radius * pts[:, 1]
    z = np.zeros_like(x)
    for center, height, width in bumps:
        c = complex(center)
        d2 = (x - c.real) ** 2 + (y - c.imag) ** 2
        z += height * np.exp(-d2 / (2.0 * width**2))
    return TriangleMesh(np.column_stack([x, y, z]), faces)


def hemisphere(h=0.1):
    """Upper unit hemisphere, meshed through the stereographic chart.

    Planar disk points p map to (2 px, 2 py, 1 - |p|^2) / (1 + |p|^2); the
    boundary circle lands exactly on the equator.
    """
    pts, faces = _disk_points_faces(h)
    r2 = (pts**2).sum(axis=1)
    denom = 1.0 + r2
    v = np.column_stack([2 * pts[:, 0], 2 * pts[:, 1], 1.0 - r2]) / denom[:, None]
    return TriangleMesh(v, faces)


def square_grid(n=10, spacing=1.0):
    """Flat n x n vertex grid, each cell split along its up-right diagonal."""
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v = np.column_stack(
        [ii.ravel() * spacing, jj.ravel() * spacing, np.zeros(n * n)]
    )
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            b = a + 1
            c = a + n
            d = c + 1
            faces.append([a, b, d])
            faces.append([a, d, c])
    return TriangleMesh(v, np.asarray(faces, dtype=np.int64))


def transformed(mesh, U=None, t=None, scale=1.0):
    """Copy of a mesh with vertices mapped through x -> scale * U x + t."""
    v = mesh.vertices * scale
    if U is not None:
        v = v @ np.asarray(U, dtype=float).T
    if t is not None:
        v = v + np.asarray(t, dtype=float)
    return mesh.with_vertices(v)


def mirrored(mesh, axis=0):
    """Reflected copy of a mesh (one coordinate negated)."""
    v = mesh.vertices.copy()
    v[:, axis] = -v[:, axis]
    return mesh.with_vertices(v)


def subdivide_midpoint(mesh):
    """One 1-to-4 midpoint subdivision of the piecewise-linear surface."""
    v = mesh.vertices
    f = mesh.faces
    edges = mesh.edges
    key = edges[:, 0] * mesh.n_vertices + edges[:, 1]
    mid_of = dict(zip(key.tolist(), range(len(key))))
    mids = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
    new_v = np.vstack([v, mids])

    def mid_idx(a, b):
        lo, hi = (a, b) if a < b else (b, a)
        return mesh.n_vertices + mid_of[lo * mesh.n_vertices + hi]

    new_f = []
    for a, b, c in f:
        ab, bc, ca = mid_idx(a, b), mid_idx(b, c), mid_idx(c, a)
        new_f += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
    return TriangleMesh(new_v, np.asarray(new_f, dtype=np.int64))
