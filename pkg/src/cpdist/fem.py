"""Piecewise-linear finite-element building blocks on triangle meshes.

Shared between the disk flattening (harmonic solve on the 3D surface mesh)
and the density-equalizing flow (Poisson solve on the planar FE mesh).
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix


def cotangent_stiffness(vertices, faces):
    """Cotangent stiffness matrix K (V x V, sparse CSR).

    K = D - W with W the half-cotangent edge weights; K u = 0 on interior
    rows characterizes discrete harmonic functions. Works for planar (V, 2)
    or embedded (V, 3) vertices.
    """
    v = np.asarray(vertices, dtype=float)
    if v.shape[1] == 2:
        v = np.column_stack([v, np.zeros(v.shape[0])])
    f = np.asarray(faces)
    nv = v.shape[0]

    rows, cols, vals = [], [], []
    for corner in range(3):
        i = f[:, (corner + 1) % 3]
        j = f[:, (corner + 2) % 3]
        k = f[:, corner]
        u1 = v[i] - v[k]
        u2 = v[j] - v[k]
        area2 = np.linalg.norm(np.cross(u1, u2), axis=1)
        cot = (u1 * u2).sum(axis=1) / np.maximum(area2, 1e-300)
        w = 0.5 * cot
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    K = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nv, nv),
    )
    return K.tocsr()


def signed_areas_2d(points, faces):
    """Signed triangle areas of a planar triangulation, (F,)."""
    p = np.asarray(points, dtype=float)[faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def p1_gradients(points, faces):
    """Per-face gradient coefficients of the P1 hat functions.

    Returns (F, 3, 2): G[f, c] is the constant gradient of the hat function
    of corner c on face f; the gradient of a vertex field u on face f is
    sum_c G[f, c] * u[faces[f, c]].
    """
    p = np.asarray(points, dtype=float)[faces]
    a2 = 2.0 * signed_areas_2d(points, faces)  # signed, CCW positive
    G = np.empty((faces.shape[0], 3, 2))
    for c in range(3):
        e = p[:, (c + 2) % 3] - p[:, (c + 1) % 3]  # opposite edge
        G[:, c, 0] = -e[:, 1]
        G[:, c, 1] = e[:, 0]
    G /= a2[:, None, None]
    return G


def lumped_vertex_areas(areas_per_face, faces, n_vertices):
    """One third of incident face area per vertex, (V,)."""
    out = np.zeros(n_vertices)
    np.add.at(out, np.asarray(faces).ravel(),
              np.repeat(np.asarray(areas_per_face) / 3.0, 3))
    return out
