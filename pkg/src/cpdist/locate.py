"""Point location in planar triangulations.

Vectorized containment queries: candidate triangles come from the faces
incident to the nearest vertices (KD-tree), with a nearest-face clamp as the
final fallback for points outside the triangulated region. Good meshes
resolve nearly every query in the first pass.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class TriLocator:
    """Locate points in a fixed planar triangulation.

    Parameters
    ----------
    points : (V, 2) array_like
        Planar vertex positions.
    faces : (F, 3) array_like
        Triangle vertex indices (any orientation; degenerate faces are
        excluded from containment).
    """

    def __init__(self, points, faces):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must be (V, 2)")
        f = np.asarray(faces, dtype=np.int64)
        self.points = pts
        self.faces = f
        p = pts[f]
        self._p0 = p[:, 0]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        ok = np.abs(det) > 1e-300
        inv_det = np.where(ok, det, 1.0)
        # rows of the inverse edge matrix, for barycentric coordinates
        self._inv = np.empty((f.shape[0], 2, 2))
        self._inv[:, 0, 0] = e2[:, 1] / inv_det
        self._inv[:, 0, 1] = -e2[:, 0] / inv_det
        self._inv[:, 1, 0] = -e1[:, 1] / inv_det
        self._inv[:, 1, 1] = e1[:, 0] / inv_det
        self._valid = ok

        nv = pts.shape[0]
        counts = np.zeros(nv, dtype=np.int64)
        np.add.at(counts, f.ravel(), 1)
        deg = int(counts.max())
        vf = np.full((nv, deg), -1, dtype=np.int64)
        flat = f.ravel()
        order = np.argsort(flat, kind="stable")
        vsorted = flat[order]
        fsorted = order // 3
        group_start = np.searchsorted(vsorted, np.arange(nv))
        slots = np.arange(flat.size) - group_start[vsorted]
        vf[vsorted, slots] = fsorted
        self._vertex_faces = vf
        self._vtree = cKDTree(pts)
        self._bary_pts = p.mean(axis=1)
        self._btree = cKDTree(self._bary_pts)

    def _bary_of(self, q, cand):
        """Barycentric coords of points q (n, 2) in faces cand (n, K)."""
        safe = np.maximum(cand, 0)
        d = q[:, None, :] - self._p0[safe]  # (n, K, 2)
        lam = np.einsum("fkab,fkb->fka", self._inv[safe], d)
        b0 = 1.0 - lam[..., 0] - lam[..., 1]
        bary = np.stack([b0, lam[..., 0], lam[..., 1]], axis=-1)
        ok = (cand >= 0) & self._valid[safe]
        return bary, ok

    def locate(self, q, tol=1e-6):
        """Find containing faces for query points.

        Parameters
        ----------
        q : (n, 2) array_like or complex (n,)
        tol : float
            Containment slack on barycentric coordinates.

        Returns
        -------
        faces : (n,) int ndarray
        bary : (n, 3) ndarray
            Clipped to the simplex and renormalized.
        clamped : (n,) bool ndarray
            True where the point was outside every triangle beyond ``tol``
            and was clamped to the nearest face.
        """
        q = np.asarray(q)
        if np.iscomplexobj(q):
            q = np.column_stack([q.real, q.imag])
        q = np.atleast_2d(np.asarray(q, dtype=float))
        n = q.shape[0]
        face = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        unresolved = np.arange(n)

        for k_nn in (1, min(6, self.points.shape[0])):
            if unresolved.size == 0:
                break
            qq = q[unresolved]
            _, vidx = self._vtree.query(qq, k=k_nn)
            if k_nn == 1:
                cand = self._vertex_faces[vidx]
            else:
                cand = self._vertex_faces[vidx].reshape(qq.shape[0], -1)
            b, ok = self._bary_of(qq, cand)
            inside = ok & (b.min(axis=-1) >= -tol)
            hit = inside.any(axis=1)
            first = np.argmax(inside, axis=1)
            rows = np.nonzero(hit)[0]
            gidx = unresolved[rows]
            face[gidx] = cand[rows, first[rows]]
            bary[gidx] = b[rows, first[rows]]
            unresolved = unresolved[~hit]

        if unresolved.size:
            qq = q[unresolved]
            k = min(16, self.faces.shape[0])
            _, cand = self._btree.query(qq, k=k)
            cand = np.atleast_2d(cand)
            b, ok = self._bary_of(qq, cand)
            inside = ok & (b.min(axis=-1) >= -tol)
            hit = inside.any(axis=1)
            first = np.argmax(inside, axis=1)
            rows = np.nonzero(hit)[0]
            gidx = unresolved[rows]
            face[gidx] = cand[rows, first[rows]]
            bary[gidx] = b[rows, first[rows]]
            unresolved = unresolved[~hit]

        clamped = np.zeros(n, dtype=bool)
        if unresolved.size:
            # outside the triangulation: clamp to the nearest face
            qq = q[unresolved]
            _, nf = self._btree.query(qq)
            b, _ = self._bary_of(qq, nf[:, None])
            face[unresolved] = nf
            bary[unresolved] = b[:, 0]
            clamped[unresolved] = True

        bary = np.clip(bary, 0.0, None)
        s = bary.sum(axis=1, keepdims=True)
        bary = bary / np.maximum(s, 1e-300)
        return face, bary, clamped
