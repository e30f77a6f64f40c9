"""Disk-topology triangle meshes: loading, normalization, sampling, integration.

The mesh is the raw 3D input of the whole pipeline. Everything here is
geometry-only plumbing: parsing OFF/OBJ/PLY, validating that the surface is a
manifold disk, area normalization, farthest-point sampling with cell areas for
rectangle-rule surface integration, and graph geodesics.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import InputError, MeshFormatError, TopologyError

__all__ = [
    "TriangleMesh",
    "SamplingSet",
    "load_mesh",
    "normalize_area",
    "centroid",
    "farthest_point_sample",
    "integrate",
    "geodesic_distance",
]


class TriangleMesh:
    """An embedded triangle mesh of disk topology.

    Parameters
    ----------
    vertices : (V, 3) array_like
        Vertex positions.
    faces : (F, 3) array_like
        Vertex indices per triangle, counterclockwise oriented.
    validate : bool
        Run the full manifold-disk validation. Internal callers that only
        moved vertices rigidly may skip it.

    Attributes
    ----------
    vertices : (V, 3) ndarray, read-only
    faces : (F, 3) ndarray, read-only
    boundary_loop : (B,) ndarray
        Ordered vertex indices of the single boundary loop, oriented so the
        surface lies to the left of each directed boundary edge.

    Notes
    -----
    Instances are immutable after construction and safe to share across
    threads. A mesh must be connected, edge- and vertex-manifold, have exactly
    one boundary loop and Euler characteristic V - E + F = 1, and contain no
    degenerate (zero-area) faces.
    """

    def __init__(self, vertices, faces, validate=True, _boundary_loop=None):
        v = np.ascontiguousarray(np.asarray(vertices, dtype=float))
        f = np.ascontiguousarray(np.asarray(faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise InputError("vertices must be an (V, 3) array")
        if f.ndim != 2 or f.shape[1] != 3:
            raise InputError("faces must be an (F, 3) array")
        self.vertices = v
        self.faces = f
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)
        self._cache = {}
        if validate:
            self._validate()
        elif _boundary_loop is not None:
            self.boundary_loop = _boundary_loop
        else:
            self.boundary_loop = _extract_boundary_loop(
                self.n_vertices, self.faces
            )

    # -- basic quantities ----------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    @property
    def face_areas(self):
        """Per-face areas, (F,)."""
        if "face_areas" not in self._cache:
            p = self.vertices[self.faces]
            cr = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
            self._cache["face_areas"] = 0.5 * np.linalg.norm(cr, axis=1)
        return self._cache["face_areas"]

    @property
    def area(self):
        """Total surface area."""
        return float(self.face_areas.sum())

    @property
    def edges(self):
        """Undirected edges as a sorted (E, 2) array."""
        if "edges" not in self._cache:
            he = np.concatenate(
                [self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]
            )
            und = np.sort(he, axis=1)
            self._cache["edges"] = np.unique(und, axis=0)
        return self._cache["edges"]

    @property
    def edge_lengths(self):
        if "edge_lengths" not in self._cache:
            e = self.edges
            self._cache["edge_lengths"] = np.linalg.norm(
                self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1
            )
        return self._cache["edge_lengths"]

    @property
    def max_edge_length(self):
        return float(self.edge_lengths.max())

    @property
    def edge_graph(self):
        """Symmetric sparse edge graph weighted by edge length."""
        if "edge_graph" not in self._cache:
            e, w = self.edges, self.edge_lengths
            n = self.n_vertices
            g = coo_matrix(
                (np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]),
                                          np.concatenate([e[:, 1], e[:, 0]]))),
                shape=(n, n),
            ).tocsr()
            self._cache["edge_graph"] = g
        return self._cache["edge_graph"]

    @property
    def is_boundary_vertex(self):
        """Boolean mask of boundary vertices, (V,)."""
        if "is_boundary" not in self._cache:
            mask = np.zeros(self.n_vertices, dtype=bool)
            mask[self.boundary_loop] = True
            self._cache["is_boundary"] = mask
        return self._cache["is_boundary"]

    def with_vertices(self, vertices):
        """Copy of this mesh with new vertex positions, same topology."""
        return TriangleMesh(
            vertices, self.faces, validate=False, _boundary_loop=self.boundary_loop
        )

    # -- validation ----------------------------------------------------------

    def _validate(self):
        v, f = self.vertices, self.faces
        nv = v.shape[0]
        if f.size == 0:
            raise TopologyError("mesh has no faces")
        if f.min() < 0 or f.max() >= nv:
            raise InputError("face index out of range")
        if not np.isfinite(v).all():
            raise InputError("non-finite vertex coordinate")

        # degenerate faces: repeated indices or (numerically) zero area
        same = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
        if same.any():
            raise InputError("degenerate face (repeated vertex index)")
        scale = np.linalg.norm(v.max(axis=0) - v.min(axis=0))
        tol = 1e-12 * max(scale, 1.0) ** 2
        if (self.face_areas <= tol).any():
            k = int(np.argmax(self.face_areas <= tol))
            raise InputError(f"degenerate face {k} (zero area)")

        referenced = np.zeros(nv, dtype=bool)
        referenced[f] = True
        if not referenced.all():
            raise TopologyError("unreferenced vertices present")

        he = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        key = he[:, 0] * nv + he[:, 1]
        if np.unique(key).size != key.size:
            raise TopologyError(
                "non-manifold or inconsistently oriented mesh "
                "(a directed edge appears twice)"
            )

        n_edges = self.edges.shape[0]
        chi = nv - n_edges + f.shape[0]

        self.boundary_loop = _extract_boundary_loop(nv, f)

        n_comp, _ = connected_components(self.edge_graph, directed=False)
        if n_comp != 1:
            raise TopologyError("mesh is not connected")
        if chi != 1:
            raise TopologyError(
                f"topology not a disk (Euler characteristic {chi}, expected 1)"
            )


def _extract_boundary_loop(n_vertices, faces):
    """Ordered single boundary loop, or raise TopologyError."""
    he = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    key = he[:, 0] * n_vertices + he[:, 1]
    rkey = he[:, 1] * n_vertices + he[:, 0]
    skey = np.sort(key)
    has_twin = skey[np.searchsorted(skey, rkey).clip(0, skey.size - 1)] == rkey
    bd = he[~has_twin]
    if bd.shape[0] == 0:
        raise TopologyError("topology not a disk (closed surface, no boundary)")
    if np.unique(bd[:, 0]).size != bd.shape[0]:
        raise TopologyError("non-manifold vertex on the boundary")
    nxt = dict(zip(bd[:, 0].tolist(), bd[:, 1].tolist()))
    start = int(bd[:, 0].min())
    loop = [start]
    cur = nxt[start]
    while cur != start:
        loop.append(cur)
        cur = nxt.get(cur)
        if cur is None or len(loop) > bd.shape[0]:
            raise TopologyError("boundary is not a single closed loop")
    if len(loop) != bd.shape[0]:
        raise TopologyError("topology not a disk (more than one boundary loop)")
    return np.asarray(loop, dtype=np.int64)


# -- file loading -------------------------------------------------------------


def load_mesh(source, fmt=None):
    """Load a triangle mesh from an OFF, OBJ or PLY (ASCII) source.

    Parameters
    ----------
    source : path, bytes or file-like
        Mesh data. For paths the format is inferred from the suffix unless
        ``fmt`` is given.
    fmt : {"off", "obj", "ply"}, optional

    Returns
    -------
    TriangleMesh
        Validated manifold disk mesh with its boundary loop extracted.

    Raises
    ------
    MeshFormatError
        On parse failure or unsupported constructs.
    TopologyError
        If the surface is not a manifold disk.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if fmt is None:
            fmt = path.suffix.lstrip(".").lower()
        data = path.read_bytes()
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()
        if isinstance(data, str):
            data = data.encode()
    if fmt is None:
        raise MeshFormatError("format must be given for non-path sources")
    fmt = fmt.lower()
    try:
        text = data.decode("utf-8", errors="replace")
    except Exception as exc:  # pragma: no cover
        raise MeshFormatError(f"cannot decode mesh data: {exc}") from exc
    if fmt == "off":
        v, f = _parse_off(text)
    elif fmt == "obj":
        v, f = _parse_obj(text)
    elif fmt == "ply":
        v, f = _parse_ply(text)
    else:
        raise MeshFormatError(f"unsupported mesh format {fmt!r}")
    return TriangleMesh(v, f)


def _tokens(text):
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        for tok in line.split():
            yield tok


def _parse_off(text):
    it = _tokens(text)
    try:
        first = next(it)
        if first.upper() != "OFF":
            raise MeshFormatError("missing OFF header")
        nv, nf = int(next(it)), int(next(it))
        next(it)  # edge count, ignored
        verts = [[float(next(it)) for _ in range(3)] for _ in range(nv)]
        faces = []
        for _ in range(nf):
            k = int(next(it))
            idx = [int(next(it)) for _ in range(k)]
            if k != 3:
                raise MeshFormatError("only triangular faces are supported")
            faces.append(idx)
    except StopIteration:
        raise MeshFormatError("truncated OFF file") from None
    except ValueError as exc:
        raise MeshFormatError(f"malformed OFF file: {exc}") from None
    return np.array(verts, float), np.array(faces, np.int64)


def _parse_obj(text):
    verts, faces = [], []
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                if len(idx) != 3:
                    raise MeshFormatError(
                        f"line {ln}: only triangular faces are supported"
                    )
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                faces.append(idx)
        except (ValueError, IndexError) as exc:
            raise MeshFormatError(f"malformed OBJ line {ln}: {exc}") from None
    if not verts or not faces:
        raise MeshFormatError("OBJ file contains no usable geometry")
    return np.array(verts, float), np.array(faces, np.int64)


def _parse_ply(text):
    lines = iter(text.splitlines())
    try:
        if next(lines).strip() != "ply":
            raise MeshFormatError("missing ply header")
        n_vert = n_face = None
        order = []  # (element, count)
        vprops = []
        cur = None
        for line in lines:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "format":
                if parts[1] != "ascii":
                    raise MeshFormatError("only ASCII PLY is supported")
            elif parts[0] == "element":
                cur = parts[1]
                order.append((parts[1], int(parts[2])))
                if parts[1] == "vertex":
                    n_vert = int(parts[2])
                elif parts[1] == "face":
                    n_face = int(parts[2])
            elif parts[0] == "property" and cur == "vertex":
                vprops.append(parts[-1])
            elif parts[0] == "end_header":
                break
        if n_vert is None or n_face is None:
            raise MeshFormatError("PLY header lacks vertex or face element")
        try:
            ix, iy, iz = vprops.index("x"), vprops.index("y"), vprops.index("z")
        except ValueError:
            raise MeshFormatError("PLY vertex element lacks x/y/z") from None
        verts = np.empty((n_vert, 3))
        faces = []
        for element, count in order:
            for k in range(count):
                row = next(lines).split()
                if element == "vertex":
                    verts[k] = [float(row[ix]), float(row[iy]), float(row[iz])]
                elif element == "face":
                    n = int(row[0])
                    if n != 3:
                        raise MeshFormatError(
                            "only triangular faces are supported"
                        )
                    faces.append([int(row[1]), int(row[2]), int(row[3])])
                # other elements are skipped row-wise
    except StopIteration:
        raise MeshFormatError("truncated PLY file") from None
    except ValueError as exc:
        raise MeshFormatError(f"malformed PLY file: {exc}") from None
    return verts, np.array(faces, np.int64)


# -- normalization and integration --------------------------------------------


def centroid(mesh):
    """Area-weighted surface centroid.

    Integrates the position over the piecewise-linear surface exactly
    (triangle centroid times triangle area) rather than averaging vertices.
    """
    bary = mesh.vertices[mesh.faces].mean(axis=1)
    a = mesh.face_areas
    return (bary * a[:, None]).sum(axis=0) / a.sum()


def normalize_area(mesh):
    """Rescale to unit surface area and move the centroid to the origin.

    Returns a new mesh; idempotent up to floating-point roundoff.
    """
    a = mesh.area
    if a <= 0:
        raise InputError("mesh has zero total area")
    c = centroid(mesh)
    return mesh.with_vertices((mesh.vertices - c) / np.sqrt(a))


@dataclass
class SamplingSet:
    """Farthest-point sample of a mesh with rectangle-rule cell areas.

    Attributes
    ----------
    sample_indices : (L,) ndarray
        Sampled vertex indices, in selection order.
    voronoi_areas : (L,) ndarray
        Surface area of each sample's cell; positive, sums to the total
        mesh area.
    fill_distance : float
        Radius of the largest sampling hole, measured over vertices and
        face barycenters with graph-geodesic distances.
    """

    sample_indices: np.ndarray
    voronoi_areas: np.ndarray
    fill_distance: float

    def __len__(self):
        return self.sample_indices.shape[0]

    def to_json(self):
        return json.dumps(
            {
                "sample_indices": self.sample_indices.tolist(),
                "voronoi_areas": self.voronoi_areas.tolist(),
                "fill_distance": self.fill_distance,
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            np.asarray(d["sample_indices"], dtype=np.int64),
            np.asarray(d["voronoi_areas"], dtype=float),
            float(d["fill_distance"]),
        )


def farthest_point_sample(mesh, L, seed_vertex=0):
    """Greedy farthest-point sampling with graph-geodesic distances.

    Each new sample maximizes the distance to the already-selected set.
    Cell areas are assigned at face-corner granularity: a third of each
    face's area is credited to the sample nearest each of its corners,
    which keeps every cell non-empty for any L up to V.

    Parameters
    ----------
    mesh : TriangleMesh
    L : int
        Number of samples, 1 <= L <= V.
    seed_vertex : int
        First sample.

    Returns
    -------
    SamplingSet
    """
    nv = mesh.n_vertices
    if not 1 <= L <= nv:
        raise InputError(f"sample count L={L} out of range [1, {nv}]")
    if not 0 <= seed_vertex < nv:
        raise InputError("seed vertex out of range")
    graph = mesh.edge_graph
    nearest = np.full(nv, np.inf)
    owner = np.full(nv, -1, dtype=np.int64)
    order = np.empty(L, dtype=np.int64)
    cur = int(seed_vertex)
    for k in range(L):
        order[k] = cur
        d = dijkstra(graph, directed=False, indices=cur)
        upd = d < nearest
        nearest[upd] = d[upd]
        owner[upd] = k
        if k + 1 < L:
            cur = int(np.argmax(nearest))

    areas = np.zeros(L)
    np.add.at(
        areas, owner[mesh.faces].ravel(), np.repeat(mesh.face_areas / 3.0, 3)
    )

    # fill distance over vertices and face barycenters: the barycenter term
    # keeps the estimate positive even at L = V
    fill_v = float(nearest.max())
    p = mesh.vertices[mesh.faces]
    bary = p.mean(axis=1)
    corner_to_bary = np.linalg.norm(p - bary[:, None, :], axis=2)
    fill_b = float((nearest[mesh.faces] + corner_to_bary).min(axis=1).max())
    return SamplingSet(order, areas, max(fill_v, fill_b))


def integrate(mesh, samples, f):
    """Rectangle-rule surface integral using a sampling set.

    Parameters
    ----------
    mesh : TriangleMesh
    samples : SamplingSet
        Must have been computed from ``mesh``.
    f : callable or array_like
        Function evaluated at the (L, 3) sample positions, returning (L,) or
        (L, d) values, or the precomputed values themselves.

    Returns
    -------
    float or ndarray
        sum_l f(q_l) * area_l.
    """
    idx = samples.sample_indices
    if idx.max() >= mesh.n_vertices or len(samples.voronoi_areas) != len(idx):
        raise InputError("sampling set does not match the mesh")
    pts = mesh.vertices[idx]
    vals = np.asarray(f(pts) if callable(f) else f, dtype=float)
    if vals.shape[0] != len(idx):
        raise InputError("f returned a value per-sample mismatch")
    w = samples.voronoi_areas
    out = (vals * w) .sum() if vals.ndim == 1 else (vals * w[:, None]).sum(axis=0)
    return float(out) if np.ndim(out) == 0 else out


def geodesic_distance(mesh, a, b):
    """Shortest-path distance between vertices on the edge graph."""
    nv = mesh.n_vertices
    if not (0 <= a < nv and 0 <= b < nv):
        raise InputError("vertex index out of range")
    if a == b:
        return 0.0
    d = dijkstra(mesh.edge_graph, directed=False, indices=int(a))
    return float(d[int(b)])
