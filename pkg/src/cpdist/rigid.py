"""Rigid alignment and Procrustes distances for weighted point sequences.

The closed-form optimum over rotations, reflections and translations comes
from the SVD of the weighted cross-covariance; the same machinery evaluates
the surface alignment energy for a sampled correspondence, with sample cell
areas as weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

__all__ = [
    "RigidMotion",
    "PointSequence",
    "centroid_size",
    "optimal_rigid",
    "discrete_procrustes",
    "procrustes_energy",
]

_DEGENERATE_REL_TOL = 1e-9


@dataclass(frozen=True)
class RigidMotion:
    """A Euclidean motion x -> U x + t with orthogonal U (det = +-1).

    ``degenerate`` flags a rank-deficient fit where the optimal U is not
    unique (the returned one is still a valid minimizer).
    """

    U: np.ndarray
    t: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float).reshape(3, 3)
        t = np.asarray(self.t, dtype=float).reshape(3)
        U.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.U.T + self.t

    def inverse(self):
        return RigidMotion(self.U.T, -self.U.T @ self.t, self.degenerate)

    @property
    def determinant(self):
        return float(np.linalg.det(self.U))

    def to_json(self):
        return json.dumps({"U": self.U.ravel().tolist(), "t": self.t.tolist()})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(np.asarray(d["U"]).reshape(3, 3), np.asarray(d["t"]))


@dataclass
class PointSequence:
    """An ordered sequence of 3D points with positive weights summing to 1."""

    points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 1:
            raise InputError("points must be a non-empty (n, 3) array")
        if self.weights is None:
            w = np.full(p.shape[0], 1.0 / p.shape[0])
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (p.shape[0],):
                raise InputError("weights must match the number of points")
            if (w <= 0).any():
                raise InputError("weights must be positive")
            if abs(w.sum() - 1.0) > 1e-6:
                raise InputError("weights must sum to 1")
        self.points = p
        self.weights = w

    def __len__(self):
        return self.points.shape[0]

    @property
    def centroid(self):
        return self.weights @ self.points


def centroid_size(X):
    """Weighted root-mean-square spread about the centroid.

    S = [sum_i w_i ||x_i - xbar||^2]^(1/2). Translation invariant and
    homogeneous of degree 1 under scaling.
    """
    d = X.points - X.centroid
    s = float(np.sqrt(X.weights @ (d * d).sum(axis=1)))
    if s == 0.0:
        raise InputError("centroid size is zero (all points coincide)")
    return s


def _weighted_rigid_fit(x, y, w):
    """Minimize sum w_i ||U x_i + t - y_i||^2 over orthogonal U and t.

    Returns (motion, squared_residual). Reflections are allowed.
    """
    wn = w / w.sum()
    xbar = wn @ x
    ybar = wn @ y
    xc = x - xbar
    yc = y - ybar
    cov = (xc * wn[:, None]).T @ yc  # sum w (x - xbar)(y - ybar)^T
    Q, s, Wh = np.linalg.svd(cov)
    U = Wh.T @ Q.T
    degenerate = bool(s[0] <= 0 or s[-1] <= _DEGENERATE_REL_TOL * s[0])
    t = ybar - U @ xbar
    r = xc @ U.T - yc
    res2 = float(w @ (r * r).sum(axis=1))
    return RigidMotion(U, t, degenerate), max(res2, 0.0)


def optimal_rigid(X, Y):
    """Optimal rigid motion (reflections allowed) taking X onto Y.

    Parameters
    ----------
    X, Y : PointSequence
        Equal length, matching weights.

    Returns
    -------
    RigidMotion
        argmin over motions of sum_i w_i ||R x_i - y_i||^2. When the
        weighted cross-covariance is rank deficient the optimum is not
        unique; a valid maximizer is returned with ``degenerate=True``.
    """
    if len(X) != len(Y):
        raise InputError("sequences must have equal length")
    if not np.allclose(X.weights, Y.weights):
        raise InputError("sequences must carry matching weights")
    motion, _ = _weighted_rigid_fit(X.points, Y.points, X.weights)
    return motion


def discrete_procrustes(X, Y):
    """Procrustes distance between two size-normalized point sequences.

    Each sequence is centered and divided by its centroid size, then the
    minimal weighted root-sum-square residual over rigid motions (including
    reflections) is returned together with the minimizing motion.

    Returns
    -------
    (float, RigidMotion)
    """
    if len(X) != len(Y):
        raise InputError("sequences must have equal length")
    xs = (X.points - X.centroid) / centroid_size(X)
    ys = (Y.points - Y.centroid) / centroid_size(Y)
    motion, res2 = _weighted_rigid_fit(xs, ys, X.weights)
    return float(np.sqrt(res2)), motion


def procrustes_energy(mesh, samples, images):
    """Surface alignment energy of a sampled correspondence.

    Evaluates inf over rigid motions of the integral of ||R x - C x||^2 by
    the rectangle rule: the covariance and residual integrals are weighted
    sums over the sample set with its cell areas.

    Parameters
    ----------
    mesh : TriangleMesh
        Source surface, assumed unit-area and centered.
    samples : SamplingSet
        Sampling of ``mesh``.
    images : (L, 3) array_like
        Correspondence images C(q_l) of the sample points.

    Returns
    -------
    (float, RigidMotion)
        The energy [sum_l ||R* q_l - C q_l||^2 A_l]^(1/2) and R*.
    """
    idx = samples.sample_indices
    imgs = np.asarray(images, dtype=float)
    if imgs.shape != (len(idx), 3):
        raise InputError("images must be an (L, 3) array matching the samples")
    pts = mesh.vertices[idx]
    w = samples.voronoi_areas
    motion, res2 = _weighted_rigid_fit(pts, imgs, w)
    return float(np.sqrt(res2)), motion
