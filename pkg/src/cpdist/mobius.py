"""Automorphisms of the unit disk and the candidate search family.

A disk automorphism is e^(i*theta) (z - a) / (1 - conj(a) z) with |a| < 1;
the orientation-reversing variant conjugates its argument first. Candidates
for the correspondence search are generated from pairs of density extrema
with a discretized rotational degree of freedom.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = [
    "MobiusTransform",
    "PRESERVING",
    "REVERSING",
    "apply",
    "derivative_modulus_sq",
    "compose",
    "inverse",
    "from_point_angle",
    "candidate_set",
    "hyperbolic_distance",
]

log = logging.getLogger(__name__)

PRESERVING = "preserving"
REVERSING = "reversing"

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class MobiusTransform:
    """Disk automorphism parameters (theta, a, orientation)."""

    theta: float
    a: complex
    orientation: str = PRESERVING

    def __post_init__(self):
        if abs(self.a) >= 1.0:
            raise InputError("Mobius parameter a must satisfy |a| < 1")
        if self.orientation not in (PRESERVING, REVERSING):
            raise InputError(f"unknown orientation {self.orientation!r}")
        object.__setattr__(self, "theta", float(self.theta) % _TWO_PI)
        object.__setattr__(self, "a", complex(self.a))

    @classmethod
    def identity(cls):
        return cls(0.0, 0.0 + 0.0j)

    @property
    def reversing(self):
        return self.orientation == REVERSING

    def __call__(self, z):
        return apply(self, z)


def apply(m, z):
    """Evaluate the transform at complex points (scalar or array)."""
    z = np.asarray(z, dtype=complex)
    if m.reversing:
        z = np.conj(z)
    w = np.exp(1j * m.theta) * (z - m.a) / (1.0 - z * np.conj(m.a))
    return complex(w) if w.ndim == 0 else w


def derivative_modulus_sq(m, z):
    """|m'(z)|^2, the local area scale of the transform.

    For orientation-reversing transforms the derivative is taken of the
    analytic part at conj(z); the area scale is the same expression.
    """
    z = np.asarray(z, dtype=complex)
    if m.reversing:
        z = np.conj(z)
    d = (1.0 - abs(m.a) ** 2) / np.abs(1.0 - z * np.conj(m.a)) ** 2
    out = d * d
    return float(out) if out.ndim == 0 else out


def _matrix(theta, a):
    e = np.exp(1j * theta)
    return np.array([[e, -e * a], [-np.conj(a), 1.0]], dtype=complex)


def _params(M):
    """Standard-form (theta, a) of a disk-automorphism matrix."""
    al, be, ga, de = M.ravel()
    if abs(de) < 1e-300:
        raise InputError("matrix does not represent a disk automorphism")
    e = al / de
    a = -np.conj(ga / de)
    mod = abs(e)
    if not (0.5 < mod < 2.0) or abs(a) >= 1.0:
        raise InputError("matrix does not represent a disk automorphism")
    # consistency of the off-diagonal term: be/de should equal -e*a
    if abs(be / de + e * a) > 1e-6 * max(1.0, abs(e * a)):
        raise InputError("matrix does not represent a disk automorphism")
    return float(np.angle(e)) % _TWO_PI, complex(a)


def _conj_params(m):
    """Mobius part of conj o m o conj: theta -> -theta, a -> conj(a)."""
    return -m.theta, np.conj(m.a)


def compose(m1, m2):
    """The transform z -> m1(m2(z))."""
    if not m1.reversing:
        M = _matrix(m1.theta, m1.a) @ _matrix(m2.theta, m2.a)
        orient = m2.orientation
    else:
        th2, a2 = _conj_params(m2)
        M = _matrix(m1.theta, m1.a) @ _matrix(th2, a2)
        orient = PRESERVING if m2.reversing else REVERSING
    theta, a = _params(M)
    return MobiusTransform(theta, a, orient)


def inverse(m):
    """The transform with inverse(m)(m(z)) = z."""
    M = _matrix(m.theta, m.a)
    Minv = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]])
    theta, a = _params(Minv)
    if m.reversing:
        theta, a = -theta % _TWO_PI, np.conj(a)
    return MobiusTransform(theta, a, m.orientation)


def from_point_angle(p, q, theta, orientation=PRESERVING):
    """Transform taking p to q with rotational freedom theta.

    Built as rotation by theta (after conjugation, for reversing maps)
    followed by the unique pure disk translation taking the rotated p to q.
    The map theta -> transform is injective on [0, 2*pi).
    """
    p, q = complex(p), complex(q)
    if abs(p) >= 1.0 or abs(q) >= 1.0:
        raise InputError("anchor points must lie strictly inside the disk")
    p0 = np.conj(p) if orientation == REVERSING else p
    w0 = np.exp(1j * theta) * p0
    denom = 1.0 - abs(q * w0) ** 2
    a = (w0 * (1.0 - abs(q) ** 2) - q * (1.0 - abs(w0) ** 2)) / denom
    # standard form of T_a o R_theta: same angle, rotated translation
    return MobiusTransform(theta, np.exp(-1j * theta) * a, orientation)


def candidate_set(extrema_m, extrema_n, K=32, return_anchors=False):
    """All candidate transforms from extremum pairs and K angles.

    Parameters
    ----------
    extrema_m, extrema_n : ExtremaSet or sequence of complex
        Anchor points on either surface's disk.
    K : int
        Number of rotation angles 2*pi*k/K.
    return_anchors : bool
        Also return the generating (p, q) pair per candidate.

    Returns
    -------
    list of MobiusTransform
        Both orientations for every pair and angle, deduplicated at 1e-8
        parameter tolerance. If either extremum set is empty, a fallback
        family anchored at the disk centers is generated (logged).
    """
    if K < 1:
        raise InputError("K must be at least 1")
    ps = _positions(extrema_m)
    qs = _positions(extrema_n)
    if len(ps) == 0 or len(qs) == 0:
        log.warning("empty extrema set; falling back to center-anchored candidates")
        ps = ps if len(ps) else np.array([0j])
        qs = qs if len(qs) else np.array([0j])
    tol = 1e-8
    seen = set()
    out = []
    anchors = []
    thetas = _TWO_PI * np.arange(K) / K
    for p in ps:
        for q in qs:
            for th in thetas:
                for orient in (PRESERVING, REVERSING):
                    m = from_point_angle(p, q, th, orient)
                    key = (
                        int(round(m.theta / tol)) % int(round(_TWO_PI / tol)),
                        int(round(m.a.real / tol)),
                        int(round(m.a.imag / tol)),
                        orient,
                    )
                    if key in seen:
                        continue
                    seen.add(key)
                    out.append(m)
                    anchors.append((complex(p), complex(q)))
    return (out, anchors) if return_anchors else out


def _positions(extrema):
    if hasattr(extrema, "positions"):
        return np.asarray(extrema.positions, dtype=complex)
    return np.asarray(list(extrema), dtype=complex)


def hyperbolic_distance(p, q):
    """Poincare-disk distance atanh |(p - q) / (1 - p conj(q))|."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    if (np.abs(p) >= 1.0).any() or (np.abs(q) >= 1.0).any():
        raise InputError("hyperbolic distance requires |p|, |q| < 1")
    d = np.arctanh(np.abs((p - q) / (1.0 - p * np.conj(q))))
    return float(d) if d.ndim == 0 else d
