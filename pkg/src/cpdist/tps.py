"""Thin-plate-spline alignment of density extrema inside the disk.

The spline is fitted in stretched coordinates chi(z) so that the sandwiched
map chi_inverse o TPS o chi keeps the unit disk inside itself. The default
profile stretches the disk onto the whole plane with atanh; the alternative
atan profile (available by configuration) only reaches a radius-pi/4 disk and
is therefore clamped radially after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, TPSFitError
from .mobius import hyperbolic_distance

__all__ = [
    "TPSMap",
    "chi",
    "chi_inv",
    "mutually_closest_pairs",
    "fit_tps",
    "apply_zeta",
    "build_zeta",
]

_PROFILES = ("atanh", "atan")
_EDGE = 1.0 - 1e-12
_CLAMP = 1.0 - 1e-9


def _check_profile(profile):
    if profile not in _PROFILES:
        raise InputError(f"unknown chi profile {profile!r}")


def chi(z, profile="atanh"):
    """Radial stretch of the open disk, fixing directions and the origin."""
    _check_profile(profile)
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    if (r >= 1.0).any():
        raise InputError("chi requires |z| < 1")
    stretch = np.arctanh(r) if profile == "atanh" else np.arctan(r)
    with np.errstate(invalid="ignore"):
        u = np.where(r > 0, z / np.where(r > 0, r, 1.0), 0.0)
    out = stretch * u
    return complex(out) if out.ndim == 0 else out


def chi_inv(w, profile="atanh"):
    """Inverse radial stretch; chi_inv(chi(z)) = z."""
    _check_profile(profile)
    w = np.asarray(w, dtype=complex)
    r = np.abs(w)
    if profile == "atanh":
        back = np.tanh(r)
    else:
        rr = np.minimum(r, (np.pi / 2.0) * _EDGE)
        back = np.tan(rr)
    with np.errstate(invalid="ignore"):
        u = np.where(r > 0, w / np.where(r > 0, r, 1.0), 0.0)
    out = back * u
    return complex(out) if out.ndim == 0 else out


def mutually_closest_pairs(src, dst):
    """Mutually nearest pairs in the hyperbolic metric, ties excluded.

    A pair (p, q) qualifies when q is strictly closer to p than any other
    destination point and p is strictly closer to q than any other source
    point.

    Returns
    -------
    list of (complex, complex)
    """
    ps = np.asarray(list(src), dtype=complex)
    qs = np.asarray(list(dst), dtype=complex)
    if ps.size == 0 or qs.size == 0:
        return []
    D = hyperbolic_distance(ps[:, None], qs[None, :])
    D = np.atleast_2d(D)
    pairs = []
    for i in range(ps.size):
        j = int(np.argmin(D[i]))
        dij = D[i, j]
        row_others = np.delete(D[i], j)
        col_others = np.delete(D[:, j], i)
        if row_others.size and dij >= row_others.min():
            continue
        if col_others.size and dij >= col_others.min():
            continue
        pairs.append((complex(ps[i]), complex(qs[j])))
    return pairs


@dataclass
class TPSMap:
    """Thin-plate spline in stretched coordinates with its chi profile.

    T(w) = a0 + a1 w + a2 conj(w) + sum_i b_i r^2 log r, r = |w - P_i|.
    The fitted weights satisfy sum b = 0 and sum b P = 0.
    """

    control_src: np.ndarray
    control_dst: np.ndarray
    affine: tuple  # (a0, a1, a2) complex
    kernel_weights: np.ndarray
    profile: str = "atanh"

    @classmethod
    def identity(cls, profile="atanh"):
        empty = np.zeros(0, dtype=complex)
        return cls(empty, empty, (0j, 1.0 + 0j, 0j), empty, profile)

    @property
    def is_identity(self):
        a0, a1, a2 = self.affine
        return (
            self.kernel_weights.size == 0
            and a0 == 0
            and a1 == 1.0 + 0j
            and a2 == 0
        )

    def evaluate(self, w):
        """Evaluate the spline in the stretched plane."""
        w = np.asarray(w, dtype=complex)
        a0, a1, a2 = self.affine
        out = a0 + a1 * w + a2 * np.conj(w)
        if self.kernel_weights.size:
            r = np.abs(w[..., None] - self.control_src)
            with np.errstate(divide="ignore", invalid="ignore"):
                k = np.where(r > 0, r * r * np.log(np.where(r > 0, r, 1.0)), 0.0)
            out = out + k @ self.kernel_weights
        return out


def _kernel_matrix(P):
    r = np.abs(P[:, None] - P[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(r > 0, r * r * np.log(np.where(r > 0, r, 1.0)), 0.0)
    return K


def fit_tps(pairs, profile="atanh"):
    """Interpolating thin-plate spline through (P_j, Q_j) control pairs.

    Solves the (n+3) x (n+3) system with the r^2 log r kernel and a full
    planar affine part. Structurally rank-deficient cases (n < 3, collinear
    controls) are solved in the minimum-norm sense, which yields the natural
    affine solution.

    Parameters
    ----------
    pairs : sequence of (complex, complex)
        Controls in the stretched (chi) plane; sources pairwise distinct.
    profile : str
        chi profile recorded on the returned map.

    Returns
    -------
    TPSMap

    Raises
    ------
    TPSFitError
        On coincident controls, or when the solve fails to reproduce the
        controls (``ill_conditioned_tps``).
    """
    _check_profile(profile)
    pairs = list(pairs)
    n = len(pairs)
    if n == 0:
        return TPSMap.identity(profile)
    P = np.asarray([p for p, _ in pairs], dtype=complex)
    Q = np.asarray([q for _, q in pairs], dtype=complex)
    if n > 1:
        dmin = min(
            abs(P[i] - P[j]) for i in range(n) for j in range(i + 1, n)
        )
        if dmin < 1e-12:
            raise TPSFitError("coincident TPS control points")

    K = _kernel_matrix(P)
    A = np.column_stack([np.ones(n), P.real, P.imag])
    L = np.zeros((n + 3, n + 3))
    L[:n, :n] = K
    L[:n, n:] = A
    L[n:, :n] = A.T
    rhs = np.concatenate([Q, np.zeros(3, dtype=complex)])
    sol, *_ = np.linalg.lstsq(L, rhs, rcond=None)
    b = sol[:n]
    c0, c1, c2 = sol[n:]
    # complex affine form from the real-coefficient basis [1, x, y]
    a0 = c0
    a1 = (c1 - 1j * c2) / 2.0
    a2 = (c1 + 1j * c2) / 2.0
    tmap = TPSMap(P, Q, (a0, a1, a2), b, profile)

    resid = np.abs(tmap.evaluate(P) - Q)
    scale = 1.0 + np.abs(Q).max()
    if resid.max() > 1e-8 * scale:
        raise TPSFitError(
            f"ill_conditioned_tps: control residual {resid.max():.3e}"
        )
    return tmap


def apply_zeta(tmap, z):
    """The disk deformation chi_inverse o TPS o chi at points z.

    Under the atanh profile the result always lies in the closed disk;
    under the atan profile the result is clamped radially at 1 - 1e-9.
    """
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if tmap.is_identity:
        out = z.copy()
    else:
        r = np.abs(z)
        zin = np.where(r > _EDGE, z * (_EDGE / np.where(r > 0, r, 1.0)), z)
        out = chi_inv(tmap.evaluate(chi(zin, tmap.profile)), tmap.profile)
        if tmap.profile == "atan":
            r = np.abs(out)
            out = np.where(r > _CLAMP, out * (_CLAMP / np.maximum(r, 1e-300)), out)
    return complex(out[0]) if scalar else out


def build_zeta(disk_pairs, profile="atanh", boundary_limit=0.99, min_pairs=2):
    """Fit the disk deformation from mutually-closest extremum pairs.

    Pairs with either endpoint within ``boundary_limit`` of the circle are
    dropped (the stretch blows up there); with fewer than ``min_pairs``
    survivors the identity map is returned, since an under-constrained warp
    only adds distortion.
    """
    kept = [
        (p, q)
        for p, q in disk_pairs
        if abs(p) <= boundary_limit and abs(q) <= boundary_limit
    ]
    if len(kept) < min_pairs:
        return TPSMap.identity(profile)
    chi_pairs = [(chi(p, profile), chi(q, profile)) for p, q in kept]
    return fit_tps(chi_pairs, profile)
