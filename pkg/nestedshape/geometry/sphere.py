"""Riemannian geometry of the unit sphere S^d.

Points are stored as unit vectors in R^{d+1}. The public operations accept a
`SpherePoint` or any array-like; the `*_points` helpers are the vectorised
forms used by the nested-sphere fitting code, with one point per row.
"""
import logging
from dataclasses import dataclass

import numpy as np

from nestedshape.errors import (
    AntipodalError,
    DimensionError,
    NonUniqueMeanError,
    ProjectionUndefined,
    RangeError,
    UnderdeterminedError,
    ValidationError,
)

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-12
TANGENT_TOL = 1e-10
ANTIPODAL_TOL = 1e-9
AXIS_TOL = 1e-12
TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SpherePoint:
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).ravel()
        if coords.size < 2:
            raise DimensionError(f"a point on S^d needs d >= 1, got {coords.size} coordinates")
        norm = np.linalg.norm(coords)
        if abs(norm - 1.0) > UNIT_TOL:
            raise ValidationError(f"sphere point has norm {norm!r}, expected 1")
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)

    @classmethod
    def normalized(cls, vector):
        vector = np.asarray(vector, dtype=float).ravel()
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise ValidationError("cannot normalise the zero vector")
        return cls(vector / norm)

    @property
    def dim(self):
        return self.coords.size - 1

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    def __len__(self):
        return self.coords.size


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: SpherePoint
    vec: np.ndarray

    def __post_init__(self):
        base = self.base if isinstance(self.base, SpherePoint) else SpherePoint(self.base)
        vec = np.asarray(self.vec, dtype=float).ravel()
        if vec.shape != base.coords.shape:
            raise DimensionError(f"tangent vector of length {vec.size} at a point of S^{base.dim}")
        if abs(vec @ base.coords) > TANGENT_TOL:
            raise ValidationError("tangent vector is not orthogonal to its base point")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "vec", vec)

    @property
    def norm(self):
        return float(np.linalg.norm(self.vec))


@dataclass(frozen=True, eq=False)
class Subsphere:
    """The subsphere A(v, r) = {x : rho(v, x) = r}; a great subsphere when r = pi/2."""

    axis: SpherePoint
    radius: float

    def __post_init__(self):
        axis = self.axis if isinstance(self.axis, SpherePoint) else SpherePoint(self.axis)
        radius = float(self.radius)
        if not 0.0 < radius <= np.pi / 2:
            raise RangeError(f"subsphere radius {radius!r} outside (0, pi/2]")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "radius", radius)


def _coords(x):
    return np.asarray(x, dtype=float)


def _check_same_dim(x, y):
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]} coordinates")


def spherical_distance(x, y):
    """Great-circle distance in [0, pi].

    Evaluated as 2*atan2(|x - y|, |x + y|), which equals the arccos of the
    clamped inner product but keeps full precision near 0 and pi.
    """
    x, y = _coords(x), _coords(y)
    _check_same_dim(x, y)
    return float(2.0 * np.arctan2(np.linalg.norm(x - y), np.linalg.norm(x + y)))


def distances_to(points, v):
    """Row-wise spherical distance from each row of `points` to `v`."""
    points, v = np.atleast_2d(_coords(points)), _coords(v)
    _check_same_dim(points, v)
    return 2.0 * np.arctan2(np.linalg.norm(points - v, axis=1), np.linalg.norm(points + v, axis=1))


def exp_points(base, vecs):
    """Exponential map at `base` for a stack of tangent vectors (rows)."""
    base, vecs = _coords(base), np.atleast_2d(_coords(vecs))
    norms = np.linalg.norm(vecs, axis=1)
    out = np.tile(base, (vecs.shape[0], 1))
    moving = norms > 0
    if np.any(moving):
        t = norms[moving][:, None]
        out[moving] = base * np.cos(t) + vecs[moving] / t * np.sin(t)
        out[moving] /= np.linalg.norm(out[moving], axis=1, keepdims=True)
    return out


def exp_map(t):
    """base*cos|v| + v/|v|*sin|v|; the zero vector maps to `base` exactly."""
    if not isinstance(t, TangentVector):
        raise ValidationError("exp_map expects a TangentVector")
    return SpherePoint(exp_points(t.base.coords, t.vec)[0])


def log_map(base, x):
    base = base if isinstance(base, SpherePoint) else SpherePoint(base)
    x = _coords(x)
    _check_same_dim(base.coords, x)
    rho = spherical_distance(base, x)
    if rho >= np.pi - ANTIPODAL_TOL:
        raise AntipodalError(f"log map undefined at distance {rho!r} (antipodal point)")
    u = x - (x @ base.coords) * base.coords
    norm = np.linalg.norm(u)
    if rho == 0.0 or norm == 0.0:
        return TangentVector(base, np.zeros_like(x))
    vec = rho * u / norm
    # strip the rounding component along the base
    vec -= (vec @ base.coords) * base.coords
    return TangentVector(base, vec)


def project_points(points, axis, radius):
    """Geodesic projection of each row onto A(axis, radius)."""
    points, axis = np.atleast_2d(_coords(points)), _coords(axis)
    _check_same_dim(points, axis)
    u = points - np.outer(points @ axis, axis)
    norms = np.linalg.norm(u, axis=1)
    if np.any(norms < AXIS_TOL):
        bad = np.flatnonzero(norms < AXIS_TOL).tolist()
        raise ProjectionUndefined(f"points {bad} sit on the subsphere axis or its antipode")
    out = np.cos(radius) * axis + np.sin(radius) * u / norms[:, None]
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def project_to_subsphere(x, s):
    if not isinstance(s, Subsphere):
        raise ValidationError("project_to_subsphere expects a Subsphere")
    return SpherePoint(project_points(x, s.axis.coords, s.radius)[0])


def rotate_axis_to_pole(v):
    """Rotation R with R @ v = (0, ..., 0, 1), acting only in span(v, pole)."""
    v = _coords(v).ravel()
    v = v / np.linalg.norm(v)
    dim = v.size
    pole = np.zeros(dim)
    pole[-1] = 1.0
    c = float(v[-1])
    w = v - c * pole
    s = float(np.linalg.norm(w))
    if s < 1e-15:
        if c > 0:
            return np.eye(dim)
        # half-turn in the (e_0, pole) plane
        rotation = np.eye(dim)
        rotation[0, 0] = -1.0
        rotation[-1, -1] = -1.0
        return rotation
    w = w / s
    return (
        np.eye(dim)
        + (c - 1.0) * (np.outer(pole, pole) + np.outer(w, w))
        + s * (np.outer(pole, w) - np.outer(w, pole))
    )


def wrap_angle(x):
    """Wrap angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2.0 * np.pi)


def circular_frechet_objective(angles, mu):
    return float(np.sum(wrap_angle(np.asarray(angles, dtype=float) - mu) ** 2))


def _candidate_objectives(sorted_theta, candidates):
    # Sum of squared wrapped deviations at every candidate, from prefix sums.
    n = sorted_theta.size
    two_pi = 2.0 * np.pi
    s = np.concatenate([[0.0], np.cumsum(sorted_theta)])
    q = np.concatenate([[0.0], np.cumsum(sorted_theta ** 2)])
    lo = np.searchsorted(sorted_theta, candidates - np.pi, side="right")
    hi = np.searchsorted(sorted_theta, candidates + np.pi, side="right")
    n_lo, n_hi = lo, n - hi
    s_lo, s_hi = s[lo], s[n] - s[hi]
    sum_psi = s[n] + two_pi * n_lo - two_pi * n_hi
    sum_psi2 = q[n] + 2.0 * two_pi * (s_lo - s_hi) + two_pi ** 2 * (n_lo + n_hi)
    return sum_psi2 - 2.0 * candidates * sum_psi + n * candidates ** 2


def frechet_mean_circle(angles):
    """Exact intrinsic mean on S^1.

    Every local minimiser of the Frechet function is the wrapped arithmetic
    mean of one cyclic re-branching of the data, i.e. one of the n points
    mean(theta) + 2*pi*j/n. All n are scored in O(n log n).

    Returns the mean angle in [0, 2*pi) and the signed deviations in (-pi, pi].
    """
    theta = np.mod(np.asarray(angles, dtype=float).ravel(), 2.0 * np.pi)
    n = theta.size
    if n == 0:
        raise UnderdeterminedError("circular mean of an empty sample")
    candidates = np.mod(theta.mean() + 2.0 * np.pi * np.arange(n) / n, 2.0 * np.pi)
    approx = _candidate_objectives(np.sort(theta), candidates)
    order = np.argsort(approx, kind="stable")
    best = candidates[order[0]]
    if n > 1:
        # re-score the leaders directly to settle near-ties
        leaders = candidates[order[: min(n, 3)]]
        exact = np.array([circular_frechet_objective(theta, mu) for mu in leaders])
        ranked = np.argsort(exact, kind="stable")
        best = leaders[ranked[0]]
        if exact[ranked[1]] - exact[ranked[0]] < TIE_TOL:
            raise NonUniqueMeanError(
                "circular Frechet mean is not unique",
                candidates=(float(best), float(leaders[ranked[1]])),
            )
    return float(best), wrap_angle(theta - best)
