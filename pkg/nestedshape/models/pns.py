"""Principal nested spheres.

Backward reduction S^d -> S^{d-1} -> ... -> S^1 -> point. Each level fits the
subsphere minimising the summed squared signed residuals rho(x_i, v) - r,
projects onto it, and re-expresses the projections on the unit sphere one
dimension lower. Scores are the residuals scaled by the product of sines of
the radii fitted so far; the last row is the deviation from the circular
Frechet mean on S^1.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import least_squares

from nestedshape.errors import (
    ConvergenceError,
    DegenerateVarianceError,
    DimensionError,
    RangeError,
    UnderdeterminedError,
)
from nestedshape.geometry.sphere import (
    SpherePoint,
    Subsphere,
    distances_to,
    frechet_mean_circle,
    project_points,
    rotate_axis_to_pole,
    wrap_angle,
)
from nestedshape.utils.utils import make_rng

logger = logging.getLogger(__name__)

MIN_RADIUS = 1e-12
SIN_TOL = 1e-15


@dataclass(frozen=True, eq=False)
class PNSLevel:
    axis: SpherePoint
    radius: float
    rotation_to_pole: np.ndarray
    scale_in: float
    residuals: np.ndarray

    @property
    def dim(self):
        """Dimension of the sphere this level was fitted on."""
        return self.axis.dim


@dataclass(frozen=True, eq=False)
class PNSModel:
    levels: Tuple[PNSLevel, ...]
    final_mean_angle: float
    final_scale: float
    coordinates: np.ndarray

    @property
    def d(self):
        return self.coordinates.shape[0]

    @property
    def n(self):
        return self.coordinates.shape[1]

    @property
    def cut_point(self):
        return np.pi * self.final_scale


def _objective(points, v):
    rho = distances_to(points, v)
    return float(np.sum((rho - rho.mean()) ** 2))


def _refine_axis(points, v0, max_rounds=10):
    """Levenberg-Marquardt over the axis, radius eliminated in closed form.

    The axis is parametrised as normalize(v0 + B t) with B an orthonormal
    basis of the tangent space at v0; the chart is re-centred each round.
    """
    v = v0
    status = 0
    for _ in range(max_rounds):
        basis = null_space(v[None, :])

        def axis_of(t, v=v, basis=basis):
            w = v + basis @ t
            return w / np.linalg.norm(w)

        def residuals(t):
            rho = distances_to(points, axis_of(t))
            return rho - rho.mean()

        def jacobian(t, v=v, basis=basis):
            w = v + basis @ t
            norm = np.linalg.norm(w)
            u = w / norm
            cos_rho = points @ u
            sin_rho = np.sqrt(np.clip(1.0 - cos_rho ** 2, 0.0, None))
            safe = np.where(sin_rho > SIN_TOL, sin_rho, 1.0)
            grad = -(points - np.outer(cos_rho, u)) @ basis / (safe * norm)[:, None]
            grad[sin_rho <= SIN_TOL] = 0.0
            return grad - grad.mean(axis=0)

        fit = least_squares(
            residuals, np.zeros(basis.shape[1]), jac=jacobian, method="lm",
            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=100 * (basis.shape[1] + 1),
        )
        status = fit.status
        v = axis_of(fit.x)
        if np.linalg.norm(fit.x) < 1e-12 or status <= 0:
            break
    return v, status > 0


def _initial_axes(points, rng, n_random):
    scatter = points.T @ points / points.shape[0]
    _, vecs = np.linalg.eigh(scatter)
    candidates = [vecs[:, j] for j in range(vecs.shape[1])]
    centroid = points.mean(axis=0)
    if np.linalg.norm(centroid) > 0:
        candidates.append(centroid / np.linalg.norm(centroid))
    random = rng.standard_normal((n_random, points.shape[1]))
    candidates.extend(random / np.linalg.norm(random, axis=1, keepdims=True))
    return candidates


def fit_subsphere(points, seed=0, n_random=128, n_polish=8, restarts=3):
    """Best-fitting subsphere A(v, r) of `points` (rows on S^i).

    Returns the Subsphere and the signed residuals rho(x_j, v) - r. The
    optimal radius for a given axis is the mean distance, so only the axis is
    optimised; v is flipped to -v when that brings r into (0, pi/2].
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, ambient = points.shape
    i = ambient - 1
    if i < 1:
        raise DimensionError(f"subsphere fitting needs S^i with i >= 1, got ambient dimension {ambient}")
    if n < i + 2:
        raise UnderdeterminedError(f"fitting a subsphere of S^{i} needs at least {i + 2} points, got {n}")

    rng = make_rng(seed, i)
    candidates = _initial_axes(points, rng, n_random)
    ranked = sorted(range(len(candidates)), key=lambda j: _objective(points, candidates[j]))
    starts = [candidates[j] for j in ranked[:n_polish]]

    best, best_value = None, np.inf
    for attempt in range(restarts + 1):
        for v0 in starts:
            v, converged = _refine_axis(points, v0)
            if not converged:
                continue
            value = _objective(points, v)
            if value < best_value:
                best, best_value = v, value
        if best is not None:
            break
        logger.debug("subsphere fit on S^%d did not converge, restart %d", i, attempt + 1)
        starts = list(_initial_axes(points, rng, n_polish)[-n_polish:])
    if best is None:
        raise ConvergenceError(f"subsphere fit on S^{i} did not converge after {restarts} restarts")

    rho = distances_to(points, best)
    radius = float(rho.mean())
    if radius > np.pi / 2:
        best, radius = -best, np.pi - radius
        rho = np.pi - rho
    radius = float(np.clip(radius, MIN_RADIUS, np.pi / 2))
    return Subsphere(SpherePoint.normalized(best), radius), rho - radius


def _descend(points, axis, radius, rotation):
    projected = project_points(points, axis, radius)
    lowered = (projected @ rotation.T)[:, :-1]
    return lowered / np.linalg.norm(lowered, axis=1, keepdims=True)


def pns_decompose(points, seed=0):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, ambient = points.shape
    d = ambient - 1
    if d < 1:
        raise DimensionError(f"PNS needs points on S^d with d >= 1, got ambient dimension {ambient}")
    if n < 4:
        raise UnderdeterminedError(f"PNS needs at least 4 points, got {n}")
    if n < d + 2:
        logger.warning("only %d points on S^%d; the first levels are underdetermined", n, d)
    points = points / np.linalg.norm(points, axis=1, keepdims=True)

    levels = []
    scale = 1.0
    current = points
    while current.shape[1] > 2:
        sphere, residuals = fit_subsphere(current, seed=seed)
        axis = sphere.axis.coords
        rotation = rotate_axis_to_pole(axis)
        levels.append(PNSLevel(sphere.axis, sphere.radius, rotation, scale, scale * residuals))
        logger.debug("pns level S^%d: radius %.6f, scale %.6g", current.shape[1] - 1, sphere.radius, scale)
        current = _descend(current, axis, sphere.radius, rotation)
        scale *= np.sin(sphere.radius)

    mean_angle, deviations = frechet_mean_circle(np.arctan2(current[:, 1], current[:, 0]))
    rows = [scale * deviations] + [level.residuals for level in reversed(levels)]
    model = PNSModel(tuple(levels), mean_angle, float(scale), np.vstack(rows))
    logger.info("pns: S^%d reduced to a point, final scale %.6g", d, scale)
    return model


def pns_transform(model, points):
    """PNS coordinates of new points under an already fitted chain, shape (d, n)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != model.d + 1:
        raise DimensionError(f"model lives on S^{model.d}, got points with {points.shape[1]} coordinates")
    points = points / np.linalg.norm(points, axis=1, keepdims=True)
    rows = []
    current = points
    for level in model.levels:
        axis = level.axis.coords
        rows.append(level.scale_in * (distances_to(current, axis) - level.radius))
        current = _descend(current, axis, level.radius, level.rotation_to_pole)
    angles = np.arctan2(current[:, 1], current[:, 0])
    e0 = model.final_scale * wrap_angle(angles - model.final_mean_angle)
    return np.vstack([e0] + rows[::-1])


def variance_by_component(model):
    sums = np.sum(model.coordinates ** 2, axis=1)
    total = sums.sum()
    if total <= 0:
        raise DegenerateVarianceError("PNS coordinates have zero total variance")
    return 100.0 * sums / total


def pns_reconstruct(model, coords):
    """Point of S^d with PNS coordinates `coords` (E(0) first)."""
    coords = np.asarray(coords, dtype=float).ravel()
    if coords.size != model.d:
        raise DimensionError(f"expected {model.d} PNS coordinates, got {coords.size}")
    if abs(coords[0]) > model.cut_point * (1 + 1e-12):
        raise RangeError(f"E(0) = {coords[0]!r} outside [-{model.cut_point!r}, {model.cut_point!r}]")

    theta = model.final_mean_angle + coords[0] / model.final_scale
    y = np.array([np.cos(theta), np.sin(theta)])
    for j in range(len(model.levels) - 1, -1, -1):
        level = model.levels[j]
        angle = level.radius + coords[model.d - 1 - j] / level.scale_in
        if not 0.0 <= angle <= np.pi:
            raise RangeError(
                f"coordinate {model.d - 1 - j} places the point at distance {angle!r} from the level-{j} axis"
            )
        y = level.rotation_to_pole.T @ np.append(np.sin(angle) * y, np.cos(angle))
    return SpherePoint.normalized(y)
