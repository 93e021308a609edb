"""Pre-shapes, ordinary/generalized Procrustes analysis and the Procrustes
tangent space of Kendall's shape space.

Matrices are vectorised column by column (Fortran order) wherever a
(k-1) x m pre-shape has to be treated as a point of R^{m(k-1)}.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List

import numpy as np
from tqdm import tqdm

from nestedshape.errors import (
    ConvergenceError,
    DegenerateConfigError,
    DimensionError,
    NotProcrustesAlignedError,
    RankError,
    UnderdeterminedError,
    ValidationError,
)
from nestedshape.utils.utils import parallel_map

logger = logging.getLogger(__name__)

SIZE_TOL = 1e-12
UNIT_TOL = 1e-12
SYMMETRY_TOL = 1e-8
UNIQUE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Configuration:
    """k labelled landmarks in R^m, one per row."""

    points: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim != 2:
            raise DimensionError(f"configuration must be a k x m matrix, got shape {points.shape}")
        k, m = points.shape
        if m < 2 or k <= m:
            raise DimensionError(f"configuration needs k > m >= 2, got k={k}, m={m}")
        if not np.all(np.isfinite(points)):
            raise ValidationError("configuration contains non-finite coordinates")
        object.__setattr__(self, "points", points)

    @property
    def k(self):
        return self.points.shape[0]

    @property
    def m(self):
        return self.points.shape[1]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.points, dtype=dtype)


@dataclass(frozen=True, eq=False)
class PreShape:
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2:
            raise DimensionError(f"pre-shape must be a (k-1) x m matrix, got shape {matrix.shape}")
        norm = np.linalg.norm(matrix)
        if abs(norm - 1.0) > UNIT_TOL:
            raise ValidationError(f"pre-shape has Frobenius norm {norm!r}, expected 1")
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_vec(cls, vec, m):
        vec = np.asarray(vec, dtype=float)
        return cls(vec.reshape(-1, m, order="F") / np.linalg.norm(vec))

    @property
    def k(self):
        return self.matrix.shape[0] + 1

    @property
    def m(self):
        return self.matrix.shape[1]

    @property
    def vec(self):
        return self.matrix.ravel(order="F")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True, eq=False)
class ProcrustesFit:
    fitted: PreShape
    rotation: np.ndarray
    distance: float
    unique: bool = True


@dataclass(frozen=True, eq=False)
class GPAResult:
    mean: PreShape
    fits: List[ProcrustesFit]
    iterations: int
    objective: float
    history: List[float] = field(default_factory=list)

    @property
    def n(self):
        return len(self.fits)

    @property
    def non_unique_count(self):
        return sum(not fit.unique for fit in self.fits)

    @property
    def distances(self):
        return np.array([fit.distance for fit in self.fits])

    def fitted_matrices(self):
        return np.stack([fit.fitted.matrix for fit in self.fits])


@lru_cache(maxsize=32)
def _helmert(k):
    h = np.zeros((k - 1, k))
    for j in range(1, k):
        hj = -1.0 / np.sqrt(j * (j + 1.0))
        h[j - 1, :j] = hj
        h[j - 1, j] = -j * hj
    h.flags.writeable = False
    return h


def helmert_submatrix(k):
    """(k-1) x k Helmert submatrix: orthonormal rows, each orthogonal to ones(k)."""
    if k < 2:
        raise DimensionError(f"Helmert submatrix needs k >= 2, got {k}")
    return _helmert(int(k))


def as_preshape(x):
    if isinstance(x, PreShape):
        return x
    if isinstance(x, Configuration):
        return to_preshape(x)
    return to_preshape(Configuration(x))


def to_preshape(c):
    if not isinstance(c, Configuration):
        c = Configuration(c)
    x = helmert_submatrix(c.k) @ c.points
    size = np.linalg.norm(x)
    if size < SIZE_TOL:
        raise DegenerateConfigError(f"centred size {size!r} is below {SIZE_TOL}")
    return PreShape(x / size)


def from_preshape(x):
    """Centred, unit-size k x m configuration with pre-shape `x`."""
    x = x if isinstance(x, PreShape) else PreShape(x)
    return Configuration(helmert_submatrix(x.k).T @ x.matrix)


def opa_fit(x, reference):
    """Rotate `x` onto `reference` over SO(m).

    The maximiser of tr(reference^T x R) is U D V^T from the SVD of
    x^T reference, with D flipping the last singular direction when needed
    to keep det(R) = +1.
    """
    x = x if isinstance(x, PreShape) else PreShape(x)
    reference = reference if isinstance(reference, PreShape) else PreShape(reference)
    if x.matrix.shape != reference.matrix.shape:
        raise DimensionError(f"pre-shape shapes differ: {x.matrix.shape} vs {reference.matrix.shape}")
    m = x.m
    u, s, vt = np.linalg.svd(x.matrix.T @ reference.matrix)
    signs = np.ones(m)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        signs[-1] = -1.0
    rotation = (u * signs) @ vt
    fitted = x.matrix @ rotation
    fitted /= np.linalg.norm(fitted)

    chord = np.linalg.norm(fitted - reference.matrix)
    distance = float(np.clip(2.0 * np.arcsin(min(chord / 2.0, 1.0)), 0.0, np.pi / 2))

    signed = s * signs
    x_sv = np.linalg.svd(x.matrix, compute_uv=False)
    rank = int(np.sum(x_sv > SIZE_TOL * x_sv[0]))
    unique = bool(rank >= m - 1 and signed[-2] + signed[-1] >= UNIQUE_TOL)
    return ProcrustesFit(fitted=PreShape(fitted), rotation=rotation, distance=distance, unique=unique)


def _mean_update(fits):
    # dominant left singular vector of the vectorised fits, oriented with their sum
    z = np.stack([fit.fitted.vec for fit in fits], axis=1)
    u, _, _ = np.linalg.svd(z, full_matrices=False)
    direction = u[:, 0]
    if direction @ z.sum(axis=1) < 0:
        direction = -direction
    return PreShape.from_vec(direction, fits[0].fitted.m)


def gpa(configs, tol=1e-10, max_iter=200, threads=1, progress=False):
    """Full Procrustes mean of `configs` by alternating OPA fits and mean updates.

    The objective is the full Procrustes sum of squares, sum_i sin^2(rho_i).
    Iteration stops once its relative change drops below `tol`.
    """
    preshapes = [as_preshape(c) for c in configs]
    if len(preshapes) < 2:
        raise UnderdeterminedError(f"GPA needs at least 2 configurations, got {len(preshapes)}")
    shape = preshapes[0].matrix.shape
    for i, x in enumerate(preshapes):
        if x.matrix.shape != shape:
            raise DimensionError(f"configuration {i} has pre-shape {x.matrix.shape}, expected {shape}")

    mean = preshapes[0]
    # objectives at rounding level, e.g. identical shapes
    floor = len(preshapes) * np.finfo(float).eps
    history = []
    previous = None
    for iteration in tqdm(range(1, max_iter + 1), desc="gpa", disable=not progress):
        fits = parallel_map(lambda x: opa_fit(x, mean), preshapes, threads=threads)
        objective = float(sum(np.sin(fit.distance) ** 2 for fit in fits))
        history.append(objective)
        logger.debug("gpa iteration %d: objective %.17g", iteration, objective)
        if previous is not None and abs(previous - objective) <= tol * max(previous, floor):
            break
        previous = objective
        mean = _mean_update(fits)
    else:
        raise ConvergenceError(f"GPA did not converge in {max_iter} iterations", last_iterate=mean)

    result = GPAResult(mean=mean, fits=fits, iterations=iteration, objective=objective, history=history)
    if result.non_unique_count:
        logger.warning("%d of %d Procrustes fits are not unique", result.non_unique_count, result.n)
    logger.info("gpa converged after %d iterations, objective %.6g", iteration, objective)
    return result


def tangent_project(fit, mean):
    """Procrustes tangent coordinates T = S - tr(mean^T S) mean."""
    s = np.asarray(fit, dtype=float)
    x = np.asarray(mean, dtype=float)
    if s.shape != x.shape:
        raise DimensionError(f"fit shape {s.shape} does not match mean shape {x.shape}")
    cross = x.T @ s
    asym = np.max(np.abs(cross - cross.T))
    if asym > SYMMETRY_TOL:
        raise NotProcrustesAlignedError(f"mean^T fit is not symmetric (max asymmetry {asym:.3g})")
    return s - np.trace(cross) * x


def riemannian_shape_distance(c1, c2):
    return opa_fit(as_preshape(c1), as_preshape(c2)).distance


def vertical_basis(x0):
    """Normalised X0 E_{j1 j2}, 1 <= j1 < j2 <= m, spanning the rotation directions at X0."""
    x0 = np.asarray(x0, dtype=float)
    m = x0.shape[1]
    sv = np.linalg.svd(x0, compute_uv=False)
    if np.sum(sv > SIZE_TOL * sv[0]) < m:
        raise RankError(f"pre-shape has rank {int(np.sum(sv > SIZE_TOL * sv[0]))} < m = {m}")
    basis = []
    for j1 in range(m):
        for j2 in range(j1 + 1, m):
            e = np.zeros((m, m))
            e[j1, j2], e[j2, j1] = 1.0, -1.0
            b = x0 @ e
            basis.append(PreShape(b / np.linalg.norm(b)))
    return basis


def shape_space_dimension(k, m):
    """Dimension m(k-1) - m(m-1)/2 - 1 of the great sphere of Procrustes fits."""
    return m * (k - 1) - m * (m - 1) // 2 - 1
