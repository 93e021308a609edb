"""Principal nested shape spaces from retained PC scores.

Procrustes fits are mapped onto S^p through the exponential map of the span
of the mean and the first p principal directions, PNS runs there, and PNS
coordinates map back to landmark configurations through the inverse chain.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.linalg import null_space

from nestedshape.errors import AntipodalError, DimensionError, RangeError, RankError, UnderdeterminedError
from nestedshape.geometry.sphere import ANTIPODAL_TOL, exp_points, wrap_angle
from nestedshape.models.pns import PNSModel, pns_decompose, pns_reconstruct, pns_transform
from nestedshape.shape.pca import ShapePCAModel, cumulative_variance, fit_shape_pca
from nestedshape.shape.procrustes import (
    Configuration,
    GPAResult,
    PreShape,
    as_preshape,
    from_preshape,
    gpa,
    opa_fit,
    shape_space_dimension,
    tangent_project,
    vertical_basis,
)
from nestedshape.utils.utils import parallel_map

logger = logging.getLogger(__name__)

EXACT_MAX_LANDMARKS = 8


@dataclass(frozen=True, eq=False)
class PNSSModel:
    pca: ShapePCAModel
    p: int
    embedded: np.ndarray
    pns: PNSModel
    gpa: Optional[GPAResult] = None

    @property
    def scores(self):
        return self.pns.coordinates

    @property
    def cut_point(self):
        return self.pns.cut_point

    @property
    def mean(self):
        return self.pca.mean

    @property
    def k(self):
        return self.pca.mean.k

    @property
    def m(self):
        return self.pca.mean.m


@dataclass(frozen=True, eq=False)
class PrincipalArc:
    component: int
    c: float
    s_j: float
    offsets: np.ndarray
    configurations: List[Configuration]

    @property
    def midpoint(self):
        return self.configurations[len(self.configurations) // 2]


@dataclass(frozen=True, eq=False)
class ExactPNSS:
    gpa: GPAResult
    basis: np.ndarray
    points: np.ndarray
    pns: PNSModel


def check_components(p, k, m):
    """Raise RangeError unless 2 <= p < m(k-1) - m(m-1)/2 - 1."""
    bound = shape_space_dimension(k, m)
    if not 2 <= p < bound:
        raise RangeError(
            f"p = {p} must satisfy 2 <= p < m(k-1) - m(m-1)/2 - 1 = {bound} for k={k}, m={m}"
        )


def choose_components(pca, threshold=0.9):
    """Smallest p whose cumulative variance reaches `threshold`, clamped to the valid range."""
    k, m = pca.mean.k, pca.mean.m
    cumulative = cumulative_variance(pca)
    p = int(np.searchsorted(cumulative, 100.0 * threshold - 1e-9) + 1)
    p = max(p, 2)
    upper = min(shape_space_dimension(k, m) - 1, pca.n_components)
    if p > upper:
        logger.warning("variance rule asks for p = %d, clamped to %d", p, upper)
        p = upper
    check_components(p, k, m)
    logger.info("retaining p = %d components (%.1f%% of shape variance)", p, cumulative[p - 1])
    return p


def _embed_scores(lam):
    lam = np.atleast_2d(lam)
    norms = np.linalg.norm(lam, axis=1)
    out = np.empty((lam.shape[0], lam.shape[1] + 1))
    out[:, 0] = np.cos(norms)
    out[:, 1:] = np.sinc(norms / np.pi)[:, None] * lam
    return out


def _geodesic_scores(raw, tangent_norms, distances):
    # lambda_ij = rho_i / |T_i| * lambda~_ij, zero when T_i vanishes
    safe = np.where(tangent_norms > 0, tangent_norms, 1.0)
    factor = np.where(tangent_norms > 0, distances / safe, 0.0)
    return factor[:, None] * raw


def embed_on_sphere(fits, pca, p):
    """Coordinates of the fits on S^p in the basis (mean, V_1, ..., V_p)."""
    check_components(p, pca.mean.k, pca.mean.m)
    if p > pca.n_components or np.any(pca.eigenvalues[:p] <= 0):
        raise RankError(f"only {pca.n_components} positive eigenvalues, cannot embed on S^{p}")
    if fits is not None and fits.n != pca.scores.shape[0]:
        raise DimensionError(f"{fits.n} fits but the PCA model holds {pca.scores.shape[0]} observations")
    lam = _geodesic_scores(pca.scores[:, :p], pca.tangent_norms, pca.fit_distances)
    return _embed_scores(lam)


def sphere_to_pc_scores(g):
    """Inverse of the embedding: (s / sin s) (G_2, ..., G_{p+1}) with s = arccos(G_1)."""
    g = np.asarray(g, dtype=float).ravel()
    if g[0] <= -1.0 + ANTIPODAL_TOL:
        raise AntipodalError("point is antipodal to the mean; PC scores undefined")
    s = np.arctan2(np.linalg.norm(g[1:]), g[0])
    return g[1:] / np.sinc(s / np.pi)


def fit_pnss(configs, p=None, variance_threshold=0.9, tol=1e-10, max_iter=200, threads=1, seed=0, progress=False):
    gpa_result = configs if isinstance(configs, GPAResult) else gpa(
        configs, tol=tol, max_iter=max_iter, threads=threads, progress=progress
    )
    pca = fit_shape_pca(gpa_result, threads=threads)
    if p is None:
        p = choose_components(pca, variance_threshold)
    else:
        check_components(p, pca.mean.k, pca.mean.m)
    if gpa_result.n < p + 2:
        raise UnderdeterminedError(f"PNSS on S^{p} needs at least {p + 2} configurations, got {gpa_result.n}")
    embedded = embed_on_sphere(gpa_result, pca, p)
    pns = pns_decompose(embedded, seed=seed)
    logger.info("pnss: cut point %.6f", pns.cut_point)
    return PNSSModel(pca=pca, p=p, embedded=embedded, pns=pns, gpa=gpa_result)


def pnss_embed(model, configs, threads=1):
    """Points on S^p for new configurations, aligned to the model's mean."""
    mean = model.pca.mean

    def one(c):
        fit = opa_fit(as_preshape(c), mean)
        return fit.distance, tangent_project(fit.fitted, mean)

    results = parallel_map(one, configs, threads=threads)
    distances = np.array([r[0] for r in results])
    tangents = np.stack([r[1] for r in results])
    raw = model.pca.project(tangents)[:, : model.p]
    norms = np.linalg.norm(tangents.reshape(len(results), -1), axis=1)
    return _embed_scores(_geodesic_scores(raw, norms, distances))


def pnss_transform(model, configs, threads=1):
    """PNSS scores of new configurations, shape (p, n)."""
    return pns_transform(model.pns, pnss_embed(model, configs, threads=threads))


def scores_to_configuration(model, coords):
    """Centred unit-size configuration with PNSS coordinates `coords`.

    Component 1 is circular and is wrapped into (-cut_point, cut_point] first.
    """
    coords = np.array(coords, dtype=float).ravel()
    if coords.size != model.pns.d:
        raise DimensionError(f"expected {model.pns.d} PNSS coordinates, got {coords.size}")
    scale = model.pns.final_scale
    coords[0] = scale * wrap_angle(coords[0] / scale)
    g = pns_reconstruct(model.pns, coords)
    lam = sphere_to_pc_scores(g.coords)
    tangent = lam @ model.pca.components[: model.p]
    preshape = exp_points(model.pca.mean.vec, tangent)[0]
    return from_preshape(PreShape.from_vec(preshape, model.m))


def pnss_mean_shape(model):
    return scores_to_configuration(model, np.zeros(model.pns.d))


def principal_arc(model, j, c=1.0, samples=11, threads=1):
    d = model.pns.d
    if not 1 <= j <= d:
        raise RangeError(f"component {j} outside 1..{d}")
    if samples < 3 or samples % 2 == 0:
        raise RangeError(f"arc samples must be odd and >= 3, got {samples}")
    s_j = float(np.std(model.scores[j - 1], ddof=1))
    half = c * s_j
    if j == 1 and abs(half) >= model.cut_point:
        raise RangeError(f"|c * s_1| = {abs(half):.6g} reaches the circular cut point {model.cut_point:.6g}")
    offsets = np.linspace(-half, half, samples)
    offsets[samples // 2] = 0.0

    def sample(t):
        coords = np.zeros(d)
        coords[j - 1] = t
        return scores_to_configuration(model, coords)

    configurations = parallel_map(sample, offsets, threads=threads)
    return PrincipalArc(component=j, c=c, s_j=s_j, offsets=offsets, configurations=configurations)


def fit_pnss_exact(configs, tol=1e-10, max_iter=200, threads=1, seed=0):
    """PNS on the full great sphere of Procrustes fits, for small k only."""
    gpa_result = configs if isinstance(configs, GPAResult) else gpa(configs, tol=tol, max_iter=max_iter, threads=threads)
    k, m = gpa_result.mean.k, gpa_result.mean.m
    if k > EXACT_MAX_LANDMARKS:
        raise RangeError(f"exact PNSS is limited to k <= {EXACT_MAX_LANDMARKS}, got k = {k}")
    mean = gpa_result.mean.vec
    vertical = np.stack([b.vec for b in vertical_basis(gpa_result.mean)], axis=1)
    horizontal = null_space(np.column_stack([vertical, mean]).T)
    basis = np.column_stack([mean, horizontal])
    fits = np.stack([fit.fitted.vec for fit in gpa_result.fits])
    points = fits @ basis
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    pns = pns_decompose(points, seed=seed)
    return ExactPNSS(gpa=gpa_result, basis=basis, points=points, pns=pns)
