import logging
from dataclasses import dataclass

import numpy as np

from nestedshape.errors import DegenerateVarianceError, UnderdeterminedError
from nestedshape.shape.procrustes import PreShape, tangent_project
from nestedshape.utils.utils import parallel_map

logger = logging.getLogger(__name__)

RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ShapePCAModel:
    """Principal components of Procrustes tangent coordinates.

    `eigenvectors` has shape (q, k-1, m); `scores` holds the uncentred
    projections <T_i, V_j> and `centered_scores` the projections of T_i - T_bar.
    """

    mean: PreShape
    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    scores: np.ndarray
    centered_scores: np.ndarray
    tangent_norms: np.ndarray
    fit_distances: np.ndarray
    tangent_mean: np.ndarray
    total_variance: float

    @property
    def n_components(self):
        return self.eigenvalues.size

    @property
    def components(self):
        """Eigenvectors vectorised column-major, one per row."""
        q = self.n_components
        return self.eigenvectors.transpose(0, 2, 1).reshape(q, -1)

    def project(self, tangents):
        """Uncentred scores of new tangent coordinates, shape (n, q)."""
        tangents = np.asarray(tangents, dtype=float)
        vecs = tangents.transpose(0, 2, 1).reshape(tangents.shape[0], -1)
        return vecs @ self.components.T


def fit_shape_pca(gpa_result, threads=1):
    fits = gpa_result.fits
    n = len(fits)
    if n < 2:
        raise UnderdeterminedError(f"shape PCA needs at least 2 observations, got {n}")
    mean = gpa_result.mean
    tangents = np.stack(parallel_map(lambda fit: tangent_project(fit.fitted, mean), fits, threads=threads))
    vecs = tangents.transpose(0, 2, 1).reshape(n, -1)
    tangent_mean = vecs.mean(axis=0)
    centered = vecs - tangent_mean
    if np.max(np.abs(centered)) < RANK_TOL:
        raise DegenerateVarianceError("all tangent coordinates are identical")
    total_variance = float(np.sum(centered ** 2) / n)

    # SVD of the centred data equals the eigendecomposition of the divisor-n covariance
    _, s, vt = np.linalg.svd(centered / np.sqrt(n), full_matrices=False)
    eigenvalues = s ** 2
    keep = eigenvalues > RANK_TOL * eigenvalues[0]
    eigenvalues, vt = eigenvalues[keep], vt[keep]
    pivots = np.argmax(np.abs(vt), axis=1)
    vt = vt * np.sign(vt[np.arange(vt.shape[0]), pivots])[:, None]

    k1, m = mean.matrix.shape
    model = ShapePCAModel(
        mean=mean,
        eigenvectors=vt.reshape(-1, m, k1).transpose(0, 2, 1),
        eigenvalues=eigenvalues,
        scores=vecs @ vt.T,
        centered_scores=centered @ vt.T,
        tangent_norms=np.linalg.norm(vecs, axis=1),
        fit_distances=gpa_result.distances,
        tangent_mean=tangent_mean.reshape(m, k1).T,
        total_variance=total_variance,
    )
    logger.info("shape pca: %d components retained from %d observations", model.n_components, n)
    return model


def variance_percentages(model):
    return 100.0 * model.eigenvalues / model.eigenvalues.sum()


def cumulative_variance(model):
    return np.cumsum(variance_percentages(model))
