"""Ward hierarchical clustering on great-circle and Euclidean distances.

`ward.D` applies Ward's Lance-Williams update to the input dissimilarities
themselves; `ward.D2` applies it to squared dissimilarities and reports
square-rooted heights. Each step merges the pair with the smallest
(dissimilarity, lower cluster id, higher cluster id).
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from nestedshape.errors import DimensionError, RangeError, ValidationError

logger = logging.getLogger(__name__)

LINKAGES = ("ward.D", "ward.D2")
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionError(f"distance matrix must be square, got shape {values.shape}")
        if np.any(np.diag(values) != 0):
            raise ValidationError("distance matrix diagonal must be exactly 0")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValidationError("distances must be finite and non-negative")
        if np.max(np.abs(values - values.T), initial=0.0) > SYMMETRY_TOL:
            raise ValidationError("distance matrix is not symmetric")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.values.shape[0]

    def condensed(self):
        return squareform(self.values, checks=False)


@dataclass(frozen=True, eq=False)
class Dendrogram:
    """Merge history in SciPy linkage layout, heights on the input scale.

    Rows are (left id, right id, height, size); ids >= n refer to the
    cluster formed by merge row id - n.
    """

    linkage: np.ndarray
    n: int
    method: str = "ward.D"

    @property
    def merges(self):
        return [(int(a), int(b), float(h)) for a, b, h, _ in self.linkage]

    def cut(self, K):
        """Labels 1..K, numbered by order of each cluster's first member."""
        if not 1 <= K <= self.n:
            raise RangeError(f"cluster count K = {K} outside 1..{self.n}")
        # state after the first n - K merges
        assign = np.arange(self.n)
        for row in range(self.n - K):
            a, b = self.linkage[row, :2]
            assign[(assign == a) | (assign == b)] = self.n + row
        _, first, inverse = np.unique(assign, return_index=True, return_inverse=True)
        relabel = np.empty(first.size, dtype=int)
        relabel[np.argsort(first)] = np.arange(1, first.size + 1)
        return relabel[inverse.ravel()]


def _block_rows(n, block):
    for start in range(0, n, block):
        yield slice(start, min(start + block, n))


def great_circle_distance_matrix(points, block=2048):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    values = np.zeros((n, n))
    for rows in _block_rows(n, block):
        chord = cdist(points[rows], points)
        anti = cdist(points[rows], -points)
        values[rows] = 2.0 * np.arctan2(chord, anti)
    values = np.triu(values, 1)
    return DistanceMatrix(values + values.T)


def euclidean_distance_matrix(scores):
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    return DistanceMatrix(squareform(pdist(scores)))


def _nearest_above(d, ids, active, a):
    """Closest active partner of slot `a` among clusters with a higher id."""
    candidates = np.flatnonzero(active & (ids > ids[a]))
    if candidates.size == 0:
        return -1, np.inf
    row = d[a, candidates]
    best = row.min()
    tied = candidates[row == best]
    return tied[np.argmin(ids[tied])], best


def _ward_agglomerate(values, copy=True):
    """Greedy Lance-Williams Ward merges in SciPy linkage layout.

    Slots hold the active clusters; a merge keeps the lower slot and gives
    it id n + step. Each slot caches its nearest partner among higher ids,
    so only slots that lost that partner are rescanned.
    """
    n = values.shape[0]
    d = np.array(values, dtype=float, copy=copy)
    np.fill_diagonal(d, np.inf)
    ids = np.arange(n)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    nearest = np.full(n, -1)
    mindist = np.full(n, np.inf)
    for a in range(n):
        nearest[a], mindist[a] = _nearest_above(d, ids, active, a)

    z = np.zeros((n - 1, 4))
    for step in range(n - 1):
        leaders = np.flatnonzero(active & (mindist == mindist[active].min()))
        i = leaders[np.argmin(ids[leaders])]
        j = nearest[i]
        i, j = min(i, j), max(i, j)
        h = d[i, j]
        ni, nj = sizes[i], sizes[j]
        z[step] = (min(ids[i], ids[j]), max(ids[i], ids[j]), h, ni + nj)

        others = active.copy()
        others[[i, j]] = False
        k = np.flatnonzero(others)
        nk = sizes[k]
        merged = ((ni + nk) * d[i, k] + (nj + nk) * d[j, k] - nk * h) / (ni + nj + nk)
        d[i, k] = merged
        d[k, i] = merged
        active[j] = False
        sizes[i] = ni + nj
        ids[i] = n + step
        nearest[[i, j]] = -1
        mindist[[i, j]] = np.inf

        stale = others & ((nearest == i) | (nearest == j))
        closer = others & ~stale & (d[:, i] < mindist)
        nearest[closer] = i
        mindist[closer] = d[closer, i]
        for a in np.flatnonzero(stale):
            nearest[a], mindist[a] = _nearest_above(d, ids, active, a)
    return z


def ward_linkage(d, method="ward.D"):
    if method not in LINKAGES:
        raise ValidationError(f"unknown linkage {method!r}, expected one of {LINKAGES}")
    d = d if isinstance(d, DistanceMatrix) else DistanceMatrix(d)
    if d.n < 2:
        return Dendrogram(np.zeros((0, 4)), d.n, method)
    if method == "ward.D":
        z = _ward_agglomerate(d.values)
    else:
        z = _ward_agglomerate(d.values ** 2, copy=False)
        z[:, 2] = np.sqrt(z[:, 2])
    logger.debug("%s linkage on %d items, top merge height %.6g", method, d.n, z[-1, 2])
    return Dendrogram(z, d.n, method)


def ward_cluster(d, K, method="ward.D"):
    d = d if isinstance(d, DistanceMatrix) else DistanceMatrix(d)
    if not 1 <= K <= d.n:
        raise RangeError(f"cluster count K = {K} outside 1..{d.n}")
    return ward_linkage(d, method).cut(K)
