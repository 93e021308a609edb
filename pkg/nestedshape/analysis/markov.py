"""Empirical Markov analysis of cluster-label sequences."""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from nestedshape.analysis.cluster import DistanceMatrix, ward_linkage
from nestedshape.errors import (
    DimensionError,
    NoUniqueEquilibriumError,
    RangeError,
    UnderdeterminedError,
    ValidationError,
)

logger = logging.getLogger(__name__)

ROW_TOL = 1e-12
POOL_MODES = ("pooled", "averaged")


@dataclass(frozen=True, eq=False)
class StateSequence:
    run_id: str
    labels: np.ndarray
    K: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int).ravel()
        if labels.size < 2:
            raise UnderdeterminedError(f"run {self.run_id}: a state sequence needs at least 2 labels")
        if labels.min() < 1 or labels.max() > self.K:
            raise RangeError(f"run {self.run_id}: labels must lie in 1..{self.K}")
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    probs: np.ndarray
    counts: np.ndarray
    row_support: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 2 or probs.shape[0] != probs.shape[1]:
            raise DimensionError(f"transition matrix must be square, got {probs.shape}")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValidationError("transition probabilities must lie in [0, 1]")
        if np.max(np.abs(probs.sum(axis=1) - 1.0)) > ROW_TOL:
            raise ValidationError("transition matrix rows must sum to 1")
        object.__setattr__(self, "probs", probs)

    @property
    def K(self):
        return self.probs.shape[0]

    @classmethod
    def from_counts(cls, counts):
        counts = np.asarray(counts, dtype=np.int64)
        totals = counts.sum(axis=1)
        support = totals > 0
        probs = np.eye(counts.shape[0])
        probs[support] = counts[support] / totals[support, None]
        return cls(probs=probs, counts=counts, row_support=support)

    @classmethod
    def from_probs(cls, probs):
        """A matrix with no count provenance, e.g. a published table."""
        probs = np.asarray(probs, dtype=float)
        probs = probs / probs.sum(axis=1, keepdims=True)
        K = probs.shape[0]
        return cls(probs=probs, counts=np.zeros((K, K), dtype=np.int64), row_support=np.ones(K, dtype=bool))


@dataclass(frozen=True, eq=False)
class EquilibriumDistribution:
    probs: np.ndarray
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class TemporalClustering:
    labels: np.ndarray
    distances: DistanceMatrix
    pooled: List[TransitionMatrix] = field(default_factory=list)
    equilibria: List[Optional[EquilibriumDistribution]] = field(default_factory=list)


def estimate_transition_matrix(seq):
    counts = np.zeros((seq.K, seq.K), dtype=np.int64)
    np.add.at(counts, (seq.labels[:-1] - 1, seq.labels[1:] - 1), 1)
    return TransitionMatrix.from_counts(counts)


def _pool(mats, mode):
    if mode not in POOL_MODES:
        raise ValidationError(f"unknown pooling mode {mode!r}, expected one of {POOL_MODES}")
    if not mats:
        raise UnderdeterminedError("nothing to pool")
    K = mats[0].K
    if any(t.K != K for t in mats):
        raise DimensionError("transition matrices have different state counts")
    counts = np.sum([t.counts for t in mats], axis=0)
    if mode == "pooled":
        return TransitionMatrix.from_counts(counts)

    # average each row over the runs that visited it
    support = np.stack([t.row_support for t in mats])
    visits = support.sum(axis=0)
    probs = np.eye(K)
    weighted = np.sum([t.probs * t.row_support[:, None] for t in mats], axis=0)
    seen = visits > 0
    probs[seen] = weighted[seen] / visits[seen, None]
    probs /= probs.sum(axis=1, keepdims=True)
    return TransitionMatrix(probs=probs, counts=counts, row_support=seen)


def pool_transition_matrix(seqs, mode="pooled"):
    return _pool([estimate_transition_matrix(s) for s in seqs], mode)


def _probs(t):
    return t.probs if isinstance(t, TransitionMatrix) else np.asarray(t, dtype=float)


def hellinger_distance(a, b):
    a, b = _probs(a), _probs(b)
    if a.shape != b.shape:
        raise DimensionError(f"transition matrices differ in shape: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(np.sqrt(a) - np.sqrt(b)) / np.sqrt(2.0))


def hellinger_distance_matrix(mats):
    n = len(mats)
    roots = np.stack([np.sqrt(_probs(t)).ravel() for t in mats])
    values = np.zeros((n, n))
    for i in range(n):
        values[i, i + 1:] = np.linalg.norm(roots[i + 1:] - roots[i], axis=1) / np.sqrt(2.0)
    return DistanceMatrix(values + values.T)


def _closed_classes(probs):
    """Members of every closed communicating class."""
    n_comp, labels = connected_components(csr_matrix(probs > 0), directed=True, connection="strong")
    rows, cols = np.nonzero(probs > 0)
    leaking = set(labels[rows[labels[rows] != labels[cols]]].tolist())
    return [np.flatnonzero(labels == c) for c in range(n_comp) if c not in leaking]


def _period(probs, members):
    """gcd of cycle lengths in the class `members`, from breadth-first levels."""
    sub = probs[np.ix_(members, members)] > 0
    level = np.full(members.size, -1)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(sub[u] & (level < 0)):
                level[v] = level[u] + 1
                nxt.append(v)
        frontier = nxt
    rows, cols = np.nonzero(sub)
    return int(np.gcd.reduce(np.abs(level[rows] + 1 - level[cols])))


def equilibrium(p, tol=1e-13, max_squarings=64):
    """Stationary distribution as the common row of lim P^n.

    P is squared until its rows agree within `tol`, so `iterations`
    counts squarings (n = 2^iterations).
    """
    probs = _probs(p)
    closed = _closed_classes(probs)
    if len(closed) != 1:
        raise NoUniqueEquilibriumError(f"chain has {len(closed)} closed communicating classes, expected 1")
    period = _period(probs, closed[0])
    if period != 1:
        raise NoUniqueEquilibriumError(f"closed class is periodic with period {period}")
    power = probs
    for iteration in range(1, max_squarings + 1):
        power = power @ power
        power /= power.sum(axis=1, keepdims=True)
        if np.max(np.ptp(power, axis=0)) < tol:
            break
    else:
        raise NoUniqueEquilibriumError(f"P^n rows did not agree after {max_squarings} squarings")
    pi = power.mean(axis=0)
    pi /= pi.sum()
    if np.max(np.abs(pi @ probs - pi)) > 1e-10:
        raise NoUniqueEquilibriumError("limit of P^n is not stationary")
    return EquilibriumDistribution(probs=pi, iterations=iteration)


def temporal_cluster(mats, K_tc, method="ward.D", mode="pooled"):
    if len(mats) < K_tc:
        raise RangeError(f"{len(mats)} transition matrices cannot form {K_tc} temporal clusters")
    distances = hellinger_distance_matrix(mats)
    labels = ward_linkage(distances, method).cut(K_tc)
    pooled, equilibria = [], []
    for tc in range(1, K_tc + 1):
        group = _pool([t for t, label in zip(mats, labels) if label == tc], mode)
        pooled.append(group)
        try:
            equilibria.append(equilibrium(group))
        except NoUniqueEquilibriumError as exc:
            logger.warning("temporal cluster %d has no unique equilibrium: %s", tc, exc)
            equilibria.append(None)
    return TemporalClustering(labels=labels, distances=distances, pooled=pooled, equilibria=equilibria)


def final_location_probabilities(seqs, tc_labels):
    """Row t-1 holds the distribution of last-frame states over the runs in TC t."""
    tc_labels = np.asarray(tc_labels, dtype=int)
    if tc_labels.size != len(seqs):
        raise DimensionError(f"{tc_labels.size} temporal labels for {len(seqs)} sequences")
    K = seqs[0].K
    table = np.zeros((int(tc_labels.max()), K))
    for seq, tc in zip(seqs, tc_labels):
        table[tc - 1, seq.labels[-1] - 1] += 1
    totals = table.sum(axis=1, keepdims=True)
    return np.divide(table, totals, out=np.zeros_like(table), where=totals > 0)


def format_transition_table(t, names=None):
    probs = _probs(t)
    names = names or [f"Cluster {i}" for i in range(1, probs.shape[0] + 1)]
    frame = pd.DataFrame(probs, index=names, columns=names)
    return frame.to_string(float_format=lambda x: f"{x:.4f}")


def format_equilibrium_table(rows, names=None):
    """`rows` maps a row title (Overall, TC1, ...) to an equilibrium or None."""
    K = next(len(_dist(r)) for r in rows.values() if r is not None)
    names = names or [f"Cluster {i}" for i in range(1, K + 1)]
    data = [_dist(r) if r is not None else np.full(K, np.nan) for r in rows.values()]
    frame = pd.DataFrame(data, index=list(rows), columns=names)
    return frame.to_string(float_format=lambda x: f"{x:.3f}", na_rep="-")


def _dist(e):
    return e.probs if isinstance(e, EquilibriumDistribution) else np.asarray(e, dtype=float)
