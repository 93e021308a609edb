"""Seeded synthetic landmark data with known ground truth."""
import logging

import numpy as np
from scipy.stats import special_ortho_group

from nestedshape.data.trajectory import Run, TrajectoryDataset
from nestedshape.utils.config import SyntheticSpec, validate_synthetic
from nestedshape.utils.utils import make_rng

logger = logging.getLogger(__name__)


def switching_matrix(spec):
    if spec.transition_matrix is not None:
        return np.asarray(spec.transition_matrix, dtype=float)
    if spec.states == 1:
        return np.ones((1, 1))
    off = (1.0 - spec.stay_probability) / (spec.states - 1)
    return np.full((spec.states, spec.states), off) + np.eye(spec.states) * (spec.stay_probability - off)


def chain_templates(k, m, states, spread, rng):
    """`states` articulated chains of k - 1 unit bonds sharing a common backbone."""
    base = np.zeros((k - 1, m))
    base[:, 0] = 1.0
    base += 0.5 * rng.standard_normal((k - 1, m))
    templates = []
    for _ in range(states):
        bonds = base + spread * rng.standard_normal((k - 1, m))
        bonds /= np.linalg.norm(bonds, axis=1, keepdims=True)
        templates.append(np.vstack([np.zeros(m), np.cumsum(bonds, axis=0)]))
    return np.stack(templates)


def _simulate_labels(matrix, frames, rng):
    states = matrix.shape[0]
    cumulative = np.cumsum(matrix, axis=1)
    labels = np.empty(frames, dtype=int)
    labels[0] = rng.integers(states)
    draws = rng.random(frames - 1)
    for t in range(1, frames):
        row = cumulative[labels[t - 1]]
        labels[t] = min(int(np.searchsorted(row, draws[t - 1] * row[-1], side="right")), states - 1)
    return labels


def _random_similarity(config, rng):
    m = config.shape[1]
    rotation = special_ortho_group.rvs(m, random_state=rng)
    scale = np.exp(0.3 * rng.standard_normal())
    return scale * config @ rotation + rng.normal(0.0, 5.0, size=m)


def synthesize(spec=None):
    """Runs hopping between template shapes under a Markov switching matrix.

    Frames are templates plus isotropic landmark noise, then an independent
    random rotation, scaling and translation. Ground-truth states (1-based)
    are attached to each run as `labels`.
    """
    spec = validate_synthetic(spec or SyntheticSpec())
    matrix = switching_matrix(spec)
    templates = chain_templates(spec.k, spec.m, spec.states, spec.template_spread, make_rng(spec.seed, 0))
    runs = []
    for r in range(spec.runs):
        rng = make_rng(spec.seed, 1, r)
        labels = _simulate_labels(matrix, spec.frames, rng)
        noise = spec.noise * rng.standard_normal((spec.frames, spec.k, spec.m))
        frames = np.stack([_random_similarity(templates[s] + e, rng) for s, e in zip(labels, noise)])
        runs.append(Run(f"run{r + 1:03d}", frames, labels=labels + 1))
    logger.info("synthesized %d runs x %d frames over %d states", spec.runs, spec.frames, spec.states)
    return TrajectoryDataset(runs)


def rotating_joint_chain(n=300, k=10, amplitude=np.pi / 3, noise=0.005, seed=0):
    """Planar zig-zag chain in R^3 whose tail swings rigidly about one joint.

    Returns the (n, k, 3) configurations and the joint angles.
    """
    rng = make_rng(seed, 2)
    bonds = np.zeros((k - 1, 3))
    bonds[:, 0] = 1.0
    bonds[::2, 1] = 0.4
    bonds[1::2, 1] = -0.4
    bonds[:, 2] = 0.2 * rng.standard_normal(k - 1)
    chain = np.vstack([np.zeros(3), np.cumsum(bonds / np.linalg.norm(bonds, axis=1, keepdims=True), axis=0)])
    joint = k // 2
    angles = rng.uniform(-amplitude, amplitude, size=n)
    configs = np.empty((n, k, 3))
    for i, phi in enumerate(angles):
        c, s = np.cos(phi), np.sin(phi)
        rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        config = chain.copy()
        config[joint:] = chain[joint] + (chain[joint:] - chain[joint]) @ rotation.T
        configs[i] = config + noise * rng.standard_normal((k, 3))
    return configs, angles


def small_circle_sample(n=300, radius=np.pi / 4, half_span=0.8 * np.pi, noise_ratio=10.0, seed=0):
    """Points on S^2 spread along the small circle of `radius` about a random axis.

    The radial noise standard deviation is the along-circle arc-length
    standard deviation divided by `noise_ratio`. Returns (points, axis).
    """
    rng = make_rng(seed, 3)
    phi = rng.uniform(-half_span, half_span, size=n)
    arc_sd = np.sin(radius) * half_span / np.sqrt(3.0)
    rho = radius + rng.normal(0.0, arc_sd / noise_ratio, size=n)
    points = np.column_stack([np.sin(rho) * np.cos(phi), np.sin(rho) * np.sin(phi), np.cos(rho)])
    rotation = special_ortho_group.rvs(3, random_state=rng)
    return points @ rotation.T, rotation[:, 2]
