import numpy as np
import pytest

from conftest import random_rotation, random_unit
from nestedshape.data.synthetic import small_circle_sample
from nestedshape.errors import DegenerateVarianceError, DimensionError, RangeError, UnderdeterminedError
from nestedshape.geometry.sphere import log_map, spherical_distance
from nestedshape.models.pns import (
    PNSModel,
    fit_subsphere,
    pns_decompose,
    pns_reconstruct,
    pns_transform,
    variance_by_component,
)


def _circle(rng, axis, radius, n):
    basis = np.linalg.svd(axis[None, :])[2][1:]
    phi = rng.uniform(0.0, 2 * np.pi, n)
    directions = np.cos(phi)[:, None] * basis[0] + np.sin(phi)[:, None] * basis[1]
    return np.cos(radius) * axis + np.sin(radius) * directions


def _grid_axes(step_deg=2.0):
    theta = np.radians(np.arange(0.0, 180.0 + step_deg / 2, step_deg))
    phi = np.radians(np.arange(0.0, 360.0, step_deg))
    t, f = np.meshgrid(theta, phi, indexing="ij")
    return np.column_stack([(np.sin(t) * np.cos(f)).ravel(), (np.sin(t) * np.sin(f)).ravel(), np.cos(t).ravel()])


def test_exact_small_circle(rng):
    axis = random_unit(rng, 3)
    points = _circle(rng, axis, 0.7, 50)
    sphere, residuals = fit_subsphere(points)
    assert sphere.radius == pytest.approx(0.7, abs=1e-8)
    assert spherical_distance(sphere.axis, axis) < 1e-8
    assert np.max(np.abs(residuals)) < 1e-8


def test_fit_beats_two_degree_grid(rng):
    axes = _grid_axes()
    for _ in range(50):
        points = np.array([random_unit(rng, 3) for _ in range(20)])
        _, residuals = fit_subsphere(points)
        rho = 2.0 * np.arctan2(
            np.linalg.norm(points[None, :, :] - axes[:, None, :], axis=2),
            np.linalg.norm(points[None, :, :] + axes[:, None, :], axis=2),
        )
        grid_best = np.min(np.sum((rho - rho.mean(axis=1, keepdims=True)) ** 2, axis=1))
        assert np.sum(residuals ** 2) <= grid_best + 1e-6


def test_fitted_radius_in_range(rng):
    for _ in range(10):
        points = np.array([random_unit(rng, 4) for _ in range(30)])
        sphere, _ = fit_subsphere(points)
        assert 0.0 < sphere.radius <= np.pi / 2


def test_subsphere_needs_enough_points(rng):
    with pytest.raises(UnderdeterminedError):
        fit_subsphere(np.array([random_unit(rng, 3) for _ in range(3)]))


def test_pns_needs_four_points(rng):
    with pytest.raises(UnderdeterminedError):
        pns_decompose(np.array([random_unit(rng, 3) for _ in range(3)]))


def test_coordinate_layout(rng):
    points = np.array([random_unit(rng, 4) for _ in range(40)])
    model = pns_decompose(points)
    assert model.coordinates.shape == (3, 40)
    assert len(model.levels) == 2
    assert np.all(np.abs(model.coordinates[0]) <= model.cut_point)
    # levels[j] fills row d - 1 - j
    assert np.array_equal(model.coordinates[2], model.levels[0].residuals)
    assert np.array_equal(model.coordinates[1], model.levels[1].residuals)


def test_transform_replays_the_fitted_chain(rng):
    points = np.array([random_unit(rng, 5) for _ in range(60)])
    model = pns_decompose(points)
    assert np.allclose(pns_transform(model, points), model.coordinates, atol=1e-10)


def test_transform_dimension_mismatch(rng):
    model = pns_decompose(np.array([random_unit(rng, 3) for _ in range(10)]))
    with pytest.raises(DimensionError):
        pns_transform(model, np.array([random_unit(rng, 4)]))


def test_reconstruction_round_trip(rng):
    points = np.array([random_unit(rng, 6) for _ in range(100)])
    model = pns_decompose(points)
    for i, x in enumerate(points):
        assert spherical_distance(pns_reconstruct(model, model.coordinates[:, i]), x) < 1e-8


def test_first_component_sweep_stays_on_every_level(rng):
    model = pns_decompose(np.array([random_unit(rng, 4) for _ in range(50)]))
    sweep = np.linspace(-0.9, 0.9, 21) * model.cut_point
    rebuilt = []
    for e0 in sweep:
        coords = np.zeros(model.d)
        coords[0] = e0
        rebuilt.append(pns_reconstruct(model, coords).coords)
    replayed = pns_transform(model, np.array(rebuilt))
    assert np.allclose(replayed[1:], 0.0, atol=1e-8)
    assert np.allclose(replayed[0], sweep, atol=1e-8)


def test_reconstruct_rejects_out_of_range(rng):
    model = pns_decompose(np.array([random_unit(rng, 3) for _ in range(20)]))
    with pytest.raises(RangeError):
        pns_reconstruct(model, [2 * model.cut_point, 0.0])
    with pytest.raises(DimensionError):
        pns_reconstruct(model, [0.0, 0.0, 0.0])


def test_variance_by_component(rng):
    model = pns_decompose(np.array([random_unit(rng, 4) for _ in range(30)]))
    shares = variance_by_component(model)
    assert shares.sum() == pytest.approx(100.0)
    flat = PNSModel(model.levels, model.final_mean_angle, model.final_scale, np.zeros_like(model.coordinates))
    with pytest.raises(DegenerateVarianceError):
        variance_by_component(flat)


def test_common_rotation_leaves_fit_unchanged(rng):
    points, _ = small_circle_sample(n=150, seed=1)
    rotation = random_rotation(rng, 3)
    a, b = pns_decompose(points), pns_decompose(points @ rotation.T)
    assert b.levels[0].radius == pytest.approx(a.levels[0].radius, abs=1e-8)
    assert np.allclose(variance_by_component(a), variance_by_component(b), atol=1e-8)
    assert np.allclose(rotation @ a.levels[0].axis.coords, b.levels[0].axis.coords, atol=1e-6)


def test_small_circle_beats_tangent_pca():
    points, axis = small_circle_sample(n=300, radius=np.pi / 4, noise_ratio=10.0)
    model = pns_decompose(points)
    pns_share = variance_by_component(model)[0]

    center = points.mean(axis=0)
    center /= np.linalg.norm(center)
    tangents = np.array([log_map(center, x).vec for x in points])
    centered = tangents - tangents.mean(axis=0)
    eig = np.linalg.eigvalsh(centered.T @ centered)[::-1]
    pca_share = 100.0 * eig[0] / eig.sum()

    assert pns_share > pca_share
    assert pns_share >= 60.0
    assert spherical_distance(axis, model.levels[0].axis) < 0.1
