import numpy as np
import pytest

from conftest import random_rotation
from nestedshape.errors import (
    ConvergenceError,
    DegenerateConfigError,
    DimensionError,
    NotProcrustesAlignedError,
    RankError,
    UnderdeterminedError,
)
from nestedshape.shape.procrustes import (
    Configuration,
    PreShape,
    from_preshape,
    gpa,
    helmert_submatrix,
    opa_fit,
    riemannian_shape_distance,
    shape_space_dimension,
    tangent_project,
    to_preshape,
    vertical_basis,
)


@pytest.mark.parametrize("k", [3, 4, 7, 10])
def test_helmert_rows_are_orthonormal_contrasts(k):
    h = helmert_submatrix(k)
    assert h.shape == (k - 1, k)
    assert np.allclose(h @ h.T, np.eye(k - 1), atol=1e-14)
    assert np.allclose(h @ np.ones(k), 0.0, atol=1e-14)


def test_configuration_needs_more_landmarks_than_dimensions():
    with pytest.raises(DimensionError):
        Configuration(np.zeros((3, 3)))


def test_preshape_ignores_location_and_scale(rng):
    c = rng.standard_normal((6, 3))
    moved = 5.0 * c + np.array([1.0, -2.0, 0.5])
    assert np.allclose(to_preshape(c).matrix, to_preshape(moved).matrix, atol=1e-12)


def test_equilateral_triangle_preshape():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    x = to_preshape(tri)
    assert x.matrix.shape == (2, 2)
    assert np.linalg.norm(x.matrix) == pytest.approx(1.0, abs=1e-12)


def test_coincident_landmarks_are_degenerate():
    with pytest.raises(DegenerateConfigError):
        to_preshape(np.ones((4, 3)))


def test_from_preshape_is_centred_unit_size(rng):
    c = from_preshape(to_preshape(rng.standard_normal((5, 2))))
    assert np.allclose(c.points.mean(axis=0), 0.0, atol=1e-14)
    assert np.linalg.norm(c.points) == pytest.approx(1.0, abs=1e-12)


def test_opa_of_identical_preshapes(rng):
    x = to_preshape(rng.standard_normal((6, 3)))
    fit = opa_fit(x, x)
    assert np.allclose(fit.rotation, np.eye(3), atol=1e-10)
    assert fit.distance == pytest.approx(0.0, abs=1e-10)
    assert fit.unique


def test_opa_recovers_rotated_copy(rng):
    ref = to_preshape(rng.standard_normal((7, 3)))
    x = PreShape(ref.matrix @ random_rotation(rng, 3))
    fit = opa_fit(x, ref)
    assert np.allclose(fit.fitted.matrix, ref.matrix, atol=1e-10)
    assert fit.distance == pytest.approx(0.0, abs=1e-8)


def test_opa_rotation_and_alignment(rng):
    for _ in range(50):
        ref = to_preshape(rng.standard_normal((6, 3)))
        x = to_preshape(rng.standard_normal((6, 3)))
        fit = opa_fit(x, ref)
        assert np.allclose(fit.rotation.T @ fit.rotation, np.eye(3), atol=1e-12)
        assert np.linalg.det(fit.rotation) == pytest.approx(1.0, abs=1e-12)
        cross = ref.matrix.T @ fit.fitted.matrix
        assert np.allclose(cross, cross.T, atol=1e-9)
        assert 0.0 <= fit.distance <= np.pi / 2


def test_opa_planar_grid_oracle(rng):
    theta = np.arange(0.0, 2 * np.pi, 1e-5)
    for _ in range(10):
        ref = to_preshape(rng.standard_normal((5, 2))).matrix
        x = to_preshape(rng.standard_normal((5, 2))).matrix
        # <ref, x R(theta)> for the rotation [[c, -s], [s, c]]
        a = ref[:, 0] @ x[:, 0] + ref[:, 1] @ x[:, 1]
        b = ref[:, 0] @ x[:, 1] - ref[:, 1] @ x[:, 0]
        best = np.arccos(np.clip(np.max(a * np.cos(theta) + b * np.sin(theta)), -1, 1))
        assert opa_fit(x, ref).distance == pytest.approx(best, abs=1e-4)


def test_opa_flags_reflection_ambiguity():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]) / np.sqrt(2)
    ref = x @ np.diag([1.0, -1.0])
    assert not opa_fit(x, ref).unique


def test_shape_distance_is_similarity_invariant(rng, helpers):
    a, b = rng.standard_normal((8, 3)), rng.standard_normal((8, 3))
    d = riemannian_shape_distance(a, b)
    for _ in range(10):
        moved = riemannian_shape_distance(helpers.similarity(rng, a), helpers.similarity(rng, b))
        assert moved == pytest.approx(d, abs=1e-8)
    assert riemannian_shape_distance(b, a) == pytest.approx(d, abs=1e-12)


def test_gpa_of_copies(rng, helpers):
    base = rng.standard_normal((6, 3))
    result = gpa([helpers.similarity(rng, base) for _ in range(12)])
    assert riemannian_shape_distance(from_preshape(result.mean), base) < 1e-10
    assert np.all(result.distances < 1e-10)


def test_gpa_two_shapes_matches_geodesic_search(rng):
    x1 = to_preshape(rng.standard_normal((5, 3)))
    x2 = to_preshape(rng.standard_normal((5, 3)))
    result = gpa([x1, x2])
    end = opa_fit(x2, x1).fitted.vec
    start = x1.vec
    rho = np.arccos(np.clip(start @ end, -1, 1))
    objectives = []
    for t in np.linspace(0.0, 1.0, 10001):
        point = (np.sin((1 - t) * rho) * start + np.sin(t * rho) * end) / np.sin(rho)
        mu = PreShape.from_vec(point, 3)
        objectives.append(np.sin(opa_fit(x1, mu).distance) ** 2 + np.sin(opa_fit(x2, mu).distance) ** 2)
    assert result.objective == pytest.approx(min(objectives), abs=1e-6)


def test_gpa_objective_never_increases(make_configs):
    result = gpa(make_configs(40, k=8, m=3, spread=0.4))
    assert np.all(np.diff(result.history) <= 1e-12)
    assert result.objective == result.history[-1]


def test_gpa_is_idempotent(make_configs):
    first = gpa(make_configs(20), tol=1e-14)
    again = gpa([fit.fitted for fit in first.fits], tol=1e-14)
    assert riemannian_shape_distance(again.mean, first.mean) < 1e-7


def test_gpa_threads_do_not_change_result(make_configs):
    configs = make_configs(30)
    serial, threaded = gpa(configs, threads=1), gpa(configs, threads=4)
    assert np.array_equal(serial.mean.matrix, threaded.mean.matrix)
    assert serial.history == threaded.history


def test_gpa_reports_last_iterate_on_failure(make_configs):
    with pytest.raises(ConvergenceError) as info:
        gpa(make_configs(10), max_iter=1)
    assert isinstance(info.value.last_iterate, PreShape)


def test_gpa_needs_two_configurations(rng):
    with pytest.raises(UnderdeterminedError):
        gpa([rng.standard_normal((5, 2))])


def test_gpa_rejects_mixed_landmark_counts(rng):
    with pytest.raises(DimensionError):
        gpa([rng.standard_normal((5, 2)), rng.standard_normal((6, 2))])


def test_tangent_coordinates(make_configs):
    result = gpa(make_configs(25))
    mean = result.mean.matrix
    assert np.allclose(tangent_project(mean, mean), 0.0, atol=1e-14)
    for fit in result.fits:
        t = tangent_project(fit.fitted, result.mean)
        assert np.sum(mean * t) == pytest.approx(0.0, abs=1e-12)
        assert np.linalg.norm(t) == pytest.approx(np.sin(fit.distance), abs=1e-10)


def test_tangent_requires_alignment(rng):
    mean = to_preshape(rng.standard_normal((6, 3)))
    other = to_preshape(rng.standard_normal((6, 3)))
    with pytest.raises(NotProcrustesAlignedError):
        tangent_project(other, mean)


def test_fits_are_orthogonal_to_rotation_directions(rng, helpers):
    result = gpa(helpers.configs(rng, 50, 10, 3, spread=0.3))
    basis = vertical_basis(result.mean)
    assert len(basis) == 3
    for b in basis:
        assert np.linalg.norm(b.matrix) == pytest.approx(1.0, abs=1e-12)
        assert np.sum(b.matrix * result.mean.matrix) == pytest.approx(0.0, abs=1e-12)
        for fit in result.fits:
            assert abs(np.sum(b.matrix * fit.fitted.matrix)) < 1e-9


def test_vertical_basis_needs_full_rank():
    x = np.zeros((4, 3))
    x[:, :2] = np.arange(8.0).reshape(4, 2)
    with pytest.raises(RankError):
        vertical_basis(x / np.linalg.norm(x))


@pytest.mark.parametrize("k, m, dim", [(3, 2, 2), (10, 3, 23), (6, 3, 11), (5, 2, 6)])
def test_shape_space_dimension(k, m, dim):
    assert shape_space_dimension(k, m) == dim
