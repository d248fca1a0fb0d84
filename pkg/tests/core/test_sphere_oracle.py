from __future__ import annotations

import math

import numpy as np
import pytest

from eigenmax.core.exceptions import (
    ConfigError,
    InfiniteIndexError,
    InvalidEquatorMapError,
    NormalizationError,
)
from eigenmax.core.mesh import Density, SimplicialMesh
from eigenmax.core.sphere_oracle import (
    EquatorMapSpec,
    analytic_index,
    center_of_mass_normalize,
    equator_density,
    equator_energy,
    equator_energy_quadrature,
    equator_upper_bound,
    first_eigenvalue_supremum,
    harmonic_multiplicity,
    hersch_upper_bound_check,
    jacobi_spectrum,
    least_root,
    mobius_map,
    sphere_volume,
)

ALL_EQUATOR_MAPS = [(m, k) for m in range(3, 13) for k in range(m - 2)]
FINITE_INDEX_MAPS = [(m, k) for m in range(7, 13) for k in range(m - 6)]


@pytest.mark.parametrize(
    ("m", "expected"),
    [(0, 2.0), (1, 2 * math.pi), (2, 4 * math.pi), (3, 2 * math.pi**2)],
)
def test_sphere_volume(m: int, expected: float) -> None:
    assert sphere_volume(m) == pytest.approx(expected, rel=1e-14)


def test_sphere_volume_rejects_negative_dimension() -> None:
    with pytest.raises(ConfigError):
        sphere_volume(-1)


@pytest.mark.parametrize(("m", "k"), [(2, 0), (5, 3), (5, -1)])
def test_equator_map_rejects_invalid_pairs(m: int, k: int) -> None:
    with pytest.raises(InvalidEquatorMapError):
        EquatorMapSpec(m, k)


def test_equator_map_target_dimension() -> None:
    spec = EquatorMapSpec(9, 2)
    assert spec.n == 6
    assert spec.finite_index
    assert not EquatorMapSpec(6, 0).finite_index


def test_three_sphere_equator_energy() -> None:
    assert equator_energy(EquatorMapSpec(3, 0)) == pytest.approx(8 * math.pi**2, rel=1e-14)
    assert equator_upper_bound(3, 2) == pytest.approx(8 * math.pi**2, rel=1e-14)


@pytest.mark.parametrize(("m", "k"), ALL_EQUATOR_MAPS)
def test_equator_energy_matches_quadrature(m: int, k: int) -> None:
    spec = EquatorMapSpec(m, k)
    assert equator_energy_quadrature(spec) == pytest.approx(equator_energy(spec), rel=1e-8)


def test_equator_density_domain() -> None:
    spec = EquatorMapSpec(4, 1)
    assert equator_density(spec, 0.5) == pytest.approx(4.0)
    with pytest.raises(ConfigError):
        equator_density(spec, 1.0)


def test_equator_upper_bound_range() -> None:
    with pytest.raises(ConfigError):
        equator_upper_bound(4, 1)
    with pytest.raises(ConfigError):
        equator_upper_bound(4, 4)


def test_first_eigenvalue_supremum_on_round_sphere() -> None:
    assert first_eigenvalue_supremum(2) == pytest.approx(8 * math.pi)


def test_jacobi_spectrum() -> None:
    assert jacobi_spectrum(1.0, 1.0, 4) == [0.0, 4.0, 10.0, 18.0]
    with pytest.raises(ConfigError):
        jacobi_spectrum(0.0, 1.0, 3)


@pytest.mark.parametrize(
    ("k", "ell", "expected"),
    [(1, 0, 1), (1, 1, 2), (1, 5, 2), (2, 3, 7), (3, 1, 4), (3, 2, 9)],
)
def test_harmonic_multiplicity(k: int, ell: int, expected: int) -> None:
    assert harmonic_multiplicity(k, ell) == expected


def test_least_root() -> None:
    assert least_root(6) == pytest.approx(2.0, abs=1e-15)
    assert least_root(7) == pytest.approx(3 - math.sqrt(2), rel=1e-14)
    with pytest.raises(ValueError):
        least_root(5)


@pytest.mark.parametrize(("m", "k"), FINITE_INDEX_MAPS)
def test_analytic_index_is_k_plus_two(m: int, k: int) -> None:
    report = analytic_index(EquatorMapSpec(m, k))
    assert report.total == k + 2
    assert report.axis_branch == (k == 0)
    assert 1 < report.alpha_minus <= 2


def test_borderline_root_is_flagged() -> None:
    report = analytic_index(EquatorMapSpec(7, 0))
    assert report.alpha_minus == pytest.approx(2.0)
    assert report.per_ell[0].count == 2
    assert report.borderline
    assert not analytic_index(EquatorMapSpec(8, 0)).borderline


def test_analytic_index_per_mode_counts() -> None:
    report = analytic_index(EquatorMapSpec(10, 2))
    counts = {entry.ell: (entry.count, entry.multiplicity) for entry in report.per_ell}
    assert counts == {0: (1, 1), 1: (1, 3), 2: (0, 5)}


@pytest.mark.parametrize(("m", "k"), [(3, 0), (6, 0), (8, 3)])
def test_small_target_has_infinite_index(m: int, k: int) -> None:
    with pytest.raises(InfiniteIndexError) as exc_info:
        analytic_index(EquatorMapSpec(m, k))
    assert exc_info.value.n == m - 1 - k


def test_mobius_map_keeps_points_on_sphere() -> None:
    rng = np.random.default_rng(0)
    points = rng.standard_normal((50, 3))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    moved = mobius_map(points, [0.3, -0.2, 0.5])
    assert np.allclose(np.linalg.norm(moved, axis=1), 1.0, atol=1e-12)
    assert np.allclose(mobius_map(points, np.zeros(3)), points, atol=1e-15)


def test_center_of_mass_of_weighted_pole() -> None:
    points = np.array([
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
    ])
    weights = np.array([2.0, 1.0, 1.0, 1.0, 1.0])
    p, residual = center_of_mass_normalize(points, weights)
    assert np.allclose(p, [0.0, 0.0, math.sqrt(3) - 2], atol=1e-8)
    assert residual <= 1e-10


def test_center_of_mass_needs_no_heavy_point() -> None:
    points = np.eye(3)[[0, 1, 2, 0]] * np.array([[1], [1], [1], [-1]])
    with pytest.raises(NormalizationError):
        center_of_mass_normalize(points, [4.0, 1.0, 1.0, 1.0])
    with pytest.raises(ConfigError):
        center_of_mass_normalize(points, [1.0, -1.0, 1.0, 1.0])


def test_balanced_antipodal_pair_is_already_normalized() -> None:
    points = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    p, residual = center_of_mass_normalize(points, [1.0, 1.0])
    assert np.array_equal(p, np.zeros(3))
    assert residual <= 1e-15


def test_regular_tetrahedron_is_already_normalized() -> None:
    points = np.array([
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ]) / math.sqrt(3)
    p, residual = center_of_mass_normalize(points, np.ones(4))
    assert np.allclose(p, 0.0, atol=1e-15)
    assert residual <= 1e-15


def test_center_of_mass_ignores_point_order() -> None:
    points = np.array([
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
    ])
    weights = np.array([2.0, 1.0, 1.0, 1.0, 1.0])
    order = np.array([3, 0, 4, 2, 1])
    p, _ = center_of_mass_normalize(points, weights)
    relabeled, residual = center_of_mass_normalize(points[order], weights[order])
    assert np.allclose(relabeled, p, atol=1e-9)
    assert residual <= 1e-10


def test_hersch_check_bounds_first_eigenvalue(sphere_level_2: SimplicialMesh) -> None:
    report = hersch_upper_bound_check(sphere_level_2, Density.uniform(sphere_level_2))
    assert report.bound >= report.lambda_bar * (1 - 1e-10)
    assert report.max_coordinate_bound >= report.bound * (1 - 1e-12)
    assert report.bound == pytest.approx(8 * math.pi, rel=5e-2)
    assert report.reference == pytest.approx(8 * math.pi)
    assert report.center_residual <= 1e-10


def test_hersch_check_bounds_a_polar_bump(sphere_level_3: SimplicialMesh) -> None:
    centroids = sphere_level_3.vertices[sphere_level_3.cells].mean(axis=1)
    distance = np.linalg.norm(centroids - [0.0, 0.0, 1.0], axis=1)
    shape = 1 + 2 * np.exp(-((distance / 0.5) ** 2))
    masses = shape * sphere_level_3.cell_volume
    rho = Density.from_cell_masses(sphere_level_3, masses / masses.sum())
    report = hersch_upper_bound_check(sphere_level_3, rho)
    assert report.center[2] != pytest.approx(0.0, abs=1e-3)
    assert report.center_residual <= 1e-10
    assert report.bound >= report.lambda_bar * (1 - 1e-10)
    assert report.bound <= 8 * math.pi * 1.05


def test_hersch_check_rejects_torus(small_torus: SimplicialMesh) -> None:
    with pytest.raises(ConfigError, match="unit round sphere"):
        hersch_upper_bound_check(small_torus, Density.uniform(small_torus))
