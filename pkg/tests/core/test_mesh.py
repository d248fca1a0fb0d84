from __future__ import annotations

import math

import numpy as np
import pytest

from eigenmax.core.exceptions import (
    ConfigError,
    DegenerateCellError,
    MeshError,
    OpenMeshError,
)
from eigenmax.core.mesh import (
    Density,
    SimplicialMesh,
    assemble_mass,
    assemble_stiffness,
    build_flat_torus,
    build_round_sphere,
    cell_energy_density,
    cell_product_averages,
    mass_template,
)

TWO_PI = 2 * math.pi


@pytest.mark.parametrize("n", [3, 5, 8])
def test_flat_torus_counts_and_volume(n: int) -> None:
    mesh = build_flat_torus(2, n, TWO_PI)
    assert mesh.n_vertices == n * n
    assert mesh.n_cells == 2 * n * n
    assert mesh.total_volume == pytest.approx(TWO_PI**2, rel=1e-12)
    assert np.all(mesh.vertex_cell_count() == 6)


def test_flat_torus_3d_volume() -> None:
    mesh = build_flat_torus(3, 4, 1.0)
    assert mesh.n_cells == 6 * 4**3
    assert mesh.total_volume == pytest.approx(1.0, rel=1e-12)


def test_rectangular_torus_uses_per_axis_sides() -> None:
    mesh = build_flat_torus(2, 4, 1.0, sides=(2.0, 3.0))
    assert mesh.total_volume == pytest.approx(6.0, rel=1e-12)
    assert mesh.period is not None
    assert mesh.period.tolist() == [2.0, 3.0]


@pytest.mark.parametrize(
    ("m", "n", "sides"), [(4, 8, None), (2, 2, None), (2, 8, (1.0, -1.0))]
)
def test_flat_torus_rejects_invalid_parameters(
    m: int, n: int, sides: tuple[float, ...] | None
) -> None:
    with pytest.raises(ConfigError):
        build_flat_torus(m, n, 1.0, sides=sides)


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_icosphere_counts_and_radius(level: int) -> None:
    mesh = build_round_sphere(2, level)
    assert mesh.n_vertices == 10 * 4**level + 2
    assert mesh.n_cells == 20 * 4**level
    assert np.allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0, atol=1e-14)


def test_icosphere_volume_increases_to_round_area() -> None:
    volumes = [build_round_sphere(2, level).total_volume for level in range(5)]
    assert all(a < b for a, b in zip(volumes, volumes[1:], strict=False))
    assert volumes[-1] < 4 * math.pi
    assert volumes[-1] == pytest.approx(4 * math.pi, rel=5e-3)


def test_three_sphere_refinement() -> None:
    coarse = build_round_sphere(3, 0)
    assert coarse.n_vertices == 8
    assert coarse.n_cells == 16
    volumes = [build_round_sphere(3, level).total_volume for level in range(4)]
    assert all(a < b for a, b in zip(volumes, volumes[1:], strict=False))
    assert volumes[-1] == pytest.approx(2 * math.pi**2, rel=5e-2)


def test_round_sphere_respects_cell_limit() -> None:
    with pytest.raises(ConfigError, match="limit"):
        build_round_sphere(2, 6, max_cells=1000)


def test_open_mesh_is_rejected() -> None:
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(OpenMeshError) as exc_info:
        SimplicialMesh(2, vertices, np.array([[0, 1, 2]]))
    assert exc_info.value.bad_facets == 3


def test_degenerate_cell_is_named() -> None:
    vertices = np.array([
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
    ])
    cells = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
    with pytest.raises(DegenerateCellError) as exc_info:
        SimplicialMesh(2, vertices, cells)
    assert exc_info.value.cell == 1


def test_cell_index_out_of_range() -> None:
    with pytest.raises(MeshError, match="outside"):
        SimplicialMesh(2, np.zeros((3, 3)), np.array([[0, 1, 5]]))


def test_mass_template_sums_to_one() -> None:
    for dim in (2, 3):
        assert mass_template(dim).sum() == pytest.approx(1.0, rel=1e-15)


def test_stiffness_annihilates_constants(sphere_level_2: SimplicialMesh) -> None:
    K = assemble_stiffness(sphere_level_2)
    assert np.allclose(K @ np.ones(sphere_level_2.n_vertices), 0.0, atol=1e-12)
    assert abs(K - K.T).max() == 0.0
    assert np.all(np.linalg.eigvalsh(K.toarray()) > -1e-12)


def test_stiffness_of_torus_cosine_wave(small_torus: SimplicialMesh) -> None:
    n = 6
    h = TWO_PI / n
    u = np.cos(small_torus.vertices[:, 0])
    energy = u @ (assemble_stiffness(small_torus) @ u)
    # The interpolant depends on x alone, so the energy is the 1D difference sum.
    expected = TWO_PI * 2 * n * math.sin(h / 2) ** 2 / h
    assert energy == pytest.approx(expected, rel=1e-12)


def test_mass_matrix_total_is_density_mass(sphere_level_2: SimplicialMesh) -> None:
    rng = np.random.default_rng(3)
    rho = Density(sphere_level_2, rng.uniform(0.1, 2.0, sphere_level_2.n_cells))
    M = assemble_mass(sphere_level_2, rho)
    assert M.sum() == pytest.approx(rho.mass, rel=1e-12)


def test_mass_matrix_is_linear_in_density(sphere_level_2: SimplicialMesh) -> None:
    rng = np.random.default_rng(5)
    first = rng.uniform(0.1, 2.0, sphere_level_2.n_cells)
    second = rng.uniform(0.1, 2.0, sphere_level_2.n_cells)
    combined = assemble_mass(sphere_level_2, 0.7 * first + 2.5 * second)
    separate = 0.7 * assemble_mass(sphere_level_2, first) + 2.5 * assemble_mass(
        sphere_level_2, second
    )
    assert abs(combined - separate).max() <= 1e-13 * abs(combined).max()


def test_mass_rejects_negative_density(small_torus: SimplicialMesh) -> None:
    values = np.ones(small_torus.n_cells)
    values[4] = -1.0
    with pytest.raises(ConfigError, match="cell 4"):
        assemble_mass(small_torus, values)


def test_density_validation(small_torus: SimplicialMesh) -> None:
    with pytest.raises(ConfigError):
        Density(small_torus, np.ones(3))
    with pytest.raises(ConfigError):
        Density(small_torus, np.full(small_torus.n_cells, 2.0), cap=1.0)
    with pytest.raises(ConfigError):
        Density(small_torus, np.zeros(small_torus.n_cells))


def test_density_uniform_and_masses(small_torus: SimplicialMesh) -> None:
    rho = Density.uniform(small_torus)
    assert rho.mass == pytest.approx(1.0, rel=1e-14)
    masses = rho.cell_mass
    again = Density.from_cell_masses(small_torus, masses)
    assert np.allclose(again.values, rho.values, rtol=1e-14)
    assert rho.scaled(3.0).mass == pytest.approx(3.0, rel=1e-14)


def test_identity_map_energy_density_is_two(sphere_level_2: SimplicialMesh) -> None:
    density = cell_energy_density(sphere_level_2, sphere_level_2.vertices)
    assert np.allclose(density, 2.0, rtol=1e-10)


def test_constant_map_has_zero_energy_density(small_torus: SimplicialMesh) -> None:
    density = cell_energy_density(small_torus, np.ones(small_torus.n_vertices))
    assert np.allclose(density, 0.0, atol=1e-14)


def test_cell_product_averages_of_constants(small_torus: SimplicialMesh) -> None:
    values = np.ones((small_torus.n_vertices, 2))
    products = cell_product_averages(small_torus, values)
    assert products.shape == (small_torus.n_cells, 2, 2)
    assert np.allclose(products, 1.0, rtol=1e-14)


def test_cell_product_averages_match_mass_matrix(sphere_level_1: SimplicialMesh) -> None:
    rng = np.random.default_rng(7)
    u = rng.standard_normal(sphere_level_1.n_vertices)
    rho = rng.uniform(0.5, 1.5, sphere_level_1.n_cells)
    averages = cell_product_averages(sphere_level_1, u[:, None])[:, 0, 0]
    expected = u @ (assemble_mass(sphere_level_1, rho) @ u)
    assert np.sum(averages * rho * sphere_level_1.cell_volume) == pytest.approx(
        expected, rel=1e-12
    )
