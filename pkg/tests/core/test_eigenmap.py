from __future__ import annotations

import numpy as np
import pytest
from scipy import sparse

from eigenmax.core.eigenmap import (
    equation_residual,
    extract_eigenmap,
    harmonic_residual,
    map_energy,
)
from eigenmax.core.mesh import (
    Density,
    SimplicialMesh,
    assemble_mass,
    assemble_stiffness,
    build_round_sphere,
    cell_energy_density,
)
from eigenmax.core.spectral import (
    Spectrum,
    reference_mass,
    solve_cluster,
    spectral_index,
)
from tests.stubs.fake_spectrum import fake_spectrum


def _round_sphere_spectrum(
    mesh: SimplicialMesh,
) -> tuple[sparse.csr_matrix, sparse.csr_matrix, Spectrum]:
    rho = Density.uniform(mesh)
    K = assemble_stiffness(mesh)
    M = assemble_mass(mesh, rho)
    return K, M, solve_cluster(K, M, 1)


def test_first_cluster_of_round_sphere_is_spherical(sphere_level_3: SimplicialMesh) -> None:
    _, _, spectrum = _round_sphere_spectrum(sphere_level_3)
    eigenmap = extract_eigenmap(spectrum, 1)
    assert eigenmap.cluster == range(1, 4)
    assert eigenmap.rank == 3
    assert eigenmap.spherical
    assert eigenmap.defect < 1e-2
    assert np.allclose(eigenmap.pointwise_norm, 1.0, atol=eigenmap.defect + 1e-9)


def test_rank_is_bounded_by_position_in_cluster(sphere_level_3: SimplicialMesh) -> None:
    _, _, spectrum = _round_sphere_spectrum(sphere_level_3)
    assert extract_eigenmap(spectrum, 2).rank <= 2
    assert extract_eigenmap(spectrum, 3).rank == 1


def test_single_eigenvector_cannot_be_spherical() -> None:
    vectors = np.zeros((8, 2))
    vectors[:, 0] = 1.0
    vectors[:, 1] = np.linspace(1.0, 2.0, 8)
    eigenmap = extract_eigenmap(fake_spectrum([0.0, 1.0], vectors), 1)
    assert eigenmap.rank == 1
    assert eigenmap.defect >= 0.6 - 1e-12
    assert not eigenmap.spherical


def test_components_satisfy_the_eigenvalue_equation(sphere_level_3: SimplicialMesh) -> None:
    K, M, spectrum = _round_sphere_spectrum(sphere_level_3)
    eigenmap = extract_eigenmap(spectrum, 1)
    assert equation_residual(K, M, eigenmap) < 1e-6


def test_map_energy_is_eigenvalue_times_gram_trace(sphere_level_3: SimplicialMesh) -> None:
    _, _, spectrum = _round_sphere_spectrum(sphere_level_3)
    eigenmap = extract_eigenmap(spectrum, 1)
    energy = map_energy(sphere_level_3, eigenmap.components)
    assert energy == pytest.approx(eigenmap.eigenvalue * np.trace(eigenmap.gram), rel=1e-6)


def test_constant_map_is_trivially_harmonic(small_torus: SimplicialMesh) -> None:
    assert harmonic_residual(small_torus, np.ones(small_torus.n_vertices)) == 0.0


def test_identity_map_residual_shrinks_under_refinement(
    sphere_level_1: SimplicialMesh, sphere_level_3: SimplicialMesh
) -> None:
    coarse = harmonic_residual(sphere_level_1, sphere_level_1.vertices)
    fine = harmonic_residual(sphere_level_3, sphere_level_3.vertices)
    assert fine < coarse
    assert fine < 0.1


@pytest.mark.parametrize("level", [2, 3, 4])
def test_identity_map_has_stability_index_one(level: int) -> None:
    mesh = build_round_sphere(2, level)
    K, M, spectrum = _round_sphere_spectrum(mesh)
    report = spectral_index(K, spectrum.eigenvalue(1) * M, reference_mass(mesh))
    assert report.count == 1


@pytest.mark.parametrize("level", [3, 4, pytest.param(5, marks=pytest.mark.slow)])
def test_energy_density_index_of_first_eigenmap_is_one(level: int) -> None:
    mesh = build_round_sphere(2, level)
    K, _, spectrum = _round_sphere_spectrum(mesh)
    eigenmap = extract_eigenmap(spectrum, 1)
    energy = assemble_mass(mesh, cell_energy_density(mesh, eigenmap.components))
    assert spectral_index(K, energy, reference_mass(mesh)).count == 1


def test_torus_fourier_eigenmap_is_spherical_and_harmonic(torus_32: SimplicialMesh) -> None:
    rho = Density.uniform(torus_32)
    spectrum = solve_cluster(assemble_stiffness(torus_32), assemble_mass(torus_32, rho), 1)
    eigenmap = extract_eigenmap(spectrum, 1)
    assert eigenmap.cluster == range(1, 5)
    assert eigenmap.rank <= 4
    assert eigenmap.defect < 1e-6
    assert np.allclose(eigenmap.pointwise_norm, 1.0, atol=1e-6)
    assert eigenmap.spherical
    assert harmonic_residual(torus_32, eigenmap) < 0.04
