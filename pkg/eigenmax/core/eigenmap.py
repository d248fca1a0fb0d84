from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import sparse

from eigenmax.core.mesh import (
    SimplicialMesh,
    assemble_mass,
    assemble_stiffness,
    cell_energy_density,
)
from eigenmax.core.projection import project_psd
from eigenmax.core.spectral import Spectrum
from eigenmax.core.utils import logger

type FloatArray = NDArray[np.float64]

NORM_EXPONENTS = (2, 4, 8, 16)
RANK_TOL = 1e-10
DEFAULT_DEFECT_THRESHOLD = 1e-2


@dataclass(frozen=True, eq=False)
class Eigenmap:
    """Sphere-valued map whose components combine one eigenvalue cluster."""

    components: FloatArray
    gram: FloatArray
    cluster: range
    eigenvalue: float
    defect: float
    spherical: bool

    @property
    def rank(self) -> int:
        return int(self.components.shape[1])

    @property
    def pointwise_norm(self) -> FloatArray:
        return np.einsum("va,va->v", self.components, self.components)


def _defect(phi: FloatArray, gram: FloatArray) -> FloatArray:
    return np.einsum("vi,ij,vj->v", phi, gram, phi) - 1.0


def _smooth_sup(residual: FloatArray, p: int) -> tuple[float, FloatArray]:
    """p-mean of |residual| and its derivative with respect to the residual."""
    top = float(np.max(np.abs(residual)))
    if top == 0:
        return 0.0, np.zeros_like(residual)
    ratio = np.abs(residual) / top
    mean = float(np.mean(ratio**p))
    value = top * mean ** (1 / p)
    weights = mean ** (1 / p - 1) * ratio ** (p - 1) * np.sign(residual) / len(residual)
    return value, weights


def _descend(
    phi: FloatArray, gram: FloatArray, rank: int, p: int, iterations: int
) -> FloatArray:
    step = 1.0 / float(np.max(np.einsum("vi,vi->v", phi, phi)))
    value, weights = _smooth_sup(_defect(phi, gram), p)
    for _ in range(iterations):
        gradient = phi.T @ (weights[:, None] * phi)
        while step > 1e-16:
            trial = project_psd(gram - step * gradient, rank)
            trial_value, trial_weights = _smooth_sup(_defect(phi, trial), p)
            if trial_value < value:
                break
            step *= 0.5
        else:
            break
        improvement = value - trial_value
        gram, value, weights = trial, trial_value, trial_weights
        step *= 2
        if improvement <= 1e-14 * max(value, 1e-300):
            break
    return gram


def extract_eigenmap(
    spectrum: Spectrum,
    k: int,
    *,
    defect_threshold: float = DEFAULT_DEFECT_THRESHOLD,
    iterations: int = 300,
) -> Eigenmap:
    """Factor a low-rank PSD Gram matrix over the k-th cluster into a sphere-valued map.

    The Gram matrix minimizes a p-mean of the vertex defect sum G_ij phi_i phi_j - 1
    for increasing p, approaching the sup norm; its rank never exceeds
    k_max - k + 1.
    """
    cluster = spectrum.cluster_of(k)
    phi = spectrum.eigenvectors[:, cluster.start : cluster.stop]
    rank_bound = min(cluster.stop - k, phi.shape[1])

    gram = np.eye(phi.shape[1]) / float(np.mean(np.einsum("vi,vi->v", phi, phi)))
    gram = project_psd(gram, rank_bound)
    best, best_defect = gram, float(np.max(np.abs(_defect(phi, gram))))
    for p in NORM_EXPONENTS:
        gram = _descend(phi, gram, rank_bound, p, iterations)
        defect = float(np.max(np.abs(_defect(phi, gram))))
        logger.debug("Eigenmap p=%d: defect %.3e", p, defect)
        if defect < best_defect:
            best, best_defect = gram, defect

    values, vectors = np.linalg.eigh(best)
    keep = values > RANK_TOL * max(float(values.max()), 0.0)
    components = phi @ (vectors[:, keep] * np.sqrt(values[keep]))
    return Eigenmap(
        components=components[:, ::-1],
        gram=best,
        cluster=cluster,
        eigenvalue=spectrum.eigenvalue(k),
        defect=best_defect,
        spherical=best_defect <= defect_threshold,
    )


def map_energy(mesh: SimplicialMesh, components: FloatArray) -> float:
    return float(cell_energy_density(mesh, components) @ mesh.cell_volume)


def equation_residual(
    K: sparse.spmatrix, M: sparse.spmatrix, eigenmap: Eigenmap
) -> float:
    """Largest relative residual of K u = lambda M u over the components."""
    u = eigenmap.components
    ku = K @ u
    scale = np.maximum(np.linalg.norm(ku, axis=0), np.finfo(float).tiny)
    return float(np.max(np.linalg.norm(ku - eigenmap.eigenvalue * (M @ u), axis=0) / scale))


def harmonic_residual(mesh: SimplicialMesh, eigenmap: Eigenmap | FloatArray) -> float:
    """Relative residual of K u = M(|du|^2) u; zero for a constant map."""
    u = eigenmap.components if isinstance(eigenmap, Eigenmap) else np.asarray(eigenmap)
    if u.ndim == 1:
        u = u[:, None]
    K = assemble_stiffness(mesh)
    ku = K @ u
    scale = float(np.linalg.norm(ku))
    if scale == 0:
        return 0.0
    weighted = assemble_mass(mesh, cell_energy_density(mesh, u))
    return float(np.linalg.norm(ku - weighted @ u)) / scale
