from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from eigenmax.core.config import SolverConfig
from eigenmax.core.exceptions import (
    ConfigError,
    DeflationExhaustedError,
    EmptyClusterError,
    KernelDimensionError,
    ZeroMassError,
)
from eigenmax.core.mesh import Density, SimplicialMesh, assemble_mass
from eigenmax.core.types import IndexReport, SpectrumReport
from eigenmax.core.utils import logger

type FloatArray = NDArray[np.float64]
type Matrix = sparse.spmatrix | sparse.sparray

INDEX_BLOCK = 16
_DEFAULT_SOLVER = SolverConfig()


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Lowest eigenpairs of K phi = lambda M phi, M-orthonormal, ascending."""

    eigenvalues: FloatArray
    eigenvectors: FloatArray
    cluster_tol: float = _DEFAULT_SOLVER.cluster_tol
    residuals: FloatArray | None = None

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def eigenvalue(self, k: int) -> float:
        if not 0 <= k < self.count:
            raise EmptyClusterError(k, self.count)
        return float(self.eigenvalues[k])

    def _joined(self, a: int, b: int) -> bool:
        lo, hi = self.eigenvalues[a], self.eigenvalues[b]
        return hi - lo <= self.cluster_tol * max(abs(lo), abs(hi))

    def clusters(self) -> list[range]:
        starts = [0] + [i for i in range(1, self.count) if not self._joined(i - 1, i)]
        ends = [*starts[1:], self.count]
        return [range(a, b) for a, b in zip(starts, ends, strict=True)]

    def cluster_of(self, k: int) -> range:
        if not 0 <= k < self.count:
            raise EmptyClusterError(k, self.count)
        return next(c for c in self.clusters() if k in c)

    def k_max(self, k: int) -> int:
        return self.cluster_of(k)[-1]

    def is_closed(self, k: int) -> bool:
        """True when a strictly larger eigenvalue bounds the cluster of k."""
        return self.cluster_of(k).stop < self.count

    def with_cluster_tol(self, cluster_tol: float) -> Spectrum:
        return replace(self, cluster_tol=cluster_tol)

    def to_report(self, rho: Density | None = None, k: int | None = None) -> SpectrumReport:
        residuals = self.residuals if self.residuals is not None else []
        lambda_bar_k = None
        if rho is not None and k is not None:
            lambda_bar_k = lambda_bar(self, rho, k)
        return SpectrumReport(
            eigenvalues=[float(x) for x in self.eigenvalues],
            residuals=[float(x) for x in residuals],
            clusters=[list(c) for c in self.clusters()],
            cluster_tol=self.cluster_tol,
            lambda_bar=lambda_bar_k,
            mass=None if rho is None else rho.mass,
        )


def _total_mass(M: Matrix) -> float:
    total = float(M.sum())
    if not total > 0 or not np.isfinite(total):
        raise ZeroMassError(total)
    return total


def support_dimension(M: Matrix, mass_floor: float) -> int:
    """Number of vertices whose mass-matrix diagonal exceeds the kernel floor."""
    floor = mass_floor * _total_mass(M)
    return int(np.count_nonzero(M.diagonal() > floor))


def _restricted_eigh(
    A: FloatArray, B: FloatArray, count: int, floor: float
) -> tuple[FloatArray, FloatArray]:
    """Lowest pairs of A x = w B x for semidefinite B, on the complement of ker B.

    Directions in ker B are eliminated by a Schur complement; the returned vectors
    carry the harmonic extension into those directions.
    """
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    b_values, basis = scipy.linalg.eigh(B)
    keep = b_values > floor
    if keep.sum() < count:
        raise KernelDimensionError(count, int(keep.sum()))
    if keep.all():
        return scipy.linalg.eigh(A, B, subset_by_index=[0, count - 1])

    rotated = basis.T @ A @ basis
    kernel = ~keep
    a_pp = rotated[np.ix_(keep, keep)]
    a_pz = rotated[np.ix_(keep, kernel)]
    coupling = scipy.linalg.solve(
        rotated[np.ix_(kernel, kernel)], a_pz.T, assume_a="sym"
    )
    schur = a_pp - a_pz @ coupling
    values, vectors = scipy.linalg.eigh(
        0.5 * (schur + schur.T), np.diag(b_values[keep]), subset_by_index=[0, count - 1]
    )
    full = np.zeros((len(b_values), count))
    full[keep] = vectors
    full[kernel] = -coupling @ vectors
    return values, basis @ full


def _shift_invert(
    A: Matrix, B: Matrix, sigma: float
) -> LinearOperator:
    lu = splu(sparse.csc_matrix(A - sigma * B))
    n = A.shape[0]
    return LinearOperator((n, n), matvec=lu.solve, dtype=np.float64)


def _ritz_cleanup(
    K: Matrix, M: Matrix, vectors: FloatArray
) -> tuple[FloatArray, FloatArray]:
    projected_k = vectors.T @ (K @ vectors)
    projected_m = vectors.T @ (M @ vectors)
    values, rotation = scipy.linalg.eigh(
        0.5 * (projected_k + projected_k.T), 0.5 * (projected_m + projected_m.T)
    )
    return values, vectors @ rotation


def _fix_signs(vectors: FloatArray) -> FloatArray:
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _residuals(
    K: Matrix, M: Matrix, values: FloatArray, vectors: FloatArray
) -> FloatArray:
    kx = K @ vectors
    mx = M @ vectors
    scale = np.linalg.norm(kx, axis=0) + np.abs(values) * np.linalg.norm(mx, axis=0)
    residual = np.linalg.norm(kx - mx * values, axis=0)
    return residual / np.maximum(scale, np.finfo(float).tiny)


def solve_eigen(
    K: Matrix,
    M: Matrix,
    k_max_wanted: int,
    *,
    config: SolverConfig | None = None,
    seed: int = 0,
) -> Spectrum:
    """Lowest k_max_wanted + 1 eigenpairs of the pencil (K, M) off the kernel of M."""
    config = config or _DEFAULT_SOLVER
    if K.shape != M.shape or K.shape[0] != K.shape[1]:
        raise ConfigError(f"Operand shapes differ: K {K.shape}, M {M.shape}")
    total = _total_mass(M)
    q = k_max_wanted + 1
    available = support_dimension(M, config.mass_floor)
    if q > available:
        raise KernelDimensionError(q, available)
    n = K.shape[0]
    floor = config.mass_floor * total

    if n <= config.dense_limit or 2 * q >= available:
        _, vectors = _restricted_eigh(K.toarray(), M.toarray(), q, floor)
    else:
        sigma = -config.sigma_rel / total
        v0 = np.random.default_rng(seed).standard_normal(n)
        _, vectors = eigsh(
            sparse.csr_matrix(K),
            k=q,
            M=sparse.csr_matrix(M),
            sigma=sigma,
            which="LM",
            v0=v0,
            tol=config.solver_tol,
            OPinv=_shift_invert(K, M, sigma),
        )
        logger.debug("Shift-invert solve: n=%d q=%d sigma=%.3e", n, q, sigma)

    values, vectors = _ritz_cleanup(K, M, vectors)
    vectors = _fix_signs(vectors)
    return Spectrum(
        eigenvalues=values,
        eigenvectors=vectors,
        cluster_tol=config.cluster_tol,
        residuals=_residuals(K, M, values, vectors),
    )


def solve_cluster(
    K: Matrix,
    M: Matrix,
    k: int,
    *,
    config: SolverConfig | None = None,
    seed: int = 0,
) -> Spectrum:
    """Like `solve_eigen`, but enlarges the request until the cluster of k is closed."""
    config = config or _DEFAULT_SOLVER
    limit = support_dimension(M, config.mass_floor) - 1
    wanted = min(k + config.cluster_padding, limit)
    while True:
        spectrum = solve_eigen(K, M, wanted, config=config, seed=seed)
        if spectrum.is_closed(k) or wanted >= limit:
            return spectrum
        logger.debug("Cluster of %d still open with %d pairs", k, spectrum.count)
        wanted = min(2 * wanted, limit)


def lambda_bar(spectrum: Spectrum, rho: Density, k: int) -> float:
    return spectrum.eigenvalue(k) * rho.mass


def reference_mass(mesh: SimplicialMesh) -> sparse.csr_matrix:
    return assemble_mass(mesh, np.ones(mesh.n_cells))


def _largest_pencil_value(M: Matrix, R: Matrix, dense: bool) -> float:
    if dense:
        top = scipy.linalg.eigh(
            M.toarray(), R.toarray(), eigvals_only=True, subset_by_index=[M.shape[0] - 1] * 2
        )
        return float(top[0])
    top = eigsh(sparse.csr_matrix(M), k=1, M=sparse.csr_matrix(R), which="LA", tol=1e-6)[0]
    return float(top[0])


def spectral_index(
    K: Matrix,
    M: Matrix,
    reference: Matrix | None = None,
    *,
    cutoff_tol: float | None = None,
    config: SolverConfig | None = None,
) -> IndexReport:
    """Count negative eigenvalues of K - M measured in the reference inner product.

    The count is the inertia of K - M and does not depend on the reference; the
    reference only fixes the scale of the cutoff, which is relative to the largest
    eigenvalue of (M, reference).
    """
    config = config or _DEFAULT_SOLVER
    tol = config.index_cutoff_tol if cutoff_tol is None else cutoff_tol
    n = K.shape[0]
    if K.shape != M.shape:
        raise ConfigError(f"Operand shapes differ: K {K.shape}, M {M.shape}")
    R = sparse.identity(n, format="csr") if reference is None else reference
    form = "K - M" + ("" if reference is None else " in the reference mass")
    if M.nnz == 0 or abs(M).max() == 0:
        return IndexReport(count=0, tested_form=form, cutoff_tol=tol)

    dense = n <= config.dense_limit
    scale = _largest_pencil_value(M, R, dense)
    cutoff = -tol * scale
    A = sparse.csr_matrix(K - M)

    if not dense:
        sigma = -2.0 * scale
        op = _shift_invert(A, R, sigma)
        v0 = np.ones(n)
        block = min(INDEX_BLOCK, n - 2)
        while True:
            values = np.sort(
                eigsh(
                    A,
                    k=block,
                    M=sparse.csr_matrix(R),
                    sigma=sigma,
                    which="LM",
                    v0=v0,
                    OPinv=op,
                    return_eigenvectors=False,
                )
            )
            if values[-1] >= cutoff:
                break
            if block >= n - 2:
                dense = True
                logger.info("Index count needs the dense path (n=%d)", n)
                break
            block = min(2 * block, n - 2)
    if dense:
        values = scipy.linalg.eigh(A.toarray(), R.toarray(), eigvals_only=True)

    negative = values[values < cutoff]
    return IndexReport(
        count=int(negative.size),
        tested_form=form,
        cutoff_tol=tol,
        negative_eigenvalues=[float(x) for x in negative],
    )


def constrained_lambda_k(
    K: Matrix,
    M: Matrix,
    orthogonality_set: list[FloatArray] | FloatArray,
    *,
    config: SolverConfig | None = None,
    seed: int = 0,
) -> float:
    """Minimum Rayleigh quotient over vectors M-orthogonal to the given set."""
    config = config or _DEFAULT_SOLVER
    n = K.shape[0]
    vectors = np.asarray(orthogonality_set, dtype=np.float64).reshape(-1, n).T
    if vectors.shape[1] == 0:
        return solve_eigen(K, M, 0, config=config, seed=seed).eigenvalue(0)

    total = _total_mass(M)
    constraints = np.asarray(M @ vectors)
    norms = np.linalg.norm(constraints, axis=0)
    if np.any(norms <= config.mass_floor * total * np.linalg.norm(vectors, axis=0)):
        raise ConfigError("Orthogonality vectors must not lie in the kernel of M")
    basis, triangle = scipy.linalg.qr(constraints / norms, mode="economic")
    rank = int(np.count_nonzero(np.abs(np.diag(triangle)) > 1e-10))
    basis = basis[:, :rank]
    available = support_dimension(M, config.mass_floor)
    if available - rank < 1:
        raise DeflationExhaustedError(vectors.shape[1], available)

    if n <= config.dense_limit or 2 * rank >= available:
        complement = scipy.linalg.null_space(basis.T)
        Kd, Md = K.toarray(), M.toarray()
        values, _ = _restricted_eigh(
            complement.T @ Kd @ complement,
            complement.T @ Md @ complement,
            1,
            config.mass_floor * total,
        )
        return float(values[0])

    sigma = -config.sigma_rel / total
    bordered = sparse.bmat(
        [[K - sigma * M, sparse.csr_matrix(basis)], [sparse.csr_matrix(basis.T), None]],
        format="csc",
    )
    lu = splu(bordered)
    padding = np.zeros(rank)

    def solve(x: FloatArray) -> FloatArray:
        return lu.solve(np.concatenate([np.ravel(x), padding]))[:n]

    op = LinearOperator((n, n), matvec=solve, dtype=np.float64)
    v0 = np.random.default_rng(seed).standard_normal(n)
    values, found = eigsh(
        sparse.csr_matrix(K),
        k=1,
        M=sparse.csr_matrix(M),
        sigma=sigma,
        which="LM",
        v0=v0,
        tol=config.solver_tol,
        OPinv=op,
    )
    value, _ = _ritz_cleanup(K, M, found)
    return float(value[0])
