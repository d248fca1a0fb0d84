from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import quad
from scipy.special import gamma

from eigenmax.core.exceptions import (
    ConfigError,
    InfiniteIndexError,
    InvalidEquatorMapError,
    NormalizationError,
)
from eigenmax.core.mesh import (
    Density,
    SimplicialMesh,
    assemble_mass,
    assemble_stiffness,
)
from eigenmax.core.spectral import lambda_bar, solve_eigen
from eigenmax.core.types import HerschReport, JacobiIndexReport, PerEllCount
from eigenmax.core.utils import logger

type FloatArray = NDArray[np.float64]

MIN_FINITE_INDEX_N = 6
INTEGER_SNAP_TOL = 1e-9
NORMALIZE_TOL = 1e-10
NORMALIZE_MAX_ITERATIONS = 2000
NORMALIZE_MAX_STEP = 2.0
BALL_MARGIN = 1e-12
SPHERE_RADIUS_TOL = 1e-8


def sphere_volume(m: int) -> float:
    """Volume of the unit round m-sphere; m=0 gives the two points of S^0."""
    if m < 0:
        raise ConfigError(f"Sphere dimension must be nonnegative, got {m}")
    return float(2 * math.pi ** ((m + 1) / 2) / gamma((m + 1) / 2))


@dataclass(frozen=True)
class EquatorMapSpec:
    """Radial projection of S^m onto S^n, n = m - 1 - k, singular on a k-sphere."""

    m: int
    k: int

    def __post_init__(self) -> None:
        if self.m < 3 or not 0 <= self.k <= self.m - 3:  # noqa: PLR2004
            raise InvalidEquatorMapError(self.m, self.k)

    @property
    def n(self) -> int:
        return self.m - 1 - self.k

    @property
    def finite_index(self) -> bool:
        return self.n >= MIN_FINITE_INDEX_N


def equator_energy(spec: EquatorMapSpec) -> float:
    n, m = spec.n, spec.m
    return n * (m - 1) / (n - 1) * sphere_volume(m)


def equator_density(spec: EquatorMapSpec, t: float) -> float:
    """Energy density of the equator map at coordinate t in (0, 1); t -> 1 is the singular set."""
    if not 0 < t < 1:
        raise ConfigError(f"Equator coordinate must lie in (0, 1), got {t}")
    return spec.n / (1 - t)


def equator_energy_quadrature(spec: EquatorMapSpec) -> float:
    """Integrate the energy density against the coordinate volume weight on (0, 1)."""
    n, k = spec.n, spec.k
    scale = sphere_volume(n) * sphere_volume(k) / 2

    def integrand(t: float) -> float:
        collar = (1 - t) ** ((n - 1) / 2) * t ** ((k - 1) / 2)
        return equator_density(spec, t) * collar

    value, _ = quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=400)
    return scale * value


def equator_upper_bound(m: int, j: int) -> float:
    """Energy of the equator map bounding the normalized j-th eigenvalue on S^m."""
    if not 2 <= j <= m - 1:  # noqa: PLR2004
        raise ConfigError(f"Equator bound needs 2 <= j <= m - 1, got j={j}, m={m}")
    return equator_energy(EquatorMapSpec(m, j - 2))


def first_eigenvalue_supremum(m: int) -> float:
    return m * sphere_volume(m)


def jacobi_spectrum(a: float, b: float, count: int) -> list[float]:
    if not (a > 0 and b > 0):
        raise ConfigError(f"Jacobi parameters must be positive, got a={a}, b={b}")
    return [s * (s + a + b + 1) for s in range(count)]


def harmonic_multiplicity(k: int, ell: int) -> int:
    """Dimension of degree-ell spherical harmonics on S^k."""
    if ell < 0 or k < 0:
        raise ConfigError(f"Invalid harmonic degree {ell} on S^{k}")
    lower = math.comb(k + ell - 2, k) if ell >= 2 else 0  # noqa: PLR2004
    return math.comb(k + ell, k) - lower


def least_root(n: int) -> float:
    """Smaller root of a^2 - (n - 1) a + n = 0."""
    discriminant = n * n - 6 * n + 1
    if n < MIN_FINITE_INDEX_N or discriminant < 0:
        raise ValueError(f"no real root for n={n}")
    return ((n - 1) - math.sqrt(discriminant)) / 2


def _count_below(bound: float) -> tuple[int, bool]:
    """#{s in N_0 : s < bound}, plus a flag when bound is within snap distance of an integer."""
    nearest = round(bound)
    if abs(bound - nearest) <= INTEGER_SNAP_TOL:
        return max(0, nearest), True
    return max(0, math.ceil(bound)), False


def analytic_index(spec: EquatorMapSpec) -> JacobiIndexReport:
    if not spec.finite_index:
        raise InfiniteIndexError(spec.m, spec.k, spec.n)
    alpha = least_root(spec.n)

    if spec.k == 0:
        count, borderline = _count_below(alpha)
        return JacobiIndexReport(
            m=spec.m,
            k=0,
            n=spec.n,
            alpha_minus=alpha,
            per_ell=[PerEllCount(ell=0, count=count, multiplicity=1, borderline=borderline)],
            axis_branch=True,
        )

    rows: list[PerEllCount] = []
    ell = 0
    while True:
        count, borderline = _count_below((alpha - ell) / 2)
        rows.append(
            PerEllCount(
                ell=ell,
                count=count,
                multiplicity=harmonic_multiplicity(spec.k, ell),
                borderline=borderline,
            )
        )
        if count == 0:
            break
        ell += 1
    return JacobiIndexReport(
        m=spec.m, k=spec.k, n=spec.n, alpha_minus=alpha, per_ell=rows
    )


def mobius_map(points: ArrayLike, p: ArrayLike) -> FloatArray:
    """Conformal automorphism x -> (1 - |p|^2)(x + p)/|x + p|^2 + p of the unit sphere."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    p = np.asarray(p, dtype=np.float64)
    shifted = x + p
    squared = np.einsum("ij,ij->i", shifted, shifted)[:, None]
    return (1 - p @ p) * shifted / squared + p


def _balance(points: FloatArray, weights: FloatArray, p: FloatArray) -> FloatArray:
    return weights @ mobius_map(points, p) / weights.sum()


def center_of_mass_normalize(
    points: ArrayLike,
    weights: ArrayLike,
    *,
    tol: float = NORMALIZE_TOL,
    max_iterations: int = NORMALIZE_MAX_ITERATIONS,
) -> tuple[FloatArray, float]:
    """Find p in the open unit ball with sum_i w_i T_p(x_i) = 0.

    Returns p and the achieved residual |sum_i w_i T_p(x_i)| / sum_i w_i.
    """
    x = np.asarray(points, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if x.ndim != 2 or w.shape != (len(x),):  # noqa: PLR2004
        raise ConfigError(f"Expected (n, d) points and n weights, got {x.shape}, {w.shape}")
    if np.any(w < 0) or not w.sum() > 0:
        raise ConfigError("Weights must be nonnegative with positive sum")
    total = float(w.sum())
    p = np.zeros(x.shape[1])
    residual = _balance(x, w, p)
    norm = float(np.linalg.norm(residual))
    if norm <= tol:
        return p, norm
    if w.max() > total / 2:
        raise NormalizationError(
            "one point carries more than half of the total weight", math.inf, 0
        )

    step = 1.0
    for iteration in range(max_iterations):
        if norm <= tol:
            logger.debug("Center of mass normalized in %d iterations", iteration)
            return p, norm
        while step > 1e-14:
            trial = p - step * residual
            if trial @ trial < 1 - BALL_MARGIN:
                trial_residual = _balance(x, w, trial)
                trial_norm = float(np.linalg.norm(trial_residual))
                if trial_norm < norm:
                    p, residual, norm = trial, trial_residual, trial_norm
                    step = min(2 * step, NORMALIZE_MAX_STEP)
                    break
            step *= 0.5
        else:
            raise NormalizationError("line search stalled", norm, iteration)
    if norm <= tol:
        return p, norm
    raise NormalizationError("iteration budget exhausted", norm, max_iterations)


def hersch_upper_bound_check(
    mesh: SimplicialMesh, rho: Density, k_test: int = 1
) -> HerschReport:
    """Rayleigh bound for the normalized first eigenvalue from balanced conformal coordinates."""
    if k_test != 1:
        raise ConfigError("Only the first eigenvalue has a conformal test family")
    radii = np.linalg.norm(mesh.vertices, axis=1)
    if (
        mesh.period is not None
        or mesh.vertices.shape[1] != mesh.dim + 1
        or np.max(np.abs(radii - 1)) > SPHERE_RADIUS_TOL
    ):
        raise ConfigError("Hersch check requires a mesh of the unit round sphere")

    K = assemble_stiffness(mesh)
    M = assemble_mass(mesh, rho)
    weights = np.asarray(M.sum(axis=1)).ravel()
    p, residual = center_of_mass_normalize(mesh.vertices, weights)
    tests = mobius_map(mesh.vertices, p)

    energy = np.einsum("ij,ij->j", tests, K @ tests)
    norms = np.einsum("ij,ij->j", tests, M @ tests)
    bound = float(energy.sum() / norms.sum() * rho.mass)
    spectrum = solve_eigen(K, M, 1)
    return HerschReport(
        bound=bound,
        max_coordinate_bound=float(np.max(energy / norms) * rho.mass),
        lambda_bar=lambda_bar(spectrum, rho, 1),
        reference=first_eigenvalue_supremum(mesh.dim),
        center=[float(c) for c in p],
        center_residual=residual,
    )
