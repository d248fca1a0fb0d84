from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from numpy.typing import NDArray
from scipy import sparse

from eigenmax.core.config import AscentConfig, SolverConfig
from eigenmax.core.exceptions import (
    InfeasibleCapError,
    NonFiniteEigenvalueError,
    OptimizationError,
)
from eigenmax.core.mesh import (
    Density,
    SimplicialMesh,
    assemble_mass,
    assemble_stiffness,
    cell_product_averages,
)
from eigenmax.core.projection import project_capped_simplex, project_spectraplex
from eigenmax.core.spectral import Spectrum, lambda_bar, solve_cluster
from eigenmax.core.stopping import AscentContext, StopAction, StopRulePipeline
from eigenmax.core.types import HistoryEntry, InitialDensity, StopReason
from eigenmax.core.utils import logger

type FloatArray = NDArray[np.float64]

HULL_TOL = 1e-14
CAP_SLACK = 1e-9
BUMP_HEIGHT = 4.0
BUMP_WIDTH = 0.25


def minimum_norm_gram(
    products: FloatArray, volumes: FloatArray | None = None, iterations: int = 500
) -> FloatArray:
    """Trace-one PSD G minimizing the L2 norm of the cellwise values <A_c, G>.

    `products` holds one symmetric (r, r) matrix A_c per cell; `volumes` weights
    the cells (all ones when omitted). Solved by accelerated projected gradient
    on the spectraplex, started at I/r.
    """
    n_cells, r, _ = products.shape
    if r == 1:
        return np.ones((1, 1))
    weights = np.ones(n_cells) if volumes is None else np.asarray(volumes, dtype=np.float64)
    flat = np.sqrt(weights)[:, None] * products.reshape(n_cells, r * r)
    lipschitz = float(np.linalg.norm(flat, 2)) ** 2
    gram = np.eye(r) / r
    if lipschitz == 0:
        return gram

    def gradient(g: FloatArray) -> FloatArray:
        return (flat.T @ (flat @ g.ravel())).reshape(r, r)

    momentum = gram
    t = 1.0
    for _ in range(iterations):
        following = project_spectraplex(momentum - gradient(momentum) / lipschitz)
        change = float(np.linalg.norm(following - gram))
        t_next = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        momentum = following + ((t - 1) / t_next) * (following - gram)
        gram, t = following, t_next
        if change <= HULL_TOL:
            break
    return gram


@dataclass(frozen=True, eq=False)
class SupergradientResult:
    cluster: range
    gram: FloatArray
    combination: FloatArray
    direction: FloatArray

    @property
    def weights(self) -> FloatArray:
        """Convex weights of the combination in its diagonalizing basis."""
        return np.sort(np.linalg.eigvalsh(self.gram))[::-1]

    @property
    def direction_norm(self) -> float:
        scale = float(np.linalg.norm(self.combination))
        return float(np.linalg.norm(self.direction)) / scale if scale > 0 else 0.0


def supergradient_direction(
    mesh: SimplicialMesh, spectrum: Spectrum, k: int, *, iterations: int = 500
) -> SupergradientResult:
    """Minimum-norm combination of squared unit-energy eigenfunctions of the k-th cluster.

    `combination` holds the cellwise averages of sum G_ij phi_i phi_j; `direction`
    is the ascent step in cell-mass coordinates.
    """
    cluster = spectrum.cluster_of(k)
    values = spectrum.eigenvalues[cluster.start : cluster.stop]
    if np.any(values <= 0):
        raise OptimizationError(f"Cluster of index {k} contains a nonpositive eigenvalue")
    phi = spectrum.eigenvectors[:, cluster.start : cluster.stop] / np.sqrt(values)
    products = cell_product_averages(mesh, phi)
    gram = minimum_norm_gram(products, mesh.cell_volume, iterations)
    combination = np.einsum("cij,ij->c", products, gram)
    return SupergradientResult(
        cluster=cluster,
        gram=gram,
        combination=combination,
        direction=-(combination - combination.mean()),
    )


def bang_bang_certificate(
    rho: Density,
    spectrum: Spectrum,
    k: int,
    cap: float,
    *,
    tol_s: float = 2e-2,
    supergradient: SupergradientResult | None = None,
) -> float:
    """Mass of cells below the combination's near-maximum that are not at the cap."""
    result = supergradient or supergradient_direction(rho.mesh, spectrum, k)
    combination = result.combination
    low = combination < (1 - tol_s) * combination.max()
    free = rho.values < cap * (1 - CAP_SLACK)
    return float(rho.cell_mass[low & free].sum())


def _distance_to_first_vertex(mesh: SimplicialMesh) -> FloatArray:
    centroids = mesh.vertices[mesh.cells].mean(axis=1)
    offset = centroids - mesh.vertices[0]
    if mesh.period is not None:
        offset -= mesh.period * np.round(offset / mesh.period)
    return np.linalg.norm(offset, axis=1)


def initial_cell_masses(
    mesh: SimplicialMesh, cap: float, config: AscentConfig, seed: int = 0
) -> FloatArray:
    volume = mesh.cell_volume
    match config.initial_density:
        case InitialDensity.UNIFORM:
            shape = np.ones(mesh.n_cells)
        case InitialDensity.PERTURBED:
            noise = np.random.default_rng(seed).uniform(-1.0, 1.0, mesh.n_cells)
            shape = 1 + config.perturbation * noise
        case InitialDensity.BUMP:
            width = BUMP_WIDTH * mesh.total_volume ** (1 / mesh.dim)
            distance = _distance_to_first_vertex(mesh)
            shape = 1 + BUMP_HEIGHT * np.exp(-((distance / width) ** 2))
    masses = shape * volume
    return project_capped_simplex(masses / masses.sum(), cap * volume, 1.0)


@dataclass
class AscentState:
    density: Density
    k: int
    history: list[HistoryEntry] = field(default_factory=list)
    step_rule: str = ""
    stop_reason: StopReason | None = None
    spectrum: Spectrum | None = None
    supergradient: SupergradientResult | None = None

    @property
    def lambda_bar(self) -> float:
        return self.history[-1].lambda_bar

    @property
    def certificate(self) -> float:
        return self.history[-1].certificate


@dataclass(frozen=True)
class _Evaluation:
    masses: FloatArray
    density: Density
    spectrum: Spectrum
    lambda_bar: float


def _evaluate(
    mesh: SimplicialMesh,
    K: sparse.csr_matrix,
    masses: FloatArray,
    cap: float,
    k: int,
    solver: SolverConfig,
    seed: int,
    iteration: int,
) -> _Evaluation:
    density = Density.from_cell_masses(mesh, masses, cap)
    spectrum = solve_cluster(K, assemble_mass(mesh, density), k, config=solver, seed=seed)
    value = spectrum.eigenvalue(k)
    if not math.isfinite(value):
        raise NonFiniteEigenvalueError(iteration, value)
    return _Evaluation(masses, density, spectrum, lambda_bar(spectrum, density, k))


def maximize(
    mesh: SimplicialMesh,
    k: int,
    cap: float,
    config: AscentConfig | None = None,
    solver: SolverConfig | None = None,
    *,
    seed: int = 0,
    rules: StopRulePipeline | None = None,
) -> AscentState:
    """Projected supergradient ascent of lambda_k * mass over densities below `cap`.

    Iterates live on cell masses summing to one; each step moves along the
    minimum-norm direction and projects back onto the capped simplex. A step is
    accepted when the normalized eigenvalue does not drop by more than the
    backtracking slack; otherwise the step is halved.
    """
    config = config or AscentConfig()
    solver = (solver or SolverConfig()).model_copy(
        update={"cluster_tol": config.ascent_cluster_tol}
    )
    if cap * mesh.total_volume <= 1:
        raise InfeasibleCapError(cap, mesh.total_volume)
    rules = rules or StopRulePipeline.from_config(config)
    rules.reset()

    K = assemble_stiffness(mesh)
    upper = cap * mesh.cell_volume
    current = _evaluate(
        mesh, K, initial_cell_masses(mesh, cap, config, seed), cap, k, solver, seed, 0
    )
    sg = supergradient_direction(
        mesh, current.spectrum, k, iterations=config.hull_iterations
    )
    certificate = bang_bang_certificate(
        current.density, current.spectrum, k, cap, tol_s=config.tol_s, supergradient=sg
    )
    state = AscentState(
        density=current.density,
        k=k,
        history=[
            HistoryEntry(
                iteration=0, lambda_bar=current.lambda_bar, certificate=certificate
            )
        ],
        step_rule=(
            f"step {config.step_size:g} x mean cell mass / max|d|, "
            f"grow x{config.step_growth:g} up to {config.step_max:g}, halve on decrease"
        ),
        spectrum=current.spectrum,
        supergradient=sg,
    )

    step = config.step_size
    iteration = 0
    stalled = False
    while True:
        context = AscentContext(
            iteration=iteration,
            lambda_bar=current.lambda_bar,
            certificate=certificate,
            direction_norm=sg.direction_norm,
            stalled=stalled,
        )
        result = rules.run(context)
        if result.action == StopAction.STOP:
            state.stop_reason = result.reason
            logger.info("Ascent stopped: %s", result.message)
            break

        scale = float(np.max(np.abs(sg.direction)))
        if scale == 0:
            state.stop_reason = StopReason.STATIONARY
            break
        iteration += 1
        floor = current.lambda_bar - config.backtracking_slack * abs(current.lambda_bar)
        accepted = None
        for backtracks in range(config.max_backtracks + 1):
            eta = step / (mesh.n_cells * scale)
            masses = project_capped_simplex(current.masses + eta * sg.direction, upper, 1.0)
            trial = _evaluate(mesh, K, masses, cap, k, solver, seed, iteration)
            if trial.lambda_bar >= floor:
                accepted = trial
                break
            step *= 0.5
            logger.debug("Iteration %d: backtrack to step %.3g", iteration, step)

        if accepted is None:
            stalled = True
            continue

        current = accepted
        sg = supergradient_direction(
            mesh, current.spectrum, k, iterations=config.hull_iterations
        )
        certificate = bang_bang_certificate(
            current.density, current.spectrum, k, cap, tol_s=config.tol_s, supergradient=sg
        )
        state.history.append(
            HistoryEntry(
                iteration=iteration,
                lambda_bar=current.lambda_bar,
                certificate=certificate,
                step=step,
                backtracks=backtracks,
            )
        )
        logger.info(
            "Iteration %d: lambda_bar=%.12g certificate=%.3e step=%.3g backtracks=%d",
            iteration,
            current.lambda_bar,
            certificate,
            step,
            backtracks,
        )
        step = min(step * config.step_growth, config.step_max)

    state.density = current.density
    state.spectrum = current.spectrum
    state.supergradient = sg
    return state
