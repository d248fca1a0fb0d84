from __future__ import annotations

from collections.abc import Sequence
from enum import IntEnum


class ExitCode(IntEnum):
    OK = 0
    CONFIG_ERROR = 2
    MESH_ERROR = 3
    SOLVER_ERROR = 4
    OPTIMIZATION_ERROR = 5
    NOT_CONVERGED = 6
    ORACLE_ERROR = 7
    VERIFICATION_FAILED = 8
    FORM_ERROR = 9
    INTERRUPTED = 130


class EigenmaxError(RuntimeError):
    exit_code: ExitCode = ExitCode.CONFIG_ERROR


class ConfigError(EigenmaxError):
    exit_code = ExitCode.CONFIG_ERROR


class InfeasibleCapError(ConfigError):
    def __init__(self, cap: float, volume: float) -> None:
        super().__init__(
            f"Cap {cap:.6g} is infeasible for total volume {volume:.6g}: "
            f"cap * volume = {cap * volume:.6g} must exceed 1"
        )
        self.cap = cap
        self.volume = volume


class MeshError(EigenmaxError):
    exit_code = ExitCode.MESH_ERROR


class DegenerateCellError(MeshError):
    def __init__(self, cell: int, determinant: float) -> None:
        super().__init__(
            f"Cell {cell} has a singular metric (det = {determinant:.3e})"
        )
        self.cell = cell
        self.determinant = determinant


class OpenMeshError(MeshError):
    def __init__(self, bad_facets: int, example: Sequence[int]) -> None:
        super().__init__(
            f"Mesh is not closed: {bad_facets} facets are not shared by exactly "
            f"two cells (first offending facet: {list(example)})"
        )
        self.bad_facets = bad_facets
        self.example = tuple(example)


class MeshFormatError(MeshError):
    def __init__(self, path: str, line: int, reason: str) -> None:
        super().__init__(f"Invalid mesh file {path}, line {line}: {reason}")
        self.path = path
        self.line = line
        self.reason = reason


class SolverError(EigenmaxError):
    exit_code = ExitCode.SOLVER_ERROR


class ZeroMassError(SolverError):
    def __init__(self, mass: float) -> None:
        super().__init__(f"Mass matrix is numerically zero (total mass {mass:.3e})")
        self.mass = mass


class KernelDimensionError(SolverError):
    def __init__(self, requested: int, limit: int) -> None:
        super().__init__(
            f"Requested {requested} eigenpairs but the mass matrix only supports "
            f"{limit} outside its kernel"
        )
        self.requested = requested
        self.limit = limit


class DeflationExhaustedError(SolverError):
    def __init__(self, constraints: int, dimension: int) -> None:
        super().__init__(
            f"{constraints} orthogonality constraints exhaust the "
            f"{dimension}-dimensional trial space"
        )
        self.constraints = constraints
        self.dimension = dimension


class OptimizationError(EigenmaxError):
    exit_code = ExitCode.OPTIMIZATION_ERROR


class NonFiniteEigenvalueError(OptimizationError):
    def __init__(self, iteration: int, value: float) -> None:
        super().__init__(f"Non-finite eigenvalue {value} at iteration {iteration}")
        self.iteration = iteration
        self.value = value


class EmptyClusterError(OptimizationError):
    def __init__(self, k: int, available: int) -> None:
        super().__init__(
            f"No eigenvalue cluster at index {k} ({available} eigenpairs available)"
        )
        self.k = k
        self.available = available


class OracleError(EigenmaxError):
    exit_code = ExitCode.ORACLE_ERROR


class InvalidEquatorMapError(OracleError):
    def __init__(self, m: int, k: int) -> None:
        super().__init__(
            f"Invalid equator map (m={m}, k={k}): need m >= 3 and 0 <= k <= m - 3"
        )
        self.m = m
        self.k = k


class InfiniteIndexError(OracleError):
    def __init__(self, m: int, k: int, n: int) -> None:
        super().__init__(
            f"index infinite (n<6): equator map m={m}, k={k} has n={n}, "
            "the root equation has no real solution"
        )
        self.m = m
        self.k = k
        self.n = n


class NormalizationError(OracleError):
    def __init__(self, reason: str, best_residual: float, iterations: int) -> None:
        super().__init__(
            f"Center of mass normalization failed after {iterations} iterations: "
            f"{reason} (best residual {best_residual:.3e})"
        )
        self.reason = reason
        self.best_residual = best_residual
        self.iterations = iterations


class FormError(EigenmaxError):
    exit_code = ExitCode.FORM_ERROR


class UnstableCountError(FormError):
    def __init__(self, counts: Sequence[int], sizes: Sequence[int]) -> None:
        super().__init__(
            "unstable count: negative directions "
            f"{list(counts)} on grids of sizes {list(sizes)}"
        )
        self.counts = tuple(counts)
        self.sizes = tuple(sizes)
