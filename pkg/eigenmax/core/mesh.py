from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import itertools
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse
from scipy.spatial import ConvexHull

from eigenmax.core.exceptions import (
    ConfigError,
    DegenerateCellError,
    MeshError,
    OpenMeshError,
)
from eigenmax.core.utils import logger

type FloatArray = NDArray[np.float64]
type IntArray = NDArray[np.int64]

SUPPORTED_DIMS = (2, 3)
DEFAULT_MAX_CELLS = 2_000_000
DEGENERACY_TOL = 1e-12
DENSITY_CAP_SLACK = 1e-12

_TRIANGLE_EDGES = np.array([(0, 1), (1, 2), (0, 2)])
_TETRA_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])


def gradient_template(dim: int) -> FloatArray:
    """Reference gradients of the barycentric coordinates, shape (dim, dim + 1)."""
    return np.hstack([-np.ones((dim, 1)), np.eye(dim)])


def mass_template(dim: int) -> FloatArray:
    """Unit-volume P1 mass matrix of a dim-simplex; its entries sum to 1."""
    p = dim + 1
    return (np.ones((p, p)) + np.eye(p)) / (p * (p + 1))


def _readonly[A: np.ndarray](array: A) -> A:
    array.setflags(write=False)
    return array


def _cell_edges(
    vertices: FloatArray, cells: IntArray, period: FloatArray | None
) -> FloatArray:
    edges = vertices[cells[:, 1:]] - vertices[cells[:, [0]]]
    if period is not None:
        edges -= period * np.round(edges / period)
    return edges


def _check_closed(cells: IntArray, dim: int) -> None:
    facets = np.concatenate([
        np.delete(cells, omit, axis=1) for omit in range(dim + 1)
    ])
    facets.sort(axis=1)
    unique, counts = np.unique(facets, axis=0, return_counts=True)
    bad = np.flatnonzero(counts != 2)  # noqa: PLR2004
    if bad.size:
        raise OpenMeshError(int(bad.size), unique[bad[0]].tolist())


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    dim: int
    vertices: FloatArray
    cells: IntArray
    period: FloatArray | None = None
    cell_metric: FloatArray = field(init=False, repr=False)
    cell_volume: FloatArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.dim not in SUPPORTED_DIMS:
            raise ConfigError(f"Unsupported mesh dimension {self.dim}")
        vertices = np.array(self.vertices, dtype=np.float64)
        cells = np.array(self.cells, dtype=np.int64)
        if vertices.ndim != 2 or cells.ndim != 2 or cells.shape[1] != self.dim + 1:  # noqa: PLR2004
            raise MeshError(
                f"Expected (n, d) vertices and (N, {self.dim + 1}) cells, got "
                f"{vertices.shape} and {cells.shape}"
            )
        if cells.size and (cells.min() < 0 or cells.max() >= len(vertices)):
            raise MeshError("Cell references a vertex outside the vertex block")
        period = None
        if self.period is not None:
            period = np.array(self.period, dtype=np.float64)
            if period.shape != (vertices.shape[1],) or np.any(period <= 0):
                raise MeshError(f"Invalid period {self.period!r}")

        edges = _cell_edges(vertices, cells, period)
        metric = np.einsum("cad,cbd->cab", edges, edges)
        det = np.linalg.det(metric)
        scale = np.einsum("cad,cad->c", edges, edges) / self.dim
        bad = np.flatnonzero(det <= DEGENERACY_TOL * scale**self.dim)
        if bad.size:
            raise DegenerateCellError(int(bad[0]), float(det[bad[0]]))
        volume = np.sqrt(det) / math.factorial(self.dim)
        _check_closed(cells, self.dim)

        object.__setattr__(self, "vertices", _readonly(vertices))
        object.__setattr__(self, "cells", _readonly(cells))
        object.__setattr__(self, "period", None if period is None else _readonly(period))
        object.__setattr__(self, "cell_metric", _readonly(metric))
        object.__setattr__(self, "cell_volume", _readonly(volume))

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_cells(self) -> int:
        return int(self.cells.shape[0])

    @property
    def total_volume(self) -> float:
        return float(self.cell_volume.sum())

    @cached_property
    def metric_inverse(self) -> FloatArray:
        inverse = np.linalg.inv(self.cell_metric)
        return _readonly(0.5 * (inverse + np.swapaxes(inverse, 1, 2)))

    def vertex_cell_count(self) -> IntArray:
        return np.bincount(self.cells.ravel(), minlength=self.n_vertices)


@dataclass(frozen=True, eq=False)
class Density:
    """Cellwise constant density of a measure rho * dv on a mesh."""

    mesh: SimplicialMesh
    values: FloatArray
    cap: float = math.inf

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.mesh.n_cells,):
            raise ConfigError(
                f"Density has shape {values.shape}, mesh has {self.mesh.n_cells} cells"
            )
        if not self.cap > 0:
            raise ConfigError(f"Density cap must be positive, got {self.cap}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ConfigError("Density values must be finite and nonnegative")
        if np.any(values > self.cap * (1 + DENSITY_CAP_SLACK)):
            raise ConfigError(f"Density exceeds its cap {self.cap}")
        object.__setattr__(self, "values", _readonly(values))
        if not self.mass > 0:
            raise ConfigError("Density has zero total mass")

    @classmethod
    def uniform(
        cls, mesh: SimplicialMesh, cap: float = math.inf, total: float = 1.0
    ) -> Density:
        value = total / mesh.total_volume
        return cls(mesh, np.full(mesh.n_cells, value), cap)

    @classmethod
    def from_cell_masses(
        cls, mesh: SimplicialMesh, masses: ArrayLike, cap: float = math.inf
    ) -> Density:
        values = np.asarray(masses, dtype=np.float64) / mesh.cell_volume
        return cls(mesh, np.minimum(values, cap), cap)

    @property
    def mass(self) -> float:
        return float(self.values @ self.mesh.cell_volume)

    @property
    def cell_mass(self) -> FloatArray:
        return self.values * self.mesh.cell_volume

    def scaled(self, factor: float) -> Density:
        return Density(self.mesh, self.values * factor, self.cap * factor)


def build_flat_torus(
    m: int, n_per_axis: int, side: float, *, sides: tuple[float, ...] | None = None
) -> SimplicialMesh:
    """Kuhn triangulation of a periodic box with n_per_axis cells per axis."""
    if m not in SUPPORTED_DIMS:
        raise ConfigError(f"Flat torus dimension must be 2 or 3, got {m}")
    if n_per_axis < 3:  # noqa: PLR2004
        raise ConfigError(f"n_per_axis must be at least 3, got {n_per_axis}")
    lengths = np.full(m, float(side)) if sides is None else np.array(sides, float)
    if lengths.shape != (m,) or np.any(lengths <= 0):
        raise ConfigError(f"Torus side lengths must be positive, got {lengths}")

    shape = (n_per_axis,) * m
    corners = np.indices(shape).reshape(m, -1).T
    vertices = corners * (lengths / n_per_axis)

    cells = []
    for perm in itertools.permutations(range(m)):
        offsets = np.zeros((m + 1, m), dtype=np.int64)
        for step, axis in enumerate(perm, start=1):
            offsets[step:, axis] += 1
        coords = (corners[:, None, :] + offsets[None]) % n_per_axis
        cells.append(np.ravel_multi_index(tuple(np.moveaxis(coords, 2, 0)), shape))
    mesh = SimplicialMesh(m, vertices, np.concatenate(cells), period=lengths)
    logger.debug(
        "Built flat torus m=%d n=%d: %d cells", m, n_per_axis, mesh.n_cells
    )
    return mesh


def _edge_midpoints(
    vertices: FloatArray, cells: IntArray, pairs: IntArray
) -> tuple[FloatArray, IntArray]:
    edges = np.sort(cells[:, pairs], axis=2).reshape(-1, 2)
    unique, inverse = np.unique(edges, axis=0, return_inverse=True)
    mids = vertices[unique[:, 0]] + vertices[unique[:, 1]]
    mids /= np.linalg.norm(mids, axis=1, keepdims=True)
    ids = len(vertices) + inverse.reshape(len(cells), len(pairs))
    return np.vstack([vertices, mids]), ids


def _subdivide_triangles(
    vertices: FloatArray, cells: IntArray
) -> tuple[FloatArray, IntArray]:
    vertices, mid = _edge_midpoints(vertices, cells, _TRIANGLE_EDGES)
    v0, v1, v2 = cells.T
    m01, m12, m02 = mid.T
    children = np.stack(
        [
            np.stack([v0, m01, m02], axis=1),
            np.stack([v1, m12, m01], axis=1),
            np.stack([v2, m02, m12], axis=1),
            np.stack([m01, m12, m02], axis=1),
        ],
        axis=1,
    )
    return vertices, children.reshape(-1, 3)


def _subdivide_tetrahedra(
    vertices: FloatArray, cells: IntArray
) -> tuple[FloatArray, IntArray]:
    vertices, mid = _edge_midpoints(vertices, cells, _TETRA_EDGES)
    v0, v1, v2, v3 = cells.T
    m01, m02, m03, m12, m13, m23 = mid.T
    corners = [
        np.stack([v0, m01, m02, m03], axis=1),
        np.stack([v1, m01, m12, m13], axis=1),
        np.stack([v2, m02, m12, m23], axis=1),
        np.stack([v3, m03, m13, m23], axis=1),
    ]
    # Each inner-octahedron diagonal comes with the 4-cycle of midpoints around it.
    splits = [
        ((m01, m23), (m02, m03, m13, m12)),
        ((m02, m13), (m01, m03, m23, m12)),
        ((m03, m12), (m01, m02, m23, m13)),
    ]
    options = []
    lengths = []
    for (a, b), ring in splits:
        lengths.append(np.linalg.norm(vertices[a] - vertices[b], axis=1))
        options.append(
            np.stack(
                [
                    np.stack([a, b, ring[i], ring[(i + 1) % 4]], axis=1)
                    for i in range(4)
                ],
                axis=1,
            )
        )
    choice = np.argmin(np.stack(lengths), axis=0)
    inner = np.stack(options)[choice, np.arange(len(cells))]
    children = np.concatenate([np.stack(corners, axis=1), inner], axis=1)
    return vertices, children.reshape(-1, 4)


def _icosahedron() -> FloatArray:
    golden = (1 + math.sqrt(5)) / 2
    points = []
    for a, b in itertools.product((-1.0, 1.0), repeat=2):
        points += [(0.0, a, b * golden), (a, b * golden, 0.0), (b * golden, 0.0, a)]
    vertices = np.array(points)
    return vertices / np.linalg.norm(vertices, axis=1, keepdims=True)


def _cross_polytope(dim: int) -> FloatArray:
    return np.vstack([np.eye(dim), -np.eye(dim)])


def build_round_sphere(
    m: int, level: int, *, max_cells: int = DEFAULT_MAX_CELLS
) -> SimplicialMesh:
    """Polyhedral approximation of the unit m-sphere refined `level` times."""
    if m not in SUPPORTED_DIMS:
        raise ConfigError(f"Round sphere dimension must be 2 or 3, got {m}")
    if level < 0:
        raise ConfigError(f"Refinement level must be nonnegative, got {level}")
    base_cells, children = (20, 4) if m == 2 else (16, 8)  # noqa: PLR2004
    if base_cells * children**level > max_cells:
        raise ConfigError(
            f"Level {level} would create {base_cells * children**level} cells "
            f"(limit {max_cells})"
        )

    vertices = _icosahedron() if m == 2 else _cross_polytope(m + 1)  # noqa: PLR2004
    cells = ConvexHull(vertices).simplices.astype(np.int64)
    subdivide = _subdivide_triangles if m == 2 else _subdivide_tetrahedra  # noqa: PLR2004
    for _ in range(level):
        vertices, cells = subdivide(vertices, cells)
    mesh = SimplicialMesh(m, vertices, cells)
    logger.debug(
        "Built round sphere m=%d level=%d: %d vertices, %d cells",
        m,
        level,
        mesh.n_vertices,
        mesh.n_cells,
    )
    return mesh


def _scatter(mesh: SimplicialMesh, local: FloatArray) -> sparse.csr_matrix:
    p = mesh.dim + 1
    rows = np.repeat(mesh.cells, p, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, p)).ravel()
    shape = (mesh.n_vertices, mesh.n_vertices)
    matrix = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    matrix.sum_duplicates()
    return matrix


def assemble_stiffness(mesh: SimplicialMesh) -> sparse.csr_matrix:
    grad = gradient_template(mesh.dim)
    local = mesh.cell_volume[:, None, None] * np.einsum(
        "ai,cab,bj->cij", grad, mesh.metric_inverse, grad
    )
    diagonal = np.arange(mesh.dim + 1)
    local[:, diagonal, diagonal] = 0.0
    local[:, diagonal, diagonal] = -local.sum(axis=2)
    stiffness = _scatter(mesh, local)
    return ((stiffness + stiffness.T) * 0.5).tocsr()


def assemble_mass(mesh: SimplicialMesh, rho: Density | ArrayLike) -> sparse.csr_matrix:
    values = rho.values if isinstance(rho, Density) else np.asarray(rho, float)
    if values.shape != (mesh.n_cells,):
        raise ConfigError(
            f"Density has shape {values.shape}, mesh has {mesh.n_cells} cells"
        )
    if np.any(values < 0):
        raise ConfigError(
            f"Negative density in cell {int(np.flatnonzero(values < 0)[0])}"
        )
    weights = values * mesh.cell_volume
    local = weights[:, None, None] * mass_template(mesh.dim)
    return _scatter(mesh, local)


def cell_product_averages(mesh: SimplicialMesh, values: FloatArray) -> FloatArray:
    """Mean over each cell of products of P1 functions, shape (cells, r, r)."""
    nodal = np.asarray(values, dtype=np.float64)[mesh.cells]
    sums = nodal.sum(axis=1)
    p = mesh.dim + 1
    return (
        np.einsum("cai,caj->cij", nodal, nodal) + np.einsum("ci,cj->cij", sums, sums)
    ) / (p * (p + 1))


def cell_energy_density(mesh: SimplicialMesh, values: FloatArray) -> FloatArray:
    """Cellwise sum over components of |grad u|^2 for P1 vertex values (n, r)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    slopes = np.einsum("ai,cir->car", gradient_template(mesh.dim), values[mesh.cells])
    return np.einsum("car,cab,cbr->c", slopes, mesh.metric_inverse, slopes)
