from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, replace
from functools import cached_property
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse
from scipy.integrate import quad, quad_vec
from scipy.linalg import eigvalsh_tridiagonal
from scipy.sparse.linalg import eigsh

from eigenmax.core.exceptions import ConfigError, FormError, UnstableCountError
from eigenmax.core.sphere_oracle import (
    EquatorMapSpec,
    harmonic_multiplicity,
    least_root,
)
from eigenmax.core.types import PerEllCount
from eigenmax.core.utils import logger

type FloatArray = NDArray[np.float64]

QUAD_RTOL = 1e-12
DEFAULT_GRID_NODES = 2000
DEFAULT_GRADING = 2.0
DEFAULT_CUTOFF_TOL = 1e-12
MAX_DEGREE = 64


@dataclass(frozen=True)
class PowerTerm:
    """coef * (1 - t)^x * (1 + t)^y on (-1, 1)."""

    coef: float
    x: float
    y: float

    def __call__(self, t: ArrayLike) -> FloatArray:
        t = np.asarray(t, dtype=np.float64)
        return self.coef * (1 - t) ** self.x * (1 + t) ** self.y

    def derivative(self, t: ArrayLike) -> FloatArray:
        t = np.asarray(t, dtype=np.float64)
        return self(t) * (self.y / (1 + t) - self.x / (1 - t))


def graded_grid(n_nodes: int, grading: float = DEFAULT_GRADING) -> FloatArray:
    """Interior nodes clustered toward both ends, 1 - |t| ~ (uniform spacing)^grading."""
    if n_nodes < 2:  # noqa: PLR2004
        raise FormError(f"A grid needs at least two nodes, got {n_nodes}")
    if grading < 1:
        raise FormError(f"Grading must be at least 1, got {grading}")
    s = -1 + 2 * np.arange(1, n_nodes + 1) / (n_nodes + 1)
    return np.sign(s) * (1 - (1 - np.abs(s)) ** grading)


def refine_grid(nodes: ArrayLike) -> FloatArray:
    """Nested refinement: midpoints plus one new node in each end segment."""
    t = np.asarray(nodes, dtype=np.float64)
    refined = np.empty(2 * len(t) - 1)
    refined[0::2] = t
    refined[1::2] = 0.5 * (t[:-1] + t[1:])
    left = -1 + 0.25 * (t[0] + 1)
    right = 1 - 0.25 * (1 - t[-1])
    return np.concatenate([[left], refined, [right]])


def _interior_moments(
    grid: FloatArray, exponents: list[tuple[float, float]]
) -> FloatArray:
    """Integrals of w*(1-xi)^2, w*xi*(1-xi), w*xi^2 per element, shape (terms, 3, elements)."""
    left, h = grid[:-1], np.diff(grid)
    mid = left + 0.5 * h
    # Normalizing by the midpoint weight keeps tiny end elements at full relative accuracy.
    scale = np.array([(1 - mid) ** x * (1 + mid) ** y for x, y in exponents])

    def integrand(xi: float) -> FloatArray:
        t = left + h * xi
        w = np.array([(1 - t) ** x * (1 + t) ** y for x, y in exponents]) / scale
        basis = np.array([(1 - xi) ** 2, xi * (1 - xi), xi**2])
        return (w[:, None, :] * basis[None, :, None]).ravel()

    values, _ = quad_vec(integrand, 0.0, 1.0, epsabs=0.0, epsrel=QUAD_RTOL, norm="max")
    return values.reshape(len(exponents), 3, -1) * (scale * h)[:, None, :]


def _end_moment(x: float, y: float, node: float, left: bool, power: int) -> float:
    """Integral over the end segment of w * (distance to the end / segment length)^power."""
    if left:
        length = node + 1
        exponent = y + power
        if exponent <= -1:
            return math.inf
        value, _ = quad(
            lambda t: (1 - t) ** x, -1.0, node, weight="alg", wvar=(exponent, 0.0),
            epsabs=0.0, epsrel=QUAD_RTOL, limit=200,
        )
    else:
        length = 1 - node
        exponent = x + power
        if exponent <= -1:
            return math.inf
        value, _ = quad(
            lambda t: (1 + t) ** y, node, 1.0, weight="alg", wvar=(0.0, exponent),
            epsabs=0.0, epsrel=QUAD_RTOL, limit=200,
        )
    return value / length**power


@dataclass(frozen=True, eq=False)
class WeightedForm:
    """Quadratic form  int phi'^2 w_s + sum_i c_i int phi^2 w_i  on (-1, 1), P1 on `grid`.

    Basis functions are hats on the interior nodes, extended by constants to the
    endpoints. An end is pinned to zero only where a positive term is not
    integrable, which keeps the discrete space inside the form domain.
    """

    grid: FloatArray
    stiffness: tuple[float, float]
    potential: tuple[PowerTerm, ...] = ()
    reference: tuple[float, float] = (0.0, 0.0)
    label: str = ""

    def __post_init__(self) -> None:
        grid = np.array(self.grid, dtype=np.float64)
        if grid.ndim != 1 or len(grid) < 2:  # noqa: PLR2004
            raise FormError("Grid must be a 1D array of at least two nodes")
        if grid[0] <= -1 or grid[-1] >= 1 or np.any(np.diff(grid) <= 0):
            raise FormError("Grid must be strictly increasing inside (-1, 1)")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @property
    def dimension(self) -> int:
        return len(self.grid)

    @property
    def pinned(self) -> tuple[bool, bool]:
        positive = [t for t in self.potential if t.coef > 0]
        positive.append(PowerTerm(1.0, *self.reference))
        return (
            any(t.y <= -1 for t in positive),
            any(t.x <= -1 for t in positive),
        )

    def on_grid(self, grid: ArrayLike) -> WeightedForm:
        return replace(self, grid=np.asarray(grid, dtype=np.float64))

    def shifted(self, c: float) -> WeightedForm:
        """Form minus c times the reference mass."""
        shift = PowerTerm(-c, *self.reference)
        return replace(self, potential=(*self.potential, shift))

    @cached_property
    def _assembled(self) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
        grid = self.grid
        exponents = [self.stiffness, self.reference] + [(t.x, t.y) for t in self.potential]
        moments = _interior_moments(grid, exponents)
        pin_left, pin_right = self.pinned
        h = np.diff(grid)

        def mass_part(index: int, coef: float) -> tuple[FloatArray, FloatArray]:
            m0, m1, m2 = moments[index]
            diag = np.zeros(len(grid))
            diag[:-1] += m0
            diag[1:] += m2
            x, y = exponents[index]
            for left, pinned, slot in ((True, pin_left, 0), (False, pin_right, -1)):
                end = _end_moment(x, y, grid[slot], left, 2 if pinned else 0)
                if math.isinf(end):
                    if coef == 0:
                        continue
                    side = "left" if left else "right"
                    raise FormError(
                        f"Term {coef:+.3g}<t>_{x:g}^{y:g} diverges at the {side} end"
                    )
                diag[slot] += end
            return coef * diag, coef * m1

        m0, m1, m2 = moments[0]
        total = m0 + 2 * m1 + m2
        slope = total / h**2
        a_diag = np.zeros(len(grid))
        a_diag[:-1] += slope
        a_diag[1:] += slope
        a_off = -slope
        x_s, y_s = self.stiffness
        if pin_left:
            a_diag[0] += _end_moment(x_s, y_s, grid[0], True, 0) / (grid[0] + 1) ** 2
        if pin_right:
            a_diag[-1] += _end_moment(x_s, y_s, grid[-1], False, 0) / (1 - grid[-1]) ** 2

        for offset, term in enumerate(self.potential, start=2):
            diag, off = mass_part(offset, term.coef)
            a_diag += diag
            a_off += off
        b_diag, b_off = mass_part(1, 1.0)
        logger.debug(
            "Assembled %s on %d nodes (pinned=%s)", self.label or "form", len(grid), self.pinned
        )
        return a_diag, a_off, b_diag, b_off

    def tridiagonal(self) -> tuple[FloatArray, FloatArray]:
        a_diag, a_off, _, _ = self._assembled
        return a_diag, a_off

    def lumped_mass(self) -> FloatArray:
        _, _, b_diag, b_off = self._assembled
        lumped = b_diag.copy()
        lumped[:-1] += b_off
        lumped[1:] += b_off
        return lumped

    def form_matrix(self) -> sparse.csr_matrix:
        a_diag, a_off = self.tridiagonal()
        return sparse.diags([a_off, a_diag, a_off], [-1, 0, 1], format="csr")

    def mass_matrix(self) -> sparse.csr_matrix:
        _, _, b_diag, b_off = self._assembled
        return sparse.diags([b_off, b_diag, b_off], [-1, 0, 1], format="csr")

    def evaluate(
        self,
        f: Callable[[float], float],
        df: Callable[[float], float],
        support: tuple[float, float] = (-1.0, 1.0),
    ) -> float:
        """Continuous form value of f by adaptive quadrature over `support`."""
        gradient_weight = PowerTerm(1.0, *self.stiffness)

        def integrand(t: float) -> float:
            value = df(t) ** 2 * float(gradient_weight(t))
            return value + f(t) ** 2 * sum(float(term(t)) for term in self.potential)

        value, _ = quad(integrand, *support, epsabs=0.0, epsrel=1e-11, limit=400)
        return value


def _raw_negative_count(form: WeightedForm, cutoff_tol: float) -> int:
    a_diag, a_off = form.tridiagonal()
    shifted = a_diag + cutoff_tol * form.lumped_mass()
    radius = np.zeros_like(shifted)
    radius[:-1] += np.abs(a_off)
    radius[1:] += np.abs(a_off)
    lower = float(np.min(shifted - radius))
    if lower >= 0:
        return 0
    # Sturm counts on the unscaled tridiagonal are exact for a nearby matrix.
    values = eigvalsh_tridiagonal(
        shifted, a_off, select="v", select_range=(1.01 * lower - 1e-300, 0.0)
    )
    return int(np.count_nonzero(values < 0))


def negative_count(
    form: WeightedForm,
    *,
    cutoff_tol: float = DEFAULT_CUTOFF_TOL,
    check_refinement: bool = True,
) -> int:
    """Number of negative directions of the discrete form.

    With `check_refinement` the count is repeated on the nested refinement of the
    grid and must agree. Forms whose count grows with the grid, such as a form
    shifted far below its spectrum, always fail that check; count them with
    `check_refinement=False`.
    """
    count = _raw_negative_count(form, cutoff_tol)
    if not check_refinement:
        return count
    finer = form.on_grid(refine_grid(form.grid))
    finer_count = _raw_negative_count(finer, cutoff_tol)
    if finer_count != count:
        raise UnstableCountError(
            [count, finer_count], [form.dimension, finer.dimension]
        )
    return count


def _spec(m: int, k: int) -> EquatorMapSpec:
    return EquatorMapSpec(m, k)


def build_mode_form(
    m: int,
    k: int,
    ell: int,
    j: int = 0,
    grid: ArrayLike | None = None,
    *,
    nu: float | None = None,
    rho: float | None = None,
) -> WeightedForm:
    """Second variation of the equator map restricted to one (ell, j) harmonic mode."""
    spec = _spec(m, k)
    if k == 0:
        raise FormError("k=0 has no transverse harmonics; use build_axis_form")
    if ell < 0 or j < 0:
        raise FormError(f"Mode indices must be nonnegative, got ell={ell}, j={j}")
    n = spec.n
    nu = ell * (k - 1 + ell) if nu is None else nu
    rho = j * (n - 1 + j) if rho is None else rho
    terms = []
    if nu != 0:
        terms.append(PowerTerm(nu / 2, (n - 1) / 2, (k - 3) / 2))
    if rho != n:
        terms.append(PowerTerm((rho - n) / 2, (n - 3) / 2, (k - 1) / 2))
    return WeightedForm(
        grid=graded_grid(DEFAULT_GRID_NODES) if grid is None else np.asarray(grid),
        stiffness=((n + 1) / 2, (k + 1) / 2),
        potential=tuple(terms),
        reference=((n - 1) / 2, (k - 1) / 2),
        label=f"mode(m={m}, k={k}, ell={ell}, j={j})",
    )


def build_axis_form(m: int, grid: ArrayLike | None = None) -> WeightedForm:
    """Second variation of the radial projection S^m -> S^(m-1) along the axis."""
    if m < 3:  # noqa: PLR2004
        raise FormError(f"Axis form needs m >= 3, got {m}")
    half = m / 2
    return WeightedForm(
        grid=graded_grid(DEFAULT_GRID_NODES) if grid is None else np.asarray(grid),
        stiffness=(half, half),
        potential=(PowerTerm(-(m - 1), half - 2, half - 2),),
        reference=(half - 1, half - 1),
        label=f"axis(m={m})",
    )


def substitution_factor(m: int, k: int, ell: int = 0) -> PowerTerm:
    """Factor h with phi = psi * h turning the mode form into a shifted Jacobi form."""
    alpha = least_root(_spec(m, k).n)
    if k == 0:
        return PowerTerm(1.0, -alpha / 2, -alpha / 2)
    return PowerTerm(1.0, -alpha / 2, ell / 2)


def build_substituted_form(
    m: int, k: int, ell: int, grid: ArrayLike | None = None
) -> WeightedForm:
    """Mode form of degree `ell` written for psi = phi / h, h = `substitution_factor`.

    Both forms agree on compactly supported functions; the weights gain h^2.
    """
    spec = _spec(m, k)
    if k == 0:
        raise FormError("k=0 has no transverse harmonics; use build_substituted_axis_form")
    n = spec.n
    h = substitution_factor(m, k, ell)
    alpha, beta = -2 * h.x, 2 * h.y
    shift = 0.25 * (beta - alpha) * (n + k + beta - alpha)
    a, b = (n - 1) / 2 + 2 * h.x, (k - 1) / 2 + 2 * h.y
    return WeightedForm(
        grid=graded_grid(DEFAULT_GRID_NODES) if grid is None else np.asarray(grid),
        stiffness=(a + 1, b + 1),
        potential=(PowerTerm(shift, a, b),),
        reference=(a, b),
        label=f"jacobi(m={m}, k={k}, ell={ell})",
    )


def build_substituted_axis_form(m: int, grid: ArrayLike | None = None) -> WeightedForm:
    h = substitution_factor(m, 0)
    a = m / 2 - 1 + 2 * h.x
    return WeightedForm(
        grid=graded_grid(DEFAULT_GRID_NODES) if grid is None else np.asarray(grid),
        stiffness=(a + 1, a + 1),
        potential=(PowerTerm(-(m - 1 - 2 * h.x), a, a),),
        reference=(a, a),
        label=f"jacobi-axis(m={m})",
    )


def jacobi_eigen_check(
    a: float, b: float, count: int, grid: ArrayLike | None = None
) -> list[float]:
    """Lowest discrete eigenvalues of -(<t>_{a+1}^{b+1} u')' = lambda <t>_a^b u."""
    if not (a > 0 and b > 0):
        raise ConfigError(f"Jacobi parameters must be positive, got a={a}, b={b}")
    form = WeightedForm(
        grid=graded_grid(DEFAULT_GRID_NODES) if grid is None else np.asarray(grid),
        stiffness=(a + 1, b + 1),
        reference=(a, b),
        label=f"jacobi(a={a:g}, b={b:g})",
    )
    if count >= form.dimension - 1:
        raise FormError(f"Grid of {form.dimension} nodes cannot resolve {count} eigenvalues")
    values = eigsh(
        form.form_matrix(),
        k=count,
        M=form.mass_matrix(),
        sigma=-1.0,
        which="LM",
        return_eigenvectors=False,
    )
    return sorted(float(v) for v in values)


def mode_index_table(
    m: int,
    k: int,
    *,
    grid_nodes: int = DEFAULT_GRID_NODES,
    grading: float = DEFAULT_GRADING,
    cutoff_tol: float = DEFAULT_CUTOFF_TOL,
    degrees: list[int] | None = None,
) -> list[PerEllCount]:
    """Numeric negative counts per transverse degree, each checked under refinement.

    Without explicit `degrees` the scan stops at the first degree with count 0.
    """
    grid = graded_grid(grid_nodes, grading)
    if k == 0:
        count = negative_count(build_axis_form(m, grid), cutoff_tol=cutoff_tol)
        return [PerEllCount(ell=0, count=count, multiplicity=1)]

    rows = []
    for ell in degrees if degrees is not None else range(MAX_DEGREE):
        count = negative_count(build_mode_form(m, k, ell, 0, grid), cutoff_tol=cutoff_tol)
        rows.append(
            PerEllCount(ell=ell, count=count, multiplicity=harmonic_multiplicity(k, ell))
        )
        if degrees is None and count == 0:
            break
    return rows
