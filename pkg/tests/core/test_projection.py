from __future__ import annotations

import numpy as np
from numpy.typing import NDArray
import pytest

from eigenmax.core.exceptions import ConfigError
from eigenmax.core.projection import (
    project_capped_simplex,
    project_psd,
    project_spectraplex,
)


def _bisection_projection(
    v: NDArray[np.float64], u: NDArray[np.float64], total: float
) -> NDArray[np.float64]:
    lo, hi = float(np.min(v - u)) - 1.0, float(np.max(v)) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.clip(v - mid, 0.0, u).sum() > total:
            lo = mid
        else:
            hi = mid
    return np.clip(v - 0.5 * (lo + hi), 0.0, u)


@pytest.mark.parametrize("seed", range(200))
def test_capped_simplex_matches_bisection_oracle(seed: int) -> None:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    v = rng.normal(scale=float(rng.uniform(0.1, 3.0)), size=n)
    u = rng.uniform(0.05, 1.0, size=n)
    u *= max(1.0, 1.05 / u.sum())
    x = project_capped_simplex(v, u, 1.0)

    assert x.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(x >= 0.0)
    assert np.all(x <= u)
    assert np.allclose(x, _bisection_projection(v, u, 1.0), atol=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_capped_simplex_is_closest_feasible_point(seed: int) -> None:
    rng = np.random.default_rng(1000 + seed)
    n = 6
    v = rng.normal(size=n)
    u = np.full(n, 0.4)
    x = project_capped_simplex(v, u, 1.0)
    best = np.linalg.norm(x - v)
    for _ in range(200):
        y = project_capped_simplex(rng.uniform(-1, 1, n), u, 1.0)
        assert np.linalg.norm(y - v) >= best - 1e-12


def test_capped_simplex_fixed_point() -> None:
    x = np.array([0.2, 0.3, 0.5])
    assert np.allclose(project_capped_simplex(x, 1.0, 1.0), x, atol=1e-15)


def test_capped_simplex_full_capacity_returns_bounds() -> None:
    u = np.array([0.25, 0.25, 0.5])
    assert np.array_equal(project_capped_simplex([9.0, -3.0, 1.0], u, 1.0), u)


def test_capped_simplex_rejects_empty_set() -> None:
    with pytest.raises(ConfigError, match="empty"):
        project_capped_simplex([0.0, 0.0], [0.2, 0.3], 1.0)
    with pytest.raises(ConfigError):
        project_capped_simplex([0.0, 0.0], [-0.2, 2.0], 1.0)


def test_capped_simplex_without_active_cap_is_simplex_projection() -> None:
    x = project_capped_simplex([1.0, 0.0, -5.0], 10.0, 1.0)
    assert np.allclose(x, [1.0, 0.0, 0.0])


def test_spectraplex_projection_has_unit_trace() -> None:
    rng = np.random.default_rng(5)
    a = rng.normal(size=(4, 4))
    g = project_spectraplex(a + a.T)
    assert np.trace(g) == pytest.approx(1.0, abs=1e-12)
    assert np.min(np.linalg.eigvalsh(g)) >= -1e-12
    assert np.allclose(g, g.T)


def test_spectraplex_keeps_feasible_points() -> None:
    g = np.diag([0.5, 0.3, 0.2])
    assert np.allclose(project_spectraplex(g), g, atol=1e-14)


def test_spectraplex_rank_limit() -> None:
    g = project_spectraplex(np.diag([3.0, 2.0, 1.0]), rank=1)
    assert np.allclose(g, np.diag([1.0, 0.0, 0.0]), atol=1e-14)


def test_psd_projection_clips_negative_eigenvalues() -> None:
    g = project_psd(np.diag([2.0, -1.0, 0.5]))
    assert np.allclose(g, np.diag([2.0, 0.0, 0.5]), atol=1e-14)


def test_psd_projection_rank_truncation() -> None:
    g = project_psd(np.diag([2.0, 3.0, 0.5]), rank=2)
    assert np.allclose(g, np.diag([2.0, 3.0, 0.0]), atol=1e-14)
    assert np.linalg.matrix_rank(g) == 2
