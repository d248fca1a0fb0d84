from __future__ import annotations

from pathlib import Path

import pytest

from eigenmax.core.config import OUTPUT_DIR_ENV
from eigenmax.core.mesh import SimplicialMesh, build_flat_torus, build_round_sphere


@pytest.fixture(autouse=True)
def _isolate_output_dir(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    """Keep a stray output-dir variable from redirecting artifacts of a test run."""
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    monkeypatch.chdir(tmp_path)


@pytest.fixture(scope="session")
def small_torus() -> SimplicialMesh:
    return build_flat_torus(2, 6, 6.283185307179586)


@pytest.fixture(scope="session")
def torus_32() -> SimplicialMesh:
    return build_flat_torus(2, 32, 6.283185307179586)


@pytest.fixture(scope="session")
def sphere_level_1() -> SimplicialMesh:
    return build_round_sphere(2, 1)


@pytest.fixture(scope="session")
def sphere_level_2() -> SimplicialMesh:
    return build_round_sphere(2, 2)


@pytest.fixture(scope="session")
def sphere_level_3() -> SimplicialMesh:
    return build_round_sphere(2, 3)
