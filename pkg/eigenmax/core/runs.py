from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
import sys
from typing import TextIO

from eigenmax.core import __version__
from eigenmax.core.config import RunConfig
from eigenmax.core.eigenmap import (
    Eigenmap,
    equation_residual,
    extract_eigenmap,
    harmonic_residual,
    map_energy,
)
from eigenmax.core.exceptions import EigenmaxError, ExitCode, InfiniteIndexError
from eigenmax.core.mesh import (
    Density,
    SimplicialMesh,
    assemble_mass,
    assemble_stiffness,
    build_flat_torus,
    build_round_sphere,
    cell_energy_density,
)
from eigenmax.core.mesh_io import read_mesh, write_coo
from eigenmax.core.optimizer import CAP_SLACK, AscentState, maximize
from eigenmax.core.output_formatters import create_formatter
from eigenmax.core.reduced_sl import mode_index_table
from eigenmax.core.spectral import reference_mass, solve_eigen, spectral_index
from eigenmax.core.sphere_oracle import (
    EquatorMapSpec,
    analytic_index,
    equator_energy,
    hersch_upper_bound_check,
    sphere_volume,
)
from eigenmax.core.types import (
    EigenmapSummary,
    Geometry,
    IndexVerifyRow,
    JacobiIndexReport,
    OptimizeReport,
    OptimizeRunReport,
    OracleRow,
    OutputFormat,
)
from eigenmax.core.utils import format_float, logger

INFINITE_INDEX_NOTE = "infinite (n<6)"
MIN_VERIFY_M = 7

ORACLE_COLUMNS = (
    "m",
    "k",
    "n",
    "sigma_m",
    "energy",
    "alpha_minus",
    "per_ell",
    "total_index",
    "note",
)
INDEX_VERIFY_COLUMNS = ("m", "k", "ell", "multiplicity", "analytic", "numeric", "agree")
SPECTRUM_COLUMNS = ("index", "eigenvalue", "lambda_bar", "residual", "cluster")
OPTIMIZE_COLUMNS = (
    "cap",
    "lambda_bar",
    "certificate",
    "defect",
    "rank",
    "stop_reason",
    "stability_index",
    "converged",
)
DENSITY_COLUMNS = ("cell", "rho", "cell_volume", "cell_mass", "at_cap")
HERSCH_COLUMNS = ("quantity", "value")

type AnalyticIndex = Callable[[EquatorMapSpec], JacobiIndexReport]


@dataclass
class RunResult:
    exit_code: ExitCode = ExitCode.OK
    artifacts: list[Path] = field(default_factory=list)
    note: str | None = None


def build_mesh(config: RunConfig) -> SimplicialMesh:
    mesh_config = config.mesh
    match mesh_config.geometry:
        case Geometry.TORUS:
            return build_flat_torus(
                mesh_config.dim,
                mesh_config.n_per_axis,
                mesh_config.side,
                sides=mesh_config.sides,
            )
        case Geometry.SPHERE:
            return build_round_sphere(
                mesh_config.dim, mesh_config.level, max_cells=mesh_config.max_cells
            )
        case Geometry.FILE:
            assert mesh_config.mesh_path is not None
            return read_mesh(mesh_config.mesh_path)


def _output_dir(config: RunConfig) -> Path:
    config.output_dir.mkdir(parents=True, exist_ok=True)
    return config.output_dir


def _emit_table(
    format_type: OutputFormat,
    columns: Sequence[str],
    rows: Sequence[Sequence[object]],
    stream: TextIO,
    note: str | None = None,
) -> None:
    formatter = create_formatter(format_type, columns, stream)
    for row in rows:
        formatter.add_row(row)
    formatter.finalize(note)


def _write_csv(
    path: Path,
    columns: Sequence[str],
    rows: Sequence[Sequence[object]],
    note: str | None = None,
) -> Path:
    with path.open("w", encoding="utf-8", newline="") as f:
        _emit_table(OutputFormat.CSV, columns, rows, f, note)
    return path


def _format_per_ell(report: JacobiIndexReport) -> str:
    return " ".join(
        f"{entry.ell}:{entry.count}x{entry.multiplicity}" for entry in report.per_ell
    )


def oracle_row(m: int, k: int) -> OracleRow:
    try:
        spec = EquatorMapSpec(m, k)
    except EigenmaxError as e:
        return OracleRow(m=m, k=k, note=str(e))
    row = OracleRow(
        m=m, k=k, n=spec.n, sigma_m=sphere_volume(m), energy=equator_energy(spec)
    )
    try:
        report = analytic_index(spec)
    except InfiniteIndexError:
        return row.model_copy(update={"total_index": INFINITE_INDEX_NOTE})
    return row.model_copy(
        update={
            "alpha_minus": report.alpha_minus,
            "per_ell": _format_per_ell(report),
            "total_index": str(report.total),
            "note": "borderline root" if report.borderline else "",
        }
    )


def run_oracle(config: RunConfig, stream: TextIO = sys.stdout) -> RunResult:
    """Equator energies and analytic indices over the configured (m, k) ranges."""
    oracle = config.oracle
    rows = [
        oracle_row(m, k)
        for m in range(oracle.m_min, oracle.m_max + 1)
        for k in range(oracle.k_min, oracle.k_max + 1)
    ]
    values = [[getattr(row, column) for column in ORACLE_COLUMNS] for row in rows]
    path = _write_csv(_output_dir(config) / "oracle.csv", ORACLE_COLUMNS, values)
    _emit_table(config.output_format, ORACLE_COLUMNS, values, stream)
    logger.info("Oracle table: %d rows", len(rows))
    return RunResult(artifacts=[path])


def verify_pair(
    config: RunConfig, m: int, k: int, analytic: AnalyticIndex = analytic_index
) -> list[IndexVerifyRow]:
    settings = config.index_verify
    expected = {entry.ell: entry for entry in analytic(EquatorMapSpec(m, k)).per_ell}
    numeric = {
        entry.ell: entry
        for entry in mode_index_table(
            m,
            k,
            grid_nodes=settings.grid_nodes,
            grading=settings.grading,
            cutoff_tol=settings.cutoff_tol,
        )
    }
    rows = []
    for ell in sorted(expected.keys() | numeric.keys()):
        reference = expected[ell] if ell in expected else numeric[ell]
        rows.append(
            IndexVerifyRow(
                m=m,
                k=k,
                ell=ell,
                multiplicity=reference.multiplicity,
                analytic=expected[ell].count if ell in expected else 0,
                numeric=numeric[ell].count if ell in numeric else 0,
            )
        )
    return rows


def run_index_verify(
    config: RunConfig,
    stream: TextIO = sys.stdout,
    *,
    analytic: AnalyticIndex = analytic_index,
) -> RunResult:
    """Compare analytic per-degree counts with reduced form counts for every finite pair."""
    pairs = [
        (m, k)
        for m in range(MIN_VERIFY_M, config.index_verify.m_max + 1)
        for k in range(m - MIN_VERIFY_M + 1)
    ]
    rows: list[IndexVerifyRow] = []
    for m, k in pairs:
        rows.extend(verify_pair(config, m, k, analytic))
        logger.info("Verified index of m=%d k=%d", m, k)

    note = None
    if not pairs:
        note = f"no finite-index pairs for m <= {config.index_verify.m_max} (n<6)"
    values = [[getattr(row, column) for column in INDEX_VERIFY_COLUMNS] for row in rows]
    path = _write_csv(
        _output_dir(config) / "index_verify.csv", INDEX_VERIFY_COLUMNS, values, note
    )
    _emit_table(config.output_format, INDEX_VERIFY_COLUMNS, values, stream, note)

    failed = [row for row in rows if not row.agree]
    for row in failed:
        logger.warning(
            "Index mismatch m=%d k=%d ell=%d: analytic %d, numeric %d",
            row.m,
            row.k,
            row.ell,
            row.analytic,
            row.numeric,
        )
    exit_code = ExitCode.VERIFICATION_FAILED if failed else ExitCode.OK
    return RunResult(exit_code, [path], note)


def run_spectrum(config: RunConfig, stream: TextIO = sys.stdout) -> RunResult:
    """Lowest eigenvalues of the uniform probability density on the configured mesh.

    With `export_matrices` the stiffness and mass matrices are written as COO text.
    """
    mesh = build_mesh(config)
    rho = Density.uniform(mesh)
    K = assemble_stiffness(mesh)
    M = assemble_mass(mesh, rho)
    spectrum = solve_eigen(K, M, config.k, config=config.solver, seed=config.seed)
    report = spectrum.to_report(rho, config.k)
    out = _output_dir(config)
    path = out / "spectrum.json"
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    artifacts = [path]
    if config.export_matrices:
        for name, matrix in (("stiffness", K), ("mass", M)):
            artifacts.append(out / f"{name}.coo")
            write_coo(matrix, artifacts[-1])

    rows = []
    for number, cluster in enumerate(spectrum.clusters()):
        for index in cluster:
            value = float(spectrum.eigenvalues[index])
            rows.append([index, value, value * rho.mass, report.residuals[index], number])
    _emit_table(config.output_format, SPECTRUM_COLUMNS, rows, stream)
    return RunResult(artifacts=artifacts)


def summarize_eigenmap(
    mesh: SimplicialMesh, density: Density, eigenmap: Eigenmap
) -> EigenmapSummary:
    K = assemble_stiffness(mesh)
    return EigenmapSummary(
        rank=eigenmap.rank,
        defect=eigenmap.defect,
        spherical=eigenmap.spherical,
        eigenvalue=eigenmap.eigenvalue,
        equation_residual=equation_residual(K, assemble_mass(mesh, density), eigenmap),
        harmonic_residual=harmonic_residual(mesh, eigenmap),
        energy=map_energy(mesh, eigenmap.components),
    )


def _run_report(
    config: RunConfig,
    mesh: SimplicialMesh,
    cap: float,
    state: AscentState,
    eigenmap: Eigenmap,
) -> OptimizeRunReport:
    assert state.spectrum is not None and state.supergradient is not None
    assert state.stop_reason is not None
    K = assemble_stiffness(mesh)
    reference = reference_mass(mesh)
    cutoff = config.solver.index_cutoff_tol
    potential = assemble_mass(mesh, state.density) * state.spectrum.eigenvalue(state.k)
    stability = spectral_index(
        K, potential, reference, cutoff_tol=cutoff, config=config.solver
    )
    energy_density = assemble_mass(mesh, cell_energy_density(mesh, eigenmap.components))
    energy_index = spectral_index(
        K, energy_density, reference, cutoff_tol=cutoff, config=config.solver
    )
    return OptimizeRunReport(
        k=state.k,
        cap=cap,
        mesh_cells=mesh.n_cells,
        mesh_vertices=mesh.n_vertices,
        total_volume=mesh.total_volume,
        history=state.history,
        final_lambda_bar=state.lambda_bar,
        certificate=state.certificate,
        stop_reason=state.stop_reason,
        direction_norm=state.supergradient.direction_norm,
        cluster=list(state.supergradient.cluster),
        eigenmap=summarize_eigenmap(mesh, state.density, eigenmap),
        stability_index=stability.count,
        energy_density_index=energy_index.count,
        converged=(
            state.certificate < config.ascent.tol_cert
            and eigenmap.defect < config.ascent.defect_threshold
        ),
    )


def _write_artifacts(
    directory: Path, suffix: str, state: AscentState, eigenmap: Eigenmap
) -> list[Path]:
    rho = state.density
    at_cap = rho.values >= rho.cap * (1 - CAP_SLACK)
    density_rows = [
        [cell, float(value), float(volume), float(mass), bool(flag)]
        for cell, (value, volume, mass, flag) in enumerate(
            zip(rho.values, rho.mesh.cell_volume, rho.cell_mass, at_cap, strict=True)
        )
    ]
    map_columns = (
        "vertex",
        *(f"u_{a}" for a in range(eigenmap.rank)),
        "pointwise_norm",
    )
    map_rows = [
        [vertex, *(float(x) for x in row), float(norm)]
        for vertex, (row, norm) in enumerate(
            zip(eigenmap.components, eigenmap.pointwise_norm, strict=True)
        )
    ]
    return [
        _write_csv(directory / f"density{suffix}.csv", DENSITY_COLUMNS, density_rows),
        _write_csv(directory / f"eigenmap{suffix}.csv", map_columns, map_rows),
    ]


def run_optimize(config: RunConfig, stream: TextIO = sys.stdout) -> RunResult:
    """Ascent per cap of the sweep, eigenmap extraction and certificates."""
    mesh = build_mesh(config)
    directory = _output_dir(config)
    caps = config.sweep_caps
    runs: list[OptimizeRunReport] = []
    artifacts: list[Path] = []
    for number, cap in enumerate(caps):
        logger.info("Optimizing lambda_%d with cap %s", config.k, format_float(cap))
        state = maximize(
            mesh, config.k, cap, config.ascent, config.solver, seed=config.seed
        )
        assert state.spectrum is not None
        eigenmap = extract_eigenmap(
            state.spectrum, config.k, defect_threshold=config.ascent.defect_threshold
        )
        runs.append(_run_report(config, mesh, cap, state, eigenmap))
        suffix = "" if len(caps) == 1 else f"_{number}"
        artifacts.extend(_write_artifacts(directory, suffix, state, eigenmap))

    report = OptimizeReport(version=__version__, seed=config.seed, runs=runs)
    path = directory / "report.json"
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    artifacts.insert(0, path)

    rows = [
        [
            run.cap,
            run.final_lambda_bar,
            run.certificate,
            run.eigenmap.defect,
            run.eigenmap.rank,
            run.stop_reason.value,
            run.stability_index,
            run.converged,
        ]
        for run in runs
    ]
    _emit_table(config.output_format, OPTIMIZE_COLUMNS, rows, stream)
    exit_code = ExitCode.OK if report.converged else ExitCode.NOT_CONVERGED
    return RunResult(exit_code, artifacts)


def run_hersch_check(config: RunConfig, stream: TextIO = sys.stdout) -> RunResult:
    """Conformally balanced coordinate bound for the uniform density on a round sphere."""
    mesh = build_mesh(config)
    report = hersch_upper_bound_check(mesh, Density.uniform(mesh))
    path = _output_dir(config) / "hersch.json"
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    rows = [
        ["bound", report.bound],
        ["max_coordinate_bound", report.max_coordinate_bound],
        ["lambda_bar", report.lambda_bar],
        ["reference", report.reference],
        ["center_residual", report.center_residual],
    ]
    _emit_table(config.output_format, HERSCH_COLUMNS, rows, stream)
    return RunResult(artifacts=[path])
