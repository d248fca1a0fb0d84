from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import TextIO

from eigenmax.core.config import RunConfig
from eigenmax.core.runs import (
    RunResult,
    run_hersch_check,
    run_index_verify,
    run_optimize,
    run_oracle,
    run_spectrum,
)
from eigenmax.core.types import CommandName

type Runner = Callable[[RunConfig, TextIO], RunResult]


@dataclass(frozen=True)
class Command:
    name: CommandName
    description: str
    runner: Runner
    artifacts: tuple[str, ...] = ()


class CommandRegistry:
    def __init__(self, excluded_commands: list[CommandName] | None = None) -> None:
        self.commands: dict[CommandName, Command] = {
            CommandName.ORACLE: Command(
                name=CommandName.ORACLE,
                description="Equator map energies and analytic indices per (m, k)",
                runner=run_oracle,
                artifacts=("oracle.csv",),
            ),
            CommandName.INDEX_VERIFY: Command(
                name=CommandName.INDEX_VERIFY,
                description="Check analytic indices against reduced form counts",
                runner=run_index_verify,
                artifacts=("index_verify.csv",),
            ),
            CommandName.SPECTRUM: Command(
                name=CommandName.SPECTRUM,
                description="Lowest eigenvalues of the uniform density on a mesh",
                runner=run_spectrum,
                artifacts=("spectrum.json",),
            ),
            CommandName.OPTIMIZE: Command(
                name=CommandName.OPTIMIZE,
                description="Maximize the normalized k-th eigenvalue under a density cap",
                runner=run_optimize,
                artifacts=("report.json", "density.csv", "eigenmap.csv"),
            ),
            CommandName.HERSCH_CHECK: Command(
                name=CommandName.HERSCH_CHECK,
                description="Conformally balanced upper bound for the first eigenvalue",
                runner=run_hersch_check,
                artifacts=("hersch.json",),
            ),
        }
        for name in excluded_commands or []:
            self.commands.pop(name, None)

    def find_command(self, name: str) -> Command | None:
        try:
            return self.commands.get(CommandName(name.strip().lower()))
        except ValueError:
            return None

    def names(self) -> list[str]:
        return [str(name) for name in self.commands]

    def get_help_text(self) -> str:
        lines = ["Commands:", ""]
        for command in self.commands.values():
            lines.append(f"  {command.name:<14} {command.description}")
            if command.artifacts:
                lines.append(f"  {'':<14} writes {', '.join(command.artifacts)}")
        return "\n".join(lines)
