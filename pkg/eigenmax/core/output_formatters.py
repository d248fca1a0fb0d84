from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Sequence
import csv
import json
import sys
from typing import TextIO

from rich.console import Console
from rich.table import Table

from eigenmax.core.types import OutputFormat
from eigenmax.core.utils import format_row


class TableFormatter(ABC):
    def __init__(self, columns: Sequence[str], stream: TextIO = sys.stdout) -> None:
        self.stream = stream
        self.columns = list(columns)
        self._rows: list[list[object]] = []

    def add_row(self, values: Sequence[object]) -> None:
        if len(values) != len(self.columns):
            raise ValueError(
                f"Row has {len(values)} values, table has {len(self.columns)} columns"
            )
        self._rows.append(list(values))

    @property
    def rows(self) -> list[list[object]]:
        return self._rows

    @abstractmethod
    def finalize(self, note: str | None = None) -> None:
        """Write the table to the stream; `note` is a trailing remark, if any."""
        pass


class CsvTableFormatter(TableFormatter):
    def finalize(self, note: str | None = None) -> None:
        writer = csv.writer(self.stream, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self._rows:
            writer.writerow(format_row(row))
        if note:
            self.stream.write(f"# {note}\n")
        self.stream.flush()


class RichTableFormatter(TableFormatter):
    def finalize(self, note: str | None = None) -> None:
        table = Table(*self.columns, caption=note)
        for row in self._rows:
            table.add_row(*format_row(row))
        Console(file=self.stream, width=200).print(table)


class JsonTableFormatter(TableFormatter):
    def finalize(self, note: str | None = None) -> None:
        records = [dict(zip(self.columns, row, strict=True)) for row in self._rows]
        payload: dict[str, object] = {"columns": self.columns, "rows": records}
        if note:
            payload["note"] = note
        json.dump(payload, self.stream, indent=2)
        self.stream.write("\n")
        self.stream.flush()


def create_formatter(
    format_type: OutputFormat, columns: Sequence[str], stream: TextIO = sys.stdout
) -> TableFormatter:
    formatters: dict[OutputFormat, type[TableFormatter]] = {
        OutputFormat.TEXT: RichTableFormatter,
        OutputFormat.CSV: CsvTableFormatter,
        OutputFormat.JSON: JsonTableFormatter,
    }

    formatter_class = formatters.get(format_type, RichTableFormatter)
    return formatter_class(columns, stream)
