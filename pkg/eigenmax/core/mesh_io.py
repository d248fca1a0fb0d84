from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import sparse

from eigenmax.core.exceptions import MeshFormatError
from eigenmax.core.mesh import SimplicialMesh
from eigenmax.core.utils import format_float


def write_mesh(mesh: SimplicialMesh, path: Path) -> None:
    lines = [f"DIM {mesh.dim}"]
    if mesh.period is not None:
        lines.append("PERIOD " + " ".join(format_float(x) for x in mesh.period))
    lines.append(f"VERTICES {mesh.n_vertices} {mesh.vertices.shape[1]}")
    lines.extend(" ".join(format_float(x) for x in row) for row in mesh.vertices)
    lines.append(f"CELLS {mesh.n_cells}")
    lines.extend(" ".join(str(int(i)) for i in row) for row in mesh.cells)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class _LineReader:
    def __init__(self, path: Path) -> None:
        self.path = path
        self._lines = [
            (number, line.split("#", 1)[0].split())
            for number, line in enumerate(
                path.read_text(encoding="utf-8").splitlines(), start=1
            )
        ]
        self._lines = [(number, words) for number, words in self._lines if words]
        self._pos = 0

    def fail(self, reason: str) -> MeshFormatError:
        line = self._lines[min(self._pos, len(self._lines) - 1)][0] if self._lines else 0
        return MeshFormatError(str(self.path), line, reason)

    def peek(self) -> list[str] | None:
        return self._lines[self._pos][1] if self._pos < len(self._lines) else None

    def next(self) -> list[str]:
        if (words := self.peek()) is None:
            raise self.fail("unexpected end of file")
        self._pos += 1
        return words

    def header(self, keyword: str, count: int) -> list[str]:
        words = self.next()
        if words[0] != keyword or len(words) != count + 1:
            self._pos -= 1
            raise self.fail(f"expected '{keyword}' with {count} value(s)")
        return words[1:]

    def block(self, rows: int, width: int, dtype: type) -> np.ndarray:
        data = []
        for _ in range(rows):
            words = self.next()
            if len(words) != width:
                self._pos -= 1
                raise self.fail(f"expected {width} entries, got {len(words)}")
            try:
                data.append([dtype(w) for w in words])
            except ValueError as e:
                self._pos -= 1
                raise self.fail(str(e)) from e
        return np.array(data, dtype=dtype).reshape(rows, width)


def read_mesh(path: Path) -> SimplicialMesh:
    reader = _LineReader(path)
    try:
        (dim_word,) = reader.header("DIM", 1)
        dim = int(dim_word)
        period = None
        if (words := reader.peek()) is not None and words[0] == "PERIOD":
            period = [float(w) for w in reader.next()[1:]]
        n_vertices, ambient = (int(w) for w in reader.header("VERTICES", 2))
        vertices = reader.block(n_vertices, ambient, float)
        (n_cells,) = (int(w) for w in reader.header("CELLS", 1))
        cells = reader.block(n_cells, dim + 1, int)
    except ValueError as e:
        raise reader.fail(str(e)) from e
    if reader.peek() is not None:
        raise reader.fail("trailing data after cell block")
    return SimplicialMesh(dim, vertices, cells, period=period)


def write_coo(matrix: sparse.spmatrix, path: Path) -> None:
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}"]
    lines.extend(
        f"{coo.row[i]} {coo.col[i]} {format_float(coo.data[i])}" for i in order
    )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
