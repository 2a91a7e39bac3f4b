"""Lattice geometry and binary class fields.

Nodes are addressed 1-based as ``(i, j)`` (row, column) in the public API.
Internally fields are numpy arrays of shape ``(m, n)`` indexed 0-based, which
is row-major, so the lexicographic node order is a flat pass over the array.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = [
    "GridDims",
    "CellOffset",
    "LfcField",
    "LatticeError",
    "predecessor_set",
    "translate_template",
    "column_nodes",
    "read_field",
    "write_field",
]


class LatticeError(ValueError):
    """Node or column outside the lattice, or malformed field data."""


@dataclass(frozen=True)
class GridDims:
    m: int  # rows (vertical / time samples)
    n: int  # columns (horizontal traces)

    def __post_init__(self):
        if int(self.m) < 1 or int(self.n) < 1:
            raise LatticeError(f"lattice dims must be positive, got {self.m}x{self.n}")

    @property
    def size(self) -> int:
        return self.m * self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    def contains(self, node: tuple[int, int]) -> bool:
        i, j = node
        return 1 <= i <= self.m and 1 <= j <= self.n

    def check(self, node: tuple[int, int]) -> None:
        if not self.contains(node):
            raise LatticeError(f"node {node} outside {self.m}x{self.n} lattice")

    def linear(self, node: tuple[int, int]) -> int:
        """Row-major index of a 1-based node."""
        self.check(node)
        i, j = node
        return self.n * (i - 1) + (j - 1)

    def node(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.size:
            raise LatticeError(f"linear index {index} outside 0..{self.size - 1}")
        return (index // self.n + 1, index % self.n + 1)


@dataclass(frozen=True, order=True)
class CellOffset:
    di: int
    dj: int

    def __neg__(self) -> "CellOffset":
        return CellOffset(-self.di, -self.dj)

    def __add__(self, other: "CellOffset") -> "CellOffset":
        return CellOffset(self.di + other.di, self.dj + other.dj)

    def __sub__(self, other: "CellOffset") -> "CellOffset":
        return CellOffset(self.di - other.di, self.dj - other.dj)

    @property
    def is_sequential(self) -> bool:
        """True when the offset points strictly backwards in row-major order."""
        return self.di < 0 or (self.di == 0 and self.dj < 0)

    def __str__(self) -> str:
        return f"({self.di},{self.dj})"


class LfcField:
    """Binary lithology/fluid class field (0 = shale, 1 = oil sand).

    The values are held as an ``int8`` array of shape ``(m, n)``. The array is
    copied on construction and flagged read-only; use :meth:`with_column` or
    :meth:`copy_values` to derive modified fields.
    """

    __slots__ = ("dims", "values")

    def __init__(self, values, dims: GridDims | None = None):
        arr = np.array(values, dtype=np.int8, copy=True)
        if dims is not None:
            arr = arr.reshape(dims.shape)
        if arr.ndim != 2:
            raise LatticeError(f"field must be 2-D, got shape {arr.shape}")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise LatticeError("field values must be 0 or 1")
        arr.flags.writeable = False
        self.values = arr
        self.dims = GridDims(*arr.shape)

    @classmethod
    def zeros(cls, dims: GridDims) -> "LfcField":
        return cls(np.zeros(dims.shape, dtype=np.int8))

    def __getitem__(self, node: tuple[int, int]) -> int:
        self.dims.check(node)
        return int(self.values[node[0] - 1, node[1] - 1])

    def __eq__(self, other) -> bool:
        return isinstance(other, LfcField) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self) -> str:
        return f"LfcField({self.dims.m}x{self.dims.n}, sand={int(self.values.sum())})"

    def flat(self) -> np.ndarray:
        """Row-major value vector of length m*n."""
        return self.values.reshape(-1)

    def column(self, j: int) -> np.ndarray:
        if not 1 <= j <= self.dims.n:
            raise LatticeError(f"column {j} outside 1..{self.dims.n}")
        return self.values[:, j - 1]

    def copy_values(self) -> np.ndarray:
        return self.values.copy()

    def with_column(self, j: int, column) -> "LfcField":
        vals = self.values.copy()
        vals[:, j - 1] = column
        return LfcField(vals)


def predecessor_set(dims: GridDims, node: tuple[int, int]) -> set[tuple[int, int]]:
    """All nodes strictly before ``node`` in row-major order."""
    k = dims.linear(node)
    return {dims.node(t) for t in range(k)}


def translate_template(
    tau: Iterable[CellOffset], node: tuple[int, int], dims: GridDims
) -> set[tuple[int, int]]:
    """Translate the template offsets to ``node``, dropping nodes outside the lattice."""
    i, j = node
    out = set()
    for off in tau:
        cand = (i + off.di, j + off.dj)
        if dims.contains(cand):
            out.add(cand)
    return out


def column_nodes(dims: GridDims, j: int) -> list[tuple[int, int]]:
    if not 1 <= j <= dims.n:
        raise LatticeError(f"column {j} outside 1..{dims.n}")
    return [(i, j) for i in range(1, dims.m + 1)]


def write_field(path, field: LfcField) -> None:
    """Write a field as ``m n`` followed by m rows of n space-separated 0/1."""
    lines = [f"{field.dims.m} {field.dims.n}"]
    lines.extend(" ".join(str(int(v)) for v in row) for row in field.values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_field(path) -> LfcField:
    text = Path(path).read_text(encoding="utf-8").split("\n")
    rows = [ln.split() for ln in text if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise LatticeError(f"{path}: first line must be 'm n'")
    m, n = int(rows[0][0]), int(rows[0][1])
    body = rows[1:]
    if len(body) != m or any(len(r) != n for r in body):
        raise LatticeError(f"{path}: expected {m} rows of {n} values")
    return LfcField(np.array(body, dtype=np.int64))
