"""Profile Markov random field prior.

Given its two flanking columns a column is a first-order chain downwards with
transition probabilities ``p1[above][left][right]`` of sand. Anything outside
the lattice (above row 1, left of column 1, right of column n) counts as shale.

The table is not guaranteed to be the set of conditionals of a joint law (the
default one is not), so the prior is understood as the stationary law of the
column-wise Gibbs kernel; :meth:`ProfilePrior.log_density` is the
pseudo-log-likelihood ``sum_j log p(column j | neighbours)``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .chain import ColumnChain
from .lattice import GridDims, LatticeError, LfcField

__all__ = [
    "ProfileTransitionTable",
    "ProfilePrior",
    "BOUNDARY",
    "DEFAULT_PRIOR_SWEEPS",
    "load_table1",
    "read_table_file",
    "write_table_file",
    "transition_prob",
    "column_conditional",
    "simulate_prior",
]

BOUNDARY = None
DEFAULT_PRIOR_SWEEPS = 500

_PROFILE_TABLE = {
    (0, 0, 0): 0.0123,
    (0, 0, 1): 0.3461,
    (0, 1, 0): 0.3461,
    (0, 1, 1): 0.9575,
    (1, 0, 0): 0.1661,
    (1, 0, 1): 0.8944,
    (1, 1, 0): 0.8944,
    (1, 1, 1): 0.9972,
}


class ProfileTransitionTable:
    """``p1[above][left][right]`` = P(sand | above, left, right)."""

    def __init__(self, p1):
        arr = np.array(p1, dtype=np.float64)
        if arr.shape != (2, 2, 2):
            raise ValueError(f"transition table must be 2x2x2, got {arr.shape}")
        if not ((arr >= 0) & (arr <= 1)).all():
            raise ValueError("transition probabilities must lie in [0, 1]")
        arr.flags.writeable = False
        self.p1 = arr

    def __getitem__(self, key):
        return self.p1[key]

    def __eq__(self, other):
        return isinstance(other, ProfileTransitionTable) and np.array_equal(self.p1, other.p1)

    def items(self):
        for a in (0, 1):
            for l in (0, 1):
                for r in (0, 1):
                    yield (a, l, r), float(self.p1[a, l, r])


def load_table1() -> ProfileTransitionTable:
    p1 = np.zeros((2, 2, 2))
    for (a, l, r), p in _PROFILE_TABLE.items():
        p1[a, l, r] = p
    return ProfileTransitionTable(p1)


def read_table_file(path) -> ProfileTransitionTable:
    """Eight lines ``a l r p1``; any missing triple keeps its default."""
    p1 = load_table1().p1.copy()
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 'a l r p1'")
        a, l, r = (int(x) for x in parts[:3])
        if not all(v in (0, 1) for v in (a, l, r)):
            raise ValueError(f"{path}:{lineno}: conditioning values must be 0 or 1")
        p1[a, l, r] = float(parts[3])
    return ProfileTransitionTable(p1)


def write_table_file(path, table: ProfileTransitionTable) -> None:
    lines = [f"{a} {l} {r} {p:.6g}" for (a, l, r), p in table.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def transition_prob(table: ProfileTransitionTable, above, left, right) -> float:
    """P(sand) with ``BOUNDARY`` (None) arguments read as shale."""
    a, l, r = (0 if v is BOUNDARY else int(v) for v in (above, left, right))
    return float(table.p1[a, l, r])


def _flanks(values: np.ndarray, j0: int) -> tuple[np.ndarray, np.ndarray]:
    m, n = values.shape
    zero = np.zeros(m, dtype=np.int64)
    left = values[:, j0 - 1].astype(np.int64) if j0 > 0 else zero
    right = values[:, j0 + 1].astype(np.int64) if j0 < n - 1 else zero
    return left, right


class ProfilePrior:
    name = "profile"
    exact_joint = False
    order = 1

    def __init__(self, table: ProfileTransitionTable | None = None,
                 prior_sweeps: int = DEFAULT_PRIOR_SWEEPS):
        self.table = table if table is not None else load_table1()
        self.prior_sweeps = prior_sweeps
        with np.errstate(divide="ignore"):
            self._log1 = np.log(self.table.p1)
            self._log0 = np.log1p(-self.table.p1)

    def column_potentials(self, values: np.ndarray, j0: int) -> np.ndarray:
        """Normalised log-transition potentials; window bit 0 = x_i, bit 1 = x_{i-1}."""
        left, right = _flanks(values, j0)
        psi = np.empty((values.shape[0], 4))
        for s in range(4):
            x, above = s & 1, (s >> 1) & 1
            psi[:, s] = (self._log1 if x else self._log0)[above, left, right]
        return psi

    def column_chain(self, values: np.ndarray, j0: int) -> ColumnChain:
        return ColumnChain(self.column_potentials(values, j0), 1)

    def log_density(self, values: np.ndarray) -> float:
        values = np.asarray(values, dtype=np.int64)
        m, n = values.shape
        above = np.zeros_like(values)
        above[1:] = values[:-1]
        left = np.zeros_like(values)
        left[:, 1:] = values[:, :-1]
        right = np.zeros_like(values)
        right[:, :-1] = values[:, 1:]
        lp = np.where(values == 1, self._log1[above, left, right], self._log0[above, left, right])
        return float(lp.sum())

    def simulate(self, dims: GridDims, rng, sweeps: int | None = None) -> LfcField:
        return simulate_prior(self.table, dims, sweeps or self.prior_sweeps, rng)


def column_conditional(table: ProfileTransitionTable, field: LfcField, j: int) -> ColumnChain:
    """First-order chain p(column j | columns j-1, j+1) (``j`` 1-based)."""
    if not 1 <= j <= field.dims.n:
        raise LatticeError(f"column {j} outside 1..{field.dims.n}")
    return ProfilePrior(table).column_chain(field.values, j - 1)


def simulate_prior(table: ProfileTransitionTable, dims: GridDims, sweeps: int, seed) -> LfcField:
    """Systematic column-Gibbs sweeps from an all-shale start."""
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    prior = ProfilePrior(table)
    values = np.zeros(dims.shape, dtype=np.int8)
    for _ in range(sweeps):
        for j0 in range(dims.n):
            x, _ = prior.column_chain(values, j0).sample(rng)
            values[:, j0] = x
    return LfcField(values)
