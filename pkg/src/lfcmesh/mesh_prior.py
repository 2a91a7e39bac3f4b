"""Homogeneous binary Markov mesh prior.

The conditional law of a node given its sequential neighbours is logistic in a
pseudo-Boolean function ``theta`` of the set of neighbours carrying sand::

    logit p(x_ij = 1 | ...) = theta(active) = sum_{lam in Lambda, lam <= active} beta(lam)

Neighbours outside the lattice count as shale. Subsets of the template are
handled as bitmasks (bit ``t`` for ``tau[t]``) and ``theta`` is tabulated for all
``2**|tau|`` masks once per spec.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np
from numba import njit

from .chain import ColumnChain
from .lattice import CellOffset, GridDims, LatticeError, LfcField

__all__ = [
    "MeshPriorSpec",
    "ActiveSubset",
    "MeshPrior",
    "PriorFileError",
    "load_appendix_prior",
    "read_prior_file",
    "write_prior_file",
    "format_prior",
    "theta",
    "conditional_prob",
    "log_density",
    "simulate",
    "mrf_neighborhood",
    "column_order",
    "column_conditional",
]

MAX_TAU = 20


class PriorFileError(ValueError):
    pass


@dataclass(frozen=True)
class MeshPriorSpec:
    tau: tuple[CellOffset, ...]
    interactions: tuple[tuple[frozenset, float], ...]

    def __post_init__(self):
        tau = tuple(self.tau)
        if len(set(tau)) != len(tau):
            raise ValueError("duplicate offsets in tau")
        if len(tau) > MAX_TAU:
            raise ValueError(f"|tau| = {len(tau)} exceeds {MAX_TAU}")
        for off in tau:
            if not off.is_sequential:
                raise ValueError(f"offset {off} is not a sequential (backward) offset")
        seen = set()
        for lam, beta in self.interactions:
            if not lam <= set(tau):
                raise ValueError(f"interaction {sorted(lam)} not a subset of tau")
            if lam in seen:
                raise ValueError(f"duplicate interaction {sorted(lam)}")
            if not np.isfinite(beta):
                raise ValueError("interaction parameters must be finite")
            seen.add(lam)
        if frozenset() not in seen:
            raise ValueError("the empty interaction beta(()) must be present")

    def beta(self, lam: Iterable[CellOffset]) -> float:
        lam = frozenset(lam)
        for key, value in self.interactions:
            if key == lam:
                return value
        return 0.0

    def mask(self, offsets: Iterable[CellOffset]) -> int:
        index = {off: t for t, off in enumerate(self.tau)}
        out = 0
        for off in offsets:
            out |= 1 << index[off]
        return out

    def theta_table(self) -> np.ndarray:
        """theta for every subset of tau, indexed by bitmask."""
        k = len(self.tau)
        masks = np.arange(1 << k)
        table = np.zeros(1 << k)
        for lam, beta in self.interactions:
            lm = self.mask(lam)
            table[(masks & lm) == lm] += beta
        return table

    @property
    def di(self) -> np.ndarray:
        return np.array([o.di for o in self.tau], dtype=np.int64)

    @property
    def dj(self) -> np.ndarray:
        return np.array([o.dj for o in self.tau], dtype=np.int64)


@dataclass(frozen=True)
class ActiveSubset:
    """Template offsets whose translated node is in the lattice and holds sand."""

    members: frozenset

    @classmethod
    def at(cls, spec: MeshPriorSpec, field: LfcField, node: tuple[int, int]) -> "ActiveSubset":
        i, j = node
        field.dims.check(node)
        out = set()
        for off in spec.tau:
            cand = (i + off.di, j + off.dj)
            if field.dims.contains(cand) and field[cand] == 1:
                out.add(off)
        return cls(frozenset(out))


# --- parameter files ---------------------------------------------------------

_OFFSET = re.compile(r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)")


def _parse_offsets(text: str) -> list[CellOffset]:
    stripped = _OFFSET.sub("", text).strip()
    if stripped:
        raise PriorFileError(f"unparsable offsets: {text!r}")
    return [CellOffset(int(a), int(b)) for a, b in _OFFSET.findall(text)]


def parse_prior(text: str) -> MeshPriorSpec:
    tau = None
    interactions = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("tau:"):
            tau = tuple(_parse_offsets(line[4:]))
        elif line.startswith("lambda:"):
            body = line[len("lambda:"):]
            if "beta:" not in body:
                raise PriorFileError(f"line {lineno}: missing 'beta:'")
            offs, beta = body.split("beta:", 1)
            try:
                value = float(beta)
            except ValueError:
                raise PriorFileError(f"line {lineno}: bad beta {beta.strip()!r}") from None
            interactions.append((frozenset(_parse_offsets(offs)), value))
        else:
            raise PriorFileError(f"line {lineno}: expected 'tau:' or 'lambda:'")
    if tau is None:
        raise PriorFileError("missing 'tau:' line")
    try:
        return MeshPriorSpec(tau, tuple(interactions))
    except ValueError as exc:
        raise PriorFileError(str(exc)) from None


def read_prior_file(path) -> MeshPriorSpec:
    return parse_prior(Path(path).read_text(encoding="utf-8"))


def format_prior(spec: MeshPriorSpec) -> str:
    order = {off: t for t, off in enumerate(spec.tau)}
    lines = ["tau: " + " ".join(str(o) for o in spec.tau)]
    for lam, beta in spec.interactions:
        offs = " ".join(str(o) for o in sorted(lam, key=order.__getitem__))
        lines.append(f"lambda: {offs} beta: {beta:.6g}".replace(":  beta", ": beta"))
    return "\n".join(lines) + "\n"


def write_prior_file(path, spec: MeshPriorSpec) -> None:
    Path(path).write_text(format_prior(spec), encoding="utf-8", newline="\n")


def load_appendix_prior() -> MeshPriorSpec:
    """The fitted nine-neighbour mesh prior with its 31 interaction parameters."""
    text = resources.files("lfcmesh.data").joinpath("fitted_mesh.prior").read_text("utf-8")
    return parse_prior(text)


# --- node-level quantities ---------------------------------------------------


def theta(spec: MeshPriorSpec, active) -> float:
    members = active.members if isinstance(active, ActiveSubset) else frozenset(active)
    if not members <= set(spec.tau):
        raise ValueError("active subset must lie inside tau")
    return float(sum(beta for lam, beta in spec.interactions if lam <= members))


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def conditional_prob(spec: MeshPriorSpec, field: LfcField, node: tuple[int, int]) -> float:
    """P(sand at ``node`` | its sequential neighbours)."""
    return _logistic(theta(spec, ActiveSubset.at(spec, field, node)))


def _neighbour_masks(spec: MeshPriorSpec, values: np.ndarray) -> np.ndarray:
    m, n = values.shape
    masks = np.zeros((m, n), dtype=np.int64)
    for t, off in enumerate(spec.tau):
        shifted = np.zeros((m, n), dtype=np.int64)
        # shifted[i, j] = values[i + di, j + dj] where in lattice
        r0, r1 = max(0, -off.di), min(m, m - off.di)
        c0, c1 = max(0, -off.dj), min(n, n - off.dj)
        if r0 < r1 and c0 < c1:
            shifted[r0:r1, c0:c1] = values[r0 + off.di:r1 + off.di, c0 + off.dj:c1 + off.dj]
        masks |= shifted << t
    return masks


def _log_density_values(spec: MeshPriorSpec, table: np.ndarray, values: np.ndarray) -> float:
    th = table[_neighbour_masks(spec, values)]
    signed = np.where(values == 1, th, -th)
    return float(-np.logaddexp(0.0, -signed).sum())


def log_density(spec: MeshPriorSpec, field: LfcField) -> float:
    """Exact log p(field) from the sequential factorisation."""
    return _log_density_values(spec, spec.theta_table(), field.values)


@njit(cache=True)
def _simulate_kernel(m, n, di, dj, table, uniforms):
    vals = np.zeros((m, n), dtype=np.int8)
    k = di.shape[0]
    for i in range(m):
        for j in range(n):
            mask = 0
            for t in range(k):
                r = i + di[t]
                c = j + dj[t]
                if r >= 0 and r < m and c >= 0 and c < n and vals[r, c] == 1:
                    mask |= 1 << t
            th = table[mask]
            p = 1.0 / (1.0 + np.exp(-th))
            if uniforms[i * n + j] < p:
                vals[i, j] = 1
    return vals


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate(spec: MeshPriorSpec, dims: GridDims, seed, table: np.ndarray | None = None) -> LfcField:
    """One realisation by a single row-major sequential pass."""
    rng = _as_rng(seed)
    if table is None:
        table = spec.theta_table()
    u = rng.random(dims.size)
    vals = _simulate_kernel(dims.m, dims.n, spec.di, spec.dj, table, u)
    return LfcField(vals)


def mrf_neighborhood(spec: MeshPriorSpec) -> set[CellOffset]:
    """Translation-invariant neighbourhood of the equivalent Markov random field."""
    out = set(spec.tau)
    out.update(-t for t in spec.tau)
    out.update(s - t for s in spec.tau for t in spec.tau if s != t)
    out.discard(CellOffset(0, 0))
    return out


# --- column conditional ------------------------------------------------------


def column_order(spec: MeshPriorSpec) -> int:
    """Order of the chain p(column | rest): largest row span of a factor within one column."""
    groups: dict[int, list[int]] = {0: [0]}
    for off in spec.tau:
        groups.setdefault(off.dj, []).append(off.di)
    return max(max(rows) - min(rows) for rows in groups.values())


@njit(cache=True)
def _logsig(x):
    if x >= 0:
        return -np.log1p(np.exp(-x))
    return x - np.log1p(np.exp(x))


@njit(cache=True)
def _column_potentials(vals, j, di, dj, table, order, cols):
    m, n = vals.shape
    k = di.shape[0]
    nstate = 1 << (order + 1)
    psi = np.zeros((m, nstate))
    involved = np.zeros(k, dtype=np.bool_)
    for ci in range(cols.shape[0]):
        l = cols[ci]
        is_self = l == j
        for row in range(m):
            base = 0
            anchor = row if is_self else -1
            any_inv = is_self
            for t in range(k):
                involved[t] = False
                r = row + di[t]
                c = l + dj[t]
                if r < 0 or r >= m or c < 0 or c >= n:
                    continue
                if c == j:
                    involved[t] = True
                    any_inv = True
                    if r > anchor:
                        anchor = r
                elif vals[r, c] == 1:
                    base |= 1 << t
            if not any_inv:
                continue
            for s in range(nstate):
                mask = base
                for t in range(k):
                    if involved[t]:
                        if (s >> (anchor - (row + di[t]))) & 1:
                            mask |= 1 << t
                th = table[mask]
                if is_self:
                    v = (s >> (anchor - row)) & 1
                else:
                    v = vals[row, l]
                psi[anchor, s] += _logsig(th) if v == 1 else _logsig(-th)
    return psi


class MeshPrior:
    """Mesh prior bound to a spec, with the cached theta table.

    This is the object the sampler talks to; the module-level functions are the
    plain reference surface.
    """

    name = "mesh"
    exact_joint = True

    def __init__(self, spec: MeshPriorSpec):
        self.spec = spec
        self.table = spec.theta_table()
        self.order = column_order(spec)
        self._di = spec.di
        self._dj = spec.dj
        dj_values = {0} | {-o.dj for o in spec.tau}
        self._col_shifts = np.array(sorted(dj_values), dtype=np.int64)

    def log_density(self, values: np.ndarray) -> float:
        return _log_density_values(self.spec, self.table, np.asarray(values))

    def column_potentials(self, values: np.ndarray, j0: int) -> np.ndarray:
        """Log-potentials of column ``j0`` (0-based) given the rest of ``values``."""
        n = values.shape[1]
        cols = self._col_shifts + j0
        cols = cols[(cols >= 0) & (cols < n)]
        return _column_potentials(
            np.ascontiguousarray(values, dtype=np.int8), j0, self._di, self._dj,
            self.table, self.order, cols,
        )

    def column_chain(self, values: np.ndarray, j0: int) -> ColumnChain:
        return ColumnChain(self.column_potentials(values, j0), self.order)

    def simulate(self, dims: GridDims, rng) -> LfcField:
        return simulate(self.spec, dims, rng, table=self.table)


def column_conditional(spec: MeshPriorSpec, field: LfcField, j: int) -> ColumnChain:
    """Exact p(column j | all other columns) as an order-r chain (``j`` 1-based)."""
    if not 1 <= j <= field.dims.n:
        raise LatticeError(f"column {j} outside 1..{field.dims.n}")
    return MeshPrior(spec).column_chain(field.values, j - 1)
