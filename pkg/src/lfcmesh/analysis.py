"""Posterior summaries computed from a stream of sampled class fields."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .lattice import GridDims, LatticeError, LfcField, write_field

__all__ = [
    "EmptyStreamError",
    "MarginalMap",
    "ConnectivityCurve",
    "marginal_map",
    "mode_map",
    "connected_component",
    "contact_probability_map",
    "connectivity_curve",
    "marginal_histogram",
    "outer_mass",
    "top_marginal_nodes",
    "write_pgm",
    "write_matrix_csv",
    "write_analysis",
    "DEFAULT_TRACE_COLUMNS",
    "HISTOGRAM_BINS",
]

DEFAULT_TRACE_COLUMNS = (15, 30, 45)
HISTOGRAM_BINS = 20

_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = ndimage.generate_binary_structure(2, 2)


class EmptyStreamError(ValueError):
    pass


@dataclass(frozen=True)
class MarginalMap:
    dims: GridDims
    values: np.ndarray  # (m, n) probabilities

    def __getitem__(self, node):
        i, j = node
        return float(self.values[i - 1, j - 1])


@dataclass(frozen=True)
class ConnectivityCurve:
    eta: np.ndarray
    prob: np.ndarray
    skipped: int = 0  # samples without any sand


def _stack(samples) -> np.ndarray:
    arrs = [np.asarray(s.values if isinstance(s, LfcField) else s, dtype=np.int8) for s in samples]
    if not arrs:
        raise EmptyStreamError("sample stream is empty")
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise LatticeError("samples have differing lattice dimensions")
    return np.stack(arrs)


def marginal_map(samples) -> MarginalMap:
    """Per-node fraction of samples holding sand."""
    stack = _stack(samples)
    return MarginalMap(GridDims(*stack.shape[1:]), stack.mean(axis=0))


def mode_map(marginal: MarginalMap) -> LfcField:
    """Sand where the probability exceeds 0.5; an exact 0.5 rounds to shale."""
    return LfcField((marginal.values > 0.5).astype(np.int8))


def _labels(values: np.ndarray, connectivity: int) -> np.ndarray:
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    labels, _ = ndimage.label(values, structure=_FOUR if connectivity == 4 else _EIGHT)
    return labels


def connected_component(field, node, connectivity: int = 4) -> set:
    """Sand nodes (1-based) reachable from ``node`` through sand; empty if ``node`` is shale."""
    values = np.asarray(field.values if isinstance(field, LfcField) else field)
    i, j = node
    GridDims(*values.shape).check(node)
    if values[i - 1, j - 1] != 1:
        return set()
    labels = _labels(values, connectivity)
    rows, cols = np.nonzero(labels == labels[i - 1, j - 1])
    return {(int(r) + 1, int(c) + 1) for r, c in zip(rows, cols)}


def contact_probability_map(samples, node, connectivity: int = 4) -> MarginalMap:
    stack = _stack(samples)
    i, j = node
    dims = GridDims(*stack.shape[1:])
    dims.check(node)
    hits = np.zeros(stack.shape[1:])
    for s in stack:
        if s[i - 1, j - 1] == 1:
            labels = _labels(s, connectivity)
            hits += labels == labels[i - 1, j - 1]
    return MarginalMap(dims, hits / len(stack))


def _other_counts(values: np.ndarray, connectivity: int) -> np.ndarray:
    """For every sand node, the number of other nodes in its component."""
    labels = _labels(values, connectivity)
    sizes = np.bincount(labels.ravel())
    return sizes[labels[labels > 0]] - 1


def connectivity_curve(samples, seed=0, draws_per_sample=1, connectivity: int = 4) -> ConnectivityCurve:
    """P(a random sand node connects to at least eta other sand nodes), eta = 0..m*n-1.

    ``draws_per_sample="all"`` weights every sand node of a sample equally, the
    exact expectation of the random-draw estimate.
    """
    stack = _stack(samples)
    size = stack.shape[1] * stack.shape[2]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    exhaustive = draws_per_sample == "all"
    if not exhaustive and int(draws_per_sample) < 1:
        raise ValueError("draws_per_sample must be >= 1 or 'all'")
    hist = np.zeros(size)
    used = skipped = 0
    for s in stack:
        counts = _other_counts(s, connectivity)
        if counts.size == 0:
            skipped += 1
            continue
        used += 1
        if exhaustive:
            hist += np.bincount(counts, minlength=size) / counts.size
        else:
            picks = counts[rng.integers(0, counts.size, size=int(draws_per_sample))]
            hist += np.bincount(picks, minlength=size) / int(draws_per_sample)
    eta = np.arange(size)
    if used == 0:
        return ConnectivityCurve(eta, np.zeros(size), skipped)
    tail = np.cumsum(hist[::-1])[::-1] / used
    return ConnectivityCurve(eta, np.clip(tail, 0.0, 1.0), skipped)


def marginal_histogram(marginal: MarginalMap, bins: int = HISTOGRAM_BINS):
    """Counts of node probabilities in equal-width bins over [0, 1]."""
    counts, edges = np.histogram(marginal.values, bins=bins, range=(0.0, 1.0))
    return edges, counts


def outer_mass(marginal: MarginalMap, margin: float = 0.05) -> float:
    """Fraction of nodes with probability in [0, margin) or (1 - margin, 1]."""
    v = marginal.values
    return float(((v < margin) | (v > 1.0 - margin)).mean())


def top_marginal_nodes(marginal: MarginalMap, k: int) -> list[tuple[int, int]]:
    """The ``k`` most probable sand nodes (1-based), ties broken in row-major order."""
    flat = marginal.values.ravel()
    order = np.argsort(-flat, kind="stable")[:k]
    n = marginal.dims.n
    return [(int(q // n) + 1, int(q % n) + 1) for q in order]


def write_pgm(path, probs: np.ndarray) -> None:
    """Plain (P2) greyscale image, probability 1 maps to 255."""
    grey = np.rint(np.clip(probs, 0.0, 1.0) * 255).astype(int)
    lines = ["P2", f"{grey.shape[1]} {grey.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in grey]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def write_matrix_csv(path, probs: np.ndarray) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in probs:
            w.writerow([f"{v:.6f}" for v in row])


def write_analysis(directory, samples, trace_columns=DEFAULT_TRACE_COLUMNS, contact_seeds=(),
                   draws_per_sample=1, seed=0, truth: LfcField | None = None,
                   connectivity: int = 4) -> dict:
    """Write every summary file into ``directory``; returns the main results."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    stack = _stack(samples)
    marg = marginal_map(stack)
    dims = marg.dims
    write_matrix_csv(out / "marginal.csv", marg.values)
    write_pgm(out / "marginal.pgm", marg.values)
    mode = mode_map(marg)
    write_field(out / "mode.txt", mode)

    for j in trace_columns:
        if not 1 <= j <= dims.n:
            raise LatticeError(f"trace column {j} outside 1..{dims.n}")
        with (out / f"trace_j{j}.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "p_sand", "mode"] + (["truth"] if truth is not None else []))
            for i in range(1, dims.m + 1):
                row = [i, f"{marg[(i, j)]:.6f}", int(mode[(i, j)])]
                if truth is not None:
                    row.append(int(truth[(i, j)]))
                w.writerow(row)

    contacts = {}
    for node in contact_seeds:
        cmap = contact_probability_map(stack, node, connectivity)
        contacts[tuple(node)] = cmap
        stem = f"contact_{node[0]}_{node[1]}"
        write_matrix_csv(out / f"{stem}.csv", cmap.values)
        write_pgm(out / f"{stem}.pgm", cmap.values)

    curve = connectivity_curve(stack, seed, draws_per_sample, connectivity)
    with (out / "connectivity_curve.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta", "p"])
        for e, p in zip(curve.eta, curve.prob):
            w.writerow([int(e), f"{p:.6f}"])

    edges, counts = marginal_histogram(marg)
    with (out / "marginal_hist.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lo", "hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([f"{lo:.2f}", f"{hi:.2f}", int(c)])

    return {"marginal": marg, "mode": mode, "contacts": contacts, "curve": curve,
            "histogram": (edges, counts)}
