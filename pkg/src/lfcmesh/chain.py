"""Binary higher-order Markov chains down a lattice column.

A column law is given as log-potentials ``psi[i, s]`` where ``s`` encodes the
window ``(x[i-r], ..., x[i])`` with ``x[i]`` in bit 0 and ``x[i-t]`` in bit t.
Rows above the lattice are fixed to 0, so the chain starts from history 0.
The unnormalised log-probability of a column is ``sum_i psi[i, window_i]``;
backward recursion gives the normaliser and the per-row conditional tables
used for exact forward sampling.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["ColumnChain", "ChainSizeError", "MAX_CHAIN_ENTRIES", "embed_potentials"]

MAX_CHAIN_ENTRIES = 1 << 24


class ChainSizeError(ValueError):
    pass


@njit(cache=True)
def _backward(psi, order):
    """Backward log-messages and P(x_i = 1 | history) in one pass."""
    m = psi.shape[0]
    nh = 1 << order
    back = np.zeros((m + 1, nh))
    tab = np.zeros((m, nh))
    for i in range(m - 1, -1, -1):
        for h in range(nh):
            s0 = h << 1
            s1 = s0 | 1
            a = psi[i, s0] + back[i + 1, s0 & (nh - 1)]
            b = psi[i, s1] + back[i + 1, s1 & (nh - 1)]
            if a == -np.inf and b == -np.inf:
                back[i, h] = -np.inf
            elif a >= b:
                e = np.exp(b - a)
                back[i, h] = a + np.log1p(e)
                tab[i, h] = e / (1.0 + e)
            else:
                e = np.exp(a - b)
                back[i, h] = b + np.log1p(e)
                tab[i, h] = 1.0 / (1.0 + e)
    return back, tab


@njit(cache=True)
def _sample(psi, tab, order, uniforms):
    m = psi.shape[0]
    nh = 1 << order
    x = np.zeros(m, dtype=np.int8)
    h = 0
    lp = 0.0
    for i in range(m):
        xi = 1 if uniforms[i] < tab[i, h] else 0
        s = (h << 1) | xi
        lp += psi[i, s]
        x[i] = xi
        h = s & (nh - 1)
    return x, lp


@njit(cache=True)
def _walk(psi, order, x):
    m = psi.shape[0]
    nh = 1 << order
    h = 0
    lp = 0.0
    for i in range(m):
        s = (h << 1) | x[i]
        lp += psi[i, s]
        h = s & (nh - 1)
    return lp


def embed_potentials(psi: np.ndarray, order: int, new_order: int) -> np.ndarray:
    """Re-express order-``order`` potentials on the wider windows of ``new_order``."""
    if new_order == order:
        return psi
    if new_order < order:
        raise ValueError("cannot shrink chain order")
    states = np.arange(1 << (new_order + 1))
    return psi[:, states & ((1 << (order + 1)) - 1)]


class ColumnChain:
    """Exactly samplable order-``r`` binary chain over the ``m`` rows of a column."""

    def __init__(self, log_potentials: np.ndarray, order: int):
        psi = np.asarray(log_potentials)
        if order < 0:
            raise ValueError("chain order must be non-negative")
        if psi.ndim != 2 or psi.shape[1] != 1 << (order + 1):
            raise ValueError(
                f"potentials must have shape (m, {1 << (order + 1)}), got {psi.shape}"
            )
        if psi.size > MAX_CHAIN_ENTRIES:
            raise ChainSizeError(
                f"order-{order} chain over {psi.shape[0]} rows needs {psi.size} states; "
                "reduce nu"
            )
        psi = np.ascontiguousarray(psi, dtype=np.float64)
        self.order = order
        self.log_potentials = psi
        self._back, self.tables = _backward(psi, order)
        self.log_normalizer = float(self._back[0, 0])
        if not np.isfinite(self.log_normalizer):
            raise ValueError("column chain has no configuration with positive probability")

    @property
    def m(self) -> int:
        return self.log_potentials.shape[0]

    def sample(self, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        """Draw a column; returns the values and their exact log-probability."""
        x, lp = _sample(self.log_potentials, self.tables, self.order, rng.random(self.m))
        return x, lp - self.log_normalizer

    def log_prob(self, x) -> float:
        x = np.ascontiguousarray(x, dtype=np.int8)
        return _walk(self.log_potentials, self.order, x) - self.log_normalizer

    def log_potential(self, x) -> float:
        """Unnormalised log-probability (sum of potentials) of a column."""
        x = np.ascontiguousarray(x, dtype=np.int8)
        return _walk(self.log_potentials, self.order, x)

    def prob_one(self, i: int, history: int) -> float:
        """P(x_i = 1 | history); ``i`` is 0-based, history bit t is x[i-1-t]."""
        return float(self.tables[i, history])
