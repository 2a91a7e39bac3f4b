"""Gaussian likelihood p(d | class field) with the elastic field integrated out.

With class-independent elastic covariance the data covariance is separable::

    Cov[d] = C_h (x) B + I_n (x) S,    B = T (Sigma (x) C_v) T^T

where ``T`` is the per-column forward operator and ``S`` the per-column noise
covariance. Diagonalising ``C_h = U diag(lam) U^T`` splits it into ``n``
independent ``2m x 2m`` blocks ``lam_k B + S``. The mean is affine in the class
field: ``E[d_j] = mean0 + G kappa_j`` with ``G`` the per-node class effect.

The sampler keeps the residual ``r = d - E[d]`` and ``w = Cov[d]^{-1} r``; a
column change then costs one pass over the blocks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .forward import ForwardModel, ForwardNumericError, SeismicCube, _psd_factor
from .lattice import GridDims, LfcField

__all__ = [
    "LikelihoodEngine",
    "DenseLikelihood",
    "ResidualState",
    "UnsupportedModeError",
    "StateAuditError",
    "build",
    "log_likelihood",
    "delta_log_likelihood",
    "column_coupling",
]

LOG_2PI = float(np.log(2.0 * np.pi))


class UnsupportedModeError(RuntimeError):
    pass


class StateAuditError(RuntimeError):
    pass


def _values(kappa) -> np.ndarray:
    return kappa.values if isinstance(kappa, LfcField) else np.asarray(kappa)


def _data(d) -> np.ndarray:
    return d.column_matrix() if isinstance(d, SeismicCube) else np.asarray(d, dtype=np.float64)


@dataclass
class ResidualState:
    kappa: np.ndarray  # (m, n) int8, owned by the state
    residual: np.ndarray  # (2m, n)
    weighted: np.ndarray  # Cov[d]^{-1} residual, (2m, n)
    log_lik: float

    def copy(self) -> "ResidualState":
        return ResidualState(self.kappa.copy(), self.residual.copy(), self.weighted.copy(), self.log_lik)


class _MeanModel:
    def __init__(self, fm: ForwardModel, dims: GridDims):
        m = dims.m
        self.dims = dims
        self.T = fm.column_operator(m)
        mu0 = fm.elastic.mean(0)
        dmu = fm.elastic.mean(1) - mu0
        self.mean0 = self.T @ np.repeat(mu0, m)
        self.G = self.T @ np.vstack([dmu[0] * np.eye(m), dmu[1] * np.eye(m)])

    def mean(self, kappa_values: np.ndarray) -> np.ndarray:
        return self.mean0[:, None] + self.G @ kappa_values.astype(np.float64)


class LikelihoodEngine:
    """Separable likelihood for class-independent elastic covariance."""

    mode = "constant"

    def __init__(self, fm: ForwardModel, dims: GridDims):
        if not fm.elastic.constant_covariance:
            raise UnsupportedModeError(
                "class-dependent elastic covariance needs DenseLikelihood (small lattices only)"
            )
        m, n = dims.shape
        self.fm = fm
        self.dims = dims
        mm = _MeanModel(fm, dims)
        self.T, self.G, self.mean0 = mm.T, mm.G, mm.mean0
        self._mean = mm.mean

        cv = fm.elastic.corr_v_matrix(m)
        self.B = self.T @ np.kron(fm.elastic.cov(0), cv) @ self.T.T
        self.S = fm.noise.column_cov(m)
        ch = fm.elastic.corr_h_matrix(n)
        lam, U = np.linalg.eigh(ch)
        if lam.min() < -1e-10 * max(1.0, lam.max()):
            raise ForwardNumericError(
                f"horizontal correlation matrix not PSD (min eigenvalue {lam.min():.3e})"
            )
        self.lam = np.clip(lam, 0.0, None)
        self.U = U

        k2 = 2 * m
        self.P = np.empty((n, k2, k2))
        self.block_logdet = np.empty(n)
        eye = np.eye(k2)
        for k in range(n):
            block = self.lam[k] * self.B + self.S
            try:
                c, low = linalg.cho_factor(block, lower=True)
            except linalg.LinAlgError:
                raise ForwardNumericError(
                    f"covariance block {k} (horizontal eigenvalue {self.lam[k]:.3e}) is not "
                    "positive definite; check noise standard deviations and vertical correlation"
                ) from None
            self.block_logdet[k] = 2.0 * np.log(np.diag(c)).sum()
            self.P[k] = linalg.cho_solve((c, low), eye)
        self.logdet = float(self.block_logdet.sum())
        self.log_const = -0.5 * (m * n * 2 * LOG_2PI + self.logdet)
        # diagonal blocks of the precision and their pull-back onto class indicators
        self.M = ((self.U**2) @ self.P.reshape(n, -1)).reshape(n, k2, k2)
        self.H = np.matmul(np.matmul(self.G.T, self.M), self.G)
        self.PG = np.matmul(self.P, self.G)  # (n, 2m, m)

    # -- dense views (for checks and diagnostics) -----------------------------

    def covariance(self) -> np.ndarray:
        n = self.dims.n
        return np.kron(self.fm.elastic.corr_h_matrix(n), self.B) + np.kron(np.eye(n), self.S)

    # -- evaluation -----------------------------------------------------------

    def _weighted(self, residual: np.ndarray) -> np.ndarray:
        rt = residual @ self.U
        wt = np.matmul(self.P, rt.T[:, :, None])[:, :, 0].T
        return wt @ self.U.T

    def state(self, kappa, d) -> ResidualState:
        kv = np.array(_values(kappa), dtype=np.int8)
        r = _data(d) - self._mean(kv)
        w = self._weighted(r)
        ll = self.log_const - 0.5 * float(np.sum(r * w))
        return ResidualState(kv, r, w, ll)

    def log_likelihood(self, kappa, d) -> float:
        return self.state(kappa, d).log_lik

    def mean(self, kappa) -> np.ndarray:
        """E[d | kappa] as a ``(2m, n)`` column matrix."""
        return self._mean(_values(kappa))

    def column_delta(self, state: ResidualState, j0: int, new_col) -> tuple[float, np.ndarray]:
        """Change in log-likelihood if column ``j0`` takes ``new_col``.

        Also returns the class-indicator difference, to be passed to :meth:`apply`.
        """
        diff = np.asarray(new_col, dtype=np.float64) - state.kappa[:, j0]
        idx = np.flatnonzero(diff)
        if idx.size == 0:
            return 0.0, diff
        dv = diff[idx]
        lin = dv @ (self.G[:, idx].T @ state.weighted[:, j0])
        quad = dv @ self.H[j0][np.ix_(idx, idx)] @ dv
        return float(lin - 0.5 * quad), diff

    def apply(self, state: ResidualState, j0: int, new_col, delta: float, diff: np.ndarray) -> None:
        """Commit a column change computed by :meth:`column_delta` (in place)."""
        idx = np.flatnonzero(diff)
        state.kappa[:, j0] = new_col
        if idx.size == 0:
            return
        dv = diff[idx]
        v = self.U[j0][:, None] * (self.PG[:, :, idx] @ dv)  # (n, 2m)
        state.weighted -= (self.U @ v).T
        state.residual[:, j0] -= self.G[:, idx] @ dv
        state.log_lik += delta

    def audit(self, state: ResidualState, d, rtol: float = 1e-8) -> float:
        """Compare cached log-likelihood with a fresh evaluation; returns the absolute drift."""
        fresh = self.log_likelihood(state.kappa, d)
        drift = abs(fresh - state.log_lik)
        if drift > rtol * max(1.0, abs(fresh)):
            raise StateAuditError(f"cached log-likelihood drifted by {drift:.3e}")
        return drift

    def column_coupling(self, state: ResidualState, j0: int) -> tuple[np.ndarray, np.ndarray]:
        """Quadratic form of the log-likelihood in column ``j0``'s indicators.

        ``loglik(x) = const + h @ x + sum_{i<k} Q[i, k] x_i x_k`` with the rest of
        the field fixed. ``Q`` is returned symmetric with zero diagonal.
        """
        H = self.H[j0]
        x0 = state.kappa[:, j0].astype(np.float64)
        h = self.G.T @ state.weighted[:, j0] + H @ x0 - 0.5 * np.diag(H)
        Q = -H.copy()
        np.fill_diagonal(Q, 0.0)
        return h, Q

    def coupling_range(self, rtol: float = 1e-12) -> int:
        """Largest row lag with a pairwise coupling above ``rtol`` times the diagonal scale."""
        scale = np.abs(np.diagonal(self.H, axis1=1, axis2=2)).max()
        m = self.dims.m
        lags = np.abs(np.arange(m)[:, None] - np.arange(m)[None, :])
        big = (np.abs(self.H) > rtol * scale).any(axis=0)
        return int(lags[big].max()) if big.any() else 0

    def dump_factors(self, directory) -> None:
        """Write horizontal eigenvalues and block log-determinants to CSV."""
        path = Path(directory) / "likelihood_factors.csv"
        with path.open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["k", "horizontal_eigenvalue", "block_logdet"])
            for k, (lam, ld) in enumerate(zip(self.lam, self.block_logdet)):
                out.writerow([k, repr(float(lam)), repr(float(ld))])


class DenseLikelihood:
    """Exact likelihood with class-dependent elastic covariance.

    Assembles the full ``2mn x 2mn`` covariance for each field, so it is meant
    for small lattices and as a reference.
    """

    mode = "dense"

    def __init__(self, fm: ForwardModel, dims: GridDims):
        m, n = dims.shape
        self.fm = fm
        self.dims = dims
        mm = _MeanModel(fm, dims)
        self.T, self.G, self.mean0 = mm.T, mm.G, mm.mean0
        self._mean = mm.mean
        self.cv = fm.elastic.corr_v_matrix(m)
        self.ch = fm.elastic.corr_h_matrix(n)
        self.noise = np.kron(np.eye(n), fm.noise.column_cov(m))
        self.factors = np.stack([_psd_factor(fm.elastic.cov(k), f"sigma{k}") for k in (0, 1)])
        self.T_full = np.kron(np.eye(n), self.T)

    def covariance(self, kappa) -> np.ndarray:
        kv = _values(kappa).astype(np.intp)
        m, n = self.dims.shape
        L = self.factors[kv]  # (m, n, 2, 2), row i, column j
        # cov[(j, c, i), (l, e, k)] = ch[j, l] cv[i, k] (L_ij L_kl^T)[c, e]
        node = np.einsum("ijcx,klex->jcilek", L, L)
        cov_m = node * self.ch[:, None, None, :, None, None] * self.cv[None, None, :, None, None, :]
        cov_m = cov_m.reshape(2 * m * n, 2 * m * n)
        return self.T_full @ cov_m @ self.T_full.T + self.noise

    def log_likelihood(self, kappa, d) -> float:
        kv = _values(kappa)
        r = (_data(d) - self._mean(kv)).T.reshape(-1)
        cov = self.covariance(kv)
        try:
            c, low = linalg.cho_factor(cov, lower=True)
        except linalg.LinAlgError:
            raise ForwardNumericError("assembled data covariance is not positive definite") from None
        z = linalg.solve_triangular(c, r, lower=True)
        logdet = 2.0 * np.log(np.diag(c)).sum()
        return float(-0.5 * (r.size * LOG_2PI + logdet + z @ z))

    def column_coupling(self, *args, **kwargs):
        raise UnsupportedModeError("column coupling needs class-independent elastic covariance")


def build(fm: ForwardModel, dims: GridDims):
    """Likelihood engine for ``fm``: separable when possible, dense otherwise."""
    if fm.elastic.constant_covariance:
        return LikelihoodEngine(fm, dims)
    return DenseLikelihood(fm, dims)


def log_likelihood(engine, kappa, d) -> float:
    return engine.log_likelihood(kappa, d)


def delta_log_likelihood(engine: LikelihoodEngine, state: ResidualState, j: int, new_column):
    """log p(d | kappa') - log p(d | kappa) for a change in column ``j`` (1-based).

    Returns the difference and a new state; ``state`` itself is left untouched.
    """
    new = state.copy()
    delta, shift = engine.column_delta(new, j - 1, new_column)
    engine.apply(new, j - 1, np.asarray(new_column, dtype=np.int8), delta, shift)
    return delta, new


def column_coupling(engine, state: ResidualState, j: int):
    """(h, Q) for column ``j`` (1-based); see :meth:`LikelihoodEngine.column_coupling`."""
    if getattr(engine, "mode", None) != "constant":
        raise UnsupportedModeError("column coupling needs class-independent elastic covariance")
    return engine.column_coupling(state, j - 1)
