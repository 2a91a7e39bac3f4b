"""Linearised convolutional AVO forward model.

Elastic properties per node are ``(rho*vp, vp/vs)``. Given the class field they
are Gaussian with class means and covariances and a separable spatial
correlation. Seismic data per column are::

    d = W A D m + noise

with ``D`` the vertical first-order differences (row 1 keeps its value), ``A``
the 2x2 Aki-Richards block mapping contrasts to (near, far) reflectivity and
``W`` the near/far wavelet convolutions. Column vectors are laid out as
``[component 0 rows 1..m, component 1 rows 1..m]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .lattice import GridDims, LfcField

__all__ = [
    "ForwardConfigError",
    "ForwardNumericError",
    "ElasticClassStats",
    "Wavelet",
    "NoiseModel",
    "ForwardModel",
    "SeismicCube",
    "exp_correlation",
    "default_aki",
    "ricker",
    "contrast_operator",
    "convolution_matrix",
    "synthesize_mean",
    "sample_elastic",
    "synthesize_data",
    "read_wavelet",
    "write_wavelet",
    "read_cube",
    "write_cube",
]


class ForwardConfigError(ValueError):
    pass


class ForwardNumericError(ArithmeticError):
    pass


def exp_correlation(lags, corr_range: float, support: int | None = None) -> np.ndarray:
    """``exp(-|lag| / range)``; range 0 gives white correlation, lags past ``support`` are 0."""
    lags = np.abs(np.asarray(lags))
    if corr_range <= 0:
        out = (lags == 0).astype(np.float64)
    else:
        out = np.exp(-lags / corr_range)
    if support is not None:
        out = np.where(lags > support, 0.0, out)
    return out


def _psd_factor(cov: np.ndarray, name: str) -> np.ndarray:
    """Lower factor ``L`` with ``L L^T = cov``; tolerates exactly singular PSD input."""
    cov = np.asarray(cov, dtype=np.float64)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        tol = 1e-10 * max(1.0, np.abs(w).max())
        if w.min() < -tol:
            raise ForwardNumericError(
                f"{name} is not positive semi-definite (min eigenvalue {w.min():.3e})"
            ) from None
        return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class ElasticClassStats:
    mu0: tuple = (6960.0, 2.25)
    mu1: tuple = (5670.0, 1.80)
    sigma0: tuple = ((180.0**2, 0.0), (0.0, 0.06**2))
    sigma1: tuple = ((180.0**2, 0.0), (0.0, 0.06**2))
    corr_v_range: float = 3.0
    corr_h_range: float = 10.0
    corr_v_support: int | None = 12

    def __post_init__(self):
        for name in ("sigma0", "sigma1"):
            s = np.asarray(getattr(self, name), dtype=float)
            if s.shape != (2, 2) or not np.allclose(s, s.T):
                raise ForwardConfigError(f"{name} must be a symmetric 2x2 matrix")
            if np.linalg.eigvalsh(s).min() < -1e-12 * max(1.0, abs(s).max()):
                raise ForwardConfigError(f"{name} is not positive semi-definite")
        for name in ("mu0", "mu1"):
            if np.asarray(getattr(self, name)).shape != (2,):
                raise ForwardConfigError(f"{name} must have two components")

    @property
    def constant_covariance(self) -> bool:
        return np.array_equal(np.asarray(self.sigma0), np.asarray(self.sigma1))

    def corr_v(self, lags) -> np.ndarray:
        return exp_correlation(lags, self.corr_v_range, self.corr_v_support)

    def corr_h(self, lags) -> np.ndarray:
        return exp_correlation(lags, self.corr_h_range)

    def corr_v_matrix(self, m: int) -> np.ndarray:
        idx = np.arange(m)
        return self.corr_v(idx[:, None] - idx[None, :])

    def corr_h_matrix(self, n: int) -> np.ndarray:
        idx = np.arange(n)
        return self.corr_h(idx[:, None] - idx[None, :])

    def mean(self, k: int) -> np.ndarray:
        return np.asarray(self.mu1 if k else self.mu0, dtype=np.float64)

    def cov(self, k: int) -> np.ndarray:
        return np.asarray(self.sigma1 if k else self.sigma0, dtype=np.float64)


@dataclass(frozen=True)
class Wavelet:
    samples: np.ndarray
    center: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "samples", s)
        if s.size == 0 or not np.isfinite(s).all():
            raise ForwardConfigError("wavelet samples must be finite and non-empty")
        if not 0 <= self.center < s.size:
            raise ForwardConfigError(f"wavelet center {self.center} outside 0..{s.size - 1}")

    def __len__(self) -> int:
        return self.samples.size

    @classmethod
    def delta(cls) -> "Wavelet":
        return cls(np.array([1.0]), 0)


def ricker(peak_frequency: float, length: int) -> Wavelet:
    """Ricker wavelet sampled at unit spacing, unit peak, centred."""
    if length < 1 or length % 2 == 0:
        raise ForwardConfigError(f"Ricker length must be a positive odd integer, got {length}")
    if not 0 < peak_frequency < 0.5:
        raise ForwardConfigError("Ricker peak frequency must lie in (0, 0.5) cycles/sample")
    c = (length - 1) // 2
    t = np.arange(length) - c
    a = (np.pi * peak_frequency * t) ** 2
    return Wavelet((1.0 - 2.0 * a) * np.exp(-a), c)


def default_aki(mu0, mu1) -> np.ndarray:
    """Two-term weak-contrast coefficients; rows are (near, far)."""
    scale = 0.5 / (0.5 * (mu0[0] + mu1[0]))
    return np.array([[scale, -0.1], [scale, -0.4]])


@dataclass(frozen=True)
class NoiseModel:
    sd_near: float = 0.02
    sd_far: float = 0.02
    corr_range: float = 0.0  # vertical noise correlation; 0 = white

    def __post_init__(self):
        if self.sd_near < 0 or self.sd_far < 0:
            raise ForwardConfigError("noise standard deviations must be non-negative")

    def column_cov(self, m: int) -> np.ndarray:
        idx = np.arange(m)
        cv = exp_correlation(idx[:, None] - idx[None, :], self.corr_range)
        return np.kron(np.diag([self.sd_near**2, self.sd_far**2]), cv)


def contrast_operator(m: int) -> np.ndarray:
    """``m x m`` first-difference matrix with an implicit zero above row 1."""
    if m < 1:
        raise ForwardConfigError("need at least one row")
    return np.eye(m) - np.eye(m, k=-1)


def convolution_matrix(w: Wavelet, m: int) -> np.ndarray:
    """``same``-mode convolution as a matrix: ``out[i] = sum_k w[k] x[i - k + center]``."""
    if len(w) > 2 * m - 1:
        raise ForwardConfigError(f"wavelet of length {len(w)} is longer than 2m-1 = {2 * m - 1}")
    i = np.arange(m)
    k = i[:, None] - i[None, :] + w.center
    valid = (k >= 0) & (k < len(w))
    return np.where(valid, w.samples[np.clip(k, 0, len(w) - 1)], 0.0)


@dataclass(frozen=True)
class SeismicCube:
    dims: GridDims
    values: np.ndarray  # (m, n, 2): near, far

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.dims.m, self.dims.n, 2):
            raise ForwardConfigError(f"cube values must have shape {(self.dims.m, self.dims.n, 2)}")
        if not np.isfinite(v).all():
            raise ForwardConfigError("cube values must be finite")
        object.__setattr__(self, "values", v)

    def column_matrix(self) -> np.ndarray:
        """Data as a ``(2m, n)`` matrix of stacked (near, far) column vectors."""
        return np.concatenate([self.values[:, :, 0], self.values[:, :, 1]], axis=0)


@dataclass(frozen=True)
class ForwardModel:
    elastic: ElasticClassStats = field(default_factory=ElasticClassStats)
    wavelet_near: Wavelet = field(default_factory=lambda: ricker(0.14, 21))
    wavelet_far: Wavelet = field(default_factory=lambda: ricker(0.12, 21))
    aki: np.ndarray | None = None
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if self.aki is None:
            object.__setattr__(self, "aki", default_aki(self.elastic.mu0, self.elastic.mu1))
        a = np.asarray(self.aki, dtype=np.float64)
        if a.shape != (2, 2) or not np.isfinite(a).all():
            raise ForwardConfigError("Aki-Richards block must be a finite 2x2 matrix")
        object.__setattr__(self, "aki", a)

    def with_(self, **changes) -> "ForwardModel":
        return replace(self, **changes)

    def column_operator(self, m: int) -> np.ndarray:
        """The ``2m x 2m`` map W A D from an elastic column to (near, far) traces."""
        d = contrast_operator(m)
        w = np.zeros((2 * m, 2 * m))
        w[:m, :m] = convolution_matrix(self.wavelet_near, m)
        w[m:, m:] = convolution_matrix(self.wavelet_far, m)
        return w @ np.kron(self.aki, np.eye(m)) @ np.kron(np.eye(2), d)


def _convolve_same(x: np.ndarray, w: Wavelet) -> np.ndarray:
    m = x.shape[0]
    full = np.apply_along_axis(np.convolve, 0, x, w.samples)
    return full[w.center:w.center + m]


def synthesize_mean(fm: ForwardModel, mfield: np.ndarray) -> SeismicCube:
    """Noise-free data ``W A D m`` for an elastic field of shape ``(m, n, 2)``."""
    mfield = np.asarray(mfield, dtype=np.float64)
    m, n, _ = mfield.shape
    for w in (fm.wavelet_near, fm.wavelet_far):
        if len(w) > 2 * m - 1:
            raise ForwardConfigError(f"wavelet of length {len(w)} is longer than 2m-1 = {2 * m - 1}")
    contrast = mfield.copy()
    contrast[1:] -= mfield[:-1]
    refl = contrast @ fm.aki.T  # (m, n, 2): near, far
    out = np.empty_like(refl)
    out[:, :, 0] = _convolve_same(refl[:, :, 0], fm.wavelet_near)
    out[:, :, 1] = _convolve_same(refl[:, :, 1], fm.wavelet_far)
    return SeismicCube(GridDims(m, n), out)


def sample_elastic(fm: ForwardModel, kappa: LfcField, seed) -> np.ndarray:
    """Draw the elastic field ``(m, n, 2)`` given the class field."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    el = fm.elastic
    m, n = kappa.dims.shape
    lv = _psd_factor(el.corr_v_matrix(m), "vertical correlation matrix")
    lh = _psd_factor(el.corr_h_matrix(n), "horizontal correlation matrix")
    z = np.stack([lv @ rng.standard_normal((m, n)) @ lh.T for _ in range(2)], axis=-1)
    factors = np.stack([_psd_factor(el.cov(k), f"sigma{k}") for k in (0, 1)])
    means = np.stack([el.mean(0), el.mean(1)])
    k = kappa.values.astype(np.intp)
    return means[k] + np.einsum("ijab,ijb->ija", factors[k], z)


def synthesize_data(fm: ForwardModel, kappa: LfcField, seed) -> tuple[SeismicCube, np.ndarray]:
    """Elastic draw, forward map, additive noise. Returns ``(cube, elastic field)``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mfield = sample_elastic(fm, kappa, rng)
    mean = synthesize_mean(fm, mfield)
    m, n = kappa.dims.shape
    ln = _psd_factor(fm.noise.column_cov(m), "noise covariance")
    eps = ln @ rng.standard_normal((2 * m, n))
    noise = np.stack([eps[:m], eps[m:]], axis=-1)
    return SeismicCube(kappa.dims, mean.values + noise), mfield


# --- files -------------------------------------------------------------------


def read_wavelet(path) -> Wavelet:
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    try:
        length, center = (int(x) for x in lines[0].split())
        samples = np.array([float(x) for x in lines[1:]])
    except (ValueError, IndexError):
        raise ForwardConfigError(f"{path}: malformed wavelet file") from None
    if samples.size != length:
        raise ForwardConfigError(f"{path}: header says {length} samples, found {samples.size}")
    return Wavelet(samples, center)


def write_wavelet(path, w: Wavelet) -> None:
    lines = [f"{len(w)} {w.center}"] + [repr(float(v)) for v in w.samples]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_cube(path, cube: SeismicCube) -> None:
    m, n = cube.dims.shape
    flat = cube.values.reshape(m * n, 2)
    lines = [f"{m} {n}"] + [f"{a!r} {b!r}" for a, b in flat.tolist()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_cube(path) -> SeismicCube:
    lines = [ln.split() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    try:
        m, n = int(lines[0][0]), int(lines[0][1])
        body = np.array([[float(a), float(b)] for a, b in lines[1:]])
    except (ValueError, IndexError):
        raise ForwardConfigError(f"{path}: malformed cube file") from None
    if body.shape != (m * n, 2):
        raise ForwardConfigError(f"{path}: expected {m * n} lines of 2 values")
    return SeismicCube(GridDims(m, n), body.reshape(m, n, 2))
