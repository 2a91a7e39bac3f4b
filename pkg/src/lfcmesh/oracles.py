"""Brute-force reference computations for tests.

Nothing here calls into the production modules. Inputs are plain parameters
(offsets as ``(di, dj)`` tuples, probability tables, numeric arrays), and every
quantity is rebuilt from its definition with explicit loops. Fields are
indexed by integers whose bit ``(i * n + j)`` (0-based row-major) is node ``(i, j)``.
"""

from __future__ import annotations

import math
from collections import deque
from itertools import product

import numpy as np

MAX_STATES = 4096


class OracleSizeError(ValueError):
    pass


def _check_size(m: int, n: int) -> int:
    total = 1 << (m * n)
    if total > MAX_STATES:
        raise OracleSizeError(f"{m}x{n} lattice has {total} fields; oracle cap is {MAX_STATES}")
    return total


def field_from_index(index: int, m: int, n: int) -> np.ndarray:
    bits = [(index >> k) & 1 for k in range(m * n)]
    return np.array(bits, dtype=np.int8).reshape(m, n)


def index_from_field(values) -> int:
    flat = np.asarray(values).reshape(-1)
    return int(sum(int(v) << k for k, v in enumerate(flat)))


def all_fields(m: int, n: int) -> np.ndarray:
    """Every binary ``m x n`` field, shape ``(2**(m*n), m, n)``, in index order."""
    total = _check_size(m, n)
    idx = np.arange(total)[:, None]
    bits = (idx >> np.arange(m * n)[None, :]) & 1
    return bits.reshape(total, m, n).astype(np.int8)


# --- mesh prior --------------------------------------------------------------


def mesh_conditional(tau, interactions, values, i: int, j: int) -> float:
    """P(node (i, j) is sand | earlier nodes), 0-based node, from the subset expansion."""
    m, n = values.shape
    active = set()
    for di, dj in tau:
        k, l = i + di, j + dj
        if 0 <= k < m and 0 <= l < n and values[k, l] == 1:
            active.add((di, dj))
    theta = sum(beta for lam, beta in interactions if set(lam) <= active)
    return 1.0 / (1.0 + math.exp(-theta))


def enumerate_mesh_prior(tau, interactions, m: int, n: int) -> np.ndarray:
    """Probability of every field under the sequential mesh model (product of conditionals)."""
    fields = all_fields(m, n)
    probs = np.empty(len(fields))
    for s, x in enumerate(fields):
        p = 1.0
        for i in range(m):
            for j in range(n):
                q = mesh_conditional(tau, interactions, x, i, j)
                p *= q if x[i, j] == 1 else 1.0 - q
        probs[s] = p
    return probs


# --- profile prior -----------------------------------------------------------


def profile_column_prob(p1, column, left, right) -> float:
    """Probability of a whole column given its flanks (None = outside, read as shale)."""
    m = len(column)
    p = 1.0
    above = 0
    for i in range(m):
        l = 0 if left is None else int(left[i])
        r = 0 if right is None else int(right[i])
        q = p1[above][l][r]
        p *= q if column[i] == 1 else 1.0 - q
        above = int(column[i])
    return p


def _column_sweep_stationary(cond, m: int, n: int, tol: float = 1e-15,
                             max_iter: int = 100000) -> np.ndarray:
    """Stationary law of a left-to-right sweep of exact column updates.

    ``cond[j]`` has shape ``(2**(m*n),)``: the conditional probability of the
    field's column ``j`` given the field's other columns.
    """
    total = 1 << (m * n)
    fields = all_fields(m, n)
    # group states by "everything except column j"
    groups = []
    for j in range(n):
        rest = fields.copy()
        rest[:, :, j] = 0
        keys = np.array([index_from_field(f) for f in rest])
        _, inverse = np.unique(keys, return_inverse=True)
        groups.append(inverse)
    pi = np.full(total, 1.0 / total)
    for _ in range(max_iter):
        old = pi
        for j in range(n):
            mass = np.bincount(groups[j], weights=pi)
            pi = mass[groups[j]] * cond[j]
        if np.abs(pi - old).max() < tol:
            break
    else:
        raise RuntimeError("column-sweep power iteration did not converge")
    return pi / pi.sum()


def _profile_column_conds(p1, m: int, n: int, log_weight=None) -> list[np.ndarray]:
    fields = all_fields(m, n)
    conds = []
    for j in range(n):
        c = np.empty(len(fields))
        for s, x in enumerate(fields):
            left = x[:, j - 1] if j > 0 else None
            right = x[:, j + 1] if j < n - 1 else None
            c[s] = profile_column_prob(p1, x[:, j], left, right)
        if log_weight is not None:
            c = c * np.exp(log_weight - log_weight.max())
            rest = fields.copy()
            rest[:, :, j] = 0
            keys = np.array([index_from_field(f) for f in rest])
            _, inverse = np.unique(keys, return_inverse=True)
            c = c / np.bincount(inverse, weights=c)[inverse]
        conds.append(c)
    return conds


def enumerate_profile_prior(p1, m: int, n: int) -> np.ndarray:
    """Stationary law of systematic column-Gibbs sweeps under the profile conditionals."""
    _check_size(m, n)
    p1 = np.asarray(p1, dtype=np.float64)
    return _column_sweep_stationary(_profile_column_conds(p1, m, n), m, n)


def enumerate_profile_posterior(p1, loglik: np.ndarray, m: int, n: int) -> np.ndarray:
    """Stationary law of systematic column-Gibbs sweeps whose column conditionals are
    proportional to the profile column chain times the likelihood."""
    _check_size(m, n)
    p1 = np.asarray(p1, dtype=np.float64)
    conds = _profile_column_conds(p1, m, n, log_weight=np.asarray(loglik, dtype=np.float64))
    return _column_sweep_stationary(conds, m, n)


def enumerate_posterior(prior_table: np.ndarray, loglik: np.ndarray) -> np.ndarray:
    """Normalised pointwise product of prior probabilities and likelihoods."""
    w = np.log(np.asarray(prior_table, dtype=np.float64)) + loglik
    w = np.exp(w - w.max())
    return w / w.sum()


def node_marginals(table: np.ndarray, m: int, n: int) -> np.ndarray:
    return np.tensordot(table, all_fields(m, n).astype(np.float64), axes=1)


# --- Gaussian forward model --------------------------------------------------


def dense_gaussian_logpdf(mean, cov, x) -> float:
    """Multivariate normal log-density via an explicit Cholesky factor."""
    mean = np.asarray(mean, dtype=np.float64).reshape(-1)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    k = mean.size
    L = np.linalg.cholesky(cov)  # LinAlgError if not SPD
    z = np.linalg.solve(L, x - mean)
    return float(-0.5 * (k * math.log(2 * math.pi) + 2 * np.log(np.diag(L)).sum() + z @ z))


def direct_convolve_same(x, samples, center: int) -> np.ndarray:
    """``out[i] = sum_k samples[k] * x[i - k + center]`` with zero padding."""
    m = len(x)
    out = np.zeros(m)
    for i in range(m):
        for k, w in enumerate(samples):
            t = i - k + center
            if 0 <= t < m:
                out[i] += w * x[t]
    return out


def _exp_corr(lag: int, corr_range: float, support=None) -> float:
    lag = abs(lag)
    if support is not None and lag > support:
        return 0.0
    if corr_range <= 0:
        return 1.0 if lag == 0 else 0.0
    return math.exp(-lag / corr_range)


def forward_matrix(m: int, n: int, aki, near, near_center, far, far_center) -> np.ndarray:
    """Dense linear map from elastic values to data.

    Elastic vector index: ``((i * n + j) * 2 + c)``; data index
    ``((i * n + j) * 2 + s)`` with ``s`` 0 = near, 1 = far.
    """
    size = 2 * m * n
    F = np.zeros((size, size))
    aki = np.asarray(aki, dtype=np.float64)
    for col in range(size):
        e = np.zeros((m, n, 2))
        node, c = divmod(col, 2)
        e[node // n, node % n, c] = 1.0
        contrast = np.zeros_like(e)
        for i in range(m):
            contrast[i] = e[i] - (e[i - 1] if i > 0 else 0.0)
        refl = np.zeros_like(e)
        for i in range(m):
            for j in range(n):
                refl[i, j] = aki @ contrast[i, j]
        out = np.zeros_like(e)
        for j in range(n):
            out[:, j, 0] = direct_convolve_same(refl[:, j, 0], near, near_center)
            out[:, j, 1] = direct_convolve_same(refl[:, j, 1], far, far_center)
        F[:, col] = out.reshape(-1)
    return F


def data_moments(values, *, mu0, mu1, sigma0, sigma1, corr_v_range, corr_v_support, corr_h_range,
                 aki, near, near_center, far, far_center, sd_near, sd_far,
                 noise_corr_range=0.0):
    """Mean and covariance of the data given a class field, assembled densely."""
    values = np.asarray(values)
    m, n = values.shape
    mus = [np.asarray(mu0, float), np.asarray(mu1, float)]
    # cross-class blocks use lower Cholesky factors: Cov(m_a, m_b) = rho * L_a L_b^T
    factors = [_lower_factor(np.asarray(s, float)) for s in (sigma0, sigma1)]
    size = 2 * m * n
    mean_m = np.zeros(size)
    cov_m = np.zeros((size, size))
    nodes = [(i, j) for i in range(m) for j in range(n)]
    for a, (i, j) in enumerate(nodes):
        mean_m[2 * a:2 * a + 2] = mus[int(values[i, j])]
        for b, (k, l) in enumerate(nodes):
            rho = _exp_corr(i - k, corr_v_range, corr_v_support) * _exp_corr(j - l, corr_h_range)
            block = factors[int(values[i, j])] @ factors[int(values[k, l])].T
            cov_m[2 * a:2 * a + 2, 2 * b:2 * b + 2] = rho * block
    F = forward_matrix(m, n, aki, near, near_center, far, far_center)
    noise = np.zeros((size, size))
    sds = (sd_near, sd_far)
    for a, (i, j) in enumerate(nodes):
        for b, (k, l) in enumerate(nodes):
            if j != l:
                continue
            for s in (0, 1):
                noise[2 * a + s, 2 * b + s] = sds[s] ** 2 * _exp_corr(i - k, noise_corr_range)
    return F @ mean_m, F @ cov_m @ F.T + noise


def _lower_factor(s: np.ndarray) -> np.ndarray:
    if np.linalg.eigvalsh(s).min() > 0:
        return np.linalg.cholesky(s)
    w, v = np.linalg.eigh(s)
    return v * np.sqrt(np.clip(w, 0.0, None))


def dense_log_likelihood(values, data, **params) -> float:
    """log p(d | class field); ``data`` has shape ``(m, n, 2)``."""
    mean, cov = data_moments(values, **params)
    return dense_gaussian_logpdf(mean, cov, np.asarray(data, dtype=np.float64).reshape(-1))


# --- connectivity ------------------------------------------------------------


def bfs_component(values, node, connectivity: int = 4) -> set:
    """Breadth-first flood through sand from a 0-based ``node``."""
    values = np.asarray(values)
    m, n = values.shape
    i, j = node
    if values[i, j] != 1:
        return set()
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    seen = {(i, j)}
    queue = deque([(i, j)])
    while queue:
        a, b = queue.popleft()
        for da, db in steps:
            c, d = a + da, b + db
            if 0 <= c < m and 0 <= d < n and values[c, d] == 1 and (c, d) not in seen:
                seen.add((c, d))
                queue.append((c, d))
    return seen


def exhaustive_connectivity(fields, connectivity: int = 4) -> np.ndarray:
    """Per-sample average over sand nodes of 1[other nodes in component >= eta]."""
    fields = [np.asarray(f) for f in fields]
    m, n = fields[0].shape
    curve = np.zeros(m * n)
    used = 0
    for f in fields:
        sand = [(i, j) for i, j in product(range(m), range(n)) if f[i, j] == 1]
        if not sand:
            continue
        used += 1
        for node in sand:
            others = len(bfs_component(f, node, connectivity)) - 1
            curve[: others + 1] += 1.0 / len(sand)
    return curve / max(used, 1)
