import itertools
import numpy as np
import pytest

from lfcmesh import oracles
from lfcmesh.forward import (
    ElasticClassStats, ForwardModel, ForwardNumericError, NoiseModel, SeismicCube, Wavelet,
    synthesize_data,
)
from lfcmesh.lattice import GridDims, LfcField
from lfcmesh.likelihood import (
    DenseLikelihood, LikelihoodEngine, StateAuditError, UnsupportedModeError, build,
    column_coupling, delta_log_likelihood, log_likelihood,
)

from conftest import oracle_params, small_model


def _setup(m, n, seed=0, fm=None):
    fm = fm or small_model(wavelet_len=min(5, 2 * m - 1))
    dims = GridDims(m, n)
    rng = np.random.default_rng(seed)
    k = LfcField(rng.integers(0, 2, dims.shape))
    d, _ = synthesize_data(fm, k, rng)
    return fm, dims, k, d


def _oracle_order(m, n):
    """Permutation taking engine data layout (j, s, i) to the oracle's (i, j, s)."""
    perm = np.empty(2 * m * n, dtype=int)
    for i, j, s in itertools.product(range(m), range(n), range(2)):
        perm[(i * n + j) * 2 + s] = j * 2 * m + s * m + i
    return perm


def test_covariance_matches_dense_oracle():
    fm, dims, k, _ = _setup(4, 3)
    eng = LikelihoodEngine(fm, dims)
    _, cov = oracles.data_moments(k.values, **oracle_params(fm))
    p = _oracle_order(4, 3)
    ours = eng.covariance()[np.ix_(p, p)]
    assert np.abs(ours - cov).max() <= 1e-10 * np.abs(cov).max()


def test_white_correlation_gives_column_blocks():
    fm = small_model(corr_h_range=0)
    eng = LikelihoodEngine(fm, GridDims(4, 3))
    cov = eng.covariance()
    blk = 2 * 4
    for a, b in itertools.permutations(range(3), 2):
        assert np.all(cov[a * blk:(a + 1) * blk, b * blk:(b + 1) * blk] == 0)


@pytest.mark.parametrize("m,n", [(m, n) for m in range(1, 5) for n in range(1, 5)])
def test_log_likelihood_matches_dense_oracle(m, n):
    for seed in range(3):
        fm, dims, k, d = _setup(m, n, seed)
        ours = log_likelihood(LikelihoodEngine(fm, dims), k, d)
        want = oracles.dense_log_likelihood(k.values, d.values, **oracle_params(fm))
        assert ours == pytest.approx(want, rel=1e-8)


def test_all_fields_on_two_by_two():
    fm, dims, _, d = _setup(2, 2, 5)
    eng = LikelihoodEngine(fm, dims)
    for f in oracles.all_fields(2, 2):
        want = oracles.dense_log_likelihood(f, d.values, **oracle_params(fm))
        assert eng.log_likelihood(f, d) == pytest.approx(want, rel=1e-8)


def test_maximum_at_mean():
    fm, dims, k, _ = _setup(3, 3)
    eng = LikelihoodEngine(fm, dims)
    mean = eng.mean(k)
    d = SeismicCube(dims, np.stack([mean[:3], mean[3:]], axis=-1))
    sign, logdet = np.linalg.slogdet(2 * np.pi * eng.covariance())
    assert eng.log_likelihood(k, d) == pytest.approx(-0.5 * logdet, rel=1e-10)


def test_delta_matches_recompute_and_state_untouched():
    fm, dims, k, d = _setup(6, 4, 1)
    eng = LikelihoodEngine(fm, dims)
    state = eng.state(k, d)
    before = state.log_lik
    new_col = k.column(3).copy()
    new_col[2] ^= 1
    delta, new_state = delta_log_likelihood(eng, state, 3, new_col)
    assert state.log_lik == before
    assert delta == pytest.approx(eng.log_likelihood(k.with_column(3, new_col), d) - before, abs=1e-8)
    zero, same = delta_log_likelihood(eng, state, 2, k.column(2))
    assert zero == 0.0 and same.log_lik == before


def test_drift_over_random_updates():
    fm, dims, k, d = _setup(12, 6, 2, fm=small_model(wavelet_len=9))
    eng = LikelihoodEngine(fm, dims)
    state = eng.state(k, d)
    rng = np.random.default_rng(4)
    for _ in range(100):
        j0 = rng.integers(dims.n)
        col = rng.integers(0, 2, dims.m)
        delta, diff = eng.column_delta(state, j0, col)
        eng.apply(state, j0, col, delta, diff)
    fresh = eng.log_likelihood(state.kappa, d)
    assert abs(state.log_lik - fresh) < 1e-6
    assert eng.audit(state, d) < 1e-6
    state.log_lik += 1.0
    with pytest.raises(StateAuditError):
        eng.audit(state, d)


def test_coupling_reconstructs_log_likelihood():
    fm, dims, k, d = _setup(7, 4, 3, fm=small_model(wavelet_len=7))
    eng = LikelihoodEngine(fm, dims)
    state = eng.state(k, d)
    rng = np.random.default_rng(0)
    for j in (1, 3, 4):
        h, Q = column_coupling(eng, state, j)
        assert np.allclose(Q, Q.T) and np.all(np.diag(Q) == 0)
        base = None
        for _ in range(20):
            x = rng.integers(0, 2, dims.m)
            quad = h @ x + 0.5 * x @ Q @ x
            ll = eng.log_likelihood(k.with_column(j, x), d)
            if base is None:
                base = ll - quad
            assert ll - quad == pytest.approx(base, abs=1e-8)


def test_coupling_pairwise_terms_are_data_independent():
    fm, dims, k, d = _setup(5, 3, 1)
    eng = LikelihoodEngine(fm, dims)
    _, Q1 = eng.column_coupling(eng.state(k, d), 1)
    d2 = SeismicCube(dims, 3.0 * d.values)
    _, Q2 = eng.column_coupling(eng.state(k, d2), 1)
    assert np.array_equal(Q1, Q2)


def test_small_noise_delta_wavelet_decouples_rows():
    fm = ForwardModel(
        elastic=ElasticClassStats(corr_v_range=0, corr_h_range=0),
        wavelet_near=Wavelet.delta(), wavelet_far=Wavelet.delta(),
        noise=NoiseModel(1e-7, 1e-7),
    )
    eng = LikelihoodEngine(fm, GridDims(8, 2))
    H = eng.H[0]
    lags = np.abs(np.subtract.outer(np.arange(8), np.arange(8)))
    assert np.abs(H[lags > 1]).max() < 1e-6 * np.abs(np.diag(H)).max()


def test_mirror_relabelling_invariance():
    fm, dims, k, d = _setup(4, 5, 6)
    eng = LikelihoodEngine(fm, dims)
    flipped = SeismicCube(dims, d.values[:, ::-1])
    assert eng.log_likelihood(k.values[:, ::-1], flipped) == pytest.approx(eng.log_likelihood(k, d), rel=1e-12)


def test_dense_mode_matches_constant_mode():
    fm, dims, k, d = _setup(3, 3, 2)
    assert DenseLikelihood(fm, dims).log_likelihood(k, d) == pytest.approx(
        LikelihoodEngine(fm, dims).log_likelihood(k, d), rel=1e-10)


def test_dense_mode_class_dependent_covariance():
    fm = small_model(sigma1=((150.0**2, -2.0), (-2.0, 0.05**2)))
    _, dims, k, d = _setup(3, 3, 4, fm=fm)
    eng = build(fm, dims)
    assert isinstance(eng, DenseLikelihood)
    want = oracles.dense_log_likelihood(k.values, d.values, **oracle_params(fm))
    assert eng.log_likelihood(k, d) == pytest.approx(want, rel=1e-8)
    with pytest.raises(UnsupportedModeError):
        LikelihoodEngine(fm, dims)
    with pytest.raises(UnsupportedModeError):
        column_coupling(eng, None, 1)


def test_singular_covariance_is_a_numeric_error():
    fm = ForwardModel(wavelet_near=Wavelet(np.zeros(1), 0), wavelet_far=Wavelet(np.zeros(1), 0),
                      noise=NoiseModel(0.0, 0.0))
    with pytest.raises(ForwardNumericError):
        LikelihoodEngine(fm, GridDims(3, 2))


def test_dump_factors(tmp_path):
    fm, dims, _, _ = _setup(3, 4)
    LikelihoodEngine(fm, dims).dump_factors(tmp_path)
    lines = (tmp_path / "likelihood_factors.csv").read_text().splitlines()
    assert lines[0] == "k,horizontal_eigenvalue,block_logdet" and len(lines) == 5
