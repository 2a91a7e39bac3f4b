import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfcmesh import oracles
from lfcmesh.forward import (
    ElasticClassStats, ForwardConfigError, ForwardModel, NoiseModel, SeismicCube, Wavelet,
    contrast_operator, convolution_matrix, read_cube, read_wavelet, ricker, sample_elastic,
    synthesize_data, synthesize_mean, write_cube, write_wavelet,
)
from lfcmesh.lattice import GridDims, LfcField
from lfcmesh.likelihood import LikelihoodEngine

from conftest import small_model


def test_contrast_operator():
    D = contrast_operator(4)
    assert np.allclose(D @ np.full(4, 3.0), [3, 0, 0, 0])
    assert np.allclose(D @ np.zeros(4), 0)
    step = np.array([0, 0, 2.0, 2.0])
    assert np.allclose(D @ step, [0, 0, 2, 0])


def test_ricker_properties():
    w = ricker(0.1, 41)
    assert w.center == 20 and w.samples[20] == 1.0
    assert np.allclose(w.samples, w.samples[::-1])
    assert abs(ricker(0.1, 201).samples.sum()) < 1e-6
    for bad in [(0.1, 4), (0.6, 5), (0.0, 5)]:
        with pytest.raises(ForwardConfigError):
            ricker(*bad)


def test_convolution_matrix_matches_direct():
    w = ricker(0.15, 7)
    x = np.random.default_rng(0).normal(size=9)
    assert np.allclose(convolution_matrix(w, 9) @ x, oracles.direct_convolve_same(x, w.samples, w.center))
    with pytest.raises(ForwardConfigError):
        convolution_matrix(ricker(0.15, 19), 9)


def test_synthesize_mean_zero_and_spike():
    fm = small_model(wavelet_len=7)
    m, n = 9, 3
    assert np.all(synthesize_mean(fm, np.zeros((m, n, 2))).values == 0)
    spike = np.zeros((m, n, 2))
    spike[4:, 1, 0] = 1.0  # one contrast at row 5 in column 2
    out = synthesize_mean(fm, spike).values
    for s, w in enumerate((fm.wavelet_near, fm.wavelet_far)):
        want = fm.aki[s, 0] * oracles.direct_convolve_same(np.eye(m)[4], w.samples, w.center)
        assert np.allclose(out[:, 1, s], want)
        assert out[np.argmax(np.abs(out[:, 1, s])), 1, s] == pytest.approx(fm.aki[s, 0])
    assert np.all(out[:, [0, 2]] == 0)


def test_delta_wavelet_returns_aki_of_spike():
    fm = ForwardModel(wavelet_near=Wavelet.delta(), wavelet_far=Wavelet.delta())
    spike = np.zeros((5, 2, 2))
    spike[2:, 0] = [3.0, 0.5]
    out = synthesize_mean(fm, spike).values
    assert np.allclose(out[2, 0], fm.aki @ [3.0, 0.5])
    assert np.count_nonzero(out) == 2


def test_synthesize_mean_matches_dense_operator():
    fm = small_model(wavelet_len=5)
    m, n = 4, 3
    x = np.random.default_rng(2).normal(size=(m, n, 2))
    F = oracles.forward_matrix(m, n, fm.aki, fm.wavelet_near.samples, fm.wavelet_near.center,
                               fm.wavelet_far.samples, fm.wavelet_far.center)
    assert np.allclose(synthesize_mean(fm, x).values.reshape(-1), F @ x.reshape(-1))


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_linearity(a, b, seed):
    fm = small_model()
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 6, 4, 2)) * 100
    lhs = synthesize_mean(fm, a * x + b * y).values
    rhs = a * synthesize_mean(fm, x).values + b * synthesize_mean(fm, y).values
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


def test_column_locality():
    fm = small_model()
    rng = np.random.default_rng(3)
    x = rng.normal(size=(6, 4, 2))
    y = x.copy()
    y[:, 2] += rng.normal(size=(6, 2))
    diff = synthesize_mean(fm, y).values - synthesize_mean(fm, x).values
    assert np.all(diff[:, [0, 1, 3]] == 0) and np.any(diff[:, 2] != 0)


def test_sample_elastic_degenerate_limit():
    eps = ((1e-20, 0.0), (0.0, 1e-20))
    fm = ForwardModel(elastic=ElasticClassStats(sigma0=eps, sigma1=eps, corr_v_range=0, corr_h_range=0))
    k = LfcField(np.random.default_rng(0).integers(0, 2, (5, 4)))
    m = sample_elastic(fm, k, 1)
    want = np.where(k.values[..., None] == 1, fm.elastic.mu1, fm.elastic.mu0)
    assert np.allclose(m, want, atol=1e-6)


def test_sample_elastic_moments():
    fm = ForwardModel(elastic=ElasticClassStats(corr_v_range=0, corr_h_range=3))
    k = LfcField(np.zeros((2, 200), dtype=int))
    rng = np.random.default_rng(4)
    draws = np.stack([sample_elastic(fm, k, rng) for _ in range(500)])  # (500, 2, 200, 2)
    sd = np.sqrt(np.diag(fm.elastic.cov(0)))
    mean = draws.mean(axis=(0, 1, 2))
    n_eff = draws.shape[0] * 2 * 200 / 8  # generous: horizontal correlation shrinks n
    assert np.all(np.abs(mean - fm.elastic.mu0) < 3 * sd / np.sqrt(n_eff))
    a, b = draws[:, :, :-1, 0], draws[:, :, 1:, 0]
    cov = np.mean((a - a.mean()) * (b - b.mean()))
    want = np.exp(-1 / 3) * sd[0] ** 2
    assert abs(cov - want) < 0.05 * sd[0] ** 2


def test_synthesize_data_degenerate_equals_mean():
    eps = ((0.0, 0.0), (0.0, 0.0))
    fm = small_model(sd=0.0, sigma0=eps, sigma1=eps)
    k = LfcField(np.random.default_rng(1).integers(0, 2, (6, 3)))
    d, mfield = synthesize_data(fm, k, 2)
    means = np.where(k.values[..., None] == 1, fm.elastic.mu1, fm.elastic.mu0)
    assert np.allclose(d.values, synthesize_mean(fm, means).values, atol=1e-9)


def test_synthesize_data_deterministic():
    fm = small_model()
    k = LfcField(np.random.default_rng(1).integers(0, 2, (6, 3)))
    a, _ = synthesize_data(fm, k, 9)
    b, _ = synthesize_data(fm, k, 9)
    assert np.array_equal(a.values, b.values)


def test_data_moments_match_likelihood_module():
    fm = small_model(wavelet_len=5)
    dims = GridDims(5, 3)
    k = LfcField(np.random.default_rng(0).integers(0, 2, dims.shape))
    engine = LikelihoodEngine(fm, dims)
    rng = np.random.default_rng(7)
    draws = np.stack([synthesize_data(fm, k, rng)[0].column_matrix() for _ in range(4000)])
    mean = engine.mean(k)
    var = np.diag(engine.covariance()).reshape(dims.n, 2 * dims.m).T
    se = np.sqrt(var / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se)
    emp_var = draws.var(axis=0)
    assert np.all(np.abs(emp_var / var - 1) < 4 * np.sqrt(2 / len(draws)))


def test_file_round_trips(tmp_path):
    w = ricker(0.1, 9)
    write_wavelet(tmp_path / "w.txt", w)
    w2 = read_wavelet(tmp_path / "w.txt")
    assert w2.center == w.center and np.array_equal(w2.samples, w.samples)
    cube = SeismicCube(GridDims(3, 2), np.random.default_rng(0).normal(size=(3, 2, 2)))
    write_cube(tmp_path / "c.txt", cube)
    lines = (tmp_path / "c.txt").read_text().splitlines()
    assert lines[0] == "3 2" and len(lines) == 7 and all(len(l.split()) == 2 for l in lines[1:])
    assert np.array_equal(read_cube(tmp_path / "c.txt").values, cube.values)


def test_config_errors():
    with pytest.raises(ForwardConfigError):
        ElasticClassStats(sigma0=((1.0, 2.0), (2.0, 1.0)))
    with pytest.raises(ForwardConfigError):
        NoiseModel(-1.0, 1.0)
    with pytest.raises(ForwardConfigError):
        Wavelet(np.array([1.0, np.nan]), 0)
    with pytest.raises(ForwardConfigError):
        synthesize_mean(ForwardModel(), np.zeros((5, 2, 2)))  # default wavelet too long
