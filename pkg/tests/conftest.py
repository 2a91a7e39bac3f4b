import numpy as np
import pytest

from lfcmesh.forward import ElasticClassStats, ForwardModel, NoiseModel, ricker
from lfcmesh.mesh_prior import load_appendix_prior


@pytest.fixture(scope="session")
def fitted_spec():
    return load_appendix_prior()


def plain_mesh(spec):
    """Offsets and interactions as tuples for the oracle module."""
    tau = [(o.di, o.dj) for o in spec.tau]
    inter = [([(o.di, o.dj) for o in lam], beta) for lam, beta in spec.interactions]
    return tau, inter


def oracle_params(fm: ForwardModel) -> dict:
    el = fm.elastic
    return dict(
        mu0=el.mu0, mu1=el.mu1, sigma0=el.sigma0, sigma1=el.sigma1,
        corr_v_range=el.corr_v_range, corr_v_support=el.corr_v_support,
        corr_h_range=el.corr_h_range, aki=fm.aki,
        near=fm.wavelet_near.samples, near_center=fm.wavelet_near.center,
        far=fm.wavelet_far.samples, far_center=fm.wavelet_far.center,
        sd_near=fm.noise.sd_near, sd_far=fm.noise.sd_far,
        noise_corr_range=fm.noise.corr_range,
    )


def small_model(wavelet_len=5, sd=0.02, **elastic) -> ForwardModel:
    """Forward model with wavelets short enough for tiny lattices."""
    return ForwardModel(
        elastic=ElasticClassStats(**elastic),
        wavelet_near=ricker(0.2, wavelet_len),
        wavelet_far=ricker(0.15, wavelet_len),
        noise=NoiseModel(sd, sd),
    )


def weak_model(wavelet_len=5) -> ForwardModel:
    """Noisy enough that small-lattice posteriors are not degenerate."""
    return small_model(wavelet_len, sd=0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Store and print one acceptance line; the summary hook repeats them at the end."""
    ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
