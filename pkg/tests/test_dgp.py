import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_discrete_lyapunov

from hdpel.errors import ConfigurationError
from hdpel.simlab.dgp import (
    Case,
    DgpConfig,
    Family,
    bekk_design,
    bekk_offdiag_mask,
    bekk_variance_step,
    gen_lp,
    gen_mgarch,
    gen_shock_series,
    gen_var1,
    lp_true_theta,
    make_rng,
    var_design,
    var_noise_cov,
)


def test_case_covariances():
    S = var_noise_cov(10, Case.II)
    assert S[0, 2] == pytest.approx(0.04)
    assert S[0, 3] == pytest.approx(0.008)
    assert np.array_equal(var_noise_cov(4, "I"), np.eye(4))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        DgpConfig(Family.VAR1, 5, 3)
    with pytest.raises(ValueError):
        Case("III")


@given(st.integers(0, 10**6), st.sampled_from([Case.I, Case.II]), st.integers(2, 12))
def test_var_design_stable_sparse_snr(seed, case, d):
    cfg = DgpConfig(Family.VAR1, 50, d, case=case, seed=seed)
    G = var_design(cfg, make_rng(seed))
    assert np.max(np.abs(np.linalg.eigvals(G))) < 1
    assert np.count_nonzero(G) == max(1, round(0.1 * d * d))
    S = var_noise_cov(d, case)
    gamma = solve_discrete_lyapunov(G, S)
    signal = np.trace(G @ gamma @ G.T)
    assert signal / np.trace(S) == pytest.approx(2.0, rel=1e-6)


def test_var_seeded_determinism():
    cfg = DgpConfig(Family.VAR1, 60, 5, seed=9)
    a, ta = gen_var1(cfg)
    b, tb = gen_var1(cfg)
    assert np.array_equal(a, b) and np.array_equal(ta, tb)
    c, _ = gen_var1(DgpConfig(Family.VAR1, 60, 5, seed=10))
    assert not np.array_equal(a, c)


def test_var_residual_covariance():
    cfg = DgpConfig(Family.VAR1, 50000, 4, case=Case.II, seed=2)
    z, theta0 = gen_var1(cfg)
    G = theta0.reshape(4, 4, order="F")
    e = z[1:] - z[:-1] @ G.T
    assert np.abs(np.cov(e.T, bias=True) - var_noise_cov(4, Case.II)).max() <= 0.02


def test_streams_are_independent_of_order():
    a = make_rng(5, 3).normal(size=4)
    make_rng(5, 1).normal(size=100)
    assert np.array_equal(a, make_rng(5, 3).normal(size=4))
    assert not np.array_equal(a, make_rng(5, 2).normal(size=4))


def test_lp_truth():
    th = lp_true_theta(horizons=1, lags=4)
    k = 14
    assert th[1] == 0.5
    assert th[k + 1] == pytest.approx(0.5 * 0.5 + 0.2 * 0.5)


def test_lp_simulation():
    cfg = DgpConfig(Family.LP, 20000, 2, seed=1, horizons=2, lags=1)
    data, theta0 = gen_lp(cfg)
    assert data.shape == (20000, 3)
    s = data[:, 2]
    e = data[1:, :2] - data[:-1, :2] @ np.array([[0.5, 0.2], [0.0, 0.5]]).T - np.outer(s[1:], [0.5, 0.5])
    assert np.corrcoef(e.T)[0, 1] == pytest.approx(0.5, abs=0.03)
    with pytest.raises(ConfigurationError):
        gen_lp(DgpConfig(Family.LP, 100, 2), shock_series=np.zeros(50))


def test_shock_surrogate_regimes():
    s = gen_shock_series(200000, make_rng(0), (0.077, 0.012), 0.6)
    assert s[:120000].std() == pytest.approx(0.077, rel=0.02)
    assert s[120000:].std() == pytest.approx(0.012, rel=0.02)


def test_bekk_design_cases():
    C, D, B = bekk_design(DgpConfig(Family.MGARCH, 50, 10))
    assert np.array_equal(D, 0.6 * np.eye(10))
    assert np.array_equal(C, np.eye(10)) and np.array_equal(B, 0.6 * np.eye(10))
    _, D2, _ = bekk_design(DgpConfig(Family.MGARCH, 50, 10, case=Case.II))
    off = D2[~np.eye(10, dtype=bool)]
    assert set(np.unique(off)) == {0.0, 0.1}
    assert np.count_nonzero(off) == 9
    assert np.array_equal(bekk_offdiag_mask(10, 0.1, 3), bekk_offdiag_mask(10, 0.1, 3))


def test_bekk_step_without_history():
    C, D, B = np.eye(3), 0.6 * np.eye(3), 0.6 * np.eye(3)
    H = np.diag([1.0, 2.0, 3.0])
    assert np.allclose(bekk_variance_step(H, np.zeros(3), C, D, B), np.eye(3) + B @ H @ B.T)


@settings(max_examples=10)
@given(st.integers(0, 10**6))
def test_mgarch_long_path_finite(seed):
    y, theta0, flagged = gen_mgarch(DgpConfig(Family.MGARCH, 3000, 4, seed=seed, case=Case.II))
    assert np.all(np.isfinite(y))
    assert np.all(np.isfinite(np.cov(y.T)))
    assert not flagged
    assert theta0.size == 10 + 32
