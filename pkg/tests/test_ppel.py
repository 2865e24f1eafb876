import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from hdpel.errors import ConfigurationError
from hdpel.inference.hac import KernelKind, KernelSpec
from hdpel.inference.ppel import PpelOptions, build_report, fit_ppel, psd_sqrt, write_report_csv
from hdpel.inference.projection import ProjectionRows, solve_projection
from hdpel.moments import FunctionMoments, sample_moments


def rows_for(A, targets):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return ProjectionRows(A=A, varsigma=0.1, residual_sup=np.zeros(len(targets)), targets=np.asarray(targets), l1_norms=np.abs(A).sum(axis=1))


def exp_model(x, w):
    """g = (x - exp(th0), w - th1, x w - th0 th1): nonlinear in the first coordinate."""
    n = x.size

    def fn(th):
        return np.column_stack([x - np.exp(th[0]), w - th[1], x * w - th[0] * th[1]])

    def jac(th):
        J = np.zeros((n, 3, 2))
        J[:, 0, 0] = -np.exp(th[0])
        J[:, 1, 1] = -1.0
        J[:, 2, 0] = -th[1]
        J[:, 2, 1] = -th[0]
        return J

    return FunctionMoments(fn, 2, jac_fn=jac)


@pytest.fixture
def data():
    rng = np.random.default_rng(11)
    return rng.uniform(0.5, 2.0, 60), rng.normal(size=60)


def test_linear_root(data):
    x, w = data
    m = FunctionMoments(lambda th: np.column_stack([x - th[0], w - th[1]]), 2)
    rows = rows_for([[2.0, 0.0]], [0])
    fit = fit_ppel(m, rows, np.array([1.0, 0.0]), PpelOptions(box_radius=5.0))
    assert fit.theta_tilde[0] == pytest.approx(x.mean(), abs=1e-12)
    assert np.abs((m.moments(fit.theta_full) @ rows.A.T).mean()) <= 1e-13


def test_selector_equals_direct_el(data):
    x, w = data
    m = exp_model(x, w)
    theta_hat = np.array([0.1, 0.05])
    fit = fit_ppel(m, rows_for([[1.0, 0.0, 0.0]], [0]), theta_hat, PpelOptions(box_radius=3.0))
    # just-identified EL on the selected moment solves its sample mean equation
    oracle = brentq(lambda a: np.mean(x - np.exp(a)), -3, 3, xtol=1e-14)
    assert fit.theta_tilde[0] == pytest.approx(oracle, abs=1e-9)
    assert fit.lambda_tilde[0] == pytest.approx(0.0, abs=1e-8)
    assert fit.theta_full[1] == theta_hat[1]


def test_block_limit_and_box(data):
    x, w = data
    m = exp_model(x, w)
    with pytest.raises(ConfigurationError):
        fit_ppel(m, rows_for([[1.0, 0, 0]], [0]), np.zeros(2))
    rows = rows_for(np.zeros((11, 3)), list(range(11)))
    with pytest.raises(ConfigurationError):
        fit_ppel(m, rows, np.zeros(2), PpelOptions(box_radius=1.0))


def test_boundary_warning(data):
    x, w = data
    m = exp_model(x, w)
    fit = fit_ppel(m, rows_for([[1.0, 0.0, 0.0]], [0]), np.array([-1.0, 0.0]), PpelOptions(box_radius=0.1))
    assert fit.theta_tilde[0] == pytest.approx(-0.9)
    assert any("boundary" in s for s in fit.warnings)


def test_classical_sandwich(data):
    x, w = data
    m = FunctionMoments(lambda th: np.column_stack([x - th[0], w - th[1]]), 2)
    rows = rows_for([[1.0, 0.0]], [0])
    theta = np.array([x.mean(), 0.0])
    rep = build_report(m, rows, theta[:1], theta, KernelSpec(KernelKind.PARZEN, 1e-9))
    V = np.mean((x - x.mean()) ** 2)
    assert rep.std_errors[0] == pytest.approx(np.sqrt(V / 60), rel=1e-8)
    assert rep.Jhat[0, 0] == pytest.approx(1.0 / V, rel=1e-8)
    assert rep.Mhat[0, 0] == pytest.approx(1.0 / V, rel=1e-8)


def test_psd_sqrt(rng):
    B = rng.normal(size=(4, 4))
    S = B @ B.T
    R = psd_sqrt(S)
    assert np.allclose(R @ R, S, atol=1e-10)
    Z = psd_sqrt(np.diag([1.0, -1.0]))
    assert np.array_equal(Z, np.diag([1.0, 0.0]))


@settings(max_examples=15)
@given(st.integers(0, 10**6))
def test_report_invariants(seed):
    rng = np.random.default_rng(seed)
    n = 50
    x = rng.normal(size=(n, 4)) + 0.5
    A = rng.normal(size=(4, 2))
    m = FunctionMoments(lambda th: x - (A @ th)[None, :], 2, jac_fn=lambda th: np.broadcast_to(-A, (n, 4, 2)).copy())
    theta_hat = np.linalg.lstsq(A, x.mean(axis=0), rcond=None)[0]
    rows = solve_projection(sample_moments(m, theta_hat).Gbar, [0, 1], 0.05)
    fit = fit_ppel(m, rows, theta_hat, PpelOptions(box_radius=5.0))
    rep = build_report(m, rows, fit.theta_tilde, theta_hat, ppel_fit=fit)
    for M in (rep.Jhat, rep.Mhat):
        assert np.array_equal(M, M.T)
        assert np.linalg.eigvalsh(M).min() >= -1e-10 * max(1, np.abs(M).max())
    lo90, hi90 = rep.intervals[0.9]
    lo95, hi95 = rep.intervals[0.95]
    lo99, hi99 = rep.intervals[0.99]
    assert np.all(lo99 <= lo95) and np.all(lo95 <= lo90) and np.all(hi90 <= hi95) and np.all(hi95 <= hi99)
    assert np.allclose(rep.tstats, rep.theta_tilde / rep.std_errors)


@pytest.mark.parametrize("c", [0.1, 3.0, 250.0])
def test_scale_equivariance(data, c):
    x, w = data
    base = FunctionMoments(lambda th: np.column_stack([x - th[0], w - th[1]]), 2)
    scaled = FunctionMoments(lambda th: c * np.column_stack([x - th[0], w - th[1]]), 2)
    rows = rows_for([[1.0, 0.0]], [0])
    out = []
    for m in (base, scaled):
        fit = fit_ppel(m, rows, np.array([1.0, 0.0]), PpelOptions(box_radius=5.0))
        out.append(build_report(m, rows, fit.theta_tilde, fit.theta_full, ppel_fit=fit).tstats[0])
    assert out[1] == pytest.approx(out[0], rel=1e-8)


def test_report_csv(tmp_path, data):
    x, w = data
    m = FunctionMoments(lambda th: np.column_stack([x - th[0], w - th[1]]), 2)
    rows = rows_for([[1.0, 0.0]], [0])
    rep = build_report(m, rows, [x.mean()], np.array([x.mean(), 0.0]))
    write_report_csv(rep, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "coordinate,estimate,std_error,tstat,lo_90,hi_90,lo_95,hi_95,lo_99,hi_99"
    assert len(lines) == 2
