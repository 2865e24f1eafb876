import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from hdpel.errors import ConfigurationError, InfeasibleProjectionError
from hdpel.inference.projection import default_varsigma, min_feasible_varsigma, solve_projection
from hdpel.inference.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, simplex_ub


def oracle_l1(Gbar, k, varsigma):
    """HiGHS on min |u|_1 s.t. |G'u - e_k|_inf <= varsigma, written with free u and bound t."""
    r, p = Gbar.shape
    e = np.zeros(p)
    e[k] = 1.0
    # variables (u, t): minimize sum t, -t <= u <= t
    c = np.r_[np.zeros(r), np.ones(r)]
    I = np.eye(r)
    A = np.block([[Gbar.T, np.zeros((p, r))], [-Gbar.T, np.zeros((p, r))], [I, -I], [-I, -I]])
    b = np.r_[varsigma + e, varsigma - e, np.zeros(2 * r)]
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * (2 * r), method="highs")
    return res


def test_identity_shrinks():
    rows = solve_projection(np.eye(4), [0], 0.1)
    assert np.allclose(rows.A[0], [0.9, 0, 0, 0], atol=1e-12)
    assert rows.residual_sup[0] == pytest.approx(0.1)


def test_large_varsigma_gives_zero():
    rows = solve_projection(np.eye(3), [1, 2], 1.0)
    assert np.array_equal(rows.A, np.zeros((2, 3)))
    assert rows.m == 2


def test_random_6x4_matches_oracle():
    G = np.random.default_rng(0).normal(size=(6, 4))
    rows = solve_projection(G, [0, 1, 2, 3], 0.05)
    for k in range(4):
        assert rows.l1_norms[k] == pytest.approx(oracle_l1(G, k, 0.05).fun, abs=1e-6)


@given(st.integers(0, 10**6), st.integers(1, 12), st.integers(1, 8), st.floats(0.01, 0.5))
def test_matches_oracle(seed, r, p, varsigma):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(r, p))
    k = int(rng.integers(p))
    ref = oracle_l1(G, k, varsigma)
    if ref.status == 2:
        with pytest.raises(InfeasibleProjectionError) as exc:
            solve_projection(G, [k], varsigma)
        assert exc.value.min_varsigma > varsigma - 1e-9
        return
    rows = solve_projection(G, [k], varsigma)
    assert rows.l1_norms[0] == pytest.approx(ref.fun, abs=1e-6)
    assert rows.residual_sup[0] <= varsigma + 1e-7


def test_infeasible_reports_minimum():
    G = np.array([[1.0, 1.0], [2.0, 2.0]])  # G'u has equal entries, so e_1 is at distance 1/2
    with pytest.raises(InfeasibleProjectionError) as exc:
        solve_projection(G, [0], 0.1)
    assert exc.value.min_varsigma == pytest.approx(0.5)
    assert min_feasible_varsigma(G, 0) == pytest.approx(0.5)
    assert solve_projection(G, [0], 0.5 + 1e-9).residual_sup[0] <= 0.5 + 1e-7


def test_bad_inputs():
    with pytest.raises(ConfigurationError):
        solve_projection(np.eye(2), [0], 0.0)
    with pytest.raises(ConfigurationError):
        solve_projection(np.eye(2), [2], 0.1)


def test_default_varsigma():
    assert default_varsigma(1000) == pytest.approx(0.02)


@given(st.integers(0, 10**6))
def test_no_cheaper_feasible_perturbation(seed):
    rng = np.random.default_rng(seed)
    r, p = 8, 5
    G = rng.normal(size=(r, p))
    vs = 0.2
    rows = solve_projection(G, [0], vs)
    u = rows.A[0]
    e = np.eye(p)[0]
    for _ in range(100):
        v = u + rng.normal(scale=10 ** rng.uniform(-4, -1), size=r)
        if np.abs(G.T @ v - e).max() <= vs:
            assert np.abs(v).sum() >= np.abs(u).sum() - 1e-9


@given(st.integers(0, 10**6), st.integers(1, 8), st.integers(1, 8))
def test_simplex_matches_highs(seed, m, nx):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, nx))
    b = rng.normal(size=m)
    c = rng.normal(size=nx)
    res = simplex_ub(c, A, b)
    ref = linprog(c, A_ub=A, b_ub=b, bounds=[(0, None)] * nx, method="highs")
    assert res.status == {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}[ref.status]
    if ref.status == 0:
        assert res.fun == pytest.approx(ref.fun, abs=1e-8)
        assert np.all(A @ res.x <= b + 1e-8) and np.all(res.x >= 0)
