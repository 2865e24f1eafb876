import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from hdpel.dual import DualOptions, dual_objective, kkt_eta, maximize_dual, model_profile_gradient, profile_gradient
from hdpel.errors import NumericalEvaluationError, UnboundedDualError
from hdpel.moments import FunctionMoments
from hdpel.penalties import lasso


def bisect(f, lo, hi, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def el_root(g):
    """1-D EL multiplier: root of sum g/(1 + lam g) on the open feasible interval."""
    lo, hi = -1.0 / g.max(), -1.0 / g.min()
    w = hi - lo
    return bisect(lambda lam: np.sum(g / (1 + lam * g)), lo + 1e-12 * w, hi - 1e-12 * w)


def penalized_root(g, nu):
    """1-D Lasso-penalized multiplier via the subgradient condition."""
    gbar = g.mean()
    if abs(gbar) <= nu:
        return 0.0
    s = np.sign(gbar)
    lo, hi = (0.0, -1.0 / g.min()) if s > 0 else (-1.0 / g.max(), 0.0)
    w = hi - lo
    a, b = (lo, hi - 1e-12 * w) if s > 0 else (lo + 1e-12 * w, hi)
    return bisect(lambda lam: np.mean(g / (1 + lam * g)) - nu * s, a, b)


def mixed_sample(rng, n):
    g = rng.normal(size=n) + rng.normal()
    g[0], g[1] = abs(g[0]) + 0.1, -abs(g[1]) - 0.1
    return g


def test_mean_zero_gives_zero():
    sol = maximize_dual(np.array([-1.0, 0.5, 0.5]), 0.0)
    assert sol.lam[0] == pytest.approx(0.0, abs=1e-12)
    assert sol.objective == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(sol.weights, 1 / 3)


def test_three_point_bisection():
    g = np.array([-0.5, 0.2, 0.6])
    sol = maximize_dual(g, 0.0)
    assert sol.converged
    assert sol.lam[0] == pytest.approx(el_root(g), abs=1e-10)


def test_large_nu_zero():
    g = np.array([-0.5, 0.2, 0.6])
    nu = abs(g.mean()) + 0.01
    sol = maximize_dual(g, lasso(nu))
    assert sol.lam[0] == 0.0
    grid = np.linspace(-1.9, 1.9, 3801)
    vals = [dual_objective(g[:, None], np.array([x]), nu) for x in grid]
    assert max(vals) <= sol.objective + 1e-15


@given(st.integers(0, 10**6), st.integers(3, 10))
def test_bisection_oracle(seed, n):
    g = mixed_sample(np.random.default_rng(seed), n)
    sol = maximize_dual(g, 0.0)
    assert abs(sol.lam[0] - el_root(g)) <= 1e-7


@given(st.integers(0, 10**6), st.integers(3, 15), st.floats(0.0, 0.5))
def test_penalized_bisection_oracle(seed, n, nu):
    g = mixed_sample(np.random.default_rng(seed), n)
    sol = maximize_dual(g, nu)
    assert abs(sol.lam[0] - penalized_root(g, nu)) <= 1e-7


def test_errors():
    with pytest.raises(UnboundedDualError):
        maximize_dual(np.column_stack([np.ones(5) * np.r_[1, -1, 1, -1, 1], np.zeros(5)]), 0.0)
    g = np.ones((4, 2))
    g[1, 1] = np.nan
    with pytest.raises(NumericalEvaluationError) as exc:
        maximize_dual(g, 0.1)
    assert exc.value.t == 1


def test_kkt_eta_examples(rng):
    g = rng.normal(size=(20, 4))
    assert np.allclose(kkt_eta(g, np.zeros(4)), g.mean(axis=0))
    sol = maximize_dual(g, 0.0)
    assert np.abs(sol.eta).max() <= 1e-8
    g2 = rng.normal(size=(30, 2)) + [0.6, 0.1]
    sol = maximize_dual(g2, 0.05)
    lam = np.where(np.abs(sol.lam) > 1e-8, sol.lam, 0.0)
    oracle = np.zeros(2)
    for t in range(30):
        oracle += g2[t] / (1 + lam @ g2[t])
    assert np.allclose(sol.eta, oracle / 30, atol=1e-14)


def solve_or_skip(g, nu):
    try:
        return maximize_dual(g, nu)
    except UnboundedDualError:
        assume(False)


def test_outside_hull_unbounded(rng):
    g = rng.normal(size=(10, 2)) ** 2 + 0.1
    with pytest.raises(UnboundedDualError):
        maximize_dual(g, 0.0)
    assert maximize_dual(g, 10.0).lam.tolist() == [0.0, 0.0]


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n, r = rng.integers(15, 40), rng.integers(1, 6)
    g = rng.normal(size=(n, r)) + rng.normal(scale=0.3, size=r)
    nu = float(rng.choice([0.0, 0.01, 0.05, 0.2]))
    return g, nu


@given(st.integers(0, 10**6))
def test_solution_invariants(seed):
    g, nu = random_instance(seed)
    sol = solve_or_skip(g, nu)
    assert sol.converged
    n = g.shape[0]
    assert np.all(1 + g @ sol.lam > 1.0 / n)
    assert np.all(sol.weights > 0)
    act = np.abs(sol.lam) > 1e-8
    assert np.all(np.abs(sol.eta[act] - nu * np.sign(sol.lam[act])) <= 1e-7)
    assert np.all(np.abs(sol.eta[~act]) <= nu + 1e-7)
    if nu == 0.0:
        assert sol.weights.sum() == pytest.approx(1.0, abs=1e-8)


@given(st.integers(0, 10**6))
def test_concavity_certificate(seed):
    g, nu = random_instance(seed)
    sol = solve_or_skip(g, nu)
    rng = np.random.default_rng(seed + 1)
    for _ in range(20):
        d = rng.normal(size=sol.lam.size) * 10 ** rng.uniform(-6, -1)
        assert dual_objective(g, sol.lam + d, nu) <= sol.objective + 1e-12


def test_zero_mean_equal_weights(rng):
    g = rng.normal(size=(12, 3))
    g -= g.mean(axis=0)
    sol = maximize_dual(g, 0.0)
    assert np.abs(sol.lam).max() <= 1e-12
    assert np.allclose(sol.weights, 1 / 12)


@given(st.integers(0, 10**6))
def test_monotone_in_nu(seed):
    g, _ = random_instance(seed)
    l1 = np.abs(maximize_dual(g, 0.02).lam).sum()
    l2 = np.abs(maximize_dual(g, 0.1).lam).sum()
    assert l2 <= l1 + 1e-8


def test_both_routes_agree(rng):
    g = rng.normal(size=(40, 6)) + 0.2
    a = maximize_dual(g, 0.03, opts=DualOptions(method="interior-point"))
    b = maximize_dual(g, 0.03, opts=DualOptions(method="active-set"))
    assert np.allclose(a.lam, b.lam, atol=1e-8)


# -- envelope gradient


def linear_model(seed):
    rng = np.random.default_rng(seed)
    n, r, p = rng.integers(15, 30), rng.integers(2, 5), 2
    x = rng.normal(size=(n, r)) + 0.3
    A = rng.normal(size=(r, p))
    fn = lambda th: x - (A @ th)[None, :]  # noqa: E731
    jac = lambda th: np.broadcast_to(-A, (n, r, p)).copy()  # noqa: E731
    return FunctionMoments(fn, p, jac_fn=jac), rng.normal(size=p) * 0.2


def profiled(model, theta, nu):
    return solve_or_skip(model.moments(theta), nu).objective


@given(st.integers(0, 10**6), st.sampled_from([0.0, 0.02, 0.1]))
def test_profile_gradient_finite_differences(seed, nu):
    model, theta = linear_model(seed)
    sol = solve_or_skip(model.moments(theta), nu)
    grad = profile_gradient(model.jacobians(theta), sol)
    h = 1e-5
    fd = np.array([(profiled(model, theta + h * e, nu) - profiled(model, theta - h * e, nu)) / (2 * h) for e in np.eye(model.p)])
    assert np.linalg.norm(grad - fd) <= 1e-3 * max(np.linalg.norm(fd), 1e-6) + 1e-9
    assert np.allclose(model_profile_gradient(model, theta, sol), grad, atol=1e-14)


def test_profile_gradient_zero_multiplier():
    g = np.array([[-1.0], [0.5], [0.5]])
    sol = maximize_dual(g, 0.0)
    assert np.allclose(profile_gradient(-np.ones((3, 1, 1)), sol), 0.0, atol=1e-12)


def test_profile_gradient_mean_model():
    x = np.array([0.3, -0.2, 1.1, 0.4, -0.5])
    theta = 0.35
    g = (x - theta)[:, None]
    sol = maximize_dual(g, 0.0)
    lam = el_root(x - theta)
    # d/dtheta mean log(1 + lam (x - theta)) = -lam mean 1/(1 + lam (x - theta)) = -lam
    assert profile_gradient(-np.ones((5, 1, 1)), sol)[0] == pytest.approx(-lam, abs=1e-9)
