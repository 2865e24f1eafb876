import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hdpel.errors import ConfigurationError, UndefinedRowError, UnstableSystemError
from hdpel.simlab.connectedness import spectral_radius, variance_decomposition


def test_no_propagation_identity():
    out = variance_decomposition(np.zeros((4, 4)), np.eye(4), 5)
    for h, (D, cols) in out.items():
        assert np.array_equal(D, np.eye(4))
        assert np.array_equal(cols, np.ones(4))
    assert sorted(out) == [1, 2, 3, 4, 5]


def test_two_by_two_hand_expansion():
    a, b, c, d = 0.5, 0.2, 0.1, 0.3
    s11, s12, s22 = 1.0, 0.3, 2.0
    G = np.array([[a, b], [c, d]])
    S = np.array([[s11, s12], [s12, s22]])
    # ell = 0 term: (Sigma_ij)^2 / sigma_jj; ell = 1 term uses G Sigma
    GS = [[a * s11 + b * s12, a * s12 + b * s22], [c * s11 + d * s12, c * s12 + d * s22]]
    num = [[(S[i][j] ** 2 + GS[i][j] ** 2) / S[j][j] for j in range(2)] for i in range(2)]
    GSG = [
        a * a * s11 + 2 * a * b * s12 + b * b * s22,
        c * c * s11 + 2 * c * d * s12 + d * d * s22,
    ]
    den = [s11 + GSG[0], s22 + GSG[1]]
    raw = [[num[i][j] / den[i] for j in range(2)] for i in range(2)]
    expect = np.array([[raw[i][j] / (raw[i][0] + raw[i][1]) for j in range(2)] for i in range(2)])
    D, cols = variance_decomposition(G, S, [2])[2]
    assert np.abs(D - expect).max() <= 1e-12
    assert np.abs(cols - expect.sum(axis=0)).max() <= 1e-12


def test_unstable_reports_radius():
    G = np.array([[1.2, 0.0], [0.0, 0.1]])
    with pytest.raises(UnstableSystemError) as exc:
        variance_decomposition(G, np.eye(2), 2)
    assert exc.value.spectral_radius == pytest.approx(1.2)
    assert spectral_radius(G) == pytest.approx(1.2)


def test_degenerate_row_named():
    with pytest.raises(UndefinedRowError) as exc:
        variance_decomposition(np.zeros((3, 3)), np.diag([1.0, 0.0, 1.0]), 2)
    assert exc.value.row == 1


def test_invalid_sigma():
    with pytest.raises(ConfigurationError):
        variance_decomposition(np.zeros((2, 2)), np.array([[1.0, 2.0], [2.0, 1.0]]), 1)
    with pytest.raises(ConfigurationError):
        variance_decomposition(np.zeros((2, 2)), np.array([[1.0, 0.1], [0.0, 1.0]]), 1)
    with pytest.raises(ConfigurationError):
        variance_decomposition(np.zeros((2, 2)), np.eye(3), 1)


@given(st.integers(0, 10**6), st.integers(1, 8), st.integers(1, 12))
def test_rows_are_distributions(seed, d, H):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(d, d))
    G *= 0.9 / max(spectral_radius(G), 1e-3)
    B = rng.normal(size=(d, d))
    S = B @ B.T + 0.1 * np.eye(d)
    for h, (D, cols) in variance_decomposition(G, S, H).items():
        assert np.all(D >= 0) and np.all(D <= 1)
        assert np.abs(D.sum(axis=1) - 1.0).max() <= 4 * np.finfo(float).eps
        assert np.allclose(cols, D.sum(axis=0))
        assert cols.sum() == pytest.approx(d)
