import subprocess
import sys

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wips import _jacobi_py, numerics
from wips.numerics import EigenError, eigendecompose_sym, log_sigmoid, make_rng, sigmoid

finite = st.floats(min_value=-700, max_value=700, allow_nan=False)


def test_sigmoid_examples():
    assert sigmoid(0.0) == 0.5
    assert abs(sigmoid(40.0) - 1.0) < 1e-15
    oracle = float(1 / (1 + mpmath.e ** 3))
    assert sigmoid(-3.0) == pytest.approx(oracle, rel=1e-15)


def test_log_sigmoid_examples():
    assert log_sigmoid(0.0) == pytest.approx(-np.log(2.0), abs=1e-15)
    assert abs(log_sigmoid(-50.0) + 50.0) < 1e-9
    oracle = float(-mpmath.log(1 + mpmath.e ** -2))
    assert log_sigmoid(2.0) == pytest.approx(oracle, rel=1e-14)


@given(finite)
def test_sigmoid_reflection(x):
    assert abs(sigmoid(x) + sigmoid(-x) - 1.0) <= 1e-15


@given(finite)
def test_log_sigmoid_bounded_and_finite(x):
    v = log_sigmoid(x)
    assert np.isfinite(v)
    assert v <= min(0.0, x)


def test_log_sigmoid_gap_at_minus_30():
    # log sigmoid(x) = x - log1p(e^x); the gap is log1p(e^-30)
    assert abs(log_sigmoid(-30.0) - (-30.0)) < 1e-12


def test_logistic_vectorized_matches_scalar(rng):
    x = rng.normal(0, 20, size=50)
    assert np.array_equal(sigmoid(x), np.array([sigmoid(v) for v in x]))
    assert np.array_equal(log_sigmoid(x), np.array([log_sigmoid(v) for v in x]))


def test_sigmoid_monotone(rng):
    x = np.sort(rng.normal(0, 10, size=1000))
    assert np.all(np.diff(sigmoid(x)) >= 0)


def test_rng_reproducible_and_streams_independent():
    a = make_rng(7, 1).standard_normal(5)
    b = make_rng(7, 1).standard_normal(5)
    c = make_rng(7, 2).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert isinstance(make_rng(2**64 - 1).bit_generator, np.random.Philox)


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_rng_rejects_out_of_range_seed(seed):
    with pytest.raises(ValueError):
        make_rng(seed)


def _sym(rng, n, scale=1.0):
    a = rng.normal(0, scale, size=(n, n))
    return (a + a.T) / 2


def test_eigen_swap_matrix():
    w, u = eigendecompose_sym(np.array([[0.0, 1.0], [1.0, 0.0]]))
    order = np.argsort(w)
    assert np.allclose(w[order], [-1.0, 1.0], atol=1e-14)
    s = 1 / np.sqrt(2)
    assert np.allclose(np.abs(u[:, order[1]]), [s, s], atol=1e-14)
    assert np.isclose(u[0, order[0]] * u[1, order[0]], -0.5, atol=1e-14)


def test_eigen_identity():
    w, u = eigendecompose_sym(np.eye(3))
    assert np.array_equal(w, np.ones(3))
    assert np.allclose(u.T @ u, np.eye(3))


@pytest.mark.parametrize("n", [1, 2, 8, 17, 32, 64])
def test_eigen_roundtrip_against_lapack(rng, n):
    h = _sym(rng, n, scale=3.0)
    w, u = eigendecompose_sym(h)
    scale = max(1.0, np.linalg.norm(h))
    assert np.linalg.norm((u * w) @ u.T - h) / scale < 1e-10
    assert np.linalg.norm(u.T @ u - np.eye(n)) < 1e-10
    # LAPACK as an independent oracle for the spectrum
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(h), atol=1e-10 * scale)


def test_eigen_repeated_and_degenerate_spectra(rng):
    q, _ = np.linalg.qr(rng.normal(size=(10, 10)))
    lam = np.array([3, 3, 3, -2, -2, 0, 0, 0, 1e-8, 5.0])
    h = (q * lam) @ q.T
    h = (h + h.T) / 2
    w, u = eigendecompose_sym(h)
    assert np.allclose(np.sort(w), np.sort(lam), atol=1e-12)
    assert np.linalg.norm(u.T @ u - np.eye(10)) < 1e-10


def test_eigen_zero_matrix():
    w, u = eigendecompose_sym(np.zeros((4, 4)))
    assert np.array_equal(w, np.zeros(4))
    assert np.array_equal(u, np.eye(4))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_eigen_property(n, seed):
    h = _sym(make_rng(seed), n)
    w, u = eigendecompose_sym(h)
    assert np.linalg.norm((u * w) @ u.T - h) / max(1, np.linalg.norm(h)) < 1e-10


@pytest.mark.parametrize(
    "bad, msg",
    [
        (np.ones((2, 3)), "square"),
        (np.array([[0.0, 1.0], [0.0, 0.0]]), "symmetric"),
        (np.array([[np.nan, 0.0], [0.0, 1.0]]), "finite"),
    ],
)
def test_eigen_rejects_bad_input(bad, msg):
    with pytest.raises(EigenError, match=msg):
        eigendecompose_sym(bad)


def test_eigen_reports_non_convergence(rng):
    with pytest.raises(EigenError, match="off-diagonal"):
        eigendecompose_sym(_sym(rng, 20), max_sweeps=1)


def test_backends_agree(rng):
    if numerics.BACKEND != "cython":
        pytest.skip("compiled extension not built")
    from wips import _jacobi_ext

    for n in (3, 9, 30):
        h = _sym(rng, n)
        w1, v1, s1, _ = _jacobi_ext.jacobi_eigh(h.copy(), 1e-12 * np.linalg.norm(h), 100)
        w2, v2, s2, _ = _jacobi_py.jacobi_eigh(h.copy(), 1e-12 * np.linalg.norm(h), 100)
        assert s1 == s2
        assert np.allclose(w1, w2, atol=1e-12)
        assert np.allclose(np.abs(v1.T @ v2), np.eye(n), atol=1e-8)


def test_pure_python_fallback_selected_by_env():
    code = "import wips.numerics as n; print(n.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code], env={"WIPS_PURE_PYTHON": "1", "PATH": ""}, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "python"
