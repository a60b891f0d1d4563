import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatctl import numerics as nm
from heatctl.errors import InvalidInput, SingularSystemError


def hilbert(n):
    i = np.arange(n)
    return 1.0 / (i[:, None] + i[None, :] + 1.0)


def test_identity_eigenvalues():
    dec = nm.sym_eig(np.eye(3))
    np.testing.assert_allclose(dec.eigenvalues, [1, 1, 1])
    np.testing.assert_allclose(dec.eigenvectors.T @ dec.eigenvectors, np.eye(3), atol=1e-15)


def test_diagonal_and_swap():
    np.testing.assert_allclose(nm.sym_eig(np.diag([2.0, -1.0])).eigenvalues, [-1, 2])
    np.testing.assert_allclose(nm.sym_eig([[0.0, 1.0], [1.0, 0.0]]).eigenvalues, [-1, 1], atol=1e-15)


def test_rejects_non_finite():
    with pytest.raises(InvalidInput):
        nm.sym_eig([[1.0, np.nan], [np.nan, 1.0]])
    with pytest.raises(InvalidInput):
        nm.sym_matrix([[1.0, np.inf], [0.0, 1.0]])


def test_sym_matrix_symmetrizes():
    a = nm.sym_matrix([[1.0, 2.0], [0.0, 3.0]])
    assert a[0, 1] == a[1, 0] == 1.0


@pytest.mark.parametrize("n", [1, 2, 7, 20, 50])
def test_random_reconstruction(n):
    rng = np.random.default_rng(n)
    a = rng.normal(size=(n, n))
    a = a + a.T
    dec = nm.sym_eig(a)
    q, lam = dec.eigenvectors, dec.eigenvalues
    scale = np.abs(a).max()
    assert np.abs(q @ np.diag(lam) @ q.T - a).max() <= 1e-10 * scale
    assert np.abs(q.T @ q - np.eye(n)).max() <= 1e-10
    assert np.all(np.diff(lam) >= 0)
    np.testing.assert_allclose(lam, np.linalg.eigvalsh(a), atol=1e-11 * scale)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_reconstruction_property(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) * rng.choice([1e-3, 1.0, 1e3])
    a = a + a.T
    dec = nm.sym_eig(a)
    q = dec.eigenvectors
    assert np.abs(q @ np.diag(dec.eigenvalues) @ q.T - a).max() <= 1e-10 * np.abs(a).max()
    assert np.abs(q.T @ q - np.eye(n)).max() <= 1e-10


def test_block_diagonal_matrix_keeps_blocks():
    a = np.zeros((4, 4))
    a[np.ix_([0, 2], [0, 2])] = [[2.0, 1.0], [1.0, 2.0]]
    a[np.ix_([1, 3], [1, 3])] = [[5.0, 0.0], [0.0, 7.0]]
    dec = nm.sym_eig(a)
    np.testing.assert_allclose(dec.eigenvalues, [1, 3, 5, 7])


def test_graded_small_eigenvalues_relative_accuracy():
    # D A D with A well conditioned: eigenvalues span 1e-24..1, each should be
    # accurate relative to itself, not only to the largest one
    import mpmath

    rng = np.random.default_rng(11)
    b = rng.normal(size=(8, 8))
    a = b @ b.T / 8 + np.eye(8)
    d = 10.0 ** -np.arange(0, 16, 2)
    m = a * np.outer(d, d)
    lam = nm.sym_eig(m).eigenvalues
    mpmath.mp.dps = 60
    ref = sorted(float(v) for v in mpmath.eigsy(mpmath.matrix(m.tolist()))[0])
    np.testing.assert_allclose(lam, ref, rtol=1e-10)


def test_gen_eig_examples():
    assert nm.gen_eig_max(np.eye(2), np.eye(2)) == pytest.approx(1.0)
    assert nm.gen_eig_max(np.diag([4.0, 1.0]), np.diag([2.0, 1.0])) == pytest.approx(2.0)
    assert nm.gen_eig_max(np.diag([1.0, 1.0]), np.diag([1.0, 0.0])) == math.inf


def test_gen_eig_null_direction_reported():
    res = nm.gen_eig_top(np.diag([1.0, 1.0]), np.diag([1.0, 0.0]))
    assert res.null_kind == "structural"
    np.testing.assert_allclose(np.abs(res.null_direction), [0, 1])


def test_gen_eig_numerical_null():
    v = np.array([1.0, 1.0]) / math.sqrt(2)
    g = np.outer(v, v)
    res = nm.gen_eig_top(np.eye(2), g)
    assert res.value == math.inf
    assert res.null_kind == "numerical"
    assert abs(res.null_direction @ v) < 1e-8


def test_gen_eig_null_without_end_mass_is_finite():
    # g is singular but e vanishes on its kernel
    g = np.diag([1.0, 0.0])
    e = np.diag([3.0, 0.0])
    assert nm.gen_eig_max(e, g) == pytest.approx(3.0)


def test_gen_eig_order_mismatch():
    with pytest.raises(InvalidInput):
        nm.gen_eig_max(np.eye(2), np.eye(3))


@pytest.mark.parametrize("seed", range(6))
def test_gen_eig_matches_whitened_problem(seed):
    rng = np.random.default_rng(seed)
    n = 3 + seed
    a = rng.normal(size=(n, n))
    g = a @ a.T + 0.1 * np.eye(n)
    b = rng.normal(size=(n, n))
    e = b @ b.T
    w, v = np.linalg.eigh(g)
    gih = v @ np.diag(w**-0.5) @ v.T
    ref = np.linalg.eigvalsh(gih @ e @ gih)[-1]
    res = nm.gen_eig_top(e, g)
    assert res.value == pytest.approx(ref, rel=1e-8)
    z = res.vector
    assert (z @ e @ z) / (z @ g @ z) == pytest.approx(ref, rel=1e-8)


def test_gen_eig_multiprecision_agrees():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(5, 5))
    g = a @ a.T
    e = np.diag(rng.uniform(0.1, 1.0, 5))
    with nm.mp_precision(200):
        mp = nm.gen_eig_top(nm.to_mp(e), nm.to_mp(g))
    assert mp.bits == 200
    assert mp.value == pytest.approx(nm.gen_eig_max(e, g), rel=1e-10)


def test_solve_spd_examples():
    np.testing.assert_allclose(nm.solve_spd(np.eye(2), [1.0, 2.0]), [1, 2])
    np.testing.assert_allclose(nm.solve_spd(np.diag([2.0, 4.0]), [2.0, 4.0]), [1, 1])
    h = hilbert(3)
    x = nm.solve_spd(h, h.sum(axis=1))
    np.testing.assert_allclose(x, [1, 1, 1], rtol=1e-12)


def test_solve_spd_residual_contract():
    h = hilbert(8)
    rhs = np.arange(1.0, 9.0)
    x = nm.solve_spd(h, rhs)
    assert np.linalg.norm(h @ x - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_solve_spd_singular():
    with pytest.raises(SingularSystemError) as info:
        nm.solve_spd(np.diag([1.0, 0.0]), [1.0, 1.0])
    assert info.value.smallest_eigenvalue == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(SingularSystemError):
        nm.solve_spd(np.diag([1.0, -1.0]), [1.0, 1.0])


def test_mp_round_trip_exact():
    x = np.array([0.1, 1e-300, -3.5])
    with nm.mp_precision(100):
        assert np.array_equal(nm.to_float(nm.to_mp(x)), x)
