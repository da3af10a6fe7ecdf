import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orthomerge import linalg
from orthomerge.errors import DegenerateColumn, ShapeMismatch


def test_svd_diagonal():
    res = linalg.svd(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(res.s, [3.0, 1.0], atol=1e-14)


def test_svd_identity():
    np.testing.assert_allclose(linalg.svd(np.eye(3)).s, [1.0, 1.0, 1.0], atol=1e-14)


def test_svd_random_reconstruction():
    a = np.random.default_rng(5).standard_normal((5, 3))
    u, s, vt = linalg.svd(a)
    assert np.linalg.norm(u * s @ vt - a) < 1e-8
    np.testing.assert_allclose(u.T @ u, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(vt @ vt.T, np.eye(3), atol=1e-10)


def test_svd_wide_matches_numpy():
    a = np.random.default_rng(1).standard_normal((3, 7))
    u, s, vt = linalg.svd(a)
    assert u.shape == (3, 3) and vt.shape == (3, 7)
    np.testing.assert_allclose(s, np.linalg.svd(a, compute_uv=False), rtol=1e-12)
    assert np.linalg.norm(u * s @ vt - a) < 1e-8 * max(1.0, np.linalg.norm(a))


def test_svd_rank_deficient():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 4))
    u, s, vt = linalg.svd(a)
    assert s[2] < 1e-12 and s[3] < 1e-12
    np.testing.assert_allclose(u.T @ u, np.eye(4), atol=1e-10)
    assert np.linalg.norm(u * s @ vt - a) < 1e-8 * np.linalg.norm(a)


def test_svd_zero_matrix():
    u, s, vt = linalg.svd(np.zeros((3, 2)))
    np.testing.assert_array_equal(s, [0.0, 0.0])
    np.testing.assert_allclose(u.T @ u, np.eye(2), atol=1e-12)


def test_svd_rejects_nonfinite():
    with pytest.raises(ValueError):
        linalg.svd(np.array([[1.0, np.nan]]))


@settings(max_examples=60, deadline=None)
@given(m=st.integers(1, 16), d=st.integers(1, 16), seed=st.integers(0, 2**32 - 1),
       scale=st.floats(1e-3, 1e3))
def test_svd_reconstruction_property(m, d, seed, scale):
    a = scale * np.random.default_rng(seed).standard_normal((m, d))
    u, s, vt = linalg.svd(a)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    assert np.linalg.norm(u * s @ vt - a) / max(1.0, np.linalg.norm(a)) <= 1e-8
    np.testing.assert_allclose(s, np.linalg.svd(a, compute_uv=False), rtol=1e-9, atol=1e-12)


def test_svd_reconstruction_thousand_matrices():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        m, d = rng.integers(1, 17, size=2)
        a = rng.standard_normal((m, d))
        u, s, vt = linalg.svd(a)
        worst = max(worst, np.linalg.norm(u * s @ vt - a) / max(1.0, np.linalg.norm(a)))
    assert worst <= 1e-8


def test_polar_already_orthonormal():
    q0 = linalg.sample_stiefel(5, 3, seed=4)
    q, p = linalg.polar_decompose(q0)
    np.testing.assert_allclose(q, q0, atol=1e-8)
    np.testing.assert_allclose(p, np.eye(3), atol=1e-8)


def test_polar_scaled_identity():
    q, p = linalg.polar_decompose(2.0 * np.eye(2))
    np.testing.assert_allclose(q, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(p, 2.0 * np.eye(2), atol=1e-12)


def test_polar_random_reconstruction():
    a = np.random.default_rng(9).standard_normal((4, 3))
    q, p = linalg.polar_decompose(a)
    assert np.linalg.norm(q @ p - a) < 1e-8


def test_polar_rejects_wide():
    with pytest.raises(ShapeMismatch):
        linalg.polar_decompose(np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(d=st.integers(1, 6), extra=st.integers(0, 6), seed=st.integers(0, 2**32 - 1))
def test_polar_p_equals_gram_sqrt(d, extra, seed):
    a = np.random.default_rng(seed).standard_normal((d + extra, d))
    q, p = linalg.polar_decompose(a)
    evals, evecs = np.linalg.eigh(a.T @ a)
    root = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T
    np.testing.assert_allclose(p, root, atol=1e-7)
    np.testing.assert_allclose(q.T @ q, np.eye(d), atol=1e-8)
    np.testing.assert_allclose(p, p.T, atol=1e-10)


def test_gram_examples():
    np.testing.assert_allclose(linalg.gram(linalg.sample_stiefel(6, 3, 1)), np.eye(3), atol=1e-12)
    np.testing.assert_array_equal(linalg.gram(np.array([[1.0, 1.0], [0.0, 1.0]])),
                                  [[1.0, 1.0], [1.0, 2.0]])
    np.testing.assert_array_equal(linalg.gram(np.zeros((3, 2))), np.zeros((2, 2)))


def test_column_angles_examples():
    np.testing.assert_allclose(linalg.column_angles(np.eye(3)), [90.0, 90.0, 90.0])
    np.testing.assert_allclose(linalg.column_angles(np.array([[1.0, 1.0], [0.0, 1.0]])), [45.0])
    np.testing.assert_allclose(linalg.column_angles(np.array([[1.0, -1.0], [0.0, 0.0]])), [180.0])


def test_column_angles_parallel_no_nan():
    a = np.array([[1.0, 1.0 + 1e-16], [1e-9, 1e-9]])
    out = linalg.column_angles(a)
    assert np.all(np.isfinite(out)) and out[0] < 1e-3


def test_column_angles_degenerate():
    a = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(DegenerateColumn) as info:
        linalg.column_angles(a)
    assert info.value.indices == [1]
    np.testing.assert_allclose(linalg.column_angles(a, skip_degenerate=True), [90.0])


@settings(max_examples=40, deadline=None)
@given(m=st.integers(2, 12), seed=st.integers(0, 2**32 - 1), data=st.data())
def test_orthonormal_columns_are_perpendicular(m, seed, data):
    d = data.draw(st.integers(2, m))
    angles = linalg.column_angles(linalg.sample_stiefel(m, d, seed))
    assert angles.size == d * (d - 1) // 2
    assert np.max(np.abs(angles - 90.0)) < 1e-6


def test_frobenius_inner():
    a = np.random.default_rng(0).standard_normal((3, 2))
    assert linalg.frobenius_inner(np.eye(2), np.eye(2)) == 2.0
    assert linalg.frobenius_inner(a, np.zeros_like(a)) == 0.0
    assert linalg.frobenius_inner(a, a) == pytest.approx(np.linalg.norm(a) ** 2, rel=1e-14)
    with pytest.raises(ShapeMismatch):
        linalg.frobenius_inner(a, a.T)


def test_stiefel_examples():
    q = linalg.sample_stiefel(4, 2, seed=7)
    assert np.abs(q.T @ q - np.eye(2)).max() < 1e-10
    assert abs(abs(linalg.sample_stiefel(1, 1, seed=3)[0, 0]) - 1.0) < 1e-15
    np.testing.assert_array_equal(linalg.sample_stiefel(8, 3, 11), linalg.sample_stiefel(8, 3, 11))


def test_stiefel_rejects_bad_shape():
    with pytest.raises(ShapeMismatch):
        linalg.sample_stiefel(2, 3, 0)


def test_stiefel_pair_inner_mean_zero():
    rng = np.random.default_rng(123)
    a = linalg.sample_stiefel_batch(10_000, 16, 4, rng)
    b = linalg.sample_stiefel_batch(10_000, 16, 4, rng)
    z = np.einsum("nij,nij->n", a, b)
    assert abs(z.mean()) <= 3.0 * z.std(ddof=1) / np.sqrt(len(z))


def test_stiefel_sign_fix_gives_haar_first_entry():
    # Haar measure is reflection invariant, so every entry is symmetric about 0
    rng = np.random.default_rng(0)
    q = linalg.sample_stiefel_batch(4000, 3, 3, rng)
    frac = np.mean(q[:, 0, 0] > 0)
    assert 0.45 < frac < 0.55
