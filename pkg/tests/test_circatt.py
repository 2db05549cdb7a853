"""Band-stored sliding-window attention vs dense brute-force oracles."""

import numpy as np
import pytest

from groupcdl.circatt import (
    BccbPattern,
    CircSparse,
    circ_att,
    circ_att_bwd,
    circ_att_t,
    circ_dist_sim,
    circ_dist_sim_bwd,
    circ_row_softmax,
    circ_row_softmax_bwd,
    circ_transpose,
    neighbor_index,
    softmax_values,
)


# ---------------------------------------------------------------------------
# dense oracle, written against the documented contract only


def _window_mask(n1, n2, window):
    """mask[i, j] = True when pixel j lies inside pixel i's circular window."""
    w1, w2 = min(window, n1), min(window, n2)
    dys = np.arange(w1) - (w1 - 1) // 2
    dxs = np.arange(w2) - (w2 - 1) // 2
    mask = np.zeros((n1 * n2, n1 * n2), dtype=bool)
    for i in range(n1 * n2):
        r, c = divmod(i, n2)
        for dy in dys:
            for dx in dxs:
                j = ((r + dy) % n1) * n2 + (c + dx) % n2
                mask[i, j] = True
    return mask


def _dense_dist_sim(k, q, mask):
    m = k.shape[0]
    kf = k.reshape(m, -1)
    qf = q.reshape(m, -1)
    diff = kf[:, :, None] - qf[:, None, :]
    s = -0.5 * np.sum((diff * np.conj(diff)).real, axis=0)
    return np.where(mask, s, 0.0)


def _dense_row_softmax(s, mask):
    shifted = np.where(mask, s, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def _apply_dense(a, x):
    m = x.shape[0]
    return (a @ x.reshape(m, -1).T).T.reshape(x.shape)


def _cases():
    for n1 in range(3, 9):
        for n2 in range(3, 9):
            for window in (3, 5):
                for m in (1, 3):
                    yield n1, n2, window, m


def test_oracle_equivalence_full_grid_sweep():
    """The acceptance sweep: every kernel against its dense counterpart."""
    worst = 0.0
    for n1, n2, window, m in _cases():
        rng = np.random.default_rng([1, n1, n2, window, m])
        k = rng.standard_normal((m, n1, n2))
        q = rng.standard_normal((m, n1, n2))
        x = rng.standard_normal((m, n1, n2))
        mask = _window_mask(n1, n2, window)

        s = circ_dist_sim(k, q, window)
        s_dense = s.to_dense()
        s_ref = _dense_dist_sim(k, q, mask)
        worst = max(worst, np.abs(s_dense - s_ref).max())
        assert np.all(s_dense[~mask] == 0.0)

        a = circ_row_softmax(s)
        a_ref = _dense_row_softmax(s_ref, mask)
        worst = max(worst, np.abs(a.to_dense() - a_ref).max())

        y = circ_att(a, x)
        worst = max(worst, np.abs(y.data - _apply_dense(a_ref, x)).max())

        yt = circ_att_t(a, x)
        worst = max(worst, np.abs(yt.data - _apply_dense(a_ref.T, x)).max())

        st = circ_transpose(s)
        worst = max(worst, np.abs(st.to_dense() - s_ref.T).max())
    assert worst <= 1e-12


def test_oracle_equivalence_complex_features():
    rng = np.random.default_rng(2)
    n1, n2, window, m = 5, 7, 3, 2
    k = rng.standard_normal((m, n1, n2)) + 1j * rng.standard_normal((m, n1, n2))
    q = rng.standard_normal((m, n1, n2)) + 1j * rng.standard_normal((m, n1, n2))
    mask = _window_mask(n1, n2, window)
    s = circ_dist_sim(k, q, window)
    assert not np.iscomplexobj(s.values)
    np.testing.assert_allclose(s.to_dense(), _dense_dist_sim(k, q, mask), atol=1e-12)


# ---------------------------------------------------------------------------
# structure


def test_neighbor_index_hand_cases():
    pat = BccbPattern(4, 4, 3)
    # offsets run dy-major: o=0 is (-1,-1), o=4 the center, o=8 is (+1,+1)
    assert neighbor_index(pat, 0, 0) == 15
    assert neighbor_index(pat, 0, 4) == 0
    assert neighbor_index(pat, 5, 8) == 10
    assert neighbor_index(pat, 3, 5) == 0  # (+0,+1) wraps the row


def test_pattern_validation():
    with pytest.raises(ValueError):
        BccbPattern(4, 4, 4)
    with pytest.raises(ValueError):
        BccbPattern(0, 4, 3)
    with pytest.raises(ValueError):
        CircSparse(BccbPattern(3, 3, 3), np.zeros((9, 8)))


def test_window_clamps_to_grid():
    pat = BccbPattern(3, 3, 5)
    assert pat.nnz_per_row == 9
    pat = BccbPattern(4, 6, 5)
    assert pat.nnz_per_row == 4 * 5


def test_identity_band_is_dense_identity():
    pat = BccbPattern(4, 5, 3)
    ident = CircSparse.identity(pat)
    np.testing.assert_array_equal(ident.to_dense(), np.eye(20))
    x = np.random.default_rng(3).standard_normal((2, 4, 5))
    np.testing.assert_array_equal(circ_att(ident, x).data, x)


def test_from_dense_roundtrip():
    rng = np.random.default_rng(4)
    pat = BccbPattern(5, 4, 3)
    vals = rng.standard_normal((pat.size, pat.nnz_per_row))
    s = CircSparse(pat, vals)
    back = CircSparse.from_dense(s.to_dense(), pat)
    np.testing.assert_array_equal(back.values, vals)


def test_softmax_rows_are_stochastic():
    rng = np.random.default_rng(5)
    s = circ_dist_sim(rng.standard_normal((2, 6, 6)),
                      rng.standard_normal((2, 6, 6)), 5)
    a = circ_row_softmax(s)
    np.testing.assert_allclose(a.values.sum(axis=1), 1.0, atol=1e-14)
    assert np.all(a.values >= 0)


def test_softmax_constant_rows_are_uniform():
    pat = BccbPattern(4, 4, 3)
    a = softmax_values(np.full((16, 9), -2.7))
    np.testing.assert_allclose(a, 1.0 / 9.0, atol=1e-15)


def test_uniform_attention_is_box_mean():
    rng = np.random.default_rng(6)
    pat = BccbPattern(6, 6, 3)
    a = CircSparse(pat, np.full((36, 9), 1.0 / 9.0))
    x = rng.standard_normal((1, 6, 6))
    got = circ_att(a, x).data
    ref = np.zeros_like(x)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            ref += np.roll(x, (-dy, -dx), axis=(1, 2)) / 9.0
    np.testing.assert_allclose(got, ref, atol=1e-15)


def test_transpose_is_involution():
    rng = np.random.default_rng(7)
    pat = BccbPattern(5, 6, 5)
    s = CircSparse(pat, rng.standard_normal((30, 25)))
    back = circ_transpose(circ_transpose(s))
    np.testing.assert_array_equal(back.values, s.values)


def test_att_t_matches_transpose_then_att():
    rng = np.random.default_rng(8)
    pat = BccbPattern(5, 5, 3)
    s = CircSparse(pat, rng.standard_normal((25, 9)))
    x = rng.standard_normal((2, 5, 5))
    np.testing.assert_allclose(circ_att_t(s, x).data,
                               circ_att(circ_transpose(s), x).data, atol=1e-13)


def test_shape_mismatches_raise():
    rng = np.random.default_rng(9)
    with pytest.raises(ValueError):
        circ_dist_sim(rng.standard_normal((2, 4, 4)),
                      rng.standard_normal((2, 4, 5)), 3)
    pat = BccbPattern(4, 4, 3)
    a = CircSparse(pat, np.zeros((16, 9)))
    with pytest.raises(ValueError):
        circ_att(a, rng.standard_normal((2, 4, 5)))


def test_to_dense_refuses_large_grids():
    pat = BccbPattern(128, 128, 3)
    s = CircSparse(pat, np.zeros((128 * 128, 9)))
    with pytest.raises(ValueError):
        s.to_dense()


# ---------------------------------------------------------------------------
# backward rules vs finite differences


def _fd_check(f, arrays, grads, eps=1e-6, samples=20, seed=0):
    """Central-difference check of analytic grads for scalar-valued f."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for arr, g in zip(arrays, grads):
        flat = arr.ravel()
        idx = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + eps
            up = f()
            flat[i] = keep - eps
            dn = f()
            flat[i] = keep
            fd = (up - dn) / (2 * eps)
            an = g.ravel()[i]
            worst = max(worst, abs(fd - an) / max(1.0, abs(fd), abs(an)))
    return worst


def test_dist_sim_backward_matches_fd():
    rng = np.random.default_rng(10)
    window, m = 3, 2
    k = rng.standard_normal((m, 5, 6))
    q = rng.standard_normal((m, 5, 6))
    proj = rng.standard_normal((30, 9))

    def phi():
        return float(np.sum(proj * circ_dist_sim(k, q, window).values))

    s = circ_dist_sim(k, q, window)
    dk, dq = circ_dist_sim_bwd(CircSparse(s.pattern, proj), k, q)
    assert _fd_check(phi, [k, q], [dk, dq]) <= 1e-6


def test_att_backward_matches_fd():
    rng = np.random.default_rng(11)
    pat = BccbPattern(5, 5, 3)
    vals = rng.standard_normal((25, 9))
    x = rng.standard_normal((2, 5, 5))
    proj = rng.standard_normal((2, 5, 5))

    def phi():
        return float(np.sum(proj * circ_att(CircSparse(pat, vals), x).data))

    da, dx = circ_att_bwd(CircSparse(pat, vals), x, proj)
    assert _fd_check(phi, [vals, x], [da.values, dx]) <= 1e-6


def test_softmax_backward_matches_fd():
    rng = np.random.default_rng(12)
    pat = BccbPattern(4, 5, 3)
    vals = rng.standard_normal((20, 9))
    proj = rng.standard_normal((20, 9))

    def phi():
        return float(np.sum(proj * softmax_values(vals)))

    a = circ_row_softmax(CircSparse(pat, vals))
    ds = circ_row_softmax_bwd(proj, a)
    assert _fd_check(phi, [vals], [ds]) <= 1e-6
