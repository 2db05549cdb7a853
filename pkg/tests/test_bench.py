"""Benchmark kernels: band-layout equivalence, patch attention, burden math."""

import numpy as np
import pytest

from groupcdl.bench import (
    burden_factor,
    fast_att,
    fast_dist_sim,
    fast_row_softmax,
    pbda_reference,
    run_benchmark,
)
from groupcdl.circatt import (
    BccbPattern,
    att_values,
    dist_sim_values,
    softmax_values,
)


def test_burden_factor():
    assert burden_factor(45, 7) == pytest.approx(2025 / 49)
    assert round(burden_factor(45, 7), 2) == 41.33
    assert burden_factor(9, 9) == 1.0
    assert burden_factor(8, 4) == 4.0
    with pytest.raises(ValueError):
        burden_factor(5, 7)


@pytest.mark.parametrize("shape", [(5, 6), (4, 4), (7, 5)])
@pytest.mark.parametrize("window", [3, 5])
@pytest.mark.parametrize("cplx", [False, True])
def test_fast_kernels_match_band_layout(shape, window, cplx):
    """The strided kernels must reproduce the reference band construction."""
    rng = np.random.default_rng([4, shape[0], shape[1], window, cplx])
    n1, n2 = shape

    def draw(c):
        a = rng.standard_normal((c, n1, n2))
        return a + 1j * rng.standard_normal(a.shape) if cplx else a

    k, q, x = draw(2), draw(2), draw(3)
    pat = BccbPattern(n1, n2, window)
    s_fast = fast_dist_sim(k, q, window)
    s_ref = dist_sim_values(k, q, pat)
    np.testing.assert_array_equal(s_fast, s_ref)
    a_fast = fast_row_softmax(s_fast)
    np.testing.assert_array_equal(a_fast, softmax_values(s_ref))
    np.testing.assert_allclose(fast_att(a_fast, x, window),
                               att_values(a_fast, x, pat), atol=1e-13)


def test_fast_kernels_preserve_float32():
    rng = np.random.default_rng(5)
    k = rng.standard_normal((2, 8, 8)).astype(np.float32)
    x = rng.standard_normal((3, 8, 8)).astype(np.float32)
    s = fast_dist_sim(k, k, 5)
    assert s.dtype == np.float32
    a = fast_row_softmax(s)
    assert a.dtype == np.float32
    assert fast_att(a, x, 5).dtype == np.float32


def test_pbda_identity_returns_input():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 12, 12))
    out = pbda_reference(x, window=5, stride=3, kind="identity")
    np.testing.assert_allclose(out, x, atol=1e-12)


def test_pbda_uniform_nonoverlapping_is_block_means():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((1, 12, 12))
    out = pbda_reference(x, window=4, stride=4, kind="uniform")
    for i in range(0, 12, 4):
        for j in range(0, 12, 4):
            blk = x[:, i:i + 4, j:j + 4]
            np.testing.assert_allclose(out[:, i:i + 4, j:j + 4],
                                       blk.mean(), atol=1e-12)


def test_pbda_validation():
    x = np.zeros((1, 8, 8))
    with pytest.raises(ValueError):
        pbda_reference(x, window=9, stride=3)
    with pytest.raises(ValueError):
        pbda_reference(x, window=3, stride=5)
    with pytest.raises(ValueError):
        pbda_reference(x, window=3, stride=3, kind="magic")


def test_pbda_wrapper_type_follows_input():
    from groupcdl.core import Image

    rng = np.random.default_rng(8)
    x = rng.standard_normal((1, 8, 8))
    assert isinstance(pbda_reference(Image(x), 3, 3, kind="identity"), Image)
    assert isinstance(pbda_reference(x, 3, 3, kind="identity"), np.ndarray)


def test_pbda_matches_circ_on_full_image_window():
    """One window covering the whole (wrapped) image is plain dense attention,
    which the circulant path reproduces when its window also spans the image."""
    rng = np.random.default_rng(9)
    n = 5
    x = rng.standard_normal((2, n, n))
    circ = fast_att(fast_row_softmax(fast_dist_sim(x, x, n)), x, n)
    dense = pbda_reference(x, window=n, stride=n, kind="distance")
    np.testing.assert_allclose(circ, dense, atol=1e-10)


def test_run_benchmark_small_report():
    rep = run_benchmark(n=24, window=9, stride=3, m_feat=2, m_val=2,
                        consensus_n=16, consensus_window=5,
                        consensus_stride=5)
    for key in ("n", "window", "stride", "burden_analytic", "pixels_circ",
                "pixels_pbda", "pixel_ratio", "wall_circ_s", "wall_pbda_s",
                "wall_ratio", "consensus_gap"):
        assert key in rep, key
    assert rep["pixels_circ"] == 24 * 24
    assert rep["pixels_pbda"] == (24 // 3) ** 2 * 81
    assert rep["pixel_ratio"] == pytest.approx(9.0)
    assert rep["burden_analytic"] == 9.0
    assert rep["wall_circ_s"] > 0 and rep["wall_pbda_s"] > 0
    assert np.isfinite(rep["consensus_gap"])
    assert rep["consensus_gap"] < 0.2
