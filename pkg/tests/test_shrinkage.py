"""Soft/group thresholding identities and the learned-threshold plumbing."""

import numpy as np
import pytest

from groupcdl.circatt import BccbPattern, CircSparse
from groupcdl.core import LatentCode
from groupcdl.shrinkage import (
    NlssTransforms,
    ThresholdParams,
    adaptive_threshold,
    compute_adjacency,
    group_threshold_classical,
    learned_group_threshold,
    shrink_gate,
    soft_threshold,
    update_adjacency,
)


def _identity_transforms(m, gamma=0.5):
    eye = np.eye(m)
    return NlssTransforms(eye, eye.copy(), eye.copy(), eye.copy(), gamma=gamma)


# ---------------------------------------------------------------------------
# scalar soft-thresholding


def test_soft_threshold_known_values():
    z = np.array([[-2.0, -0.5, 0.0, 0.5, 2.0]])[:, None, :]
    out = soft_threshold(z, 1.0)
    np.testing.assert_allclose(out, [[[-1.0, 0.0, 0.0, 0.0, 1.0]]], atol=1e-15)


def test_soft_threshold_zero_tau_is_identity():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((3, 4, 4))
    np.testing.assert_array_equal(soft_threshold(z, 0.0), z)


def test_soft_threshold_matches_scalar_formula():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((2, 6, 6))
    tau = 0.3
    ref = np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)
    np.testing.assert_allclose(soft_threshold(z, tau), ref, atol=1e-15)


def test_soft_threshold_complex_preserves_phase():
    rng = np.random.default_rng(2)
    z = rng.standard_normal((2, 5, 5)) + 1j * rng.standard_normal((2, 5, 5))
    out = soft_threshold(z, 0.4)
    nz = np.abs(out) > 0
    np.testing.assert_allclose(np.angle(out[nz]), np.angle(z[nz]), atol=1e-12)
    np.testing.assert_allclose(np.abs(out), np.maximum(np.abs(z) - 0.4, 0.0),
                               atol=1e-14)


def test_soft_threshold_per_subband_vector():
    rng = np.random.default_rng(3)
    z = rng.standard_normal((2, 4, 4))
    tau = np.array([0.1, 10.0])
    out = soft_threshold(z, tau)
    assert np.all(out[1] == 0.0)
    assert np.any(out[0] != 0.0)
    with pytest.raises(ValueError):
        soft_threshold(z, np.array([0.1, 0.2, 0.3]))
    with pytest.raises(ValueError):
        soft_threshold(z, -0.1)


def test_shrink_gate_zero_denominator_convention():
    den = np.array([0.0, -1.0, 2.0])
    np.testing.assert_array_equal(shrink_gate(1.0, den), [0.0, 0.0, 0.5])
    np.testing.assert_array_equal(shrink_gate(0.0, den), [1.0, 1.0, 1.0])


# ---------------------------------------------------------------------------
# classical group thresholding


def test_group_threshold_identity_adjacency_reduces_to_soft():
    rng = np.random.default_rng(4)
    pat = BccbPattern(5, 5, 3)
    ident = CircSparse.identity(pat)
    z = rng.standard_normal((3, 5, 5))
    tau = np.array([0.2, 0.5, 0.9])
    got = group_threshold_classical(z, tau, ident)
    ref = soft_threshold(z, tau)
    np.testing.assert_allclose(got, ref, atol=1e-14)


def test_group_threshold_identity_adjacency_complex():
    rng = np.random.default_rng(5)
    pat = BccbPattern(4, 4, 3)
    ident = CircSparse.identity(pat)
    z = rng.standard_normal((2, 4, 4)) + 1j * rng.standard_normal((2, 4, 4))
    np.testing.assert_allclose(group_threshold_classical(z, 0.6, ident),
                               soft_threshold(z, 0.6), atol=1e-14)


def test_group_threshold_pools_support():
    """A strong neighbor should keep an otherwise sub-threshold pixel alive."""
    pat = BccbPattern(4, 4, 3)
    a = CircSparse(pat, np.full((16, 9), 1.0 / 9.0))
    z = np.zeros((1, 4, 4))
    z[0, 1, 1] = 0.05
    z[0, 1, 2] = 3.0
    solo = soft_threshold(z, 0.3)
    grouped = group_threshold_classical(z, 0.3, a)
    assert solo[0, 1, 1] == 0.0
    assert grouped[0, 1, 1] > 0.0


def test_group_threshold_wraps_latent_code():
    pat = BccbPattern(4, 4, 3)
    z = LatentCode(np.random.default_rng(6).standard_normal((2, 4, 4)))
    out = group_threshold_classical(z, 0.1, CircSparse.identity(pat))
    assert isinstance(out, LatentCode)


# ---------------------------------------------------------------------------
# learned adjacency and threshold


def test_compute_adjacency_rows_stochastic():
    rng = np.random.default_rng(7)
    t = _identity_transforms(3)
    z = rng.standard_normal((3, 6, 6))
    a = compute_adjacency(z, t, np.ones(3), 5)
    np.testing.assert_allclose(a.values.sum(axis=1), 1.0, atol=1e-12)
    assert a.pattern == BccbPattern(6, 6, 5)


def test_compute_adjacency_rho_scaling():
    """Large rho flattens the similarity toward uniform."""
    rng = np.random.default_rng(8)
    t = _identity_transforms(2)
    z = rng.standard_normal((2, 5, 5))
    a_sharp = compute_adjacency(z, t, np.full(2, 0.5), 3)
    a_flat = compute_adjacency(z, t, np.full(2, 50.0), 3)
    assert np.abs(a_flat.values - 1.0 / 9.0).max() < 1e-2
    assert np.abs(a_sharp.values - 1.0 / 9.0).max() > 0.1


def test_compute_adjacency_validates_rho():
    t = _identity_transforms(2)
    z = np.zeros((2, 4, 4))
    with pytest.raises(ValueError):
        compute_adjacency(z, t, np.array([1.0, 0.0]), 3)
    with pytest.raises(ValueError):
        compute_adjacency(z, t, np.ones(3), 3)


def test_learned_threshold_identity_setup_reduces_to_soft():
    """Identity transforms and identity adjacency recover soft-thresholding."""
    rng = np.random.default_rng(9)
    m = 3
    t = _identity_transforms(m)
    pat = BccbPattern(5, 5, 3)
    ident = CircSparse.identity(pat)
    z = rng.standard_normal((m, 5, 5))
    tau = np.array([0.2, 0.4, 0.6])
    got = learned_group_threshold(z, tau, ident, t)
    np.testing.assert_allclose(got, soft_threshold(z, tau), atol=1e-14)


def test_learned_threshold_beta_scales_denominator():
    rng = np.random.default_rng(10)
    m = 2
    eye = np.eye(m)
    z = rng.standard_normal((m, 4, 4))
    pat = BccbPattern(4, 4, 3)
    ident = CircSparse.identity(pat)
    t_big = NlssTransforms(eye, eye, eye, 10.0 * eye, gamma=0.5)
    # a 10x denominator behaves like a 10x smaller threshold
    got = learned_group_threshold(z, 1.0, ident, t_big)
    ref = soft_threshold(z, 0.1)
    np.testing.assert_allclose(got, ref, atol=1e-14)


def test_learned_threshold_zero_code_stays_zero():
    t = _identity_transforms(2)
    pat = BccbPattern(4, 4, 3)
    z = np.zeros((2, 4, 4))
    out = learned_group_threshold(z, 0.5, CircSparse.identity(pat), t)
    np.testing.assert_array_equal(out, z)


def test_update_adjacency_blend():
    pat = BccbPattern(3, 3, 3)
    rng = np.random.default_rng(11)
    a = CircSparse(pat, rng.random((9, 9)))
    b = CircSparse(pat, rng.random((9, 9)))
    out = update_adjacency(a, b, 0.25)
    np.testing.assert_allclose(out.values, 0.25 * a.values + 0.75 * b.values,
                               atol=1e-15)
    np.testing.assert_array_equal(update_adjacency(a, b, 1.0).values, a.values)
    np.testing.assert_array_equal(update_adjacency(a, b, 0.0).values, b.values)
    with pytest.raises(ValueError):
        update_adjacency(a, b, 1.5)
    with pytest.raises(ValueError):
        update_adjacency(a, CircSparse(BccbPattern(3, 3, 1), np.ones((9, 1))), 0.5)


# ---------------------------------------------------------------------------
# adaptive thresholds


def test_adaptive_threshold_affine_in_sigma():
    p = ThresholdParams(np.array([0.01, 0.02]), np.array([0.002, 0.004]))
    np.testing.assert_allclose(adaptive_threshold(p, 25.0),
                               [0.06, 0.12], atol=1e-15)
    np.testing.assert_allclose(adaptive_threshold(p, 0.0), p.tau0, atol=1e-15)


def test_adaptive_threshold_blind_ignores_tau1():
    p = ThresholdParams(np.array([0.03]), np.array([99.0]))
    np.testing.assert_array_equal(adaptive_threshold(p, None), [0.03])


def test_threshold_params_validation():
    with pytest.raises(ValueError):
        ThresholdParams(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        ThresholdParams(np.zeros((2, 2)), np.zeros((2, 2)))


def test_transforms_validation():
    eye = np.eye(2)
    with pytest.raises(ValueError):
        NlssTransforms(eye, eye, eye, np.eye(3), gamma=0.5)
    with pytest.raises(ValueError):
        NlssTransforms(eye, eye, eye, eye, gamma=1.2)
