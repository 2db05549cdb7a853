"""Unrolled network behavior: identities, covariance, checkpoints."""

import dataclasses

import numpy as np
import pytest

from groupcdl.core import ConvFilterBank, Image
from groupcdl.net import (
    GroupCdlParams,
    LayerParams,
    groupcdl_forward,
    init_ista,
    load_checkpoint,
    param_tree,
    refresh_schedule,
    save_checkpoint,
    with_tree,
)
from groupcdl.shrinkage import NlssTransforms, ThresholdParams
from groupcdl.synth import synth_image


def _toy_params(mode="group", seed=0, m=6, m_hidden=3, depth=2, window=5,
                refresh_every=1, stride=2, p=3, complex_filters=False):
    rng = np.random.default_rng(seed)
    d0 = rng.standard_normal((m, 1, p, p))
    if complex_filters:
        d0 = d0 + 1j * rng.standard_normal(d0.shape)
    return init_ista(d0, depth, m_hidden=m_hidden, window=window,
                     refresh_every=refresh_every, mode=mode, stride=stride,
                     seed=seed)


def _identity_params(mode):
    """K=1, M=C=1, p=1, unit weight, unit stride, zero thresholds."""
    w = np.ones((1, 1, 1, 1))
    layer = LayerParams(
        analysis=ConvFilterBank(w.copy(), 1, "analysis"),
        synthesis=ConvFilterBank(w.copy(), 1, "synthesis"),
        thresholds=ThresholdParams(np.zeros(1), np.zeros(1)),
        rho=np.ones(1),
    )
    eye = np.ones((1, 1))
    return GroupCdlParams(
        dictionary=ConvFilterBank(w.copy(), 1, "synthesis"),
        layers=(layer,),
        transforms=NlssTransforms(eye, eye.copy(), eye.copy(), eye.copy(),
                                  gamma=0.8),
        mode=mode,
        window=3,
        refresh_every=1,
    )


# ---------------------------------------------------------------------------
# construction


def test_init_banks_copy_normalized_dictionary():
    params = _toy_params()
    d = params.dictionary.weights
    for layer in params.layers:
        np.testing.assert_array_equal(layer.analysis.weights, d)
        np.testing.assert_array_equal(layer.synthesis.weights, d)
    assert params.layers[0].analysis.weights is not d


def test_toy_config_constructs_and_runs():
    rng = np.random.default_rng(1)
    params = init_ista(rng.standard_normal((16, 1, 3, 3)), 4, m_hidden=8,
                       window=7, refresh_every=2, mode="group", stride=2)
    y = Image(synth_image(rng, n=32).data)
    xhat, tape = groupcdl_forward(y, 25.0 / 255.0, params)
    assert xhat.data.shape == y.data.shape
    assert np.all(np.isfinite(xhat.data))


def test_refresh_schedule_table():
    assert refresh_schedule(0, 5)
    assert not refresh_schedule(3, 5)
    assert all(refresh_schedule(k, 1) for k in range(7))


def test_params_validation():
    params = _toy_params()
    with pytest.raises(ValueError):
        dataclasses.replace(params, mode="banana")
    with pytest.raises(ValueError):
        dataclasses.replace(params, window=4)
    with pytest.raises(ValueError):
        dataclasses.replace(params, refresh_every=0)


# ---------------------------------------------------------------------------
# forward identities


@pytest.mark.parametrize("mode", ["elementwise", "group"])
def test_identity_pipeline_returns_input(mode):
    rng = np.random.default_rng(2)
    y = Image(rng.random((1, 8, 8)))
    xhat, _ = groupcdl_forward(y, None, _identity_params(mode))
    np.testing.assert_allclose(xhat.data, y.data, atol=1e-14)


def test_output_shape_non_divisible_dims():
    rng = np.random.default_rng(3)
    params = _toy_params(stride=2)
    y = Image(rng.random((1, 33, 35)))
    xhat, _ = groupcdl_forward(y, 0.1, params)
    assert xhat.data.shape == (1, 33, 35)
    assert np.all(np.isfinite(xhat.data))


def test_channel_mismatch_raises():
    params = _toy_params()
    with pytest.raises(ValueError):
        groupcdl_forward(Image(np.zeros((2, 8, 8))), 0.1, params)


@pytest.mark.parametrize("stride", [1, 2])
def test_translation_covariance(stride):
    rng = np.random.default_rng(4)
    params = _toy_params(stride=stride, seed=5)
    y = synth_image(rng, n=24)
    shift = stride  # covariance holds for shifts by stride multiples
    y_shift = Image(np.roll(y.data, (shift, shift), axis=(1, 2)))
    out, _ = groupcdl_forward(y, 0.1, params)
    out_shift, _ = groupcdl_forward(y_shift, 0.1, params)
    ref = np.roll(out.data, (shift, shift), axis=(1, 2))
    assert np.abs(out_shift.data - ref).max() <= 1e-8


def test_sigma_invariance_with_zero_tau1():
    """init leaves tau1 at zero, so sigma_hat must not matter."""
    rng = np.random.default_rng(6)
    params = _toy_params(mode="elementwise")
    y = Image(rng.random((1, 16, 16)))
    a, _ = groupcdl_forward(y, 0.1, params)
    b, _ = groupcdl_forward(y, 0.9, params)
    np.testing.assert_array_equal(a.data, b.data)


def test_blind_equals_zero_sigma():
    rng = np.random.default_rng(7)
    params = _toy_params(mode="group")
    y = Image(rng.random((1, 16, 16)))
    a, _ = groupcdl_forward(y, None, params)
    b, _ = groupcdl_forward(y, 0.0, params)
    np.testing.assert_array_equal(a.data, b.data)


def test_positive_tau1_makes_sigma_matter():
    params = _toy_params(mode="elementwise")
    tree = param_tree(params)
    for k in range(params.depth):
        tree[f"layers.{k}.tau1"] = np.full_like(tree[f"layers.{k}.tau1"], 0.05)
    params = with_tree(params, tree)
    rng = np.random.default_rng(8)
    y = Image(rng.random((1, 16, 16)))
    a, _ = groupcdl_forward(y, 0.1, params)
    b, _ = groupcdl_forward(y, 0.9, params)
    assert np.abs(a.data - b.data).max() > 0


def test_mode_changes_output():
    params = _toy_params(mode="group", seed=9)
    rng = np.random.default_rng(9)
    tree = param_tree(params)
    for k in range(params.depth):
        tree[f"layers.{k}.tau0"] = np.full_like(tree[f"layers.{k}.tau0"], 0.05)
    params = with_tree(params, tree)
    y = Image(synth_image(rng, n=16).data)
    a, _ = groupcdl_forward(y, 0.2, params)
    b, _ = groupcdl_forward(y, 0.2, dataclasses.replace(params, mode="elementwise"))
    assert np.abs(a.data - b.data).max() > 1e-9


def test_forward_deterministic():
    rng = np.random.default_rng(10)
    params = _toy_params(seed=11)
    y = Image(rng.random((1, 20, 20)))
    a, _ = groupcdl_forward(y, 0.15, params)
    b, _ = groupcdl_forward(y, 0.15, params)
    np.testing.assert_array_equal(a.data, b.data)
    params2 = _toy_params(seed=11)
    c, _ = groupcdl_forward(y, 0.15, params2)
    np.testing.assert_array_equal(a.data, c.data)


def test_complex_filters_forward():
    rng = np.random.default_rng(12)
    params = _toy_params(complex_filters=True, seed=13)
    y = Image(rng.random((1, 16, 16)) + 1j * rng.random((1, 16, 16)))
    xhat, _ = groupcdl_forward(y, 0.1, params)
    assert np.iscomplexobj(xhat.data)
    assert xhat.data.shape == y.data.shape


# ---------------------------------------------------------------------------
# parameter tree


def test_param_tree_roundtrip():
    params = _toy_params(seed=14)
    tree = param_tree(params)
    rebuilt = with_tree(params, {k: v.copy() for k, v in tree.items()})
    for name, arr in param_tree(rebuilt).items():
        np.testing.assert_array_equal(arr, tree[name])


def test_tree_keys_cover_all_tensors():
    params = _toy_params(depth=3)
    tree = param_tree(params)
    expected = {"d", "w_theta", "w_phi", "w_alpha", "w_beta", "gamma"}
    for k in range(3):
        expected |= {f"layers.{k}.{leaf}"
                     for leaf in ("a", "b", "tau0", "tau1", "rho")}
    assert set(tree) == expected


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip_bitwise(tmp_path):
    params = _toy_params(seed=15, mode="group")
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, extra={"step": np.int64(17)})
    loaded, extra = load_checkpoint(path)
    assert int(extra["step"]) == 17
    assert loaded.mode == params.mode
    assert loaded.window == params.window
    assert loaded.refresh_every == params.refresh_every
    assert loaded.stride == params.stride
    ref = param_tree(params)
    for name, arr in param_tree(loaded).items():
        np.testing.assert_array_equal(arr, ref[name])
        assert arr.dtype == ref[name].dtype
    rng = np.random.default_rng(16)
    y = Image(rng.random((1, 16, 16)))
    a, _ = groupcdl_forward(y, 0.1, params)
    b, _ = groupcdl_forward(y, 0.1, loaded)
    np.testing.assert_array_equal(a.data, b.data)


def test_checkpoint_roundtrip_complex(tmp_path):
    params = _toy_params(seed=17, complex_filters=True)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params)
    loaded, extra = load_checkpoint(path)
    assert extra == {}
    np.testing.assert_array_equal(loaded.dictionary.weights,
                                  params.dictionary.weights)
    assert np.iscomplexobj(loaded.dictionary.weights)


def test_checkpoint_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bogus.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_checkpoint(path)
