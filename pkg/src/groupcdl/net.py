"""Unrolled proximal-gradient networks built from convolutional dictionaries.

Each layer runs one gradient step on the synthesis objective followed by a
shrinkage step; "group" mode uses the learned group threshold with a
windowed adjacency refreshed every ``refresh_every`` layers and blended with
momentum, "elementwise" mode uses plain soft-thresholding. The forward pass
records every primitive on a Tape, so one backward sweep yields exact
gradients for all parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import fileio
from .autodiff import Tape
from .circatt import BccbPattern
from .core import ConvFilterBank, Image, spectrally_normalize
from .shrinkage import NlssTransforms, ThresholdParams

__all__ = [
    "LayerParams",
    "GroupCdlParams",
    "init_ista",
    "refresh_schedule",
    "groupcdl_forward",
    "unrolled_net",
    "param_tree",
    "with_tree",
    "save_checkpoint",
    "load_checkpoint",
]

MODES = ("group", "elementwise")


@dataclass(frozen=True)
class LayerParams:
    analysis: ConvFilterBank
    synthesis: ConvFilterBank
    thresholds: ThresholdParams
    rho: np.ndarray


@dataclass(frozen=True)
class GroupCdlParams:
    dictionary: ConvFilterBank
    layers: tuple
    transforms: NlssTransforms
    mode: str
    window: int
    refresh_every: int

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.window % 2 == 0 or self.window < 1:
            raise ValueError("window must be odd and positive")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")

    @property
    def stride(self) -> int:
        return self.dictionary.stride

    @property
    def depth(self) -> int:
        return len(self.layers)


def refresh_schedule(k: int, refresh_every: int) -> bool:
    """Whether layer k recomputes the adjacency (always true at k = 0)."""
    return k % refresh_every == 0


def init_ista(d0: np.ndarray, depth: int, *, m_hidden: int, window: int,
              refresh_every: int, mode: str = "group", stride: int = 2,
              seed: int = 0) -> GroupCdlParams:
    """Tied initialization: every layer starts as one ISTA step.

    d0 is spectrally normalized and copied into the dictionary and into both
    per-layer banks. Thresholds start at (1e-3, 0). The four channel
    transforms share a single standard-uniform draw, spectrally normalized;
    adjacency momentum starts at 0.8 and rho at ones.
    """
    d = spectrally_normalize(np.asarray(d0), stride)
    m = d.shape[0]
    layers = []
    for _ in range(depth):
        layers.append(LayerParams(
            analysis=ConvFilterBank(d.copy(), stride, "analysis"),
            synthesis=ConvFilterBank(d.copy(), stride, "synthesis"),
            thresholds=ThresholdParams(np.full(m, 1e-3), np.zeros(m)),
            rho=np.ones(m_hidden),
        ))
    rng = np.random.default_rng(seed)
    w = rng.uniform(size=(m_hidden, m))
    w /= np.linalg.norm(w, 2)
    transforms = NlssTransforms(w.copy(), w.copy(), w.copy(), w.copy(), gamma=0.8)
    return GroupCdlParams(
        dictionary=ConvFilterBank(d.copy(), stride, "synthesis"),
        layers=tuple(layers),
        transforms=transforms,
        mode=mode,
        window=window,
        refresh_every=refresh_every,
    )


# ---------------------------------------------------------------------------
# parameter tree <-> named tensors


def param_tree(params: GroupCdlParams) -> dict:
    tree = {"d": params.dictionary.weights}
    for k, layer in enumerate(params.layers):
        tree[f"layers.{k}.a"] = layer.analysis.weights
        tree[f"layers.{k}.b"] = layer.synthesis.weights
        tree[f"layers.{k}.tau0"] = layer.thresholds.tau0
        tree[f"layers.{k}.tau1"] = layer.thresholds.tau1
        tree[f"layers.{k}.rho"] = layer.rho
    t = params.transforms
    tree["w_theta"] = t.w_theta
    tree["w_phi"] = t.w_phi
    tree["w_alpha"] = t.w_alpha
    tree["w_beta"] = t.w_beta
    tree["gamma"] = np.asarray(float(t.gamma))
    return tree


def with_tree(params: GroupCdlParams, tree: dict) -> GroupCdlParams:
    """Rebuild a parameter struct from a named-tensor tree (shapes must match)."""
    s = params.stride
    layers = []
    for k, layer in enumerate(params.layers):
        layers.append(LayerParams(
            analysis=ConvFilterBank(tree[f"layers.{k}.a"], s, "analysis"),
            synthesis=ConvFilterBank(tree[f"layers.{k}.b"], s, "synthesis"),
            thresholds=ThresholdParams(tree[f"layers.{k}.tau0"], tree[f"layers.{k}.tau1"]),
            rho=tree[f"layers.{k}.rho"],
        ))
    transforms = NlssTransforms(tree["w_theta"], tree["w_phi"], tree["w_alpha"],
                                tree["w_beta"], gamma=float(tree["gamma"]))
    return replace(params,
                   dictionary=ConvFilterBank(tree["d"], s, "synthesis"),
                   layers=tuple(layers),
                   transforms=transforms)


# ---------------------------------------------------------------------------
# forward


def unrolled_net(tape: Tape, yv, params: GroupCdlParams, sigma_hat, gram=None):
    """Shared layer recursion; yv is the image-domain tape input.

    gram, when given, is a fixed self-adjoint operator inserted after each
    layer's synthesis (the measurement normal operator in CS-MRI).
    """
    pv = {name: tape.leaf(arr, name) for name, arr in param_tree(params).items()}
    stride = params.stride
    n1, n2 = yv.value.shape[-2:]
    q1, q2 = n1 // stride, n2 // stride
    pat = BccbPattern(q1, q2, params.window)
    m = params.dictionary.n_filters
    mh = params.transforms.m_hidden

    mu = ad.mean_all(tape, yv)
    ty = ad.sub(tape, yv, mu)

    z = None
    a_prev = None
    for k in range(params.depth):
        av = pv[f"layers.{k}.a"]
        if z is None:
            r = ad.conv_analysis(tape, ty, av, stride)
        else:
            bz = ad.conv_synthesis(tape, z, pv[f"layers.{k}.b"], stride)
            if gram is not None:
                bz = ad.self_adjoint_apply(tape, bz, gram)
            res = ad.sub(tape, bz, ty)
            r = ad.sub(tape, z, ad.conv_analysis(tape, res, av, stride))

        if sigma_hat is None:
            tauv = pv[f"layers.{k}.tau0"]
        else:
            tauv = ad.add(tape, pv[f"layers.{k}.tau0"],
                          ad.scale(tape, pv[f"layers.{k}.tau1"], float(sigma_hat)))
        tauc = ad.reshape(tape, tauv, (m, 1, 1))

        if params.mode == "group":
            if refresh_schedule(k, params.refresh_every):
                rhoc = ad.reshape(tape, pv[f"layers.{k}.rho"], (mh, 1, 1))
                kf = ad.div(tape, ad.pixelwise(tape, pv["w_theta"], r), rhoc)
                qf = ad.div(tape, ad.pixelwise(tape, pv["w_phi"], r), rhoc)
                a_new = ad.circ_row_softmax(tape, ad.circ_dist_sim(tape, kf, qf, pat))
                if a_prev is None:
                    a_cur = a_new
                else:
                    gv = pv["gamma"]
                    keep = ad.add_const(tape, ad.scale(tape, gv, -1.0), 1.0)
                    a_cur = ad.add(tape, ad.mul(tape, gv, a_new),
                                   ad.mul(tape, keep, a_prev))
                a_prev = a_cur
            else:
                a_cur = a_prev
            u = ad.pixelwise(tape, pv["w_alpha"], r)
            energy = ad.circ_att(tape, a_cur, ad.sqmod(tape, u), pat)
            den = ad.pixelwise_t(tape, pv["w_beta"], ad.sqrtp(tape, energy))
            z = ad.mul(tape, r, ad.shrink_gate_p(tape, tauc, den))
        else:
            z = ad.mul(tape, r, ad.shrink_gate_p(tape, tauc, ad.absval(tape, r)))

    xh = ad.conv_synthesis(tape, z, pv["d"], stride)
    return ad.add(tape, xh, mu)


def groupcdl_forward(y: Image, sigma_hat, params: GroupCdlParams):
    """Denoise y; returns the estimate and the tape recording the whole pass.

    sigma_hat is the noise level on the same scale as the pixel values, or
    None for noise-blind thresholds. Dimensions that do not divide the
    stride are reflect-padded and cropped back (both on the tape, so the
    backward pass stays exact).
    """
    if params.dictionary.channels != y.channels:
        raise ValueError("channel count does not match the dictionary")
    tape = Tape()
    yv = tape.leaf(y.data, "input")
    s = params.stride
    pad1 = (-y.n1) % s
    pad2 = (-y.n2) % s
    xp = ad.pad_reflect(tape, yv, pad1, pad2)
    out = unrolled_net(tape, xp, params, sigma_hat)
    out = ad.crop(tape, out, y.n1, y.n2)
    tape.output = out
    return Image(out.value), tape


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"GCDL"
_MODE_CODE = {"group": 0, "elementwise": 1}
_CODE_MODE = {v: k for k, v in _MODE_CODE.items()}


def save_checkpoint(path, params: GroupCdlParams, extra: dict | None = None):
    """Write parameters (and optional extra named tensors) to a GCDL file."""
    records = dict(param_tree(params))
    records["cfg.stride"] = np.asarray(params.stride, dtype=np.int64)
    records["cfg.window"] = np.asarray(params.window, dtype=np.int64)
    records["cfg.refresh_every"] = np.asarray(params.refresh_every, dtype=np.int64)
    records["cfg.mode"] = np.asarray(_MODE_CODE[params.mode], dtype=np.int64)
    if extra:
        for name, arr in extra.items():
            records[f"extra.{name}"] = np.asarray(arr)
    fileio.write_records(path, _MAGIC, records)


def load_checkpoint(path):
    """Read a GCDL file; returns (params, extra-dict)."""
    _, rec = fileio.read_records(path, _MAGIC)
    stride = int(rec["cfg.stride"])
    mode = _CODE_MODE[int(rec["cfg.mode"])]
    depth = 0
    while f"layers.{depth}.a" in rec:
        depth += 1
    if depth == 0 or "d" not in rec:
        raise ValueError("checkpoint is missing parameter tensors")
    layers = []
    for k in range(depth):
        layers.append(LayerParams(
            analysis=ConvFilterBank(rec[f"layers.{k}.a"], stride, "analysis"),
            synthesis=ConvFilterBank(rec[f"layers.{k}.b"], stride, "synthesis"),
            thresholds=ThresholdParams(rec[f"layers.{k}.tau0"], rec[f"layers.{k}.tau1"]),
            rho=rec[f"layers.{k}.rho"],
        ))
    transforms = NlssTransforms(rec["w_theta"], rec["w_phi"], rec["w_alpha"],
                                rec["w_beta"], gamma=float(rec["gamma"]))
    params = GroupCdlParams(
        dictionary=ConvFilterBank(rec["d"], stride, "synthesis"),
        layers=tuple(layers),
        transforms=transforms,
        mode=mode,
        window=int(rec["cfg.window"]),
        refresh_every=int(rec["cfg.refresh_every"]),
    )
    extra = {name[6:]: arr for name, arr in rec.items() if name.startswith("extra.")}
    return params, extra
