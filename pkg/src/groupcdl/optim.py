"""Training machinery: losses, Adam with constraint projection, classical
proximal-gradient solvers, and finite-difference gradient checking.

Losses return (value, gradient-seed) pairs; feeding the seed to
autodiff.backward yields d(loss)/d(parameter) for every named leaf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, backward  # noqa: F401  (re-exported)
from .circatt import BccbPattern, att_values, softmax_values
from .core import (ConvFilterBank, Image, LatentCode, bank_spectral_norm,
                   conv2d_analysis, conv2d_synthesis, conv2d_synthesis_wgrad,
                   project_unit_norm, ssim_with_grad)
from .net import GroupCdlParams, init_ista, param_tree, with_tree
from .shrinkage import (NlssTransforms, ThresholdParams,
                        group_threshold_classical, soft_threshold)

__all__ = [
    "NumericError",
    "backward",
    "mse_loss",
    "l1_ssim_loss",
    "AdamState",
    "adam_init",
    "adam_step",
    "project_tree",
    "project_params",
    "cosine_lr",
    "pgm_solve",
    "dict_learn",
    "grad_check",
    "GRAD_CHECK_OPS",
]


class NumericError(RuntimeError):
    """Raised when an optimization step produces non-finite numbers."""


def _arr(x):
    return x.data if isinstance(x, (Image, LatentCode)) else np.asarray(x)


def mse_loss(xhat, x):
    """Sum of squared differences over one image (not averaged)."""
    d = _arr(xhat) - _arr(x)
    val = float(np.sum((d * np.conj(d)).real))
    return val, 2.0 * d


def l1_ssim_loss(xhat, x, weight: float = 0.5, peak: float = 1.0):
    """weight * mean|.| + (1 - weight) * (1 - ssim), on magnitudes if complex."""
    a, b = _arr(xhat), _arr(x)
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        u, v = np.abs(a), np.abs(b)
    else:
        u, v = a, b
    s, sgrad = ssim_with_grad(u, v, peak)
    diff = u - v
    val = weight * float(np.mean(np.abs(diff))) + (1.0 - weight) * (1.0 - s)
    gu = weight * np.sign(diff) / diff.size - (1.0 - weight) * sgrad
    if np.iscomplexobj(a):
        mag = np.abs(a)
        phase = np.where(mag > 0, a / np.where(mag > 0, mag, 1.0), 0.0)
        return val, gu * phase
    return val, gu


# ---------------------------------------------------------------------------
# Adam over named-tensor trees


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(tree: dict, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState(m={k: np.zeros_like(a) for k, a in tree.items()},
                     v={k: np.zeros(np.shape(a)) for k, a in tree.items()},
                     beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, tree: dict, grads: dict, lr: float) -> dict:
    """One bias-corrected Adam update; returns the new tree, mutates state."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    out = {}
    for name, theta in tree.items():
        g = grads[name]
        if not np.all(np.isfinite(g.view(np.float64) if np.iscomplexobj(g) else g)):
            raise NumericError(f"non-finite gradient for {name}")
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * (g * np.conj(g)).real
        mhat = state.m[name] / (1 - b1 ** state.t)
        vhat = state.v[name] / (1 - b2 ** state.t)
        out[name] = theta - lr * mhat / (np.sqrt(vhat) + state.eps)
    return out


def project_tree(tree: dict) -> dict:
    """Clamp a raw parameter tree onto the constraint set.

    Works on the flat name -> array form so it can run between an optimizer
    step and the typed-struct rebuild (whose validators reject e.g. a gamma
    that drifted past 1). Filter banks land on the unit l2 ball per filter,
    thresholds and w_beta become nonnegative, rho stays bounded away from
    zero, gamma is clipped to [0, 1].
    """
    out = {}
    for name, v in tree.items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("d", "a", "b"):
            norms = np.sqrt(np.sum((v * np.conj(v)).real, axis=(1, 2, 3),
                                   keepdims=True))
            out[name] = v / np.maximum(norms, 1.0)
        elif leaf in ("tau0", "tau1", "w_beta"):
            out[name] = np.maximum(v, 0.0)
        elif leaf == "rho":
            out[name] = np.maximum(v, 1e-6)
        elif leaf == "gamma":
            out[name] = np.clip(v, 0.0, 1.0)
        else:
            out[name] = v
    return out


def project_params(params: GroupCdlParams) -> GroupCdlParams:
    """Project onto the constraint set after a gradient step: unit-ball filter
    norms for every bank, nonnegative thresholds and w_beta, rho bounded away
    from zero, gamma in [0, 1]."""
    return with_tree(params, project_tree(param_tree(params)))


def cosine_lr(step: int, total: int, lr0: float, lr_final: float) -> float:
    t = min(step, total - 1) / max(total - 1, 1)
    return lr_final + 0.5 * (lr0 - lr_final) * (1.0 + math.cos(math.pi * t))


# ---------------------------------------------------------------------------
# classical solvers


def _penalty(z: np.ndarray, prior: str, adjacency) -> float:
    if prior == "l1":
        return float(np.sum(np.abs(z)))
    xi = np.sqrt(att_values(adjacency.values, (z * np.conj(z)).real, adjacency.pattern))
    return float(np.sum(xi))


def pgm_solve(y, bank: ConvFilterBank, lam: float, iters: int = 500,
              prior: str = "l1", adjacency=None, eta: float | None = None,
              z0=None):
    """Proximal gradient on 0.5||y - D z||^2 + lam * psi(z) with fixed D.

    prior "l1" uses soft-thresholding, "group" the classical group threshold
    under the given adjacency. Returns (code, info) where info carries the
    objective trace (length iters + 1) and the step size used.
    """
    if prior not in ("l1", "group"):
        raise ValueError("prior must be 'l1' or 'group'")
    if prior == "group" and adjacency is None:
        raise ValueError("group prior needs an adjacency")
    ya = _arr(y)
    w, s = bank.weights, bank.stride
    if eta is None:
        top = bank_spectral_norm(w, s)
        eta = 0.9 / (top * top)
    q1, q2 = ya.shape[1] // s, ya.shape[2] // s
    z = np.zeros((w.shape[0], q1, q2), dtype=np.result_type(ya, w)) if z0 is None \
        else _arr(z0).copy()
    obj = np.empty(iters + 1)
    tau = lam * eta
    for it in range(iters):
        r = conv2d_synthesis(z, w, s) - ya
        obj[it] = 0.5 * float(np.sum((r * np.conj(r)).real)) + lam * _penalty(z, prior, adjacency)
        if not math.isfinite(obj[it]) or obj[it] > 10.0 * obj[0] + 1e-12:
            raise NumericError(f"pgm diverged at iteration {it}")
        step = z - eta * conv2d_analysis(r, w, s)
        if prior == "l1":
            z = soft_threshold(step, np.full(z.shape[0], tau))
        else:
            z = group_threshold_classical(step, np.full(z.shape[0], tau), adjacency)
    r = conv2d_synthesis(z, w, s) - ya
    obj[iters] = 0.5 * float(np.sum((r * np.conj(r)).real)) + lam * _penalty(z, prior, adjacency)
    return LatentCode(z), {"objective": obj, "eta": eta}


def dict_learn(images, n_filters: int, size: int, stride: int = 1,
               lam: float = 0.05, rounds: int = 10, code_iters: int = 40,
               dict_steps: int = 5, seed: int = 0):
    """Alternating sparse coding / projected dictionary descent.

    Returns (bank, objective trace per round). The dictionary step uses the
    exact Lipschitz bound of the quadratic subproblem, so with fixed codes it
    cannot increase the objective; neither can warm-started sparse coding.
    """
    ys = [_arr(im) for im in images]
    c = ys[0].shape[0]
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n_filters, c, size, size))
    w /= np.sqrt(np.sum(w * w, axis=(1, 2, 3), keepdims=True))
    codes = [None] * len(ys)
    trace = np.empty(rounds)
    for rnd in range(rounds):
        for i, ya in enumerate(ys):
            bank = ConvFilterBank(w, stride, "synthesis")
            code, _ = pgm_solve(ya, bank, lam, iters=code_iters, z0=codes[i])
            codes[i] = code.data

        # Lipschitz bound of w -> sum_i ||synth(z_i, w)||^2 by power iteration
        probe = rng.standard_normal(w.shape)
        probe /= np.linalg.norm(probe)
        lz = 1.0
        for _ in range(15):
            nxt = np.zeros_like(probe)
            for z in codes:
                nxt += conv2d_synthesis_wgrad(z, conv2d_synthesis(z, probe, stride), stride, size)
            lz = np.linalg.norm(nxt)
            if lz == 0:
                break
            probe = nxt / lz
        step = 1.0 / max(lz, 1e-12)
        for _ in range(dict_steps):
            g = np.zeros_like(w)
            for ya, z in zip(ys, codes):
                g += conv2d_synthesis_wgrad(z, conv2d_synthesis(z, w, stride) - ya, stride, size)
            w = w - step * g
            norms = np.sqrt(np.sum(w * w, axis=(1, 2, 3), keepdims=True))
            w = w / np.maximum(norms, 1.0)

        total = 0.0
        for ya, z in zip(ys, codes):
            r = conv2d_synthesis(z, w, stride) - ya
            total += 0.5 * float(np.sum(r * r)) + lam * float(np.sum(np.abs(z)))
        trace[rnd] = total
    return ConvFilterBank(w, stride, "synthesis"), trace


# ---------------------------------------------------------------------------
# finite-difference gradient checking


@dataclass
class _CheckOp:
    make_inputs: object
    build: object
    tol: float = 1e-6
    eps: float = 1e-5
    samples: int = 24


def _toy_group_params(complex_filters=False, seed=3):
    rng = np.random.default_rng(seed)
    d0 = rng.standard_normal((6, 1, 3, 3))
    if complex_filters:
        d0 = d0 + 1j * rng.standard_normal(d0.shape)
    params = init_ista(d0, 2, m_hidden=3, window=3, refresh_every=1,
                       mode="group", stride=2, seed=seed)
    # move thresholds off zero activity and keep gates away from their kinks
    tree = param_tree(params)
    for k in range(2):
        tree[f"layers.{k}.tau0"] = np.full(6, 0.02)
        tree[f"layers.{k}.tau1"] = np.full(6, 0.01)
    return with_tree(params, tree)


def _register_ops():
    ops = {}
    rng0 = np.random.default_rng(0)

    def simple(name, make_inputs, build, **kw):
        ops[name] = _CheckOp(make_inputs, build, **kw)

    def bld_conv_analysis(inp):
        t = Tape()
        x = t.leaf(inp["x"], "x")
        w = t.leaf(inp["w"], "w")
        t.output = ad.conv_analysis(t, x, w, 2)
        return t

    simple("conv_analysis",
           lambda rng: {"x": rng.standard_normal((2, 8, 8)),
                        "w": rng.standard_normal((5, 2, 3, 3))},
           bld_conv_analysis)

    def bld_conv_synthesis(inp):
        t = Tape()
        z = t.leaf(inp["z"], "z")
        w = t.leaf(inp["w"], "w")
        t.output = ad.conv_synthesis(t, z, w, 2)
        return t

    simple("conv_synthesis",
           lambda rng: {"z": rng.standard_normal((5, 4, 4)),
                        "w": rng.standard_normal((5, 2, 3, 3))},
           bld_conv_synthesis)

    def bld_pixelwise(inp):
        t = Tape()
        w = t.leaf(inp["w"], "w")
        z = t.leaf(inp["z"], "z")
        t.output = ad.pixelwise_t(t, w, ad.pixelwise(t, w, z))
        return t

    simple("pixelwise",
           lambda rng: {"w": rng.standard_normal((3, 6)),
                        "z": rng.standard_normal((6, 5, 5))},
           bld_pixelwise)

    pat56 = BccbPattern(5, 6, 3)

    def bld_dist_sim(inp):
        t = Tape()
        k = t.leaf(inp["k"], "k")
        q = t.leaf(inp["q"], "q")
        t.output = ad.circ_dist_sim(t, k, q, pat56)
        return t

    simple("circ_dist_sim",
           lambda rng: {"k": rng.standard_normal((3, 5, 6)),
                        "q": rng.standard_normal((3, 5, 6))},
           bld_dist_sim)

    def bld_softmax(inp):
        t = Tape()
        s = t.leaf(inp["s"], "s")
        t.output = ad.circ_row_softmax(t, s)
        return t

    simple("circ_row_softmax",
           lambda rng: {"s": rng.standard_normal((30, 9))},
           bld_softmax)

    def bld_att(inp):
        t = Tape()
        a = t.leaf(inp["a"], "a")
        x = t.leaf(inp["x"], "x")
        t.output = ad.circ_att(t, a, x, pat56)
        return t

    simple("circ_att",
           lambda rng: {"a": softmax_values(rng.standard_normal((30, 9))),
                        "x": rng.standard_normal((3, 5, 6))},
           bld_att)

    def bld_soft_threshold(inp):
        t = Tape()
        z = t.leaf(inp["z"], "z")
        tau = ad.reshape(t, t.leaf(inp["tau"], "tau"), (4, 1, 1))
        t.output = ad.mul(t, z, ad.shrink_gate_p(t, tau, ad.absval(t, z)))
        return t

    simple("soft_threshold",
           lambda rng: {"z": rng.standard_normal((4, 5, 5)),
                        "tau": rng.uniform(0.2, 0.4, size=4)},
           bld_soft_threshold)

    pat55 = BccbPattern(5, 5, 3)

    def bld_gt_classical(inp):
        t = Tape()
        z = t.leaf(inp["z"], "z")
        a = t.leaf(inp["a"], "a")
        tau = ad.reshape(t, t.leaf(inp["tau"], "tau"), (4, 1, 1))
        xi = ad.sqrtp(t, ad.circ_att(t, a, ad.sqmod(t, z), pat55))
        t.output = ad.mul(t, z, ad.shrink_gate_p(t, tau, xi))
        return t

    simple("group_threshold_classical",
           lambda rng: {"z": rng.standard_normal((4, 5, 5)) + 0.5,
                        "a": softmax_values(rng.standard_normal((25, 9))),
                        "tau": rng.uniform(0.2, 0.4, size=4)},
           bld_gt_classical)

    def bld_gt_learned(inp):
        t = Tape()
        z = t.leaf(inp["z"], "z")
        tau = ad.reshape(t, t.leaf(inp["tau"], "tau"), (4, 1, 1))
        wth = t.leaf(inp["w_theta"], "w_theta")
        wph = t.leaf(inp["w_phi"], "w_phi")
        wal = t.leaf(inp["w_alpha"], "w_alpha")
        wbe = t.leaf(inp["w_beta"], "w_beta")
        rho = ad.reshape(t, t.leaf(inp["rho"], "rho"), (3, 1, 1))
        kf = ad.div(t, ad.pixelwise(t, wth, z), rho)
        qf = ad.div(t, ad.pixelwise(t, wph, z), rho)
        a = ad.circ_row_softmax(t, ad.circ_dist_sim(t, kf, qf, pat55))
        xi = ad.sqrtp(t, ad.circ_att(t, a, ad.sqmod(t, ad.pixelwise(t, wal, z)), pat55))
        den = ad.pixelwise_t(t, wbe, xi)
        t.output = ad.mul(t, z, ad.shrink_gate_p(t, tau, den))
        return t

    simple("learned_group_threshold",
           lambda rng: {"z": rng.standard_normal((4, 5, 5)) + 0.5,
                        "tau": rng.uniform(0.2, 0.4, size=4),
                        "w_theta": rng.uniform(0.2, 1.0, size=(3, 4)),
                        "w_phi": rng.uniform(0.2, 1.0, size=(3, 4)),
                        "w_alpha": rng.uniform(0.2, 1.0, size=(3, 4)),
                        "w_beta": rng.uniform(0.2, 1.0, size=(3, 4)),
                        "rho": rng.uniform(0.8, 1.4, size=3)},
           bld_gt_learned)

    net_template = _toy_group_params()

    def make_net_inputs(rng):
        inputs = {k: v.copy() for k, v in param_tree(net_template).items()}
        inputs["input"] = rng.standard_normal((1, 8, 8)) * 0.4
        return inputs

    def bld_net(inp):
        from .net import groupcdl_forward
        tree = {k: v for k, v in inp.items() if k != "input"}
        params = with_tree(net_template, tree)
        _, tape = groupcdl_forward(Image(inp["input"]), 0.3, params)
        return tape

    ops["denoise_net"] = _CheckOp(make_net_inputs, bld_net, tol=1e-4, eps=1e-5, samples=50)

    del rng0
    return ops


GRAD_CHECK_OPS = _register_ops()


def grad_check(op_id: str, inputs: dict | None = None, epsilon: float | None = None,
               seed: int = 0) -> float:
    """Max finite-difference error of the registered op over sampled coords.

    The op output is scalarized by a fixed random projection; each sampled
    input coordinate (real and imaginary parts separately) is perturbed by
    +-epsilon and the central difference compared against the tape gradient.
    Errors are relative for large gradients and absolute near zero.
    """
    op = GRAD_CHECK_OPS[op_id]
    eps = op.eps if epsilon is None else float(epsilon)
    rng = np.random.default_rng(seed)
    if inputs is None:
        inputs = op.make_inputs(rng)
    tape = op.build(inputs)
    proj = rng.standard_normal(np.shape(tape.output.value))

    def phi(vals):
        t = op.build(vals)
        return float(np.vdot(proj, t.output.value).real)

    grads = backward(tape, proj)
    worst = 0.0
    for name in inputs:
        an = grads[name]
        flat = np.asarray(inputs[name]).ravel()
        n = flat.size
        coords = np.arange(n) if n <= op.samples else rng.choice(n, op.samples, replace=False)
        parts = (1.0, 1j) if np.iscomplexobj(flat) else (1.0,)
        for c in coords:
            for unit in parts:
                shifted = dict(inputs)
                bump = flat.copy()
                bump[c] += unit * eps
                shifted[name] = bump.reshape(np.shape(inputs[name]))
                hi = phi(shifted)
                bump = flat.copy()
                bump[c] -= unit * eps
                shifted[name] = bump.reshape(np.shape(inputs[name]))
                lo = phi(shifted)
                fd = (hi - lo) / (2 * eps)
                g = an.ravel()[c]
                an_part = g.real if unit == 1.0 else g.imag
                err = abs(fd - an_part) / max(1.0, abs(fd), abs(an_part))
                worst = max(worst, err)
    return worst
