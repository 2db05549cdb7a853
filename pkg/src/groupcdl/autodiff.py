"""Minimal reverse-mode tape over numpy arrays.

Forward primitives compute values eagerly and push one record, a closure
mapping the output gradient to (input, gradient) pairs, onto the tape.
Replaying records in reverse accumulates gradients for every leaf.

Complex convention: the gradient carried for a complex array z is
g = dL/d(Re z) + 1j * dL/d(Im z) (twice the conjugate Wirtinger derivative of
the real loss L). Under this convention linear ops backpropagate through
their conjugate adjoints and gradient descent steps z - lr * g are correct.
When a gradient reaching a real-valued variable is complex, its real part is
the exact derivative and is taken automatically on accumulation.
"""

from __future__ import annotations

import numpy as np

from . import circatt as _ca
from . import core as _core
from .shrinkage import shrink_gate as _shrink_gate_fwd

__all__ = ["Var", "Tape", "backward"]


class Var:
    """A tape node: holds the forward value and an id into the tape."""

    __slots__ = ("value", "id")

    def __init__(self, value, vid):
        self.value = value
        self.id = vid

    def __repr__(self):
        return f"Var(id={self.id}, shape={np.shape(self.value)})"


class Tape:
    def __init__(self):
        self.records = []
        self.leaves = {}
        self.output = None
        self._next = 0

    def _new(self, value) -> Var:
        v = Var(np.asarray(value), self._next)
        self._next += 1
        return v

    def leaf(self, value, name: str | None = None) -> Var:
        v = self._new(value)
        if name is not None:
            if name in self.leaves:
                raise ValueError(f"duplicate leaf name {name!r}")
            self.leaves[name] = v
        return v

    def push(self, out: Var, bwd) -> Var:
        self.records.append((out, bwd))
        return out

    def backward(self, seed: np.ndarray) -> dict:
        """Accumulated gradients for every variable id, given d(loss)/d(output)."""
        if self.output is None:
            raise ValueError("tape has no output set")
        seed = np.asarray(seed)
        if seed.shape != np.shape(self.output.value):
            raise ValueError(
                f"seed shape {seed.shape} != output shape {np.shape(self.output.value)}")
        store: dict = {self.output.id: seed}
        for out, bwd in reversed(self.records):
            g = store.get(out.id)
            if g is None:
                continue
            for var, contrib in bwd(g):
                if contrib is None:
                    continue
                if not np.iscomplexobj(var.value) and np.iscomplexobj(contrib):
                    contrib = contrib.real
                prev = store.get(var.id)
                store[var.id] = contrib if prev is None else prev + contrib
        return store

    def leaf_grads(self, store: dict) -> dict:
        """Map leaf names to gradients (zeros for leaves the output ignores)."""
        out = {}
        for name, var in self.leaves.items():
            g = store.get(var.id)
            out[name] = np.zeros_like(var.value) if g is None else np.asarray(g)
        return out


def backward(tape: Tape, output_grad: np.ndarray) -> dict:
    """Gradients of all named leaves given the output gradient."""
    return tape.leaf_grads(tape.backward(output_grad))


# ---------------------------------------------------------------------------
# elementwise and shape primitives


def _unbcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum-reduce a gradient back to the shape its input had before broadcast."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ts) in enumerate(zip(g.shape, shape)) if ts == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(tape, a: Var, b: Var) -> Var:
    out = tape._new(a.value + b.value)
    sa, sb = np.shape(a.value), np.shape(b.value)
    return tape.push(out, lambda g: ((a, _unbcast(g, sa)), (b, _unbcast(g, sb))))


def sub(tape, a: Var, b: Var) -> Var:
    out = tape._new(a.value - b.value)
    sa, sb = np.shape(a.value), np.shape(b.value)
    return tape.push(out, lambda g: ((a, _unbcast(g, sa)), (b, _unbcast(-g, sb))))


def mul(tape, a: Var, b: Var) -> Var:
    out = tape._new(a.value * b.value)
    sa, sb = np.shape(a.value), np.shape(b.value)

    def bwd(g):
        return ((a, _unbcast(g * np.conj(b.value), sa)),
                (b, _unbcast(g * np.conj(a.value), sb)))

    return tape.push(out, bwd)


def div(tape, a: Var, b: Var) -> Var:
    out = tape._new(a.value / b.value)
    sa, sb = np.shape(a.value), np.shape(b.value)

    def bwd(g):
        bc = np.conj(b.value)
        ga = g / bc
        gb = -g * np.conj(a.value) / (bc * bc)
        return ((a, _unbcast(ga, sa)), (b, _unbcast(gb, sb)))

    return tape.push(out, bwd)


def scale(tape, a: Var, c: float) -> Var:
    out = tape._new(a.value * c)
    return tape.push(out, lambda g: ((a, g * np.conj(c)),))


def add_const(tape, a: Var, c) -> Var:
    out = tape._new(a.value + c)
    return tape.push(out, lambda g: ((a, g),))


def reshape(tape, a: Var, shape) -> Var:
    old = np.shape(a.value)
    out = tape._new(a.value.reshape(shape))
    return tape.push(out, lambda g: ((a, g.reshape(old)),))


def mean_all(tape, a: Var) -> Var:
    n = a.value.size
    shape = a.value.shape
    out = tape._new(np.asarray(np.mean(a.value)))

    def bwd(g):
        return ((a, np.broadcast_to(np.asarray(g) / n, shape).copy()),)

    return tape.push(out, bwd)


def sqmod(tape, a: Var) -> Var:
    """Squared modulus |a|^2 (plain square for real input)."""
    out = tape._new((a.value * np.conj(a.value)).real)
    return tape.push(out, lambda g: ((a, 2.0 * g * a.value),))


def sqrtp(tape, a: Var) -> Var:
    """Real sqrt; the derivative at exactly zero is taken as zero."""
    y = np.sqrt(a.value)
    out = tape._new(y)

    def bwd(g):
        return ((a, np.where(y > 0, g / (2.0 * np.where(y > 0, y, 1.0)), 0.0)),)

    return tape.push(out, bwd)


def absval(tape, a: Var) -> Var:
    """Modulus; subgradient zero at the origin, phase elsewhere."""
    m = np.abs(a.value)
    out = tape._new(m)

    def bwd(g):
        phase = np.where(m > 0, a.value / np.where(m > 0, m, 1.0), 0.0)
        return ((a, g * phase),)

    return tape.push(out, bwd)


def shrink_gate_p(tape, tau: Var, den: Var) -> Var:
    """Shrink gate (1 - tau/den)_+ as one primitive, so no inf intermediates.

    tau must be broadcastable against den (reshape per-subband vectors to
    (M, 1, 1) first). Gradients vanish off the active set den > tau.
    """
    gate = _shrink_gate_fwd(tau.value, den.value)
    out = tape._new(gate)
    st, sd = np.shape(tau.value), np.shape(den.value)

    def bwd(g):
        d = den.value
        active = (d > 0) & (d > tau.value)
        safe = np.where(active, d, 1.0)
        gtau = np.where(active, -g / safe, 0.0)
        gden = np.where(active, g * tau.value / (safe * safe), 0.0)
        return ((tau, _unbcast(gtau, st)), (den, _unbcast(gden, sd)))

    return tape.push(out, bwd)


# ---------------------------------------------------------------------------
# channel transforms and convolutions


def pixelwise(tape, w: Var, z: Var) -> Var:
    """Per-pixel channel map: out[h] = sum_m w[h, m] z[m]."""
    out = tape._new(np.einsum("hm,mij->hij", w.value, z.value))

    def bwd(g):
        gw = np.einsum("hij,mij->hm", g, np.conj(z.value))
        gz = np.einsum("hm,hij->mij", np.conj(w.value), g)
        return ((w, gw), (z, gz))

    return tape.push(out, bwd)


def pixelwise_t(tape, w: Var, xi: Var) -> Var:
    """Transposed channel map: out[m] = sum_h w[h, m] xi[h]."""
    out = tape._new(np.einsum("hm,hij->mij", w.value, xi.value))

    def bwd(g):
        gw = np.einsum("mij,hij->hm", g, np.conj(xi.value))
        gxi = np.einsum("hm,mij->hij", np.conj(w.value), g)
        return ((w, gw), (xi, gxi))

    return tape.push(out, bwd)


def conv_analysis(tape, x: Var, w: Var, stride: int) -> Var:
    out = tape._new(_core.conv2d_analysis(x.value, w.value, stride))
    p = w.value.shape[2]

    def bwd(g):
        gx = _core.conv2d_synthesis(g, w.value, stride)
        gw = _core.conv2d_analysis_wgrad(x.value, g, stride, p)
        return ((x, gx), (w, gw))

    return tape.push(out, bwd)


def conv_synthesis(tape, z: Var, w: Var, stride: int) -> Var:
    out = tape._new(_core.conv2d_synthesis(z.value, w.value, stride))
    p = w.value.shape[2]

    def bwd(g):
        gz = _core.conv2d_analysis(g, w.value, stride)
        gw = _core.conv2d_synthesis_wgrad(z.value, g, stride, p)
        return ((z, gz), (w, gw))

    return tape.push(out, bwd)


# ---------------------------------------------------------------------------
# circulant-sparse attention primitives (values are (Q, nnz) band arrays)


def circ_dist_sim(tape, k: Var, q: Var, pat: _ca.BccbPattern) -> Var:
    out = tape._new(_ca.dist_sim_values(k.value, q.value, pat))

    def bwd(g):
        dk, dq = _ca.dist_sim_bwd_values(g, k.value, q.value, pat)
        return ((k, dk), (q, dq))

    return tape.push(out, bwd)


def circ_row_softmax(tape, s: Var) -> Var:
    a = _ca.softmax_values(s.value)
    out = tape._new(a)
    return tape.push(out, lambda g: ((s, _ca.softmax_bwd_values(g, a)),))


def circ_att(tape, a: Var, x: Var, pat: _ca.BccbPattern) -> Var:
    out = tape._new(_ca.att_values(a.value, x.value, pat))

    def bwd(g):
        da, dx = _ca.att_bwd_values(a.value, x.value, g, pat)
        return ((a, da), (x, dx))

    return tape.push(out, bwd)


# ---------------------------------------------------------------------------
# structural primitives


def self_adjoint_apply(tape, x: Var, op) -> Var:
    """Apply a fixed self-adjoint linear operator (e.g. a measurement gram)."""
    out = tape._new(op(x.value))
    return tape.push(out, lambda g: ((x, op(g)),))


def pad_reflect(tape, x: Var, pad1: int, pad2: int) -> Var:
    """Reflect-pad the last two axes on the high side; exact adjoint backward."""
    if pad1 == 0 and pad2 == 0:
        return x
    n1, n2 = x.value.shape[-2:]
    widths = [(0, 0)] * (x.value.ndim - 2) + [(0, pad1), (0, pad2)]
    out = tape._new(np.pad(x.value, widths, mode="reflect"))
    idx = np.pad(np.arange(n1 * n2).reshape(n1, n2),
                 [(0, pad1), (0, pad2)], mode="reflect")

    def bwd(g):
        gx = np.zeros(x.value.shape[:-2] + (n1 * n2,), dtype=g.dtype)
        np.add.at(gx, (..., idx.ravel()), g.reshape(g.shape[:-2] + (-1,)))
        return ((x, gx.reshape(x.value.shape)),)

    return tape.push(out, bwd)


def crop(tape, x: Var, n1: int, n2: int) -> Var:
    """Crop the last two axes to (n1, n2); backward zero-embeds."""
    if x.value.shape[-2:] == (n1, n2):
        return x
    out = tape._new(x.value[..., :n1, :n2])

    def bwd(g):
        gx = np.zeros(x.value.shape, dtype=g.dtype)
        gx[..., :n1, :n2] = g
        return ((x, gx),)

    return tape.push(out, bwd)
