"""Multicoil Cartesian CS-MRI: measurement operators and reconstruction.

The measurement is y = M (F R x + noise) per coil: pixelwise coil
sensitivity weighting R, a unitary 2D FFT F (1/sqrt(N) both directions, so
F^H F = I) and a binary line mask M. The reconstruction network is the
denoising recursion with the measurement gram H^H H inserted after every
layer's synthesis, run on the zero-filled estimate H^H y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .core import Image
from .net import GroupCdlParams, unrolled_net

__all__ = [
    "MriSystem",
    "fft2c",
    "ifft2c",
    "sens_expand",
    "sens_reduce",
    "forward_op",
    "adjoint_op",
    "gram_op",
    "coil_whiten",
    "gen_cartesian_mask",
    "zero_filled",
    "simulate_acquisition",
    "groupcdl_mri_forward",
    "phantom",
    "synth_sens_maps",
]


def fft2c(x: np.ndarray) -> np.ndarray:
    """Centered unitary 2D FFT: the zero-frequency bin sits at the array
    center, matching how the line masks index k-space."""
    ax = (-2, -1)
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(x, axes=ax), axes=ax, norm="ortho"), axes=ax)


def ifft2c(x: np.ndarray) -> np.ndarray:
    ax = (-2, -1)
    return np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(x, axes=ax), axes=ax, norm="ortho"), axes=ax)


@dataclass(frozen=True)
class MriSystem:
    """Coil sensitivities (coils, n1, n2) plus a sampling mask.

    mask may be a line vector (n2,) for Cartesian sampling or a full (n1, n2)
    pixel mask; either way entries are 0/1.
    """

    sens: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.sens.ndim != 3 or not np.iscomplexobj(self.sens):
            raise ValueError("sens must be complex (coils, n1, n2)")
        m = np.asarray(self.mask)
        if m.ndim == 1:
            if m.shape[0] != self.sens.shape[2]:
                raise ValueError("line mask length must equal n2")
        elif m.ndim == 2:
            if m.shape != self.sens.shape[1:]:
                raise ValueError("pixel mask shape must match the image grid")
        else:
            raise ValueError("mask must be 1D (lines) or 2D (pixels)")

    @property
    def coils(self) -> int:
        return self.sens.shape[0]

    @property
    def shape(self):
        return self.sens.shape[1:]

    @property
    def mask2d(self) -> np.ndarray:
        m = np.asarray(self.mask, dtype=np.float64)
        if m.ndim == 1:
            return np.broadcast_to(m[None, :], self.shape)
        return m


def _img1(x) -> np.ndarray:
    a = x.data if isinstance(x, Image) else np.asarray(x)
    if a.ndim == 2:
        a = a[None]
    if a.shape[0] != 1:
        raise ValueError("expected a single-channel image")
    return a


def sens_expand(sys: MriSystem, x) -> np.ndarray:
    """Coil images r_c * x from a single-channel image."""
    return sys.sens * _img1(x)


def sens_reduce(sys: MriSystem, u: np.ndarray) -> np.ndarray:
    """Adjoint of sens_expand: sum_c conj(r_c) * u_c, kept single-channel."""
    return np.sum(np.conj(sys.sens) * u, axis=0, keepdims=True)


def forward_op(sys: MriSystem, x) -> np.ndarray:
    """H x = M F R x, per coil."""
    return sys.mask2d * fft2c(sens_expand(sys, x))


def adjoint_op(sys: MriSystem, y: np.ndarray) -> np.ndarray:
    """H^H y = R^H F^H M y."""
    return sens_reduce(sys, ifft2c(sys.mask2d * y))


def gram_op(sys: MriSystem, x) -> np.ndarray:
    """H^H H x; self-adjoint and idempotent in the mask."""
    return sens_reduce(sys, ifft2c(sys.mask2d * fft2c(sens_expand(sys, x))))


def coil_whiten(y: np.ndarray, noise_cov: np.ndarray) -> np.ndarray:
    """Apply the inverse matrix square root of the coil noise covariance.

    y: (coils, ...) data, noise_cov: (coils, coils) Hermitian positive
    definite. The whitened data has identity noise covariance.
    """
    vals, vecs = np.linalg.eigh(noise_cov)
    if np.any(vals <= 0):
        raise ValueError("noise covariance must be positive definite")
    w = (vecs / np.sqrt(vals)) @ vecs.conj().T
    return np.tensordot(w, y, axes=([1], [0]))


def gen_cartesian_mask(n2: int, accel: float, center_frac: float, seed=None) -> np.ndarray:
    """Random Cartesian line mask: a fully-sampled center block plus uniform
    random lines, n2/accel sampled lines in total."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_total = int(round(n2 / accel))
    n_center = int(round(center_frac * n2))
    if n_center > n_total:
        raise ValueError(f"center_frac {center_frac} exceeds the 1/{accel} budget")
    if n_total > n2:
        raise ValueError("acceleration below 1 is not a subsampling")
    mask = np.zeros(n2, dtype=np.uint8)
    start = (n2 - n_center) // 2
    mask[start:start + n_center] = 1
    outside = np.flatnonzero(mask == 0)
    extra = rng.choice(outside, size=n_total - n_center, replace=False)
    mask[extra] = 1
    return mask


def zero_filled(sys: MriSystem, y: np.ndarray) -> Image:
    return Image(adjoint_op(sys, y))


def simulate_acquisition(sys: MriSystem, x, sigma: float = 0.0, rng=None) -> np.ndarray:
    """Masked noisy k-space for a ground-truth image; noise is circular
    complex Gaussian with E|v|^2 = sigma^2 per coil sample."""
    ksp = fft2c(sens_expand(sys, x))
    if sigma > 0:
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        s = sigma / math.sqrt(2.0)
        ksp = ksp + s * (rng.standard_normal(ksp.shape)
                         + 1j * rng.standard_normal(ksp.shape))
    return sys.mask2d * ksp


def groupcdl_mri_forward(y: np.ndarray, sigma_hat, params: GroupCdlParams,
                         sys: MriSystem):
    """Reconstruct from masked k-space y; returns (estimate, tape)."""
    n1, n2 = sys.shape
    s = params.stride
    if n1 % s or n2 % s:
        raise ValueError(f"grid ({n1}, {n2}) must divide the stride {s}")
    if params.dictionary.channels != 1:
        raise ValueError("MRI reconstruction uses single-channel dictionaries")
    zf = adjoint_op(sys, y)
    tape = Tape()
    zfv = tape.leaf(zf, "input")
    out = unrolled_net(tape, zfv, params, sigma_hat, gram=lambda v: gram_op(sys, v))
    tape.output = out
    return Image(out.value), tape


# ---------------------------------------------------------------------------
# synthetic anatomy


def _lowpass_noise(rng, n: int, cutoff: float) -> np.ndarray:
    """Smooth random field in roughly [-1, 1], cutoff as a fraction of Nyquist."""
    spec = np.fft.fft2(rng.standard_normal((n, n)))
    f = np.fft.fftfreq(n)
    keep = (np.abs(f[:, None]) <= cutoff / 2) & (np.abs(f[None, :]) <= cutoff / 2)
    field = np.fft.ifft2(spec * keep).real
    peak = np.max(np.abs(field))
    return field / peak if peak > 0 else field


def phantom(rng, n: int) -> Image:
    """Random ellipse phantom with mild texture and smooth phase.

    Magnitudes lie in [0, 1]; the phase varies slowly across the support.
    """
    yy, xx = np.meshgrid(np.linspace(-1, 1, n), np.linspace(-1, 1, n), indexing="ij")
    img = np.zeros((n, n))

    def add_ellipse(cx, cy, a, b, ang, val):
        ca, sa = math.cos(ang), math.sin(ang)
        u = (xx - cx) * ca + (yy - cy) * sa
        v = -(xx - cx) * sa + (yy - cy) * ca
        img[(u / a) ** 2 + (v / b) ** 2 <= 1.0] += val

    add_ellipse(0.0, 0.0, 0.82, 0.88, 0.0, 0.9)
    add_ellipse(0.0, 0.0, 0.72, 0.78, 0.0, -0.25)
    for _ in range(rng.integers(4, 9)):
        add_ellipse(rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45),
                    rng.uniform(0.06, 0.32), rng.uniform(0.06, 0.32),
                    rng.uniform(0, math.pi), rng.uniform(-0.5, 0.5))
    img = np.clip(img, 0.0, None)
    img += 0.06 * (_lowpass_noise(rng, n, 0.35) + 1.0) * (img > 0)
    peak = img.max()
    if peak > 0:
        img /= peak
    phase = 0.5 * math.pi * _lowpass_noise(rng, n, 0.08)
    return Image((img * np.exp(1j * phase))[None])


def synth_sens_maps(rng, coils: int, n: int) -> np.ndarray:
    """Smooth synthetic coil sensitivities, normalized so sum_c |r_c|^2 = 1."""
    yy, xx = np.meshgrid(np.linspace(-1, 1, n), np.linspace(-1, 1, n), indexing="ij")
    maps = np.empty((coils, n, n), dtype=np.complex128)
    theta0 = rng.uniform(0, 2 * math.pi)
    for c in range(coils):
        ang = theta0 + 2 * math.pi * c / coils
        cx, cy = 0.9 * math.cos(ang), 0.9 * math.sin(ang)
        mag = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * 0.7 ** 2))
        ph = rng.uniform(-1, 1) * xx + rng.uniform(-1, 1) * yy + rng.uniform(0, 2 * math.pi)
        maps[c] = mag * np.exp(1j * ph)
    norm = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / norm
