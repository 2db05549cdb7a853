"""Image containers, circular convolution operators, and image metrics.

All convolutions in this package use circular (periodic) boundary handling,
so every linear operator here has an exact adjoint: for matched weights,
``<conv_analysis(x, w), z> == <x, conv_synthesis(z, w)>`` holds to roundoff.
Complex weights are supported; analysis applies the conjugate filters so the
pair is a conjugate-adjoint pair in the complex case.

Array layout is channel-major throughout: images are ``(C, n1, n2)`` and
latent codes ``(M, q1, q2)`` where ``q = n / stride``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Image",
    "LatentCode",
    "ConvFilterBank",
    "conv_analysis",
    "conv_synthesis",
    "conv2d_analysis",
    "conv2d_synthesis",
    "conv2d_analysis_wgrad",
    "conv2d_synthesis_wgrad",
    "project_unit_norm",
    "bank_spectral_norm",
    "spectrally_normalize",
    "psnr",
    "ssim",
    "ssim_with_grad",
    "awgn",
    "estimate_noise",
]


@dataclass(frozen=True)
class Image:
    """A single image with explicit channel axis, shape ``(C, n1, n2)``."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"Image data must be (C, n1, n2), got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ValueError("Image dimensions must be positive")

    @classmethod
    def from_array(cls, a) -> "Image":
        a = np.asarray(a)
        if a.ndim == 2:
            a = a[None]
        return cls(a)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def n1(self) -> int:
        return self.data.shape[1]

    @property
    def n2(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class LatentCode:
    """Subband coefficients, shape ``(M, q1, q2)``."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"LatentCode data must be (M, q1, q2), got shape {self.data.shape}")

    @property
    def subbands(self) -> int:
        return self.data.shape[0]

    @property
    def q1(self) -> int:
        return self.data.shape[1]

    @property
    def q2(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ConvFilterBank:
    """Bank of 2D filters, weights ``(M, C, p, p)`` with odd ``p``.

    ``role`` marks the intended direction ("analysis" or "synthesis") so the
    typed wrappers can catch accidental misuse; the underlying kernels accept
    raw weight arrays either way.
    """

    weights: np.ndarray
    stride: int
    role: str

    def __post_init__(self):
        if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
            raise ValueError(f"weights must be (M, C, p, p), got {self.weights.shape}")
        if self.weights.shape[2] % 2 != 1:
            raise ValueError("filter size p must be odd")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.role not in ("analysis", "synthesis"):
            raise ValueError(f"role must be 'analysis' or 'synthesis', got {self.role!r}")

    @property
    def n_filters(self) -> int:
        return self.weights.shape[0]

    @property
    def channels(self) -> int:
        return self.weights.shape[1]

    @property
    def size(self) -> int:
        return self.weights.shape[2]


def _check_divisible(n1: int, n2: int, stride: int):
    if n1 % stride or n2 % stride:
        raise ValueError(f"image dims ({n1}, {n2}) must be divisible by stride {stride}")


def _gather_patches(x: np.ndarray, stride: int, p: int) -> np.ndarray:
    """Extract the p x p circular window around every stride-point.

    Returns shape (C, q1, q2, p, p); entry [c, u, v, a, b] is
    x[c, (stride*u + a - p//2) % n1, (stride*v + b - p//2) % n2].
    """
    C, n1, n2 = x.shape
    q1, q2 = n1 // stride, n2 // stride
    p0 = p // 2
    ii = (np.arange(q1)[:, None] * stride + np.arange(p)[None, :] - p0) % n1
    jj = (np.arange(q2)[:, None] * stride + np.arange(p)[None, :] - p0) % n2
    return x[:, ii[:, None, :, None], jj[None, :, None, :]]


def conv2d_analysis(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """Strided circular correlation with the conjugate filters: z = D^H x.

    x: (C, n1, n2), w: (M, C, p, p) -> (M, q1, q2).
    """
    C, n1, n2 = x.shape
    M, Cw, p, _ = w.shape
    if Cw != C:
        raise ValueError(f"channel mismatch: image has {C}, bank expects {Cw}")
    _check_divisible(n1, n2, stride)
    patches = _gather_patches(x, stride, p)
    return np.tensordot(np.conj(w), patches, axes=([1, 2, 3], [0, 3, 4]))


def conv2d_synthesis(z: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """Adjoint of conv2d_analysis with the same weights: x = D z.

    z: (M, q1, q2), w: (M, C, p, p) -> (C, n1, n2) with n = q * stride.
    """
    M, q1, q2 = z.shape
    Mw, C, p, _ = w.shape
    if Mw != M:
        raise ValueError(f"subband mismatch: code has {M}, bank expects {Mw}")
    n1, n2 = q1 * stride, q2 * stride
    p0 = p // 2
    out = np.zeros((C, n1, n2), dtype=np.result_type(z, w))
    # (C, p, p, q1, q2); per-tap scatter is collision-free because n = q * stride
    t = np.tensordot(w, z, axes=([0], [0]))
    for a in range(p):
        ii = (np.arange(q1) * stride + a - p0) % n1
        for b in range(p):
            jj = (np.arange(q2) * stride + b - p0) % n2
            out[:, ii[:, None], jj[None, :]] += t[:, a, b]
    return out


def conv2d_synthesis_wgrad(z: np.ndarray, gy: np.ndarray, stride: int, p: int) -> np.ndarray:
    """Gradient of <gy, conv2d_synthesis(z, w)> with respect to w."""
    patches = _gather_patches(gy, stride, p)
    return np.tensordot(np.conj(z), patches, axes=([1, 2], [1, 2]))


def conv2d_analysis_wgrad(x: np.ndarray, gz: np.ndarray, stride: int, p: int) -> np.ndarray:
    """Gradient of <gz, conv2d_analysis(x, w)> with respect to w."""
    patches = _gather_patches(x, stride, p)
    return np.tensordot(np.conj(gz), patches, axes=([1, 2], [1, 2]))


def conv_analysis(x: Image, bank: ConvFilterBank) -> LatentCode:
    if bank.role != "analysis":
        raise ValueError("conv_analysis requires an analysis bank")
    return LatentCode(conv2d_analysis(x.data, bank.weights, bank.stride))


def conv_synthesis(z: LatentCode, bank: ConvFilterBank) -> Image:
    if bank.role != "synthesis":
        raise ValueError("conv_synthesis requires a synthesis bank")
    return Image(conv2d_synthesis(z.data, bank.weights, bank.stride))


def project_unit_norm(bank: ConvFilterBank) -> ConvFilterBank:
    """Project every filter onto the unit l2 ball (norm over its C*p*p taps).

    Under circular boundary all translates of a filter share the same norm, so
    the per-filter norm is the per-column norm of the induced dictionary.
    """
    w = bank.weights
    norms = np.sqrt(np.sum(np.abs(w) ** 2, axis=(1, 2, 3), keepdims=True))
    scale = np.maximum(norms, 1.0)
    return ConvFilterBank(w / scale, bank.stride, bank.role)


def bank_spectral_norm(w: np.ndarray, stride: int, iters: int = 50, tol: float = 1e-4,
                       seed: int = 0) -> float:
    """Top singular value of the synthesis operator, by power iteration on D^H D."""
    M, C, p, _ = w.shape
    q = max(8, p)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((M, q, q))
    if np.iscomplexobj(w):
        z = z + 1j * rng.standard_normal((M, q, q))
    z /= np.linalg.norm(z)
    lam = 0.0
    for _ in range(iters):
        x = conv2d_synthesis(z, w, stride)
        z2 = conv2d_analysis(x, w, stride)
        lam_new = np.linalg.norm(z2)
        if lam_new == 0:
            return 0.0
        z = z2 / lam_new
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(lam))


def spectrally_normalize(w: np.ndarray, stride: int, seed: int = 0) -> np.ndarray:
    """Scale a weight tensor so the induced operator has unit spectral norm."""
    s = bank_spectral_norm(w, stride, seed=seed)
    if s == 0:
        raise ValueError("cannot normalize an all-zero filter bank")
    return w / s


# ---------------------------------------------------------------------------
# metrics


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, (Image, LatentCode)) else np.asarray(x)


def psnr(xhat, x, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the inputs are identical."""
    a, b = _as_array(xhat), _as_array(x)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean(np.abs(a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


_SSIM_WIN = 11
_SSIM_SIGMA = 1.5


def _ssim_kernel() -> np.ndarray:
    t = np.arange(_SSIM_WIN) - _SSIM_WIN // 2
    g = np.exp(-(t * t) / (2.0 * _SSIM_SIGMA**2))
    return g / g.sum()


def _gauss_filter(x: np.ndarray) -> np.ndarray:
    """Separable circular Gaussian filtering over the last two axes.

    The kernel is symmetric, so this operator is self-adjoint; the ssim
    gradient below relies on that.
    """
    g = _ssim_kernel()
    h = _SSIM_WIN // 2
    out = np.zeros_like(x)
    for t in range(_SSIM_WIN):
        out += g[t] * np.roll(x, h - t, axis=-2)
    out2 = np.zeros_like(out)
    for t in range(_SSIM_WIN):
        out2 += g[t] * np.roll(out, h - t, axis=-1)
    return out2


def _ssim_parts(a: np.ndarray, b: np.ndarray, peak: float):
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu1, mu2 = _gauss_filter(a), _gauss_filter(b)
    s11 = _gauss_filter(a * a) - mu1 * mu1
    s22 = _gauss_filter(b * b) - mu2 * mu2
    s12 = _gauss_filter(a * b) - mu1 * mu2
    a1 = 2 * mu1 * mu2 + c1
    a2 = 2 * s12 + c2
    b1 = mu1 * mu1 + mu2 * mu2 + c1
    b2 = s11 + s22 + c2
    return mu1, mu2, a1, a2, b1, b2


def ssim(xhat, x, peak: float = 1.0) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Inputs must be real; channels are averaged. Filtering wraps circularly.
    """
    a, b = _as_array(xhat), _as_array(x)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        raise ValueError("ssim expects real inputs; take magnitudes first")
    if a.shape[-1] < _SSIM_WIN or a.shape[-2] < _SSIM_WIN:
        raise ValueError(f"image smaller than the {_SSIM_WIN}x{_SSIM_WIN} ssim window")
    _, _, a1, a2, b1, b2 = _ssim_parts(a.astype(np.float64), b.astype(np.float64), peak)
    return float(np.mean((a1 * a2) / (b1 * b2)))


def ssim_with_grad(xhat: np.ndarray, x: np.ndarray, peak: float = 1.0):
    """ssim value and its gradient with respect to the first argument."""
    a = np.asarray(xhat, dtype=np.float64)
    b = np.asarray(x, dtype=np.float64)
    if a.shape[-1] < _SSIM_WIN or a.shape[-2] < _SSIM_WIN:
        raise ValueError(f"image smaller than the {_SSIM_WIN}x{_SSIM_WIN} ssim window")
    mu1, mu2, a1, a2, b1, b2 = _ssim_parts(a, b, peak)
    smap = (a1 * a2) / (b1 * b2)
    npix = smap.size
    e1 = a2 / (b1 * b2)
    e2 = a1 / (b1 * b2)
    c0 = 2.0 * (mu2 * (e1 - e2) + mu1 * smap * (1.0 / b2 - 1.0 / b1))
    c1 = 2.0 * e2
    c2 = -2.0 * smap / b2
    grad = (_gauss_filter(c0) + b * _gauss_filter(c1) + a * _gauss_filter(c2)) / npix
    return float(np.mean(smap)), grad


# ---------------------------------------------------------------------------
# noise


def awgn(x, sigma: float, rng=None):
    """Add white Gaussian noise of level sigma.

    Real inputs get N(0, sigma^2) per pixel. Complex inputs get circular
    complex Gaussian noise with E|v|^2 = sigma^2 (sigma/sqrt(2) per part).
    """
    if sigma < 0:
        raise ValueError(f"noise level must be nonnegative, got {sigma}")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    a = _as_array(x)
    if np.iscomplexobj(a):
        s = sigma / math.sqrt(2.0)
        noise = rng.standard_normal(a.shape) * s + 1j * rng.standard_normal(a.shape) * s
    else:
        noise = rng.standard_normal(a.shape) * sigma
    out = a + noise
    if isinstance(x, Image):
        return Image(out)
    if isinstance(x, LatentCode):
        return LatentCode(out)
    return out


def estimate_noise(y) -> float:
    """Noise level estimate from the finest diagonal Haar subband.

    Robust median absolute deviation of the HH coefficients divided by
    0.6745 (the Gaussian consistency constant). Real images only.
    """
    a = _as_array(y)
    if np.iscomplexobj(a):
        raise ValueError("estimate_noise expects a real image")
    if a.ndim == 2:
        a = a[None]
    n1, n2 = a.shape[-2] & ~1, a.shape[-1] & ~1
    if n1 < 2 or n2 < 2:
        raise ValueError("image too small for a Haar level")
    a = a[..., :n1, :n2]
    hh = (a[..., 0::2, 0::2] - a[..., 0::2, 1::2]
          - a[..., 1::2, 0::2] + a[..., 1::2, 1::2]) / 2.0
    return float(np.median(np.abs(hh)) / 0.6745)
