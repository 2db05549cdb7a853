"""Proximal shrinkage operators: scalar soft-thresholding and group variants.

The group operators shrink each coefficient by the energy of its neighborhood
under a (possibly learned) row-stochastic adjacency, so support decisions are
shared across self-similar pixels. All operators act on the modulus and keep
the phase, which makes them valid for complex codes as well.

Shared convention for the shrink gate ``(1 - tau / denom)_+``: a zero or
negative denominator means the whole group has zero energy, so for tau > 0
the limit is full shrinkage (gate 0); for tau == 0 no shrinkage is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circatt import BccbPattern, CircSparse, att_values, dist_sim_values, softmax_values
from .core import LatentCode

__all__ = [
    "ThresholdParams",
    "NlssTransforms",
    "shrink_gate",
    "soft_threshold",
    "group_threshold_classical",
    "compute_adjacency",
    "learned_group_threshold",
    "update_adjacency",
    "adaptive_threshold",
]


@dataclass(frozen=True)
class ThresholdParams:
    """Per-subband threshold pair: tau = tau0 + sigma_hat * tau1."""

    tau0: np.ndarray
    tau1: np.ndarray

    def __post_init__(self):
        if self.tau0.shape != self.tau1.shape or self.tau0.ndim != 1:
            raise ValueError("tau0 and tau1 must be 1D with matching length")


@dataclass(frozen=True)
class NlssTransforms:
    """Pixel-wise channel transforms shared across layers, each (M_h, M).

    w_theta/w_phi embed features for the similarity, w_alpha embeds the code
    whose neighborhood energy is pooled, w_beta (nonnegative) maps pooled
    energies back to per-subband denominators. gamma is the adjacency
    momentum blend weight.
    """

    w_theta: np.ndarray
    w_phi: np.ndarray
    w_alpha: np.ndarray
    w_beta: np.ndarray
    gamma: float

    def __post_init__(self):
        shapes = {self.w_theta.shape, self.w_phi.shape, self.w_alpha.shape, self.w_beta.shape}
        if len(shapes) != 1 or self.w_theta.ndim != 2:
            raise ValueError("all four transforms must share one (M_h, M) shape")
        if not 0.0 <= float(self.gamma) <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    @property
    def m_hidden(self) -> int:
        return self.w_theta.shape[0]


def _as_arr(x) -> np.ndarray:
    return x.data if isinstance(x, LatentCode) else np.asarray(x)


def _tau_col(tau, nsub: int) -> np.ndarray:
    t = np.asarray(tau, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("thresholds must be nonnegative")
    if t.ndim == 1:
        if t.shape[0] != nsub:
            raise ValueError(f"threshold length {t.shape[0]} != subband count {nsub}")
        return t[:, None, None]
    if t.ndim == 0:
        return t
    raise ValueError("tau must be a scalar or a per-subband vector")


def shrink_gate(tau, den: np.ndarray) -> np.ndarray:
    """Elementwise (1 - tau / den)_+ with the zero-denominator convention above."""
    pos = den > 0
    safe = np.where(pos, den, 1.0)
    gate = np.where(pos, np.maximum(1.0 - tau / safe, 0.0),
                    np.where(np.broadcast_to(tau <= 0, den.shape), 1.0, 0.0))
    return gate


def _wrap_like(ref, data):
    return LatentCode(data) if isinstance(ref, LatentCode) else data


def soft_threshold(z, tau):
    """Modulus shrinkage z * (1 - tau/|z|)_+, per subband threshold."""
    za = _as_arr(z)
    t = _tau_col(tau, za.shape[0])
    return _wrap_like(z, za * shrink_gate(t, np.abs(za)))


def group_threshold_classical(z, tau, A: CircSparse):
    """Group shrinkage by neighborhood energy under a fixed adjacency.

    The adjacency acts channel-wise: xi_m = sqrt(A |z_m|^2). With the identity
    adjacency this reduces exactly to soft_threshold.
    """
    za = _as_arr(z)
    t = _tau_col(tau, za.shape[0])
    xi = np.sqrt(att_values(A.values, (za * np.conj(za)).real, A.pattern))
    return _wrap_like(z, za * shrink_gate(t, xi))


def compute_adjacency(z, t: NlssTransforms, rho: np.ndarray, window: int) -> CircSparse:
    """Row-softmax of windowed feature distances of the code.

    Distances are -0.5 || (w_theta z[i] - w_phi z[j]) / rho ||^2; the 1/rho
    channel scaling is folded in by pre-scaling both feature maps.
    """
    za = _as_arr(z)
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0):
        raise ValueError("rho must be positive")
    if rho.shape != (t.m_hidden,):
        raise ValueError(f"rho must have shape ({t.m_hidden},)")
    kf = np.einsum("hm,mij->hij", t.w_theta, za) / rho[:, None, None]
    qf = np.einsum("hm,mij->hij", t.w_phi, za) / rho[:, None, None]
    pat = BccbPattern(za.shape[1], za.shape[2], window)
    return CircSparse(pat, softmax_values(dist_sim_values(kf, qf, pat)))


def learned_group_threshold(z, tau, A: CircSparse, t: NlssTransforms):
    """Learned group shrinkage: gate by w_beta^T sqrt(A (w_alpha z)^2)."""
    za = _as_arr(z)
    tcol = _tau_col(tau, za.shape[0])
    u = np.einsum("hm,mij->hij", t.w_alpha, za)
    xi = np.sqrt(att_values(A.values, (u * np.conj(u)).real, A.pattern))
    den = np.einsum("hm,hij->mij", t.w_beta, xi)
    return _wrap_like(z, za * shrink_gate(tcol, den))


def update_adjacency(A_new: CircSparse, A_old: CircSparse, gamma: float) -> CircSparse:
    """Momentum blend gamma * A_new + (1 - gamma) * A_old."""
    if A_new.pattern != A_old.pattern:
        raise ValueError("adjacency patterns differ")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    return CircSparse(A_new.pattern, gamma * A_new.values + (1.0 - gamma) * A_old.values)


def adaptive_threshold(p: ThresholdParams, sigma_hat) -> np.ndarray:
    """Noise-scaled thresholds tau0 + sigma_hat * tau1; blind mode passes None."""
    if sigma_hat is None:
        return p.tau0.copy()
    return p.tau0 + float(sigma_hat) * p.tau1
