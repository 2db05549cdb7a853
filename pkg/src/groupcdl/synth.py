"""Synthetic grayscale texture corpus for desk-scale training.

Every generator is deterministic given its rng and leans on repetition:
stripes, gratings and tiled patterns recur across the image, which is the
regime where nonlocal grouping actually pays off over per-pixel shrinkage.
Values live in [0, 1], single channel.
"""

from __future__ import annotations

import numpy as np

from .core import Image

__all__ = ["stripes", "grating", "checker", "cartoon", "synth_image", "make_corpus"]


def _coords(rng, n):
    theta = rng.uniform(0.0, np.pi)
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    return np.cos(theta) * xx + np.sin(theta) * yy


def stripes(rng, n: int) -> np.ndarray:
    """Hard-edged square wave bars at a random angle and duty cycle."""
    t = _coords(rng, n)
    period = rng.uniform(4.0, 10.0)
    duty = rng.uniform(0.3, 0.7)
    phase = rng.uniform(0.0, 1.0)
    lo = rng.uniform(0.0, 0.25)
    hi = rng.uniform(0.75, 1.0)
    frac = np.mod(t / period + phase, 1.0)
    return np.where(frac < duty, hi, lo)


def grating(rng, n: int) -> np.ndarray:
    t = _coords(rng, n)
    period = rng.uniform(4.0, 12.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    amp = rng.uniform(0.3, 0.5)
    img = 0.5 + amp * np.sin(2 * np.pi * t / period + phase)
    if rng.uniform() < 0.5:
        img += 0.5 * amp * np.sin(4 * np.pi * t / period + phase)
    return np.clip(img, 0.0, 1.0)


def checker(rng, n: int) -> np.ndarray:
    """Product of two square waves: a tiled dot/check texture."""
    a = stripes(rng, n)
    b = stripes(rng, n)
    a = a > a.mean()
    b = b > b.mean()
    lo = rng.uniform(0.0, 0.25)
    hi = rng.uniform(0.75, 1.0)
    return np.where(a ^ b, hi, lo)


def cartoon(rng, n: int) -> np.ndarray:
    """Piecewise-constant shapes on a flat background."""
    img = np.full((n, n), rng.uniform(0.1, 0.9))
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    for _ in range(rng.integers(3, 7)):
        val = rng.uniform(0.0, 1.0)
        cy, cx = rng.uniform(0.15 * n, 0.85 * n, size=2)
        ry, rx = rng.uniform(0.08 * n, 0.3 * n, size=2)
        if rng.uniform() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        img[mask] = val
    return img


_KINDS = (stripes, grating, checker, cartoon)
_WEIGHTS = np.array([0.35, 0.25, 0.2, 0.2])


def synth_image(rng, n: int = 96, kind: str | None = None) -> Image:
    """One random texture; kind picks a generator by name if given."""
    if kind is None:
        gen = _KINDS[rng.choice(len(_KINDS), p=_WEIGHTS)]
    else:
        table = {g.__name__: g for g in _KINDS}
        if kind not in table:
            raise ValueError(f"unknown texture kind {kind!r}")
        gen = table[kind]
    return Image(gen(rng, n)[None].astype(float))


def make_corpus(seed, count: int, n: int = 96) -> list[Image]:
    """Deterministic list of textures; seed may be an int or a seed sequence list."""
    base = seed if isinstance(seed, (list, tuple)) else [seed]
    return [synth_image(np.random.default_rng([*base, i]), n) for i in range(count)]
