"""Invertible pixel/latent transform and mask downsampling.

The codec is a space-to-depth rearrangement: each f x f pixel block of an
H x W x 3 image becomes one latent cell with 3*f*f channels. Pixel (i, j, c)
lands at latent cell (i // f, j // f), channel c*f*f + (i % f)*f + (j % f).
The map is linear and exactly invertible, so keep-region guarantees
established in latent space carry back to pixels with zero error.
"""

from __future__ import annotations

import numpy as np
from einops import rearrange

DEFAULT_FACTOR = 2


def latent_channels(f: int = DEFAULT_FACTOR) -> int:
    return 3 * f * f


def _check_divisible(h: int, w: int, f: int) -> None:
    if f < 1:
        raise ValueError(f"codec factor must be >= 1, got {f}")
    if h % f or w % f:
        raise ValueError(f"dims ({h}, {w}) not divisible by codec factor {f}")


def encode(x, f: int = DEFAULT_FACTOR):
    """H x W x 3 image -> (H/f) x (W/f) x 3f^2 latent."""
    _check_divisible(x.shape[0], x.shape[1], f)
    return rearrange(x, "(h fi) (w fj) c -> h w (c fi fj)", fi=f, fj=f)


def decode(z, f: int = DEFAULT_FACTOR):
    """Exact inverse of encode. No value clamping happens here."""
    if z.shape[2] != latent_channels(f):
        raise ValueError(f"expected {latent_channels(f)} channels, got {z.shape[2]}")
    return rearrange(z, "h w (c fi fj) -> (h fi) (w fj) c", fi=f, fj=f)


def encode_nchw(x, f: int = DEFAULT_FACTOR):
    """Batched channels-first variant with the same channel layout."""
    _check_divisible(x.shape[2], x.shape[3], f)
    return rearrange(x, "b c (h fi) (w fj) -> b (c fi fj) h w", fi=f, fj=f)


def decode_nchw(z, f: int = DEFAULT_FACTOR):
    return rearrange(z, "b (c fi fj) h w -> b c (h fi) (w fj)", fi=f, fj=f)


def downsample_mask(m: np.ndarray, f: int = DEFAULT_FACTOR) -> np.ndarray:
    """Reduce an H x W x 1 binary keep-mask to latent resolution.

    Strict-keep rule: a latent cell is 1 (protected) only when every pixel
    under it is 1. Any mixed cell is released for editing, never frozen.
    """
    h, w = m.shape[0], m.shape[1]
    _check_divisible(h, w, f)
    cells = m.reshape(h // f, f, w // f, f, 1).min(axis=(1, 3))
    return cells
