"""Free-form editable-region masks.

A mask is H x W x 1 with values in {0, 1}: 0 marks pixels the model may
repaint, 1 marks pixels that must be kept. Training masks are closed
blobs built from 18 control points in polar order around a random
center, joined by quadratic Bezier arcs and filled. Angle-sorting keeps
the outline simple (non self-intersecting), so the editable interior is
a single connected region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

_CURVE_SAMPLES = 24


@dataclass(frozen=True)
class MaskConfig:
    height: int = 32
    width: int = 32
    # Blob center constrained away from the border, as fractions of the dims.
    center_low: float = 0.3
    center_high: float = 0.7
    # Control-point radii as fractions of min(height, width).
    radius_low: float = 0.15
    radius_high: float = 0.45
    # Accepted editable-area fraction; resample until satisfied.
    min_area: float = 0.05
    max_area: float = 0.40
    n_points: int = 18
    max_tries: int = 100


def _quad_bezier(p0, p1, p2, n: int) -> list[tuple[float, float]]:
    ts = np.linspace(0.0, 1.0, n, endpoint=False)
    pts = ((1 - ts) ** 2)[:, None] * p0 + (2 * ts * (1 - ts))[:, None] * p1 + (ts**2)[:, None] * p2
    return [(float(x), float(y)) for x, y in pts]


def _blob_outline(rng: np.random.Generator, cfg: MaskConfig) -> list[tuple[float, float]]:
    cx = rng.uniform(cfg.center_low, cfg.center_high) * cfg.width
    cy = rng.uniform(cfg.center_low, cfg.center_high) * cfg.height
    scale = min(cfg.height, cfg.width)
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, cfg.n_points))
    radii = rng.uniform(cfg.radius_low, cfg.radius_high, cfg.n_points) * scale
    points = np.stack(
        [cx + radii * np.cos(angles), cy + radii * np.sin(angles)], axis=1
    )
    # Consecutive triples (p0,p1,p2), (p2,p3,p4), ... wrap back to the start,
    # each drawn as one quadratic arc with the middle point as control.
    outline: list[tuple[float, float]] = []
    n = cfg.n_points
    for k in range(0, n, 2):
        p0 = points[k]
        p1 = points[(k + 1) % n]
        p2 = points[(k + 2) % n]
        outline.extend(_quad_bezier(p0, p1, p2, _CURVE_SAMPLES))
    return outline


def bezier_mask(rng_seed: int, cfg: MaskConfig = MaskConfig()) -> np.ndarray:
    """Sample a free-form mask; identical output for identical (seed, cfg)."""
    if cfg.n_points % 2 or cfg.n_points < 4:
        raise ValueError(f"n_points must be even and >= 4, got {cfg.n_points}")
    rng = np.random.default_rng(rng_seed)
    for _ in range(cfg.max_tries):
        if cfg.radius_high <= 0.0:
            # Degenerate geometry: nothing editable.
            mask = np.ones((cfg.height, cfg.width, 1), dtype=np.float32)
        else:
            outline = _blob_outline(rng, cfg)
            canvas = Image.new("L", (cfg.width, cfg.height), 1)
            ImageDraw.Draw(canvas).polygon(outline, fill=0, outline=0)
            mask = np.asarray(canvas, dtype=np.float32)[:, :, None]
        editable = float(1.0 - mask.mean())
        if cfg.min_area <= editable <= cfg.max_area:
            return mask
    raise ValueError(
        f"no mask with editable fraction in [{cfg.min_area}, {cfg.max_area}] "
        f"after {cfg.max_tries} tries (seed={rng_seed})"
    )
