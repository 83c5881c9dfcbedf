"""Procedural garment dataset: tiny rendered clothing images with captions.

Each sample is a 32x32 image of one silhouette (tee, dress, pants) in one
of eight colors with one of three fill patterns, on a light background,
captioned "<color> <silhouette> with <pattern>". Rendering goes straight
to 8-bit values so stored PNGs reproduce the in-memory arrays exactly and
sketches re-derive bit-identically after a round trip.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from . import pngio
from .conditioning import (
    ConditionBundle,
    Vocabulary,
    embed_text,
    extract_sketch,
    fuse_sketch,
    masked_source,
    tokenize,
)
from .masks import MaskConfig, bezier_mask
from .seeds import derive_seed, stream

COLORS: tuple[tuple[str, tuple[int, int, int]], ...] = (
    ("red", (200, 40, 40)),
    ("green", (40, 160, 40)),
    ("blue", (40, 60, 200)),
    ("yellow", (230, 200, 40)),
    ("purple", (140, 40, 180)),
    ("orange", (240, 140, 30)),
    ("cyan", (40, 190, 200)),
    ("magenta", (220, 40, 160)),
)
SILHOUETTES = ("tee", "dress", "pants")
PATTERNS = ("plain", "stripes", "dots")


@dataclass(frozen=True)
class DatasetSpec:
    colors: tuple[tuple[str, tuple[int, int, int]], ...] = COLORS
    silhouettes: tuple[str, ...] = SILHOUETTES
    patterns: tuple[str, ...] = PATTERNS
    image_size: int = 32
    background: int = 240
    jitter: int = 2

    def __post_init__(self):
        if not self.colors or not self.silhouettes or not self.patterns:
            raise ValueError("spec must list at least one color, silhouette and pattern")


@dataclass
class TrainingSample:
    image: np.ndarray
    sketch: np.ndarray
    caption: str
    id: str


@dataclass(frozen=True)
class GarmentParams:
    color: str
    silhouette: str
    pattern: str
    dx: int
    dy: int


def vocabulary(spec: DatasetSpec = DatasetSpec()) -> Vocabulary:
    words = {"with"}
    words.update(name for name, _ in spec.colors)
    words.update(spec.silhouettes)
    words.update(spec.patterns)
    return Vocabulary.from_words(words)


def _rect(canvas: np.ndarray, r0: float, r1: float, c0: float, c1: float, dy: int, dx: int):
    """Mark an axis-aligned box given in fractional coordinates, shifted by jitter."""
    h, w = canvas.shape
    rr0 = max(0, round(r0 * h) + dy)
    rr1 = min(h, round(r1 * h) + dy)
    cc0 = max(0, round(c0 * w) + dx)
    cc1 = min(w, round(c1 * w) + dx)
    canvas[rr0:rr1, cc0:cc1] = True


def _silhouette_mask(name: str, size: int, dy: int, dx: int) -> np.ndarray:
    body = np.zeros((size, size), dtype=bool)
    if name == "tee":
        _rect(body, 0.25, 0.82, 0.31, 0.69, dy, dx)
        _rect(body, 0.25, 0.45, 0.12, 0.31, dy, dx)
        _rect(body, 0.25, 0.45, 0.69, 0.88, dy, dx)
    elif name == "dress":
        _rect(body, 0.19, 0.41, 0.34, 0.66, dy, dx)
        _rect(body, 0.41, 0.88, 0.22, 0.78, dy, dx)
    elif name == "pants":
        _rect(body, 0.19, 0.34, 0.28, 0.72, dy, dx)
        _rect(body, 0.34, 0.88, 0.28, 0.45, dy, dx)
        _rect(body, 0.34, 0.88, 0.55, 0.72, dy, dx)
    else:
        raise ValueError(f"unknown silhouette {name!r}")
    return body


def render_garment(params: GarmentParams, spec: DatasetSpec = DatasetSpec()) -> np.ndarray:
    """Draw one garment to an 8-bit canvas and return the float image."""
    palette = dict(spec.colors)
    if params.color not in palette:
        raise ValueError(f"unknown color {params.color!r}")
    if params.pattern not in spec.patterns:
        raise ValueError(f"unknown pattern {params.pattern!r}")
    size = spec.image_size
    canvas = np.full((size, size, 3), spec.background, dtype=np.uint8)
    body = _silhouette_mask(params.silhouette, size, params.dy, params.dx)

    color = np.array(palette[params.color], dtype=np.uint8)
    dark = np.rint(np.asarray(color, dtype=np.float64) * 0.55).astype(np.uint8)
    rows = np.arange(size)[:, None]
    cols = np.arange(size)[None, :]
    if params.pattern == "stripes":
        accent = (rows // 2) % 2 == 0
        accent = np.broadcast_to(accent, (size, size))
    elif params.pattern == "dots":
        accent = (rows % 4 >= 2) & (cols % 4 >= 2)
    else:
        accent = np.zeros((size, size), dtype=bool)

    canvas[body] = color
    canvas[body & accent] = dark
    return pngio.to_float(canvas)


def _caption(params: GarmentParams) -> str:
    return f"{params.color} {params.silhouette} with {params.pattern}"


def garment_params(seed: int, spec: DatasetSpec = DatasetSpec()) -> GarmentParams:
    rng = np.random.default_rng(seed)
    color = spec.colors[int(rng.integers(len(spec.colors)))][0]
    silhouette = spec.silhouettes[int(rng.integers(len(spec.silhouettes)))]
    pattern = spec.patterns[int(rng.integers(len(spec.patterns)))]
    dy = int(rng.integers(-spec.jitter, spec.jitter + 1))
    dx = int(rng.integers(-spec.jitter, spec.jitter + 1))
    return GarmentParams(color=color, silhouette=silhouette, pattern=pattern, dy=dy, dx=dx)


def generate_garment(seed: int, spec: DatasetSpec = DatasetSpec()) -> TrainingSample:
    """Render a deterministic sample for a seed: image, derived sketch, caption."""
    params = garment_params(seed, spec)
    image = render_garment(params, spec)
    return TrainingSample(
        image=image,
        sketch=extract_sketch(image),
        caption=_caption(params),
        id=f"s{seed & 0xFFFFFFFFFFFF:012x}",
    )


def make_training_example(
    sample: TrainingSample,
    mask_seed: int,
    vocab: Vocabulary,
    table: np.ndarray,
    mask_cfg: MaskConfig | None = None,
) -> tuple[ConditionBundle, np.ndarray, np.ndarray]:
    """Self-supervised pair: mask the source and ask for the source back.

    The "user" sketch is the source's own sketch, so the condition stack
    simulates a pre-edit state whose ground-truth completion is known.
    """
    if mask_cfg is None:
        h, w = sample.image.shape[:2]
        mask_cfg = MaskConfig(height=h, width=w)
    m = bezier_mask(mask_seed, mask_cfg)
    bundle = ConditionBundle(
        x_m=masked_source(sample.image, m),
        m=m,
        x_s=fuse_sketch(sample.sketch, sample.sketch, m),
        text=embed_text(sample.caption, vocab, table),
        token_ids=tokenize(sample.caption, vocab),
    )
    return bundle, sample.image, m


@dataclass
class EvalCase:
    """A held-out edit task: replace the pattern inside the mask via sketch + text."""

    source: np.ndarray
    mask: np.ndarray
    user_sketch: np.ndarray
    prompt: str
    source_caption: str
    id: str


def make_eval_case(seed: int, spec: DatasetSpec = DatasetSpec()) -> EvalCase:
    """Build an edit request against a fresh garment: same shape, new pattern."""
    params = garment_params(derive_seed("eval-garment", seed), spec)
    source = render_garment(params, spec)
    others = [p for p in spec.patterns if p != params.pattern]
    pick = stream("eval-pattern", seed)
    variant = dataclasses.replace(
        params, pattern=others[int(pick.integers(len(others)))] if others else params.pattern
    )
    target = render_garment(variant, spec)
    h, w = source.shape[:2]
    mask = bezier_mask(derive_seed("eval-mask", seed), MaskConfig(height=h, width=w))
    return EvalCase(
        source=source,
        mask=mask,
        user_sketch=extract_sketch(target),
        prompt=_caption(variant),
        source_caption=_caption(params),
        id=f"e{seed:06d}",
    )


def build_dataset(n: int, out_dir, spec: DatasetSpec = DatasetSpec(), seed: int = 0) -> None:
    """Write n samples as images/*.png, sketches/*.png and captions.jsonl."""
    if n < 0:
        raise ValueError(f"sample count must be >= 0, got {n}")
    images = os.path.join(out_dir, "images")
    sketches = os.path.join(out_dir, "sketches")
    os.makedirs(images, exist_ok=True)
    os.makedirs(sketches, exist_ok=True)
    with open(os.path.join(out_dir, "captions.jsonl"), "w", encoding="utf-8") as fh:
        for i in range(n):
            sample = generate_garment(derive_seed("garment", seed, i), spec)
            sid = f"g{i:05d}"
            pngio.save_image(os.path.join(images, f"{sid}.png"), sample.image)
            pngio.save_image(os.path.join(sketches, f"{sid}.png"), sample.sketch)
            fh.write(json.dumps({"id": sid, "caption": sample.caption}) + "\n")


def load_dataset(data_dir) -> list[TrainingSample]:
    """Read a dataset directory back into memory, checking file consistency."""
    captions_path = os.path.join(data_dir, "captions.jsonl")
    if not os.path.isfile(captions_path):
        raise FileNotFoundError(f"missing captions.jsonl in {data_dir}")
    samples = []
    with open(captions_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            sid = entry["id"]
            image_path = os.path.join(data_dir, "images", f"{sid}.png")
            sketch_path = os.path.join(data_dir, "sketches", f"{sid}.png")
            if not os.path.isfile(image_path):
                raise FileNotFoundError(f"missing image for sample {sid}: {image_path}")
            if not os.path.isfile(sketch_path):
                raise FileNotFoundError(f"missing sketch for sample {sid}: {sketch_path}")
            samples.append(
                TrainingSample(
                    image=pngio.load_image(image_path),
                    sketch=pngio.load_image(sketch_path),
                    caption=entry["caption"],
                    id=sid,
                )
            )
    return samples
