"""Conditioning inputs for the denoiser.

Builds everything the condition branch consumes: the masked source image,
the fused sketch, edge-map sketch extraction, the stacked 7-channel
condition image, and bag-of-tokens text embeddings.

Conventions: images are H x W x 3 in [-1, 1]; masks are H x W x 1 in
{0, 1} with 0 = editable; sketches are H x W x 3 dark-on-light. The
condition stack layout is frozen to [masked_source(3), mask(1), sketch(3)].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNK_TOKEN = "<unk>"
DEFAULT_TEXT_DIM = 64
CONDITION_CHANNELS = 7
# Channel slots in the condition stack; changing these breaks the golden test.
SLICE_MASKED_SOURCE = slice(0, 3)
SLICE_MASK = slice(3, 4)
SLICE_SKETCH = slice(4, 7)


def _check_spatial(a, b, what: str) -> None:
    if tuple(a.shape[:2]) != tuple(b.shape[:2]):
        raise ValueError(f"{what}: spatial dims {a.shape[:2]} vs {b.shape[:2]}")


def masked_source(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Zero out editable pixels: keeps RGB only where the mask protects them.

    The fill value is 0 (mid gray in [-1, 1] coding) so no edit-region
    content leaks into the conditioning.
    """
    _check_spatial(x, m, "masked_source")
    return m * x


def fuse_sketch(sketch_src: np.ndarray, sketch_user: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Source sketch outside the edit region, user strokes inside it."""
    _check_spatial(sketch_src, m, "fuse_sketch")
    if sketch_src.shape != sketch_user.shape:
        raise ValueError(
            f"fuse_sketch: sketch shapes differ {sketch_src.shape} vs {sketch_user.shape}"
        )
    return m * sketch_src + (1.0 - m) * sketch_user


def extract_sketch(x: np.ndarray, edge_threshold: float = 0.2) -> np.ndarray:
    """Deterministic edge-map sketch: dark strokes on a light background.

    Gradient magnitude from 3x3 horizontal/vertical difference kernels on
    the channel-mean image, normalized by its maximum, thresholded, and
    replicated to 3 channels. A constant image yields a blank (all +1)
    sketch. Invariant under global brightness shifts of the input.
    """
    gray = np.asarray(x, dtype=np.float64).mean(axis=2)
    p = np.pad(gray, 1, mode="edge")
    # Sobel pair; the border is edge-replicated so a flat image stays flat.
    gx = (
        (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    mag = np.hypot(gx, gy)
    peak = mag.max()
    edges = mag > edge_threshold * peak if peak > 0.0 else np.zeros_like(mag, dtype=bool)
    line = np.where(edges, -1.0, 1.0).astype(np.float32)
    return np.repeat(line[:, :, None], 3, axis=2)


@dataclass(frozen=True)
class Vocabulary:
    """Fixed token list; index 0 is reserved for unknown tokens."""

    tokens: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != UNK_TOKEN:
            raise ValueError(f"vocabulary must start with {UNK_TOKEN!r}")
        object.__setattr__(self, "index", {tok: i for i, tok in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    @staticmethod
    def from_words(words) -> "Vocabulary":
        ordered = sorted(set(words) - {UNK_TOKEN})
        return Vocabulary(tokens=(UNK_TOKEN, *ordered))


def tokenize(caption: str, vocab: Vocabulary) -> list[int]:
    """Lowercase whitespace tokenization; unknown words map to the UNK id."""
    words = caption.lower().split()
    if not words:
        raise ValueError("caption is empty")
    return [vocab.index.get(w, 0) for w in words]


def embed_text(caption: str, vocab: Vocabulary, table) -> np.ndarray:
    """Bag-of-tokens embedding: the mean of the caption's token vectors.

    `table` is the (vocab_size, dim) embedding matrix; numpy and torch
    tensors both work. Order-invariant by construction.
    """
    ids = tokenize(caption, vocab)
    return table[ids].mean(axis=0)


@dataclass
class ConditionBundle:
    """Everything the condition branch sees for one image.

    token_ids is carried alongside the precomputed text vector so a
    trainer can rebuild the embedding inside its autodiff graph.
    """

    x_m: np.ndarray
    m: np.ndarray
    x_s: np.ndarray
    text: np.ndarray
    token_ids: list[int] | None = None

    def validate(self) -> None:
        _check_spatial(self.x_m, self.m, "bundle")
        _check_spatial(self.x_m, self.x_s, "bundle")
        leaked = np.abs(self.x_m * (1.0 - self.m))
        if leaked.max() > 0:
            raise ValueError("masked source leaks content where mask = 0")


def assemble_condition(bundle: ConditionBundle) -> np.ndarray:
    """Stack [x_m(3), m(1), x_s(3)] into the H x W x 7 condition image."""
    bundle.validate()
    return np.concatenate([bundle.x_m, bundle.m, bundle.x_s], axis=2)


def split_condition(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if stack.shape[2] != CONDITION_CHANNELS:
        raise ValueError(f"expected {CONDITION_CHANNELS} channels, got {stack.shape[2]}")
    return stack[:, :, SLICE_MASKED_SOURCE], stack[:, :, SLICE_MASK], stack[:, :, SLICE_SKETCH]
