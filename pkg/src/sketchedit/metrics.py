"""Evaluation metrics: keep-region error, Frechet distance, perceptual
distance, and a text-alignment proxy.

The perceptual feature extractor is a fixed random 3-layer conv stack
whose weights come from a seed constant baked into this module; it is
the same on every machine and never trained. The text-alignment score is
an explicitly-labeled proxy (a small learned head over those features),
not a CLIP score; reports carry proxy=true to keep that visible.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np
import torch

from . import pngio
from .conditioning import Vocabulary, embed_text
from .seeds import stream

_PERCEPTUAL_SEED = 0x7A31C0DE
_PERCEPTUAL_CHANNELS = (8, 16, 32)
POOLED_FEATURE_DIM = sum(_PERCEPTUAL_CHANNELS)
FEATURE_DIM = _PERCEPTUAL_CHANNELS[-1]

_perceptual_weights: list[torch.Tensor] | None = None


@dataclass(frozen=True)
class MetricReport:
    fid: float
    lpips_like: float
    pre_error: float
    text_align: float
    n_images: int

    def as_dict(self) -> dict:
        return {
            "fid": self.fid,
            "lpips_like": self.lpips_like,
            "pre_error": self.pre_error,
            "text_align": self.text_align,
            "proxy": True,
            "n_images": self.n_images,
        }


@dataclass(frozen=True)
class TextProxy:
    """Learned image-feature -> text-embedding head for the alignment proxy."""

    weight: np.ndarray
    bias: np.ndarray
    trained: bool


def pre_error(gen: np.ndarray, src: np.ndarray, m: np.ndarray) -> float:
    """Squared 8-bit-scale error over kept pixels, per kept pixel.

    Pixels are mapped linearly to [0, 255]; the per-channel squared
    differences are summed over every pixel with m = 1 and divided by the
    kept-pixel count. Changes inside the editable region never register.
    """
    if gen.shape != src.shape:
        raise ValueError(f"image shapes differ: {gen.shape} vs {src.shape}")
    if m.shape[:2] != gen.shape[:2]:
        raise ValueError(f"mask dims {m.shape[:2]} do not match image {gen.shape[:2]}")
    vals = np.unique(m)
    if not np.all(np.isin(vals, (0.0, 1.0))):
        raise ValueError(f"mask must be binary, found values {vals[:5]}")
    kept = m[:, :, 0] == 1.0
    count = int(kept.sum())
    if count == 0:
        raise ValueError("mask keeps no pixels; metric undefined")
    scale = 255.0 / 2.0
    diff = (np.asarray(gen, np.float64) - np.asarray(src, np.float64)) * scale
    return float((diff[kept] ** 2).sum() / count)


def _as_feature_matrix(feats, name: str) -> np.ndarray:
    arr = np.asarray(feats, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected 2-d feature array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: non-finite feature values")
    if arr.shape[0] < arr.shape[1] + 1:
        raise ValueError(
            f"{name}: need at least d+1 = {arr.shape[1] + 1} samples, got {arr.shape[0]}"
        )
    return arr


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((mat + mat.T) / 2.0)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def fid(feats_a, feats_b) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    a = _as_feature_matrix(feats_a, "feats_a")
    b = _as_feature_matrix(feats_b, "feats_b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    d = a.shape[1]
    reg = 1e-6 * np.eye(d)
    ca = np.cov(a, rowvar=False) + reg
    cb = np.cov(b, rowvar=False) + reg
    rb = _psd_sqrt(cb)
    covmean_tr = np.sqrt(
        np.clip(np.linalg.eigvalsh((lambda s: (s + s.T) / 2.0)(rb @ ca @ rb)), 0.0, None)
    ).sum()
    val = float(((mu_a - mu_b) ** 2).sum() + np.trace(ca) + np.trace(cb) - 2.0 * covmean_tr)
    return max(val, 0.0)


def _conv_stack() -> list[torch.Tensor]:
    global _perceptual_weights
    if _perceptual_weights is None:
        weights = []
        cin = 3
        for i, cout in enumerate(_PERCEPTUAL_CHANNELS):
            rng = stream("perceptual-conv", _PERCEPTUAL_SEED, i)
            w = rng.standard_normal((cout, cin, 3, 3)) / math.sqrt(cin * 9)
            weights.append(torch.from_numpy(w.astype(np.float32)))
            cin = cout
        _perceptual_weights = weights
    return _perceptual_weights


def _layer_maps(batch: torch.Tensor) -> list[torch.Tensor]:
    h = batch
    maps = []
    for w in _conv_stack():
        h = torch.nn.functional.conv2d(h, w, stride=2, padding=1)
        h = torch.nn.functional.relu(h)
        maps.append(h)
    return maps


def _unit_normalize(feat: torch.Tensor) -> torch.Tensor:
    norm = torch.sqrt((feat**2).sum(dim=1, keepdim=True) + 1e-10)
    return feat / norm


def _to_batch(images) -> torch.Tensor:
    arr = np.stack([np.asarray(im, dtype=np.float32) for im in images])
    return torch.from_numpy(arr.transpose(0, 3, 1, 2).copy())


def perceptual_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared difference of unit-normalized random-conv features."""
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    with torch.no_grad():
        maps = _layer_maps(_to_batch([a, b]))
        per_layer = [
            float(((_unit_normalize(f[0:1]) - _unit_normalize(f[1:2])) ** 2).mean())
            for f in maps
        ]
    return float(np.mean(per_layer))


def pooled_features(images, layers: str = "all") -> np.ndarray:
    """Spatially pooled conv features per image: all layers or the last one."""
    with torch.no_grad():
        maps = _layer_maps(_to_batch(images))
        pooled = [f.mean(dim=(2, 3)) for f in maps]
        if layers == "last":
            out = pooled[-1]
        else:
            out = torch.cat(pooled, dim=1)
    return out.numpy().astype(np.float64)


def extract_features(images, extractor=None) -> np.ndarray:
    """Map images to d-dim rows, order-preserving. Default: pooled last layer."""
    if extractor is not None:
        return np.stack([np.asarray(extractor(im), dtype=np.float64) for im in images])
    return pooled_features(images, layers="last")


def text_align(
    image: np.ndarray,
    caption: str,
    proxy: TextProxy,
    vocab: Vocabulary,
    table: np.ndarray,
) -> float:
    """Cosine similarity between the image head output and the caption embedding."""
    if not proxy.trained:
        raise RuntimeError("text-alignment proxy head is untrained")
    feats = pooled_features([image])[0]
    v_img = proxy.weight.astype(np.float64) @ feats + proxy.bias.astype(np.float64)
    v_txt = np.asarray(embed_text(caption, vocab, table), dtype=np.float64)
    denom = np.linalg.norm(v_img) * np.linalg.norm(v_txt)
    if denom == 0.0:
        return 0.0
    return float(np.dot(v_img, v_txt) / denom)


def evaluate_manifest(
    manifest_dir,
    proxy: TextProxy,
    vocab: Vocabulary,
    table: np.ndarray,
) -> tuple[MetricReport, dict[str, float]]:
    """Score a directory of (source, edit, mask) triplets with captions.

    Expects sources/*.png, edits/*.png, masks/*.png (filename-matched)
    and captions.jsonl lines {"id", "caption"}.
    """
    captions_path = os.path.join(manifest_dir, "captions.jsonl")
    if not os.path.isfile(captions_path):
        raise FileNotFoundError(f"missing captions.jsonl in {manifest_dir}")
    entries = []
    with open(captions_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                entries.append(json.loads(line))
    if not entries:
        raise ValueError(f"no entries in {captions_path}")

    sources, edits, masks, ids, caps = [], [], [], [], []
    for e in entries:
        sid = e["id"]
        for kind, bucket in (("sources", sources), ("edits", edits)):
            path = os.path.join(manifest_dir, kind, f"{sid}.png")
            if not os.path.isfile(path):
                raise FileNotFoundError(f"missing {kind}/{sid}.png")
            bucket.append(pngio.load_image(path))
        mask_path = os.path.join(manifest_dir, "masks", f"{sid}.png")
        if not os.path.isfile(mask_path):
            raise FileNotFoundError(f"missing masks/{sid}.png")
        masks.append(pngio.load_mask(mask_path))
        ids.append(sid)
        caps.append(e["caption"])

    per_image = {
        sid: pre_error(edit, src, m)
        for sid, edit, src, m in zip(ids, edits, sources, masks)
    }
    lpips_vals = [perceptual_distance(e_, s_) for e_, s_ in zip(edits, sources)]
    align_vals = [
        text_align(e_, c_, proxy, vocab, table) for e_, c_ in zip(edits, caps)
    ]
    report = MetricReport(
        fid=fid(extract_features(edits), extract_features(sources)),
        lpips_like=float(np.mean(lpips_vals)),
        pre_error=float(np.mean(list(per_image.values()))),
        text_align=float(np.mean(align_vals)),
        n_images=len(ids),
    )
    return report, per_image
