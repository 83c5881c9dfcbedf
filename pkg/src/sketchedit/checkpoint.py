"""Single-file checkpoint container.

Layout: 4-byte magic, u32 format version, u64 header length, a canonical
JSON header (metadata plus a name-sorted tensor index), then raw
little-endian float32 tensor payloads in index order. Canonical JSON and
the fixed payload order make save -> load -> save byte-stable.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
import torch

from .model import ControlledDenoiser, ModelConfig

MAGIC = b"SKED"
FORMAT_VERSION = 1
# Tensors outside the denoiser itself (metric heads etc.) use this prefix.
AUX_PREFIX = "text_proxy."


@dataclass
class Checkpoint:
    model_config: ModelConfig
    schedule: dict
    codec_factor: int
    vocab: tuple[str, ...]
    train_config: dict
    final_step: int
    loss_history: list[dict]
    tensors: dict[str, np.ndarray]
    proxy_trained: bool = False
    format_version: int = FORMAT_VERSION

    def model_tensors(self) -> dict[str, np.ndarray]:
        return {n: a for n, a in self.tensors.items() if not n.startswith(AUX_PREFIX)}


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save(ckpt: Checkpoint, path) -> None:
    names = sorted(ckpt.tensors)
    header = {
        "format_version": ckpt.format_version,
        "model": ckpt.model_config.to_dict(),
        "schedule": ckpt.schedule,
        "codec": {"factor": ckpt.codec_factor},
        "vocab": list(ckpt.vocab),
        "train": ckpt.train_config,
        "final_step": ckpt.final_step,
        "loss_history": ckpt.loss_history,
        "proxy_trained": ckpt.proxy_trained,
        "tensors": [
            {"name": n, "shape": [int(s) for s in ckpt.tensors[n].shape]} for n in names
        ],
    }
    blob = _canonical_json(header)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", ckpt.format_version))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(ckpt.tensors[n], dtype="<f4").tobytes())


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"not a checkpoint file: bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (header_len,) = struct.unpack_from("<Q", raw, 8)
    start = 16
    header = json.loads(raw[start : start + header_len].decode("utf-8"))
    offset = start + header_len
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape)
        tensors[entry["name"]] = arr.copy()
        offset += count * 4
    if offset != len(raw):
        raise ValueError(f"trailing bytes in checkpoint: {len(raw) - offset}")
    return Checkpoint(
        model_config=ModelConfig.from_dict(header["model"]),
        schedule=header["schedule"],
        codec_factor=int(header["codec"]["factor"]),
        vocab=tuple(header["vocab"]),
        train_config=header["train"],
        final_step=int(header["final_step"]),
        loss_history=header["loss_history"],
        tensors=tensors,
        proxy_trained=bool(header["proxy_trained"]),
        format_version=version,
    )


def build_model(ckpt: Checkpoint, dtype: torch.dtype = torch.float32) -> ControlledDenoiser:
    """Instantiate the denoiser from checkpoint tensors (names must match exactly)."""
    model = ControlledDenoiser(ckpt.model_config)
    stored = ckpt.model_tensors()
    expected = {n for n, _ in model.named_parameters()}
    missing = expected - stored.keys()
    extra = stored.keys() - expected
    if missing or extra:
        raise ValueError(
            f"checkpoint/model parameter mismatch: missing={sorted(missing)}, "
            f"unexpected={sorted(extra)}"
        )
    with torch.no_grad():
        for n, p in model.named_parameters():
            arr = stored[n]
            if tuple(arr.shape) != tuple(p.shape):
                raise ValueError(
                    f"tensor {n}: stored shape {tuple(arr.shape)} != model {tuple(p.shape)}"
                )
            p.copy_(torch.from_numpy(arr))
    model = model.to(dtype)
    model.eval()
    return model
