"""Noise-prediction network: small U-Net base plus a conditioned control branch.

The base branch is a two-level U-Net over latents. The control branch is a
structural copy of the base encoder that additionally receives features of
the 7-channel condition stack (masked source, mask, sketch) computed by a
small strided hint encoder. Control outputs enter the base decoder's skip
connections through 1x1 zero convolutions, so a freshly initialized model
is exactly equivalent to the base branch alone.

Text conditioning is a learned bag-of-tokens vector added to the time
embedding. There is no attention and no internal randomness; forward
passes are deterministic functions of (inputs, parameters).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn

from . import codec
from .conditioning import CONDITION_CHANNELS, SLICE_SKETCH
from .seeds import stream

_NORM_GROUPS = 8


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    codec_factor: int = 2
    level_widths: tuple[int, int] = (32, 64)
    blocks_per_level: int = 2
    time_dim: int = 64
    text_dim: int = 64
    vocab_size: int = 16
    extra_channels: bool = True  # False: hint encoder sees the sketch only
    freeze_base: bool = False

    @property
    def latent_channels(self) -> int:
        return codec.latent_channels(self.codec_factor)

    @property
    def latent_size(self) -> int:
        if self.image_size % (2 * self.codec_factor):
            raise ValueError(
                f"image size {self.image_size} must be divisible by {2 * self.codec_factor}"
            )
        return self.image_size // self.codec_factor

    @property
    def condition_channels(self) -> int:
        return CONDITION_CHANNELS if self.extra_channels else 3

    def to_dict(self) -> dict:
        d = asdict(self)
        d["level_widths"] = list(self.level_widths)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        d["level_widths"] = tuple(d["level_widths"])
        return ModelConfig(**d)


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sin/cos position features for integer timesteps, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0)
        * torch.arange(half, dtype=t.dtype, device=t.device)
        / (half - 1)
    )
    angles = t[:, None] * freqs[None, :]
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, emb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_NORM_GROUPS, cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, cout)
        self.norm2 = nn.GroupNorm(_NORM_GROUPS, cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.emb_proj(torch.nn.functional.silu(emb))[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return h + self.skip(x)


class EncoderTrunk(nn.Module):
    """Shared encoder structure: stem, level-1 blocks, downsample, level-2 blocks.

    `inject` optionally adds per-level feature maps right after the stem and
    right after the downsample (the control branch uses this for hint fusion).
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w1, w2 = cfg.level_widths
        self.stem = nn.Conv2d(cfg.latent_channels, w1, 3, padding=1)
        self.level1 = nn.ModuleList(
            ResBlock(w1, w1, cfg.time_dim) for _ in range(cfg.blocks_per_level)
        )
        self.down = nn.Conv2d(w1, w2, 3, stride=2, padding=1)
        self.level2 = nn.ModuleList(
            ResBlock(w2, w2, cfg.time_dim) for _ in range(cfg.blocks_per_level)
        )

    def forward(self, z, emb, inject=None):
        h = self.stem(z)
        if inject is not None:
            h = h + inject[0]
        for block in self.level1:
            h = block(h, emb)
        skip1 = h
        h = self.down(h)
        if inject is not None:
            h = h + inject[1]
        for block in self.level2:
            h = block(h, emb)
        return skip1, h


class HintEncoder(nn.Module):
    """Condition-stack encoder: 3x3 conv then one stride-2 conv per level.

    The first stride matches the codec factor so level-1 features align
    spatially with the latent grid without interpolation.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w1, w2 = cfg.level_widths
        self.conv_in = nn.Conv2d(cfg.condition_channels, w1, 3, padding=1)
        self.down1 = nn.Conv2d(w1, w1, 3, stride=cfg.codec_factor, padding=1)
        self.down2 = nn.Conv2d(w1, w2, 3, stride=2, padding=1)

    def forward(self, cond: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = torch.nn.functional.silu(self.conv_in(cond))
        f1 = self.down1(h)
        f2 = self.down2(torch.nn.functional.silu(f1))
        return f1, f2


class ControlledDenoiser(nn.Module):
    """Base U-Net plus control branch joined through zero convolutions."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        w1, w2 = cfg.level_widths
        self.token_table = nn.Embedding(cfg.vocab_size, cfg.text_dim)
        self.time_in = nn.Linear(cfg.time_dim, cfg.time_dim)
        self.time_out = nn.Linear(cfg.time_dim, cfg.time_dim)
        self.text_proj = nn.Linear(cfg.text_dim, cfg.time_dim)

        self.encoder = EncoderTrunk(cfg)
        self.mid = ResBlock(w2, w2, cfg.time_dim)
        self.dec2 = ResBlock(w2 + w2, w2, cfg.time_dim)
        self.up = nn.Conv2d(w2, w1, 3, padding=1)
        self.dec1 = ResBlock(w1 + w1, w1, cfg.time_dim)
        self.out_norm = nn.GroupNorm(_NORM_GROUPS, w1)
        self.out_conv = nn.Conv2d(w1, cfg.latent_channels, 3, padding=1)

        self.hint = HintEncoder(cfg)
        self.ctrl_encoder = EncoderTrunk(cfg)
        self.zero_conv1 = nn.Conv2d(w1, w1, 1)
        self.zero_conv2 = nn.Conv2d(w2, w2, 1)

    def zero_conv_parameter_names(self) -> list[str]:
        return [n for n, _ in self.named_parameters() if n.startswith("zero_conv")]

    def base_parameter_names(self) -> list[str]:
        control = ("hint.", "ctrl_encoder.", "zero_conv")
        return [n for n, _ in self.named_parameters() if not n.startswith(control)]

    def embedding_context(self, t: torch.Tensor, ctx: torch.Tensor) -> torch.Tensor:
        emb = sinusoidal_embedding(t.to(ctx.dtype), self.cfg.time_dim)
        emb = self.time_out(torch.nn.functional.silu(self.time_in(emb)))
        return emb + self.text_proj(ctx)

    def embed_captions(self, token_ids: list[list[int]]) -> torch.Tensor:
        """Mean token vectors per caption, differentiable through the table."""
        device = self.token_table.weight.device
        vecs = [
            self.token_table(torch.tensor(ids, dtype=torch.long, device=device)).mean(dim=0)
            for ids in token_ids
        ]
        return torch.stack(vecs)

    def token_table_array(self) -> np.ndarray:
        return self.token_table.weight.detach().cpu().numpy()

    def _decode(self, skip1, skip2, emb) -> torch.Tensor:
        h = self.mid(skip2, emb)
        h = self.dec2(torch.cat([h, skip2], dim=1), emb)
        h = torch.nn.functional.interpolate(h, scale_factor=2, mode="nearest")
        h = self.up(h)
        h = self.dec1(torch.cat([h, skip1], dim=1), emb)
        return self.out_conv(torch.nn.functional.silu(self.out_norm(h)))

    def forward_base(self, z: torch.Tensor, t: torch.Tensor, ctx: torch.Tensor) -> torch.Tensor:
        """Unconditioned noise prediction; output shape equals the input latent."""
        emb = self.embedding_context(t, ctx)
        skip1, skip2 = self.encoder(z, emb)
        return self._decode(skip1, skip2, emb)

    def forward_controlled(
        self, z: torch.Tensor, t: torch.Tensor, ctx: torch.Tensor, cond: torch.Tensor
    ) -> torch.Tensor:
        """Noise prediction with the condition stack injected via the control branch.

        `cond` is always the full 7-channel stack at pixel resolution; when
        the model was configured without the extra channels only the sketch
        slice feeds the hint encoder.
        """
        if cond.shape[1] != CONDITION_CHANNELS:
            raise ValueError(f"condition stack must have {CONDITION_CHANNELS} channels")
        if cond.shape[2:] != (self.cfg.image_size, self.cfg.image_size):
            raise ValueError(
                f"condition stack spatial dims {tuple(cond.shape[2:])} do not match "
                f"image size {self.cfg.image_size}"
            )
        emb = self.embedding_context(t, ctx)
        hint_in = cond if self.cfg.extra_channels else cond[:, SLICE_SKETCH]
        f1, f2 = self.hint(hint_in)
        g1, g2 = self.ctrl_encoder(z, emb, inject=(f1, f2))
        skip1, skip2 = self.encoder(z, emb)
        skip1 = skip1 + self.zero_conv1(g1)
        skip2 = skip2 + self.zero_conv2(g2)
        return self._decode(skip1, skip2, emb)

    def trainable_parameters(self):
        if not self.cfg.freeze_base:
            return list(self.parameters())
        base = set(self.base_parameter_names())
        return [p for n, p in self.named_parameters() if n not in base]


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if len(shape) == 4:  # conv weight: (out, in, kh, kw)
        return shape[1] * shape[2] * shape[3]
    if len(shape) == 2:  # linear or embedding weight
        return shape[1]
    return shape[0]


def init_params(
    cfg: ModelConfig, rng_seed: int, dtype: torch.dtype = torch.float32
) -> ControlledDenoiser:
    """Deterministic initialization from a seed.

    Weights get fan-in-scaled normal values drawn from per-tensor streams
    keyed by parameter name, biases and all zero-convolution tensors start
    at exactly zero, norm scales at one, and the control encoder is a
    verbatim copy of the freshly initialized base encoder.
    """
    model = ControlledDenoiser(cfg)
    zero_names = set(model.zero_conv_parameter_names())
    with torch.no_grad():
        for name, p in sorted(model.named_parameters()):
            if name in zero_names or name.startswith("ctrl_encoder."):
                p.zero_()
                continue
            if name.endswith(".bias"):
                p.zero_()
            elif "norm" in name:
                p.fill_(1.0)
            else:
                rng = stream("init:" + name, rng_seed)
                scale = 1.0 / math.sqrt(_fan_in(name, tuple(p.shape)))
                values = rng.standard_normal(tuple(p.shape)) * scale
                p.copy_(torch.from_numpy(values))
        model.ctrl_encoder.load_state_dict(model.encoder.state_dict())
    return model.to(dtype)
