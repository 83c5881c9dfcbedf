"""Training loop: denoising loss plus the pixel-space inverse latent loss.

Per step, every sample gets its own uniformly drawn timestep and noise
from a step-keyed stream, so runs are reproducible regardless of how the
batch is assembled. The pixel loss decodes the one-step clean estimate
back to pixels; with its toggle off that branch is never evaluated, so
toggling it cannot perturb anything else.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from . import codec, metrics
from .checkpoint import Checkpoint
from .conditioning import Vocabulary, assemble_condition, embed_text
from .data import TrainingSample, make_training_example
from .diffusion import (
    DEFAULT_BETA_END,
    DEFAULT_BETA_START,
    DEFAULT_T,
    NoiseSchedule,
    make_schedule,
    predict_z0,
    q_sample,
)
from .masks import MaskConfig
from .model import ControlledDenoiser, ModelConfig, init_params
from .seeds import derive_seed, stream


@dataclass(frozen=True)
class LossReport:
    l_cldm: float
    l_pix: float
    total: float
    step: int

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "l_cldm": self.l_cldm,
            "l_pix": self.l_pix,
            "total": self.total,
        }


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    batch_size: int = 16
    steps: int = 3000
    lambda_pix: float = 1.0
    seed: int = 0
    inverse_latent_loss: bool = True
    T: int = DEFAULT_T
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END
    adam_betas: tuple[float, float] = (0.9, 0.999)
    proxy_steps: int = 0
    proxy_lr: float = 1e-2
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.lambda_pix < 0:
            raise ValueError(f"lambda_pix must be >= 0, got {self.lambda_pix}")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        d["model"] = self.model.to_dict()
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        d["adam_betas"] = tuple(d["adam_betas"])
        d["model"] = ModelConfig.from_dict(d["model"])
        return TrainConfig(**d)


def loss_cldm(eps, eps_hat):
    """Mean squared error between true and predicted noise."""
    if tuple(eps.shape) != tuple(eps_hat.shape):
        raise ValueError(f"shape mismatch {tuple(eps.shape)} vs {tuple(eps_hat.shape)}")
    return ((eps - eps_hat) ** 2).mean()


def loss_pix(x, x_hat):
    """Mean squared pixel error between source and reconstructed images."""
    if tuple(x.shape) != tuple(x_hat.shape):
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return ((x - x_hat) ** 2).mean()


def _batch_tensors(batch, dtype):
    conds = np.stack([assemble_condition(b) for b, _, _ in batch])
    targets = np.stack([t for _, t, _ in batch])
    cond_t = torch.from_numpy(conds.transpose(0, 3, 1, 2).copy()).to(dtype)
    x = torch.from_numpy(targets.transpose(0, 3, 1, 2).copy()).to(dtype)
    return cond_t, x


def train_step(
    batch,
    model: ControlledDenoiser,
    optimizer: torch.optim.Optimizer,
    sched: NoiseSchedule,
    cfg: TrainConfig,
    step: int,
    sample_ids=None,
) -> LossReport:
    """One gradient update on a batch of (ConditionBundle, target, mask)."""
    dtype = next(model.parameters()).dtype
    rng = stream("train-step", cfg.seed, step)
    B = len(batch)
    ts = rng.integers(1, sched.T + 1, size=B)

    cond_t, x = _batch_tensors(batch, dtype)
    z0 = codec.encode_nchw(x, model.cfg.codec_factor)
    eps = torch.from_numpy(rng.standard_normal(tuple(z0.shape))).to(dtype)
    z_t = torch.stack([q_sample(z0[i], int(ts[i]), eps[i], sched) for i in range(B)])

    token_ids = [b.token_ids for b, _, _ in batch]
    if all(ids is not None for ids in token_ids):
        ctx = model.embed_captions(token_ids).to(dtype)
    else:
        ctx = torch.from_numpy(np.stack([b.text for b, _, _ in batch])).to(dtype)

    t_t = torch.from_numpy(ts.astype(np.int64))
    eps_hat = model.forward_controlled(z_t, t_t, ctx, cond_t)
    l_c = loss_cldm(eps, eps_hat)

    if cfg.inverse_latent_loss:
        z0_hat = torch.stack(
            [predict_z0(z_t[i], eps_hat[i], int(ts[i]), sched) for i in range(B)]
        )
        x_hat = codec.decode_nchw(z0_hat, model.cfg.codec_factor)
        l_p = loss_pix(x, x_hat)
        total = l_c + cfg.lambda_pix * l_p
        l_p_f = float(l_p.detach())
    else:
        total = l_c
        l_p_f = 0.0

    l_c_f = float(l_c.detach())
    if not (math.isfinite(l_c_f) and math.isfinite(l_p_f)):
        raise RuntimeError(
            f"non-finite loss at step {step}: l_cldm={l_c_f}, l_pix={l_p_f}, "
            f"t={ts.tolist()}, samples={sample_ids}"
        )

    optimizer.zero_grad(set_to_none=True)
    total.backward()
    optimizer.step()

    return LossReport(
        l_cldm=l_c_f, l_pix=l_p_f, total=l_c_f + cfg.lambda_pix * l_p_f, step=step
    )


def _epoch_batches(n: int, batch_size: int, seed: int, epoch: int):
    """Index batches for one pass: seeded shuffle, short tail dropped."""
    perm = stream("shuffle", seed, epoch).permutation(n)
    if n <= batch_size:
        yield perm
        return
    for k in range(0, n - batch_size + 1, batch_size):
        yield perm[k : k + batch_size]


def fit(
    dataset: list[TrainingSample],
    cfg: TrainConfig,
    log_path=None,
    progress=None,
) -> Checkpoint:
    """Train a fresh model on the dataset and package it as a checkpoint.

    `progress`, if given, is called with each LossReport. With steps = 0
    the returned checkpoint holds the untouched initial parameters.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    torch.set_num_threads(1)  # keeps reductions bit-reproducible across hosts

    vocab = Vocabulary.from_words(
        w for s in dataset for w in s.caption.lower().split()
    )
    model_cfg = dataclasses.replace(cfg.model, vocab_size=len(vocab))
    sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    model = init_params(model_cfg, cfg.seed)
    optimizer = torch.optim.Adam(
        model.trainable_parameters(), lr=cfg.lr, betas=cfg.adam_betas
    )
    mask_cfg = MaskConfig(height=model_cfg.image_size, width=model_cfg.image_size)

    history: list[LossReport] = []
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        step = 0
        epoch = 0
        while step < cfg.steps:
            for idx in _epoch_batches(len(dataset), cfg.batch_size, cfg.seed, epoch):
                table = model.token_table_array()
                batch = [
                    make_training_example(
                        dataset[i],
                        derive_seed("mask", cfg.seed, epoch, int(i)),
                        vocab,
                        table,
                        mask_cfg,
                    )
                    for i in idx
                ]
                ids = [dataset[i].id for i in idx]
                report = train_step(batch, model, optimizer, sched, cfg, step, ids)
                history.append(report)
                if log_fh:
                    log_fh.write(json.dumps(report.as_dict()) + "\n")
                if progress:
                    progress(report)
                step += 1
                if step >= cfg.steps:
                    break
            epoch += 1
    finally:
        if log_fh:
            log_fh.close()

    proxy_w, proxy_b, proxy_trained = _init_proxy(model_cfg)
    if cfg.proxy_steps > 0:
        proxy_w, proxy_b = train_text_proxy(
            dataset, vocab, model.token_table_array(), cfg
        )
        proxy_trained = True

    tensors = {n: p.detach().cpu().numpy().astype(np.float32) for n, p in model.named_parameters()}
    tensors["text_proxy.weight"] = proxy_w
    tensors["text_proxy.bias"] = proxy_b
    return Checkpoint(
        model_config=model_cfg,
        schedule=sched.to_config(),
        codec_factor=model_cfg.codec_factor,
        vocab=vocab.tokens,
        train_config=cfg.to_dict(),
        final_step=len(history),
        loss_history=[r.as_dict() for r in history],
        tensors=tensors,
        proxy_trained=proxy_trained,
    )


def _init_proxy(model_cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray, bool]:
    w = np.zeros((model_cfg.text_dim, metrics.POOLED_FEATURE_DIM), dtype=np.float32)
    b = np.zeros((model_cfg.text_dim,), dtype=np.float32)
    return w, b, False


def train_text_proxy(
    dataset: list[TrainingSample],
    vocab: Vocabulary,
    table: np.ndarray,
    cfg: TrainConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Fit the image-to-text-embedding head used by the alignment metric.

    A linear map from pooled perceptual features to the text-embedding
    space, trained contrastively: each image should land closest to its
    own caption's embedding within the batch.
    """
    feats = metrics.pooled_features([s.image for s in dataset])
    texts = np.stack([embed_text(s.caption, vocab, table) for s in dataset])
    feats_t = torch.from_numpy(feats.astype(np.float32))
    texts_t = torch.from_numpy(texts.astype(np.float32))
    texts_t = torch.nn.functional.normalize(texts_t, dim=1)

    init = stream("proxy-init", cfg.seed)
    w = torch.tensor(
        init.standard_normal((table.shape[1], feats.shape[1])) / math.sqrt(feats.shape[1]),
        dtype=torch.float32,
        requires_grad=True,
    )
    b = torch.zeros(table.shape[1], dtype=torch.float32, requires_grad=True)
    opt = torch.optim.Adam([w, b], lr=cfg.proxy_lr)
    n = len(dataset)
    batch = min(32, n)
    for step in range(cfg.proxy_steps):
        idx = stream("proxy", cfg.seed, step).integers(0, n, size=batch)
        img = torch.nn.functional.normalize(feats_t[idx] @ w.T + b, dim=1)
        logits = img @ texts_t[idx].T / 0.1
        loss = torch.nn.functional.cross_entropy(logits, torch.arange(batch))
        opt.zero_grad()
        loss.backward()
        opt.step()
    return (
        w.detach().numpy().astype(np.float32),
        b.detach().numpy().astype(np.float32),
    )
