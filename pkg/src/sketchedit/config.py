"""Training configuration files: flat JSON validated against a schema.

Unknown keys are rejected so typos fail loudly; missing keys pick up the
schema defaults below.
"""

from __future__ import annotations

import json

import jsonschema

from .model import ModelConfig
from .training import TrainConfig

TRAIN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lr": {"type": "number", "exclusiveMinimum": 0, "default": 2e-4},
        "batch_size": {"type": "integer", "minimum": 1, "default": 16},
        "steps": {"type": "integer", "minimum": 0, "default": 3000},
        "lambda_pix": {"type": "number", "minimum": 0, "default": 1.0},
        "seed": {"type": "integer", "default": 0},
        "inverse_latent_loss": {"type": "boolean", "default": True},
        "extra_channels": {"type": "boolean", "default": True},
        "T": {"type": "integer", "minimum": 1, "default": 200},
        "beta_start": {"type": "number", "exclusiveMinimum": 0, "default": 1e-4},
        "beta_end": {"type": "number", "exclusiveMinimum": 0, "default": 0.035},
        "image_size": {"type": "integer", "minimum": 4, "default": 32},
        "codec_factor": {"type": "integer", "minimum": 1, "default": 2},
        "level_widths": {
            "type": "array",
            "items": {"type": "integer", "minimum": 8},
            "minItems": 2,
            "maxItems": 2,
            "default": [32, 64],
        },
        "blocks_per_level": {"type": "integer", "minimum": 1, "default": 2},
        "time_dim": {"type": "integer", "minimum": 8, "default": 64},
        "text_dim": {"type": "integer", "minimum": 8, "default": 64},
        "freeze_base": {"type": "boolean", "default": False},
        "proxy_steps": {"type": "integer", "minimum": 0, "default": 300},
        "proxy_lr": {"type": "number", "exclusiveMinimum": 0, "default": 1e-2},
    },
}


def _with_defaults(doc: dict) -> dict:
    merged = {k: v["default"] for k, v in TRAIN_CONFIG_SCHEMA["properties"].items()}
    merged.update(doc)
    return merged


def train_config_from_dict(doc: dict) -> TrainConfig:
    jsonschema.validate(doc, TRAIN_CONFIG_SCHEMA)
    v = _with_defaults(doc)
    model = ModelConfig(
        image_size=v["image_size"],
        codec_factor=v["codec_factor"],
        level_widths=tuple(v["level_widths"]),
        blocks_per_level=v["blocks_per_level"],
        time_dim=v["time_dim"],
        text_dim=v["text_dim"],
        extra_channels=v["extra_channels"],
        freeze_base=v["freeze_base"],
    )
    return TrainConfig(
        lr=v["lr"],
        batch_size=v["batch_size"],
        steps=v["steps"],
        lambda_pix=v["lambda_pix"],
        seed=v["seed"],
        inverse_latent_loss=v["inverse_latent_loss"],
        T=v["T"],
        beta_start=v["beta_start"],
        beta_end=v["beta_end"],
        proxy_steps=v["proxy_steps"],
        proxy_lr=v["proxy_lr"],
        model=model,
    )


def load_train_config(path) -> TrainConfig:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config file must contain a JSON object")
    return train_config_from_dict(doc)
