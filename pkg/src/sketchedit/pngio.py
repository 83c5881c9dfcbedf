"""PNG round-tripping with an exact 8-bit quantization contract.

Float images live in [-1, 1]; storage is 8-bit with v8 = round((v+1)/2*255)
and v = v8/255*2-1. Values already on the 8-bit lattice survive a
save/load round trip bit-exactly, which the dataset and the keep-region
guarantees rely on.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image


def to_uint8(x: np.ndarray) -> np.ndarray:
    v = (np.asarray(x, dtype=np.float64) + 1.0) / 2.0 * 255.0
    return np.clip(np.rint(v), 0, 255).astype(np.uint8)


def to_float(u: np.ndarray) -> np.ndarray:
    return (np.asarray(u, dtype=np.float64) / 255.0 * 2.0 - 1.0).astype(np.float32)


def image_to_png_bytes(x: np.ndarray) -> bytes:
    """Encode an H x W x 3 float image as PNG bytes."""
    buf = io.BytesIO()
    Image.fromarray(to_uint8(x), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def image_from_png_bytes(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return to_float(arr)


def mask_to_png_bytes(m: np.ndarray) -> bytes:
    """Encode an H x W x 1 binary keep-mask as 8-bit grayscale (keep = 255)."""
    u = (np.asarray(m)[:, :, 0] > 0.5).astype(np.uint8) * 255
    buf = io.BytesIO()
    Image.fromarray(u, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def mask_from_png_bytes(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("L"), dtype=np.uint8)
    return (arr >= 128).astype(np.float32)[:, :, None]


def save_image(path, x: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(image_to_png_bytes(x))


def load_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return image_from_png_bytes(fh.read())


def save_mask(path, m: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(mask_to_png_bytes(m))


def load_mask(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return mask_from_png_bytes(fh.read())


def b64_of(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def b64_to_bytes(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)
