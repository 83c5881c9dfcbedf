"""HTTP edit service on the standard-library threaded server.

JSON in, JSON out; images travel as base64 PNG strings. The checkpoint
is loaded once and shared read-only across request threads, so identical
concurrent requests return identical bytes. Optionally serves a static
UI directory on non-API paths.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import metrics, pngio
from .checkpoint import Checkpoint
from .conditioning import extract_sketch
from .sampling import EditRequest, Pipeline, blended_sample


class ServiceError(Exception):
    def __init__(self, status: int, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.field = field

    def body(self) -> dict:
        out = {"error": str(self)}
        if self.field:
            out["field"] = self.field
        return out


class EditService:
    """Request handling logic, independent of the HTTP plumbing."""

    def __init__(self, ckpt: Checkpoint | None, ui_dir=None):
        self.pipeline = Pipeline.from_checkpoint(ckpt) if ckpt is not None else None
        self.ui_dir = os.path.abspath(ui_dir) if ui_dir else None

    def _require_pipeline(self) -> Pipeline:
        if self.pipeline is None:
            raise ServiceError(503, "no model loaded")
        return self.pipeline

    def health(self) -> dict:
        return {"status": "ok", "model_loaded": self.pipeline is not None}

    def model_info(self) -> dict:
        pipe = self._require_pipeline()
        cfg = pipe.model.cfg
        return {
            "image_size": cfg.image_size,
            "T": pipe.sched.T,
            "codec_factor": pipe.codec_factor,
            "vocab_size": len(pipe.vocab),
            "text_dim": cfg.text_dim,
            "extra_channels": cfg.extra_channels,
            "proxy_trained": pipe.proxy.trained,
        }

    @staticmethod
    def _field(body: dict, name: str, kind, decode=None):
        if name not in body:
            raise ServiceError(400, f"missing field {name!r}", field=name)
        value = body[name]
        if kind is int and isinstance(value, bool) or not isinstance(value, kind):
            raise ServiceError(400, f"field {name!r} has wrong type", field=name)
        if decode is None:
            return value
        try:
            return decode(value)
        except ServiceError:
            raise
        except Exception as exc:
            raise ServiceError(400, f"field {name!r} is not a valid PNG: {exc}", field=name)

    def edit(self, body: dict) -> dict:
        pipe = self._require_pipeline()
        source = self._field(
            body, "image", str, lambda v: pngio.image_from_png_bytes(pngio.b64_to_bytes(v))
        )
        mask = self._field(
            body, "mask", str, lambda v: pngio.mask_from_png_bytes(pngio.b64_to_bytes(v))
        )
        sketch = self._field(
            body, "sketch", str, lambda v: pngio.image_from_png_bytes(pngio.b64_to_bytes(v))
        )
        prompt = self._field(body, "prompt", str)
        seed = self._field(body, "seed", int)
        steps = self._field(body, "steps", int)
        latent_mask = body.get("latent_mask", True)
        if not isinstance(latent_mask, bool):
            raise ServiceError(400, "field 'latent_mask' has wrong type", field="latent_mask")

        h, w = source.shape[:2]
        if (h, w) != (pipe.image_size, pipe.image_size):
            raise ServiceError(
                400,
                f"image dims ({h}, {w}) do not match model size "
                f"({pipe.image_size}, {pipe.image_size})",
                field="image",
            )
        if mask.shape[:2] != (h, w):
            raise ServiceError(
                400, f"mask dims {mask.shape[:2]} != image dims {(h, w)}", field="mask"
            )
        if sketch.shape != source.shape:
            raise ServiceError(
                400,
                f"sketch dims {sketch.shape[:2]} != image dims {(h, w)}",
                field="sketch",
            )
        if steps < 1:
            raise ServiceError(400, f"steps must be >= 1, got {steps}", field="steps")
        if steps > pipe.sched.T:
            raise ServiceError(
                422, f"steps={steps} exceeds schedule T={pipe.sched.T}", field="steps"
            )

        req = EditRequest(
            source=source,
            mask=mask,
            user_sketch=sketch,
            prompt=prompt,
            steps=steps,
            seed=seed,
            latent_mask_sampling=latent_mask,
        )
        start = time.monotonic()
        result = blended_sample(pipe, req)
        duration_ms = (time.monotonic() - start) * 1000.0

        kept = int((mask[:, :, 0] == 1.0).sum())
        err = metrics.pre_error(result, source, mask) if kept else None
        return {
            "image": pngio.b64_of(pngio.image_to_png_bytes(result)),
            "pre_error": err,
            "duration_ms": duration_ms,
        }

    def extract(self, body: dict) -> dict:
        image = self._field(
            body, "image", str, lambda v: pngio.image_from_png_bytes(pngio.b64_to_bytes(v))
        )
        return {"sketch": pngio.b64_of(pngio.image_to_png_bytes(extract_sketch(image)))}

    def static_file(self, path: str) -> tuple[bytes, str] | None:
        if self.ui_dir is None:
            return None
        rel = path.lstrip("/") or "index.html"
        full = os.path.abspath(os.path.join(self.ui_dir, rel))
        if not (full == self.ui_dir or full.startswith(self.ui_dir + os.sep)):
            return None
        if not os.path.isfile(full):
            return None
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as fh:
            return fh.read(), ctype


class _Handler(BaseHTTPRequestHandler):
    service: EditService  # set on the subclass by make_server

    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _cors(self):
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _send_json(self, status: int, obj) -> None:
        blob = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def _send_bytes(self, data: bytes, ctype: str) -> None:
        self.send_response(200)
        self._cors()
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw.decode("utf-8"))
        except Exception:
            raise ServiceError(400, "request body is not valid JSON")
        if not isinstance(body, dict):
            raise ServiceError(400, "request body must be a JSON object")
        return body

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        try:
            if self.path == "/api/health":
                self._send_json(200, self.service.health())
            elif self.path == "/api/model-info":
                self._send_json(200, self.service.model_info())
            elif self.path.startswith("/api/"):
                self._send_json(404, {"error": f"unknown endpoint {self.path}"})
            else:
                hit = self.service.static_file(self.path.split("?")[0])
                if hit is None:
                    self._send_json(404, {"error": "not found"})
                else:
                    self._send_bytes(*hit)
        except ServiceError as err:
            self._send_json(err.status, err.body())

    def do_POST(self):
        try:
            body = self._read_json()
            if self.path == "/api/edit":
                self._send_json(200, self.service.edit(body))
            elif self.path == "/api/extract-sketch":
                self._send_json(200, self.service.extract(body))
            else:
                self._send_json(404, {"error": f"unknown endpoint {self.path}"})
        except ServiceError as err:
            self._send_json(err.status, err.body())
        except Exception as exc:  # defensive: never drop the connection silently
            self._send_json(500, {"error": f"internal error: {exc}"})


def make_server(service: EditService, host: str = "127.0.0.1", port: int = 0):
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def serve_forever(service: EditService, host: str, port: int):
    server = make_server(service, host, port)
    print(f"serving on http://{host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return server


def start_background(service: EditService, host: str = "127.0.0.1", port: int = 0):
    """Run the server on a daemon thread; returns (server, port). Test helper."""
    server = make_server(service, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, server.server_address[1]
