"""Local HTTP API over a trained generator snapshot.

Endpoints: GET /model, GET /healthz, POST /generate, POST /interpolate.
All state is read-only after startup, so the threading server needs no
locks — concurrent requests behave as if serialized.
"""

import base64
import io
import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
from PIL import Image

from .datasets import _to_bytes01
from .nets import generate

MAX_STEPS = 64


class RequestError(ValueError):
    """Client mistake → 400 with a JSON body."""


def model_info(cfg):
    d, s = cfg.net_latent_dim, cfg.net_stages
    block = d // s
    return {
        "d": d,
        "s": s,
        "partitions": [[k * block, (k + 1) * block] for k in range(s)],
        "latent_ranges": [[-1.0, 1.0]] * d,
    }


def _parse_vector(obj, d, field):
    if not isinstance(obj, list) or len(obj) != d:
        raise RequestError(f"{field} must be a list of {d} numbers")
    try:
        vec = np.asarray(obj, dtype=np.float64)
    except (TypeError, ValueError):
        raise RequestError(f"{field} must contain only numbers") from None
    if vec.shape != (d,) or not np.all(np.isfinite(vec)):
        raise RequestError(f"{field} must be {d} finite numbers")
    return np.clip(vec, -1.0, 1.0)


def render_image(model, code, size):
    return generate(model, code[None, :]).value.reshape(size, size)


def encode_image(img2d, fmt):
    """(H, W) image in [−1,1] → (content_type, bytes)."""
    u8 = _to_bytes01(img2d)
    if fmt == "pnm":
        header = f"P5\n{u8.shape[1]} {u8.shape[0]}\n255\n".encode()
        return "image/x-portable-graymap", header + u8.tobytes()
    buf = io.BytesIO()
    Image.fromarray(u8, mode="L").save(buf, format="PNG")
    return "image/png", buf.getvalue()


def negotiate_format(accept_header):
    """PNG by default; the portable formats when the client asks for them."""
    accept = (accept_header or "").lower()
    if "image/x-portable" in accept or "image/pnm" in accept:
        return "pnm"
    return "png"


def handle_generate(cfg, model, payload, fmt):
    code = _parse_vector(payload.get("latent"), cfg.net_latent_dim, "latent")
    img = render_image(model, code, cfg.net_image_size)
    return encode_image(img, fmt)


def handle_interpolate(cfg, model, payload, fmt):
    d = cfg.net_latent_dim
    a = _parse_vector(payload.get("from"), d, "from")
    b = _parse_vector(payload.get("to"), d, "to")
    steps = payload.get("steps")
    if not isinstance(steps, int) or isinstance(steps, bool):
        raise RequestError("steps must be an integer")
    if steps < 2:
        raise RequestError("steps must be at least 2 (the two endpoints)")
    if steps > MAX_STEPS:
        raise RequestError(f"steps must be <= {MAX_STEPS}")
    t = np.linspace(0.0, 1.0, steps)[:, None]
    codes = (1.0 - t) * a + t * b
    frames = []
    for code in codes:
        _, raw = encode_image(render_image(model, code, cfg.net_image_size),
                              fmt)
        frames.append(base64.b64encode(raw).decode("ascii"))
    return frames


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):  # keep test output clean
        pass

    # -- plumbing -------------------------------------------------------

    def _headers(self, code, content_type, length):
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(length))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()

    def _send_json(self, obj, code=200):
        body = json.dumps(obj).encode()
        self._headers(code, "application/json", len(body))
        self.wfile.write(body)

    def _send_bytes(self, content_type, body):
        self._headers(200, content_type, len(body))
        self.wfile.write(body)

    def _read_json(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        try:
            payload = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError):
            raise RequestError("request body is not valid JSON") from None
        if not isinstance(payload, dict):
            raise RequestError("request body must be a JSON object")
        return payload

    # -- methods ----------------------------------------------------------

    def do_OPTIONS(self):
        self._headers(204, "text/plain", 0)

    def do_GET(self):
        cfg = self.server.cfg
        if self.path == "/healthz":
            self._send_json({"status": "ok"})
        elif self.path == "/model":
            self._send_json(model_info(cfg))
        else:
            self._send_json({"error": f"no such path {self.path}"}, code=404)

    def do_POST(self):
        cfg, model = self.server.cfg, self.server.model
        fmt = negotiate_format(self.headers.get("Accept"))
        try:
            payload = self._read_json()
            if self.path == "/generate":
                content_type, body = handle_generate(cfg, model, payload, fmt)
                self._send_bytes(content_type, body)
            elif self.path == "/interpolate":
                frames = handle_interpolate(cfg, model, payload, fmt)
                self._send_json(frames)
            else:
                self._send_json({"error": f"no such path {self.path}"},
                                code=404)
        except RequestError as exc:
            self._send_json({"error": str(exc)}, code=400)


def make_server(cfg, model, host="127.0.0.1", port=0):
    """Bound-but-not-running server; port 0 picks a free one (see .server_port)."""
    httpd = ThreadingHTTPServer((host, port), _Handler)
    httpd.cfg = cfg
    httpd.model = model
    return httpd


def serve(cfg, model, host="127.0.0.1", port=8765):
    httpd = make_server(cfg, model, host=host, port=port)
    print(f"serving on http://{host}:{httpd.server_port}  "
          f"(d={cfg.net_latent_dim}, s={cfg.net_stages})")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0
