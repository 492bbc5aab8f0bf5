"""Procedural image data with known factors, planted-ICA vectors, and image IO.

The shapes corpus renders one anti-aliased rotated square per image, driven by
six continuous factors (x, y, scale, rotation, shade, background) so that
perturbation metrics respond smoothly. The planted-ICA generator produces
y = M*·h + ε observations with the ground truth attached, serving as the
recovery oracle. File IO speaks binary PPM (P6) and 8-bit PGM (P5), with
Pillow handling other formats and resizing on folder ingestion.
"""

import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Factor:
    name: str
    low: float
    high: float
    role: str  # x-pos | y-pos | scale | rotation | shade | background

    def __post_init__(self):
        if not self.high > self.low:
            raise ValueError(f"factor {self.name!r} has empty range")


@dataclass(frozen=True)
class FactorSpec:
    factors: tuple
    image_size: int = 32

    def __post_init__(self):
        if not 1 <= len(self.factors) <= 8:
            raise ValueError(f"factor count must be 1..8, got {len(self.factors)}")
        roles = [f.role for f in self.factors]
        if len(set(roles)) != len(roles):
            raise ValueError("duplicate renderer roles")

    @property
    def count(self):
        return len(self.factors)

    def clip(self, factors):
        lo = np.array([f.low for f in self.factors])
        hi = np.array([f.high for f in self.factors])
        return np.clip(factors, lo, hi)


def default_factor_spec(image_size=32):
    """Six factors in resolution-normalized units (positions/sizes are
    fractions of the image side, rotation in radians)."""
    return FactorSpec(factors=(
        Factor("x", 0.30, 0.70, "x-pos"),
        Factor("y", 0.30, 0.70, "y-pos"),
        Factor("scale", 0.10, 0.30, "scale"),
        Factor("rotation", 0.0, 1.4, "rotation"),
        Factor("shade", 0.55, 1.0, "shade"),
        Factor("background", 0.0, 0.35, "background"),
    ), image_size=image_size)


def render(spec, factors):
    """Raster a single square; returns (size, size) floats in [−1, 1].

    Signed-distance evaluation with a ~1.5-pixel smooth edge: every factor
    moves the image continuously, which the sweep metrics rely on.
    """
    factors = np.asarray(factors, dtype=np.float64)
    if factors.shape != (spec.count,):
        raise ValueError(f"expected {spec.count} factors, got shape {factors.shape}")
    by_role = {}
    for f, value in zip(spec.factors, factors):
        if not (f.low - 1e-12 <= value <= f.high + 1e-12):
            raise ValueError(f"factor {f.name!r}={value} outside [{f.low}, {f.high}]")
        by_role[f.role] = float(value)
    size = spec.image_size
    cx, cy = by_role["x-pos"], by_role["y-pos"]
    half = by_role["scale"]
    theta = by_role["rotation"]
    shade, bg = by_role["shade"], by_role["background"]

    coords = (np.arange(size) + 0.5) / size
    px, py = np.meshgrid(coords, coords, indexing="xy")
    dx, dy = px - cx, py - cy
    c, s = np.cos(theta), np.sin(theta)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    dist = np.maximum(np.abs(u), np.abs(v)) - half  # Chebyshev SDF of a square
    edge = 1.5 / size
    coverage = np.clip(0.5 - dist / edge, 0.0, 1.0)
    img01 = bg + (shade - bg) * coverage
    return 2.0 * img01 - 1.0


def shapes_corpus(n, seed, spec=None):
    """n rendered samples: (images (n, size²) in [−1,1], factors (n, count))."""
    if spec is None:
        spec = default_factor_spec()
    rng = np.random.default_rng(seed)
    lo = np.array([f.low for f in spec.factors])
    hi = np.array([f.high for f in spec.factors])
    factors = rng.uniform(lo, hi, size=(n, spec.count))
    images = np.empty((n, spec.image_size * spec.image_size))
    for i in range(n):
        images[i] = render(spec, factors[i]).ravel()
    return images, factors


@dataclass
class PlantedIcaSpec:
    d_f: int = 8
    rank: int = 8
    mixing: np.ndarray = None  # M*, (d_f, R)
    noise_sigma: float = 0.01
    signal_dist: str = "skewed-beta"
    n: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.mixing is None:
            # orthogonal basis with mildly varied column scales: well conditioned
            rng = np.random.default_rng(self.seed + 1_000_003)
            q, _ = np.linalg.qr(rng.normal(size=(self.d_f, self.d_f)))
            self.mixing = q[:, :self.rank] * np.linspace(0.8, 1.3, self.rank)
        self.mixing = np.asarray(self.mixing, dtype=np.float64)
        if self.mixing.shape != (self.d_f, self.rank):
            raise ValueError(f"mixing must be ({self.d_f}, {self.rank})")
        if np.linalg.matrix_rank(self.mixing) < self.rank:
            raise ValueError("planted mixing must have full column rank")


def planted_ica(spec):
    """Observations y = M*·h + ε plus the ground truth (M*, h)."""
    rng = np.random.default_rng(spec.seed)
    if spec.signal_dist == "skewed-beta":
        h = 2.0 * rng.beta(2.0, 5.0, size=(spec.n, spec.rank)) - 1.0
    elif spec.signal_dist == "centered-beta":
        # zero-mean variant: third cumulant intact, mean-product terms gone
        h = (rng.beta(2.0, 5.0, size=(spec.n, spec.rank)) - 2.0 / 7.0) / (5.0 / 7.0)
    elif spec.signal_dist == "uniform":
        h = rng.uniform(-1.0, 1.0, size=(spec.n, spec.rank))
    else:
        raise ValueError(f"unknown signal_dist {spec.signal_dist!r}")
    y = h @ spec.mixing.T
    if spec.noise_sigma > 0:
        y = y + spec.noise_sigma * rng.normal(size=y.shape)
    return y, spec.mixing, h


# --- PPM / PGM codec ---------------------------------------------------------

def _to_bytes01(img):
    return np.clip((np.asarray(img, dtype=np.float64) + 1.0) * 127.5, 0, 255) \
        .round().astype(np.uint8)


def save_image(path, img):
    """Write a [−1,1] image: (H, W) → binary PGM (P5), (H, W, 3) → PPM (P6)."""
    img = np.asarray(img)
    raw = _to_bytes01(img)
    path = Path(path)
    if raw.ndim == 2:
        header = f"P5\n{raw.shape[1]} {raw.shape[0]}\n255\n".encode()
    elif raw.ndim == 3 and raw.shape[2] == 3:
        header = f"P6\n{raw.shape[1]} {raw.shape[0]}\n255\n".encode()
    else:
        raise ValueError(f"expected (H, W) or (H, W, 3), got {raw.shape}")
    path.write_bytes(header + raw.tobytes())


def _read_pnm_tokens(data, count):
    """First `count` whitespace/comment-delimited header tokens and the offset
    of the byte right after the final single-whitespace separator."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ValueError("truncated header")
        ch = data[i:i + 1]
        if ch == b"#":
            i = data.index(b"\n", i) + 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i + 1  # exactly one whitespace byte after maxval


def load_pnm(source):
    """Decode binary PPM/PGM bytes or a file path to a [−1,1] float image."""
    data = Path(source).read_bytes() if not isinstance(source, bytes) else source
    if data[:2] not in (b"P5", b"P6"):
        raise ValueError(f"not a binary PGM/PPM file (magic {data[:2]!r})")
    tokens, offset = _read_pnm_tokens(data, 4)
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"only maxval 255 supported, got {maxval}")
    channels = 1 if tokens[0] == b"P5" else 3
    need = width * height * channels
    body = data[offset:offset + need]
    if len(body) != need:
        raise ValueError(f"pixel payload truncated: {len(body)} of {need} bytes")
    raw = np.frombuffer(body, dtype=np.uint8).astype(np.float64)
    img = raw.reshape((height, width) if channels == 1 else (height, width, 3))
    return img / 127.5 - 1.0


def _to_gray(img):
    if img.ndim == 2:
        return img
    return img @ np.array([0.299, 0.587, 0.114])


def _resize(img, size):
    from PIL import Image

    u8 = _to_bytes01(img)
    mode = "L" if u8.ndim == 2 else "RGB"
    pil = Image.fromarray(u8, mode=mode).resize((size, size), Image.BILINEAR)
    arr = np.asarray(pil, dtype=np.float64) / 127.5 - 1.0
    return arr


def load_folder(path, size=32):
    """All readable images under `path`, grayscale (n, size²) in [−1,1].

    Files sort by name for a deterministic order; unreadable ones are skipped
    with a warning each. PPM/PGM decode natively, anything else goes through
    Pillow.
    """
    root = Path(path)
    files = sorted(p for p in root.iterdir() if p.is_file())
    rows = []
    for p in files:
        try:
            if p.suffix.lower() in (".ppm", ".pgm"):
                img = load_pnm(p)
            else:
                from PIL import Image

                with Image.open(p) as pil:
                    arr = np.asarray(pil.convert("RGB"), dtype=np.float64)
                img = arr / 127.5 - 1.0
        except Exception as exc:
            warnings.warn(f"skipping unreadable image {p.name}: {exc}",
                          RuntimeWarning, stacklevel=2)
            continue
        if img.shape[:2] != (size, size):
            img = _resize(img, size)
        rows.append(_to_gray(img).ravel())
    if not rows:
        raise ValueError(f"no readable images in {root}")
    return np.stack(rows)


def image_grid(images, cols, size):
    """Tile flat grayscale images row-major into one (R·size, C·size) image."""
    images = np.asarray(images)
    n = images.shape[0]
    rows = (n + cols - 1) // cols
    grid = -np.ones((rows * size, cols * size))
    for i in range(n):
        r, c = divmod(i, cols)
        grid[r * size:(r + 1) * size, c * size:(c + 1) * size] = \
            images[i].reshape(size, size)
    return grid
