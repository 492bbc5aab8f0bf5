"""Controllability and sample-quality metrics.

Perceptual and distributional scores use a fixed random-weight convolutional
probe (seed-pinned) instead of pretrained feature networks, which keeps the
package dependency-free while preserving relative orderings. Sweep protocols
perturb one latent element at a time and compare the image pair.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from .lvm import sample_latent
from .losses import perturb_codes


def mae(img_a, img_b):
    """Mean absolute error over all pixels/channels; images live in [−1, 1]."""
    a, b = np.asarray(img_a, dtype=np.float64), np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


# --- random convolutional probe ----------------------------------------------

class RandomConvProbe:
    """Three stride-2 ReLU convolutions with fixed He-scaled random kernels.

    Layer activations stand in for perceptual features; `descriptor` pools
    them for distribution-level statistics.
    """

    def __init__(self, channels=(8, 16, 32), kernel=3, seed=0, in_channels=1):
        rng = np.random.default_rng(seed)
        self.kernel = kernel
        self.weights = []
        c_in = in_channels
        for c_out in channels:
            fan_in = kernel * kernel * c_in
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                           size=(kernel, kernel, c_in, c_out))
            self.weights.append(w)
            c_in = c_out

    def features(self, img):
        """List of ReLU feature maps, one per layer; img is (H, W) or (H, W, C)."""
        x = np.asarray(img, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, :, None]
        if x.ndim != 3 or x.shape[2] != self.weights[0].shape[2]:
            raise ValueError(f"expected (H, W[, {self.weights[0].shape[2]}]), "
                             f"got {np.asarray(img).shape}")
        maps = []
        for w in self.weights:
            k = self.kernel
            win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(0, 1))
            win = win[::2, ::2]  # stride 2
            x = np.einsum("hwcij,ijco->hwo", win, w)
            x = np.maximum(x, 0.0)
            maps.append(x)
        return maps

    def descriptor(self, img):
        """Spatially pooled per-layer means, concatenated (for frechet_proxy)."""
        return np.concatenate([m.mean(axis=(0, 1)) for m in self.features(img)])


def perceptual_proxy(img_a, img_b, probe):
    """L2 distance between probe feature maps, averaged over layers."""
    a, b = np.asarray(img_a), np.asarray(img_b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    fa, fb = probe.features(a), probe.features(b)
    dists = [float(np.linalg.norm(x - y)) for x, y in zip(fa, fb)]
    return float(np.mean(dists))


# --- Frechet distance on probe features --------------------------------------

def _psd_sqrt(m):
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def product_sqrt(sigma_r, sigma_f):
    """S with S·S = Σ_r·Σ_f, via B·sqrt(B·Σ_f·B)·B⁻¹ where B = sqrt(Σ_r).

    Requires Σ_r positive definite (the caller's ε·I jitter guarantees it).
    """
    b = _psd_sqrt(sigma_r)
    c = _psd_sqrt(b @ sigma_f @ b)
    return b @ np.linalg.solve(b, c.T).T  # b @ c @ inv(b), one solve


def frechet_proxy(features_real, features_fake, eps=1e-6):
    """‖μ_r − μ_f‖² + tr(Σ_r + Σ_f − 2·(Σ_r Σ_f)^{1/2}) on feature rows."""
    fr = np.asarray(features_real, dtype=np.float64)
    ff = np.asarray(features_fake, dtype=np.float64)
    if fr.ndim != 2 or ff.ndim != 2 or fr.shape[1] != ff.shape[1]:
        raise ValueError("feature sets must be 2-D with matching width")
    if fr.shape[0] < 2 or ff.shape[0] < 2:
        raise ValueError("need at least 2 samples per set")
    mu_r, mu_f = fr.mean(axis=0), ff.mean(axis=0)
    jitter = eps * np.eye(fr.shape[1])
    sig_r = np.cov(fr, rowvar=False) + jitter
    sig_f = np.cov(ff, rowvar=False) + jitter
    s = product_sqrt(sig_r, sig_f)
    return float(((mu_r - mu_f) ** 2).sum()
                 + np.trace(sig_r) + np.trace(sig_f) - 2.0 * np.trace(s))


# --- perturbation sweep -------------------------------------------------------

@dataclass
class PerturbationReport:
    per_element_mae: np.ndarray       # (d,)
    per_element_perceptual: np.ndarray  # (d,)
    n_per_element: int

    def __post_init__(self):
        self.per_element_mae = np.asarray(self.per_element_mae, dtype=np.float64)
        self.per_element_perceptual = np.asarray(self.per_element_perceptual,
                                                 dtype=np.float64)
        if self.per_element_mae.shape != self.per_element_perceptual.shape:
            raise ValueError("per-element tables must align")
        if (self.per_element_mae < 0).any() or (self.per_element_perceptual < 0).any():
            raise ValueError("distances must be nonnegative")

    @property
    def d(self):
        return self.per_element_mae.shape[0]

    @property
    def pair_count(self):
        return self.d * self.n_per_element

    @property
    def mean_mae(self):
        return float(self.per_element_mae.mean())

    @property
    def mean_perceptual(self):
        return float(self.per_element_perceptual.mean())


def _draw_codes(lvm, n, seed, d):
    if lvm is None:
        return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n, d))
    if hasattr(lvm, "sample"):
        return lvm.sample(n, seed)
    return sample_latent(lvm, n, seed)


def _as_square_images(flat):
    flat = np.asarray(getattr(flat, "value", flat))  # unwrap autodiff outputs
    if flat.ndim == 2:  # rows of pixels
        size = int(round(np.sqrt(flat.shape[1])))
        if size * size != flat.shape[1]:
            raise ValueError(f"cannot square-reshape width {flat.shape[1]}")
        return flat.reshape(flat.shape[0], size, size)
    return flat


def perturbation_sweep(generate, lvm, d, n_per_element=10, seed=0,
                       probe=None, scale=1.0):
    """Per-element image sensitivity to single-element perturbations.

    For each element j and each of n_per_element draws: sample a base code
    from the latent model (uniform prior when lvm is None), add u~U(−1,1)
    scaled by `scale` to element j (clamped to [−1,1]), generate both images,
    and record MAE plus probe-feature distance.
    """
    if d < 1:
        raise ValueError("d must be ≥ 1")
    probe = probe if probe is not None else RandomConvProbe(seed=0)
    rng = np.random.default_rng(seed)
    mae_table = np.zeros((d, n_per_element))
    per_table = np.zeros((d, n_per_element))
    for j in range(d):
        base = _draw_codes(lvm, n_per_element, seed + 7_001 * j + 13, d)
        noise = scale * rng.uniform(-1.0, 1.0, size=n_per_element)
        pert = perturb_codes(base, np.full(n_per_element, j), noise)
        img_a = _as_square_images(generate(base))
        img_b = _as_square_images(generate(pert))
        for i in range(n_per_element):
            mae_table[j, i] = mae(img_a[i], img_b[i])
            per_table[j, i] = perceptual_proxy(img_a[i], img_b[i], probe)
    return PerturbationReport(per_element_mae=mae_table.mean(axis=1),
                              per_element_perceptual=per_table.mean(axis=1),
                              n_per_element=n_per_element)


def report_csv(report):
    """CSV text: one row per element plus a global-means row."""
    lines = ["element,mae,perceptual"]
    for j in range(report.d):
        lines.append(f"{j},{report.per_element_mae[j]:.10g},"
                     f"{report.per_element_perceptual[j]:.10g}")
    lines.append(f"all,{report.mean_mae:.10g},{report.mean_perceptual:.10g}")
    return "\n".join(lines) + "\n"


def report_text(report):
    out = io.StringIO()
    out.write(f"perturbation sweep: {report.pair_count} pairs "
              f"({report.d} elements x {report.n_per_element})\n")
    for j in range(report.d):
        out.write(f"  element {j:2d}: mae={report.per_element_mae[j]:.5f}  "
                  f"perceptual={report.per_element_perceptual[j]:.5f}\n")
    out.write(f"  mean      : mae={report.mean_mae:.5f}  "
              f"perceptual={report.mean_perceptual:.5f}\n")
    return out.getvalue()


# --- supervised factor oracle (eval-only) -------------------------------------

def _image_statistics(flat):
    """Hand-built per-image summaries: mass centroid, total mass, extrema,
    and a gradient-orientation resultant with 4-fold symmetry (square shapes
    leave no orientation trace below 4th order).
    """
    flat = np.asarray(flat, dtype=np.float64)
    size = int(round(np.sqrt(flat.shape[1])))
    out = np.zeros((len(flat), 8))
    xs = (np.arange(size) + 0.5) / size
    for i, row in enumerate(flat):
        img = row.reshape(size, size)
        w = img - img.min()
        mass = w.sum() + 1e-12
        gy, gx = np.gradient(img)
        m = np.hypot(gx, gy)
        alpha = np.arctan2(gy, gx)
        gm = m.sum() + 1e-12
        c4 = (m * np.cos(4 * alpha)).sum() / gm
        s4 = (m * np.sin(4 * alpha)).sum() / gm
        out[i] = [(w * xs[None, :]).sum() / mass,
                  (w * xs[:, None]).sum() / mass,
                  mass / flat.shape[1],
                  img.min(), img.max(),
                  c4, s4,
                  np.mod(np.arctan2(s4, c4) / 4.0, np.pi / 2.0)]
    return out


@dataclass
class FactorOracle:
    """Ridge regressor from images to renderer factors over random ReLU
    features plus hand-built image statistics.

    Supervision is confined to evaluation: the oracle never touches training.
    """
    proj: np.ndarray       # (pixels, n_features)
    offset: np.ndarray     # (n_features,)
    weights: np.ndarray    # (n_features + 9, n_factors)
    factor_names: tuple

    def _features(self, images):
        flat = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
        if flat.shape[1] != self.proj.shape[0]:
            raise ValueError(f"expected {self.proj.shape[0]} pixels, "
                             f"got {flat.shape[1]}")
        z = np.maximum(flat @ self.proj + self.offset, 0.0)
        return np.hstack([z, _image_statistics(flat), np.ones((len(z), 1))])

    def predict(self, images):
        return self._features(images) @ self.weights

    def r2(self, images, factors):
        """Per-factor coefficient of determination, averaged."""
        factors = np.asarray(factors, dtype=np.float64)
        pred = self.predict(images)
        ss_res = ((factors - pred) ** 2).sum(axis=0)
        ss_tot = ((factors - factors.mean(axis=0)) ** 2).sum(axis=0)
        return float((1.0 - ss_res / ss_tot).mean())


def fit_factor_oracle(images, factors, factor_names=None, n_features=512,
                      ridge=1e-3, seed=0):
    """Train the eval oracle on a synthetic corpus with known factors."""
    images = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    factors = np.asarray(factors, dtype=np.float64)
    if factors.ndim != 2 or len(factors) != len(images):
        raise ValueError("need per-image ground-truth factors "
                         "(synthetic corpus only)")
    rng = np.random.default_rng(seed)
    proj = rng.normal(0.0, 1.0 / np.sqrt(images.shape[1]),
                      size=(images.shape[1], n_features))
    offset = rng.uniform(-0.5, 0.5, size=n_features)
    names = tuple(factor_names) if factor_names is not None \
        else tuple(f"f{i}" for i in range(factors.shape[1]))
    oracle = FactorOracle(proj=proj, offset=offset,
                          weights=np.zeros((n_features + 9, factors.shape[1])),
                          factor_names=names)
    z = oracle._features(images)
    gram = z.T @ z + ridge * np.eye(z.shape[1])
    oracle.weights = np.linalg.solve(gram, z.T @ factors)
    return oracle


def factor_consistency(generate, lvm, oracle, d, n_per_element=10, seed=0):
    """(d, n_factors) correlation table: latent-element perturbation vs.
    predicted factor change.

    Row j correlates the signed displacement applied to element j with the
    oracle-predicted change of each factor, over n_per_element base codes.
    Constant columns yield r = 0.
    """
    rng = np.random.default_rng(seed)
    table = np.zeros((d, len(oracle.factor_names)))
    for j in range(d):
        base = _draw_codes(lvm, n_per_element, seed + 9_973 * j + 1, d)
        noise = rng.uniform(-1.0, 1.0, size=n_per_element)
        pert = perturb_codes(base, np.full(n_per_element, j), noise)
        delta = pert[:, j] - base[:, j]
        change = oracle.predict(_flatten(generate(pert))) \
            - oracle.predict(_flatten(generate(base)))
        for k in range(change.shape[1]):
            table[j, k] = _safe_corr(delta, change[:, k])
    return table


def _flatten(images):
    images = np.asarray(getattr(images, "value", images))
    return images.reshape(len(images), -1)


def _safe_corr(x, y):
    sx, sy = np.std(x), np.std(y)
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


def max_factor_per_element(table, factor_names):
    """For each latent element, the factor it moves hardest (by |r|)."""
    idx = np.abs(table).argmax(axis=1)
    return [(int(j), factor_names[k], float(table[j, k]))
            for j, k in enumerate(idx)]


def cosine_table(recovered, reference):
    """|cosine| between every recovered/reference column pair.

    Columns are mixing directions; sign is unidentifiable, so the magnitude
    is what matters. Zero columns get zero similarity everywhere.
    """
    a = np.asarray(recovered, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"feature dims differ: {a.shape[0]} vs {b.shape[0]}")
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    na = np.where(na > 0, na, 1.0)
    nb = np.where(nb > 0, nb, 1.0)
    return np.abs((a / na).T @ (b / nb))


def match_components(recovered, reference):
    """Best one-to-one column pairing by |cosine| (Hungarian assignment).

    Returns (perm, cosines): recovered column j matches reference column
    perm[j] with similarity cosines[j].
    """
    from scipy.optimize import linear_sum_assignment

    table = cosine_table(recovered, reference)
    if table.shape[0] != table.shape[1]:
        raise ValueError(f"need equally many columns, got {table.shape}")
    rows, cols = linear_sum_assignment(-table)
    perm = np.empty(table.shape[0], dtype=int)
    perm[rows] = cols
    return perm, table[rows, perm[rows]]
