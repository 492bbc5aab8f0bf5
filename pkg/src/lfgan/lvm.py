"""Latent variable models over discriminator features.

The primary model is a normalized ICA: observations y = M·h + ε with
independent hidden signals h normalized to [−1,1] and Gaussian noise ε.
The mixing matrix comes straight from a fitted CP model — column j is
λ_j·a_j — and inference is the pseudo-inverse applied to a feature vector.

A small feature-space VAE is provided as the swap-in alternative for the
corresponding ablation: same role (sample codes, infer codes from features),
different machinery (ELBO-trained encoder/decoder).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, as_var
from .nets import ParamStore


@dataclass
class IcaLvm:
    """Normalized-ICA observation model y = M·h + ε over feature space."""

    mixing: np.ndarray  # (d_f, R), column j = λ_j a_j
    noise_sigma: float = 0.01
    signal_dist: str = "skewed-beta"
    pinv: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.mixing = np.asarray(self.mixing, dtype=np.float64)
        if self.mixing.ndim != 2:
            raise ValueError(f"mixing must be a matrix, got shape {self.mixing.shape}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.signal_dist not in ("skewed-beta", "centered-beta", "uniform"):
            raise ValueError(f"unknown signal_dist {self.signal_dist!r}")
        if self.pinv is None:
            # truncate near-zero singular values: surplus components with
            # λ ≈ 0 would otherwise turn inference into a 1/ε amplifier
            self.pinv = np.linalg.pinv(self.mixing, rcond=1e-3)

    @property
    def rank(self):
        return self.mixing.shape[1]

    @property
    def feature_dim(self):
        return self.mixing.shape[0]


def build_mixing(cp, noise_sigma=0.01, signal_dist="skewed-beta"):
    """IcaLvm whose mixing columns are the weighted factors λ_j·a_j."""
    mixing = (cp.lam[:, None] * cp.factors).T  # (d_f, R)
    if np.linalg.matrix_rank(mixing) < cp.rank:
        warnings.warn("mixing matrix is rank-deficient; pseudo-inverse still valid",
                      RuntimeWarning, stacklevel=2)
    return IcaLvm(mixing=mixing, noise_sigma=noise_sigma, signal_dist=signal_dist)


def sample_latent(lvm, n, seed):
    """n i.i.d. latent codes in [−1,1]^R, deterministic per seed.

    skewed-beta is Beta(2,5) rescaled to [−1,1]: bounded like the uniform
    option but with a nonzero third cumulant, so third-order statistics carry
    signal.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 draws, got {n}")
    rng = np.random.default_rng(seed)
    if lvm.signal_dist == "skewed-beta":
        return 2.0 * rng.beta(2.0, 5.0, size=(n, lvm.rank)) - 1.0
    if lvm.signal_dist == "centered-beta":
        # Beta(2,5) shifted to zero mean, scaled to stay inside [−1,1]: same
        # skew, but the mean-product moment terms vanish in expectation.
        return (rng.beta(2.0, 5.0, size=(n, lvm.rank)) - 2.0 / 7.0) / (5.0 / 7.0)
    return rng.uniform(-1.0, 1.0, size=(n, lvm.rank))


def observe(lvm, h, seed):
    """Draw y = M·h + ε for a batch of codes (the model's forward direction)."""
    h = np.asarray(h, dtype=np.float64)
    rng = np.random.default_rng(seed)
    y = h @ lvm.mixing.T
    if lvm.noise_sigma > 0:
        y = y + lvm.noise_sigma * rng.normal(size=y.shape)
    return y


def infer_latent(lvm, phi, subtract_noise=False, seed=None):
    """h = M†·φ for one vector (d_f,) or a batch (n, d_f).

    ε is zero-mean, so no noise term is subtracted by default; passing
    subtract_noise=True removes a freshly sampled ε first (adds variance,
    provided for completeness).
    """
    phi = np.asarray(phi, dtype=np.float64)
    single = phi.ndim == 1
    if single:
        phi = phi[None, :]
    if phi.shape[1] != lvm.feature_dim:
        raise ValueError(f"feature dim {phi.shape[1]} != model dim {lvm.feature_dim}")
    if subtract_noise and lvm.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        phi = phi - lvm.noise_sigma * rng.normal(size=phi.shape)
    h = phi @ lvm.pinv.T
    return h[0] if single else h


def max_normalize(h):
    """Scale each code by its largest |element| so the envelope touches ±1.

    Zero codes pass through unchanged. Applied to every code before it feeds
    the generator.
    """
    h = np.asarray(h, dtype=np.float64)
    single = h.ndim == 1
    if single:
        h = h[None, :]
    scale = np.abs(h).max(axis=1, keepdims=True)
    out = np.where(scale > 0, h / np.where(scale > 0, scale, 1.0), h)
    return out[0] if single else out


# --- feature-space VAE (ablation alternative) --------------------------------

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class FeatureVae:
    feature_dim: int
    latent_dim: int
    hidden: int
    params: ParamStore


def build_feature_vae(feature_dim, latent_dim, hidden=32, seed=0):
    rng = np.random.default_rng(seed)
    ps = ParamStore()
    ps.add("enc.W1", rng.normal(size=(feature_dim, hidden)) * np.sqrt(2.0 / feature_dim))
    ps.add("enc.b1", np.zeros((1, hidden)))
    ps.add("enc.Wm", rng.normal(size=(hidden, latent_dim)) / np.sqrt(hidden))
    ps.add("enc.bm", np.zeros((1, latent_dim)))
    ps.add("enc.Wv", rng.normal(size=(hidden, latent_dim)) / np.sqrt(hidden))
    ps.add("enc.bv", np.zeros((1, latent_dim)))
    ps.add("dec.W1", rng.normal(size=(latent_dim, hidden)) * np.sqrt(2.0 / latent_dim))
    ps.add("dec.b1", np.zeros((1, hidden)))
    ps.add("dec.W2", rng.normal(size=(hidden, feature_dim)) / np.sqrt(hidden))
    ps.add("dec.b2", np.zeros((1, feature_dim)))
    return FeatureVae(feature_dim=feature_dim, latent_dim=latent_dim,
                      hidden=hidden, params=ps)


def encode(vae, phi):
    """(mean, log-variance) of q(h | φ)."""
    phi = as_var(phi)
    hid = (phi @ vae.params["enc.W1"] + vae.params["enc.b1"]).relu()
    mean = hid @ vae.params["enc.Wm"] + vae.params["enc.bm"]
    logvar = hid @ vae.params["enc.Wv"] + vae.params["enc.bv"]
    return mean, logvar


def decode(vae, h):
    h = as_var(h)
    hid = (h @ vae.params["dec.W1"] + vae.params["dec.b1"]).relu()
    return hid @ vae.params["dec.W2"] + vae.params["dec.b2"]


def vae_elbo(vae, phi, seed):
    """Negative ELBO (unit-variance Gaussian likelihood) and a latent sample.

    Per-sample average over the batch:
        ½‖φ − dec(h)‖² + (d_f/2)·ln 2π  +  KL(q(h|φ) ‖ N(0,I))
    with the reparameterized draw h = mean + exp(½·logvar)·ξ, ξ ~ N(0,I).
    """
    phi = as_var(phi)
    if phi.value.ndim != 2 or phi.value.shape[1] != vae.feature_dim:
        raise ValueError(f"features must be (B, {vae.feature_dim}), "
                         f"got {phi.value.shape}")
    batch = phi.value.shape[0]
    mean, logvar = encode(vae, phi)
    xi = np.random.default_rng(seed).normal(size=(batch, vae.latent_dim))
    h = mean + (0.5 * logvar).exp() * Var(xi)
    recon = decode(vae, h)
    rec = 0.5 * ((phi - recon) ** 2).sum() * (1.0 / batch) \
        + 0.5 * vae.feature_dim * LOG_2PI
    kl = (-0.5 / batch) * (1.0 + logvar - mean ** 2 - logvar.exp()).sum()
    return rec + kl, h.value.copy()


class VaeLvm:
    """Adapter giving the feature VAE the sampling/inference surface of IcaLvm.

    Codes are drawn by encoding a seeded subset of recent real features
    (posterior sampling), so the generator's inputs stay tied to the data
    distribution just as in the ICA route. `refresh` swaps in newer features.
    """

    def __init__(self, vae, features):
        self.vae = vae
        self.features = np.asarray(features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("need a nonempty (n, d_f) feature snapshot")

    @property
    def rank(self):
        return self.vae.latent_dim

    def refresh(self, features):
        self.features = np.asarray(features, dtype=np.float64)

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, self.features.shape[0], size=n)
        mean, logvar = encode(self.vae, self.features[rows])
        xi = rng.normal(size=mean.value.shape)
        return mean.value + np.exp(0.5 * logvar.value) * xi

    def infer(self, phi):
        single = np.asarray(phi).ndim == 1
        mean, _ = encode(self.vae, np.atleast_2d(phi))
        return mean.value[0] if single else mean.value
