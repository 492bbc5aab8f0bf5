"""Training objectives: hinge GAN loss, latent consistency, Mixup smoothness,
masking classification, and the γ-weighted composite.

All functions build autodiff graphs when handed Vars, so each term can sit in
the same backward pass. The composite applies the iteration-dependent masking
weight and names any non-finite part in its error — a blown-up run should say
which objective exploded.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, as_var, softmax_cross_entropy
from .nets import discriminate, generate, masking_logits


@dataclass
class GammaRamp:
    """Piecewise-linear weight: 0 before start, start→end values linearly."""

    start_iter: int = 2000
    start_value: float = 1.0
    end_iter: int = 10000
    end_value: float = 100.0

    def __post_init__(self):
        if self.end_iter <= self.start_iter:
            raise ValueError("ramp end must come after start")

    def __call__(self, iteration):
        if iteration < self.start_iter:
            return 0.0
        if iteration >= self.end_iter:
            return self.end_value
        frac = (iteration - self.start_iter) / (self.end_iter - self.start_iter)
        return self.start_value + frac * (self.end_value - self.start_value)


@dataclass
class LossWeights:
    gamma_l: float = 1.0
    gamma_s: float = 0.1
    gamma_c: float = 0.1
    gamma_m: GammaRamp = field(default_factory=GammaRamp)

    def __post_init__(self):
        if min(self.gamma_l, self.gamma_s, self.gamma_c) < 0:
            raise ValueError("loss weights must be nonnegative")


def gan_loss(d_real, d_fake):
    """Hinge objectives: (loss_D, loss_G).

    loss_D = mean(relu(1 − d_real)) + mean(relu(1 + d_fake));
    loss_G = −mean(d_fake). Callers pick which side's graph to keep.
    """
    d_real, d_fake = as_var(d_real), as_var(d_fake)
    if d_real.value.size == 0 or d_fake.value.size == 0:
        raise ValueError("empty score batch")
    loss_d = (1.0 - d_real).relu().mean() + (1.0 + d_fake).relu().mean()
    loss_g = -d_fake.mean()
    return loss_d, loss_g


def consistency_loss(h, phi):
    """Squared distance ‖h − φ‖², batch-averaged for (B, d) inputs."""
    h, phi = as_var(h), as_var(phi)
    if h.value.shape != phi.value.shape:
        raise ValueError(f"shape mismatch: {h.value.shape} vs {phi.value.shape}")
    diff = h - phi
    if diff.value.ndim == 1:
        return (diff ** 2).sum()
    return (diff ** 2).sum() * (1.0 / diff.value.shape[0])


def mixup_loss(model, real_img, fake_img, h_r, h_f, t):
    """Smoothness penalty on a blended pair.

    I_s = t·I_r + (1−t)·I_f and h_s = t·h_r + (1−t)·h_f; the loss pushes
    Φ(I_s) toward h_s. `t` may be a scalar or a per-pair (B, 1) array.
    """
    real_img, fake_img = as_var(real_img), as_var(fake_img)
    if real_img.value.shape != fake_img.value.shape:
        raise ValueError(f"image shape mismatch: {real_img.value.shape} "
                         f"vs {fake_img.value.shape}")
    t_arr = np.asarray(t, dtype=np.float64)
    if t_arr.min() < 0.0 or t_arr.max() > 1.0:
        raise ValueError("mix coefficient must lie in [0, 1]")
    mixed = t_arr * real_img + (1.0 - t_arr) * fake_img
    h_s = t_arr * np.asarray(h_r, dtype=np.float64) \
        + (1.0 - t_arr) * np.asarray(h_f, dtype=np.float64)
    _, _, phi_s = discriminate(model, mixed)
    return consistency_loss(h_s, phi_s)


def perturb_codes(h, index, noise):
    """ĥ: copy of h with ĥ[i, index[i]] = clamp(h + u, −1, 1) per row."""
    h = np.asarray(h, dtype=np.float64)
    index = np.atleast_1d(np.asarray(index))
    noise = np.broadcast_to(np.asarray(noise, dtype=np.float64), index.shape)
    if index.shape != (h.shape[0],):
        raise ValueError(f"need one index per row: {index.shape} vs batch {h.shape[0]}")
    if index.min() < 0 or index.max() >= h.shape[1]:
        raise ValueError(f"perturbed index out of range [0, {h.shape[1]})")
    hhat = h.copy()
    rows = np.arange(h.shape[0])
    hhat[rows, index] = np.clip(h[rows, index] + noise, -1.0, 1.0)
    return hhat


def masking_loss(model, h, index, noise):
    """Cross-entropy of predicting which element was perturbed.

    Generates both G(h) and G(ĥ), classifies the feature difference
    Φ(G(ĥ)) − Φ(G(h)) with the masking head, and returns (loss, predictions).
    """
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    index = np.atleast_1d(np.asarray(index))
    hhat = perturb_codes(h, index, noise)
    img = generate(model, h)
    img_hat = generate(model, hhat)
    _, _, phi = discriminate(model, img)
    _, _, phi_hat = discriminate(model, img_hat)
    logits = masking_logits(model, phi_hat - phi)
    loss = softmax_cross_entropy(logits, index)
    pred = np.argmax(logits.value, axis=1)
    return loss, pred


def cycled_indices(batch, d, iteration):
    """Deterministic index assignment sweeping all d elements across steps."""
    return (iteration * batch + np.arange(batch)) % d


@dataclass
class LossParts:
    """Scalar terms entering the composite; None marks an inactive term."""

    gan: object
    l_l: object = None
    l_s: object = None
    l_c: object = None
    l_m: object = None


def composite_loss(parts, weights, iteration):
    """L = L_gan + γ_l·L_l + γ_s·L_s + γ_c·L_c + γ_m(iter)·L_m."""
    total = None
    gamma_m = weights.gamma_m(iteration)
    for name, part, gamma in (("gan", parts.gan, 1.0),
                              ("l_l", parts.l_l, weights.gamma_l),
                              ("l_s", parts.l_s, weights.gamma_s),
                              ("l_c", parts.l_c, weights.gamma_c),
                              ("l_m", parts.l_m, gamma_m)):
        if part is None or gamma == 0.0:
            continue
        value = part.value if isinstance(part, Var) else part
        if not np.all(np.isfinite(value)):
            raise FloatingPointError(f"non-finite loss part '{name}'")
        term = gamma * as_var(part)
        total = term if total is None else total + term
    return total
