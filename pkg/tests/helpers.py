"""Shared test scaffolding: hand-built models with known structure."""

import numpy as np

from lfgan.autodiff import backward
from lfgan.losses import cycled_indices, masking_loss
from lfgan.nets import NetConfig, build_gan


def one_factor_model(d=8, seed=2, bias=1.2, gain=0.8):
    """Pipeline where latent element k owns pixel block k end to end.

    Generator: stage k writes (1 + gain·h_k) into slot k, the output layer
    routes slot k to block k with pre-tanh bias+gain·h_k — a concave response,
    so perturbing an element shifts its block's mean asymmetrically (a purely
    odd response would leave class-conditional means at zero and no linear
    classifier could separate them). Discriminator: body layers carry each
    block's mean through positive-range relus and the feature head reads them
    out, so Φ_k = tanh(bias + gain·h_k) exactly. Only the masking head is
    meant to train.
    """
    cfg = NetConfig(latent_dim=d, stages=d, width=d, image_size=8, channels=1,
                    disc_dims=(32, 24, 16), feature_dim=d, seed=seed)
    model = build_gan(cfg)
    model.gen["const"].value[...] = 0.0
    block = cfg.pixels // d
    out = np.zeros((d, cfg.pixels))
    ob = np.zeros((1, cfg.pixels))
    for k in range(d):
        model.gen[f"stage{k}.A"].value[...] = 0.0
        b = np.zeros((1, d))
        b[0, k] = 1.0
        model.gen[f"stage{k}.b"].value[...] = b
        inj = np.zeros((1, d))
        inj[0, k] = gain
        model.gen[f"stage{k}.B"].value[...] = inj
        out[k, k * block:(k + 1) * block] = 1.0
        ob[0, k * block:(k + 1) * block] = bias - 1.0
    model.gen["out.W"].value[...] = out
    model.gen["out.b"].value[...] = ob

    w0 = np.zeros((cfg.pixels, cfg.disc_dims[0]))
    for k in range(d):
        w0[k * block:(k + 1) * block, k] = 1.0 / block
    model.disc["body0.W"].value[...] = w0
    model.disc["body0.b"].value[...] = 0.0
    for i in range(1, len(cfg.disc_dims)):
        w = np.zeros((cfg.disc_dims[i - 1], cfg.disc_dims[i]))
        w[:d, :d] = np.eye(d)
        model.disc[f"body{i}.W"].value[...] = w
        model.disc[f"body{i}.b"].value[...] = 0.0
    wf = np.zeros((cfg.disc_dims[-1], d))
    wf[:d, :d] = np.eye(d)
    model.disc["feat.W"].value[...] = wf
    return model


def train_masking_head(model, steps=400, lr=0.02, batch=32, seed=10):
    """Fit only the masking head on the frozen model; returns the data rng."""
    d = model.config.latent_dim
    rng = np.random.default_rng(seed)
    head = [model.disc["mask.W"], model.disc["mask.b"]]
    rms = [np.zeros_like(p.value) for p in head]
    for step in range(steps):
        h = rng.uniform(-1, 1, size=(batch, d))
        idx = cycled_indices(batch, d, step)
        u = rng.uniform(-1, 1, size=batch)
        for p in head:
            p.grad[...] = 0.0
        loss, _ = masking_loss(model, h, idx, u)
        backward(loss)
        for p, s in zip(head, rms):
            s[...] = 0.9 * s + 0.1 * p.grad ** 2
            p.value[...] -= lr * p.grad / (np.sqrt(s) + 1e-8)
    return rng


def heldout_masking_accuracy(model, rng, n=512):
    d = model.config.latent_dim
    h = rng.uniform(-1, 1, size=(n, d))
    idx = rng.integers(0, d, size=n)
    u = rng.uniform(-1, 1, size=n)
    _, pred = masking_loss(model, h, idx, u)
    return float(np.mean(pred == idx))
