"""Generator and discriminator built on the autodiff engine.

The generator consumes a d-dimensional code split into s contiguous
partitions; stage k applies a dense transform and modulates its activations
with a Hadamard mask (1 + B_k·h^(k)) driven by partition k only, plus a skip
connection. The discriminator body produces penultimate features v; three
heads read them: a scalar adversarial score, the linear feature map
Φ(x) = Wᵀv, and a d-way classifier over feature differences used by the
masking objective (zero-initialized so it starts at uniform logits).

Dense layers throughout: at 32×32 the method's moving parts are the
injections and heads, not convolutional texture priors.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, as_var


@dataclass
class NetConfig:
    latent_dim: int = 8
    stages: int = 4
    width: int = 64
    image_size: int = 32
    channels: int = 1
    disc_dims: tuple = (256, 128, 64)
    feature_dim: int = 8  # d_f; equals latent_dim so codes and features align
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim % self.stages != 0:
            raise ValueError(
                f"latent dim {self.latent_dim} not divisible by {self.stages} stages")
        if self.feature_dim != self.latent_dim:
            raise ValueError("feature_dim must equal latent_dim (codes are compared "
                             "to features elementwise)")

    @property
    def pixels(self):
        return self.channels * self.image_size * self.image_size

    @property
    def partition(self):
        return self.latent_dim // self.stages


class ParamStore:
    """Named parameter arrays held as autodiff leaves."""

    def __init__(self):
        self._params = {}

    def add(self, name, value):
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._params[name] = Var(np.asarray(value, dtype=np.float64))
        return self._params[name]

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params)

    def variables(self):
        return list(self._params.values())

    def zero_grad(self):
        for v in self._params.values():
            v.grad[...] = 0.0

    @property
    def count(self):
        return sum(v.value.size for v in self._params.values())

    def state_arrays(self):
        """Name → value copy, in declaration order (checkpoint payload)."""
        return {k: v.value.copy() for k, v in self._params.items()}

    def load_arrays(self, arrays):
        for k, v in self._params.items():
            src = np.asarray(arrays[k], dtype=np.float64)
            if src.shape != v.value.shape:
                raise ValueError(f"shape mismatch loading {k!r}: "
                                 f"{src.shape} vs {v.value.shape}")
            v.value[...] = src
            v.grad[...] = 0.0


@dataclass
class GanModel:
    config: NetConfig
    gen: ParamStore = field(default_factory=ParamStore)
    disc: ParamStore = field(default_factory=ParamStore)


def build_gan(config):
    """Fresh GanModel with seeded He-style initialization."""
    rng = np.random.default_rng(config.seed)
    m = GanModel(config=config)
    w, p = config.width, config.partition

    m.gen.add("const", 0.5 * rng.normal(size=(1, w)))
    for k in range(config.stages):
        m.gen.add(f"stage{k}.A", rng.normal(size=(w, w)) * np.sqrt(2.0 / w))
        m.gen.add(f"stage{k}.b", np.zeros((1, w)))
        m.gen.add(f"stage{k}.B", rng.normal(size=(p, w)) * (0.5 / np.sqrt(p)))
    m.gen.add("out.W", rng.normal(size=(w, config.pixels)) / np.sqrt(w))
    m.gen.add("out.b", np.zeros((1, config.pixels)))

    prev = config.pixels
    for i, width in enumerate(config.disc_dims):
        m.disc.add(f"body{i}.W", rng.normal(size=(prev, width)) * np.sqrt(2.0 / prev))
        m.disc.add(f"body{i}.b", np.zeros((1, width)))
        prev = width
    m.disc.add("adv.W", rng.normal(size=(prev, 1)) / np.sqrt(prev))
    m.disc.add("adv.b", np.zeros((1, 1)))
    m.disc.add("feat.W", rng.normal(size=(prev, config.feature_dim)) / np.sqrt(prev))
    m.disc.add("mask.W", np.zeros((config.feature_dim, config.latent_dim)))
    m.disc.add("mask.b", np.zeros((1, config.latent_dim)))
    return m


def generate(model, h):
    """Map codes (B, d) to flat images (B, pixels) in [−1, 1].

    Stage k reads exactly partition k of h; earlier stages never see later
    partitions. Pass a Var to keep the graph, an ndarray for a constant input.
    """
    cfg = model.config
    h = as_var(h)
    if h.value.ndim != 2 or h.value.shape[1] != cfg.latent_dim:
        raise ValueError(f"latent batch must be (B, {cfg.latent_dim}), "
                         f"got {h.value.shape}")
    batch = h.value.shape[0]
    z = as_var(np.zeros((batch, cfg.width))) + model.gen["const"]
    for k in range(cfg.stages):
        act = (z @ model.gen[f"stage{k}.A"] + model.gen[f"stage{k}.b"]).relu()
        part = h[:, k * cfg.partition:(k + 1) * cfg.partition]
        mask = 1.0 + part @ model.gen[f"stage{k}.B"]
        z = act * mask + z
    return (z @ model.gen["out.W"] + model.gen["out.b"]).tanh()


def discriminate(model, x):
    """Score flat images: returns (adv (B,1), v (B, v_dim), phi (B, d_f))."""
    cfg = model.config
    x = as_var(x)
    if x.value.ndim != 2 or x.value.shape[1] != cfg.pixels:
        raise ValueError(f"image batch must be (B, {cfg.pixels}), got {x.value.shape}")
    v = x
    for i in range(len(cfg.disc_dims)):
        v = (v @ model.disc[f"body{i}.W"] + model.disc[f"body{i}.b"]).relu()
    adv = v @ model.disc["adv.W"] + model.disc["adv.b"]
    phi = v @ model.disc["feat.W"]
    return adv, v, phi


def masking_logits(model, phi_diff):
    """d-way logits from a feature difference Φ(G(ĥ)) − Φ(G(h))."""
    return phi_diff @ model.disc["mask.W"] + model.disc["mask.b"]


def all_params(model):
    """Generator then discriminator parameters, declaration order."""
    return model.gen.variables() + model.disc.variables()


def clip_global_norm(variables, max_norm=10.0):
    """Scale gradients in place so their joint L2 norm is at most max_norm."""
    total = 0.0
    for v in variables:
        total += float(np.sum(v.grad * v.grad))
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for v in variables:
            v.grad *= scale
    return norm
