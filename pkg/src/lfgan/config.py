"""Run configuration: flat `key = value` text files with dotted section keys.

Defaults follow the published operating point where one exists (latent size
50, gamma_l=1, gamma_s=0.1, gamma_c=0.1, the masking-weight ramp 1→100 over
iterations 2000→10000, warm-up 200, insertion 2000, blend end 8000, lr 2e−4,
batch 64). Everything else is a documented desk-scale choice.
"""

from dataclasses import dataclass, fields

# dotted key → (attribute, parser, default)
_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def _parse_bool(s):
    try:
        return _BOOL[s.strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {s!r}") from None


def _parse_int_tuple(s):
    return tuple(int(tok) for tok in s.split(",") if tok.strip())


@dataclass
class RunConfig:
    # dataset
    dataset_kind: str = "shapes"        # shapes | folder
    dataset_path: str = ""
    dataset_size: int = 2000            # rendered corpus size for `shapes`
    # nets
    net_latent_dim: int = 50
    net_stages: int = 5
    net_width: int = 64
    net_image_size: int = 32
    net_channels: int = 1
    net_disc_dims: tuple = (256, 128, 64)
    # schedule
    schedule_warmup_end: int = 200
    schedule_lvm_insert: int = 2000
    schedule_kappa_end: int = 8000
    schedule_total_iters: int = 10000
    schedule_refresh: int = 500
    schedule_l_l_start: int = -1        # -1 → first refit after warm-up
    schedule_gamma_m_start: int = 2000
    schedule_gamma_m_end: int = 10000
    schedule_gamma_m_start_value: float = 1.0
    schedule_gamma_m_end_value: float = 100.0
    # loss weights
    loss_gamma_l: float = 1.0
    loss_gamma_s: float = 0.1
    loss_gamma_c: float = 0.1
    # optimizer
    opt_lr: float = 2e-4
    opt_batch: int = 64
    opt_clip_norm: float = 10.0
    # latent variable model
    lvm_mode: str = "ica"               # ica | vae
    lvm_noise_sigma: float = 0.01
    lvm_signal_dist: str = "skewed-beta"
    lvm_buffer: int = 4096
    lvm_fit_steps: int = 250
    lvm_gamma_o: float = 0.1
    lvm_freeze_w: bool = False          # block the factorization grad into W
    lvm_subtract_noise: bool = False
    # masking
    masking_sweep: bool = False         # perturb all d elements per image
    # run
    run_seed: int = 0
    run_out_dir: str = "runs/default"
    run_baseline: bool = False          # plain-GAN comparator: κ≡0, extra γ≡0

    def __post_init__(self):
        if self.net_latent_dim % self.net_stages != 0:
            raise ValueError(f"net.latent_dim {self.net_latent_dim} not divisible "
                             f"by net.stages {self.net_stages}")
        if not (self.schedule_warmup_end < self.schedule_lvm_insert
                < self.schedule_kappa_end <= self.schedule_total_iters):
            raise ValueError("schedule must satisfy warmup_end < lvm_insert "
                             "< kappa_end <= total_iters")
        if self.schedule_refresh < 1:
            raise ValueError("schedule.refresh must be >= 1")
        if self.opt_batch < 2:
            raise ValueError("opt.batch must be >= 2 (pairwise losses)")
        for name in ("loss_gamma_l", "loss_gamma_s", "loss_gamma_c",
                     "schedule_gamma_m_start_value", "schedule_gamma_m_end_value"):
            if getattr(self, name) < 0:
                raise ValueError(f"{_ATTR_TO_KEY[name]} must be nonnegative")
        if self.lvm_mode not in ("ica", "vae"):
            raise ValueError(f"lvm.mode must be ica or vae, got {self.lvm_mode!r}")
        if self.dataset_kind not in ("shapes", "folder"):
            raise ValueError(f"dataset.kind must be shapes or folder, "
                             f"got {self.dataset_kind!r}")

    @property
    def l_l_start(self):
        """Iteration at which the factorization loss activates."""
        return self.schedule_l_l_start if self.schedule_l_l_start >= 0 \
            else self.schedule_warmup_end

    def to_dict(self):
        """Dotted-key dict of primitives (config echo for checkpoints)."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[_ATTR_TO_KEY[f.name]] = list(v) if isinstance(v, tuple) else v
        return out


_PARSERS = {int: int, float: float, str: lambda s: s.strip(),
            bool: _parse_bool, tuple: _parse_int_tuple}

_ATTR_TO_KEY = {f.name: f.name.replace("_", ".", 1) for f in fields(RunConfig)}
_KEY_TO_ATTR = {v: k for k, v in _ATTR_TO_KEY.items()}
_KEY_TYPE = {_ATTR_TO_KEY[f.name]: type(f.default) for f in fields(RunConfig)}


def parse_kv_text(text):
    """`key = value` per line; `#` starts a comment; blank lines ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected `key = value`, got {raw!r}")
        key, value = line.split("=", 1)
        if not key.strip():
            raise ValueError(f"line {lineno}: empty key")
        out[key.strip()] = value.strip()
    return out


def config_from_pairs(pairs):
    """RunConfig from {dotted key: string value}; unknown keys rejected."""
    kwargs = {}
    for key, value in pairs.items():
        if key not in _KEY_TO_ATTR:
            raise ValueError(f"unknown configuration key {key!r}")
        parser = _PARSERS[_KEY_TYPE[key]]
        try:
            kwargs[_KEY_TO_ATTR[key]] = parser(value)
        except ValueError as exc:
            raise ValueError(f"bad value for {key}: {exc}") from None
    return RunConfig(**kwargs)


def load_config(path, overrides=()):
    """Parse a config file, then apply `key=value` override strings in order."""
    with open(path) as fh:
        pairs = parse_kv_text(fh.read())
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    return config_from_pairs(pairs)


def config_from_dict(d):
    """Inverse of to_dict (checkpoint echo → RunConfig)."""
    kwargs = {}
    for key, value in d.items():
        attr = _KEY_TO_ATTR[key]
        kwargs[attr] = tuple(value) if isinstance(value, list) else value
    return RunConfig(**kwargs)
