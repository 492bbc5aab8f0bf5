"""Self-training orchestration.

Phases: (i) warm-up — hinge GAN only, Gaussian codes; (ii) from the first
refresh after warm-up — feature moments over a ring buffer of real+fake
features, CP refits every `refresh` iterations (warm-started), factorization
loss active with its gradient chained into the feature head; (iii) from the
insertion point — consistency, mixup, and masking losses switch on and
generator codes blend LVM draws with the Gaussian prior under the annealed κ.
One discriminator step then one generator step per iteration, momentum-free
RMS updates throughout.
"""

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .autodiff import Var, backward
from .config import RunConfig, config_from_dict
from .cp_factor import CpFitConfig, CpModel, fit, loss_l_feature_grad
from .datasets import default_factor_spec, load_folder, shapes_corpus
from .losses import (GammaRamp, LossParts, LossWeights, composite_loss,
                     consistency_loss, cycled_indices, gan_loss, masking_loss,
                     mixup_loss)
from .lvm import (IcaLvm, VaeLvm, build_feature_vae, build_mixing,
                  infer_latent, max_normalize, sample_latent, vae_elbo)
from .moments import FeatureBuffer
from .nets import NetConfig, build_gan, clip_global_norm, discriminate, generate

LOG_HEADER = "iter,loss_gan_d,loss_gan_g,loss_l,loss_c,loss_s,loss_m,kappa,gamma_m"


class TrainAbort(RuntimeError):
    """Non-finite loss; carries the iteration and the emergency checkpoint."""

    def __init__(self, iteration, checkpoint_path, cause):
        super().__init__(f"aborted at iteration {iteration}: {cause} "
                         f"(state saved to {checkpoint_path})")
        self.iteration = iteration
        self.checkpoint_path = checkpoint_path


@dataclass(frozen=True)
class TrainSchedule:
    warmup_end: int = 200
    lvm_insert: int = 2000
    kappa_end: int = 8000
    total_iters: int = 10000
    refresh: int = 500
    l_l_start: int = 200

    def __post_init__(self):
        if not (self.warmup_end < self.lvm_insert
                < self.kappa_end <= self.total_iters):
            raise ValueError("need warmup_end < lvm_insert < kappa_end "
                             "<= total_iters")
        if self.refresh < 1:
            raise ValueError("refresh period must be >= 1")

    @classmethod
    def from_config(cls, cfg):
        return cls(warmup_end=cfg.schedule_warmup_end,
                   lvm_insert=cfg.schedule_lvm_insert,
                   kappa_end=cfg.schedule_kappa_end,
                   total_iters=cfg.schedule_total_iters,
                   refresh=cfg.schedule_refresh,
                   l_l_start=cfg.l_l_start)


def kappa(iteration, schedule):
    """Blend weight for LVM codes: 0 until insertion, 1 from kappa_end on."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    if iteration < schedule.lvm_insert:
        return 0.0
    if iteration >= schedule.kappa_end:
        return 1.0
    return (iteration - schedule.lvm_insert) \
        / (schedule.kappa_end - schedule.lvm_insert)


def draw_generator_input(iteration, schedule, lvm, batch, d, seed):
    """κ-blended generator codes, max-element normalized.

    h = κ·h_l + (1−κ)·h_p with h_p Gaussian; an LVM requested before its
    first fit falls back to the prior with a warning.
    """
    k = kappa(iteration, schedule)
    rng = np.random.default_rng(seed)
    h_p = rng.normal(size=(batch, d))
    if k == 0.0:
        return max_normalize(h_p)
    if lvm is None:
        warnings.warn("LVM codes requested before the first fit; "
                      "using the prior", RuntimeWarning, stacklevel=2)
        return max_normalize(h_p)
    if hasattr(lvm, "sample"):
        h_l = lvm.sample(batch, seed + 1)
    else:
        h_l = sample_latent(lvm, batch, seed + 1)
    return max_normalize(k * h_l + (1.0 - k) * h_p)


class RmsOptimizer:
    """Momentum-free adaptive steps: per-parameter RMS gradient scaling."""

    def __init__(self, params, lr=2e-4, rho=0.9, eps=1e-8):
        self.params = dict(params)  # name → Var
        self.lr, self.rho, self.eps = lr, rho, eps
        self.acc = {k: np.zeros_like(v.value) for k, v in self.params.items()}

    def step(self):
        for name, var in self.params.items():
            g = var.grad
            acc = self.acc[name]
            acc *= self.rho
            acc += (1.0 - self.rho) * g * g
            var.value -= self.lr * g / (np.sqrt(acc) + self.eps)

    def variables(self):
        return list(self.params.values())


def _fmt(x):
    return repr(float(x))


class Trainer:
    def __init__(self, config, data=None):
        self.config = config
        self.schedule = TrainSchedule.from_config(config)
        d = config.net_latent_dim
        self.net_config = NetConfig(latent_dim=d, stages=config.net_stages,
                                    width=config.net_width,
                                    image_size=config.net_image_size,
                                    channels=config.net_channels,
                                    disc_dims=config.net_disc_dims,
                                    feature_dim=d, seed=config.run_seed)
        self.model = build_gan(self.net_config)
        self.data = data if data is not None else self._load_data()
        if self.data.shape[1] != self.net_config.pixels:
            raise ValueError(f"dataset rows have {self.data.shape[1]} pixels, "
                             f"net expects {self.net_config.pixels}")
        self.rng = np.random.default_rng([config.run_seed, 7])
        self.buffer = FeatureBuffer(dim=d, capacity=config.lvm_buffer)
        self.cp = None
        self.lvm = None
        self.vae = None
        self.iteration = 0
        self.log_rows = []
        if config.run_baseline:
            self.weights = LossWeights(
                gamma_l=0.0, gamma_s=0.0, gamma_c=0.0,
                gamma_m=GammaRamp(start_iter=config.schedule_gamma_m_start,
                                  start_value=0.0,
                                  end_iter=config.schedule_gamma_m_end,
                                  end_value=0.0))
        else:
            self.weights = LossWeights(
                gamma_l=config.loss_gamma_l, gamma_s=config.loss_gamma_s,
                gamma_c=config.loss_gamma_c,
                gamma_m=GammaRamp(start_iter=config.schedule_gamma_m_start,
                                  start_value=config.schedule_gamma_m_start_value,
                                  end_iter=config.schedule_gamma_m_end,
                                  end_value=config.schedule_gamma_m_end_value))
        lr = config.opt_lr
        disc = self.model.disc
        self.opt_d = RmsOptimizer(
            {n: disc[n] for n in disc.names()
             if n.startswith("body") or n.startswith("adv")}, lr=lr)
        self.opt_g = RmsOptimizer(
            {n: self.model.gen[n] for n in self.model.gen.names()}, lr=lr)
        self.opt_h = RmsOptimizer(
            {n: disc[n] for n in ("feat.W", "mask.W", "mask.b")}, lr=lr)
        self.opt_v = None  # created with the VAE when that mode activates

    # --- data ------------------------------------------------------------

    def _load_data(self):
        cfg = self.config
        if cfg.dataset_kind == "shapes":
            spec = default_factor_spec(cfg.net_image_size)
            images, _ = shapes_corpus(cfg.dataset_size,
                                      seed=[cfg.run_seed, 1000], spec=spec)
            return images
        if not cfg.dataset_path:
            raise ValueError("dataset.kind = folder requires dataset.path")
        return load_folder(cfg.dataset_path, size=cfg.net_image_size)

    def _seed(self):
        return int(self.rng.integers(2 ** 63))

    # --- LVM maintenance ---------------------------------------------------

    def _lvm_event_due(self, it):
        s = self.schedule
        return (not self.config.run_baseline and it >= s.l_l_start
                and (it - s.l_l_start) % s.refresh == 0 and len(self.buffer) > 0)

    def _refit(self, it):
        cfg = self.config
        if cfg.lvm_mode == "vae":
            if self.vae is None:
                self.vae = build_feature_vae(cfg.net_latent_dim,
                                             cfg.net_latent_dim,
                                             hidden=32, seed=cfg.run_seed + 17)
                self.opt_v = RmsOptimizer(
                    {n: self.vae.params[n] for n in self.vae.params.names()},
                    lr=cfg.opt_lr)
                self.lvm = VaeLvm(self.vae, self.buffer.snapshot())
            else:
                self.lvm.refresh(self.buffer.snapshot())
            return
        fit_cfg = CpFitConfig(rank=cfg.net_latent_dim, gamma_o=cfg.lvm_gamma_o,
                              steps=cfg.lvm_fit_steps, seed=cfg.run_seed + 23,
                              restarts=1 if self.cp is not None else 4)
        self.cp = fit(self.buffer.moments(), fit_cfg, warm_start=self.cp)
        self.lvm = build_mixing(self.cp, noise_sigma=cfg.lvm_noise_sigma,
                                signal_dist=cfg.lvm_signal_dist)

    def _infer_codes(self, phi_values):
        if hasattr(self.lvm, "infer"):
            return self.lvm.infer(phi_values)
        return infer_latent(self.lvm, phi_values,
                            subtract_noise=self.config.lvm_subtract_noise,
                            seed=self._seed())

    # --- one iteration -----------------------------------------------------

    def _effective_kappa(self, it):
        return 0.0 if self.config.run_baseline else kappa(it, self.schedule)

    def _draw_codes(self, it, batch):
        it_eff = 0 if self.config.run_baseline else it  # baseline pins κ at 0
        return draw_generator_input(it_eff, self.schedule, self.lvm, batch,
                                    self.config.net_latent_dim, self._seed())

    def step(self):
        it = self.iteration
        cfg = self.config
        batch, d = cfg.opt_batch, cfg.net_latent_dim
        model = self.model
        if self._lvm_event_due(it):
            self._refit(it)

        # discriminator step (generator output held constant)
        x_r = self.data[self.rng.integers(0, len(self.data), size=batch)]
        img_f = generate(model, self._draw_codes(it, batch)).value
        model.gen.zero_grad()
        model.disc.zero_grad()
        adv_r, _, phi_r = discriminate(model, x_r)
        adv_f, _, phi_f = discriminate(model, img_f)
        loss_d, _ = gan_loss(adv_r, adv_f)
        backward(loss_d)
        clip_global_norm(self.opt_d.variables(), cfg.opt_clip_norm)
        self.opt_d.step()
        # moments are estimated over the data distribution only: fake features
        # would let an unstable generator contaminate its own code model
        self.buffer.push(phi_r.value)

        # generator (+ heads) step
        past_start = not cfg.run_baseline and it >= self.schedule.l_l_start
        ica_l_l = (past_start and cfg.lvm_mode == "ica"
                   and self.weights.gamma_l > 0.0 and self.cp is not None)
        vae_l_l = past_start and cfg.lvm_mode == "vae" and self.vae is not None
        extras_active = not cfg.run_baseline and it >= self.schedule.lvm_insert
        h = self._draw_codes(it, batch)
        img_g = generate(model, h)
        adv_g, _, phi_g = discriminate(model, img_g)
        _, loss_g = gan_loss(adv_g, adv_g)  # generator side ignores d_real
        parts = LossParts(gan=loss_g)

        v_r2 = phi_r2 = None
        if ica_l_l or vae_l_l or extras_active:
            _, v_r2, phi_r2 = discriminate(model, x_r)  # post-D-update features

        if extras_active:
            # a term with zero weight is removed outright, not just scaled
            if self.weights.gamma_c > 0.0:
                parts.l_c = consistency_loss(h, phi_g)
            if self.weights.gamma_s > 0.0:
                if self.lvm is None:  # mixup needs inferred real codes
                    warnings.warn("mixup skipped: no LVM fitted yet",
                                  RuntimeWarning, stacklevel=2)
                else:
                    # codes live in [−1,1]; project so a badly scaled fit
                    # cannot hand mixup an unbounded regression target
                    h_r = np.clip(self._infer_codes(phi_r2.value), -1.0, 1.0)
                    t = self.rng.uniform(size=(batch, 1))
                    parts.l_s = mixup_loss(model, x_r, img_g, h_r, h, t)
            if self.weights.gamma_m(it) > 0.0:
                if cfg.masking_sweep:
                    h_m = np.repeat(h, d, axis=0)
                    idx = np.tile(np.arange(d), batch)
                else:
                    h_m = h
                    idx = cycled_indices(batch, d, it)
                noise = self.rng.uniform(-1.0, 1.0, size=len(idx))
                parts.l_m, _ = masking_loss(model, h_m, idx, noise)

        if ica_l_l:
            value, g_phi = loss_l_feature_grad(self.cp, phi_r2.value)
            parts.l_l = value
        elif vae_l_l:  # per-step ELBO on the same features
            elbo, _ = vae_elbo(self.vae, phi_r2.value, self._seed())
            parts.l_l = float(elbo.value)
            self.vae.params.zero_grad()
            backward(elbo)
            self.opt_v.step()

        total = composite_loss(parts, self.weights, it)
        model.gen.zero_grad()
        model.disc.zero_grad()
        backward(total)
        if ica_l_l and not cfg.lvm_freeze_w:
            w_var = model.disc["feat.W"]
            w_var.grad += self.weights.gamma_l * (v_r2.value.T @ g_phi)
        clip_global_norm(self.opt_g.variables() + self.opt_h.variables(),
                         cfg.opt_clip_norm)
        self.opt_g.step()
        self.opt_h.step()

        row = (f"{it},{_fmt(loss_d.value)},{_fmt(loss_g.value)},"
               f"{_fmt(_part(parts.l_l))},{_fmt(_part(parts.l_c))},"
               f"{_fmt(_part(parts.l_s))},{_fmt(_part(parts.l_m))},"
               f"{_fmt(self._effective_kappa(it))},"
               f"{_fmt(self.weights.gamma_m(it))}")
        for cell in row.split(",")[1:]:
            if not np.isfinite(float(cell)):
                raise FloatingPointError(f"non-finite value in log row {it}")
        self.log_rows.append(row)
        self.iteration = it + 1
        return row

    # --- persistence --------------------------------------------------------

    def _array_state(self):
        arrays = {}
        snap = {}
        for store, prefix in ((self.model.gen, "gen."),
                              (self.model.disc, "disc.")):
            for name in store.names():
                arrays[prefix + name] = store[name].value
                snap[prefix + name] = store[name]
        for opt, prefix in ((self.opt_d, "opt.d."), (self.opt_g, "opt.g."),
                            (self.opt_h, "opt.h.")):
            for name, acc in opt.acc.items():
                arrays[prefix + name] = acc
                snap[prefix + name] = acc
        if self.cp is not None:
            for name, arr in (("cp.w", self.cp.w), ("cp.lam", self.cp.lam),
                              ("cp.factors", self.cp.factors)):
                arrays[name] = arr
                snap[name] = arr
        if self.lvm is not None and isinstance(self.lvm, IcaLvm):
            arrays["lvm.mixing"] = self.lvm.mixing
            snap["lvm.mixing"] = self.lvm.mixing
        if self.vae is not None:
            for name in self.vae.params.names():
                arrays["vae." + name] = self.vae.params[name].value
                snap["vae." + name] = self.vae.params[name]
            for name, acc in self.opt_v.acc.items():
                arrays["opt.v." + name] = acc
                snap["opt.v." + name] = acc
        arrays["buffer.data"] = self.buffer.snapshot()
        return arrays, snap

    def save(self, path):
        """Write a checkpoint and snap live state to float32 resolution."""
        arrays, snap = self._array_state()
        scalars = {"cp.final_loss": float(self.cp.final_loss)
                   if self.cp is not None and self.cp.final_loss is not None
                   else 0.0}
        n = ckpt.save_checkpoint(
            path, iteration=self.iteration,
            kappa=self._effective_kappa(self.iteration),
            config=self.config.to_dict(),
            arrays=arrays,
            rng_state=self.rng.bit_generator.state,
            scalars=scalars,
            snap_live=snap)
        # rebuild float32-exact dependent state exactly as a resume would
        rebuilt = ckpt.snap_f32(self.buffer.snapshot())
        self.buffer = FeatureBuffer(dim=self.buffer.dim,
                                    capacity=self.buffer.capacity)
        self.buffer.push(rebuilt)
        if self.lvm is not None and isinstance(self.lvm, IcaLvm):
            self.lvm = IcaLvm(mixing=self.lvm.mixing,
                              noise_sigma=self.lvm.noise_sigma,
                              signal_dist=self.lvm.signal_dist)
        if self.vae is not None:
            self.lvm = VaeLvm(self.vae, self.buffer.snapshot())
        return n

    @classmethod
    def resume(cls, path, data=None):
        saved = ckpt.load_checkpoint(path)
        config = config_from_dict(saved.config)
        trainer = cls(config, data=data)
        for store, prefix in ((trainer.model.gen, "gen."),
                              (trainer.model.disc, "disc.")):
            store.load_arrays({n: saved.arrays[prefix + n]
                               for n in store.names()})
        for opt, prefix in ((trainer.opt_d, "opt.d."),
                            (trainer.opt_g, "opt.g."),
                            (trainer.opt_h, "opt.h.")):
            for name in opt.acc:
                opt.acc[name][...] = saved.arrays[prefix + name]
        if "cp.w" in saved.arrays:
            trainer.cp = CpModel(rank=saved.arrays["cp.lam"].shape[0],
                                 w=saved.arrays["cp.w"],
                                 lam=saved.arrays["cp.lam"],
                                 factors=saved.arrays["cp.factors"],
                                 final_loss=saved.scalars.get("cp.final_loss"))
        if "lvm.mixing" in saved.arrays:
            trainer.lvm = IcaLvm(mixing=saved.arrays["lvm.mixing"],
                                 noise_sigma=config.lvm_noise_sigma,
                                 signal_dist=config.lvm_signal_dist)
        if any(k.startswith("vae.") for k in saved.arrays):
            trainer.vae = build_feature_vae(config.net_latent_dim,
                                            config.net_latent_dim, hidden=32,
                                            seed=config.run_seed + 17)
            trainer.vae.params.load_arrays(
                {n: saved.arrays["vae." + n]
                 for n in trainer.vae.params.names()})
            trainer.opt_v = RmsOptimizer(
                {n: trainer.vae.params[n] for n in trainer.vae.params.names()},
                lr=config.opt_lr)
            for name in trainer.opt_v.acc:
                trainer.opt_v.acc[name][...] = saved.arrays["opt.v." + name]
        if saved.arrays["buffer.data"].size:
            trainer.buffer.push(saved.arrays["buffer.data"])
        if trainer.vae is not None:
            trainer.lvm = VaeLvm(trainer.vae, trainer.buffer.snapshot())
        trainer.rng.bit_generator.state = saved.rng_state
        trainer.iteration = saved.iteration
        return trainer

    # --- full run ------------------------------------------------------------

    def run(self, out_dir=None, iters=None):
        """Train to `iters` (default: the schedule's total), writing the log
        and final checkpoint under out_dir (default: config run.out_dir).
        On a non-finite loss the state is checkpointed and TrainAbort raised.
        """
        out = Path(out_dir if out_dir is not None else self.config.run_out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stop = iters if iters is not None else self.schedule.total_iters
        log_path = out / "train_log.csv"
        try:
            while self.iteration < stop:
                self.step()
        except FloatingPointError as exc:
            panic = out / f"abort-iter{self.iteration}.ckpt"
            self.save(panic)
            self._write_log(log_path)
            raise TrainAbort(self.iteration, panic, exc) from exc
        self.save(out / "checkpoint.ckpt")
        self._write_log(log_path)
        return out / "checkpoint.ckpt"

    def _write_log(self, path):
        with open(path, "w") as fh:
            fh.write(LOG_HEADER + "\n")
            for row in self.log_rows:
                fh.write(row + "\n")


def _part(x):
    if x is None:
        return 0.0
    return float(x.value) if isinstance(x, Var) else float(x)


def load_snapshot(path):
    """(config, model, lvm) from a checkpoint — no dataset, no optimizers.

    Enough to sample, evaluate, or serve. `lvm` is None for baseline runs
    that never fitted one.
    """
    saved = ckpt.load_checkpoint(path)
    config = config_from_dict(saved.config)
    net_config = NetConfig(latent_dim=config.net_latent_dim,
                           stages=config.net_stages, width=config.net_width,
                           image_size=config.net_image_size,
                           channels=config.net_channels,
                           disc_dims=config.net_disc_dims,
                           feature_dim=config.net_latent_dim,
                           seed=config.run_seed)
    model = build_gan(net_config)
    for store, prefix in ((model.gen, "gen."), (model.disc, "disc.")):
        store.load_arrays({n: saved.arrays[prefix + n] for n in store.names()})
    lvm = None
    if "lvm.mixing" in saved.arrays:
        lvm = IcaLvm(mixing=saved.arrays["lvm.mixing"],
                     noise_sigma=config.lvm_noise_sigma,
                     signal_dist=config.lvm_signal_dist)
    elif any(k.startswith("vae.") for k in saved.arrays):
        vae = build_feature_vae(config.net_latent_dim, config.net_latent_dim,
                                hidden=32, seed=config.run_seed + 17)
        vae.params.load_arrays({n: saved.arrays["vae." + n]
                                for n in vae.params.names()})
        if saved.arrays["buffer.data"].size:
            lvm = VaeLvm(vae, saved.arrays["buffer.data"])
    return config, model, lvm


def train(config, data=None, out_dir=None, iters=None):
    """Run the full procedure; returns the Trainer (checkpoint + log on disk)."""
    trainer = Trainer(config, data=data)
    trainer.run(out_dir=out_dir, iters=iters)
    return trainer
