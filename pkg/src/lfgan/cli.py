"""Command-line entry points: train, eval, sample, serve.

Exit codes: 0 ok, 1 runtime failure (including training aborts),
2 invalid configuration or arguments, 3 unreadable/corrupt checkpoint.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import _KEY_TO_ATTR, load_config
from .datasets import image_grid, save_image, shapes_corpus, default_factor_spec
from .lvm import max_normalize, sample_latent
from .metrics import (RandomConvProbe, factor_consistency, fit_factor_oracle,
                      frechet_proxy, max_factor_per_element,
                      perturbation_sweep, report_csv)
from .nets import generate
from .trainer import TrainAbort, Trainer, load_snapshot

EXIT_BAD_CONFIG = 2
EXIT_BAD_CHECKPOINT = 3


def _resolve_key(key):
    """Accept either a dotted key or an unambiguous bare suffix."""
    if key in _KEY_TO_ATTR:
        return key
    hits = [k for k in _KEY_TO_ATTR if k.split(".", 1)[1] == key]
    if len(hits) == 1:
        return hits[0]
    if not hits:
        raise ValueError(f"unknown configuration key {key!r}")
    raise ValueError(f"ambiguous key {key!r}: matches {', '.join(sorted(hits))}")


def _normalize_overrides(items, seed=None):
    out = []
    for item in items:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        out.append(f"{_resolve_key(key.strip())}={value.strip()}")
    if seed is not None:
        out.append(f"run.seed={seed}")
    return out


def _run_tag(cfg):
    """Short label for the configuration variant (ablations, baseline)."""
    if cfg.run_baseline:
        return "baseline-gan"
    removed = []
    if cfg.loss_gamma_l == 0.0:
        removed.append("-Ll")
    if cfg.loss_gamma_s == 0.0:
        removed.append("-Ls")
    if cfg.loss_gamma_c == 0.0:
        removed.append("-Lc")
    if (cfg.schedule_gamma_m_start_value == 0.0
            and cfg.schedule_gamma_m_end_value == 0.0):
        removed.append("-Lm")
    if cfg.lvm_mode == "vae":
        removed.append("vae-lvm")
    return "".join(removed) if removed else "full"


def cmd_train(args):
    try:
        overrides = _normalize_overrides(args.set, args.seed)
        cfg = load_config(args.config, overrides=overrides)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    tag = _run_tag(cfg)
    print(f"run tag: {tag}")
    try:
        trainer = Trainer(cfg)
    except (OSError, ValueError) as exc:  # dataset problems → no partial output
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    out = Path(cfg.run_out_dir)
    try:
        path = trainer.run()
    except TrainAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    (out / "tag.txt").write_text(tag + "\n")
    print(f"checkpoint: {path}")
    print(f"log: {out / 'train_log.csv'}")
    return 0


def _load_or_exit(path):
    try:
        return load_snapshot(path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(EXIT_BAD_CHECKPOINT)


def _generate_fn(model):
    return lambda codes: generate(model, codes).value


def cmd_eval(args):
    cfg, model, lvm = _load_or_exit(args.checkpoint)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "eval"
    out.mkdir(parents=True, exist_ok=True)
    d = cfg.net_latent_dim
    probe = RandomConvProbe(seed=0)
    gen_fn = _generate_fn(model)

    report = perturbation_sweep(gen_fn, lvm, d,
                                n_per_element=args.perturbations,
                                seed=args.seed, probe=probe)
    (out / "report.csv").write_text(report_csv(report))

    rng = np.random.default_rng([args.seed, 11])
    if lvm is not None and hasattr(lvm, "sample"):
        codes = lvm.sample(args.frechet_samples, int(rng.integers(2 ** 63)))
    elif lvm is not None:
        codes = sample_latent(lvm, args.frechet_samples,
                              int(rng.integers(2 ** 63)))
    else:
        codes = rng.uniform(-1.0, 1.0, size=(args.frechet_samples, d))
    fake = gen_fn(max_normalize(codes))
    spec = default_factor_spec(cfg.net_image_size)
    real, factors = shapes_corpus(args.frechet_samples,
                                  seed=[cfg.run_seed, 1000], spec=spec)
    side = cfg.net_image_size
    fr = np.stack([probe.descriptor(im.reshape(side, side)) for im in real])
    ff = np.stack([probe.descriptor(im.reshape(side, side)) for im in fake])
    frechet = frechet_proxy(fr, ff)

    lines = [f"pairs={report.pair_count}",
             f"mean_mae={report.mean_mae:.10g}",
             f"mean_perceptual={report.mean_perceptual:.10g}",
             f"frechet={frechet:.10g}"]
    (out / "metrics.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)

    if args.factors:
        if cfg.dataset_kind != "shapes":
            print("error: factor consistency needs the synthetic corpus",
                  file=sys.stderr)
            return EXIT_BAD_CONFIG
        names = [f.name for f in spec.factors]
        oracle = fit_factor_oracle(real, factors, factor_names=names,
                                   n_features=1024, ridge=1.0, seed=1)
        table = factor_consistency(gen_fn, lvm, oracle, d,
                                   n_per_element=args.perturbations,
                                   seed=args.seed)
        rows = ["element,factor,corr"]
        for j, name, r in max_factor_per_element(table, names):
            rows.append(f"{j},{name},{r:.10g}")
        (out / "factors.csv").write_text("\n".join(rows) + "\n")
        print(f"factors: {out / 'factors.csv'}")
    return 0


def cmd_sample(args):
    cfg, model, lvm = _load_or_exit(args.checkpoint)
    d = cfg.net_latent_dim
    rng = np.random.default_rng([args.seed, 13])

    def draw(n):
        if lvm is None:
            return max_normalize(rng.uniform(-1.0, 1.0, size=(n, d)))
        if hasattr(lvm, "sample"):
            return max_normalize(lvm.sample(n, int(rng.integers(2 ** 63))))
        return max_normalize(sample_latent(lvm, n, int(rng.integers(2 ** 63))))

    if args.mode == "random":
        codes = draw(args.n)
    elif args.mode == "interp":
        a, b = draw(2)
        t = np.linspace(0.0, 1.0, args.n)[:, None]
        codes = (1.0 - t) * a + t * b
        assert np.array_equal(codes[0], a) and np.array_equal(codes[-1], b)
    elif args.mode == "element-sweep":
        if not 0 <= args.element < d:
            print(f"error: element must lie in [0, {d})", file=sys.stderr)
            return EXIT_BAD_CONFIG
        base = draw(1)[0]
        codes = np.tile(base, (args.n, 1))
        codes[:, args.element] = np.linspace(-1.0, 1.0, args.n)
        others = np.delete(codes, args.element, axis=1)
        assert (others == others[0]).all()  # frozen off-sweep elements
    else:  # argparse choices make this unreachable
        print(f"error: unknown mode {args.mode!r}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    images = generate(model, codes).value
    grid = image_grid(images, cols=min(args.n, 8), size=cfg.net_image_size)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_image(out, grid)
    print(f"grid: {out}  codes: {codes.shape}")
    return 0


def cmd_serve(args):
    from .server import serve  # deferred: keeps http.server off import paths
    cfg, model, lvm = _load_or_exit(args.checkpoint)
    return serve(cfg, model, host=args.host, port=args.port)


def build_parser():
    p = argparse.ArgumentParser(prog="lfgan")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the training schedule")
    t.add_argument("--config", required=True)
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="config override; bare keys allowed when unambiguous")
    t.add_argument("--seed", type=int, default=None,
                   help="shorthand for --set run.seed=N")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="perturbation + distribution metrics")
    e.add_argument("checkpoint")
    e.add_argument("--out", default=None)
    e.add_argument("--perturbations", type=int, default=10)
    e.add_argument("--frechet-samples", type=int, default=512)
    e.add_argument("--factors", action="store_true",
                   help="also correlate elements with ground-truth factors")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(fn=cmd_eval)

    s = sub.add_parser("sample", help="write an image grid")
    s.add_argument("checkpoint")
    s.add_argument("--mode", choices=("random", "interp", "element-sweep"),
                   default="random")
    s.add_argument("--n", type=int, default=16)
    s.add_argument("--element", type=int, default=0)
    s.add_argument("--out", default="grid.pgm")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_sample)

    v = sub.add_parser("serve", help="HTTP API over a checkpoint")
    v.add_argument("checkpoint")
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8765)
    v.set_defaults(fn=cmd_serve)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
