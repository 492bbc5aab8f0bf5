"""Edit images element-by-element from a trained checkpoint.

For each latent element: hold a base code fixed, slide that element from
-1 to 1, and write the strip. Also writes an interpolation strip between
two sampled codes. Strips land as PGM files you can open anywhere.
"""

import argparse
from pathlib import Path

import numpy as np

from lfgan.datasets import image_grid, save_image
from lfgan.lvm import max_normalize, sample_latent
from lfgan.nets import generate
from lfgan.trainer import load_snapshot


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("checkpoint", help="checkpoint.ckpt from a training run")
    ap.add_argument("--out", default="edits")
    ap.add_argument("--steps", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg, model, lvm = load_snapshot(args.checkpoint)
    d, side = cfg.net_latent_dim, cfg.net_image_size
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([args.seed, 13])

    def draw(n):
        if lvm is None:
            return max_normalize(rng.uniform(-1.0, 1.0, size=(n, d)))
        return max_normalize(sample_latent(lvm, n, int(rng.integers(2 ** 63))))

    base = draw(1)[0]
    for j in range(d):
        codes = np.tile(base, (args.steps, 1))
        codes[:, j] = np.linspace(-1.0, 1.0, args.steps)
        strip = generate(model, codes).value
        save_image(out / f"element{j}.pgm",
                   image_grid(strip, cols=args.steps, size=side))
    print(f"wrote {d} element strips ({args.steps} steps each) to {out}/")

    a, b = draw(2)
    t = np.linspace(0.0, 1.0, args.steps)[:, None]
    frames = generate(model, (1.0 - t) * a + t * b).value
    save_image(out / "interpolation.pgm",
               image_grid(frames, cols=args.steps, size=side))
    print(f"wrote interpolation strip to {out}/interpolation.pgm")


if __name__ == "__main__":
    main()
