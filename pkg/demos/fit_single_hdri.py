"""
Fitting one HDRI with a handful of lobes
========================================

Loads the bundled sun-and-sky panorama, fits a 7-lobe mixture at desk
scale, and writes the ground truth next to the reconstruction so the
result can be eyeballed.  Takes roughly 15 seconds.
"""

import os

import numpy as np
from PIL import Image

from asgfit import asg, cli, hdr_io, losses, optimizer
from asgfit.geometry import SampleGrid

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
OUT = os.path.join(ROOT, "demos", "out")
os.makedirs(OUT, exist_ok=True)

# ---------------------------------------------------------------------------
# Load and downsample.  128x256 is already modest, but 64x128 keeps the
# demo under half a minute while leaving the sun and the big blobs
# perfectly visible.

env = hdr_io.resample(hdr_io.load_env(os.path.join(ROOT, "data", "sunsky.hdr")), 64)
grid = SampleGrid.make(env.height)
print(f"input: {env.source or 'sunsky.hdr'} at {env.height}x{env.width}, "
      f"radiance range [{env.pixels.min():.3f}, {env.pixels.max():.1f}]")

# ---------------------------------------------------------------------------
# Fit.  Short budget; the CLI defaults run 24000 epochs for final
# quality, but the loss curve has flattened enough for a picture long
# before that.

cfg = optimizer.FitConfig(num_asgs=7, grid_height=env.height,
                          epochs_first=1500, epochs_rest=1)
init = optimizer.init_mixture(cfg, env.pixels, grid)
params, history = optimizer.fit_frame(env.pixels, init, None, cfg, grid)

for epoch in (0, 10, 100, 500, 1500):
    b = history[epoch]
    print(f"  epoch {epoch:5d}: total {b.total:9.4f}  "
          f"recon {b.reconstruction:9.4f}  diffuse {b.diffuse:8.4f}")

# ---------------------------------------------------------------------------
# Inspect the fitted lobes: sharpness pairs and peak colors, brightest
# first.  The sun should show up as one very sharp, very bright lobe.

realized = asg.realize(params)
order = np.argsort(-realized.c.max(axis=1))
print("fitted lobes (brightest first):")
for i in order:
    print(f"  mu {realized.mu[i]:8.2f}  lambda {realized.lam[i]:8.2f}  "
          f"peak rgb ({realized.c[i][0]:.2f}, {realized.c[i][1]:.2f}, "
          f"{realized.c[i][2]:.2f})")

# ---------------------------------------------------------------------------
# Save params, an HDR reconstruction, and a tone-mapped comparison
# strip (ground truth on top, reconstruction below).

recon = asg.evaluate(realized, grid.dirs_flat).reshape(env.pixels.shape)
final = losses.reconstruction_loss(recon, env.pixels, grid, "l1")[0]
print(f"final solid-angle-weighted L1: {final:.4f} "
      f"({100 * final / history[0].reconstruction:.1f}% of the initial error)")

hdr_io.save_params(os.path.join(OUT, "sunsky_7lobes.json"), [params], cfg)
hdr_io.save_env(os.path.join(OUT, "sunsky_recon.hdr"), hdr_io.EnvMap(recon))
strip = np.concatenate([env.pixels, recon], axis=0)
Image.fromarray(cli.tone_map(strip, exposure=0.8), mode="RGB").save(
    os.path.join(OUT, "sunsky_vs_recon.png"))
print(f"wrote sunsky_7lobes.json, sunsky_recon.hdr, sunsky_vs_recon.png to {OUT}")
