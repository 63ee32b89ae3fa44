"""Synthetic spherical scenes and parameter factories shared across tests.

All generators are deterministic functions of their arguments; blob
positions are fixed in "general position" (nothing axis-aligned or
antipodally paired) so fits have real structure to chase.
"""

import numpy as np

from asgfit import asg, geometry


def unit(v):
    return geometry.normalize(np.asarray(v, dtype=float))


def gaussian_blob(grid, center, width, rgb):
    """Isotropic angular bump exp(-(angle/width)^2) scaled per channel."""
    ang = np.arccos(np.clip(grid.dirs_flat @ unit(center), -1.0, 1.0))
    falloff = np.exp(-((ang / width) ** 2))
    return (falloff[:, None] * np.asarray(rgb, dtype=float)).reshape(
        grid.height, grid.width, 3)


def gradient_sky(grid, horizon, zenith):
    """Linear-in-z ramp between two RGB values."""
    t = ((grid.dirs_flat[:, 2] + 1.0) / 2.0)[:, None]
    img = np.asarray(horizon, dtype=float) * (1.0 - t) + np.asarray(zenith, dtype=float) * t
    return img.reshape(grid.height, grid.width, 3)


def sky_with_sun(grid, sun_dir, sun_radius_deg=5.0,
                 sun_intensity=(60.0, 50.0, 35.0), extra=True):
    """Gradient sky plus a bright sun disk; the workhorse scene."""
    env = gradient_sky(grid, (0.25, 0.35, 0.55), (0.55, 0.80, 1.20))
    env = env + gaussian_blob(grid, sun_dir, np.radians(sun_radius_deg) / 2.0,
                              sun_intensity)
    if extra:
        env = env + gaussian_blob(grid, (-0.5, 0.7, -0.2), 0.6, (1.5, 0.8, 0.4))
    return env


def sun_hdri(grid, sun_dir, radius_deg=3.0, intensity=(300.0, 280.0, 240.0)):
    """Darker sky with a small, very bright sun; used for energy and
    loss-ablation comparisons where the sun dominates the L1 budget."""
    env = gradient_sky(grid, (0.20, 0.28, 0.45), (0.35, 0.50, 0.80))
    env = env + gaussian_blob(grid, sun_dir, np.radians(radius_deg) / 2.0, intensity)
    env = env + gaussian_blob(grid, (-0.4, 0.8, 0.3), 0.5, (2.0, 1.2, 0.5))
    return env


# Feature set of the many-blob scene: center, angular width, RGB peak.
RICH_SKY_BLOBS = (
    ((-0.5, 0.7, -0.2), 0.30, (1.5, 0.8, 0.4)),
    ((0.9, -0.3, 0.1), 0.18, (6.0, 2.0, 0.8)),
    ((-0.8, -0.4, 0.45), 0.12, (2.5, 4.5, 7.0)),
    ((0.1, -0.9, -0.35), 0.40, (0.9, 1.8, 0.7)),
    ((-0.2, 0.15, 0.95), 0.10, (8.0, 8.5, 9.5)),
    ((0.6, 0.55, -0.55), 0.22, (3.0, 1.1, 2.2)),
    ((-0.95, 0.1, -0.25), 0.15, (1.2, 3.2, 1.6)),
    ((0.4, -0.5, 0.75), 0.08, (12.0, 6.0, 3.0)),
    ((0.2, 0.95, -0.1), 0.14, (15.0, 9.0, 22.0)),
    ((0.85, 0.2, -0.5), 0.09, (25.0, 18.0, 10.0)),
    ((-0.3, -0.85, 0.5), 0.20, (10.0, 16.0, 6.0)),
)


def rich_sky(grid):
    """Many-feature scene for lobe-count sweeps: gradient sky, two hot
    suns, and eleven blobs of varied width, color, and brightness, so
    extra lobes keep finding structure to absorb."""
    env = gradient_sky(grid, (0.25, 0.35, 0.55), (0.55, 0.80, 1.20))
    env = env + gaussian_blob(grid, (0.3, 0.8, 0.5), np.radians(4.0) / 2.0,
                              (90.0, 75.0, 50.0))
    env = env + gaussian_blob(grid, (-0.6, -0.6, -0.5), np.radians(3.0) / 2.0,
                              (40.0, 32.0, 20.0))
    for center, width, rgb in RICH_SKY_BLOBS:
        env = env + gaussian_blob(grid, center, width, rgb)
    return env


def rotating_scene(grid, frames, step_deg, base_sun=(0.8, 0.1, 0.45)):
    """The sun_hdri scene rotating rigidly about +Z, step_deg per frame."""
    out = []
    blob = unit((-0.4, 0.8, 0.3))
    for t in range(frames):
        rot = geometry.rotation_about_axis((0.0, 0.0, 1.0),
                                           np.radians(step_deg * t))
        env = gradient_sky(grid, (0.20, 0.28, 0.45), (0.35, 0.50, 0.80))
        env = env + gaussian_blob(grid, rot @ unit(base_sun),
                                  np.radians(3.0) / 2.0, (300.0, 280.0, 240.0))
        env = env + gaussian_blob(grid, rot @ blob, 0.5, (2.0, 1.2, 0.5))
        out.append(env)
    return out


def random_params(rng, count):
    """Well-conditioned random raw parameters: moderate bandwidths,
    generic frames, intensities around 1."""
    return asg.MixtureParams(
        rng.normal(1.5, 0.8, count),
        rng.normal(1.5, 0.8, count),
        rng.normal(size=(count, 3)),
        rng.normal(size=(count, 3)),
        rng.normal(0.0, 0.5, (count, 3)))
