"""Equirectangular sphere sampling and orthonormal-frame utilities.

Conventions, shared by every module and documented in docs/format.md:

* +Z is up.  The colatitude ``theta`` is measured from +Z, the azimuth
  ``phi`` from +X, counterclockwise when viewed from +Z.
* Pixel centers sit at half-integer offsets: row ``py`` covers the
  colatitude band ``[pi*py/H, pi*(py+1)/H]`` and is sampled at its center.
* Equirectangular images have ``width == 2 * height``.

Directions are plain ``(..., 3)`` float arrays of unit vectors.  All
functions here are pure and safe to call concurrently; a ``SampleGrid``
is built once per fit and shared read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Below this, a tangent seed counts as parallel to the axis.
DEGENERACY_EPS = 1e-8


class FrameDegeneracyError(ValueError):
    """Tangent seed is (nearly) parallel to the lobe axis, or the axis is
    (nearly) zero, so no orthonormal frame can be built."""


def normalize(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Return ``v`` scaled to unit length along ``axis``."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    if np.any(norm == 0.0):
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def pixel_to_direction(px, py, width: int, height: int) -> np.ndarray:
    """Unit direction at the center of pixel ``(px, py)``.

    theta = pi*(py+0.5)/height, phi = 2*pi*(px+0.5)/width.  Accepts
    scalars or arrays; returns shape ``(..., 3)``.
    """
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    if np.any(px < 0) or np.any(px >= width) or np.any(py < 0) or np.any(py >= height):
        raise ValueError(f"pixel index out of range for {width}x{height} grid")
    theta = np.pi * (py + 0.5) / height
    phi = TWO_PI * (px + 0.5) / width
    sin_t = np.sin(theta)
    return np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), np.cos(theta)], axis=-1)


def direction_to_pixel(d: np.ndarray, width: int, height: int):
    """Real-valued pixel coordinates whose center maps back to ``d``.

    Exact inverse of :func:`pixel_to_direction` on pixel centers.  The
    seam phi == 0 maps to px == -0.5 (left edge); the poles map to
    py == -0.5 and py == height - 0.5.  Values are returned unclamped,
    for bilinear lookup by the caller.
    """
    d = np.asarray(d, dtype=float)
    theta = np.arccos(np.clip(d[..., 2], -1.0, 1.0))
    phi = np.arctan2(d[..., 1], d[..., 0])
    phi = np.where(phi < 0.0, phi + TWO_PI, phi)
    px = phi / TWO_PI * width - 0.5
    py = theta / np.pi * height - 0.5
    return px, py


def solid_angle(py, width: int, height: int) -> np.ndarray:
    """Exact steradian area of any pixel in row ``py``.

    The row spans colatitudes [pi*py/H, pi*(py+1)/H], so its sphere-band
    area is (2*pi/width) * (cos(pi*py/H) - cos(pi*(py+1)/H)); the sum over
    a whole grid telescopes to exactly 4*pi.
    """
    py = np.asarray(py)
    if np.any(py < 0) or np.any(py >= height):
        raise ValueError(f"row index out of range for height {height}")
    upper = np.cos(np.pi * py / height)
    lower = np.cos(np.pi * (py + 1) / height)
    return (TWO_PI / width) * (upper - lower)


@dataclass(frozen=True)
class SampleGrid:
    """Dense equirectangular sample set: one direction and solid-angle
    weight per pixel.  ``weights.sum() == 4*pi`` up to round-off."""

    width: int
    height: int
    directions: np.ndarray  # (H, W, 3) unit vectors
    weights: np.ndarray     # (H, W) steradians, all > 0

    @classmethod
    def make(cls, height: int) -> "SampleGrid":
        if height < 1:
            raise ValueError("grid height must be >= 1")
        width = 2 * height
        pxx, pyy = np.meshgrid(np.arange(width), np.arange(height))
        directions = pixel_to_direction(pxx, pyy, width, height)
        row = solid_angle(np.arange(height), width, height)
        weights = np.broadcast_to(row[:, None], (height, width)).copy()
        return cls(width, height, directions, weights)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def dirs_flat(self) -> np.ndarray:
        """(P, 3) view of the directions, P = height * width."""
        return self.directions.reshape(-1, 3)

    @property
    def weights_flat(self) -> np.ndarray:
        return self.weights.reshape(-1)


@dataclass(frozen=True)
class Frame:
    """Right-handed orthonormal frame {u, v, n}: tangent, bi-tangent,
    lobe axis.  v is always derived as n x u."""

    u: np.ndarray
    v: np.ndarray
    n: np.ndarray


def build_frames(u_raw: np.ndarray, n_raw: np.ndarray):
    """Vectorized Gram-Schmidt: raw (N, 3) seeds -> (u, v, n) arrays.

    n = normalize(n_raw); u = normalize(u_raw orthogonalized against n);
    v = n x u.  Scale-invariant in both seeds.
    """
    u_raw = np.asarray(u_raw, dtype=float)
    n_raw = np.asarray(n_raw, dtype=float)
    n_norm = np.linalg.norm(n_raw, axis=-1)
    if np.any(n_norm <= DEGENERACY_EPS):
        raise FrameDegeneracyError("lobe axis is (nearly) the zero vector")
    n = n_raw / n_norm[..., None]
    t = u_raw - np.sum(u_raw * n, axis=-1, keepdims=True) * n
    t_norm = np.linalg.norm(t, axis=-1)
    if np.any(t_norm <= DEGENERACY_EPS):
        raise FrameDegeneracyError("tangent seed is parallel to the lobe axis")
    u = t / t_norm[..., None]
    v = np.cross(n, u)
    return u, v, n


def build_frame(u_raw, n_raw) -> Frame:
    """Single-frame convenience wrapper around :func:`build_frames`."""
    u, v, n = build_frames(np.asarray(u_raw, float)[None, :], np.asarray(n_raw, float)[None, :])
    return Frame(u[0], v[0], n[0])


def frame_backprop(u_raw: np.ndarray, n_raw: np.ndarray,
                   g_u: np.ndarray, g_v: np.ndarray, g_n: np.ndarray):
    """Adjoint of :func:`build_frames`.

    Given gradients of a scalar with respect to the realized u, v, n
    (each (N, 3)), chain them back through v = n x u, the Gram-Schmidt
    orthogonalization of u, and the normalization of n.  Returns
    ``(g_u_raw, g_n_raw)``.
    """
    u_raw = np.asarray(u_raw, dtype=float)
    n_raw = np.asarray(n_raw, dtype=float)
    n_norm = np.linalg.norm(n_raw, axis=-1)
    n = n_raw / n_norm[..., None]
    un = np.sum(u_raw * n, axis=-1, keepdims=True)
    t = u_raw - un * n
    t_norm = np.linalg.norm(t, axis=-1)
    u = t / t_norm[..., None]

    # v = n x u contributes to both u and n.
    g_u_tot = g_u + np.cross(g_v, n)
    g_n_tot = g_n + np.cross(u, g_v)
    # y = x/|x|  =>  g_x = (g_y - (g_y.y) y) / |x|
    g_t = (g_u_tot - np.sum(g_u_tot * u, axis=-1, keepdims=True) * u) / t_norm[..., None]
    g_u_raw = g_t - np.sum(g_t * n, axis=-1, keepdims=True) * n
    # t = u_raw - (u_raw.n) n  also feeds n.
    gtn = np.sum(g_t * n, axis=-1, keepdims=True)
    g_n_tot = g_n_tot - gtn * u_raw - un * g_t
    g_n_raw = (g_n_tot - np.sum(g_n_tot * n, axis=-1, keepdims=True) * n) / n_norm[..., None]
    return g_u_raw, g_n_raw


def reseed_tangent(n: np.ndarray) -> np.ndarray:
    """Deterministic tangent seed for axis ``n``: the coordinate axis with
    the smallest |n| component, orthogonalized against n.  Used both for
    initialization and for recovery when optimization drives a tangent
    seed parallel to its axis.
    """
    n = np.atleast_2d(np.asarray(n, dtype=float))
    picks = np.eye(3)[np.argmin(np.abs(n), axis=-1)]
    t = picks - np.sum(picks * n, axis=-1, keepdims=True) * n
    return t


def fibonacci_axes(count: int) -> np.ndarray:
    """Deterministic near-uniform spread of ``count`` unit axes.

    Golden-angle spiral with endpoints at the poles; the first axis is
    exactly (0, 0, 1).
    """
    if count < 1:
        raise ValueError("need at least one axis")
    i = np.arange(count, dtype=float)
    z = 1.0 - 2.0 * i / (count - 1) if count > 1 else np.ones(1)
    phi = i * (math.pi * (3.0 - math.sqrt(5.0)))
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix (3, 3) about a (not necessarily unit) axis."""
    a = normalize(np.asarray(axis, dtype=float))
    k = np.array([[0.0, -a[2], a[1]],
                  [a[2], 0.0, -a[0]],
                  [-a[1], a[0], 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)
