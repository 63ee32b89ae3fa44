"""Degree-3 real spherical harmonics and the Lambertian irradiance map.

The diffuse comparison works on a low-frequency proxy of the
environment: project radiance onto the 16 real SH basis functions
(bands l = 0..3), scale each band by the cosine-lobe kernel, and
evaluate the result back on the grid.  Band 3's kernel weight is zero,
so it never changes the irradiance; it is projected anyway for fidelity
to the stated degree and the no-op is documented here.

Convention: real orthonormal SH without the Condon-Shortley phase
(the positive / graphics convention), indexed flat as l*(l+1)+m.
Projection uses the solid-angle-weighted Riemann sum on the sample
grid, the same quadrature the losses use.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import SampleGrid

N_COEFFS = 16

# Band of each flat coefficient index.
BAND = np.repeat(np.arange(4), np.arange(4) * 2 + 1)

# Per-band multiplier turning radiance coefficients into irradiance
# coefficients (clamped-cosine kernel, convolution normalization baked
# in): pi, 2pi/3, pi/4, 0.
LAMBERTIAN = np.array([math.pi, 2.0 * math.pi / 3.0, math.pi / 4.0, 0.0])

_C0 = 0.5 * math.sqrt(1.0 / math.pi)
_C1 = math.sqrt(3.0 / (4.0 * math.pi))
_C2A = 0.5 * math.sqrt(15.0 / math.pi)
_C2B = 0.25 * math.sqrt(5.0 / math.pi)
_C2C = 0.25 * math.sqrt(15.0 / math.pi)
_C3A = 0.25 * math.sqrt(35.0 / (2.0 * math.pi))
_C3B = 0.5 * math.sqrt(105.0 / math.pi)
_C3C = 0.25 * math.sqrt(21.0 / (2.0 * math.pi))
_C3D = 0.25 * math.sqrt(7.0 / math.pi)
_C3E = 0.25 * math.sqrt(105.0 / math.pi)


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """Evaluate all 16 basis functions: (..., 3) directions -> (..., 16)."""
    d = np.asarray(dirs, dtype=float)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    out = np.empty(d.shape[:-1] + (N_COEFFS,))
    out[..., 0] = _C0
    out[..., 1] = _C1 * y
    out[..., 2] = _C1 * z
    out[..., 3] = _C1 * x
    out[..., 4] = _C2A * x * y
    out[..., 5] = _C2A * y * z
    out[..., 6] = _C2B * (3.0 * zz - 1.0)
    out[..., 7] = _C2A * x * z
    out[..., 8] = _C2C * (xx - yy)
    out[..., 9] = _C3A * y * (3.0 * xx - yy)
    out[..., 10] = _C3B * x * y * z
    out[..., 11] = _C3C * y * (5.0 * zz - 1.0)
    out[..., 12] = _C3D * z * (5.0 * zz - 3.0)
    out[..., 13] = _C3C * x * (5.0 * zz - 1.0)
    out[..., 14] = _C3E * z * (xx - yy)
    out[..., 15] = _C3A * x * (xx - 3.0 * yy)
    return out


def project(env: np.ndarray, grid: SampleGrid) -> np.ndarray:
    """Solid-angle quadrature of the SH projection integrals.

    env is (H, W, 3); returns (16, 3) coefficients per channel.
    """
    basis = sh_basis(grid.dirs_flat)                       # (P, 16)
    weighted = grid.weights_flat[:, None] * env.reshape(-1, 3)
    return basis.T @ weighted


def lambertian_convolve(coeffs: np.ndarray) -> np.ndarray:
    """Scale each band by the cosine-lobe kernel; band 3 zeroes out."""
    return coeffs * LAMBERTIAN[BAND][:, None]


def eval_coeffs(coeffs: np.ndarray, grid: SampleGrid) -> np.ndarray:
    """Evaluate an SH expansion on the grid: (16, 3) -> (H, W, 3)."""
    out = sh_basis(grid.dirs_flat) @ coeffs
    return out.reshape(grid.height, grid.width, 3)


def irradiance(env: np.ndarray, grid: SampleGrid) -> np.ndarray:
    """Lambertian irradiance map of an environment: the full
    project -> convolve -> evaluate pipeline.  Output pixel (H, W, 3)
    at direction n approximates the cosine-weighted hemisphere integral
    of env around n.  Truncation ringing can push values slightly
    negative; consumers must not assume positivity.
    """
    return eval_coeffs(lambertian_convolve(project(env, grid)), grid)


def irradiance_backprop(upstream: np.ndarray, grid: SampleGrid) -> np.ndarray:
    """Adjoint of :func:`irradiance`.

    The pipeline is linear in env: D = Y A Y^T diag(w), so the adjoint
    is diag(w) Y A Y^T applied to the upstream cotangent.  Returns the
    gradient image over env, shape (H, W, 3).
    """
    basis = sh_basis(grid.dirs_flat)                        # (P, 16)
    t = basis.T @ np.asarray(upstream, dtype=float).reshape(-1, 3)
    t *= LAMBERTIAN[BAND][:, None]
    g = (basis @ t) * grid.weights_flat[:, None]
    return g.reshape(grid.height, grid.width, 3)
