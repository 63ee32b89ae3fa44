"""Composite fitting objective and its analytic gradient.

The total objective is

    L = alpha * L_R + beta * L_D + gamma * L_T

where L_R and L_D are solid-angle-weighted pixel losses (the per-pixel
weight w lives inside them) and L_T is the temporal drift penalty on
realized lobe parameters against the previous frame's frozen result.
`total_loss` evaluates the predicted radiance once, shares it between
L_R and L_D, and returns both the component breakdown and the full
raw-parameter gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import asg, sh
from .geometry import SampleGrid

# Floor for the per-slot temporal normalizer, so parameters that were
# zero in the previous frame do not blow up the penalty.
TEMPORAL_NORM_FLOOR = 1e-6

# Realized per-lobe parameter vector compared by the temporal loss:
# [mu, lambda, u, n, c], flattened.
REALIZED_DIM = 11


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class LossBreakdown:
    """Unweighted component values plus their weighted total.

    Components skipped by the schedule (no previous frame, or a zero
    weight) are reported as 0.0; `total` always equals
    alpha*reconstruction + beta*diffuse + gamma*temporal as summed.
    """

    reconstruction: float
    diffuse: float
    temporal: float
    total: float


def reconstruction_loss(pred: np.ndarray, gt: np.ndarray, grid: SampleGrid,
                        kind: str = "l1"):
    """Solid-angle-weighted pixel loss and its gradient image.

    l1: sum_p w_p sum_ch |pred - gt|, gradient w_p * sign(diff) with
    sign(0) = 0.  l2: sum_p w_p sum_ch diff^2, gradient 2 w_p diff.
    """
    diff = pred - gt
    w = grid.weights[..., None]
    if kind == "l1":
        loss = float(np.sum(w * np.abs(diff)))
        grad = w * np.sign(diff)
    elif kind == "l2":
        loss = float(np.sum(w * diff * diff))
        grad = 2.0 * w * diff
    else:
        raise ValueError(f"unknown reconstruction loss kind {kind!r}")
    return loss, grad


def diffuse_loss(pred_env: np.ndarray, d_gt: np.ndarray, grid: SampleGrid):
    """Weighted L1 between the irradiance maps of prediction and truth.

    d_gt is the precomputed irradiance of the ground-truth frame.  The
    returned gradient is over pred_env (chained through the linear
    irradiance pipeline), shape (H, W, 3).
    """
    diff = sh.irradiance(pred_env, grid) - d_gt
    w = grid.weights[..., None]
    loss = float(np.sum(w * np.abs(diff)))
    grad = sh.irradiance_backprop(w * np.sign(diff), grid)
    return loss, grad


def realized_vector(realized: asg.RealizedMixture) -> np.ndarray:
    """Per-lobe realized parameter vectors, (N, 11): [mu, lambda, u, n, c]."""
    return np.concatenate([realized.mu[:, None], realized.lam[:, None],
                           realized.u, realized.n, realized.c], axis=1)


def temporal_loss(params: asg.MixtureParams, realized: asg.RealizedMixture,
                  prev_vec: np.ndarray):
    """Normalized drift of realized parameters from the previous frame.

    Per parameter slot k the normalizer is max_i |prev[i, k]| over lobes
    (floored), making every slot dimensionless; the loss is the sum over
    lobes of the 2-norm of the normalized delta vector.  `prev_vec` is
    the frozen (N, 11) realized vector of the previous frame's result.
    """
    if prev_vec.shape != (realized.count, REALIZED_DIM):
        raise ValueError(f"previous frame has shape {prev_vec.shape}, "
                         f"expected {(realized.count, REALIZED_DIM)}")
    cur = realized_vector(realized)
    scale = np.maximum(np.abs(prev_vec).max(axis=0), TEMPORAL_NORM_FLOOR)
    z = (cur - prev_vec) / scale
    norms = np.linalg.norm(z, axis=1)
    loss = float(norms.sum())
    # d loss / d cur[i,k] = z[i,k] / (scale[k] * norms[i]); 0 at zero delta.
    safe = np.where(norms > 0.0, norms, 1.0)
    g = z / (scale * safe[:, None])
    g[norms == 0.0] = 0.0
    grads = asg.chain_to_raw(params, realized,
                             g_mu=g[:, 0], g_lam=g[:, 1],
                             g_u=g[:, 2:5], g_v=np.zeros_like(g[:, 2:5]),
                             g_n=g[:, 5:8], g_c=g[:, 8:11])
    return loss, grads


def total_loss(params: asg.MixtureParams, gt_env: np.ndarray,
               d_gt, prev_vec, weights: LossWeights,
               grid: SampleGrid, recon_kind: str = "l1"):
    """Composite objective and full gradient for one optimization step.

    The diffuse term is skipped entirely when beta == 0 (d_gt may then
    be None); the temporal term is skipped when prev_vec is None (first
    frame) or gamma == 0.  Skipped components report 0.0, keeping the
    breakdown identity exact.  Returns (LossBreakdown, ParamGradients).
    """
    realized = asg.realize(params)
    basis = asg.forward_basis(realized, grid.dirs_flat)
    pred = (basis[2] @ realized.c).reshape(grid.height, grid.width, 3)

    r_loss, r_grad = reconstruction_loss(pred, gt_env, grid, recon_kind)
    upstream = weights.alpha * r_grad
    d_loss = 0.0
    if weights.beta != 0.0:
        d_loss, d_grad = diffuse_loss(pred, d_gt, grid)
        upstream += weights.beta * d_grad
    grads = asg.mixture_backward(params, realized, grid.dirs_flat,
                                 upstream.reshape(-1, 3), basis=basis)
    t_loss = 0.0
    if prev_vec is not None and weights.gamma != 0.0:
        t_loss, t_grads = temporal_loss(params, realized, prev_vec)
        grads.add_scaled(t_grads, weights.gamma)
    total = weights.alpha * r_loss + weights.beta * d_loss + weights.gamma * t_loss
    return LossBreakdown(r_loss, d_loss, t_loss, total), grads
