"""Adam fitting of ASG mixtures to HDRI frames and sequences.

The schedule has two phases: the first frame starts from a deterministic
spread of lobes and runs a long budget; every later frame warm-starts
from the previous frame's result and runs a short budget with the
temporal penalty anchored to that frozen result.  All state is float64
and there is no randomness anywhere in the fit, so a (config, input)
pair always reproduces bitwise-identical parameters; the `seed` and
`deterministic` config fields are recorded for provenance and consumed
by the stochastic renderer, not by the fit itself.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import asg, losses, sh
from .geometry import (DEGENERACY_EPS, FrameDegeneracyError, SampleGrid,
                       fibonacci_axes, reseed_tangent)
from .losses import LossBreakdown, LossWeights

log = logging.getLogger(__name__)

INIT_SHARPNESS = 5.0

# Intensity floor at initialization so a black channel still gets a
# finite log_c.
INIT_INTENSITY_FLOOR = 1e-8


class NonFiniteGradientError(RuntimeError):
    """A gradient turned NaN/Inf; the epoch is aborted loudly rather
    than letting Adam poison the parameters."""


class SequenceFitError(RuntimeError):
    """A frame failed mid-sequence; carries the frames finished so far."""

    def __init__(self, frame_index: int, results, histories):
        super().__init__(f"fit failed at frame {frame_index}")
        self.frame_index = frame_index
        self.results = results
        self.histories = histories


@dataclass
class FitConfig:
    num_asgs: int
    grid_height: int = 256
    epochs_first: int = 24000
    epochs_rest: int = 6000
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weights: LossWeights = field(default_factory=LossWeights)
    isotropic: bool = False
    recon_loss: str = "l1"
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if self.num_asgs < 1:
            raise ValueError("num_asgs must be >= 1")
        if self.grid_height < 1:
            raise ValueError("grid_height must be >= 1")
        if self.epochs_first < 1 or self.epochs_rest < 1:
            raise ValueError("epoch counts must be > 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be > 0")
        if self.recon_loss not in ("l1", "l2"):
            raise ValueError(f"unknown reconstruction loss {self.recon_loss!r}")


@dataclass
class AdamState:
    """First/second moment estimates per raw parameter array."""

    m: dict
    v: dict
    step: int = 0

    @classmethod
    def for_params(cls, params: asg.MixtureParams) -> "AdamState":
        return cls(m={f: np.zeros_like(getattr(params, f)) for f in asg.RAW_FIELDS},
                   v={f: np.zeros_like(getattr(params, f)) for f in asg.RAW_FIELDS})


def adam_step(params: asg.MixtureParams, grads: asg.ParamGradients,
              state: AdamState, cfg: FitConfig) -> None:
    """One standard bias-corrected Adam update, in place."""
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name in asg.RAW_FIELDS:
        g = getattr(grads, name)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"non-finite gradient in {name} at step {state.step}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p = getattr(params, name)
        p -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)


def init_mixture(cfg: FitConfig, env: np.ndarray, grid: SampleGrid) -> asg.MixtureParams:
    """Deterministic starting mixture for the first frame.

    Axes spread by a Fibonacci spiral, tangents from the degeneracy
    rule, moderate equal bandwidths, and intensities chosen so the
    mixture's integrated energy matches the frame's: with unit-peak
    lobe integrals q_i, lobe i gets c = mean_radiance * 4pi / (N * q_i)
    per channel.
    """
    n_axes = fibonacci_axes(cfg.num_asgs)
    u_seeds = reseed_tangent(n_axes)
    log_sharp = np.full(cfg.num_asgs, np.log(INIT_SHARPNESS))
    params = asg.MixtureParams(log_sharp.copy(), log_sharp.copy(),
                               u_seeds, n_axes.copy(),
                               np.zeros((cfg.num_asgs, 3)))
    basis = asg.lobe_basis(asg.realize(params), grid.dirs_flat)
    lobe_integrals = grid.weights_flat @ basis                       # (N,)
    mean_radiance = grid.weights_flat @ env.reshape(-1, 3) / (4.0 * np.pi)
    c = mean_radiance * 4.0 * np.pi / (cfg.num_asgs * lobe_integrals[:, None])
    params.log_c = np.log(np.maximum(c, INIT_INTENSITY_FLOOR))
    return params


def _tie_isotropic(params: asg.MixtureParams, grads: asg.ParamGradients) -> None:
    # Shared gradient + identical moment histories keep both log slots
    # bitwise equal; the post-step copy in fit_frame is belt and braces.
    shared = grads.log_mu + grads.log_lambda
    grads.log_mu = shared
    grads.log_lambda = shared.copy()


def _recover_degenerate_tangents(params: asg.MixtureParams, epoch: int) -> None:
    # The gradient can drive a tangent seed parallel to its axis; reseed
    # deterministically instead of aborting the fit.
    n_norm = np.linalg.norm(params.n_raw, axis=1, keepdims=True)
    if np.any(n_norm <= DEGENERACY_EPS):
        raise FrameDegeneracyError("lobe axis seed collapsed to zero")
    n = params.n_raw / n_norm
    t = params.u_raw - np.sum(params.u_raw * n, axis=1, keepdims=True) * n
    bad = np.linalg.norm(t, axis=1) <= DEGENERACY_EPS
    if bad.any():
        params.u_raw[bad] = reseed_tangent(n[bad])
        log.warning("reseeded %d degenerate tangent seed(s) at epoch %d",
                    int(bad.sum()), epoch)


def fit_frame(env: np.ndarray, init: asg.MixtureParams,
              prev: asg.MixtureParams | None, cfg: FitConfig,
              grid: SampleGrid | None = None):
    """Fit one frame: epochs_first steps when prev is None (sequence
    start), else epochs_rest warm-started steps with the temporal
    penalty anchored to prev's realized parameters.

    Returns (fitted MixtureParams, history), where history holds one
    LossBreakdown per epoch evaluated before its step, plus a final
    evaluation of the fitted parameters (epochs + 1 entries).
    """
    if grid is None:
        grid = SampleGrid.make(cfg.grid_height)
    if env.shape != (grid.height, grid.width, 3):
        raise ValueError(f"frame shape {env.shape} does not match grid "
                         f"{(grid.height, grid.width, 3)}")
    params = init.copy()
    epochs = cfg.epochs_first if prev is None else cfg.epochs_rest
    prev_vec = None
    if prev is not None and cfg.weights.gamma != 0.0:
        prev_vec = losses.realized_vector(asg.realize(prev))
    d_gt = sh.irradiance(env, grid) if cfg.weights.beta != 0.0 else None
    state = AdamState.for_params(params)
    history = []
    for epoch in range(epochs):
        _recover_degenerate_tangents(params, epoch)
        breakdown, grads = losses.total_loss(params, env, d_gt, prev_vec,
                                             cfg.weights, grid, cfg.recon_loss)
        if cfg.isotropic:
            _tie_isotropic(params, grads)
        history.append(breakdown)
        adam_step(params, grads, state, cfg)
        if cfg.isotropic:
            params.log_lambda[:] = params.log_mu
    _recover_degenerate_tangents(params, epochs)
    final, _ = losses.total_loss(params, env, d_gt, prev_vec,
                                 cfg.weights, grid, cfg.recon_loss)
    history.append(final)
    return params, history


def fit_sequence(frames, cfg: FitConfig, progress=None):
    """Fit an ordered frame sequence; frames are (H, W, 3) arrays
    already resampled to the configured grid.

    `progress(t, params, history)` is called after each finished frame.
    A failure mid-sequence raises SequenceFitError carrying the partial
    results.  Returns (list of MixtureParams, list of histories).
    """
    frames = list(frames)
    if not frames:
        raise ValueError("need at least one frame")
    grid = SampleGrid.make(cfg.grid_height)
    results: list[asg.MixtureParams] = []
    histories: list[list[LossBreakdown]] = []
    for t, frame in enumerate(frames):
        init = init_mixture(cfg, frame, grid) if t == 0 else results[-1]
        prev = results[-1] if t > 0 else None
        try:
            params, history = fit_frame(frame, init, prev, cfg, grid)
        except Exception as exc:
            raise SequenceFitError(t, results, histories) from exc
        results.append(params)
        histories.append(history)
        if progress is not None:
            progress(t, params, history)
    return results, histories


def jitter_metric(mixtures) -> float:
    """Mean realized-parameter jump between consecutive frames.

    J = mean over frames t >= 1 and lobes i of the 2-norm of
    (g_i^t - g_i^{t-1}) on the realized 11-vectors; 0 for sequences
    shorter than two frames.  Proxy for visual flicker.
    """
    vecs = [losses.realized_vector(
        p if isinstance(p, asg.RealizedMixture) else asg.realize(p))
        for p in mixtures]
    if len(vecs) < 2:
        return 0.0
    deltas = [np.linalg.norm(cur - prv, axis=1)
              for prv, cur in zip(vecs, vecs[1:])]
    return float(np.mean(np.concatenate(deltas)))
