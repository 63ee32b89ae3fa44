"""Anisotropic spherical Gaussian (ASG) mixtures.

A lobe is the antipodally symmetric Bingham-form bump

    G(d) = c * exp(-mu * (d.u)^2 - lambda * (d.v)^2)

where {u, v, n} is a right-handed orthonormal frame, mu and lambda are
the bandwidths along the two tangent axes, and c is the RGB intensity
reached exactly at d = +-n.  A mixture is a plain sum of lobes; there is
no visibility or normalization factor.

Optimization works on raw parameters: log-space bandwidths and
intensities (positivity for free, no projection steps) and unconstrained
3-vector seeds for the frame, realized through Gram-Schmidt.  `realize`
maps raw to realized values, `evaluate` computes radiance, and
`mixture_backward` pulls an image-space cotangent back to raw-parameter
gradients, all vectorized over (pixels, lobes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry

# Realized bandwidth clamp. The floor keeps lobes alive (zero-gradient
# plateaus start well below it), the ceiling prevents exp overflow in
# the squared-exponent term.
SHARPNESS_MIN = 1e-3
SHARPNESS_MAX = 1e4

# Raw parameter blocks, in the fixed order used by the optimizer state,
# gradient containers, and tests.
RAW_FIELDS = ("log_mu", "log_lambda", "u_raw", "n_raw", "log_c")


@dataclass
class MixtureParams:
    """Raw optimization state of an N-lobe mixture.

    All arrays are float64 and owned by this object; the optimizer
    updates them in place.  Lobe order is identity: slot i means the
    same lobe across every frame of a sequence.
    """

    log_mu: np.ndarray      # (N,)
    log_lambda: np.ndarray  # (N,)
    u_raw: np.ndarray       # (N, 3) tangent seeds, unconstrained
    n_raw: np.ndarray       # (N, 3) axis seeds, unconstrained
    log_c: np.ndarray       # (N, 3) log peak RGB intensity

    def __post_init__(self):
        n = self.log_mu.shape[0]
        shapes = {"log_mu": (n,), "log_lambda": (n,), "u_raw": (n, 3),
                  "n_raw": (n, 3), "log_c": (n, 3)}
        for name, want in shapes.items():
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if arr.shape != want:
                raise ValueError(f"{name} has shape {arr.shape}, expected {want}")
            setattr(self, name, arr)

    @property
    def count(self) -> int:
        return self.log_mu.shape[0]

    def copy(self) -> "MixtureParams":
        return MixtureParams(*(getattr(self, f).copy() for f in RAW_FIELDS))


@dataclass
class ParamGradients:
    """Gradient of a scalar loss with respect to every raw parameter.
    Field shapes mirror :class:`MixtureParams`."""

    log_mu: np.ndarray
    log_lambda: np.ndarray
    u_raw: np.ndarray
    n_raw: np.ndarray
    log_c: np.ndarray

    @classmethod
    def zeros(cls, count: int) -> "ParamGradients":
        return cls(np.zeros(count), np.zeros(count), np.zeros((count, 3)),
                   np.zeros((count, 3)), np.zeros((count, 3)))

    def add_scaled(self, other: "ParamGradients", scale: float) -> None:
        for f in RAW_FIELDS:
            getattr(self, f).__iadd__(scale * getattr(other, f))


@dataclass(frozen=True)
class RealizedMixture:
    """Clamped, orthonormalized parameters actually entering evaluation."""

    mu: np.ndarray           # (N,) in [SHARPNESS_MIN, SHARPNESS_MAX]
    lam: np.ndarray          # (N,)
    u: np.ndarray            # (N, 3) unit tangent
    v: np.ndarray            # (N, 3) unit bi-tangent, n x u
    n: np.ndarray            # (N, 3) unit lobe axis
    c: np.ndarray            # (N, 3) peak RGB, > 0
    mu_clamped: np.ndarray   # (N,) bool, True where the clip engaged
    lam_clamped: np.ndarray  # (N,)

    @property
    def count(self) -> int:
        return self.mu.shape[0]


def realize(params: MixtureParams) -> RealizedMixture:
    """Map raw parameters to the realized mixture.

    mu = clip(exp(log_mu)), same for lambda; the frame comes from
    Gram-Schmidt on the raw seeds; c = exp(log_c).  Clamp masks are kept
    so the backward pass can zero gradients of pinned bandwidths.
    """
    mu_exp = np.exp(params.log_mu)
    lam_exp = np.exp(params.log_lambda)
    mu = np.clip(mu_exp, SHARPNESS_MIN, SHARPNESS_MAX)
    lam = np.clip(lam_exp, SHARPNESS_MIN, SHARPNESS_MAX)
    u, v, n = geometry.build_frames(params.u_raw, params.n_raw)
    return RealizedMixture(mu, lam, u, v, n, np.exp(params.log_c),
                           mu_clamped=mu != mu_exp, lam_clamped=lam != lam_exp)


def realized_from_values(mu, lam, u, n, c) -> RealizedMixture:
    """Rebuild a realized mixture from stored values (e.g. a params file).

    u is re-orthogonalized against n and v re-derived, so tiny text
    round-off cannot break the frame invariants.
    """
    u, v, n = geometry.build_frames(np.asarray(u, float), np.asarray(n, float))
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return RealizedMixture(mu, lam, u, v, n, np.asarray(c, dtype=float),
                           mu_clamped=np.zeros(mu.shape, bool),
                           lam_clamped=np.zeros(lam.shape, bool))


def raw_from_realized(realized: RealizedMixture) -> MixtureParams:
    """Raw parameters whose realization reproduces ``realized`` (up to
    round-off in log/exp).  Used to warm-start from saved files."""
    return MixtureParams(np.log(realized.mu), np.log(realized.lam),
                         realized.u.copy(), realized.n.copy(),
                         np.log(realized.c))


def lobe_basis(realized: RealizedMixture, dirs: np.ndarray) -> np.ndarray:
    """Unit-peak lobe values at each direction: (P, N) array of
    exp(-mu (d.u)^2 - lambda (d.v)^2)."""
    return forward_basis(realized, dirs)[2]


def forward_basis(realized: RealizedMixture, dirs: np.ndarray):
    """Shared forward intermediates: (su, sv, E), each (P, N).

    su, sv are the tangent-plane dot products d.u and d.v; E is the
    unit-peak lobe value.  `mixture_backward` accepts these back to
    avoid recomputing them after a forward pass.
    """
    d = np.asarray(dirs, dtype=float).reshape(-1, 3)
    su = d @ realized.u.T
    sv = d @ realized.v.T
    E = np.exp(-(realized.mu * su * su) - (realized.lam * sv * sv))
    return su, sv, E


def evaluate(realized: RealizedMixture, dirs: np.ndarray) -> np.ndarray:
    """Mixture radiance at ``dirs``: shape (..., 3) for input (..., 3)."""
    d = np.asarray(dirs, dtype=float)
    E = lobe_basis(realized, d.reshape(-1, 3))
    return (E @ realized.c).reshape(d.shape[:-1] + (3,))


def chain_to_raw(params: MixtureParams, realized: RealizedMixture,
                 g_mu, g_lam, g_u, g_v, g_n, g_c) -> ParamGradients:
    """Chain realized-space gradients back to the raw parameters.

    Inputs are gradients with respect to mu, lambda, u, v, n, c (shapes
    (N,), (N,), (N,3) x3, (N,3)).  exp reparameterization multiplies by
    the realized value; clamped bandwidths get zero gradient; the frame
    adjoint handles Gram-Schmidt and the v = n x u cross product.
    """
    g_log_mu = g_mu * realized.mu * ~realized.mu_clamped
    g_log_lambda = g_lam * realized.lam * ~realized.lam_clamped
    g_u_raw, g_n_raw = geometry.frame_backprop(params.u_raw, params.n_raw,
                                               g_u, g_v, g_n)
    return ParamGradients(g_log_mu, g_log_lambda, g_u_raw, g_n_raw,
                          g_c * realized.c)


def mixture_backward(params: MixtureParams, realized: RealizedMixture,
                     dirs: np.ndarray, upstream: np.ndarray,
                     basis=None) -> ParamGradients:
    """Gradient of sum_p sum_ch upstream[p,ch] * I_pred[p,ch] with
    respect to all raw parameters.

    ``upstream`` is the (P, 3) cotangent of the predicted radiance
    image; ``basis`` optionally reuses (su, sv, E) from `forward_basis`.
    """
    d = np.asarray(dirs, dtype=float).reshape(-1, 3)
    up = np.asarray(upstream, dtype=float).reshape(-1, 3)
    su, sv, E = basis if basis is not None else forward_basis(realized, d)

    A = up @ realized.c.T           # (P, N) per-lobe upstream . c
    M = A * E
    g_c = E.T @ up                  # (N, 3)
    g_mu = -np.einsum("pn,pn->n", M, su * su)
    g_lam = -np.einsum("pn,pn->n", M, sv * sv)
    # d/du of exp term: -2 mu (d.u) d, summed over pixels with weight M.
    g_u = -2.0 * realized.mu[:, None] * ((M * su).T @ d)
    g_v = -2.0 * realized.lam[:, None] * ((M * sv).T @ d)
    return chain_to_raw(params, realized, g_mu, g_lam, g_u, g_v,
                        np.zeros_like(g_u), g_c)
