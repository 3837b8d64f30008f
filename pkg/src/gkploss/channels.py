"""Gaussian channels acting on GKP peak moments.

Quadratures are ordered (q1, p1, q2, p2) throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gkp import SQRT_PI, CutoffRule, GkpParams, SignedGaussianMixture, lattice, peak_mean, sign_phase, traces

__all__ = [
    "ChannelParams",
    "GaussianMoments",
    "HomodyneParams",
    "BEAMSPLITTER",
    "symplectic_form",
    "apply_amplification",
    "apply_loss",
    "noisy_peak_moments",
    "noisy_peak_variance",
    "homodyne_reduced_params",
    "beamsplitter_transform",
    "logical_marginal",
]

GAIN_PRESETS = ("none", "pre-amp")

# balanced beamsplitter, acting on (q1, p1, q2, p2)
BEAMSPLITTER = np.block([[np.eye(2), np.eye(2)], [-np.eye(2), np.eye(2)]]) / math.sqrt(2.0)


@dataclass(frozen=True)
class ChannelParams:
    """Loss transmissivity ``eta`` preceded by a quantum-limited amplifier of gain ``gain``."""

    eta: float
    gain: float = 1.0

    def __post_init__(self):
        eta, gain = float(self.eta), float(self.gain)
        if not (0.0 < eta <= 1.0):
            raise ValueError(f"transmissivity eta must lie in (0, 1], got {self.eta!r}")
        if not math.isfinite(gain) or gain < 1.0:
            raise ValueError(f"amplifier gain must be >= 1, got {self.gain!r}")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "gain", gain)

    @classmethod
    def preset(cls, eta: float, mode="none") -> "ChannelParams":
        """``mode`` is ``"none"`` (G = 1), ``"pre-amp"`` (G = 1/eta) or a numeric gain."""
        if isinstance(mode, str):
            key = mode.strip().lower()
            if key == "none":
                return cls(eta, 1.0)
            if key in ("pre-amp", "preamp"):
                return cls(eta, 1.0 / float(eta))
            try:
                return cls(eta, float(key))
            except ValueError:
                raise ValueError(f"unknown gain mode {mode!r}; use none, pre-amp or a number") from None
        return cls(eta, float(mode))

    @property
    def scale(self) -> float:
        """Factor ``sqrt(eta * G)`` applied to peak means."""
        return math.sqrt(self.eta * self.gain)


@dataclass(frozen=True)
class GaussianMoments:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mean, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mu.size, mu.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {mu.size}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-14):
            raise ValueError("covariance must be symmetric")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", cov)

    @property
    def dimension(self) -> int:
        return self.mean.size


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def apply_amplification(moments: GaussianMoments, gain: float) -> GaussianMoments:
    if not gain >= 1.0:
        raise ValueError(f"amplifier gain must be >= 1, got {gain!r}")
    eye = np.eye(moments.dimension)
    return GaussianMoments(math.sqrt(gain) * moments.mean,
                           gain * moments.covariance + 0.5 * (gain - 1.0) * eye)


def apply_loss(moments: GaussianMoments, eta: float) -> GaussianMoments:
    if not (0.0 < eta <= 1.0):
        raise ValueError(f"transmissivity eta must lie in (0, 1], got {eta!r}")
    eye = np.eye(moments.dimension)
    return GaussianMoments(math.sqrt(eta) * moments.mean,
                           eta * moments.covariance + 0.5 * (1.0 - eta) * eye)


def noisy_peak_variance(params: GkpParams, ch: ChannelParams) -> float:
    eta, g = ch.eta, ch.gain
    return 0.5 * eta * g * math.tanh(params.epsilon) + 0.5 * eta * (g - 1.0) + 0.5 * (1.0 - eta)


def noisy_peak_moments(params: GkpParams, ch: ChannelParams, m) -> GaussianMoments:
    """Moments of peak ``m`` after pre-amplification followed by loss."""
    return GaussianMoments(ch.scale * peak_mean(params, m),
                           noisy_peak_variance(params, ch) * np.eye(2))


@dataclass(frozen=True)
class HomodyneParams:
    """1D Gaussians left on each homodyne axis after the beamsplitter.

    Peak ``n`` of the input/Bell pair sits at
    ``mu_scale * (input_scale * n1 + n2)`` with variance ``sigma_prime``.
    """

    sigma_prime: float
    mu_scale: float
    input_scale: float

    def mean(self, n1, n2):
        return self.mu_scale * (self.input_scale * np.asarray(n1, dtype=float) + np.asarray(n2, dtype=float))


def homodyne_reduced_params(params: GkpParams, ch: ChannelParams) -> HomodyneParams:
    t = math.tanh(params.epsilon)
    eta, g = ch.eta, ch.gain
    sigma_prime = 0.25 * (t * (1.0 + eta * g) + eta * (g - 1.0) + 1.0 - eta)
    mu_scale = SQRT_PI / (2.0 * math.sqrt(2.0) * math.cosh(params.epsilon))
    return HomodyneParams(sigma_prime, mu_scale, ch.scale)


def beamsplitter_transform(a: GaussianMoments, b: GaussianMoments) -> GaussianMoments:
    """Mix two single-mode Gaussians on the balanced beamsplitter."""
    if a.dimension != 2 or b.dimension != 2:
        raise ValueError("beamsplitter inputs must be single-mode (2-dimensional) moments")
    cov = np.zeros((4, 4))
    cov[:2, :2] = a.covariance
    cov[2:, 2:] = b.covariance
    s = BEAMSPLITTER
    out = s @ cov @ s.T
    return GaussianMoments(s @ np.concatenate([a.mean, b.mean]), 0.5 * (out + out.T))



def logical_marginal(logical: int, params: GkpParams, ch: ChannelParams,
                     cutoff: CutoffRule = CutoffRule()) -> SignedGaussianMixture:
    """q-marginal of the normalized logical state ``|0>`` or ``|1>`` after the channel.

    The state is ``(sigma_0 +- sigma_3) / 2``; integrating each 2D peak over p
    leaves a 1D Gaussian at the q component of its noisy mean.
    """
    if logical not in (0, 1):
        raise ValueError(f"logical must be 0 or 1, got {logical!r}")
    sgn = 1.0 if logical == 0 else -1.0
    var = noisy_peak_variance(params, ch)
    scale = ch.scale * SQRT_PI / (2.0 * math.cosh(params.epsilon))
    m_all, w_all = [], []
    for k, factor in ((0, 1.0), (3, sgn)):
        m, c = lattice(k, params, cutoff)
        s, _ = sign_phase(k, m[:, 0], m[:, 1])
        m_all.append(m[:, 0])
        w_all.append(factor * c * s)
    m1 = np.concatenate(m_all)
    w = np.concatenate(w_all)
    # merge peaks sharing the same q position
    lo = m1.min()
    merged = np.bincount(m1 - lo, weights=w)
    nz = np.nonzero(merged)[0]
    tr = traces(params, cutoff)
    norm = tr[0] + sgn * tr[3]
    return SignedGaussianMixture(merged[nz] / norm, (scale * (nz + lo))[:, None], [[var]])
