"""Finite-energy square GKP states as signed Gaussian mixtures.

The Wigner function of each logical Pauli operator sigma_k (k = 0..3 for
I, X, Y, Z) is a lattice sum of identical Gaussians of covariance
``0.5*tanh(eps)*I`` centred at ``sech(eps)*sqrt(pi)/2*m`` for lattice
indices ``m`` in the parity class ``M_k``, weighted by
``exp(-tanh(eps)*pi/4*|m|^2)`` and a sign that produces the negative peaks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "GkpParams",
    "CutoffRule",
    "SignedGaussianMixture",
    "PAULI_CLAMP_TOL",
    "squeezing_db",
    "epsilon_from_db",
    "parity_class_of",
    "sign_s",
    "sign_phase",
    "weight_c",
    "peak_mean",
    "peak_covariance",
    "lattice",
    "trace_sigma",
    "traces",
    "bell_normalization",
    "normalization_N",
    "as_pauli_vector",
    "logical_fidelity",
    "wigner_value",
    "wigner_mixture",
]

SQRT_PI = math.sqrt(math.pi)
# tolerated excess of |a| above 1 before a Pauli vector is rejected
PAULI_CLAMP_TOL = 1e-9

# (m1 % 2, m2 % 2) -> k
_PARITY_TO_CLASS = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}


@dataclass(frozen=True)
class GkpParams:
    """Damping strength ``epsilon`` of the finite-energy GKP states."""

    epsilon: float

    def __post_init__(self):
        eps = float(self.epsilon)
        if not math.isfinite(eps) or eps <= 0:
            raise ValueError(
                f"epsilon must be a positive finite number, got {self.epsilon!r} "
                "(epsilon = 0 is the unnormalizable ideal GKP state)"
            )
        object.__setattr__(self, "epsilon", eps)

    @property
    def squeezing_db(self) -> float:
        return squeezing_db(self.epsilon)

    @property
    def peak_variance(self) -> float:
        return 0.5 * math.tanh(self.epsilon)


@dataclass(frozen=True)
class CutoffRule:
    """Keep lattice index ``m`` iff ``c_m > exp(-threshold)``."""

    threshold: float = 23.0

    def __post_init__(self):
        thr = float(self.threshold)
        if not math.isfinite(thr) or thr <= 0:
            raise ValueError(f"cutoff threshold must be positive, got {self.threshold!r}")
        object.__setattr__(self, "threshold", thr)

    def radius(self, params: GkpParams) -> float:
        """Lattice radius ``|m|`` beyond which all weights are dropped."""
        return math.sqrt(self.threshold * 4.0 / (math.pi * math.tanh(params.epsilon)))

    def retains(self, c):
        return np.asarray(c) > math.exp(-self.threshold)


@dataclass(frozen=True)
class SignedGaussianMixture:
    """Weighted sum of unit-normalized Gaussians (weights may be negative).

    ``means`` has shape (n, d) and ``covariance`` is shared by all terms,
    which is all the GKP mixtures here ever need.
    """

    weights: np.ndarray
    means: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if mu.shape[0] != w.size:
            raise ValueError("weights and means disagree in length")
        if cov.shape != (mu.shape[1], mu.shape[1]):
            raise ValueError("covariance does not match the mean dimension")
        if not np.allclose(cov, cov.T) or np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("covariance must be symmetric positive definite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariance", cov)

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    def __call__(self, x):
        """Evaluate at points ``x`` of shape (..., d) (or (...,) when d == 1)."""
        x = np.asarray(x, dtype=float)
        d = self.dimension
        if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        inv = np.linalg.inv(self.covariance)
        norm = 1.0 / math.sqrt(np.linalg.det(self.covariance) * (2 * math.pi) ** d)
        diff = x[..., None, :] - self.means
        quad = np.einsum("...ni,ij,...nj->...n", diff, inv, diff)
        return norm * (np.exp(-0.5 * quad) @ self.weights)

    def total_weight(self) -> float:
        return math.fsum(self.weights)


def squeezing_db(epsilon: float) -> float:
    """Squeezing relative to vacuum in dB, ``-10 log10(tanh eps)``."""
    return -10.0 * math.log10(math.tanh(epsilon))


def epsilon_from_db(db: float) -> float:
    return math.atanh(10.0 ** (-db / 10.0))


def parity_class_of(m) -> int:
    """Parity class k of a lattice index (even/odd pattern of m1, m2)."""
    m1, m2 = (int(v) for v in m)
    return _PARITY_TO_CLASS[(m1 % 2, m2 % 2)]


def _exponent(k, m1, m2):
    if k == 0:
        return np.zeros_like(m1)
    if k == 1:
        return m2
    if k == 2:
        return m1 + m2
    if k == 3:
        return m1
    raise ValueError(f"Pauli index must be in 0..3, got {k!r}")


def sign_s(k: int, m) -> int:
    """Peak sign ``s_k(m)``; only defined for ``m`` in ``M_k``."""
    m1, m2 = (int(v) for v in m)
    if parity_class_of((m1, m2)) != k:
        raise ValueError(f"lattice index {(m1, m2)} is not in M_{k}")
    e = int(_exponent(k, m1, m2))
    return -1 if (e // 2) % 2 else 1


def sign_phase(k: int, m1, m2):
    """Extension of ``s_k`` to arbitrary integer indices.

    A half-integer power ``(-1)^(e/2)`` is read as ``i^e``. Returns the real
    sign array ``r`` and a flag ``odd`` with ``s = i^odd * r``. When both
    indices lie in ``M_k`` the exponent is even and ``r`` equals ``s_k``.
    """
    m1 = np.asarray(m1)
    m2 = np.asarray(m2)
    e = _exponent(k, m1, m2)
    real = np.where((e // 2) % 2 == 0, 1.0, -1.0)
    odd = np.asarray(e % 2, dtype=bool)
    return real, odd


def weight_c(params: GkpParams, m) -> float:
    m1, m2 = m
    return math.exp(-math.tanh(params.epsilon) * math.pi / 4.0 * (m1 * m1 + m2 * m2))


def peak_mean(params: GkpParams, m) -> np.ndarray:
    return SQRT_PI / 2.0 / math.cosh(params.epsilon) * np.asarray(m, dtype=float)


def peak_covariance(params: GkpParams) -> np.ndarray:
    return params.peak_variance * np.eye(2)


@lru_cache(maxsize=64)
def _lattice(k: int, epsilon: float, threshold: float):
    t = math.tanh(epsilon)
    r = math.sqrt(threshold * 4.0 / (math.pi * t))
    n = int(math.ceil(r)) + 1
    ax = np.arange(-n, n + 1)
    m1, m2 = (a.ravel() for a in np.meshgrid(ax, ax, indexing="ij"))
    cls = np.select([(m1 % 2 == 0) & (m2 % 2 == 0), (m1 % 2 == 1) & (m2 % 2 == 0),
                     (m1 % 2 == 1) & (m2 % 2 == 1)], [0, 1, 2], 3)
    r2 = m1 * m1 + m2 * m2
    c = np.exp(-t * math.pi / 4.0 * r2)
    keep = (cls == k) & (c > math.exp(-threshold))
    m = np.stack([m1[keep], m2[keep]], axis=1)
    c = c[keep]
    # decreasing weight; ties broken by index so the order is reproducible
    order = np.lexsort((m[:, 1], m[:, 0], r2[keep]))
    m, c = m[order], c[order]
    m.setflags(write=False)
    c.setflags(write=False)
    return m, c


def lattice(k: int, params: GkpParams, cutoff: CutoffRule = CutoffRule()):
    """Retained indices of ``M_k`` and their weights, heaviest first."""
    if k not in (0, 1, 2, 3):
        raise ValueError(f"Pauli index must be in 0..3, got {k!r}")
    return _lattice(k, params.epsilon, cutoff.threshold)


def trace_sigma(k: int, params: GkpParams, cutoff: CutoffRule = CutoffRule()) -> float:
    """``Tr(sigma_k)``: each Gaussian integrates to one, so this is a weight sum."""
    m, c = lattice(k, params, cutoff)
    s, _ = sign_phase(k, m[:, 0], m[:, 1])
    total = math.fsum(c * s)
    return -total if k == 2 else total


def traces(params: GkpParams, cutoff: CutoffRule = CutoffRule()) -> np.ndarray:
    return np.array([trace_sigma(k, params, cutoff) for k in range(4)])


def bell_normalization(params: GkpParams, cutoff: CutoffRule = CutoffRule()) -> float:
    t = traces(params, cutoff)
    return t[0] ** 2 + t[1] ** 2 + t[3] ** 2


def as_pauli_vector(a, tol: float = PAULI_CLAMP_TOL) -> np.ndarray:
    """Validate a GKP Pauli vector, rescaling tiny excursions outside the ball."""
    a = np.array(a, dtype=float)
    if a.shape[-1:] != (3,):
        raise ValueError(f"Pauli vector must have 3 components, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("Pauli vector has non-finite components")
    norm = np.linalg.norm(a, axis=-1)
    if np.any(norm > 1.0 + tol):
        raise ValueError(f"Pauli vector outside the unit ball (|a| = {np.max(norm):.12g})")
    over = norm > 1.0
    if np.any(over):
        a[over] /= norm[over][..., None]
    return a


def normalization_N(a, params: GkpParams, cutoff: CutoffRule = CutoffRule()) -> float:
    a = as_pauli_vector(a)
    t = traces(params, cutoff)
    return t[0] + float(np.dot(a, t[1:]))


def logical_fidelity(a, b):
    """Qubit-style fidelity between two GKP Pauli vectors."""
    a = as_pauli_vector(a)
    b = as_pauli_vector(b)
    dot = np.sum(a * b, axis=-1)
    mixed = (1.0 - np.sum(a * a, axis=-1)) * (1.0 - np.sum(b * b, axis=-1))
    return 0.5 * (1.0 + dot + np.sqrt(np.maximum(mixed, 0.0)))


def wigner_mixture(k: int, params: GkpParams, cutoff: CutoffRule = CutoffRule()) -> SignedGaussianMixture:
    m, c = lattice(k, params, cutoff)
    s, _ = sign_phase(k, m[:, 0], m[:, 1])
    w = c * s * (-1.0 if k == 2 else 1.0)
    means = SQRT_PI / 2.0 / math.cosh(params.epsilon) * m
    return SignedGaussianMixture(w, means, peak_covariance(params))


def wigner_value(k: int, params: GkpParams, q, p, cutoff: CutoffRule = CutoffRule()):
    """Wigner function of ``sigma_k`` at phase-space points (q, p)."""
    q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
    out = wigner_mixture(k, params, cutoff)(np.stack([q, p], axis=-1))
    return float(out) if out.ndim == 0 else out
