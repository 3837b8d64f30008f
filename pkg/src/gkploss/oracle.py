"""Brute-force references used by the test-suite.

Nothing here is fast. The point is independence from the factorized engine:

* ``naive_lambda`` sums the two-mode Gaussian double lattice sum pair by pair,
  pushing every pair through the beamsplitter. No index regrouping, no tables.
* ``build_gkp_number_basis`` expands the damped position comb in Fock space.
* ``marginal_after_loss`` evolves that Fock state through amplifier and loss
  Kraus operators and samples the position marginal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .channels import ChannelParams, GaussianMoments, beamsplitter_transform, noisy_peak_moments
from .gkp import (
    SQRT_PI,
    CutoffRule,
    GkpParams,
    as_pauli_vector,
    lattice,
    peak_covariance,
    peak_mean,
    sign_s,
    traces,
)

__all__ = [
    "NumberBasisState",
    "naive_terms",
    "naive_lambda",
    "naive_lambda_vector",
    "hermite_functions",
    "build_gkp_number_basis",
    "number_basis_traces",
    "number_basis_scale",
    "amplifier_kraus_apply",
    "loss_kraus_apply",
    "marginal_after_loss",
]


# -- naive lambda -------------------------------------------------------------

_UNDERFLOW = 760.0  # exp(-760) is exactly 0.0 in double precision

def _signed_class(k, params, cutoff):
    m, c = lattice(k, params, cutoff)
    s = np.array([sign_s(k, mi) for mi in m], dtype=float)
    return m, c * s


def naive_terms(outcomes, params: GkpParams, ch: ChannelParams, cutoff: CutoffRule = CutoffRule(),
                chunk: int = 2_000_000):
    """Unnormalized double sums ``T[k1, k2](q_m, p_m)``, shape (4, 4, n_outcomes).

    Each pair of peaks (m1 from the noisy input's class k1, m2 from the Bell
    half's class k2) is a product Gaussian on two modes; after the balanced
    beamsplitter its (q1, p2) marginal is read off at the outcome.
    """
    out_pts = np.atleast_2d(np.asarray(outcomes, dtype=float))
    if out_pts.shape[-1] != 2:
        raise ValueError("outcomes must have shape (n, 2)")
    # every pair shares the covariance; the means are linear in (m1, m2)
    template = beamsplitter_transform(noisy_peak_moments(params, ch, (0, 0)),
                                      GaussianMoments(np.zeros(2), peak_covariance(params)))
    idx = [0, 3]
    sub = template.covariance[np.ix_(idx, idx)]
    inv = np.linalg.inv(sub)
    norm = 1.0 / (2.0 * math.pi * math.sqrt(np.linalg.det(sub)))
    bs = np.block([[np.eye(2), np.eye(2)], [-np.eye(2), np.eye(2)]]) / math.sqrt(2.0)
    rows = bs[idx]  # (2, 4)
    lam_min = float(np.linalg.eigvalsh(inv)[0])
    lo, hi = out_pts.min(axis=0), out_pts.max(axis=0)
    classes = [_signed_class(k, params, cutoff) for k in range(4)]
    T = np.zeros((4, 4, out_pts.shape[0]))
    for k1 in range(4):
        m1, w1 = classes[k1]
        if k1 == 2:
            w1 = -w1
        mu1 = ch.scale * np.array([peak_mean(params, m) for m in m1]) if m1.size else np.zeros((0, 2))
        for k2 in range(4):
            m2, w2 = classes[k2]
            if m1.size == 0 or m2.size == 0:
                raise ValueError("cutoff leaves no lattice pairs")
            mu2 = np.array([peak_mean(params, m) for m in m2])
            # (n1, n2, 2) pair means at (q1, p2)
            pm = (mu1 @ rows[:, :2].T)[:, None, :] + (mu2 @ rows[:, 2:].T)[None, :, :]
            pm = pm.reshape(-1, 2)
            pw = (w1[:, None] * w2[None, :]).ravel()
            # pairs whose Gaussian underflows to 0.0 at every outcome contribute nothing
            gap = np.maximum(np.maximum(lo - pm, pm - hi), 0.0)
            live = 0.5 * lam_min * np.einsum("pi,pi->p", gap, gap) < _UNDERFLOW
            pm, pw = pm[live], pw[live]
            step = max(1, chunk // pm.shape[0])
            for s in range(0, out_pts.shape[0], step):
                d0 = out_pts[s:s + step, 0, None] - pm[None, :, 0]
                d1 = out_pts[s:s + step, 1, None] - pm[None, :, 1]
                quad = inv[0, 0] * d0 * d0 + (2.0 * inv[0, 1]) * d0 * d1 + inv[1, 1] * d1 * d1
                T[k1, k2, s:s + step] = norm * (np.exp(-0.5 * quad) @ pw)
    return T


def _prefactor(a, params, cutoff):
    tr = traces(params, cutoff)
    n = tr[0] + float(np.dot(a, tr[1:]))
    return 1.0 / (n * (tr[0] ** 2 + tr[1] ** 2 + tr[3] ** 2))


def naive_lambda_vector(outcomes, a_in, params: GkpParams, ch: ChannelParams,
                        cutoff: CutoffRule = CutoffRule(), terms=None):
    """All four lambda_k for each outcome, shape (n, 4). ``terms`` may be reused."""
    a = as_pauli_vector(a_in)
    if terms is None:
        terms = naive_terms(outcomes, params, ch, cutoff)
    a4 = np.concatenate([[1.0], a])
    return (_prefactor(a, params, cutoff) * np.tensordot(a4, terms, axes=(0, 0))).T


def naive_lambda(k2: int, outcome, a_in, params: GkpParams, ch: ChannelParams,
                 cutoff: CutoffRule = CutoffRule()):
    """Single coefficient ``lambda_{k2}`` from the unfactorized double sum."""
    if k2 not in (0, 1, 2, 3):
        raise ValueError(f"Pauli index must be in 0..3, got {k2!r}")
    pts = np.asarray(outcome, dtype=float)
    lv = naive_lambda_vector(pts.reshape(-1, 2), a_in, params, ch, cutoff)[:, k2]
    return float(lv[0]) if pts.ndim == 1 else lv


# -- number basis ---------------------------------------------------------------

@dataclass(frozen=True)
class NumberBasisState:
    coefficients: np.ndarray
    tail_tolerance: float

    @property
    def n_max(self) -> int:
        return self.coefficients.size - 1

    def norm2(self) -> float:
        return float(np.vdot(self.coefficients, self.coefficients).real)


def hermite_functions(x, n_max: int) -> np.ndarray:
    """Oscillator eigenfunctions ``psi_n(x)`` for n = 0..n_max, shape (n_max+1, len(x)).

    Three-term recurrence on rescaled values: the running pair is pulled back
    whenever it grows large, and the accumulated log-scale is reapplied per
    row, so neither the Gaussian factor nor high orders under/overflow.
    """
    x = np.asarray(x, dtype=float).ravel()
    out = np.zeros((n_max + 1, x.size))
    log_scale = -0.5 * x * x - 0.25 * math.log(math.pi)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    out[0] = np.exp(log_scale)
    for n in range(1, n_max + 1):
        nxt = math.sqrt(2.0 / n) * x * cur - math.sqrt((n - 1) / n) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e100
        if np.any(big):
            cur = np.where(big, cur * 1e-100, cur)
            prev = np.where(big, prev * 1e-100, prev)
            log_scale = log_scale + np.where(big, 100.0 * math.log(10.0), 0.0)
        with np.errstate(under="ignore"):
            out[n] = cur * np.exp(log_scale)
    return out


def build_gkp_number_basis(logical: int, params: GkpParams, n_max: int,
                           tail_tol: float = 1e-12, comb_half_width: int | None = None) -> NumberBasisState:
    """Fock coefficients ``c_n = exp(-eps n) sum_s psi_n(x_s)`` of the damped comb.

    ``x_s = (2s + logical) sqrt(pi)``; unnormalized. Raises when the relative
    weight of the last coefficient exceeds ``tail_tol``.
    """
    if logical not in (0, 1):
        raise ValueError(f"logical must be 0 or 1, got {logical!r}")
    if n_max < 1:
        raise ValueError("n_max must be positive")
    if comb_half_width is None:
        # psi_n is negligible well beyond its turning point sqrt(2 n + 1)
        comb_half_width = int(math.ceil((math.sqrt(2 * n_max + 1) + 12.0) / (2 * SQRT_PI))) + 1
    s = np.arange(-comb_half_width, comb_half_width + 1)
    x = (2 * s + logical) * SQRT_PI
    psi = hermite_functions(x, n_max)
    c = psi.sum(axis=1) * np.exp(-params.epsilon * np.arange(n_max + 1))
    total = float(c @ c)
    tail = float(c[-1] ** 2 + c[-2] ** 2) / total
    if tail > tail_tol:
        raise ValueError(f"number-basis cutoff n_max={n_max} too small for epsilon={params.epsilon} "
                         f"(tail weight {tail:.2e} > {tail_tol:.0e})")
    return NumberBasisState(c, tail_tol)


def number_basis_scale(params: GkpParams) -> float:
    """Ratio between Gaussian-sum traces and Fock-space traces.

    The Gaussian-sum weights start from ``c_0 = 1`` rather than from the
    comb's ket normalization; the two conventions differ by this constant.
    """
    return SQRT_PI * (1.0 + math.exp(-2.0 * params.epsilon))


def number_basis_traces(params: GkpParams, n_max: int = 200) -> np.ndarray:
    """``Tr(sigma_k)`` for k = 0..3 from Fock-space inner products, in Gaussian-sum units."""
    c0 = build_gkp_number_basis(0, params, n_max).coefficients
    c1 = build_gkp_number_basis(1, params, n_max).coefficients
    n00, n11, n01 = c0 @ c0, c1 @ c1, c0 @ c1
    # sigma_2 = -i|0><1| + i|1><0| has zero trace for real coefficients
    tr = np.array([n00 + n11, 2.0 * n01, 0.0, n00 - n11])
    return tr * number_basis_scale(params)


def amplifier_kraus_apply(rho: np.ndarray, gain: float, tol: float = 1e-14) -> np.ndarray:
    """Quantum-limited amplifier on a Fock density matrix; the output dimension grows.

    Kraus operators ``B_j |n> = sqrt(C(n+j, j)) G^{-(n+1)/2} ((G-1)/G)^{j/2} |n+j>``.
    """
    if gain < 1.0:
        raise ValueError("gain must be >= 1")
    d = rho.shape[0]
    if gain == 1.0:
        return rho.copy()
    n = np.arange(d)
    x = (gain - 1.0) / gain
    # the photon-number shift j follows a negative binomial; bound its tail for n = d - 1
    j_max = 0
    mean = d * x / (1.0 - x)
    j_max = int(math.ceil(mean + 12.0 * math.sqrt(mean / (1.0 - x)) + 40))
    out = np.zeros((d + j_max + 1, d + j_max + 1), dtype=rho.dtype)
    for j in range(j_max + 1):
        logb = 0.5 * (gammaln(n + j + 1) - gammaln(n + 1) - gammaln(j + 1)) \
            - 0.5 * (n + 1) * math.log(gain) + 0.5 * j * math.log(x)
        b = np.exp(logb)
        if b.max() < tol * 1e-3 and j > mean:
            break
        out[j:j + d, j:j + d] += b[:, None] * rho * b[None, :]
    return out


def loss_kraus_apply(rho: np.ndarray, eta: float) -> np.ndarray:
    """Pure loss: ``A_k |n> = sqrt(C(n, k)) eta^{(n-k)/2} (1-eta)^{k/2} |n-k>``."""
    if not (0.0 < eta <= 1.0):
        raise ValueError("eta must lie in (0, 1]")
    d = rho.shape[0]
    if eta == 1.0:
        return rho.copy()
    n = np.arange(d)
    out = np.zeros_like(rho)
    for k in range(d):
        m = n[k:]
        loga = 0.5 * (gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1)) \
            + 0.5 * (m - k) * math.log(eta) + 0.5 * k * math.log1p(-eta)
        a = np.exp(loga)
        out[:d - k, :d - k] += a[:, None] * rho[k:, k:] * a[None, :]
    return out


def marginal_after_loss(logical: int, params: GkpParams, ch: ChannelParams, n_max: int, q_grid,
                        tail_tol: float = 1e-12):
    """Position density of the normalized logical state after amplification then loss.

    Returns ``(density, trace)``; ``trace`` is the Kraus-evolved trace before
    normalization and should be 1 up to Fock truncation.
    """
    st = build_gkp_number_basis(logical, params, n_max, tail_tol)
    c = st.coefficients / math.sqrt(st.norm2())
    rho = np.outer(c, c)
    rho = loss_kraus_apply(amplifier_kraus_apply(rho, ch.gain), ch.eta)
    tr = float(np.trace(rho))
    q = np.asarray(q_grid, dtype=float)
    psi = hermite_functions(q, rho.shape[0] - 1)
    dens = np.einsum("nx,nm,mx->x", psi, rho, psi) / tr
    return dens.reshape(q.shape), tr
