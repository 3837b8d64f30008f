"""Teleportation-based GKP error correction after pre-amplification and loss.

Everything conditioned on a double-homodyne outcome ``(q_m, p_m)`` derives
from four coefficients ``lambda_k``. Each is a sum over the input Pauli
index ``k1`` of products ``g(q_m) * g(p_m)`` of one-dimensional lattice sums,
with the lattice classes and sign functions fixed by two 16-entry
transformation tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .channels import ChannelParams, homodyne_reduced_params
from .gkp import (
    CutoffRule,
    GkpParams,
    PAULI_CLAMP_TOL,
    as_pauli_vector,
    lattice,
    logical_fidelity,
    sign_phase,
    traces,
)

__all__ = [
    "TABLE_L",
    "TABLE_LPRIME",
    "EIGENSTATES",
    "LAMBDA_FLOOR",
    "SignChoice",
    "SIGN_CANDIDATES",
    "OutcomeModel",
    "outcome_model",
    "table_l",
    "table_lprime",
    "g_function",
    "lambda_vector",
    "output_pauli",
    "outcome_density",
    "ideal_pauli",
    "decoder_sign",
    "in_out_fidelity",
]

# (k1, k2) -> (l1, l2): lattice classes of the regrouped indices
TABLE_L = {
    (0, 0): (0, 0), (1, 0): (1, 0), (2, 0): (1, 1), (3, 0): (0, 1),
    (0, 1): (3, 0), (1, 1): (2, 0), (2, 1): (2, 1), (3, 1): (3, 1),
    (0, 2): (3, 3), (1, 2): (2, 3), (2, 2): (2, 2), (3, 2): (3, 2),
    (0, 3): (0, 3), (1, 3): (1, 3), (2, 3): (1, 2), (3, 3): (0, 2),
}
# (k1, k2) -> (l1', l2'): sign functions of the regrouped indices
TABLE_LPRIME = {
    (0, 0): (0, 0), (1, 0): (0, 3), (2, 0): (3, 3), (3, 0): (3, 0),
    (0, 1): (0, 1), (1, 1): (0, 2), (2, 1): (3, 2), (3, 1): (3, 1),
    (0, 2): (1, 1), (1, 2): (1, 2), (2, 2): (2, 2), (3, 2): (2, 1),
    (0, 3): (1, 0), (1, 3): (1, 3), (2, 3): (2, 3), (3, 3): (2, 0),
}

# six logical eigenstates: +X, -X, +Y, -Y, +Z, -Z
EIGENSTATES = np.array([
    [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0], [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0], [0.0, 0.0, -1.0],
])

# outcomes whose lambda_0 falls below this carry no probability
LAMBDA_FLOOR = 1e-300

_USED_PAIRS = sorted(
    {(l1, TABLE_LPRIME[k][0]) for k, (l1, _) in TABLE_L.items()}
    | {(l2, TABLE_LPRIME[k][1]) for k, (_, l2) in TABLE_L.items()}
)

# exp(-z) is exactly 0.0 in double precision beyond this
_EXP_UNDERFLOW = 745.2


def _check_index(k):
    if k not in (0, 1, 2, 3):
        raise ValueError(f"Pauli index must be in 0..3, got {k!r}")


def table_l(k1: int, k2: int) -> tuple[int, int]:
    _check_index(k1)
    _check_index(k2)
    return TABLE_L[(k1, k2)]


def table_lprime(k1: int, k2: int) -> tuple[int, int]:
    _check_index(k1)
    _check_index(k2)
    return TABLE_LPRIME[(k1, k2)]


@dataclass(frozen=True)
class SignChoice:
    s_x: int = 1
    s_z: int = 1

    def __post_init__(self):
        if self.s_x not in (1, -1) or self.s_z not in (1, -1):
            raise ValueError("sign choices must be +1 or -1")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.s_x, self.s_x * self.s_z, self.s_z], dtype=float)


# ordered by tie-break preference
SIGN_CANDIDATES = (SignChoice(1, 1), SignChoice(1, -1), SignChoice(-1, 1), SignChoice(-1, -1))
_CANDIDATE_VECTORS = np.array([c.vector for c in SIGN_CANDIDATES])


class _LatticeSum:
    """One g-function: a 1D sum of equal-width Gaussians, evaluated with a window."""

    def __init__(self, means, weights, variance, exp_cut=_EXP_UNDERFLOW):
        order = np.argsort(means, kind="stable")
        self.means = np.ascontiguousarray(means[order])
        self.weights = np.ascontiguousarray(weights[order])
        self.variance = variance
        self.norm = 1.0 / math.sqrt(2.0 * math.pi * variance)
        # terms further than this contribute less than exp(-exp_cut) each
        self.reach = math.sqrt(2.0 * variance * exp_cut)

    def total(self) -> float:
        return math.fsum(self.weights)

    def tail(self, half_width: float) -> float:
        """Integral over ``|x| > half_width``."""
        s = math.sqrt(self.variance)
        outside = ndtr((self.means - half_width) / s) + ndtr((-half_width - self.means) / s)
        return math.fsum(self.weights * outside)

    def __call__(self, x, block=1024):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.zeros(flat.size)
        if flat.size == 0 or self.means.size == 0:
            return out.reshape(x.shape)
        order = np.argsort(flat, kind="stable")
        xs = flat[order]
        vals = np.empty_like(xs)
        inv2v = 0.5 / self.variance
        for start in range(0, xs.size, block):
            xb = xs[start:start + block]
            lo = np.searchsorted(self.means, xb[0] - self.reach, side="left")
            hi = np.searchsorted(self.means, xb[-1] + self.reach, side="right")
            if hi <= lo:
                vals[start:start + block] = 0.0
                continue
            d = xb[:, None] - self.means[None, lo:hi]
            vals[start:start + block] = np.exp(-inv2v * d * d) @ self.weights[lo:hi]
        out[order] = vals * self.norm
        return out.reshape(x.shape)


class OutcomeModel:
    """Precomputed lattice data for one (epsilon, channel, cutoff) triple."""

    def __init__(self, params: GkpParams, ch: ChannelParams, cutoff: CutoffRule = CutoffRule(),
                 exp_cut: float = _EXP_UNDERFLOW):
        self.params = params
        self.ch = ch
        self.cutoff = cutoff
        self.exp_cut = exp_cut
        self.traces = traces(params, cutoff)
        self.n_bell = self.traces[0] ** 2 + self.traces[1] ** 2 + self.traces[3] ** 2
        self.homodyne = homodyne_reduced_params(params, ch)
        self._sums = {}
        self._odd = {}
        for l in range(4):
            m, c = lattice(l, params, cutoff)
            for lp in range(4):
                real, odd = sign_phase(lp, m[:, 0], m[:, 1])
                if odd.size and not (odd.all() or not odd.any()):
                    raise AssertionError("mixed phase parity inside one lattice class")
                self._odd[l, lp] = bool(odd.size and odd[0])
                self._sums[l, lp] = self._build_sum(m, c * real)
        # product of two i-phases is -1; an unpaired i never occurs
        self.term_sign = np.ones((4, 4))
        for (k1, k2), (l1, l2) in TABLE_L.items():
            lp1, lp2 = TABLE_LPRIME[(k1, k2)]
            n_odd = self._odd[l1, lp1] + self._odd[l2, lp2]
            if n_odd == 1:
                raise AssertionError(f"imaginary lambda term for (k1, k2) = {(k1, k2)}")
            self.term_sign[k1, k2] = -1.0 if n_odd == 2 else 1.0

    def _build_sum(self, m, w):
        hom = self.homodyne
        if self.ch.eta * self.ch.gain == 1.0:
            # means depend on n1 + n2 only: merge coincident peaks
            key = m[:, 0] + m[:, 1]
            lo = key.min() if key.size else 0
            merged = np.bincount(key - lo, weights=w)
            nz = np.nonzero(merged)[0]
            means = hom.mu_scale * (nz + lo).astype(float)
            return _LatticeSum(means, merged[nz], hom.sigma_prime, self.exp_cut)
        return _LatticeSum(hom.mean(m[:, 0], m[:, 1]), w, hom.sigma_prime, self.exp_cut)

    def is_imaginary(self, l: int, lp: int) -> bool:
        return self._odd[l, lp]

    def g_real(self, l: int, lp: int, x):
        """Real factor r of ``g_{l,l'} = i^odd * r``."""
        return self._sums[l, lp](x)

    def _g_tables(self, x):
        """g values for every (l, l') pair used by the tables, keyed by pair."""
        return {key: self.g_real(key[0], key[1], x) for key in _USED_PAIRS}

    def term_values(self, q, p):
        """Pointwise products ``T[k1, k2] = g_{l1,l1'}(q) g_{l2,l2'}(p)`` (phase included)."""
        q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
        gq = self._g_tables(q)
        gp = self._g_tables(p)
        out = np.empty((4, 4) + q.shape)
        for (k1, k2), (l1, l2) in TABLE_L.items():
            lp1, lp2 = TABLE_LPRIME[(k1, k2)]
            out[k1, k2] = self.term_sign[k1, k2] * gq[l1, lp1] * gp[l2, lp2]
        return out

    def q_factors(self, qs):
        """Per-(k1, k2) q factors, sign of the term included; shape (4, 4, n)."""
        g = self._g_tables(qs)
        out = np.empty((4, 4, np.size(qs)))
        for (k1, k2), (l1, _) in TABLE_L.items():
            out[k1, k2] = self.term_sign[k1, k2] * g[l1, TABLE_LPRIME[(k1, k2)][0]]
        return out

    def p_factors(self, ps):
        g = self._g_tables(ps)
        out = np.empty((4, 4, np.size(ps)))
        for (k1, k2), (_, l2) in TABLE_L.items():
            out[k1, k2] = g[l2, TABLE_LPRIME[(k1, k2)][1]]
        return out

    def term_grid_factors(self, qs, ps):
        """Factors with ``T[k1,k2] = fq[k1,k2][:,None] * fp[k1,k2][None,:]`` on a tensor grid."""
        return self.q_factors(qs), self.p_factors(ps)

    def term_integrals(self, half_width: float):
        """Integrals of the term factors: (total_q, tail_q, total_p, tail_p), each (4, 4).

        ``tail`` integrates over ``|x| > half_width``; terms are products, so
        the outcome-density mass outside a band follows without any 2D work.
        """
        out = np.empty((4, 4, 4))
        for (k1, k2), (l1, l2) in TABLE_L.items():
            lp1, lp2 = TABLE_LPRIME[(k1, k2)]
            gq, gp = self._sums[l1, lp1], self._sums[l2, lp2]
            sgn = self.term_sign[k1, k2]
            out[:, k1, k2] = (sgn * gq.total(), sgn * gq.tail(half_width), gp.total(), gp.tail(half_width))
        return out

    def normalization(self, a_in) -> float:
        a = as_pauli_vector(a_in)
        return self.traces[0] + float(np.dot(a, self.traces[1:]))

    def lambdas(self, terms, a_in):
        """lambda_k (leading axis) from term products and an input Pauli vector."""
        a = as_pauli_vector(a_in)
        a4 = np.concatenate([[1.0], a])
        scale = 1.0 / (self.normalization(a) * self.n_bell)
        return scale * np.tensordot(a4, terms, axes=(0, 0))

    def eigenstate_fields(self, terms):
        """Density and signed Pauli overlap for the six eigenstate inputs.

        Returns ``P`` and ``R`` of shape (6, ...), ordered as ``EIGENSTATES``,
        with ``F_L(a_out, s o a_in) * P = (P + s_j * R) / 2`` for input ``+-e_j``.
        """
        tr = self.traces
        shape = terms.shape[2:]
        P = np.empty((6,) + shape)
        R = np.empty((6,) + shape)
        for j in (1, 2, 3):
            for half, sgn in enumerate((1.0, -1.0)):
                idx = 2 * (j - 1) + half
                scale = 1.0 / ((tr[0] + sgn * tr[j]) * self.n_bell)
                lam = scale * (terms[0] + sgn * terms[j])
                dens = lam[0] * tr[0] + lam[1] * tr[1] + lam[2] * tr[2] + lam[3] * tr[3]
                ok = lam[0] > LAMBDA_FLOOR
                with np.errstate(divide="ignore", invalid="ignore"):
                    r = np.where(ok, sgn * lam[j] / lam[0] * dens, 0.0)
                P[idx] = np.where(ok, dens, 0.0)
                R[idx] = r
        return P, R

    @staticmethod
    def decoder_objective(R):
        """Six-state fidelity sum (minus its s-independent part) for each candidate."""
        d = R[0::2] + R[1::2]
        return np.tensordot(_CANDIDATE_VECTORS, d, axes=(1, 0))


@lru_cache(maxsize=16)
def outcome_model(params: GkpParams, ch: ChannelParams, cutoff: CutoffRule = CutoffRule(),
                  exp_cut: float = _EXP_UNDERFLOW) -> OutcomeModel:
    return OutcomeModel(params, ch, cutoff, exp_cut)


def g_function(l: int, lp: int, x, params: GkpParams, ch: ChannelParams, cutoff: CutoffRule = CutoffRule()):
    """``g_{l,l'}(x)``; purely imaginary when the sign exponent is odd on ``M_l``."""
    _check_index(l)
    _check_index(lp)
    model = outcome_model(params, ch, cutoff)
    r = model.g_real(l, lp, x)
    return 1j * r if model.is_imaginary(l, lp) else r


def _split_outcome(outcome):
    arr = np.asarray(outcome, dtype=float)
    if arr.shape[-1:] != (2,):
        raise ValueError(f"outcomes must have a trailing axis of length 2, got shape {arr.shape}")
    return arr[..., 0], arr[..., 1]


def lambda_vector(outcome, a_in, params: GkpParams, ch: ChannelParams, cutoff: CutoffRule = CutoffRule()):
    """Coefficients (lambda_0..lambda_3) along the last axis for outcome(s) (q_m, p_m)."""
    q, p = _split_outcome(outcome)
    model = outcome_model(params, ch, cutoff)
    lam = model.lambdas(model.term_values(q, p), a_in)
    return np.moveaxis(lam, 0, -1)


def output_pauli(lv):
    lv = np.asarray(lv, dtype=float)
    lam0 = lv[..., 0]
    if np.any(lam0 <= LAMBDA_FLOOR):
        raise ValueError("lambda_0 is not positive: outcome has zero probability or the cutoff is too coarse")
    return as_pauli_vector(lv[..., 1:] / lam0[..., None], tol=PAULI_CLAMP_TOL)


def outcome_density(lv, params: GkpParams, cutoff: CutoffRule = CutoffRule()):
    lv = np.asarray(lv, dtype=float)
    return lv @ traces(params, cutoff)


def ideal_pauli(a_in, s: SignChoice) -> np.ndarray:
    return s.vector * np.asarray(a_in, dtype=float)


def decoder_sign(outcome, params: GkpParams, ch: ChannelParams, cutoff: CutoffRule = CutoffRule()):
    """Sign choice maximizing the density-weighted six-eigenstate fidelity.

    Returns a ``SignChoice`` for a single outcome, or an integer array of
    indices into ``SIGN_CANDIDATES`` for an array of outcomes.
    """
    q, p = _split_outcome(outcome)
    model = outcome_model(params, ch, cutoff)
    _, R = model.eigenstate_fields(model.term_values(q, p))
    best = np.argmax(model.decoder_objective(R), axis=0)
    if np.ndim(best) == 0:
        return SIGN_CANDIDATES[int(best)]
    return best


def in_out_fidelity(outcome, a_in, params: GkpParams, ch: ChannelParams, cutoff: CutoffRule = CutoffRule()) -> float:
    a_in = as_pauli_vector(a_in)
    a_out = output_pauli(lambda_vector(outcome, a_in, params, ch, cutoff))
    s = decoder_sign(outcome, params, ch, cutoff)
    return float(logical_fidelity(a_out, ideal_pauli(a_in, s)))
