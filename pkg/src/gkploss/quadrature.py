"""Averaging over homodyne outcomes.

The integrand is a smooth Gaussian mixture except across decoder decision
boundaries, where the optimal sign choice switches and the integrand has a
kink. For the square code those boundaries are (almost always) lines of
constant q_m or constant p_m, so they are located once along each axis and
the tensor grid of Gauss-Lobatto cells is aligned with them. Any cell whose
node labels still disagree is split recursively until its kink estimate
drops below ``refine_tol``.

The square domain ``[-L, L]^2`` grows in shells until the probability mass
outside it, which is available in closed form because every term is a
product of 1D Gaussian sums, falls below ``tail_tol``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.polynomial import legendre

from .channels import ChannelParams
from .gkp import CutoffRule, GkpParams, as_pauli_vector
from .qec import EIGENSTATES, LAMBDA_FLOOR, OutcomeModel, _CANDIDATE_VECTORS, outcome_model

__all__ = [
    "QuadratureSpec",
    "QuadratureResult",
    "QuadratureError",
    "gauss_lobatto",
    "integrate_outcomes",
    "mean_fidelity",
    "channel_fidelity",
]


class QuadratureError(RuntimeError):
    """The outcome integral did not converge within the configured domain."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Knobs of the outcome integral.

    Parameters
    ----------
    points_per_std : float
        Average node density per homodyne peak standard deviation
        ``sqrt(Sigma')``; cells hold ``order`` nodes per side.
    order : int
        Gauss-Lobatto nodes per cell side (edges included, so a label switch
        hugging a cell edge is still seen).
    tail_tol : float
        Allowed probability mass outside the square domain.
    refine_tol : float
        Per-cell kink estimate (in channel-fidelity units) below which a cell
        with mixed decoder labels is accepted.
    max_depth : int
        Maximum number of recursive splits of a kinked cell.
    start_width, shell_width : float
        Initial half-width and shell increment, in outcome envelope widths.
    max_half_width : float or None
        Hard cap on L. When the tail criterion is not met inside the cap the
        result is flagged as not converged instead of raising.
    exp_cut : float
        Gaussian terms are dropped beyond ``exp(-exp_cut)`` of their peak.
    """

    points_per_std: float = 4.0
    order: int = 7
    tail_tol: float = 1e-10
    refine_tol: float = 1e-13
    max_depth: int = 6
    start_width: float = 5.0
    shell_width: float = 0.5
    max_half_width: float | None = None
    exp_cut: float = 100.0
    scan_per_cell: int = 4
    max_shells: int = 1000
    chunk_points: int = 250_000

    def __post_init__(self):
        if not self.points_per_std > 0:
            raise ValueError("points_per_std must be positive")
        if self.order < 3:
            raise ValueError("Gauss-Lobatto order must be at least 3")
        if not (self.tail_tol > 0 and self.refine_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        if not (self.start_width > 0 and self.shell_width > 0):
            raise ValueError("domain widths must be positive")
        if self.max_half_width is not None and not self.max_half_width > 0:
            raise ValueError("max_half_width must be positive")

    def refined(self, factor: float = 2.0) -> "QuadratureSpec":
        """Same rule with the node spacing divided by ``factor``."""
        return QuadratureSpec(**{**asdict(self), "points_per_std": self.points_per_std * factor})

    def describe(self) -> dict:
        return asdict(self)


@dataclass
class QuadratureResult:
    mean_fidelities: np.ndarray
    masses: np.ndarray
    half_width: float
    cell_width: float
    node_spacing: float
    n_cells: int
    n_refined: int
    n_breakpoints: int
    tail_mass: float
    converged: bool
    extra_fidelity: float | None = None
    extra_mass: float | None = None
    extra_input: np.ndarray | None = field(default=None, repr=False)

    @property
    def channel_fidelity(self) -> float:
        return math.fsum(self.mean_fidelities) / len(self.mean_fidelities)

    @property
    def normalization_residual(self) -> float:
        res = np.abs(self.masses - 1.0)
        if self.extra_mass is not None:
            res = np.append(res, abs(self.extra_mass - 1.0))
        return float(res.max())


def gauss_lobatto(n: int):
    """Nodes and weights of the n-point Gauss-Lobatto rule on [-1, 1]."""
    inner = legendre.Legendre.basis(n - 1).deriv().roots().real
    x = np.concatenate([[-1.0], np.sort(inner), [1.0]])
    pn = legendre.legval(x, [0] * (n - 1) + [1])
    return x, 2.0 / (n * (n - 1) * pn * pn)


def envelope_std(params: GkpParams, ch: ChannelParams) -> float:
    """Rough spread of the outcome density along either homodyne axis."""
    t = math.tanh(params.epsilon)
    c2 = math.cosh(params.epsilon) ** 2
    hom = outcome_model(params, ch).homodyne
    # the envelopes of the two inputs (width^2 ~ 1/(2 t cosh^2)) mix 50:50
    return math.sqrt(0.25 * (ch.eta * ch.gain + 1.0) / (t * c2) + hom.sigma_prime)


def _eigenstate_mass(model: OutcomeModel, aq, ap):
    """Probability of a product region for each eigenstate input.

    ``aq[k1, k2]`` and ``ap[k1, k2]`` are the region integrals of the q and p
    term factors.
    """
    tr = model.traces
    prod = aq * ap
    out = np.empty(6)
    for j in (1, 2, 3):
        for half, sgn in enumerate((1.0, -1.0)):
            scale = 1.0 / ((tr[0] + sgn * tr[j]) * model.n_bell)
            out[2 * (j - 1) + half] = scale * math.fsum(tr * (prod[0] + sgn * prod[j]))
    return out


class _Integrand:
    """Node values for the six eigenstates (plus an optional extra input)."""

    def __init__(self, model: OutcomeModel, extra=None):
        self.model = model
        self.extra = None if extra is None else as_pauli_vector(extra)

    def labels(self, terms):
        """Decoder choice (index into the sign candidates) and total density."""
        P, R = self.model.eigenstate_fields(terms)
        return np.argmax(self.model.decoder_objective(R), axis=0), P.sum(axis=0)

    def evaluate(self, terms):
        """Return (values[n_comp, ...], objective[4, ...], labels[...])."""
        model = self.model
        P, R = model.eigenstate_fields(terms)
        obj = model.decoder_objective(R)
        best = np.argmax(obj, axis=0)
        svec = np.moveaxis(_CANDIDATE_VECTORS[best], -1, 0)  # (3, ...)
        vals = [0.5 * (P + np.repeat(svec, 2, axis=0) * R), P]
        if self.extra is not None:
            lam = model.lambdas(terms, self.extra)
            ok = lam[0] > LAMBDA_FLOOR
            dens = np.where(ok, np.tensordot(model.traces, lam, axes=(0, 0)), 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                a_out = np.where(ok, lam[1:] / lam[0], 0.0)
            ideal = svec * self.extra.reshape((3,) + (1,) * (a_out.ndim - 1))
            na2 = np.minimum(np.sum(a_out * a_out, axis=0), 1.0)
            nb2 = float(self.extra @ self.extra)
            fid = 0.5 * (1.0 + np.sum(a_out * ideal, axis=0) + np.sqrt((1.0 - na2) * (1.0 - nb2)))
            vals += [(fid * dens)[None], dens[None]]
        return np.concatenate(vals, axis=0), obj, best


class _Integrator:
    def __init__(self, params, ch, cutoff, spec: QuadratureSpec, extra=None):
        self.model = outcome_model(params, ch, cutoff, spec.exp_cut)
        self.spec = spec
        self.integrand = _Integrand(self.model, extra)
        self.sigma = math.sqrt(self.model.homodyne.sigma_prime)
        self.nodes, self.weights = gauss_lobatto(spec.order)
        self.cell = self.sigma * (spec.order - 1) / spec.points_per_std
        self.n_cells = 0
        self.n_refined = 0

    # -- domain -----------------------------------------------------------
    def _outside_mass(self, L):
        tq, lq, tp, lp = self.model.term_integrals(L)
        band_q = _eigenstate_mass(self.model, lq, tp)
        band_p = _eigenstate_mass(self.model, tq, lp)
        return float(np.max(np.abs(band_q) + np.abs(band_p)))

    def _half_width(self):
        spec = self.spec
        env = envelope_std(self.model.params, self.model.ch)
        hom = self.model.homodyne
        radius = self.model.cutoff.radius(self.model.params)
        # beyond this every retained Gaussian is cut off
        cap = hom.mu_scale * (hom.input_scale + 1.0) * radius + math.sqrt(2 * hom.sigma_prime * spec.exp_cut)
        if spec.max_half_width is not None:
            cap = min(cap, spec.max_half_width)
        L = min(spec.start_width * env, cap)
        for _ in range(spec.max_shells):
            tail = self._outside_mass(L)
            if tail < spec.tail_tol:
                return L, tail, True
            if L >= cap:
                # only a user cap can leave real mass outside
                return L, tail, spec.max_half_width is None
            L = min(L + spec.shell_width * env, cap)
        raise QuadratureError(f"outcome domain did not converge after {spec.max_shells} shells")

    # -- decision boundaries ------------------------------------------------
    def _labels_at(self, q, p):
        return self.integrand.labels(self.model.term_values(q, p))[0]

    def _breakpoints(self, L, axis):
        """Positions along ``axis`` (0: q, 1: p) where the decoder label switches."""
        spec = self.spec
        fine = np.linspace(-L, L, int(math.ceil(2 * L * spec.scan_per_cell / self.cell)) + 1)
        coarse = np.arange(-L + 0.5 * self.sigma, L, self.sigma)
        step = max(1, spec.chunk_points // fine.size)
        labels_rows, dens_rows = [], []
        f_fine = self.model.q_factors(fine) if axis == 0 else self.model.p_factors(fine)
        for s in range(0, coarse.size, step):
            c = coarse[s:s + step]
            fq, fp = (f_fine, self.model.p_factors(c)) if axis == 0 else (self.model.q_factors(c), f_fine)
            lab, dens = self.integrand.labels(fq[:, :, :, None] * fp[:, :, None, :])
            if axis == 0:
                lab, dens = lab.T, dens.T  # rows: coarse, columns: fine
            labels_rows.append(lab)
            dens_rows.append(dens)
        lab = np.concatenate(labels_rows, axis=0)
        dens = np.concatenate(dens_rows, axis=0)
        live = dens > 1e-12 * dens.max()
        flip = (lab[:, 1:] != lab[:, :-1]) & live[:, 1:] & live[:, :-1]
        rows, cols = np.nonzero(flip)
        if rows.size == 0:
            return np.empty(0)
        # one bisection per fine gap, at the densest row that sees the switch
        weight = dens[rows, cols]
        order = np.lexsort((-weight, cols))
        rows, cols = rows[order], cols[order]
        first = np.concatenate([[True], np.diff(cols) != 0])
        support = np.diff(np.append(np.nonzero(first)[0], cols.size))
        rows, cols = rows[first], cols[first]
        a, b, c = fine[cols], fine[cols + 1], coarse[rows]
        left = lab[rows, cols]
        while np.max(b - a) > 1e-13 * max(1.0, L):
            mid = 0.5 * (a + b)
            lm = self._labels_at(mid, c) if axis == 0 else self._labels_at(c, mid)
            same = lm == left
            a = np.where(same, mid, a)
            b = np.where(same, b, mid)
        pts = 0.5 * (a + b)
        order = np.argsort(pts)
        pts, support = pts[order], support[order]
        groups = np.split(np.arange(pts.size), np.nonzero(np.diff(pts) > self.cell / 8.0)[0] + 1)
        # a switch seen in a single scan row is a row grazing the other axis's boundary
        return np.array([np.median(pts[g]) for g in groups if support[g].sum() > 1])

    @staticmethod
    def _partition(breaks, L, H):
        edges = np.concatenate([[-L], breaks[(breaks > -L) & (breaks < L)], [L]])
        lo, width = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            n = max(1, int(math.ceil((b - a) / H)))
            w = (b - a) / n
            lo.append(a + w * np.arange(n))
            width.append(np.full(n, w))
        return np.concatenate(lo), np.concatenate(width)

    # -- integration ------------------------------------------------------
    def _nodes(self, lo, width):
        return lo[:, None] + 0.5 * width[:, None] * (self.nodes + 1.0), 0.5 * width[:, None] * self.weights

    def _grid(self, q_lo, q_w, p_lo, p_w):
        """Integrate the tensor grid of cells; returns per-chunk component sums."""
        k = self.spec.order
        pn, pw = self._nodes(p_lo, p_w)
        fp = self.model.p_factors(pn.ravel())
        rows_per_chunk = max(1, self.spec.chunk_points // (k * pn.size))
        partials = []
        for s in range(0, q_lo.size, rows_per_chunk):
            ql, qw = q_lo[s:s + rows_per_chunk], q_w[s:s + rows_per_chunk]
            qn, qwt = self._nodes(ql, qw)
            fq = self.model.q_factors(qn.ravel())
            vals, obj, best = self.integrand.evaluate(fq[:, :, :, None] * fp[:, :, None, :])
            ncq, ncp = ql.size, p_lo.size
            vals = vals.reshape(-1, ncq, k, ncp, k)
            cells = np.einsum("caibj,ai,bj->abc", vals, qwt, pw)
            self.n_cells += ncq * ncp
            best = best.reshape(ncq, k, ncp, k)
            kinked = best.min(axis=(1, 3)) != best.max(axis=(1, 3))
            if np.any(kinked) and self.spec.max_depth > 0:
                ia, ib = np.nonzero(kinked)
                sub = obj.reshape(4, ncq, k, ncp, k)[:, ia, :, ib, :]  # (B, 4, k, k)
                est = self._kink_estimate(np.moveaxis(sub, 0, 1), qwt[ia], pw[ib])
                todo = est > self.spec.refine_tol
                if np.any(todo):
                    ia, ib = ia[todo], ib[todo]
                    cells[ia, ib] = self._refine(ql[ia], p_lo[ib], qw[ia], p_w[ib], 1)
            partials.append(cells.reshape(-1, cells.shape[-1]).sum(axis=0))
        return partials

    @staticmethod
    def _kink_estimate(obj, qwt, pwt):
        """Bound on the error from integrating a kinked cell as if smooth.

        ``obj`` has shape (4, B, k, k). The cell is charged the worst gap between
        the pointwise optimum and the best single candidate, times its area.
        """
        w2 = np.einsum("bi,bj->bij", qwt, pwt)
        cell_obj = np.einsum("xbij,bij->xb", obj, w2)
        choice = np.argmax(cell_obj, axis=0)
        chosen = np.take_along_axis(obj, choice[None, :, None, None], axis=0)[0]
        gap = (obj.max(axis=0) - chosen).reshape(obj.shape[1], -1).max(axis=1)
        return w2.reshape(w2.shape[0], -1).sum(axis=1) * gap / 12.0

    def _refine(self, q_lo, p_lo, q_w, p_w, depth):
        """Integrate cells by splitting each into four children."""
        per_batch = max(1, self.spec.chunk_points // (4 * self.spec.order ** 2))
        if q_lo.size > per_batch:
            return np.concatenate([
                self._refine(q_lo[s:s + per_batch], p_lo[s:s + per_batch],
                             q_w[s:s + per_batch], p_w[s:s + per_batch], depth)
                for s in range(0, q_lo.size, per_batch)
            ])
        self.n_refined += q_lo.size
        k = self.spec.order
        cq = np.stack([q_lo, q_lo, q_lo + 0.5 * q_w, q_lo + 0.5 * q_w], axis=1).ravel()
        cp = np.stack([p_lo, p_lo + 0.5 * p_w, p_lo, p_lo + 0.5 * p_w], axis=1).ravel()
        wq = np.repeat(0.5 * q_w, 4)
        wp = np.repeat(0.5 * p_w, 4)
        qn, qwt = self._nodes(cq, wq)
        pn, pwt = self._nodes(cp, wp)
        B = cq.size
        fq, fp = self.model.term_grid_factors(qn.ravel(), pn.ravel())
        fq = fq.reshape(4, 4, B, k)
        fp = fp.reshape(4, 4, B, k)
        vals, obj, best = self.integrand.evaluate(fq[:, :, :, :, None] * fp[:, :, :, None, :])
        cells = np.einsum("cbij,bi,bj->bc", vals, qwt, pwt)
        flat = best.reshape(B, -1)
        kinked = flat.min(axis=1) != flat.max(axis=1)
        if depth < self.spec.max_depth and np.any(kinked):
            idx = np.nonzero(kinked)[0]
            est = self._kink_estimate(obj[:, idx], qwt[idx], pwt[idx])
            idx = idx[est > self.spec.refine_tol]
            if idx.size:
                cells[idx] = self._refine(cq[idx], cp[idx], wq[idx], wp[idx], depth + 1)
        return cells.reshape(-1, 4, cells.shape[-1]).sum(axis=1)

    def run(self) -> QuadratureResult:
        L, tail, converged = self._half_width()
        bq = self._breakpoints(L, 0)
        bp = self._breakpoints(L, 1)
        q_lo, q_w = self._partition(bq, L, self.cell)
        p_lo, p_w = self._partition(bp, L, self.cell)
        partials = self._grid(q_lo, q_w, p_lo, p_w)
        total = np.array([math.fsum(c) for c in zip(*partials)])
        extra_f = extra_m = None
        if self.integrand.extra is not None:
            extra_f, extra_m = float(total[12]), float(total[13])
        return QuadratureResult(
            mean_fidelities=total[:6].copy(),
            masses=total[6:12].copy(),
            half_width=float(L),
            cell_width=self.cell,
            node_spacing=self.cell / (self.spec.order - 1),
            n_cells=self.n_cells,
            n_refined=self.n_refined,
            n_breakpoints=int(bq.size + bp.size),
            tail_mass=tail,
            converged=converged,
            extra_fidelity=extra_f,
            extra_mass=extra_m,
            extra_input=self.integrand.extra,
        )


def integrate_outcomes(params: GkpParams, ch: ChannelParams, cutoff: CutoffRule = CutoffRule(),
                       quadrature: QuadratureSpec = QuadratureSpec(), extra_input=None) -> QuadratureResult:
    """Outcome-averaged fidelities of the six eigenstates, and optionally one more input."""
    return _Integrator(params, ch, cutoff, quadrature, extra_input).run()


def mean_fidelity(a_in, params: GkpParams, ch: ChannelParams, cutoff: CutoffRule = CutoffRule(),
                  quadrature: QuadratureSpec = QuadratureSpec()) -> float:
    """Outcome-averaged logical fidelity for input ``a_in``."""
    a = as_pauli_vector(a_in)
    hits = np.nonzero(np.all(EIGENSTATES == a, axis=1))[0]
    res = integrate_outcomes(params, ch, cutoff, quadrature, None if hits.size else a)
    if hits.size:
        return float(res.mean_fidelities[hits[0]])
    return float(res.extra_fidelity)


def channel_fidelity(params: GkpParams, ch: ChannelParams, cutoff: CutoffRule = CutoffRule(),
                     quadrature: QuadratureSpec = QuadratureSpec()) -> float:
    """Average of the six eigenstate mean fidelities."""
    return integrate_outcomes(params, ch, cutoff, quadrature).channel_fidelity
