"""Parameter sweeps over (epsilon, eta, gain mode), CSV output and marginal dumps.

Config format, one setting per line::

    # comment
    epsilon = 0.3, 0.2, 0.1          # or: squeezing_db = 10, 13, 16
    eta = 0.8, 0.9
    gain = none, pre-amp, 1.25
    cutoff_threshold = 23
    points_per_std = 4
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .channels import ChannelParams, logical_marginal
from .gkp import SQRT_PI, CutoffRule, GkpParams, epsilon_from_db
from .quadrature import QuadratureError, QuadratureSpec, integrate_outcomes

__all__ = [
    "ConfigError",
    "SweepConfig",
    "ResultRow",
    "parse_config",
    "load_config",
    "run_sweep",
    "format_csv",
    "write_csv",
    "MarginalDump",
    "misinterpreted_mass",
    "emit_marginal",
]

RESIDUAL_FLAG = 1e-5
FLOAT_FMT = ".11e"  # 12 significant digits

_QUAD_KEYS = {
    "points_per_std": float,
    "order": int,
    "tail_tol": float,
    "refine_tol": float,
    "max_depth": int,
    "max_half_width": float,
    "exp_cut": float,
}
_LIST_KEYS = ("epsilon", "squeezing_db", "eta", "gain")
_SCALAR_KEYS = ("cutoff_threshold", "workers", "output") + tuple(_QUAD_KEYS)


class ConfigError(ValueError):
    """Malformed or out-of-domain sweep configuration."""


def _fmt(x: float) -> str:
    return format(float(x), FLOAT_FMT)


def normalize_gain_mode(mode) -> str:
    """Canonical spelling: ``none``, ``pre-amp`` or a number formatted to 12 digits."""
    if isinstance(mode, str):
        key = mode.strip().lower()
        if key == "none":
            return "none"
        if key in ("pre-amp", "preamp"):
            return "pre-amp"
        if key.startswith("explicit:"):
            key = key.split(":", 1)[1]
        try:
            value = float(key)
        except ValueError:
            raise ConfigError(f"gain: unknown mode {mode!r}; use none, pre-amp or a number") from None
    else:
        value = float(mode)
    if not (math.isfinite(value) and value >= 1.0):
        raise ConfigError(f"gain: explicit gain must be a finite number >= 1, got {mode!r}")
    return _fmt(value)


@dataclass(frozen=True)
class SweepConfig:
    epsilon_values: tuple[float, ...]
    eta_values: tuple[float, ...]
    gain_modes: tuple[str, ...] = ("none",)
    cutoff_threshold: float = 23.0
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    output: str | None = None
    workers: int = 1

    def __post_init__(self):
        # repeated grid values would only duplicate rows
        eps = tuple(dict.fromkeys(float(e) for e in self.epsilon_values))
        etas = tuple(dict.fromkeys(float(e) for e in self.eta_values))
        modes = tuple(dict.fromkeys(normalize_gain_mode(m) for m in self.gain_modes))
        for name, vals in (("epsilon", eps), ("eta", etas), ("gain", modes)):
            if not vals:
                raise ConfigError(f"{name}: grid must not be empty")
        if not all(math.isfinite(e) and e > 0 for e in eps):
            raise ConfigError("epsilon: values must be positive and finite")
        if not all(0.0 < e <= 1.0 for e in etas):
            raise ConfigError("eta: values must lie in (0, 1]")
        if not (math.isfinite(self.cutoff_threshold) and self.cutoff_threshold > 0):
            raise ConfigError("cutoff_threshold: must be positive")
        if int(self.workers) < 1:
            raise ConfigError("workers: must be at least 1")
        object.__setattr__(self, "epsilon_values", eps)
        object.__setattr__(self, "eta_values", etas)
        object.__setattr__(self, "gain_modes", modes)
        object.__setattr__(self, "cutoff_threshold", float(self.cutoff_threshold))
        object.__setattr__(self, "workers", int(self.workers))

    @property
    def cutoff(self) -> CutoffRule:
        return CutoffRule(self.cutoff_threshold)

    def tasks(self) -> list[tuple[float, float, str]]:
        """Sweep points in output order: by eta, then gain mode, then epsilon."""
        return [(e, h, m) for h in sorted(self.eta_values)
                for m in sorted(self.gain_modes, key=_mode_key)
                for e in sorted(self.epsilon_values)]

    def canonical(self) -> dict:
        """Everything that determines the numbers; excludes output path and worker count."""
        return {
            "epsilon": [_fmt(e) for e in sorted(self.epsilon_values)],
            "eta": [_fmt(e) for e in sorted(self.eta_values)],
            "gain": sorted(self.gain_modes, key=_mode_key),
            "cutoff_threshold": _fmt(self.cutoff_threshold),
            "quadrature": {k: (v if isinstance(v, int) or v is None else _fmt(v))
                           for k, v in self.quadrature.describe().items()},
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _mode_key(mode: str):
    # none < pre-amp < explicit gains (ascending)
    if mode == "none":
        return (0, 0.0)
    if mode == "pre-amp":
        return (1, 0.0)
    return (2, float(mode))


def _split_values(raw: str, key: str, lineno: int) -> list[str]:
    parts = [p.strip() for p in raw.split(",")]
    if any(not p for p in parts):
        raise ConfigError(f"line {lineno}: empty value in {key!r}")
    return parts


def _to_float(text: str, key: str, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key}: cannot parse {text!r} as a number") from None


def parse_config(text: str) -> SweepConfig:
    """Parse the line-oriented ``key = value[, value...]`` format."""
    seen: dict[str, tuple[int, list[str]]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        key = key.lower()
        if key not in _LIST_KEYS and key not in _SCALAR_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key][0]})")
        if not raw:
            raise ConfigError(f"line {lineno}: {key}: no value given")
        vals = _split_values(raw, key, lineno)
        if key in _SCALAR_KEYS and len(vals) != 1:
            raise ConfigError(f"line {lineno}: {key} takes a single value")
        seen[key] = (lineno, vals)

    if "epsilon" in seen and "squeezing_db" in seen:
        raise ConfigError(f"line {seen['squeezing_db'][0]}: give either epsilon or squeezing_db, not both")
    if "epsilon" in seen:
        ln, vals = seen["epsilon"]
        eps = [_to_float(v, "epsilon", ln) for v in vals]
    elif "squeezing_db" in seen:
        ln, vals = seen["squeezing_db"]
        eps = [epsilon_from_db(_to_float(v, "squeezing_db", ln)) for v in vals]
    else:
        raise ConfigError("epsilon: missing (set 'epsilon' or 'squeezing_db')")
    if "eta" not in seen:
        raise ConfigError("eta: missing")
    ln, vals = seen["eta"]
    etas = [_to_float(v, "eta", ln) for v in vals]
    modes = seen.get("gain", (0, ["none"]))[1]

    quad = {}
    for key, kind in _QUAD_KEYS.items():
        if key in seen:
            ln, (v,) = seen[key]
            num = _to_float(v, key, ln)
            if kind is int:
                if num != int(num):
                    raise ConfigError(f"line {ln}: {key}: expected an integer, got {v!r}")
                num = int(num)
            quad[key] = num
    try:
        spec = QuadratureSpec(**quad)
    except ValueError as exc:
        raise ConfigError(f"quadrature: {exc}") from None

    kwargs = {}
    if "cutoff_threshold" in seen:
        ln, (v,) = seen["cutoff_threshold"]
        kwargs["cutoff_threshold"] = _to_float(v, "cutoff_threshold", ln)
    if "workers" in seen:
        ln, (v,) = seen["workers"]
        w = _to_float(v, "workers", ln)
        if w != int(w):
            raise ConfigError(f"line {ln}: workers: expected an integer, got {v!r}")
        kwargs["workers"] = int(w)
    if "output" in seen:
        kwargs["output"] = seen["output"][1][0]
    return SweepConfig(tuple(eps), tuple(etas), tuple(modes), quadrature=spec, **kwargs)


def load_config(path) -> SweepConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class ResultRow:
    epsilon: float
    squeezing_db: float
    eta: float
    gain_mode: str
    gain_value: float
    channel_fidelity: float
    channel_infidelity: float
    mean_fidelities: tuple[float, ...]
    half_width: float
    node_spacing: float
    normalization_residual: float
    converged: bool
    message: str = ""

    @property
    def flagged(self) -> bool:
        return (not self.converged) or not (self.normalization_residual < RESIDUAL_FLAG)

    def flag_reason(self) -> str:
        if self.message:
            return self.message
        if not self.converged:
            return "quadrature did not converge"
        if self.flagged:
            return f"normalization residual {self.normalization_residual:.2e} >= {RESIDUAL_FLAG:.0e}"
        return ""


EIGENSTATE_LABELS = ("+x", "-x", "+y", "-y", "+z", "-z")
CSV_COLUMNS = (
    ["epsilon", "squeezing_db", "eta", "gain_mode", "gain_value", "channel_fidelity", "channel_infidelity"]
    + [f"fidelity_{s}" for s in EIGENSTATE_LABELS]
    + ["domain_L", "grid_h", "normalization_residual", "flag"]
)


def _evaluate(task) -> ResultRow:
    eps, eta, mode, cutoff_threshold, spec = task
    ch = ChannelParams.preset(eta, mode)
    params = GkpParams(eps)
    nan6 = (math.nan,) * 6
    try:
        res = integrate_outcomes(params, ch, CutoffRule(cutoff_threshold), spec)
    except QuadratureError as exc:
        return ResultRow(eps, params.squeezing_db, eta, mode, ch.gain, math.nan, math.nan, nan6,
                         math.nan, math.nan, math.nan, False, str(exc))
    f = res.channel_fidelity
    return ResultRow(eps, params.squeezing_db, eta, mode, ch.gain, f, 1.0 - f,
                     tuple(float(x) for x in res.mean_fidelities), res.half_width, res.node_spacing,
                     res.normalization_residual, res.converged)


def run_sweep(config: SweepConfig, workers: int | None = None) -> list[ResultRow]:
    """One row per (epsilon, eta, mode); rows sorted by (eta, mode, epsilon).

    Results do not depend on ``workers``: each point is evaluated independently
    and rows are reassembled in task order.
    """
    n = config.workers if workers is None else int(workers)
    if n < 1:
        raise ConfigError("workers: must be at least 1")
    tasks = [(e, h, m, config.cutoff_threshold, config.quadrature) for e, h, m in config.tasks()]
    if n == 1 or len(tasks) == 1:
        return [_evaluate(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(n, len(tasks))) as pool:
        return list(pool.map(_evaluate, tasks))


def format_csv(config: SweepConfig, rows: list[ResultRow]) -> str:
    lines = [
        "# gkploss sweep",
        f"# config_sha256 = {config.config_hash()}",
        f"# cutoff_threshold = {_fmt(config.cutoff_threshold)}",
    ]
    for key, value in config.canonical()["quadrature"].items():
        lines.append(f"# quadrature.{key} = {value}")
    lines.append(",".join(CSV_COLUMNS))
    for r in rows:
        cells = [_fmt(r.epsilon), _fmt(r.squeezing_db), _fmt(r.eta), r.gain_mode, _fmt(r.gain_value),
                 _fmt(r.channel_fidelity), _fmt(r.channel_infidelity)]
        cells += [_fmt(x) for x in r.mean_fidelities]
        cells += [_fmt(r.half_width), _fmt(r.node_spacing), _fmt(r.normalization_residual),
                  "1" if r.flagged else "0"]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_csv(path, config: SweepConfig, rows: list[ResultRow]) -> None:
    Path(path).write_text(format_csv(config, rows), encoding="utf-8")


# -- marginal dumps ---------------------------------------------------------------

@dataclass(frozen=True)
class MarginalDump:
    q: np.ndarray
    density: np.ndarray
    misinterpreted_mass: float
    params: GkpParams
    channel: ChannelParams
    gain_mode: str

    def to_csv(self) -> str:
        lines = [
            "# gkploss marginal of logical 0",
            f"# epsilon = {_fmt(self.params.epsilon)}",
            f"# eta = {_fmt(self.channel.eta)}",
            f"# gain_mode = {self.gain_mode}",
            f"# gain_value = {_fmt(self.channel.gain)}",
            f"# misinterpreted_mass = {_fmt(self.misinterpreted_mass)}",
            "q,density,assigned_logical",
        ]
        assigned = np.rint(self.q / SQRT_PI).astype(np.int64) % 2
        lines += [f"{_fmt(x)},{_fmt(d)},{a}" for x, d, a in zip(self.q, self.density, assigned)]
        return "\n".join(lines) + "\n"


def misinterpreted_mass(params: GkpParams, ch: ChannelParams, cutoff: CutoffRule = CutoffRule()) -> float:
    """Mass of the noisy logical-0 marginal lying in odd nearest-sqrt(pi) bins.

    Bins are fixed by the ideal lattice, ``[(j - 1/2) sqrt(pi), (j + 1/2) sqrt(pi))``
    with odd ``j``; they are not rescaled by the loss.
    """
    mix = logical_marginal(0, params, ch, cutoff)
    mu = mix.means[:, 0]
    sd = math.sqrt(mix.covariance[0, 0])
    reach = np.abs(mu).max() + 40.0 * sd
    j_max = int(math.ceil(reach / SQRT_PI)) + 1
    j = np.arange(-j_max, j_max + 1)
    j = j[j % 2 == 1]
    lo = ((j - 0.5) * SQRT_PI)[:, None]
    hi = ((j + 0.5) * SQRT_PI)[:, None]
    # difference of normal CDFs, using the upper tail when both edges are far right
    z_lo, z_hi = (lo - mu) / sd, (hi - mu) / sd
    mass = np.where(z_lo > 0, ndtr(-z_lo) - ndtr(-z_hi), ndtr(z_hi) - ndtr(z_lo))
    return math.fsum((mass * mix.weights[None, :]).ravel())


def emit_marginal(epsilon: float, eta: float, gain="none", out=None, n_points: int = 4001,
                  cutoff: CutoffRule = CutoffRule()) -> MarginalDump:
    """Sample the q-marginal of logical 0 after the channel and optionally write it as CSV."""
    params = GkpParams(epsilon)
    mode = normalize_gain_mode(gain)
    ch = ChannelParams.preset(eta, mode)
    mix = logical_marginal(0, params, ch, cutoff)
    sd = math.sqrt(mix.covariance[0, 0])
    significant = np.abs(mix.weights) > 1e-12 * np.abs(mix.weights).max()
    half = float(np.abs(mix.means[significant, 0]).max() + 6.0 * sd)
    q = np.linspace(-half, half, n_points)
    dump = MarginalDump(q, np.asarray(mix(q[:, None]), dtype=float), misinterpreted_mass(params, ch, cutoff),
                        params, ch, mode)
    if out is not None:
        Path(out).write_text(dump.to_csv(), encoding="utf-8")
    return dump


def summarize_flags(rows: list[ResultRow], stream=None) -> int:
    """Print one line per flagged row; return the count."""
    stream = sys.stderr if stream is None else stream
    bad = [r for r in rows if r.flagged]
    for r in bad:
        print(f"flagged: epsilon={_fmt(r.epsilon)} eta={_fmt(r.eta)} gain={r.gain_mode}: {r.flag_reason()}",
              file=stream)
    if bad:
        print(f"{len(bad)} of {len(rows)} rows flagged", file=stream)
    return len(bad)
