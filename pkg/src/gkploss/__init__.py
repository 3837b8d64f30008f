"""Teleportation-based error correction of finite-energy GKP qubits under loss."""
from .channels import ChannelParams, logical_marginal, noisy_peak_moments, noisy_peak_variance
from .estimator import GkpLossDecoder
from .gkp import CutoffRule, GkpParams, epsilon_from_db, squeezing_db, trace_sigma, traces, wigner_value
from .qec import SIGN_CANDIDATES, SignChoice, decoder_sign, in_out_fidelity, lambda_vector, output_pauli
from .quadrature import QuadratureSpec, channel_fidelity, integrate_outcomes, mean_fidelity
from .sweep import SweepConfig, emit_marginal, parse_config, run_sweep

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "CutoffRule",
    "GkpLossDecoder",
    "GkpParams",
    "QuadratureSpec",
    "SIGN_CANDIDATES",
    "SignChoice",
    "SweepConfig",
    "channel_fidelity",
    "decoder_sign",
    "emit_marginal",
    "epsilon_from_db",
    "in_out_fidelity",
    "integrate_outcomes",
    "lambda_vector",
    "logical_marginal",
    "mean_fidelity",
    "noisy_peak_moments",
    "noisy_peak_variance",
    "output_pauli",
    "parse_config",
    "run_sweep",
    "squeezing_db",
    "trace_sigma",
    "traces",
    "wigner_value",
]
