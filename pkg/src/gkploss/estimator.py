"""scikit-learn style front end for the loss-channel decoder."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .channels import ChannelParams
from .gkp import CutoffRule, GkpParams, as_pauli_vector
from .qec import SIGN_CANDIDATES, OutcomeModel
from .quadrature import QuadratureSpec, integrate_outcomes


class GkpLossDecoder(TransformerMixin, BaseEstimator):
    """Teleportation decoder for GKP qubits sent through amplification and loss.

    Samples are homodyne outcomes ``(q_m, p_m)``. ``fit`` builds the lattice
    sums for the configured channel, so ``X`` and ``y`` are ignored apart
    from validation; the "model" is fully determined by the parameters.

    Parameters
    ----------
    epsilon : float
        GKP damping parameter.
    eta : float
        Loss transmissivity in (0, 1].
    gain : str or float
        ``"none"``, ``"pre-amp"`` (gain 1/eta) or an explicit gain >= 1.
    input_state : array-like of shape (3,)
        Bloch vector of the logical input used by ``transform``.
    cutoff_threshold : float
        Lattice peaks with weight below ``exp(-cutoff_threshold)`` are dropped.
    quadrature : QuadratureSpec or None
        Settings of the outcome integral used by ``score``.
    """

    def __init__(self, epsilon=0.05, eta=0.9, gain="none", input_state=(0.0, 0.0, 1.0),
                 cutoff_threshold=23.0, quadrature=None):
        self.epsilon = epsilon
        self.eta = eta
        self.gain = gain
        self.input_state = input_state
        self.cutoff_threshold = cutoff_threshold
        self.quadrature = quadrature

    def fit(self, X=None, y=None):
        if X is not None:
            check_array(X)
        self.params_ = GkpParams(self.epsilon)
        self.channel_ = ChannelParams.preset(self.eta, self.gain)
        self.cutoff_ = CutoffRule(self.cutoff_threshold)
        self.model_ = OutcomeModel(self.params_, self.channel_, self.cutoff_)
        self.n_features_in_ = 2
        return self

    def _terms(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValueError(f"expected outcomes with 2 columns (q_m, p_m), got {X.shape[1]}")
        return self.model_.term_values(X[:, 0], X[:, 1])

    def transform(self, X):
        """Coefficients ``lambda_0..lambda_3`` for ``input_state``, shape (n, 4)."""
        terms = self._terms(X)
        lam = self.model_.lambdas(terms, as_pauli_vector(self.input_state))
        return np.moveaxis(lam, 0, -1)

    def predict(self, X):
        """Index into ``SIGN_CANDIDATES`` of the decoder's sign choice per outcome."""
        terms = self._terms(X)
        _, R = self.model_.eigenstate_fields(terms)
        return np.argmax(self.model_.decoder_objective(R), axis=0)

    def predict_signs(self, X):
        """Sign vectors ``(s_x, s_y, s_z)`` per outcome, shape (n, 3)."""
        vectors = np.array([s.vector for s in SIGN_CANDIDATES])
        return vectors[self.predict(X)]

    def score(self, X=None, y=None):
        """Channel fidelity averaged over all outcomes (``X`` is not used)."""
        check_is_fitted(self, "model_")
        spec = QuadratureSpec() if self.quadrature is None else self.quadrature
        self.quadrature_result_ = integrate_outcomes(self.params_, self.channel_, self.cutoff_, spec)
        return self.quadrature_result_.channel_fidelity
