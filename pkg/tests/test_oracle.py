"""Brute-force references, and the frozen values they produce.

The frozen numbers below were computed once with the oracle and are kept as
regression anchors for both the oracle and the factorized engine.
"""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gkploss.channels import ChannelParams, logical_marginal
from gkploss.gkp import CutoffRule, GkpParams, trace_sigma, traces
from gkploss.oracle import (
    amplifier_kraus_apply,
    build_gkp_number_basis,
    hermite_functions,
    loss_kraus_apply,
    marginal_after_loss,
    naive_lambda,
    naive_lambda_vector,
    number_basis_traces,
)
from gkploss.qec import lambda_vector

FROZEN_TRACES = {
    0.1: [1.0033311132254813e01, 7.5887659846887992e-03, 0.0, 7.5887659846888330e-03],
    0.2: [5.066492041823717, 0.1894904828715043, 0.0, 0.18949048287150363],
}

FROZEN_OUTCOMES = np.array([[0.0, 0.0], [0.7, -1.3], [2.5, 0.4]])
# epsilon = 0.1, eta = 0.8, G = 1/0.8
FROZEN_LAMBDA = {
    (0, 0, 1): [
        [5.4805728469792927e-03, 1.0885073063970574e-04, 0.0, 5.3791124377770448e-03],
        [2.3168932051927972e-03, -3.0775515032030454e-07, 1.6374205837409376e-04, -5.2337251699092243e-04],
        [1.8007490393780303e-03, 3.4203517283357781e-05, 1.0560831633568662e-06, 1.7589361494891444e-03],
    ],
    (1, 0, 0): [
        [5.4805728469792927e-03, 5.3791124377770448e-03, 0.0, 1.0885073063970561e-04],
        [2.2988643530690756e-03, -2.2555040278609299e-03, -1.4703404997584795e-07, 1.7721096973401228e-05],
        [1.9283965444154127e-03, 1.4832796773137343e-03, -7.5745756075762655e-07, -9.3443987754024535e-05],
    ],
    (0, 1, 0): [
        [5.3768869220146166e-03, 1.0783119494302318e-04, 5.1757298250643272e-03, 1.0783119494302313e-04],
        [2.3024913381726841e-03, -2.0353680750776479e-06, 5.3298718684078455e-04, 1.8002017139483414e-04],
        [1.8943839310258412e-03, 3.4713139265751496e-05, 1.4169235649107415e-03, -9.1216000455103432e-05],
    ],
}


def _close(a, b, rel=1e-8, floor=1e-12):
    a, b = np.asarray(a), np.asarray(b)
    return np.all(np.abs(a - b) <= np.maximum(rel * np.abs(b), floor))


@pytest.mark.parametrize("eps", sorted(FROZEN_TRACES))
def test_number_basis_traces_frozen(eps):
    got = number_basis_traces(GkpParams(eps), 200)
    np.testing.assert_allclose(got, FROZEN_TRACES[eps], rtol=1e-10, atol=1e-15)


@pytest.mark.parametrize("a_in", sorted(FROZEN_LAMBDA))
def test_naive_lambda_frozen(a_in):
    got = naive_lambda_vector(FROZEN_OUTCOMES, a_in, GkpParams(0.1), ChannelParams(0.8, 1 / 0.8))
    assert _close(got, FROZEN_LAMBDA[a_in], rel=1e-10, floor=1e-15)


@pytest.mark.parametrize("a_in", sorted(FROZEN_LAMBDA))
def test_engine_matches_frozen_oracle(a_in):
    got = lambda_vector(FROZEN_OUTCOMES, a_in, GkpParams(0.1), ChannelParams(0.8, 1 / 0.8))
    assert _close(got, FROZEN_LAMBDA[a_in])


def test_naive_lambda_scalar_and_index_checks():
    p, ch = GkpParams(0.1), ChannelParams(0.8, 1 / 0.8)
    val = naive_lambda(3, (0.7, -1.3), (0, 0, 1), p, ch)
    assert isinstance(val, float)
    assert math.isclose(val, FROZEN_LAMBDA[(0, 0, 1)][1][3], rel_tol=1e-10)
    with pytest.raises(ValueError):
        naive_lambda(4, (0.0, 0.0), (0, 0, 1), p, ch)


def test_naive_lambda_rejects_empty_pairs():
    # a threshold this small keeps only m = (0, 0), so class M_1 is empty
    with pytest.raises(ValueError, match="no lattice pairs"):
        naive_lambda(0, (0.0, 0.0), (0, 0, 1), GkpParams(0.1), ChannelParams(1.0), CutoffRule(0.05))


def test_naive_lambda2_drops_out_of_density():
    p, ch = GkpParams(0.2), ChannelParams(0.9)
    lv = naive_lambda_vector(FROZEN_OUTCOMES, (0, 1, 0), p, ch)
    tr = traces(p)
    assert tr[2] == 0.0
    dens = lv @ tr
    lv2 = lv.copy()
    lv2[:, 2] *= 1e6
    np.testing.assert_allclose(lv2 @ tr, dens, rtol=1e-14)


@pytest.mark.parametrize("a_in", [(0, 0, 1), (1, 0, 0), (0.6, 0, -0.8)])
def test_naive_lambda_reflection_without_y(a_in):
    # with no Y component, lambda_2 is odd and the rest even under q -> -q (and p -> -p)
    p, ch = GkpParams(0.1), ChannelParams(0.9)
    pts = np.array([[1.1, 0.3], [0.4, -2.0], [-2.7, 1.6]])
    lv = naive_lambda_vector(pts, a_in, p, ch)
    parity = np.array([1.0, 1.0, -1.0, 1.0])
    for flip in ([-1, 1], [1, -1]):
        np.testing.assert_allclose(naive_lambda_vector(pts * flip, a_in, p, ch), lv * parity, rtol=1e-10, atol=1e-16)


def test_naive_lambda_y_input_breaks_reflection():
    p, ch = GkpParams(0.1), ChannelParams(0.9)
    pts = np.array([[1.1, 0.3]])
    lv = naive_lambda_vector(pts, (0, 1, 0), p, ch)
    mirrored = naive_lambda_vector(pts * [-1, 1], (0, 1, 0), p, ch)
    assert not np.allclose(np.abs(lv), np.abs(mirrored), rtol=1e-3)


@pytest.mark.parametrize("eps", [0.1, 0.2])
def test_number_basis_traces_match_gaussian_sum(eps):
    p = GkpParams(eps)
    nb = number_basis_traces(p, 200)
    for k in (0, 1, 3):
        assert abs(nb[k] - trace_sigma(k, p)) < 1e-6
    assert nb[2] == 0.0


def test_number_basis_overlap_small_positive():
    ov = {}
    for eps in (0.2, 0.1):
        c0 = build_gkp_number_basis(0, GkpParams(eps), 200).coefficients
        c1 = build_gkp_number_basis(1, GkpParams(eps), 200).coefficients
        ov[eps] = c0 @ c1 / math.sqrt((c0 @ c0) * (c1 @ c1))
    assert 0 < ov[0.2] < 0.1
    assert 0 < ov[0.1] < ov[0.2]


def test_logical_zero_has_even_support():
    c = build_gkp_number_basis(0, GkpParams(0.3), 200).coefficients
    assert np.abs(c[1::2]).max() < 1e-12 * np.abs(c[0::2]).max()


def test_number_basis_tail_violation():
    with pytest.raises(ValueError, match="too small"):
        build_gkp_number_basis(0, GkpParams(0.02), 50)
    with pytest.raises(ValueError):
        build_gkp_number_basis(2, GkpParams(0.2), 50)


def test_hermite_functions_orthonormal():
    x = np.linspace(-30, 30, 12001)
    psi = hermite_functions(x, 120)
    gram = psi @ psi.T * (x[1] - x[0])
    np.testing.assert_allclose(gram, np.eye(121), atol=1e-10)


def test_hermite_functions_no_overflow_far_out():
    psi = hermite_functions(np.array([0.0, 5.0, 40.0]), 600)
    assert np.all(np.isfinite(psi))
    assert psi[0, 2] == 0.0 or psi[0, 2] < 1e-300


@given(st.floats(0.3, 1.0), st.integers(0, 3))
def test_loss_kraus_preserves_trace(eta, seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=40) * np.exp(-0.3 * np.arange(40))
    rho = np.outer(c, c) / (c @ c)
    out = loss_kraus_apply(rho, eta)
    assert abs(np.trace(out) - 1.0) < 1e-12
    assert np.all(np.linalg.eigvalsh(out) > -1e-12)


@given(st.floats(1.0, 2.0))
def test_amplifier_kraus_preserves_trace(gain):
    c = np.exp(-0.5 * np.arange(30))
    rho = np.outer(c, c) / (c @ c)
    out = amplifier_kraus_apply(rho, gain)
    assert abs(np.trace(out) - 1.0) < 1e-10


def test_vacuum_is_loss_fixed_point():
    rho = np.zeros((5, 5))
    rho[0, 0] = 1.0
    np.testing.assert_array_equal(loss_kraus_apply(rho, 0.3), rho)


def test_marginal_identity_channel_matches_mixture():
    p = GkpParams(0.1)
    q = np.linspace(-8, 8, 801)
    dens, tr = marginal_after_loss(0, p, ChannelParams(1.0), 200, q)
    assert abs(tr - 1.0) < 1e-8
    ref = logical_marginal(0, p, ChannelParams(1.0))(q)
    assert np.abs(dens - ref).max() < 1e-6


def test_marginal_loss_matches_mixture():
    p, ch = GkpParams(0.1), ChannelParams(0.7, 1 / 0.7)
    q = np.linspace(-8, 8, 401)
    dens, tr = marginal_after_loss(0, p, ch, 200, q)
    assert abs(tr - 1.0) < 1e-8
    ref = logical_marginal(0, p, ch)(q)
    assert np.abs(dens - ref).max() < 1e-6
