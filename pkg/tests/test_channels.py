import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gkploss.channels import (
    BEAMSPLITTER,
    ChannelParams,
    GaussianMoments,
    apply_amplification,
    apply_loss,
    beamsplitter_transform,
    homodyne_reduced_params,
    logical_marginal,
    noisy_peak_moments,
    noisy_peak_variance,
    symplectic_form,
)
from gkploss.gkp import SQRT_PI, GkpParams, peak_covariance, peak_mean

etas = st.floats(0.05, 1.0)
gains = st.floats(1.0, 5.0)
epss = st.floats(0.005, 1.0)
idx = st.tuples(st.integers(-30, 30), st.integers(-30, 30))


def vacuum(mu=(0.0, 0.0)):
    return GaussianMoments(np.array(mu, dtype=float), 0.5 * np.eye(2))


def test_channel_params_validation_and_presets():
    with pytest.raises(ValueError):
        ChannelParams(0.0)
    with pytest.raises(ValueError):
        ChannelParams(1.2)
    with pytest.raises(ValueError):
        ChannelParams(0.9, 0.5)
    assert ChannelParams.preset(0.8, "none").gain == 1.0
    assert ChannelParams.preset(0.8, "pre-amp").gain == 1 / 0.8
    assert ChannelParams.preset(0.8, "1.5").gain == 1.5
    assert ChannelParams.preset(0.8, 2).gain == 2.0
    with pytest.raises(ValueError):
        ChannelParams.preset(0.8, "post-amp")


def test_amplification_examples():
    x = GaussianMoments([1.0, -2.0], 0.3 * np.eye(2))
    same = apply_amplification(x, 1.0)
    np.testing.assert_array_equal(same.mean, x.mean)
    np.testing.assert_array_equal(same.covariance, x.covariance)
    out = apply_amplification(vacuum((1.0, 0.0)), 2.0)
    np.testing.assert_allclose(out.covariance, 1.5 * np.eye(2))
    np.testing.assert_allclose(out.mean, [math.sqrt(2), 0.0])
    with pytest.raises(ValueError):
        apply_amplification(x, 0.9)


@given(etas)
def test_loss_examples(eta):
    eps = 0.05
    x = GaussianMoments([0.3, 0.4], 0.5 * math.tanh(eps) * np.eye(2))
    out = apply_loss(x, eta)
    np.testing.assert_allclose(out.covariance, (0.5 * math.tanh(eps) * eta + 0.5 * (1 - eta)) * np.eye(2), rtol=1e-15)
    # vacuum is a fixed point
    np.testing.assert_allclose(apply_loss(vacuum(), eta).covariance, 0.5 * np.eye(2), rtol=1e-15)
    assert np.array_equal(apply_loss(x, 1.0).covariance, x.covariance)


@given(epss, etas, gains, idx)
def test_composition_reproduces_noisy_moments(eps, eta, gain, m):
    p, ch = GkpParams(eps), ChannelParams(eta, gain)
    x = GaussianMoments(peak_mean(p, m), peak_covariance(p))
    composed = apply_loss(apply_amplification(x, gain), eta)
    direct = noisy_peak_moments(p, ch, m)
    np.testing.assert_allclose(composed.covariance, direct.covariance, rtol=1e-15, atol=1e-15)
    np.testing.assert_allclose(composed.mean, direct.mean, rtol=1e-15, atol=1e-13)


@given(epss, etas, idx)
def test_preamp_preserves_means(eps, eta, m):
    p = GkpParams(eps)
    out = noisy_peak_moments(p, ChannelParams.preset(eta, "pre-amp"), m)
    np.testing.assert_allclose(out.mean, peak_mean(p, m), rtol=1e-15, atol=1e-13)
    assert math.isclose(out.covariance[0, 0], 0.5 * math.tanh(eps) + 1 - eta, rel_tol=1e-12, abs_tol=1e-15)


def test_noisy_moments_examples():
    p = GkpParams(0.05)
    ident = noisy_peak_moments(p, ChannelParams(1.0), (2, -4))
    np.testing.assert_array_equal(ident.covariance, peak_covariance(p))
    np.testing.assert_allclose(ident.mean, peak_mean(p, (2, -4)))
    lossy = noisy_peak_moments(p, ChannelParams(0.7), (0, 0))
    assert math.isclose(lossy.covariance[0, 0], 0.16749, abs_tol=5e-6)


@given(epss, st.floats(0.05, 0.999), gains, gains)
def test_variance_monotone_in_gain(eps, eta, g1, g2):
    if g1 == g2:
        return
    lo, hi = sorted((g1, g2))
    p = GkpParams(eps)
    assert noisy_peak_variance(p, ChannelParams(eta, lo)) < noisy_peak_variance(p, ChannelParams(eta, hi))
    assert (homodyne_reduced_params(p, ChannelParams(eta, lo)).sigma_prime
            < homodyne_reduced_params(p, ChannelParams(eta, hi)).sigma_prime)


@given(epss, etas)
def test_homodyne_params_examples(eps, eta):
    p = GkpParams(eps)
    t = math.tanh(eps)
    assert math.isclose(homodyne_reduced_params(p, ChannelParams(1.0)).sigma_prime, 0.5 * t, rel_tol=1e-14)
    pre = homodyne_reduced_params(p, ChannelParams.preset(eta, "pre-amp"))
    assert math.isclose(pre.sigma_prime, 0.5 * (t + 1 - eta), rel_tol=1e-12, abs_tol=1e-15)
    assert pre.mean(0, 0) == 0.0


def test_homodyne_matches_beamsplitter():
    # the (q1, p2) block of the mixed pair is diagonal with entries Sigma'
    p, ch = GkpParams(0.1), ChannelParams(0.8, 1.1)
    out = beamsplitter_transform(noisy_peak_moments(p, ch, (1, 2)), GaussianMoments(peak_mean(p, (3, -1)), peak_covariance(p)))
    hp = homodyne_reduced_params(p, ch)
    sub = out.covariance[np.ix_([0, 3], [0, 3])]
    np.testing.assert_allclose(sub, hp.sigma_prime * np.eye(2), atol=1e-15)
    # mean of q1 regroups to mu_scale * (sqrt(eta G) n1 + n2) with n = m(1) +- m(2)
    np.testing.assert_allclose(out.mean[0], (math.sqrt(0.88) * peak_mean(p, (1, 2))[0] + peak_mean(p, (3, -1))[0]) / math.sqrt(2))


def test_beamsplitter_examples():
    s = 0.3 * np.eye(2)
    out = beamsplitter_transform(GaussianMoments([SQRT_PI, 0], s), GaussianMoments([0, 0], s))
    np.testing.assert_allclose(out.covariance, np.kron(np.eye(2), s), atol=1e-16)
    np.testing.assert_allclose(out.mean, [SQRT_PI / math.sqrt(2), 0, -SQRT_PI / math.sqrt(2), 0])
    a, b = np.diag([0.2, 0.4]), np.diag([0.7, 0.1])
    out = beamsplitter_transform(GaussianMoments([0, 0], a), GaussianMoments([0, 0], b))
    np.testing.assert_allclose(out.covariance[:2, 2:], (b - a) / 2, atol=1e-16)
    assert out.covariance[0, 3] == 0.0
    with pytest.raises(ValueError):
        beamsplitter_transform(GaussianMoments(np.zeros(4), np.eye(4)), GaussianMoments([0, 0], s))


def test_beamsplitter_is_symplectic():
    om = symplectic_form(2)
    np.testing.assert_allclose(BEAMSPLITTER @ om @ BEAMSPLITTER.T, om, atol=1e-15)


def test_moments_validation():
    with pytest.raises(ValueError):
        GaussianMoments([0, 0], [[1, 0.5], [0, 1]])
    with pytest.raises(ValueError):
        GaussianMoments([0, 0], -np.eye(2))
    with pytest.raises(ValueError):
        GaussianMoments([0, 0, 0], np.eye(2))


@pytest.mark.parametrize("logical", [0, 1])
@pytest.mark.parametrize("mode", ["none", "pre-amp"])
def test_logical_marginal_normalized(logical, mode):
    mix = logical_marginal(logical, GkpParams(0.05), ChannelParams.preset(0.7, mode))
    assert math.isclose(mix.total_weight(), 1.0, rel_tol=1e-12)


def test_logical_marginal_lossless_peaks():
    p = GkpParams(0.05)
    mix = logical_marginal(0, p, ChannelParams(1.0))
    main = mix.means[mix.weights > 1e-3 * mix.weights.max(), 0]
    spacing = 2 * SQRT_PI / math.cosh(0.05)
    np.testing.assert_allclose(main / spacing, np.round(main / spacing), atol=1e-12)
    assert math.isclose(mix.covariance[0, 0], 0.5 * math.tanh(0.05))
    with pytest.raises(ValueError):
        logical_marginal(2, p, ChannelParams(1.0))
