import math

import numpy as np
import pytest

from gkploss.channels import ChannelParams
from gkploss.gkp import CutoffRule, GkpParams
from gkploss.quadrature import (
    QuadratureError,
    QuadratureSpec,
    channel_fidelity,
    gauss_lobatto,
    integrate_outcomes,
    mean_fidelity,
)


@pytest.fixture(scope="module")
def result_005():
    return integrate_outcomes(GkpParams(0.05), ChannelParams(0.9), extra_input=(0.6, 0.0, 0.8))


@pytest.fixture(scope="module")
def result_03():
    return integrate_outcomes(GkpParams(0.3), ChannelParams(0.9))


def test_gauss_lobatto_exactness():
    x, w = gauss_lobatto(7)
    assert x[0] == -1 and x[-1] == 1
    for deg in range(0, 10):
        exact = 0.0 if deg % 2 else 2.0 / (deg + 1)
        assert math.isclose(np.dot(w, x ** deg), exact, abs_tol=1e-14)


def test_spec_validation_and_refine():
    with pytest.raises(ValueError):
        QuadratureSpec(order=2)
    with pytest.raises(ValueError):
        QuadratureSpec(points_per_std=0)
    with pytest.raises(ValueError):
        QuadratureSpec(tail_tol=-1)
    with pytest.raises(ValueError):
        QuadratureSpec(max_half_width=0)
    spec = QuadratureSpec()
    assert spec.refined().points_per_std == 2 * spec.points_per_std
    assert spec.describe()["order"] == spec.order


def test_normalization_and_bounds(result_005):
    r = result_005
    assert r.converged
    assert r.normalization_residual < 1e-8
    assert np.all(r.mean_fidelities <= 1 + 1e-9)
    assert r.extra_fidelity <= 1 + 1e-9
    assert math.isclose(r.channel_fidelity, math.fsum(r.mean_fidelities) / 6)
    assert r.tail_mass < QuadratureSpec().tail_tol


def test_sign_flip_pairs(result_005, result_03):
    # +z and -z differ only through the finite-energy envelope, so the gap closes with eps
    small, large = result_005.mean_fidelities, result_03.mean_fidelities
    for f in (small, large):
        # y eigenstates are exact mirror images
        assert abs(f[2] - f[3]) < 1e-12
    for i in (0, 4):
        assert abs(small[i] - small[i + 1]) < 1e-5
        assert abs(small[i] - small[i + 1]) < abs(large[i] - large[i + 1])
    # x and z play symmetric roles on the square lattice
    np.testing.assert_allclose(small[:2], small[4:], atol=1e-12)


def test_mean_fidelity_dispatch(result_005):
    p, ch = GkpParams(0.05), ChannelParams(0.9)
    assert mean_fidelity((0, 0, 1), p, ch) == result_005.mean_fidelities[4]
    f_mixed = mean_fidelity((0.6, 0, 0.8), p, ch)
    assert f_mixed == result_005.extra_fidelity
    assert 0.5 < f_mixed <= 1.0


def test_large_epsilon_destroys_information():
    assert channel_fidelity(GkpParams(1.0), ChannelParams(1.0)) < 0.8


def test_half_width_cap_flags_non_convergence():
    spec = QuadratureSpec(max_half_width=3.0)
    r = integrate_outcomes(GkpParams(0.2), ChannelParams(0.9), quadrature=spec)
    assert not r.converged
    assert r.half_width == 3.0


def test_shell_limit_raises():
    spec = QuadratureSpec(max_shells=0, start_width=0.1)
    with pytest.raises(QuadratureError):
        integrate_outcomes(GkpParams(0.2), ChannelParams(0.9), quadrature=spec)


def test_deterministic():
    a = integrate_outcomes(GkpParams(0.05), ChannelParams(0.8, 1.25))
    b = integrate_outcomes(GkpParams(0.05), ChannelParams(0.8, 1.25))
    np.testing.assert_array_equal(a.mean_fidelities, b.mean_fidelities)


def test_cutoff_convergence_fast():
    p, ch = GkpParams(0.05), ChannelParams(0.8)
    base = channel_fidelity(p, ch)
    assert abs(channel_fidelity(p, ch, CutoffRule(30)) - base) < 1e-9
