"""Propagation-math tests, including the reference numeric example."""

import math

import numpy as np
import pytest

from uavharvest.channel import (ChannelError, ChannelParams, DegenerateFitError,
                                FitError, channel_gain, elevation_angle,
                                expected_rate, expected_rate_jensen,
                                expected_rate_lb, fit_logistic,
                                horizontal_surrogate, los_probability,
                                params_from_fit, psi, rate_conditional,
                                vertical_surrogate)
from uavharvest.city import LosSampleTable
from uavharvest import presets


def db(x):
    return 10.0 * math.log10(x)


# Geometry that realizes d = 50 m with LoS probability exactly 0.5 under the
# urban logistic parameters (theta solving offset + scale * sigmoid = 0.5).
def _half_prob_geometry(p: ChannelParams):
    x = -math.log(p.logis_scale / (0.5 - p.logis_offset) - 1.0)
    theta = (x - p.logis_bias) / p.logis_slope
    z = 50.0 * math.sin(math.radians(theta))
    u = 50.0 * math.cos(math.radians(theta))
    return np.zeros(2), z, np.array([u, 0.0])


def test_elevation_angle_basics():
    assert elevation_angle((0.0, 0.0), 50.0, (0.0, 0.0)) == pytest.approx(90.0)
    assert elevation_angle((0.0, 0.0), 50.0, (50.0, 0.0)) == pytest.approx(45.0)
    assert elevation_angle((0.0, 0.0), 50.0, (86.6025, 0.0)) == pytest.approx(30.0, abs=1e-4)
    with pytest.raises(ChannelError):
        elevation_angle((0.0, 0.0), 0.0, (1.0, 1.0))


def test_logistic_midpoint_identity(urban):
    theta_mid = -urban.logis_bias / urban.logis_slope       # sigmoid argument 0
    assert theta_mid == pytest.approx(9.719, abs=1e-3)
    want = urban.logis_offset + urban.logis_scale / 2.0
    assert los_probability(theta_mid, urban) == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(0.185, abs=1e-12)


def test_logistic_at_ninety_degrees(urban):
    assert los_probability(90.0, urban) == pytest.approx(0.9634, abs=1e-4)


def test_logistic_saturates_to_one():
    p = ChannelParams(logis_bias=-0.5, logis_slope=5.0, logis_offset=0.0,
                      logis_scale=1.0, ref_gain=1e-6, nlos_atten=0.01,
                      pathloss_los=2.5, pathloss_nlos=3.5, snr_gap=1.0,
                      noise_power=1e-13, tx_power=(0.1,))
    assert los_probability(89.0, p) == pytest.approx(1.0, abs=1e-9)


def test_logistic_strictly_increasing(urban):
    thetas = np.linspace(0.5, 90.0, 400)
    vals = los_probability(thetas, urban)
    assert np.all(np.diff(vals) > 0)


def test_reference_gains_in_db(urban):
    assert db(channel_gain(1.0, True, urban)) == pytest.approx(-60.0, abs=1e-9)
    assert db(channel_gain(50.0, True, urban)) == pytest.approx(-102.5, abs=0.1)
    assert db(channel_gain(50.0, False, urban)) == pytest.approx(-139.5, abs=0.1)
    with pytest.raises(ChannelError):
        channel_gain(0.0, True, urban)


def test_reference_conditional_rates(urban):
    gamma = 10.0 ** 6.0                                     # 60 dB
    assert rate_conditional(50.0, True, gamma, urban) == pytest.approx(5.85, abs=0.01)
    assert rate_conditional(50.0, False, gamma, urban) == pytest.approx(0.016, abs=0.01)
    assert rate_conditional(50.0, True, 1e-12, urban) == pytest.approx(0.0, abs=1e-10)


def test_reference_expected_rates(urban):
    gamma = 1e6
    q, z, w = _half_prob_geometry(urban)
    assert expected_rate(q, z, w, gamma, urban) == pytest.approx(2.93, abs=0.01)
    assert expected_rate_lb(q, z, w, gamma, urban) == pytest.approx(2.92, abs=0.01)
    assert expected_rate_jensen(q, z, w, gamma, urban) == pytest.approx(4.87, abs=0.01)


def test_expected_rate_degenerate_probabilities(urban):
    gamma = 1e6
    certain = urban.with_certain_los()
    q, w = np.zeros(2), np.array([30.0, 40.0])              # d = sqrt(2500+z^2)
    z = 10.0
    d = math.sqrt(2500.0 + 100.0)
    assert expected_rate(q, z, w, gamma, certain) == pytest.approx(
        rate_conditional(d, True, gamma, certain), rel=1e-12)
    assert expected_rate_jensen(q, z, w, gamma, certain) == pytest.approx(
        rate_conditional(d, True, gamma, certain), rel=1e-12)
    assert expected_rate_lb(q, z, w, gamma, certain) == pytest.approx(
        rate_conditional(d, True, gamma, certain), rel=1e-12)


def test_bound_ordering_everywhere(urban):
    rng = np.random.default_rng(0)
    gamma = urban.link_snr[0]
    for _ in range(2000):
        q = rng.uniform(0, 300, 2)
        w = rng.uniform(0, 300, 2)
        z = rng.uniform(1.0, 300.0)
        lb = expected_rate_lb(q, z, w, gamma, urban)
        mid = expected_rate(q, z, w, gamma, urban)
        ub = expected_rate_jensen(q, z, w, gamma, urban)
        assert lb <= mid + 1e-12
        assert mid <= ub + 1e-12


def test_altitude_tradeoff_has_interior_maximum(urban):
    # At a fixed horizontal offset the LoS-only bound first grows with
    # altitude (angle gain) and then falls (path loss): interior argmax.
    gamma = urban.link_snr[0]
    zs = np.linspace(1.0, 600.0, 1200)
    vals = expected_rate_lb(np.zeros(2), zs, np.array([100.0, 0.0]), gamma, urban)
    imax = int(np.argmax(vals))
    assert 0 < imax < zs.size - 1
    assert vals[imax] > vals[0] + 1e-3 and vals[imax] > vals[-1] + 1e-3


def test_psi_reduces_to_rate_at_unit_x():
    val = psi(1.0, 2500.0, 1e6, 2.5, -0.63, 1.63)
    assert val == pytest.approx(math.log2(1.0 + 1e6 * 2500.0 ** -1.25), rel=1e-12)


def _psi_fd_eigmin(x, y, gamma, alpha, offset, scale):
    hx = 1e-4 * (1.0 + abs(x))
    hy = 1e-4 * (1.0 + abs(y))
    f = lambda a, b: psi(a, b, gamma, alpha, offset, scale)
    fxx = (f(x + hx, y) - 2 * f(x, y) + f(x - hx, y)) / hx ** 2
    fyy = (f(x, y + hy) - 2 * f(x, y) + f(x, y - hy)) / hy ** 2
    fxy = (f(x + hx, y + hy) - f(x + hx, y - hy)
           - f(x - hx, y + hy) + f(x - hx, y - hy)) / (4 * hx * hy)
    tr = fxx + fyy
    det = fxx * fyy - fxy ** 2
    return 0.5 * (tr - math.sqrt(max(tr ** 2 - 4 * det, 0.0)))


def _geometry_sample(rng, p, z_lo=50.0):
    """(x, y) realized by an actual flight geometry within the altitude
    corridor. For a negative-offset curve the kernel is only convex where
    offset + scale/x stays clear of zero, and coupling x and y through
    (altitude, horizontal offset) keeps samples in that region; fully
    decoupled (x, y) draws can pair grazing angles with sub-meter distances,
    where the kernel genuinely loses joint convexity.
    """
    z = rng.uniform(z_lo, 300.0)
    u = rng.uniform(0.0, 1000.0)
    theta = math.degrees(math.atan2(z, u))
    x = 1.0 + math.exp(-(p.logis_bias + p.logis_slope * theta))
    return x, u ** 2 + z ** 2, theta


def test_psi_convexity_by_finite_difference_hessian(urban):
    rng = np.random.default_rng(42)
    for _ in range(300):
        x, y, _ = _geometry_sample(rng, urban)
        gamma = 10.0 ** rng.uniform(0.0, 6.0)
        alpha = rng.uniform(2.0, 6.0)
        eig = _psi_fd_eigmin(x, y, gamma, alpha, urban.logis_offset, urban.logis_scale)
        assert eig >= -1e-6


def test_psi_midpoint_convexity_nonnegative_offset():
    # With a nonnegative offset the kernel is jointly convex everywhere.
    rng = np.random.default_rng(7)
    for offset, scale in ((0.0, 1.0), (0.2, 0.8)):
        for _ in range(500):
            x1, x2 = rng.uniform(1.0, 3.0, 2)
            y1, y2 = rng.uniform(1.0, 1000.0, 2) ** 2
            gamma = 10.0 ** rng.uniform(0.0, 6.0)
            alpha = rng.uniform(2.0, 6.0)
            mid = psi((x1 + x2) / 2, (y1 + y2) / 2, gamma, alpha, offset, scale)
            avg = 0.5 * (psi(x1, y1, gamma, alpha, offset, scale)
                         + psi(x2, y2, gamma, alpha, offset, scale))
            assert mid <= avg + 1e-10


def test_psi_midpoint_convexity_urban(urban):
    # The urban curve's negative offset voids joint convexity near grazing
    # angles; away from that band (both endpoints at >= 20 degrees elevation)
    # the midpoint inequality holds cleanly.
    rng = np.random.default_rng(7)
    done = 0
    while done < 1000:
        x1, y1, t1 = _geometry_sample(rng, urban)
        x2, y2, t2 = _geometry_sample(rng, urban)
        if min(t1, t2) < 20.0:
            continue
        gamma = 10.0 ** rng.uniform(0.0, 6.0)
        alpha = rng.uniform(2.0, 6.0)
        mid = psi((x1 + x2) / 2, (y1 + y2) / 2, gamma, alpha,
                  urban.logis_offset, urban.logis_scale)
        avg = 0.5 * (psi(x1, y1, gamma, alpha, urban.logis_offset, urban.logis_scale)
                     + psi(x2, y2, gamma, alpha, urban.logis_offset, urban.logis_scale))
        assert mid <= avg + 1e-10
        done += 1


def test_horizontal_surrogate_tight_at_expansion(urban):
    gamma = urban.link_snr[0]
    rng = np.random.default_rng(3)
    for _ in range(50):
        q_hat = rng.uniform(0, 300, 2)
        w = rng.uniform(0, 300, 2)
        z = rng.uniform(20.0, 300.0)
        sur = horizontal_surrogate(q_hat, z, w, gamma, urban)
        truth = expected_rate_lb(q_hat, z, w, gamma, urban)
        assert sur.evaluate(q_hat, w, urban) == pytest.approx(truth, rel=1e-12)
        assert sur.exp_coeff >= 0 and sur.sqdist_coeff >= 0 and sur.angle_slope > 0


def test_horizontal_surrogate_dominated_by_truth(urban):
    gamma = urban.link_snr[0]
    rng = np.random.default_rng(5)
    for _ in range(30):
        q_hat = rng.uniform(0, 300, 2)
        w = rng.uniform(0, 300, 2)
        z = rng.uniform(20.0, 300.0)
        sur = horizontal_surrogate(q_hat, z, w, gamma, urban)
        q = w + rng.uniform(-600, 600, (500, 2))
        bound = sur.evaluate(q, w, urban)
        truth = expected_rate_lb(q, z, w, gamma, urban)
        assert np.all(bound <= truth + 1e-9)


def test_angle_bound_dominated_by_arctan(urban):
    gamma = urban.link_snr[0]
    rng = np.random.default_rng(9)
    for _ in range(30):
        q_hat = rng.uniform(0, 300, 2)
        w = rng.uniform(0, 300, 2)
        z = rng.uniform(20.0, 300.0)
        sur = horizontal_surrogate(q_hat, z, w, gamma, urban)
        u = rng.uniform(1e-3, 800.0, 500)
        assert np.all(sur.angle_bound_rad(u) <= np.arctan(z / u) + 1e-12)
        u_hat = max(float(np.linalg.norm(q_hat - w)), 1e-3)
        assert sur.angle_bound_rad(u_hat) == pytest.approx(math.atan2(z, u_hat), rel=1e-12)


def test_vertical_surrogate_bound_and_tightness(urban):
    gamma = urban.link_snr[0]
    rng = np.random.default_rng(11)
    for _ in range(30):
        q = rng.uniform(0, 300, 2)
        w = rng.uniform(0, 300, 2)
        z_hat = rng.uniform(20.0, 300.0)
        sur = vertical_surrogate(q, z_hat, w, gamma, urban)
        truth_at_ref = expected_rate_lb(q, z_hat, w, gamma, urban)
        assert sur.evaluate(z_hat, urban) == pytest.approx(truth_at_ref, rel=1e-12)
        zs = rng.uniform(1.0, 500.0, 400)
        assert np.all(sur.evaluate(zs, urban)
                      <= expected_rate_lb(q, zs, w, gamma, urban) + 1e-9)


def test_fit_recovers_noiseless_parameters(urban):
    thetas = np.arange(5.0, 91.0, 5.0)
    probs = los_probability(thetas, urban)
    table = LosSampleTable(tuple(thetas), tuple(probs), (1000,) * thetas.size)
    fit = fit_logistic(table)
    assert fit.logis_bias == pytest.approx(urban.logis_bias, abs=1e-4)
    assert fit.logis_slope == pytest.approx(urban.logis_slope, abs=1e-4)
    assert fit.logis_offset == pytest.approx(urban.logis_offset, abs=1e-4)
    assert fit.logis_scale == pytest.approx(urban.logis_scale, abs=1e-4)
    assert fit.r_squared > 1.0 - 1e-9


def test_fit_flags_constant_table():
    thetas = tuple(np.arange(5.0, 91.0, 5.0))
    table = LosSampleTable(thetas, (1.0,) * len(thetas), (100,) * len(thetas))
    with pytest.raises(DegenerateFitError):
        fit_logistic(table)


def test_fit_needs_four_bins():
    table = LosSampleTable((10.0, 20.0, 30.0), (0.2, 0.5, 0.7), (10, 10, 10))
    with pytest.raises(FitError):
        fit_logistic(table)


def test_params_json_round_trip(urban):
    again = ChannelParams.from_json(urban.to_json())
    assert again == urban


def test_params_validation():
    with pytest.raises(ChannelError):
        ChannelParams(logis_bias=-0.5, logis_slope=0.05, logis_offset=-0.5,
                      logis_scale=1.6, ref_gain=1e-6, nlos_atten=0.01,
                      pathloss_los=2.5, pathloss_nlos=3.5, snr_gap=1.0,
                      noise_power=1e-13, tx_power=(0.1,))   # offset+scale != 1
    with pytest.raises(ChannelError):
        ChannelParams(logis_bias=-0.5, logis_slope=0.05, logis_offset=-0.63,
                      logis_scale=1.63, ref_gain=1e-6, nlos_atten=0.01,
                      pathloss_los=3.5, pathloss_nlos=2.5, snr_gap=1.0,
                      noise_power=1e-13, tx_power=(0.1,))   # exponents swapped


def test_link_snr_matches_reference_budget(urban):
    # -60 dB + 20 dBm - (-109 dBm) - 8.2 dB = 60.8 dB
    assert db(urban.link_snr[0]) == pytest.approx(60.8, abs=1e-9)


def test_params_from_fit_and_certain_los(urban):
    thetas = np.arange(5.0, 91.0, 5.0)
    table = LosSampleTable(tuple(thetas), tuple(los_probability(thetas, urban)),
                           (100,) * thetas.size)
    fitted = params_from_fit(fit_logistic(table), urban)
    assert fitted.ref_gain == urban.ref_gain
    certain = urban.with_certain_los()
    assert los_probability(1.0, certain) == pytest.approx(1.0)
    assert los_probability(89.0, certain) == pytest.approx(1.0)
