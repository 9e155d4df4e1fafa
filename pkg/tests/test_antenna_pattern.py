import math

import numpy as np
import pytest
from scipy import integrate

from src.models.pattern import RadiationPattern
from src.services.antenna_pattern import (
    boresight_gain,
    compute_integrals,
    mean_gain,
    normalize_for_unit_ea,
    pattern_gain,
    sector_gains,
    wrap_angle,
)
from src.services.errors import DomainError


@pytest.fixture
def pattern():
    return RadiationPattern.from_degrees(8, 25.0, side_lobe_l=0.01)


def _circle_average(func):
    value, _ = integrate.quad(func, 0.0, 2.0 * math.pi, points=[math.pi], epsabs=0.0, epsrel=1e-11, limit=400)
    return value / (2.0 * math.pi)


@pytest.mark.parametrize('phi, expected', [
    (0.0, 0.0),
    (math.pi, -math.pi),
    (-math.pi, -math.pi),
    (3.0 * math.pi, -math.pi),
    (2.5 * math.pi, 0.5 * math.pi),
    (-0.25 * math.pi, -0.25 * math.pi),
])
def test_wrap_angle(phi, expected):
    assert wrap_angle(phi) == pytest.approx(expected, abs=1e-12)


def test_wrap_angle_range():
    wrapped = wrap_angle(np.linspace(-20.0, 20.0, 2001))
    assert np.all(wrapped >= -math.pi)
    assert np.all(wrapped < math.pi)


def test_boresight_and_half_power(pattern):
    axis = pattern.axis(3)
    assert pattern_gain(pattern, 3, axis) == pytest.approx(pattern.a1 + pattern.a0)
    assert pattern_gain(pattern, 3, axis + pattern.phi_3db) == pytest.approx(pattern.a1 + pattern.a0 / 2.0)
    assert boresight_gain(pattern) == pytest.approx(pattern.a1 + pattern.a0)


def test_gain_bounds(pattern):
    phi = np.linspace(-math.pi, math.pi, 721)
    for m in range(1, pattern.m_sectors + 1):
        gains = pattern_gain(pattern, m, phi)
        assert np.all(gains >= pattern.a1)
        assert np.all(gains <= pattern.a1 + pattern.a0)


def test_sector_index_range(pattern):
    with pytest.raises(IndexError):
        pattern_gain(pattern, 0, 0.0)
    with pytest.raises(IndexError):
        pattern_gain(pattern, 9, 0.0)


def test_sector_gains_rotate(pattern):
    gains = sector_gains(pattern, pattern.axis(2))
    assert gains.shape == (8,)
    assert int(np.argmax(gains)) == 1


def test_invalid_pattern():
    with pytest.raises(DomainError):
        RadiationPattern.from_degrees(8, 0.0)
    with pytest.raises(DomainError):
        RadiationPattern.from_degrees(8, 25.0, side_lobe_l=1.5)
    with pytest.raises(DomainError):
        RadiationPattern(m_sectors=0, phi_3db=0.3, side_lobe_l=0.01, a0=1.0)


def test_normalization_gives_unit_mean(pattern):
    unit = normalize_for_unit_ea(pattern)
    assert _circle_average(lambda t: pattern_gain(unit, 1, t)) == pytest.approx(1.0, rel=1e-8)
    assert mean_gain(unit) == pytest.approx(1.0, rel=1e-9)


def test_normalization_is_scale_invariant(pattern):
    direct = normalize_for_unit_ea(pattern)
    rescaled = normalize_for_unit_ea(pattern.scaled(3.7))
    assert rescaled.a0 == pytest.approx(direct.a0, rel=1e-9)


def test_narrower_beams_have_higher_boresight_gain():
    widths = [15.0, 20.0, 25.0, 30.0, 40.0]
    peaks = [boresight_gain(normalize_for_unit_ea(RadiationPattern.from_degrees(8, w))) for w in widths]
    assert all(a > b for a, b in zip(peaks, peaks[1:]))


def test_omni_pattern():
    omni = RadiationPattern.omnidirectional(8)
    assert pattern_gain(omni, 4, 1.234) == 1.0
    np.testing.assert_array_equal(pattern_gain(omni, 1, np.zeros(3)), np.ones(3))
    assert normalize_for_unit_ea(omni) is omni
    ints = compute_integrals(omni)
    assert ints.e_a == 1.0 and ints.e_b == 1.0
    np.testing.assert_array_equal(ints.e_cross, np.ones((8, 8)))


def test_integrals_against_quadrature(pattern):
    unit = normalize_for_unit_ea(pattern)
    ints = compute_integrals(unit)
    assert ints.e_a == pytest.approx(1.0, rel=1e-9)
    assert ints.e_b == pytest.approx(_circle_average(lambda t: pattern_gain(unit, 1, t) ** 2), rel=1e-8)
    for m in (2, 3, 5):
        expected = _circle_average(lambda t: pattern_gain(unit, 1, t) * pattern_gain(unit, m, t))
        assert ints.e_cross[0, m - 1] == pytest.approx(expected, rel=1e-8)


def test_cross_matrix_structure(pattern):
    ints = compute_integrals(pattern)
    e = ints.e_cross
    np.testing.assert_allclose(e, e.T, rtol=1e-12)
    np.testing.assert_allclose(np.diag(e), ints.e_b, rtol=1e-12)
    np.testing.assert_allclose(e.sum(axis=1), e.sum(axis=1)[0], rtol=1e-12)
    # E_mm' = E_m'm and rotation invariance: row k is row 0 shifted by k
    for k in range(1, 8):
        np.testing.assert_allclose(e[k], np.roll(e[0], k), rtol=1e-12)
    assert ints.cross_sum == pytest.approx(e.sum())


def test_minimum_opposite_boresight(pattern):
    phi = np.linspace(-math.pi, math.pi, 3601)
    gains = pattern_gain(pattern, 1, phi)
    assert pattern_gain(pattern, 1, math.pi) == pytest.approx(gains.min(), rel=1e-12)


def test_second_moment_dominates_squared_mean(pattern):
    ints = compute_integrals(normalize_for_unit_ea(pattern))
    assert ints.e_b >= ints.e_a ** 2
    assert np.all(ints.e_cross > 0.0)
