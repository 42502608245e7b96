import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elasticgait.kinematics import LegGeometry, forward_kinematics, inverse_kinematics, leg_jacobian

G = LegGeometry()


def test_straight_leg():
    x, z = forward_kinematics(0.0, 0.0)
    assert (float(x), float(z)) == (0.0, pytest.approx(0.16, abs=1e-15))


def test_folded_leg():
    x, z = forward_kinematics(0.0, math.pi)
    assert abs(float(x)) < 1e-15 and abs(float(z)) < 1e-15


def test_extended_target():
    hip, knee, clamped = inverse_kinematics(0.0, 0.16 - 1e-6)
    assert float(knee) == pytest.approx(0.0, abs=1e-2)
    assert not bool(clamped)


def test_round_trip_known_angles():
    x, z = forward_kinematics(0.3, 0.9)
    hip, knee, _ = inverse_kinematics(x, z)
    assert float(hip) == pytest.approx(0.3, abs=1e-12)
    assert float(knee) == pytest.approx(0.9, abs=1e-12)


def test_unreachable_target_is_clamped():
    hip, knee, clamped = inverse_kinematics(0.12, 0.16)  # radius 0.2
    assert bool(clamped)
    x, z = forward_kinematics(hip, knee)
    assert math.hypot(float(x), float(z)) == pytest.approx(G.r_max, abs=1e-12)
    assert math.atan2(float(x), float(z)) == pytest.approx(math.atan2(0.12, 0.16), abs=1e-9)


def test_round_trip_ten_thousand(rng):
    r = rng.uniform(G.r_min, G.r_max, 10_000)
    a = rng.uniform(-math.pi, math.pi, 10_000)
    x, z = r * np.sin(a), r * np.cos(a)
    hip, knee, clamped = inverse_kinematics(x, z)
    fx, fz = forward_kinematics(hip, knee)
    assert not clamped.any()
    assert np.max(np.hypot(fx - x, fz - z)) < 1e-9


def test_branch_is_consistent(rng):
    r = rng.uniform(G.r_min, G.r_max, 2000)
    a = rng.uniform(-math.pi, math.pi, 2000)
    _, knee, _ = inverse_kinematics(r * np.sin(a), r * np.cos(a))
    assert np.all(knee >= 0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.0, math.pi))
def test_reach_within_annulus(hip, knee):
    x, z = forward_kinematics(hip, knee)
    d = math.hypot(float(x), float(z))
    assert abs(G.l1 - G.l2) - 1e-12 <= d <= G.l1 + G.l2 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(0.2, 2.5))
def test_jacobian_matches_differences(hip, knee):
    J = leg_jacobian(hip, knee)
    h = 1e-6
    num = np.empty((2, 2))
    for j, (dh, dk) in enumerate(((h, 0.0), (0.0, h))):
        p1 = np.array(forward_kinematics(hip + dh, knee + dk))
        p0 = np.array(forward_kinematics(hip - dh, knee - dk))
        num[:, j] = (p1 - p0) / (2 * h)
    assert np.allclose(J, num, atol=1e-8)
