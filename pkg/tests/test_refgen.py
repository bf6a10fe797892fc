import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddmpc.errors import InvalidDurationError, ReferenceInfeasibleError
from ddmpc.refgen import (QuinticSegment, WaypointPath, build_letter_path, letter_waypoints,
                          load_reference_csv, polyline_length, quintic_coeffs, sample_reference,
                          save_reference_csv, step_path)

finite = st.floats(-100, 100)
duration = st.floats(0.05, 20)


def test_unit_coefficients():
    np.testing.assert_allclose(quintic_coeffs(0.0, 1.0, 1.0), [0, 0, 0, 10, -15, 6])
    np.testing.assert_allclose(quintic_coeffs(2.0, 4.0, 2.0), [2, 0, 0, 2.5, -1.875, 0.375])


@given(finite, finite, duration)
def test_boundary_conditions(p0, pT, T):
    seg = QuinticSegment(p0, pT, T)
    a, b = sample_reference(seg, 0.0), sample_reference(seg, T)
    tol = 1e-9 * max(1.0, abs(p0), abs(pT))
    assert abs(a.q[0] - p0) <= tol and abs(b.q[0] - pT) <= tol
    scale = tol * max(1.0, 1 / T ** 2)
    for s in (a, b):
        assert abs(s.qd[0]) <= scale and abs(s.qdd[0]) <= scale


@given(finite, finite, duration, st.floats(0, 1))
def test_midpoint_symmetry(p0, pT, T, frac):
    seg = QuinticSegment(p0, pT, T)
    t = frac * T
    q1, q2 = sample_reference(seg, t).q[0], sample_reference(seg, T - t).q[0]
    assert q1 + q2 == pytest.approx(p0 + pT, abs=1e-9 * max(1.0, abs(p0), abs(pT)))


def test_velocity_matches_finite_difference():
    seg = QuinticSegment([0.0, 1.0], [3.0, -2.0], 1.5)
    h = 1e-6
    for t in np.linspace(0.1, 1.4, 9):
        fd = (sample_reference(seg, t + h).q - sample_reference(seg, t - h).q) / (2 * h)
        np.testing.assert_allclose(sample_reference(seg, t).qd, fd, atol=1e-6)
    # peak speed of the rest-to-rest quintic is 15/8 of the mean speed
    assert sample_reference(seg, 0.75).qd[0] == pytest.approx(15 / 8 * 3 / 1.5)


@given(finite, finite, duration, st.floats(0.1, 10), st.floats(0, 1))
def test_scaling_covariance(p0, pT, T, k, frac):
    base = sample_reference(QuinticSegment(p0, pT, T), frac * T)
    scaled = sample_reference(QuinticSegment(k * p0, k * pT, T), frac * T)
    assert scaled.q[0] == pytest.approx(k * base.q[0], rel=1e-9, abs=1e-9)
    stretched = sample_reference(QuinticSegment(p0, pT, k * T), frac * k * T)
    assert stretched.q[0] == pytest.approx(base.q[0], rel=1e-9, abs=1e-9)
    assert stretched.qd[0] == pytest.approx(base.qd[0] / k, rel=1e-9, abs=1e-9)


def test_clamping_is_flagged():
    seg = QuinticSegment(0.0, 1.0, 1.0)
    s = sample_reference(seg, 1.5)
    assert s.clamped and s.q[0] == 1.0
    assert sample_reference(seg, -0.2).clamped
    assert not sample_reference(seg, 0.5).clamped


@pytest.mark.parametrize("T", [0.0, -1.0])
def test_invalid_duration(T):
    with pytest.raises(InvalidDurationError):
        quintic_coeffs(0.0, 1.0, T)


def test_waypoint_path_is_continuous_and_rests():
    wp = np.array([[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5], [0.0, 0.0]])
    path = WaypointPath(wp, [1.0, 0.5, 2.0])
    t, q, qd = path.discretize(0.01)
    np.testing.assert_allclose(q[[0, 100, 150, -1]], wp, atol=1e-12)
    np.testing.assert_allclose(qd[[0, 100, 150, -1]], 0.0, atol=1e-12)
    # per-sample jumps stay under peak speed times dt (fastest leg: 15/8 * 2 / 0.5)
    assert np.max(np.abs(np.diff(q, axis=0))) <= 15 / 8 * 2 / 0.5 * 0.01 + 1e-12
    assert t[-1] == pytest.approx(3.5)
    for tb in (1.0, 1.5):
        left, right = path.sample(tb - 1e-9), path.sample(tb + 1e-9)
        np.testing.assert_allclose(left.q, right.q, atol=1e-7)


def test_reverse_path_retraces():
    wp = np.array([[0.0], [2.0], [-1.0]])
    fwd = WaypointPath(wp, [1.0, 1.0])
    back = WaypointPath(wp[::-1], [1.0, 1.0])
    for t in np.linspace(0, 2, 21):
        np.testing.assert_allclose(back.sample(2 - t).q, fwd.sample(t).q, atol=1e-12)


def test_step_path_holds():
    path = step_path([0.0], [[1.0], [3.0]], T_leg=1.0, T_hold=0.5)
    assert path.total_time == pytest.approx(3.0)
    for t in (1.0, 1.25, 1.5):
        assert path.sample(t).q[0] == pytest.approx(1.0)


@pytest.mark.parametrize("letter", ["S", "M", "C"])
def test_letter_arc_length(letter):
    ref = build_letter_path(letter, 30.0, 0.5, None)
    want = polyline_length(letter_waypoints(letter, 30.0))
    assert polyline_length(ref.xy) == pytest.approx(want, rel=0.02)
    assert ref.joints.shape == (len(ref.times), 0)


def test_letter_inverse_checks():
    with pytest.raises(ReferenceInfeasibleError):
        build_letter_path("C", 30.0, 0.5, lambda xy: xy, in_range=lambda p: p[0] < 0)
    with pytest.raises(ReferenceInfeasibleError):
        build_letter_path("C", 30.0, 0.5, lambda xy: np.full_like(xy, np.nan))
    ref = build_letter_path("S", 30.0, 0.5, lambda xy: 2 * xy, center=(10.0, 5.0))
    np.testing.assert_allclose(ref.joints, 2 * ref.xy)
    with pytest.raises(ValueError):
        letter_waypoints("Q", 1.0)


def test_reference_csv_round_trip(tmp_path):
    t, q, qd = step_path([0.0, 1.0], [[1.0, 2.0]], 0.3, 0.1).discretize(0.02)
    save_reference_csv(tmp_path / "r.csv", t, q, qd)
    back = load_reference_csv(tmp_path / "r.csv")
    for a, b in zip(back, (t, q, qd)):
        np.testing.assert_array_equal(a, b)
