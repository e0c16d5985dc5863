import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rollsim.errors import OutsideValidityWindow
from rollsim.geometry import Pose, compose, hat, inverse, rot_y, rot_z, so3_exp
from rollsim.motion import (
    PiecewiseLinearKeyframes,
    PolynomialPerDof,
    RotationConstAngVel,
    Static,
    TranslationConstAccel,
    TranslationConstVel,
    frame_window,
    relative_pose,
)
from rollsim.shutter import complete_timing


def rk4_rotation(omega, R0, t, steps=20):
    """Integrate dR/dt = [omega]x R."""
    W = hat(omega)
    R = np.array(R0, dtype=float)
    h = t / steps
    for _ in range(steps):
        k1 = W @ R
        k2 = W @ (R + 0.5 * h * k1)
        k3 = W @ (R + 0.5 * h * k2)
        k4 = W @ (R + h * k3)
        R = R + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return R


def test_static_is_constant():
    p = Pose(rot_y(0.3), [1, 2, 3])
    m = Static(p)
    assert m.pose_at(-5.0) is p and m.pose_at(7.0) is p
    assert m.rotation_only and m.is_static


def test_const_vel_hand_computed():
    m = TranslationConstVel(np.eye(3), [0, 0, 1], [2.0, 0.0, -1.0], t0=1.0)
    assert np.allclose(m.pose_at(1.5).translation, [1.0, 0.0, 0.5])
    assert np.array_equal(m.pose_at(1.0).translation, [0.0, 0.0, 1.0])


def test_const_accel_hand_computed():
    m = TranslationConstAccel(np.eye(3), [0, 0, 0], [1.0, 0, 0], [0, 2.0, 0])
    assert np.allclose(m.pose_at(2.0).translation, [2.0, 4.0, 0.0])


def test_rotation_matches_ode_oracle():
    omega = np.array([0.4, -1.2, 0.7])
    R0 = rot_z(0.3)
    m = RotationConstAngVel(R0, [0.1, 0, 0], omega)
    for t in (0.01, 0.1, 0.5):
        assert np.allclose(m.pose_at(t).rotation, rk4_rotation(omega, R0, t), atol=1e-9)
    assert np.array_equal(m.pose_at(3.0).translation, [0.1, 0, 0])


def test_polynomial_degree_cap():
    with pytest.raises(ValueError):
        PolynomialPerDof(np.zeros((6, 6)))
    with pytest.raises(ValueError):
        PolynomialPerDof(np.zeros((5, 2)))


def test_polynomial_reduces_to_const_vel():
    c = np.zeros((6, 2))
    c[3:, 0] = [1.0, 2.0, 3.0]
    c[3:, 1] = [0.5, 0.0, -1.0]
    poly = PolynomialPerDof(c)
    cv = TranslationConstVel(np.eye(3), [1, 2, 3], [0.5, 0, -1])
    for t in (0.0, 0.3, 1.7):
        assert poly.pose_at(t).allclose(cv.pose_at(t))
    assert not poly.rotation_only


def test_polynomial_rotation_rows():
    c = np.zeros((6, 2))
    c[1, 1] = 0.8
    m = PolynomialPerDof(c)
    assert np.allclose(m.pose_at(0.5).rotation, rot_y(0.4))
    assert m.rotation_only


def test_keyframes_hit_keys_exactly_and_interpolate():
    a = Pose(np.eye(3), [0, 0, 0])
    b = Pose(rot_y(0.6), [2, 0, 0])
    m = PiecewiseLinearKeyframes((0.0, 1.0), (a, b))
    assert m.pose_at(0.0) is a and m.pose_at(1.0) is b
    mid = m.pose_at(0.5)
    assert np.allclose(mid.rotation, rot_y(0.3))
    assert np.allclose(mid.translation, [1, 0, 0])
    with pytest.raises(OutsideValidityWindow):
        m.pose_at(1.01)


def test_keyframes_validation():
    with pytest.raises(ValueError):
        PiecewiseLinearKeyframes((0.0, 0.0), (Pose(), Pose()))
    with pytest.raises(ValueError):
        PiecewiseLinearKeyframes((0.0, 1.0), (Pose(), Pose()), window=(-1.0, 1.0))


def test_window_enforced():
    m = TranslationConstVel(velocity=[1, 0, 0], window=(0.0, 0.1))
    with pytest.raises(OutsideValidityWindow):
        m.pose_at(0.2)
    with pytest.raises(ValueError):
        Static(window=(1.0, 0.0))


def test_frame_window():
    t = complete_timing(te=0.001, tr=1e-5, tf=0.002, fps="solve", height=100)
    lo, hi = frame_window(t, 0.5, fi=1, n_frames=2)
    assert lo == pytest.approx(0.5 + 0.004) and hi == pytest.approx(0.5 + 0.012)


def test_relative_pose_identity_at_reference():
    m = RotationConstAngVel(omega=[0, 1, 0])
    rel = relative_pose(m, 0.2, 0.2)
    assert np.array_equal(rel.rotation, np.eye(3)) and np.array_equal(rel.translation, np.zeros(3))
    rel = relative_pose(Static(Pose(rot_y(1.0), [1, 2, 3])), 0.0, 5.0)
    assert np.array_equal(rel.rotation, np.eye(3))


times = st.floats(-2, 2, allow_nan=False)


@given(times, times)
def test_relative_pose_moves_points_between_cameras(t_ref, t):
    m = TranslationConstAccel(rot_y(0.2), [0, 0, 1], [1, 0.5, 0], [0, 0, 2])
    rel = relative_pose(m, t_ref, t)
    X = np.array([0.3, -0.2, 4.0])
    a = m.pose_at(t_ref).apply(X)
    assert np.allclose(rel.apply(a), m.pose_at(t).apply(X), atol=1e-9)


@given(times, times)
def test_rotation_model_composes(s, t):
    omega = np.array([0.3, -0.7, 0.2])
    m = RotationConstAngVel(omega=omega)
    lhs = m.pose_at(s + t).rotation
    rhs = so3_exp(omega * s) @ m.pose_at(t).rotation
    assert np.allclose(lhs, rhs, atol=1e-9)
    assert compose(m.pose_at(t), inverse(m.pose_at(t))).allclose(Pose(), atol=1e-12)
