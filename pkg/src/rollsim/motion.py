"""Intra-frame camera motion models: time-parameterized world-to-camera pose.

Each model evaluates ``pose_at(t)`` with ``dt = t - t0``.  Rotations act on
the left of the reference rotation, i.e. they are expressed in the camera
frame: ``R(t) = exp([w]x dt) @ R0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rollsim.errors import OutsideValidityWindow
from rollsim.geometry import Pose, compose, inverse, so3_exp, so3_log

UNBOUNDED = (-np.inf, np.inf)
MAX_POLY_DEGREE = 4


def frame_window(timing, tau0: float = 0.0, fi: int = 0, n_frames: int = 1) -> tuple[float, float]:
    """Time span ``[tau0 + fi/fps, tau0 + (fi + n_frames)/fps]``."""
    period = float(timing.frame_period)
    return (tau0 + fi * period, tau0 + (fi + n_frames) * period)


def _vec3(v) -> np.ndarray:
    v = np.array(v, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    v.setflags(write=False)
    return v


def _rot(R) -> np.ndarray:
    R = Pose(R).rotation
    return R


@dataclass(frozen=True, eq=False)
class MotionModel:
    """Base class; subclasses implement ``_pose(dt)``."""

    def __post_init__(self):
        lo, hi = self.window
        if not lo <= hi:
            raise ValueError(f"empty validity window {self.window}")

    def pose_at(self, t: float) -> Pose:
        lo, hi = self.window
        if not lo <= t <= hi:
            raise OutsideValidityWindow(f"t={t!r} outside validity window [{lo}, {hi}]")
        return self._pose(t - self.t0)

    def _pose(self, dt: float) -> Pose:
        raise NotImplementedError

    @property
    def is_static(self) -> bool:
        return False

    @property
    def rotation_only(self) -> bool:
        """True when the translation is constant over time."""
        return False


@dataclass(frozen=True, eq=False)
class Static(MotionModel):
    pose: Pose = field(default_factory=Pose)
    window: tuple[float, float] = UNBOUNDED
    t0: float = 0.0

    def _pose(self, dt):
        return self.pose

    @property
    def is_static(self):
        return True

    @property
    def rotation_only(self):
        return True


@dataclass(frozen=True, eq=False)
class TranslationConstVel(MotionModel):
    R0: np.ndarray = field(default_factory=lambda: np.eye(3))
    T0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    window: tuple[float, float] = UNBOUNDED
    t0: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "R0", _rot(self.R0))
        object.__setattr__(self, "T0", _vec3(self.T0))
        object.__setattr__(self, "velocity", _vec3(self.velocity))

    def _pose(self, dt):
        return Pose(self.R0, self.T0 + self.velocity * dt)


@dataclass(frozen=True, eq=False)
class TranslationConstAccel(MotionModel):
    R0: np.ndarray = field(default_factory=lambda: np.eye(3))
    T0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    window: tuple[float, float] = UNBOUNDED
    t0: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "R0", _rot(self.R0))
        object.__setattr__(self, "T0", _vec3(self.T0))
        object.__setattr__(self, "velocity", _vec3(self.velocity))
        object.__setattr__(self, "acceleration", _vec3(self.acceleration))

    def _pose(self, dt):
        return Pose(self.R0, self.T0 + self.velocity * dt + 0.5 * self.acceleration * (dt * dt))


@dataclass(frozen=True, eq=False)
class RotationConstAngVel(MotionModel):
    R0: np.ndarray = field(default_factory=lambda: np.eye(3))
    T0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    window: tuple[float, float] = UNBOUNDED
    t0: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "R0", _rot(self.R0))
        object.__setattr__(self, "T0", _vec3(self.T0))
        object.__setattr__(self, "omega", _vec3(self.omega))

    def _pose(self, dt):
        return Pose(so3_exp(self.omega * dt) @ self.R0, self.T0)

    @property
    def rotation_only(self):
        return True


@dataclass(frozen=True, eq=False)
class PolynomialPerDof(MotionModel):
    """Independent polynomial per degree of freedom.

    ``coefficients`` has shape (6, degree + 1), rows ordered
    ``(rx, ry, rz, tx, ty, tz)`` and columns by increasing power of ``dt``.
    The rotational rows form an axis-angle vector applied as
    ``R(t) = exp(r(dt)) @ R0``, which is only a faithful parameterization for
    the small angles of intra-frame motion.
    """

    coefficients: np.ndarray = field(default_factory=lambda: np.zeros((6, 1)))
    R0: np.ndarray = field(default_factory=lambda: np.eye(3))
    window: tuple[float, float] = UNBOUNDED
    t0: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        c = np.array(self.coefficients, dtype=float)
        if c.ndim != 2 or c.shape[0] != 6:
            raise ValueError("coefficients must have shape (6, degree + 1)")
        if c.shape[1] - 1 > MAX_POLY_DEGREE:
            raise ValueError(f"polynomial degree capped at {MAX_POLY_DEGREE}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "R0", _rot(self.R0))

    def _pose(self, dt):
        powers = dt ** np.arange(self.coefficients.shape[1])
        dof = self.coefficients @ powers
        return Pose(so3_exp(dof[:3]) @ self.R0, dof[3:])

    @property
    def rotation_only(self):
        return not np.any(self.coefficients[3:, 1:])


@dataclass(frozen=True, eq=False)
class PiecewiseLinearKeyframes(MotionModel):
    """Keyframed trajectory: geodesic rotation and linear translation between keys."""

    times: tuple[float, ...] = ()
    poses: tuple[Pose, ...] = ()
    window: tuple[float, float] | None = None
    t0: float = 0.0

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        poses = tuple(self.poses)
        if len(times) != len(poses) or not times:
            raise ValueError("need matching, non-empty times and poses")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("keyframe times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "poses", poses)
        if self.window is None:
            object.__setattr__(self, "window", (times[0], times[-1]))
        super().__post_init__()
        lo, hi = self.window
        if lo < times[0] or hi > times[-1]:
            raise ValueError("validity window must lie inside the keyframe span")

    def pose_at(self, t):
        lo, hi = self.window
        if not lo <= t <= hi:
            raise OutsideValidityWindow(f"t={t!r} outside validity window [{lo}, {hi}]")
        times = self.times
        i = int(np.searchsorted(times, t, side="right")) - 1
        if times[i] == t:
            return self.poses[i]
        a, b = self.poses[i], self.poses[i + 1]
        alpha = (t - times[i]) / (times[i + 1] - times[i])
        step = so3_log(b.rotation @ a.rotation.T)
        R = so3_exp(alpha * step) @ a.rotation
        T = (1.0 - alpha) * a.translation + alpha * b.translation
        return Pose(R, T)

    @property
    def rotation_only(self):
        T = self.poses[0].translation
        return all(np.array_equal(p.translation, T) for p in self.poses)


def relative_pose(m: MotionModel, t_ref: float, t: float) -> Pose:
    """Pose taking camera coordinates at ``t_ref`` to camera coordinates at ``t``."""
    a = m.pose_at(t)
    b = m.pose_at(t_ref)
    if t == t_ref or (
        np.array_equal(a.rotation, b.rotation) and np.array_equal(a.translation, b.translation)
    ):
        return Pose()
    return compose(a, inverse(b))
