"""Rigid poses, intrinsics and the pinhole projection pipeline.

Axis convention: the camera looks down +Z, x to the right, y down the image.
A :class:`Pose` maps world points into camera space, ``X_c = R @ X_w + T``,
so the camera centre is ``C = -R.T @ T``.

Projection runs in three stages, each exposed by :func:`project_stages`:

    world --pose--> camera --z-division--> normalized --K--> pixel

Radial distortion (see :mod:`rollsim.distortion`) acts on the normalized
coordinates, between the z-division and the intrinsics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from rollsim.errors import NonPositiveDepth, PointBehindCamera

ORTHO_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def hat(w) -> np.ndarray:
    """Cross-product matrix ``[w]x``."""
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def so3_exp(w) -> np.ndarray:
    """Rotation matrix for an axis-angle vector (Rodrigues' formula)."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    W = hat(w)
    if theta < 1e-8:
        # second-order series, exact to double precision at this size
        return np.eye(3) + W + 0.5 * (W @ W)
    return (
        np.eye(3)
        + (np.sin(theta) / theta) * W
        + ((1.0 - np.cos(theta)) / theta**2) * (W @ W)
    )


def so3_log(R) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, angle in [0, pi]."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-8:
        return 0.5 * v
    if np.pi - theta < 1e-6:
        # near pi the antisymmetric part vanishes; use the symmetric part
        B = 0.5 * (R + np.eye(3))
        axis = np.sqrt(np.clip(np.diag(B), 0.0, None))
        i = int(np.argmax(axis))
        axis[:] = B[i] / axis[i]
        axis /= np.linalg.norm(axis)
        if np.dot(axis, v) < 0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * v


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def nearest_rotation(M) -> np.ndarray:
    """Closest rotation in Frobenius norm (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rigid transform."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = _frozen(self.rotation)
        T = _frozen(self.translation).reshape(-1)
        if R.shape != (3, 3) or T.shape != (3,):
            raise ValueError("Pose needs a 3x3 rotation and a 3-vector translation")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(T))):
            raise ValueError("Pose entries must be finite")
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL or abs(np.linalg.det(R) - 1) > ORTHO_TOL:
            raise ValueError("Pose rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", T)

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_axis_angle(cls, w, translation=(0.0, 0.0, 0.0)) -> Pose:
        return cls(so3_exp(w), translation)

    @classmethod
    def from_center(cls, rotation, center) -> Pose:
        """Pose from a rotation and the camera centre in world coordinates."""
        R = np.asarray(rotation, dtype=float)
        return cls(R, -R @ np.asarray(center, dtype=float))

    @classmethod
    def translate(cls, x: float, y: float, z: float) -> Pose:
        return cls(np.eye(3), (x, y, z))

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def apply(self, X) -> np.ndarray:
        """Transform point(s) of shape (3,) or (N, 3)."""
        X = np.asarray(X, dtype=float)
        return X @ self.rotation.T + self.translation

    def renormalized(self) -> Pose:
        return Pose(nearest_rotation(self.rotation), self.translation)

    def to_row(self) -> list[float]:
        """12 numbers: rotation row-major, then translation."""
        return [float(v) for v in self.rotation.reshape(-1)] + [float(v) for v in self.translation]

    @classmethod
    def from_row(cls, values) -> Pose:
        values = np.asarray(values, dtype=float)
        if values.shape != (12,):
            raise ValueError(f"expected 12 pose numbers, got {values.size}")
        return cls(values[:9].reshape(3, 3), values[9:])

    def allclose(self, other: Pose, atol: float = 1e-12) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )

    def __repr__(self):
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def compose(a: Pose, b: Pose) -> Pose:
    """Pose that applies ``b`` first, then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(p: Pose) -> Pose:
    Rt = p.rotation.T
    return Pose(Rt, -Rt @ p.translation)


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    s: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        for name in ("fx", "fy", "cx", "cy", "s"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"intrinsic {name} must be finite")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, self.s, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    def to_pixel(self, n) -> np.ndarray:
        """Normalized (x, y) -> pixel, shape (2,) or (N, 2)."""
        n = np.asarray(n, dtype=float)
        x, y = n[..., 0], n[..., 1]
        return np.stack([self.fx * x + self.s * y + self.cx, self.fy * y + self.cy], axis=-1)

    def to_normalized(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        y = (p[..., 1] - self.cy) / self.fy
        x = (p[..., 0] - self.cx - self.s * y) / self.fx
        return np.stack([x, y], axis=-1)


def lift(v) -> np.ndarray:
    """Append a homogeneous 1."""
    v = np.asarray(v, dtype=float)
    return np.concatenate([v, np.ones(v.shape[:-1] + (1,))], axis=-1)


def drop(v) -> np.ndarray:
    """Divide by the last homogeneous coordinate and remove it."""
    v = np.asarray(v, dtype=float)
    return v[..., :-1] / v[..., -1:]


class ProjectionStages(NamedTuple):
    camera: np.ndarray
    normalized: np.ndarray
    distorted: np.ndarray
    pixel: np.ndarray


def project_stages(pose: Pose, K: Intrinsics, X, distortion=None) -> ProjectionStages:
    """Run the projection pipeline and keep every intermediate.

    ``distortion`` is an optional :class:`rollsim.distortion.RadialDistortion`
    applied to the normalized point before ``K``; without it ``distorted`` is
    the normalized point itself.
    """
    Xc = pose.apply(X)
    z = Xc[..., 2]
    if np.any(z <= 0):
        raise PointBehindCamera(f"camera-space z must be > 0, got min z={np.min(z):.6g}")
    n = Xc[..., :2] / z[..., None]
    if distortion is not None:
        from rollsim.distortion import distort

        nd = distort(distortion, n)
    else:
        nd = n
    return ProjectionStages(Xc, n, nd, K.to_pixel(nd))


def project(pose: Pose, K: Intrinsics, X, distortion=None) -> np.ndarray:
    return project_stages(pose, K, X, distortion).pixel


def backproject(K: Intrinsics, p, depth) -> np.ndarray:
    """Camera-space point at z-depth ``depth`` seen at pixel ``p`` (no distortion)."""
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= 0):
        raise NonPositiveDepth("depth must be strictly positive")
    n = K.to_normalized(p)
    return lift(n) * depth[..., None]
