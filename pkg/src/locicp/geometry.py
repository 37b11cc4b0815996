"""Rigid transforms, rotation-vector algebra and the point cloud value type.

Arrays follow the row convention: a cloud of N points is an (N, 3) array.
Pose updates are ordered rotation first, translation second (``x = [r; t]``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SMALL_ANGLE = 1e-8
ORTHONORMAL_TOL = 1e-9


def _frozen(a, shape=None):
    arr = np.array(a, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def skew(v):
    """Cross-product matrix ``[v]x`` such that ``skew(v) @ w == cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def exp_rotvec(rotvec) -> np.ndarray:
    """Rodrigues map from a rotation vector to a 3x3 rotation matrix."""
    v = np.asarray(rotvec, dtype=float)
    theta = np.linalg.norm(v)
    K = skew(v)
    if theta < SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * K @ K
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * K @ K


def log_rotation(R) -> np.ndarray:
    """Inverse of :func:`exp_rotvec`; returns a rotation vector with norm in [0, pi]."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < SMALL_ANGLE:
        return 0.5 * w
    if np.pi - theta < 1e-6:
        # sin(theta) ~ 0: recover the axis from the symmetric part
        B = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(B[k, k])
        if np.dot(axis, w) < 0:
            axis = -axis
        return theta * axis / np.linalg.norm(axis)
    return theta / (2.0 * np.sin(theta)) * w


def rotation_angle(R) -> float:
    """Geodesic angle (radians) of a rotation matrix."""
    return float(np.arccos(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)))


def rotz(angle) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RigidTransform:
    """Rotation matrix plus translation; maps points as ``R @ p + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))
        if not (np.all(np.isfinite(self.rotation)) and np.all(np.isfinite(self.translation))):
            raise ValueError("non-finite transform")
        R = self.rotation
        if np.linalg.norm(R @ R.T - np.eye(3)) > ORTHONORMAL_TOL or np.linalg.det(R) < 0:
            raise ValueError("rotation is not orthonormal with det +1")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(exp_rotvec(rotvec), translation)

    @classmethod
    def from_matrix(cls, M) -> "RigidTransform":
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3], M[:3, 3])

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def rotvec(self) -> np.ndarray:
        return log_rotation(self.rotation)

    def apply(self, points) -> np.ndarray:
        """Transform an (N, 3) array or a single 3-vector."""
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def rotate(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.rotation.T

    def orthonormality_error(self) -> float:
        return float(np.linalg.norm(self.rotation @ self.rotation.T - np.eye(3)))

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)


def compose(T1: RigidTransform, T2: RigidTransform) -> RigidTransform:
    """``T1 ∘ T2``: apply ``T2`` first, then ``T1``."""
    return RigidTransform(T1.rotation @ T2.rotation, T1.rotation @ T2.translation + T1.translation)


def inverse(T: RigidTransform) -> RigidTransform:
    Rt = T.rotation.T
    return RigidTransform(Rt, -Rt @ T.translation)


@dataclass(frozen=True)
class PoseUpdate:
    """Optimization variable: rotation vector (rad) and translation (m)."""

    rotvec: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotvec", _frozen(self.rotvec, (3,)))
        object.__setattr__(self, "trans", _frozen(self.trans, (3,)))

    @classmethod
    def from_vector(cls, x) -> "PoseUpdate":
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:6])

    @classmethod
    def zero(cls) -> "PoseUpdate":
        return cls(np.zeros(3), np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.rotvec, self.trans])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.rotvec)) and np.all(np.isfinite(self.trans)))


@dataclass(frozen=True)
class PointCloud:
    """Points with optional unit normals, expressed in a named frame.

    ``valid`` marks entries whose normal could be estimated; invalid entries
    carry a zero normal and are skipped by the matcher.
    """

    points: np.ndarray
    normals: Optional[np.ndarray] = None
    frame: str = "M"
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.array(self.normals, dtype=float).reshape(-1, 3)
            if nrm.shape != pts.shape:
                raise ValueError("normals and points differ in length")
            nrm.setflags(write=False)
            object.__setattr__(self, "normals", nrm)
        if self.valid is not None:
            val = np.array(self.valid, dtype=bool).reshape(-1)
            if val.shape[0] != pts.shape[0]:
                raise ValueError("valid mask and points differ in length")
            val.setflags(write=False)
            object.__setattr__(self, "valid", val)
        if self.normals is not None:
            mask = self.valid_mask()
            lengths = np.linalg.norm(self.normals[mask], axis=1)
            if lengths.size and np.max(np.abs(lengths - 1.0)) >= 1e-6:
                raise ValueError("normals must have unit length")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def valid_mask(self) -> np.ndarray:
        if self.valid is None:
            return np.ones(len(self), dtype=bool)
        return self.valid

    def subset(self, index) -> "PointCloud":
        return PointCloud(
            self.points[index],
            None if self.normals is None else self.normals[index],
            self.frame,
            None if self.valid is None else self.valid[index],
        )


def apply_transform(T: RigidTransform, cloud: PointCloud, frame: Optional[str] = None) -> PointCloud:
    """Map points by ``R p + t`` and normals by ``R n``; relabel the frame."""
    normals = None if cloud.normals is None else T.rotate(cloud.normals)
    if normals is not None and cloud.valid is not None:
        normals[~cloud.valid] = 0.0
    return PointCloud(T.apply(cloud.points), normals, frame or cloud.frame, cloud.valid)
