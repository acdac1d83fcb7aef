"""Rigid-body geometry: pinhole intrinsics, SE(3) poses, and Lie-group helpers.

Poses use the camera-from-world convention throughout: ``x_cam = R @ x_world + t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Input rotations further from orthonormal than this are rejected instead of snapped.
_INPUT_ORTHO_TOL = 1e-6


def so3_hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector so that ``so3_hat(w) @ v == cross(w, v)``."""
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues exponential map from a rotation vector to a 3x3 rotation matrix."""
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w)
    K = so3_hat(w)
    if theta < 1e-8:
        # Second-order Taylor expansion; exact to machine precision at this scale.
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def se3_exp(xi: np.ndarray) -> "Pose":
    """Exponential map from a 6-vector twist ``(v, w)`` to a rigid transform.

    The translation block uses the closed-form V matrix so that
    ``se3_exp(xi)`` equals the matrix exponential of the twist.
    """
    xi = np.asarray(xi, dtype=np.float64)
    v, w = xi[:3], xi[3:]
    theta = np.linalg.norm(w)
    K = so3_hat(w)
    KK = K @ K
    if theta < 1e-8:
        R = np.eye(3) + K + 0.5 * KK
        V = np.eye(3) + 0.5 * K + KK / 6.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
        c = (theta - np.sin(theta)) / (theta**3)
        R = np.eye(3) + a * K + b * KK
        V = np.eye(3) + b * K + c * KK
    return Pose(rotation=R, translation=V @ v)


def rotation_angle(R: np.ndarray) -> float:
    """Rotation angle in radians of a rotation matrix."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense (via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


def quat_from_rotation(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    q /= np.linalg.norm(q)
    # Canonical sign: non-negative w.
    if q[0] < 0:
        q = -q
    return q


def rotation_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a (w, x, y, z) quaternion; the input is normalized first."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion has no rotation")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera model; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width):
            raise ValueError(f"cx={self.cx} outside [0, {self.width})")
        if not (0 <= self.cy < self.height):
            raise ValueError(f"cy={self.cy} outside [0, {self.height})")

    def halved(self) -> "CameraIntrinsics":
        """Intrinsics of the image subsampled by taking every second pixel."""
        return CameraIntrinsics(
            fx=self.fx / 2.0,
            fy=self.fy / 2.0,
            cx=self.cx / 2.0,
            cy=self.cy / 2.0,
            width=self.width // 2,
            height=self.height // 2,
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


def default_intrinsics(width: int = 320, height: int = 240) -> CameraIntrinsics:
    """Wide-FOV endoscope-style intrinsics (~90 deg horizontal at 320x240)."""
    f = width / 2.0
    return CameraIntrinsics(
        fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0, width=width, height=height
    )


@dataclass(frozen=True)
class Pose:
    """Rigid transform, camera-from-world: ``x_cam = rotation @ x_world + translation``.

    The rotation is validated against orthonormality on construction and then
    snapped to the nearest exact rotation, so stored poses satisfy
    ``R.T @ R == I`` and ``det(R) == 1`` to within 1e-9.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose has non-finite entries")
        err = np.max(np.abs(R.T @ R - np.eye(3)))
        if err > _INPUT_ORTHO_TOL:
            raise ValueError(f"rotation is not orthonormal (max deviation {err:.3e})")
        if np.linalg.det(R) < 0:
            raise ValueError("rotation has negative determinant (reflection)")
        R = orthonormalize(R)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(rotation=np.eye(3), translation=np.zeros(3))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=np.float64)
        return cls(rotation=T[:3, :3], translation=T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(rotation=Rt, translation=-Rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """Transform that first applies ``other``, then ``self``."""
        return Pose(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation,
        )

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the transform to points of shape (..., 3)."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def rotate(self, dirs: np.ndarray) -> np.ndarray:
        """Apply only the rotation part to direction vectors of shape (..., 3)."""
        return np.asarray(dirs, dtype=np.float64) @ self.rotation.T

    def camera_center(self) -> np.ndarray:
        """Camera center in world coordinates (``-R.T @ t``)."""
        return -self.rotation.T @ self.translation


def relative_pose(a: Pose, b: Pose) -> Pose:
    """Transform mapping coordinates of camera ``a`` into camera ``b``: ``b ∘ a⁻¹``."""
    return b.compose(a.inverse())
