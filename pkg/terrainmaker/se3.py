"""
Rigid-body transformation helpers.

Poses are stored as 4x4 homogeneous ``numpy`` arrays. Tangent vectors
(twists) are ordered ``[rho_x, rho_y, rho_z, omega_x, omega_y, omega_z]``,
translation first. Perturbations are applied on the left:
``T' = exp(xi) @ T``.

The TUM 7-vector layout ``[tx, ty, tz, qx, qy, qz, qw]`` is used for every
file format.

"""

import numpy as np
from scipy.spatial.transform import Rotation

from terrainmaker.exceptions import MalformedPoseError

_SMALL_ANGLE = 1e-8


def hat(v):
    """Skew-symmetric matrix of a 3-vector."""
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def make_pose(R=None, t=None):
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    if t is not None:
        T[:3, 3] = t
    return T


def inverse(T):
    R = T[:3, :3]
    Ti = np.eye(4)
    Ti[:3, :3] = R.T
    Ti[:3, 3] = -R.T @ T[:3, 3]
    return Ti


def compose(*poses):
    out = np.eye(4)
    for T in poses:
        out = out @ T
    return out


def rot_z(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(pitch):
    c, s = np.cos(pitch), np.sin(pitch)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_x(roll):
    c, s = np.cos(roll), np.sin(roll)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def yaw_of(T):
    """Heading of the pose's x axis projected on the horizontal plane."""
    R = T[:3, :3]
    return float(np.arctan2(R[1, 0], R[0, 0]))


def rotation_angle(R):
    """Geodesic angle (radians) of rotation matrix ``R``."""
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(c))


def _so3_left_jacobian(omega):
    theta = np.linalg.norm(omega)
    W = hat(omega)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * W + W @ W / 6.0
    return (np.eye(3)
            + (1.0 - np.cos(theta)) / theta**2 * W
            + (theta - np.sin(theta)) / theta**3 * W @ W)


def _so3_left_jacobian_inv(omega):
    theta = np.linalg.norm(omega)
    W = hat(omega)
    if theta < _SMALL_ANGLE:
        return np.eye(3) - 0.5 * W + W @ W / 12.0
    coef = (1.0 - theta * np.sin(theta) / (2.0 * (1.0 - np.cos(theta)))) / theta**2
    return np.eye(3) - 0.5 * W + coef * W @ W


def exp(xi):
    """Exponential map from a twist ``[rho, omega]`` to a 4x4 pose."""
    xi = np.asarray(xi, dtype=float)
    rho, omega = xi[:3], xi[3:]
    T = np.eye(4)
    T[:3, :3] = Rotation.from_rotvec(omega).as_matrix()
    T[:3, 3] = _so3_left_jacobian(omega) @ rho
    return T


def log(T):
    """Logarithm map from a 4x4 pose to a twist ``[rho, omega]``."""
    omega = Rotation.from_matrix(T[:3, :3]).as_rotvec()
    rho = _so3_left_jacobian_inv(omega) @ T[:3, 3]
    return np.concatenate([rho, omega])


def adjoint(T):
    """6x6 adjoint of ``T`` acting on ``[rho, omega]`` twists."""
    R = T[:3, :3]
    Ad = np.zeros((6, 6))
    Ad[:3, :3] = R
    Ad[:3, 3:] = hat(T[:3, 3]) @ R
    Ad[3:, 3:] = R
    return Ad


def small_adjoint(xi):
    """6x6 matrix ``ad(xi)`` of a twist."""
    ad = np.zeros((6, 6))
    ad[:3, :3] = hat(xi[3:])
    ad[:3, 3:] = hat(xi[:3])
    ad[3:, 3:] = hat(xi[3:])
    return ad


def left_jacobian_inv(xi):
    """Second-order approximation of the inverse left Jacobian of SE(3)."""
    ad = small_adjoint(xi)
    return np.eye(6) - 0.5 * ad + ad @ ad / 12.0


def from_tum(vec):
    """Pose from ``[tx, ty, tz, qx, qy, qz, qw]``."""
    vec = np.asarray(vec, dtype=float)
    q = vec[3:7]
    norm = np.linalg.norm(q)
    if not np.all(np.isfinite(vec)) or norm < 1e-12:
        raise MalformedPoseError(f"se3.from_tum - invalid pose vector {vec}")
    return make_pose(Rotation.from_quat(q / norm).as_matrix(), vec[:3])


def to_tum(T):
    """``[tx, ty, tz, qx, qy, qz, qw]`` of a pose, with ``qw >= 0``."""
    q = Rotation.from_matrix(T[:3, :3]).as_quat()
    if q[3] < 0:
        q = -q
    return np.concatenate([T[:3, 3], q])


def transform_points(T, points):
    points = np.asarray(points, dtype=float)
    return points @ T[:3, :3].T + T[:3, 3]


def check_pose(T, tol=1e-9):
    """Raise :class:`MalformedPoseError` unless ``T`` is a valid rigid transform."""
    T = np.asarray(T, dtype=float)
    if T.shape != (4, 4) or not np.all(np.isfinite(T)):
        raise MalformedPoseError("se3.check_pose - pose must be a finite 4x4 matrix")
    R = T[:3, :3]
    if np.linalg.norm(R.T @ R - np.eye(3)) >= tol or abs(np.linalg.det(R) - 1.0) >= tol:
        raise MalformedPoseError("se3.check_pose - rotation is not orthonormal with unit determinant")
    if not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0]):
        raise MalformedPoseError("se3.check_pose - last row must be [0, 0, 0, 1]")
    return T


def orthonormalize(T):
    """Project the rotation block of ``T`` back onto SO(3)."""
    U, _, Vt = np.linalg.svd(T[:3, :3])
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    out = T.copy()
    out[:3, :3] = R
    return out
