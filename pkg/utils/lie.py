"""
Rotation and rigid-transform helpers for SO(d) / SE(d), d in {2, 3}.
"""
from typing import Tuple

import numpy as np
from scipy.spatial.transform import Rotation


def rotation_2d(theta: float) -> np.ndarray:
    """Planar rotation matrix for angle theta (radians)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def yaw_of(rotation: np.ndarray) -> float:
    """Heading angle of a 2x2 rotation (or the z-yaw of a 3x3 one)."""
    return float(np.arctan2(rotation[1, 0], rotation[0, 0]))


def tangent_dim(d: int) -> int:
    """Dimension of so(d)."""
    return d * (d - 1) // 2


def generators(d: int) -> np.ndarray:
    """Basis of so(d) as a (k, d, d) stack, hat(w) = sum_k w_k G_k."""
    if d == 2:
        return np.array([[[0.0, -1.0], [1.0, 0.0]]])
    G = np.zeros((3, 3, 3))
    G[0, 2, 1], G[0, 1, 2] = 1.0, -1.0
    G[1, 0, 2], G[1, 2, 0] = 1.0, -1.0
    G[2, 1, 0], G[2, 0, 1] = 1.0, -1.0
    return G


def exp_so(omega: np.ndarray, d: int) -> np.ndarray:
    """Exponential map so(d) -> SO(d); omega has tangent_dim(d) entries."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if d == 2:
        return rotation_2d(omega[0])
    return Rotation.from_rotvec(omega).as_matrix()


def log_so(rotation: np.ndarray) -> np.ndarray:
    """Logarithm SO(d) -> so(d) coordinates."""
    if rotation.shape[0] == 2:
        return np.array([yaw_of(rotation)])
    return Rotation.from_matrix(rotation).as_rotvec()


def random_rotation(rng: np.random.Generator, d: int, max_angle: float) -> np.ndarray:
    """Rotation by a uniform angle in [0, max_angle] about a uniform random axis."""
    angle = rng.uniform(0.0, max_angle) if max_angle > 0 else 0.0
    return exp_so(angle * random_axis(rng, d), d)


def random_axis(rng: np.random.Generator, d: int) -> np.ndarray:
    """Unit axis uniform on the sphere (d=3) or a random sign (d=2)."""
    if d == 2:
        return np.array([1.0 if rng.random() < 0.5 else -1.0])
    axis = rng.normal(size=3)
    return axis / np.linalg.norm(axis)


def wrap_angle(theta: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    return float((theta + np.pi) % (2.0 * np.pi) - np.pi)


def project_to_rotation(matrix: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm (orthogonal Procrustes with det correction)."""
    U, _, Vt = np.linalg.svd(matrix)
    D = np.eye(matrix.shape[0])
    D[-1, -1] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return U @ D @ Vt


def procrustes(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Rotation R minimizing sum ||R s_k - t_k||^2 for column-stacked point sets."""
    return project_to_rotation(target @ source.T)


def quat_from_rotation(rotation: np.ndarray) -> np.ndarray:
    """Quaternion (qx, qy, qz, qw) with qw >= 0; 2x2 rotations become yaw-only."""
    if rotation.shape[0] == 2:
        half = 0.5 * yaw_of(rotation)
        quat = np.array([0.0, 0.0, np.sin(half), np.cos(half)])
    else:
        quat = Rotation.from_matrix(rotation).as_quat()
    if quat[3] < 0:
        quat = -quat
    return quat


def rotation_from_quat(quat: np.ndarray, d: int = 3) -> np.ndarray:
    """Rotation matrix from (qx, qy, qz, qw); d=2 keeps the yaw only."""
    quat = np.asarray(quat, dtype=float)
    quat = quat / np.linalg.norm(quat)
    if d == 2:
        return rotation_2d(2.0 * np.arctan2(quat[2], quat[3]))
    return Rotation.from_quat(quat).as_matrix()


def sym(matrix: np.ndarray) -> np.ndarray:
    """Symmetric part over the last two axes."""
    return 0.5 * (matrix + np.swapaxes(matrix, -1, -2))


def rigid_alignment(source: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rigid (R, t) minimizing sum ||R s + t - t_k||^2 over (N, d) point sets, no scale."""
    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    R = procrustes((source - mu_s).T, (target - mu_t).T)
    return R, mu_t - R @ mu_s
