"""Small SO(3) helpers shared by the dynamics, estimator and controllers.

Frames are Front-Left-Up throughout. Euler angles use the Z-Y-X order
(yaw, pitch, roll), so ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""

import math

import numpy as np

E3 = np.array([0.0, 0.0, 1.0])


def skew(v):
    """Matrix S(v) with S(v) @ w == cross(v, w)."""
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def vee(M):
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def exp_so3(phi):
    """Rodrigues formula for the rotation vector ``phi``."""
    angle = math.sqrt(phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2])
    K = skew(phi)
    if angle < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return (np.eye(3) + (math.sin(angle) / angle) * K
            + ((1.0 - math.cos(angle)) / (angle * angle)) * K @ K)


def log_so3(R):
    cos_angle = min(1.0, max(-1.0, 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)))
    angle = math.acos(cos_angle)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-7:
        return 0.5 * w
    if math.pi - angle < 1e-6:
        # near pi the antisymmetric part vanishes; use the symmetric part
        B = 0.5 * (R + np.eye(3))
        axis = np.sqrt(np.clip(np.diag(B), 0.0, None))
        k = int(np.argmax(axis))
        axis = B[:, k] / math.sqrt(B[k, k])
        return angle * axis
    return (angle / (2.0 * math.sin(angle))) * w


def euler_to_rot(roll, pitch, yaw):
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def rot_to_euler(R):
    """Return (roll, pitch, yaw) for a Z-Y-X rotation matrix."""
    pitch = -math.asin(min(1.0, max(-1.0, R[2, 0])))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return roll, pitch, yaw


def yaw_of(R):
    return math.atan2(R[1, 0], R[0, 0])


def rot_z(yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def orthonormalize(R):
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, 2] = -U[:, 2]
        Q = U @ Vt
    return Q


def wrap_angle(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi
