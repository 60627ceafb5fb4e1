"""Compiled inner loops for rigid-body integration.

Kept free of Python objects so numba can compile them; the public wrappers
live in :mod:`aerograsp.dynamics`.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


@njit(cache=True)
def _skew(v):
    S = np.zeros((3, 3))
    S[0, 1] = -v[2]
    S[0, 2] = v[1]
    S[1, 0] = v[2]
    S[1, 2] = -v[0]
    S[2, 0] = -v[1]
    S[2, 1] = v[0]
    return S


@njit(cache=True)
def attitude_torque(R, R_des, w, kp, kd, tau_limit):
    E = R_des.T @ R - R.T @ R_des
    e_R = 0.5 * np.array([E[2, 1], E[0, 2], E[1, 0]])
    tau = -kp * e_R - kd * w
    for i in range(3):
        if tau[i] > tau_limit:
            tau[i] = tau_limit
        elif tau[i] < -tau_limit:
            tau[i] = -tau_limit
    return tau


@njit(cache=True)
def payload_torque(R, m_p, r_p, g):
    # weight expressed in body axes: R^T (-m g z) = -m g * (third row of R)
    f_body = -m_p * g * R[2, :].copy()
    return _cross(r_p, f_body)


@njit(cache=True)
def _deriv(v, R, w, thrust, tau, f_e, m, J, J_inv, m_p, r_p, g, drag):
    a = (thrust * R[:, 2].copy() + f_e - drag * v) / m
    a[2] -= g
    R_dot = R @ _skew(w)
    tau_tot = tau + payload_torque(R, m_p, r_p, g) - _cross(w, J @ w)
    w_dot = J_inv @ tau_tot
    return a, R_dot, w_dot


@njit(cache=True)
def rk4_step(p, v, R, w, thrust, tau, f_e, m, J, J_inv, m_p, r_p, g, drag, dt):
    a1, Rd1, wd1 = _deriv(v, R, w, thrust, tau, f_e, m, J, J_inv, m_p, r_p, g, drag)
    v1 = v
    v2 = v + 0.5 * dt * a1
    R2 = R + 0.5 * dt * Rd1
    w2 = w + 0.5 * dt * wd1
    a2, Rd2, wd2 = _deriv(v2, R2, w2, thrust, tau, f_e, m, J, J_inv, m_p, r_p, g, drag)
    v3 = v + 0.5 * dt * a2
    R3 = R + 0.5 * dt * Rd2
    w3 = w + 0.5 * dt * wd2
    a3, Rd3, wd3 = _deriv(v3, R3, w3, thrust, tau, f_e, m, J, J_inv, m_p, r_p, g, drag)
    v4 = v + dt * a3
    R4 = R + dt * Rd3
    w4 = w + dt * wd3
    a4, Rd4, wd4 = _deriv(v4, R4, w4, thrust, tau, f_e, m, J, J_inv, m_p, r_p, g, drag)

    p_n = p + (dt / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
    v_n = v + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    R_n = R + (dt / 6.0) * (Rd1 + 2.0 * Rd2 + 2.0 * Rd3 + Rd4)
    w_n = w + (dt / 6.0) * (wd1 + 2.0 * wd2 + 2.0 * wd3 + wd4)

    # one Newton step of the polar decomposition; drift per step is ~1e-12
    # so the quadratic convergence keeps R on SO(3) to machine precision
    Q = 1.5 * R_n - 0.5 * R_n @ (R_n.T @ R_n)
    return p_n, v_n, Q, w_n


@njit(cache=True)
def propagate(p, v, R, w, thrust, R_des, kp, kd, tau_limit, f_e, m, J, J_inv,
              m_p, r_p, g, drag, dt, n_steps, ground):
    """Run ``n_steps`` RK4 steps with the attitude PD re-evaluated each step.

    With ``ground`` set, the vehicle rests on the plane z = 0: penetration is
    removed, motion is stopped and the attitude is levelled at its yaw.
    """
    for _ in range(n_steps):
        tau = attitude_torque(R, R_des, w, kp, kd, tau_limit)
        p, v, R, w = rk4_step(p, v, R, w, thrust, tau, f_e, m, J, J_inv,
                              m_p, r_p, g, drag, dt)
        if ground and p[2] < 0.0:
            p = p.copy()
            p[2] = 0.0
            v = np.zeros(3)
            w = np.zeros(3)
            yaw = np.arctan2(R[1, 0], R[0, 0])
            c = np.cos(yaw)
            s = np.sin(yaw)
            R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return p, v, R, w


@njit(cache=True)
def exp_so3(phi):
    th = np.sqrt(phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2])
    K = _skew(phi)
    if th < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + (np.sin(th) / th) * K + ((1.0 - np.cos(th)) / (th * th)) * K @ K


@njit(cache=True)
def ekf_predict(p, v, R, ba, bg, P, accel, gyro, dt, q_acc, q_gyr, q_ba, q_bg, g):
    """Strapdown step and error-covariance propagation ``F P F^T + Q``."""
    f = accel - ba
    w = gyro - bg
    a = R @ f
    a[2] -= g
    p_n = p + v * dt + 0.5 * a * dt * dt
    v_n = v + a * dt
    dR = exp_so3(w * dt)
    R_n = R @ dR
    F = np.eye(15)
    for i in range(3):
        F[i, 3 + i] = dt
        F[6 + i, 12 + i] = -dt
    RSf = -(R @ _skew(f)) * dt
    for i in range(3):
        for j in range(3):
            F[3 + i, 6 + j] = RSf[i, j]
            F[3 + i, 9 + j] = -R[i, j] * dt
            F[6 + i, 6 + j] = dR[j, i]
    P_n = F @ P @ F.T
    for i in range(3):
        P_n[3 + i, 3 + i] += q_acc
        P_n[6 + i, 6 + i] += q_gyr
        P_n[9 + i, 9 + i] += q_ba
        P_n[12 + i, 12 + i] += q_bg
    P_n = 0.5 * (P_n + P_n.T)
    return p_n, v_n, R_n, P_n
