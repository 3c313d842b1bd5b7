"""Rigid-body models: velocity-controlled and acceleration-controlled bodies
plus a thrust/torque quadrotor, with rotation-group integrators.

Attitude is integrated through the exponential map: the incremental rotation
lives in the Lie algebra, where a fourth-order Runge-Kutta step with the
inverse right-trivialized tangent keeps the update on the group to roundoff.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom3d import E1, E2, E3, cross3, orthonormalize, so3_exp, vee

GRAVITY = 9.81


class DegenerateThrust(ValueError):
    """Raised when the commanded acceleration gives no usable thrust axis."""


def _zeros3():
    return np.zeros(3)


def _eye3():
    return np.eye(3)


@dataclass
class BodyState:
    """Pose and twist of the agent.

    p and rot are used by every model; v and omega only by the second-order
    ones.  The first-order stepper stores the applied rates here so logs can
    report them.
    """

    p: np.ndarray = field(default_factory=_zeros3)
    rot: np.ndarray = field(default_factory=_eye3)
    v: np.ndarray = field(default_factory=_zeros3)
    omega: np.ndarray = field(default_factory=_zeros3)

    def copy(self):
        return BodyState(self.p.copy(), self.rot.copy(),
                         self.v.copy(), self.omega.copy())


@dataclass
class QuadrotorParams:
    mass: float = 1.0
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.01, 0.01, 0.02]))
    gravity: float = GRAVITY

    def __post_init__(self):
        self.inertia = np.atleast_2d(np.asarray(self.inertia, dtype=float))
        if self.inertia.shape == (1, 3):
            self.inertia = np.diag(self.inertia[0])
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if np.any(np.linalg.eigvalsh(0.5 * (self.inertia + self.inertia.T)) <= 0.0):
            raise ValueError("inertia must be positive definite")
        self.inertia_inv = np.linalg.inv(self.inertia)


@dataclass
class TrackingGains:
    k_p: float = 20.8
    k_v: float = 13.3
    k_r: float = 54.81
    k_omega: float = 10.54

    def __post_init__(self):
        for name in ("k_p", "k_v", "k_r", "k_omega"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def attitude_error(rot, rot_goal):
    """Right attitude error 0.5 * vee(Rg' R - R' Rg); zero at rot == rot_goal."""
    return 0.5 * vee(rot_goal.T @ rot - rot.T @ rot_goal)


def _body_rotation_rate(theta, omega):
    # inverse right-trivialized tangent of exp, truncated past the order-4 term
    c = cross3(theta, omega)
    return omega + 0.5 * c + cross3(theta, c) / 12.0


def step_first_order(state, u, dt):
    """Advance a velocity-controlled body: exact translation, exponential attitude."""
    v, omega = u
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    p = state.p + dt * v
    rot = orthonormalize(state.rot @ so3_exp(omega * dt))
    return BodyState(p, rot, v.copy(), omega.copy())


def step_second_order(state, u, dt):
    """Advance an acceleration-controlled body one step.

    The flat subsystem is polynomial under constant (a, alpha) and is
    integrated exactly, matching what Runge-Kutta would return; the attitude
    increment is integrated with RK4 in the Lie algebra.
    """
    a, alpha = u
    a = np.asarray(a, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    p = state.p + dt * state.v + 0.5 * dt * dt * a
    v = state.v + dt * a
    om0 = state.omega

    # RK4 for theta' = dexpinv(theta, omega(t)), omega(t) = om0 + alpha t
    h = dt
    k1 = _body_rotation_rate(np.zeros(3), om0)
    k2 = _body_rotation_rate(0.5 * h * k1, om0 + 0.5 * h * alpha)
    k3 = _body_rotation_rate(0.5 * h * k2, om0 + 0.5 * h * alpha)
    k4 = _body_rotation_rate(h * k3, om0 + h * alpha)
    theta = (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    rot = orthonormalize(state.rot @ so3_exp(theta))
    return BodyState(p, rot, v, om0 + dt * alpha)


def body_angular_accel(omega, tau, params):
    """Euler equation: omega' = J^-1 (tau - omega x J omega)."""
    j_om = params.inertia @ omega
    return params.inertia_inv @ (tau - cross3(omega, j_om))


def quadrotor_step(state, wrench, dt, params):
    """Advance the thrust/torque quadrotor one RK4 step.

    wrench is (f, tau) with scalar thrust f along the body z axis.  The
    attitude increment is carried in the Lie algebra alongside the flat
    states so the thrust direction rotates consistently within the step.
    """
    f, tau = wrench
    tau = np.asarray(tau, dtype=float)
    acc_g = np.array([0.0, 0.0, -params.gravity])
    f_m = f / params.mass
    rot0 = state.rot

    def rates(p, v, theta, omega):
        thrust_dir = (rot0 @ so3_exp(theta))[:, 2]
        return (v,
                acc_g + f_m * thrust_dir,
                _body_rotation_rate(theta, omega),
                body_angular_accel(omega, tau, params))

    y0 = (state.p, state.v, np.zeros(3), state.omega)
    k1 = rates(*y0)
    k2 = rates(*(y + 0.5 * dt * k for y, k in zip(y0, k1)))
    k3 = rates(*(y + 0.5 * dt * k for y, k in zip(y0, k2)))
    k4 = rates(*(y + dt * k for y, k in zip(y0, k3)))
    p, v, theta, omega = (y + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
                          for y, a, b, c, d in zip(y0, k1, k2, k3, k4))
    rot = orthonormalize(rot0 @ so3_exp(theta))
    return BodyState(p, rot, v, omega)


def geometric_tracking_control(state, ref, gains, params, heading=None):
    """Thrust and torque tracking a position reference on the rotation group.

    Args:
        state: current BodyState.
        ref: (p_ref, v_ref, a_ref) tuple of world-frame references.
        gains: TrackingGains; k_r and k_omega act directly as torque gains.
        params: QuadrotorParams.
        heading: optional world-frame heading reference for the body x axis;
            defaults to E1.

    Returns:
        (f, tau): scalar thrust along the body z axis and body torque.

    Raises:
        DegenerateThrust: when the gravity-compensated acceleration command
            is too small to define a thrust direction.
    """
    p_ref, v_ref, a_ref = ref
    a_des = (gains.k_p * (p_ref - state.p) + gains.k_v * (v_ref - state.v)
             + a_ref + params.gravity * E3)
    n = float(np.linalg.norm(a_des))
    if n < 1e-6:
        raise DegenerateThrust("acceleration command defines no thrust axis")
    f = params.mass * float(a_des @ (state.rot @ E3))
    b3 = a_des / n
    b1_ref = E1 if heading is None else np.asarray(heading, dtype=float)
    b2 = cross3(b3, b1_ref)
    nb2 = float(np.linalg.norm(b2))
    if nb2 < 1e-9:
        b2 = cross3(b3, E2)
        nb2 = float(np.linalg.norm(b2))
    b2 = b2 / nb2
    b1 = cross3(b2, b3)
    rot_des = np.column_stack([b1, b2, b3])
    e_r = attitude_error(state.rot, rot_des)
    j_om = params.inertia @ state.omega
    tau = -gains.k_r * e_r - gains.k_omega * state.omega + cross3(state.omega, j_om)
    return f, tau


def wrench_from_accel(u, state, params):
    """Map a filtered (a, alpha) pair to the quadrotor wrench.

    Thrust realizes the commanded acceleration along the current body z axis
    (gravity compensated); the torque inverts the Euler equation so the
    angular acceleration is realized exactly.
    """
    a, alpha = u
    f = params.mass * float((np.asarray(a, dtype=float)
                             + params.gravity * E3) @ (state.rot @ E3))
    tau = params.inertia @ np.asarray(alpha, dtype=float) \
        + cross3(state.omega, params.inertia @ state.omega)
    return f, tau
