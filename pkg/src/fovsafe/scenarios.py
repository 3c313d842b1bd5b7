"""Closed-loop visibility-filter experiments.

Three agents track the same figure-eight-like sweep past a square gate of
four features while the filter keeps every feature inside the camera cone:

  first-order        velocity and body-rate inputs, split rows on (v, omega)
  double-integrator  acceleration inputs, split rows on (a, alpha)
  quadrotor          filtered (a, alpha) mapped to thrust and torque

The nominal attitude input holds the aim chosen at t = 0 (camera on the gate
centroid), so following the reference without the filter sweeps the features
out of the cone; the filter's attitude row injects the turn that keeps them
visible.  The quadrotor's nominal instead ties the goal attitude to the
thrust direction it needs for tracking and leaves the heading wherever the
filter steered it, which keeps the two controllers from fighting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qp
from .barrier import (ClassK, FeatureObs, FovSensor, RobustnessParams,
                      scale_floor, split_rows_first_order,
                      split_rows_second_order)
from .dynamics import (BodyState, QuadrotorParams, TrackingGains,
                       attitude_error, quadrotor_step, step_first_order,
                       step_second_order, wrench_from_accel)
from .geom3d import E3, CoincidentPoints, aim_rotation, cross3, rotation_to_quat

KINDS = ("first-order", "double-integrator", "quadrotor")
D_HAT_MODES = ("constant-one", "true", "scaled-true", "sampled")

# qp_status codes stored in the log
STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_MAXITER = 2
STATUS_DISABLED = 3
STATUS_NAMES = {STATUS_OPTIMAL: "optimal", STATUS_INFEASIBLE: "infeasible",
                STATUS_MAXITER: "maxiter", STATUS_DISABLED: "disabled"}

SAFETY_FLOOR = -1e-6
MAX_CONSEC_INFEASIBLE = 10


class ScenarioError(RuntimeError):
    """Raised when a run cannot proceed (bad start, diverged, or stuck QP)."""


class ValidationError(ValueError):
    """Raised when a configuration violates an invariant."""


class EmptyLog(ValueError):
    """Raised when metrics are requested for a log with no records."""


def reference_trajectory(t):
    """Sweeping reference passing the gate; returns (p, v, a) at time t."""
    c3, s3 = math.cos(0.3 * t), math.sin(0.3 * t)
    c2, s2 = math.cos(0.2 * t), math.sin(0.2 * t)
    p = np.array([c3, 10.0 * c2, 2.0 * c2])
    v = np.array([-0.3 * s3, -2.0 * s2, -0.4 * s2])
    a = np.array([-0.09 * c3, -0.4 * c2, -0.08 * c2])
    return p, v, a


def gate_features():
    """Corners of the square gate the camera has to keep in view."""
    return np.array([[7.0, -1.5, 1.5],
                     [7.0, 1.5, 1.5],
                     [6.0, 1.5, -1.5],
                     [6.0, -1.5, -1.5]])


def nominal_pd(state, ref, gains, rot_goal):
    """Tracking PD: acceleration toward the reference, attitude toward rot_goal."""
    p_ref, v_ref, a_ref = ref
    a_des = gains.k_p * (p_ref - state.p) + gains.k_v * (v_ref - state.v) + a_ref
    alpha_des = -gains.k_r * attitude_error(state.rot, rot_goal) \
        - gains.k_omega * state.omega
    return a_des, alpha_des


@dataclass
class ScenarioConfig:
    """Everything a run needs; defaults reproduce the gate experiments."""

    kind: str = "double-integrator"
    duration: float = 60.0
    dt: float = 1e-3
    sensor: FovSensor = field(
        default_factory=lambda: FovSensor(np.array([1.0, 0.0, 0.0]), math.pi / 6.0))
    features: np.ndarray = field(default_factory=gate_features)
    rp: RobustnessParams = field(
        default_factory=lambda: RobustnessParams(3.0, 0.5, 15.0, 0.0))
    gains: TrackingGains = field(default_factory=TrackingGains)
    kappa: float = 1.0
    # second-order slopes are calibrated for the quadrotor slew: the attitude
    # row loses authority as a feature nears the cone center, and the class-K
    # relief c2_hi * kappa1 * kappa2 * h_max must cover the |omega|^2 drift
    # there.  4.0 each tolerates body rates to about 3.3 rad/s.
    kappa1: float = 4.0
    kappa2: float = 4.0
    d_hat_mode: str = "constant-one"
    d_hat_ratio: float = 1.0
    # binding rows buy slack at delta = multiplier / (2 weight); the weight
    # keeps that leak orders of magnitude below the 1e-6 safety floor
    slack_weight: float = 1e8
    seed: int = 0
    quad: QuadrotorParams = field(default_factory=QuadrotorParams)
    filter_enabled: bool = True

    def validate(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.duration <= 0.0:
            raise ValidationError("duration must be positive")
        if self.dt <= 0.0 or self.dt > self.duration:
            raise ValidationError("dt must lie in (0, duration]")
        feats = np.atleast_2d(np.asarray(self.features, dtype=float))
        if feats.shape[0] < 1 or feats.shape[1] != 3:
            raise ValidationError("features must be an N x 3 array with N >= 1")
        self.features = feats
        if not self.rp.ratio_min < 1.0:
            raise ValidationError("ratio_min < 1 required")
        if not self.rp.ratio_max > 1.0:
            raise ValidationError("ratio_max > 1 required")
        if self.rp.gain_sum <= 0.0:
            raise ValidationError("gain_sum must be positive")
        if self.rp.margin < 0.0:
            raise ValidationError("margin must be nonnegative")
        for name in ("kappa", "kappa1", "kappa2"):
            if getattr(self, name) <= 0.0:
                raise ValidationError(f"{name} must be positive")
        if self.kind != "first-order":
            floor = scale_floor(ClassK(self.kappa1), ClassK(self.kappa2))
            if self.rp.gain_sum <= floor:
                raise ValidationError(
                    f"gain_sum must exceed the scale floor {floor:.6g} "
                    "of the class-K slopes")
        if self.d_hat_mode not in D_HAT_MODES:
            raise ValidationError(
                f"d_hat_mode must be one of {D_HAT_MODES}, got {self.d_hat_mode!r}")
        if self.d_hat_mode == "scaled-true":
            if not self.rp.ratio_min <= self.d_hat_ratio <= self.rp.ratio_max:
                raise ValidationError(
                    "d_hat_ratio must lie in [ratio_min, ratio_max]")
        if self.slack_weight < 0.0:
            raise ValidationError("slack_weight must be nonnegative")
        if self.kind == "quadrotor" and abs(float(self.sensor.axis @ E3)) > 1e-6:
            raise ValidationError(
                "quadrotor runs need the camera axis in the body x-y plane")
        return self


@dataclass
class SimLog:
    """Arrays over the run; row k is time k * dt, inclusive of both ends."""

    t: np.ndarray
    p: np.ndarray
    quat: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    h: np.ndarray
    min_h: np.ndarray
    err: np.ndarray
    u_nom: np.ndarray
    u_filt: np.ndarray
    c: np.ndarray
    delta: np.ndarray
    d_hat: np.ndarray
    qp_status: np.ndarray
    config: ScenarioConfig

    def __len__(self):
        return self.t.shape[0]


@dataclass
class Summary:
    min_h: float
    max_tracking_error: float
    rms_tracking_error: float
    infeasible_steps: int
    max_c2_used: float


def summarize(log):
    """Reduce a log to the quantities the acceptance checks read."""
    if len(log) == 0:
        raise EmptyLog("cannot summarize an empty log")
    c2 = log.c[:, 1::2]
    max_c2 = float(c2.max()) if c2.size else 0.0
    bad = int(np.count_nonzero(log.qp_status == STATUS_INFEASIBLE)
              + np.count_nonzero(log.qp_status == STATUS_MAXITER))
    return Summary(float(log.min_h.min()),
                   float(log.err.max()),
                   float(np.sqrt(np.mean(log.err ** 2))),
                   bad,
                   max_c2)


def _quad_goal_rotation(a_cmd, state, sensor, gravity):
    """Goal attitude for the quadrotor nominal: thrust axis from the command,
    camera heading left where it currently points."""
    b3 = a_cmd + gravity * E3
    n = float(np.linalg.norm(b3))
    if n < 1e-9:
        b3 = E3.copy()
    else:
        b3 = b3 / n
    cam = state.rot @ sensor.axis
    b1r = cam - b3 * float(cam @ b3)
    nb = float(np.linalg.norm(b1r))
    if nb < 1e-9:
        # camera momentarily along the thrust axis: fall back to body x image
        b1r = state.rot[:, 0] - b3 * float(state.rot[:, 0] @ b3)
        nb = float(np.linalg.norm(b1r))
    b1 = b1r / nb
    b2 = cross3(b3, b1)
    # columns are the images of (axis, e3 x axis, e3)
    body = np.column_stack([sensor.axis, cross3(E3, sensor.axis), E3])
    return np.column_stack([b1, b2, b3]) @ body.T


def _distance_estimates(dists, cfg, ratio_state):
    if cfg.d_hat_mode == "constant-one":
        return np.ones_like(dists)
    if cfg.d_hat_mode == "true":
        return dists.copy()
    # scaled-true and sampled: estimate = true / ratio
    return dists / ratio_state


def run(cfg):
    """Run one closed-loop scenario and return the full SimLog.

    Raises ScenarioError when the start violates the cone condition, the
    state stops being finite, a feature is reached (no bearing), or the QP
    stays infeasible for more than MAX_CONSEC_INFEASIBLE steps.
    """
    cfg.validate()
    feats = cfg.features
    n_feat = feats.shape[0]
    centroid = feats.mean(axis=0)
    sensor = cfg.sensor
    gains = cfg.gains
    second_order = cfg.kind != "first-order"

    gamma = ClassK(cfg.kappa)
    gamma1 = ClassK(cfg.kappa1)
    gamma2 = ClassK(cfg.kappa2)

    p0, v0, _ = reference_trajectory(0.0)
    rot0 = aim_rotation(centroid - p0, sensor.axis)
    state = BodyState(p0.copy(), rot0, v0.copy(), np.zeros(3))

    steps = int(round(cfg.duration / cfg.dt))
    n_rec = steps + 1
    log = SimLog(
        t=np.zeros(n_rec), p=np.zeros((n_rec, 3)), quat=np.zeros((n_rec, 4)),
        v=np.zeros((n_rec, 3)), omega=np.zeros((n_rec, 3)),
        h=np.zeros((n_rec, n_feat)), min_h=np.zeros(n_rec), err=np.zeros(n_rec),
        u_nom=np.zeros((n_rec, 6)), u_filt=np.zeros((n_rec, 6)),
        c=np.zeros((n_rec, 2 * n_feat)), delta=np.zeros((n_rec, 2 * n_feat)),
        d_hat=np.zeros((n_rec, n_feat)), qp_status=np.zeros(n_rec, dtype=np.int8),
        config=cfg)

    rng = np.random.default_rng(cfg.seed)
    ratio_state = 1.0
    # low-pass pole for the sampled ratio walk, time constant 0.5 s
    lp = min(1.0, cfg.dt / 0.5)

    last_applied = np.zeros(6)
    consec_bad = 0
    warm = None
    accel_slave = None

    for k in range(n_rec):
        t = k * cfg.dt
        ref = reference_trajectory(t)

        diffs = feats - state.p
        dists = np.linalg.norm(diffs, axis=1)
        if float(dists.min()) < 1e-9:
            raise ScenarioError(f"feature reached at t={t:.3f}: bearing undefined")
        bearings = diffs / dists[:, None]
        axis_world = state.rot @ sensor.axis
        h_vals = bearings @ axis_world - sensor.cos_half_aperture

        if k == 0 and float(h_vals.min()) <= 0.0:
            raise ScenarioError("initial state must keep every feature "
                                "strictly inside the cone")

        if cfg.d_hat_mode == "sampled":
            ratio_state = (1.0 - lp) * ratio_state + lp * float(
                rng.uniform(cfg.rp.ratio_min, cfg.rp.ratio_max))
        elif cfg.d_hat_mode == "scaled-true":
            ratio_state = cfg.d_hat_ratio
        d_hats = _distance_estimates(dists, cfg, ratio_state)

        # nominal input; the attitude goal never fights the filter: the
        # quadrotor slaves it to the acceleration the filter let through on
        # the previous step (the thrust axis then converges to where the
        # filtered command is realizable), the others hold their attitude
        if cfg.kind == "quadrotor":
            a_cmd = gains.k_p * (ref[0] - state.p) \
                + gains.k_v * (ref[1] - state.v) + ref[2]
            a_goal = a_cmd if accel_slave is None else accel_slave
            rot_goal = _quad_goal_rotation(a_goal, state, sensor, cfg.quad.gravity)
        else:
            rot_goal = state.rot
        if cfg.kind == "first-order":
            v_des = ref[1] + gains.k_p * (ref[0] - state.p)
            w_des = -gains.k_r * attitude_error(state.rot, rot_goal)
            u_nom = np.concatenate([v_des, w_des])
        else:
            a_des, alpha_des = nominal_pd(state, ref, gains, rot_goal)
            u_nom = np.concatenate([a_des, alpha_des])

        # filter
        if cfg.filter_enabled:
            groups = []
            for i in range(n_feat):
                if second_order:
                    brate = -(state.v - bearings[i] * float(bearings[i] @ state.v)) / dists[i]
                    obs = FeatureObs(bearings[i], float(d_hats[i]), brate)
                    groups.append(split_rows_second_order(
                        state, obs, sensor, gamma1, gamma2, cfg.rp))
                else:
                    obs = FeatureObs(bearings[i], float(d_hats[i]))
                    groups.append(split_rows_first_order(
                        state, obs, sensor, gamma, cfg.rp))
            res = qp.solve_filter(u_nom, groups, cfg.slack_weight, warm=warm)
            if res.status is qp.QpStatus.OPTIMAL:
                u_filt = res.u
                consec_bad = 0
                status = STATUS_OPTIMAL
                warm = res.active_set
            else:
                # hold the last accepted input; persistent failure aborts
                u_filt = last_applied.copy()
                warm = None
                consec_bad += 1
                status = (STATUS_INFEASIBLE if res.status is qp.QpStatus.INFEASIBLE
                          else STATUS_MAXITER)
                if consec_bad > MAX_CONSEC_INFEASIBLE:
                    raise ScenarioError(
                        f"filter QP failed {consec_bad} consecutive steps at t={t:.3f}")
            c_vals = res.c
            d_vals = res.delta
        else:
            u_filt = u_nom
            status = STATUS_DISABLED
            c_vals = np.zeros(2 * n_feat)
            d_vals = np.zeros(2 * n_feat)

        log.t[k] = t
        log.p[k] = state.p
        log.quat[k] = rotation_to_quat(state.rot)
        log.v[k] = state.v
        log.omega[k] = state.omega
        log.h[k] = h_vals
        log.min_h[k] = h_vals.min()
        log.err[k] = float(np.linalg.norm(state.p - ref[0]))
        log.u_nom[k] = u_nom
        log.u_filt[k] = u_filt
        log.c[k] = c_vals
        log.delta[k] = d_vals
        log.d_hat[k] = d_hats
        log.qp_status[k] = status
        last_applied = u_filt
        if cfg.kind == "quadrotor":
            accel_slave = u_filt[:3]

        if k == n_rec - 1:
            break
        if cfg.kind == "first-order":
            state = step_first_order(state, (u_filt[:3], u_filt[3:]), cfg.dt)
        elif cfg.kind == "double-integrator":
            state = step_second_order(state, (u_filt[:3], u_filt[3:]), cfg.dt)
        else:
            wrench = wrench_from_accel((u_filt[:3], u_filt[3:]), state, cfg.quad)
            state = quadrotor_step(state, wrench, cfg.dt, cfg.quad)
        if not (np.isfinite(state.p).all() and np.isfinite(state.v).all()
                and np.isfinite(state.rot).all() and np.isfinite(state.omega).all()):
            raise ScenarioError(f"state diverged at t={t + cfg.dt:.3f}")

    return log
