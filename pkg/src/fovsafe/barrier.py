"""Cone-visibility barrier and the split constraint rows of the safety filter.

A feature at world point q is visible to a camera at position p with attitude
R when its bearing beta = (q - p)/d lies inside the cone of half-aperture
psi around the optical axis R @ axis:

    h = beta . (R @ axis) - cos(psi) >= 0

The true feature distance d enters the position gradient of h as 1/d and is
unknown to the filter; only a running estimate dist_est is available.  The
filter therefore splits the single barrier constraint into a translation row
and an attitude row with gain shares c1 + c2 = gain_sum.  Whenever the ratio
d / dist_est stays inside [ratio_min, ratio_max] and c2 stays inside the
interval returned by the bounds functions below, satisfying the two rows
implies the original constraint with a positive effective scale, so the cone
constraint survives the distance error.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom3d import NonUnitVector, cross3, hat

# Open-interval gain bounds are enforced as closed intervals shrunk by this
# margin; the filter QP needs a closed feasible set.
C2_STRICT_MARGIN = 1e-9


class InvalidRange(ValueError):
    """Raised when the distance-ratio bounds do not bracket 1."""


class GammaTooSmall(ValueError):
    """Raised when gain_sum is too small for the configured class-K slopes."""


@dataclass
class ClassK:
    """Linear class-K function value(h) = kappa * h.

    Only the linear kind is implemented; the `kind` tag is the extension
    point for other shapes.  slope0 is the derivative at the origin, which
    for the linear kind equals kappa everywhere.
    """

    kappa: float
    kind: str = "linear"

    def __post_init__(self):
        if self.kappa <= 0.0:
            raise ValueError("class-K slope kappa must be positive")
        if self.kind != "linear":
            raise NotImplementedError(f"unsupported class-K kind {self.kind!r}")

    def __call__(self, h):
        return self.kappa * h

    @property
    def slope0(self):
        return self.kappa


@dataclass
class FovSensor:
    """Conic field of view: body-frame optical axis and half-aperture (rad)."""

    axis: np.ndarray
    half_aperture: float
    cos_half_aperture: float = field(init=False)

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=float)
        n = float(np.linalg.norm(self.axis))
        if abs(n - 1.0) > 1e-9:
            raise NonUnitVector(f"optical axis must be unit length, norm {n:.3e}")
        if not 0.0 < self.half_aperture < np.pi / 2.0:
            raise ValueError("half aperture must lie in (0, pi/2)")
        self.cos_half_aperture = float(np.cos(self.half_aperture))


@dataclass
class FeatureObs:
    """What the filter knows about one feature.

    bearing is measured exactly, bearing_rate is its measured time derivative
    (zero for a first-order body, where it is not needed), and dist_est is the
    running distance estimate substituted wherever the exact formulas contain
    1/d.  point is the ground-truth feature position, carried only so that the
    simulator can recompute exact quantities; the filter code never reads it.
    """

    bearing: np.ndarray
    dist_est: float
    bearing_rate: np.ndarray = field(default_factory=lambda: np.zeros(3))
    point: np.ndarray | None = None


@dataclass
class RobustnessParams:
    """Split-constraint parameters.

    gain_sum is the total class-K scale shared by the two rows (c1 + c2),
    ratio_min/ratio_max bound the tolerated distance ratio d / dist_est with
    ratio_min < 1 < ratio_max, and margin is a constant offset demanded from
    the attitude row of the second-order filter.
    """

    gain_sum: float
    ratio_min: float
    ratio_max: float
    margin: float = 0.0


@dataclass
class ConstraintRow:
    """One affine filter row: coeff_u . u + coeff_c1 * c1 + coeff_c2 * c2 >= rhs.

    u is the stacked 6-dof input (translational part first, angular part
    last); c1 and c2 are the per-feature gain shares.
    """

    coeff_u: np.ndarray
    coeff_c1: float
    coeff_c2: float
    rhs: float


@dataclass
class ConstraintGroup:
    """Both rows for one feature plus the share budget and the c2 interval."""

    rows: tuple
    gain_sum: float
    c2_lo: float
    c2_hi: float


@dataclass
class CurvatureTerms:
    """Second-derivative pieces of the barrier along the body motion.

    The drift (input-free) part of the second time derivative of h is

        omega . (rot_rot @ omega) + 2 v . (cross @ omega)
            + vperp_vperp + vperp_vpar

    where vperp_vperp and vperp_vpar are the translational quadratic terms
    already contracted with the velocity split into the components normal
    and parallel to the bearing; the multiplicity of the mixed term is folded
    into vperp_vpar.  The parallel-parallel term vanishes identically and is
    not returned.  dist_est replaces the unknown 1/d factors in cross and
    vperp_vpar.
    """

    rot_rot: np.ndarray
    cross: np.ndarray
    vperp_vperp: float
    vperp_vpar: float


def barrier(bearing, rot, sensor):
    """Barrier value h = bearing . (R @ axis) - cos(half_aperture)."""
    return float(bearing @ (rot @ sensor.axis)) - sensor.cos_half_aperture


def barrier_grad_position(bearing, rot, sensor, dist):
    """Gradient of h in the body position, -P(bearing) R axis / dist."""
    if dist <= 0.0:
        raise ValueError("distance must be positive")
    z = rot @ sensor.axis
    return -(z - bearing * float(bearing @ z)) / dist


def barrier_grad_attitude(bearing, rot, sensor):
    """Body-frame attitude gradient g with g . omega = d/dt h under R' = R hat(omega).

    Independent of the feature distance.
    """
    return cross3(sensor.axis, rot.T @ bearing)


def curvature_terms(state, obs, sensor):
    """Evaluate the barrier curvature pieces at one state and observation.

    Args:
        state: body state providing rot, v and omega.
        obs: FeatureObs; obs.dist_est replaces 1/d wherever it appears.
        sensor: FovSensor.

    Returns:
        CurvatureTerms; see the dataclass docstring for the contractions.
    """
    beta = obs.bearing
    bdot = obs.bearing_rate
    rot = state.rot
    z = rot @ sensor.axis
    bz = float(beta @ z)
    pbeta = np.eye(3) - np.outer(beta, beta)
    rot_rot = hat(rot.T @ beta) @ hat(sensor.axis)
    cross = pbeta @ rot @ hat(sensor.axis) / obs.dist_est
    vperp_vperp = -bz * float(bdot @ bdot)
    vperp_vpar = 2.0 * float(state.v @ beta) * float(bdot @ (pbeta @ z)) / obs.dist_est
    return CurvatureTerms(rot_rot, cross, vperp_vperp, vperp_vpar)


def scale_floor(gamma1, gamma2):
    """Floor of the admissible effective scale for two class-K slopes.

    Equals 4 a b / (a + b)^2 for origin slopes a and b: 1 when the slopes
    match and smaller the more unbalanced they are.  Symmetric in its
    arguments, so the ordering of the two functions does not matter.
    """
    a = gamma1.slope0
    b = gamma2.slope0
    return 4.0 * a * b / (a + b) ** 2


def _check_ratios(rp):
    if not rp.ratio_min < 1.0 < rp.ratio_max:
        raise InvalidRange(
            f"need ratio_min < 1 < ratio_max, got [{rp.ratio_min}, {rp.ratio_max}]")


def attitude_gain_bounds_first_order(rp):
    """Open interval of attitude-row shares c2 robust for the first-order filter.

    Any c2 strictly inside (gain_sum/(1 - ratio_max), gain_sum/(1 - ratio_min))
    keeps the effective scale c2 + c1/ratio positive for every ratio in
    [ratio_min, ratio_max].
    """
    _check_ratios(rp)
    if rp.gain_sum <= 0.0:
        raise InvalidRange("gain_sum must be positive")
    lo = rp.gain_sum / (1.0 - rp.ratio_max)
    hi = rp.gain_sum / (1.0 - rp.ratio_min)
    return lo, hi


def attitude_gain_bounds_second_order(floor, rp):
    """Closed interval of shares c2 robust for the second-order filter.

    floor is the scale_floor of the two class-K functions; the interval keeps
    the effective scale c2 + c1/ratio at or above floor for every ratio in
    [ratio_min, ratio_max], which is what the high-order barrier argument
    needs.  Raises GammaTooSmall when gain_sum <= floor, where the interval
    is empty.
    """
    _check_ratios(rp)
    if rp.gain_sum <= floor:
        raise GammaTooSmall(
            f"gain_sum {rp.gain_sum} must exceed the scale floor {floor}")
    lo = (floor * rp.ratio_max - rp.gain_sum) / (rp.ratio_max - 1.0)
    hi = (floor * rp.ratio_min - rp.gain_sum) / (rp.ratio_min - 1.0)
    return lo, hi


def split_rows_first_order(state, obs, sensor, gamma, rp):
    """Velocity-input filter rows for one feature.

    The translation row uses dist_est in place of the unknown distance; the
    attitude row is distance-free.  Decision variables are (v, omega, c1, c2)
    with c1 + c2 = gain_sum and c2 inside the returned interval (already
    shrunk by the strictness margin).
    """
    beta = obs.bearing
    rot = state.rot
    z = rot @ sensor.axis
    h = float(beta @ z) - sensor.cos_half_aperture
    gh = gamma(h)
    coeff_v = -(z - beta * float(beta @ z)) / obs.dist_est
    g_att = cross3(sensor.axis, rot.T @ beta)
    row_v = ConstraintRow(np.concatenate([coeff_v, np.zeros(3)]), gh, 0.0, 0.0)
    row_w = ConstraintRow(np.concatenate([np.zeros(3), g_att]), 0.0, gh, 0.0)
    lo, hi = attitude_gain_bounds_first_order(rp)
    return ConstraintGroup((row_v, row_w),
                           rp.gain_sum,
                           lo + C2_STRICT_MARGIN,
                           hi - C2_STRICT_MARGIN)


def split_rows_second_order(state, obs, sensor, gamma1, gamma2, rp):
    """Acceleration-input filter rows for one feature.

    Row 1 collects the terms that carry 1/d (evaluated with dist_est) and the
    c1 share of the class-K expression; row 2 collects everything measurable
    without the distance, the c2 share, and the margin.  Summing row 1 scaled
    by 1/ratio with row 2 reproduces the full second-order barrier constraint
    scaled by the effective gain c2 + c1/ratio, minus the margin.

    bearing_rate must be the exact kinematic value -P(beta) v / d; the
    perpendicular velocity component is recovered from it, which is what
    keeps row 2 free of the distance.
    """
    beta = obs.bearing
    bdot = obs.bearing_rate
    rot = state.rot
    v = state.v
    omega = state.omega
    axis = sensor.axis

    z = rot @ sensor.axis
    bz = float(beta @ z)
    h = bz - sensor.cos_half_aperture
    rb = rot.T @ beta
    g_att = cross3(axis, rb)

    hdot = float(bdot @ z) + float(g_att @ omega)
    phi = gamma1.slope0 * hdot + gamma2(hdot + gamma1(h))

    # translation row: position gradient and the mixed perp/parallel term,
    # both with dist_est standing in for the unknown distance
    coeff_a = -(z - beta * bz) / obs.dist_est
    bdot_z = float(bdot @ z) - float(bdot @ beta) * bz
    vpar_term = 2.0 * float(v @ beta) * bdot_z / obs.dist_est
    row_a = ConstraintRow(np.concatenate([coeff_a, np.zeros(3)]),
                          phi, 0.0, -vpar_term)

    # attitude row: all distance-free curvature terms
    # omega . hat(R^T beta) hat(axis) omega = (omega.axis)(R^T beta.omega)
    #                                         - (R^T beta.axis)|omega|^2
    rot_rot = (float(omega @ axis) * float(rb @ omega)
               - float(rb @ axis) * float(omega @ omega))
    cross2 = -2.0 * float((rot.T @ bdot) @ cross3(axis, omega))
    vperp_vperp = -bz * float(bdot @ bdot)
    drift = rot_rot + cross2 + vperp_vperp
    row_w = ConstraintRow(np.concatenate([np.zeros(3), g_att]),
                          0.0, phi, rp.margin - drift)

    floor = scale_floor(gamma1, gamma2)
    lo, hi = attitude_gain_bounds_second_order(floor, rp)
    return ConstraintGroup((row_a, row_w), rp.gain_sum, lo, hi)
