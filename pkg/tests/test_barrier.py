"""Barrier derivatives against finite differences and frozen references.

The gradient and curvature formulas are checked two independent ways: once
against values frozen from a scipy-based script, once against central
differences of the barrier along exact flows.  The split-row builders are
checked against the recombination identity they are designed to satisfy.
"""
from fractions import Fraction

import numpy as np
import pytest

from fovsafe.barrier import (
    C2_STRICT_MARGIN,
    ClassK,
    FeatureObs,
    FovSensor,
    GammaTooSmall,
    InvalidRange,
    RobustnessParams,
    attitude_gain_bounds_first_order,
    attitude_gain_bounds_second_order,
    barrier,
    barrier_grad_attitude,
    barrier_grad_position,
    curvature_terms,
    scale_floor,
    split_rows_first_order,
    split_rows_second_order,
)
from fovsafe.dynamics import BodyState
from fovsafe.geom3d import E1, bearing_distance, so3_exp

SENSOR = FovSensor(axis=E1, half_aperture=np.pi / 6.0)


def random_setup(rng, spread=1.0):
    """State, feature point, exact observation.  Feature kept off the camera."""
    while True:
        p = spread * rng.normal(size=3)
        q = spread * rng.normal(size=3) + np.array([3.0, 0.0, 0.0])
        if np.linalg.norm(q - p) > 0.3:
            break
    rot = so3_exp(rng.normal(size=3))
    v = rng.normal(size=3)
    omega = rng.normal(size=3)
    state = BodyState(p=p, rot=rot, v=v, omega=omega)
    beta, d = bearing_distance(p, q)
    bdot = -(v - beta * float(beta @ v)) / d
    obs = FeatureObs(bearing=beta, dist_est=d, bearing_rate=bdot, point=q)
    return state, q, d, obs


def exact_hdot(p, rot, v, omega, q, sensor):
    beta, d = bearing_distance(p, q)
    bdot = -(v - beta * float(beta @ v)) / d
    z = rot @ sensor.axis
    g_att = np.cross(sensor.axis, rot.T @ beta)
    return float(bdot @ z) + float(g_att @ omega)


def test_barrier_reference_values():
    # frozen from the scipy script: p0, R0 = exp([0.2, -0.1, 0.3]), q = (3, 1, -1)
    p = np.array([0.5, -0.2, 0.3])
    rot = so3_exp(np.array([0.2, -0.1, 0.3]))
    q = np.array([3.0, 1.0, -1.0])
    beta, d = bearing_distance(p, q)
    assert np.isclose(d, 3.0626785662227105, atol=1e-14)
    assert np.allclose(
        beta,
        [0.8162789355604241, 0.39181388906900355, -0.42446504649142053],
        atol=1e-14)
    assert np.isclose(barrier(beta, rot, SENSOR), -0.033187580650988924, atol=1e-14)
    assert np.allclose(
        barrier_grad_position(beta, rot, SENSOR, d),
        [-0.08840387271792134, 0.01408977956633151, -0.15700149716554276],
        atol=1e-14)
    assert np.allclose(
        barrier_grad_attitude(beta, rot, SENSOR),
        [0.0, 0.5518652066307943, 0.04273118379693398],
        atol=1e-14)


def test_barrier_sign_convention():
    # feature dead ahead: maximal margin 1 - cos(psi)
    beta = np.array([1.0, 0.0, 0.0])
    assert np.isclose(barrier(beta, np.eye(3), SENSOR), 1.0 - np.cos(np.pi / 6.0))
    # feature behind: h = -1 - cos(psi)
    assert barrier(-beta, np.eye(3), SENSOR) < 0.0


def test_grad_position_matches_finite_differences():
    rng = np.random.default_rng(21)
    eps = 1e-6
    for _ in range(60):
        state, q, d, obs = random_setup(rng)
        g = barrier_grad_position(obs.bearing, state.rot, SENSOR, d)
        fd = np.empty(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = eps
            bp, _ = bearing_distance(state.p + e, q)
            bm, _ = bearing_distance(state.p - e, q)
            fd[i] = (barrier(bp, state.rot, SENSOR)
                     - barrier(bm, state.rot, SENSOR)) / (2.0 * eps)
        assert np.allclose(g, fd, atol=1e-7)


def test_grad_attitude_matches_geodesic_finite_differences():
    rng = np.random.default_rng(22)
    eps = 1e-6
    for _ in range(60):
        state, q, _, obs = random_setup(rng)
        g = barrier_grad_attitude(obs.bearing, state.rot, SENSOR)
        fd = np.empty(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = eps
            fd[i] = (barrier(obs.bearing, state.rot @ so3_exp(e), SENSOR)
                     - barrier(obs.bearing, state.rot @ so3_exp(-e), SENSOR)
                     ) / (2.0 * eps)
        assert np.allclose(g, fd, atol=1e-7)


def test_grad_position_rejects_bad_distance():
    with pytest.raises(ValueError):
        barrier_grad_position(E1, np.eye(3), SENSOR, 0.0)


def test_barrier_invariant_under_world_rotation():
    rng = np.random.default_rng(23)
    for _ in range(30):
        state, q, _, obs = random_setup(rng)
        Q = so3_exp(rng.normal(size=3))
        beta2, _ = bearing_distance(Q @ state.p, Q @ q)
        h1 = barrier(obs.bearing, state.rot, SENSOR)
        h2 = barrier(beta2, Q @ state.rot, SENSOR)
        assert np.isclose(h1, h2, atol=1e-13)


def flow(state, u, dt):
    """Exact-to-second-order flow of the rigid body under (accel, ang accel)."""
    a, al = u[:3], u[3:]
    p = state.p + state.v * dt + 0.5 * a * dt * dt
    v = state.v + a * dt
    rot = state.rot @ so3_exp(state.omega * dt + 0.5 * al * dt * dt)
    omega = state.omega + al * dt
    return BodyState(p=p, rot=rot, v=v, omega=omega)


def analytic_hddot(state, q, u, sensor):
    """Second time derivative assembled from the exported curvature pieces."""
    beta, d = bearing_distance(state.p, q)
    bdot = -(state.v - beta * float(state.v @ beta)) / d
    obs = FeatureObs(bearing=beta, dist_est=d, bearing_rate=bdot, point=q)
    ct = curvature_terms(state, obs, sensor)
    g_p = barrier_grad_position(beta, state.rot, sensor, d)
    g_att = barrier_grad_attitude(beta, state.rot, sensor)
    quad = (float(state.omega @ (ct.rot_rot @ state.omega))
            + 2.0 * float(state.v @ (ct.cross @ state.omega))
            + ct.vperp_vperp + ct.vperp_vpar)
    return quad + float(g_p @ u[:3]) + float(g_att @ u[3:])


def test_curvature_terms_match_finite_differences():
    rng = np.random.default_rng(31)
    dt = 1e-5
    for _ in range(40):
        state, q, _, _ = random_setup(rng)
        u = rng.normal(size=6)
        sp = flow(state, u, dt)
        sm = flow(state, u, -dt)
        fd = (exact_hdot(sp.p, sp.rot, sp.v, sp.omega, q, SENSOR)
              - exact_hdot(sm.p, sm.rot, sm.v, sm.omega, q, SENSOR)) / (2.0 * dt)
        assert np.isclose(analytic_hddot(state, q, u, SENSOR), fd, atol=5e-5)


def test_scale_floor_values():
    assert scale_floor(ClassK(1.0), ClassK(1.0)) == 1.0
    # 4*4*1/25
    assert np.isclose(scale_floor(ClassK(4.0), ClassK(1.0)), 0.64, atol=1e-15)
    assert scale_floor(ClassK(4.0), ClassK(1.0)) == scale_floor(ClassK(1.0), ClassK(4.0))


def test_first_order_bounds_exact():
    rp = RobustnessParams(gain_sum=3.0, ratio_min=0.5, ratio_max=15.0)
    lo, hi = attitude_gain_bounds_first_order(rp)
    # one correctly rounded division each, so equality against the rounded
    # rational is exact
    assert lo == float(Fraction(-3, 14))
    assert hi == 6.0
    # any c2 inside keeps the effective scale positive at both ratio endpoints
    for c2 in np.linspace(lo + 1e-9, hi - 1e-9, 25):
        c1 = rp.gain_sum - c2
        for r in (rp.ratio_min, rp.ratio_max):
            assert c2 + c1 / r > 0.0


def test_second_order_bounds_exact():
    rp = RobustnessParams(gain_sum=3.0, ratio_min=0.5, ratio_max=15.0)
    lo, hi = attitude_gain_bounds_second_order(1.0, rp)
    assert lo == float(Fraction(6, 7))
    assert hi == 5.0
    # endpoints touch the floor, the interior stays above it
    for c2 in (lo, hi):
        c1 = rp.gain_sum - c2
        scales = [c2 + c1 / r for r in np.linspace(0.5, 15.0, 200)]
        assert min(scales) >= 1.0 - 1e-12
    c2 = 0.5 * (lo + hi)
    c1 = rp.gain_sum - c2
    assert min(c2 + c1 / r for r in np.linspace(0.5, 15.0, 200)) > 1.0


def test_bounds_reject_bad_ranges():
    with pytest.raises(InvalidRange):
        attitude_gain_bounds_first_order(
            RobustnessParams(gain_sum=3.0, ratio_min=1.2, ratio_max=2.0))
    with pytest.raises(InvalidRange):
        attitude_gain_bounds_first_order(
            RobustnessParams(gain_sum=0.0, ratio_min=0.5, ratio_max=2.0))
    with pytest.raises(GammaTooSmall):
        attitude_gain_bounds_second_order(
            2.0, RobustnessParams(gain_sum=2.0, ratio_min=0.5, ratio_max=2.0))


def test_class_k_validation():
    with pytest.raises(ValueError):
        ClassK(0.0)
    with pytest.raises(NotImplementedError):
        ClassK(1.0, kind="cubic")
    g = ClassK(2.5)
    assert g(0.2) == 0.5
    assert g.slope0 == 2.5


def test_sensor_validation():
    from fovsafe.geom3d import NonUnitVector
    with pytest.raises(NonUnitVector):
        FovSensor(axis=np.array([1.0, 1.0, 0.0]), half_aperture=0.5)
    with pytest.raises(ValueError):
        FovSensor(axis=E1, half_aperture=np.pi / 2.0)


def test_first_order_split_recombines():
    """(1/r) row_v + row_w == hdot + (c2 + c1/r) gamma(h) for any admissible c2, r.

    The observation feeds the rows a wrong distance d/r; the identity is
    evaluated with the true distance on the right-hand side.
    """
    rng = np.random.default_rng(41)
    gamma = ClassK(3.0)
    rp = RobustnessParams(gain_sum=3.0, ratio_min=0.5, ratio_max=15.0)
    for _ in range(50):
        state, q, d, obs = random_setup(rng)
        r = rng.uniform(rp.ratio_min, rp.ratio_max)
        skewed = FeatureObs(bearing=obs.bearing, dist_est=d / r)
        grp = split_rows_first_order(state, skewed, SENSOR, gamma, rp)
        row_v, row_w = grp.rows
        c2 = rng.uniform(grp.c2_lo, grp.c2_hi)
        c1 = grp.gain_sum - c2
        u = rng.normal(size=6)
        combo = ((row_v.coeff_u @ u + row_v.coeff_c1 * c1 - row_v.rhs) / r
                 + row_w.coeff_u @ u + row_w.coeff_c2 * c2 - row_w.rhs)
        h = barrier(obs.bearing, state.rot, SENSOR)
        hdot = exact_hdot(state.p, state.rot, u[:3], u[3:], q, SENSOR)
        assert np.isclose(combo, hdot + (c2 + c1 / r) * gamma(h), atol=1e-12)


def test_second_order_split_recombines():
    """(1/r) row_a + row_w == hddot + L phi - margin with L = c2 + c1/r."""
    rng = np.random.default_rng(42)
    g1, g2 = ClassK(1.0), ClassK(1.0)
    rp = RobustnessParams(gain_sum=3.0, ratio_min=0.5, ratio_max=15.0, margin=0.3)
    for _ in range(50):
        state, q, d, obs = random_setup(rng)
        r = rng.uniform(rp.ratio_min, rp.ratio_max)
        skewed = FeatureObs(bearing=obs.bearing, dist_est=d / r,
                            bearing_rate=obs.bearing_rate)
        grp = split_rows_second_order(state, skewed, SENSOR, g1, g2, rp)
        row_a, row_w = grp.rows
        c2 = rng.uniform(grp.c2_lo, grp.c2_hi)
        c1 = grp.gain_sum - c2
        u = rng.normal(size=6)
        combo = ((row_a.coeff_u @ u + row_a.coeff_c1 * c1 - row_a.rhs) / r
                 + row_w.coeff_u @ u + row_w.coeff_c2 * c2 - row_w.rhs)
        h = barrier(obs.bearing, state.rot, SENSOR)
        hdot = exact_hdot(state.p, state.rot, state.v, state.omega, q, SENSOR)
        phi = g1.slope0 * hdot + g2(hdot + g1(h))
        hddot = analytic_hddot(state, q, u, SENSOR)
        L = c2 + c1 / r
        assert np.isclose(combo, hddot + L * phi - rp.margin, atol=1e-10)


def test_second_order_rows_exact_at_unit_ratio():
    # with dist_est == d the two rows simply sum to the plain constraint
    rng = np.random.default_rng(43)
    g1, g2 = ClassK(1.0), ClassK(1.0)
    rp = RobustnessParams(gain_sum=3.0, ratio_min=0.5, ratio_max=15.0)
    state, q, d, obs = random_setup(rng)
    grp = split_rows_second_order(state, obs, SENSOR, g1, g2, rp)
    row_a, row_w = grp.rows
    u = rng.normal(size=6)
    c2 = 2.0
    c1 = 1.0
    total = (row_a.coeff_u @ u + row_a.coeff_c1 * c1 - row_a.rhs
             + row_w.coeff_u @ u + row_w.coeff_c2 * c2 - row_w.rhs)
    h = barrier(obs.bearing, state.rot, SENSOR)
    hdot = exact_hdot(state.p, state.rot, state.v, state.omega, q, SENSOR)
    phi = g1.slope0 * hdot + g2(hdot + g1(h))
    assert np.isclose(total, analytic_hddot(state, q, u, SENSOR) + 3.0 * phi,
                      atol=1e-10)


def test_first_order_interval_is_shrunk_open():
    rp = RobustnessParams(gain_sum=3.0, ratio_min=0.5, ratio_max=15.0)
    state, _, _, obs = random_setup(np.random.default_rng(44))
    grp = split_rows_first_order(state, obs, SENSOR, ClassK(3.0), rp)
    lo, hi = attitude_gain_bounds_first_order(rp)
    assert grp.c2_lo == lo + C2_STRICT_MARGIN
    assert grp.c2_hi == hi - C2_STRICT_MARGIN


def test_effective_scale_floor_on_grid():
    # second-order interval: c2 + (gain_sum - c2)/r >= floor on a dense grid
    rp = RobustnessParams(gain_sum=3.0, ratio_min=0.5, ratio_max=15.0)
    floor = 1.0
    lo, hi = attitude_gain_bounds_second_order(floor, rp)
    c2s = np.linspace(lo, hi, 101)
    rs = np.linspace(rp.ratio_min, rp.ratio_max, 401)
    scale = c2s[:, None] + (rp.gain_sum - c2s[:, None]) / rs[None, :]
    assert scale.min() >= floor - 1e-12
