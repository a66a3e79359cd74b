import math

import numpy as np
import pytest

from vsl import motion
from vsl.errors import DegenerateDemo, InvalidShape, NonPositiveDuration
from vsl.motion import (CycleParams, DemoTrajectory, dmp_learn, dmp_rollout,
                        lift_shape, min_jerk, plan_cycle, rotation_profile)


# --- trajectory cycle ----------------------------------------------------------

def _cycle(**kw):
    params = CycleParams(**{**dict(h=0.15, h0=1.9, kappa=2.0, t_start=0.0,
                                   t_final=9.0, samples_per_segment=201), **kw})
    return plan_cycle((0.3, 0.1, 0.0), (0.4, 0.0, 0.0), (0.5, 0.2, 0.0),
                      0.0, math.radians(40), params)


def test_degenerate_pick_equals_place_still_lifts():
    params = CycleParams(samples_per_segment=201)
    cyc = plan_cycle((0.3, 0.1, 0.0), (0.4, 0.0, 0.0), (0.4, 0.0, 0.0),
                     0.0, 0.0, params)
    seg = cyc.samples[(cyc.samples[:, 0] >= 3.0) & (cyc.samples[:, 0] <= 6.0)]
    assert np.allclose(seg[:, 1], 0.4, atol=1e-12)
    assert np.allclose(seg[:, 2], 0.0, atol=1e-12)
    mid = seg[np.argmin(np.abs(seg[:, 0] - 4.5))]
    assert mid[3] == pytest.approx(params.h, abs=1e-12)


def test_lift_apex_exact_and_symmetric():
    s = np.linspace(0.0, 1.0, 1001)
    z = lift_shape(s, 0.15, 1.9, 2.0)
    assert z[0] == pytest.approx(0.0, abs=1e-15)
    assert z[-1] == pytest.approx(0.0, abs=1e-15)
    assert z[500] == pytest.approx(0.15, abs=1e-12)
    assert np.abs(z - z[::-1]).max() < 1e-12


def test_transport_segment_apex_with_zero_endpoint_heights():
    cyc = _cycle()
    seg = cyc.samples[(cyc.samples[:, 0] >= 3.0) & (cyc.samples[:, 0] <= 6.0)]
    mid = seg[np.argmin(np.abs(seg[:, 0] - 4.5))]
    assert mid[3] == pytest.approx(0.15, abs=1e-12)
    assert np.abs(seg[:, 3] - seg[::-1, 3]).max() < 1e-12


def test_unequal_endpoint_heights_blend_exactly():
    params = CycleParams(samples_per_segment=101)
    cyc = plan_cycle((0.3, 0.1, 0.0), (0.4, 0.0, 0.0), (0.5, 0.2, 0.05),
                     0.0, 0.0, params)
    seg = cyc.samples[(cyc.samples[:, 0] >= 3.0) & (cyc.samples[:, 0] <= 6.0)]
    assert seg[0, 3] == pytest.approx(0.0, abs=1e-15)
    assert seg[-1, 3] == pytest.approx(0.05, abs=1e-15)


def test_segment_endpoints_exact():
    cyc = _cycle()
    s = cyc.samples
    assert tuple(s[0, 1:4]) == pytest.approx((0.3, 0.1, 0.0))
    assert tuple(s[-1, 1:4]) == pytest.approx((0.3, 0.1, 0.0))
    t_pick = s[np.argmin(np.abs(s[:, 0] - 3.0))]
    assert tuple(t_pick[1:4]) == pytest.approx((0.4, 0.0, 0.0), abs=1e-12)


def test_smoothstep_boundary_velocity_zero():
    cyc = _cycle(samples_per_segment=4001)
    s = cyc.samples
    v0 = (s[1, 1:3] - s[0, 1:3]) / (s[1, 0] - s[0, 0])
    assert np.abs(v0).max() < 1e-3
    vT = (s[-1, 1:3] - s[-2, 1:3]) / (s[-1, 0] - s[-2, 0])
    assert np.abs(vT).max() < 1e-3


def test_invalid_shape_and_duration():
    with pytest.raises(InvalidShape):
        plan_cycle((0, 0, 0), (1, 0, 0), (1, 1, 0), 0, 0,
                   CycleParams(h0=2.0))
    with pytest.raises(InvalidShape):
        lift_shape(np.array([0.5]), 0.1, 2.1, 2.0)
    with pytest.raises(NonPositiveDuration):
        plan_cycle((0, 0, 0), (1, 0, 0), (1, 1, 0), 0, 0,
                   CycleParams(t_start=5.0, t_final=5.0))


# --- wrist rotation profile -------------------------------------------------------

def test_rotation_profile_zero_target():
    _t, theta = rotation_profile(0.0, 0.0, 2.0, 0.5)
    assert np.all(theta == 0.0)


def test_rotation_profile_trapezoid_algebra():
    target = math.radians(40)
    t, theta = rotation_profile(target, 0.0, 2.0, 0.5, n=4001)
    assert theta[0] == pytest.approx(0.0)
    assert theta[-1] == pytest.approx(target, abs=1e-12)
    # oracle: closed-form peak rate of a symmetric trapezoid with cruise
    # fraction rho is 2*target/(T*(1+rho))
    vmax = np.abs(np.diff(theta) / np.diff(t)).max()
    assert vmax == pytest.approx(2 * target / (2.0 * 1.5), rel=1e-3)
    ramp = (1 - 0.5) * 2.0 / 2
    cruise = (t >= ramp) & (t <= 2.0 - ramp)
    rates = np.diff(theta) / np.diff(t)
    assert np.allclose(rates[cruise[:-1]][1:-1], vmax, rtol=1e-6)


def test_rotation_profile_mirrors_negative_target():
    _t, pos = rotation_profile(math.radians(30), 0.0, 1.0, 0.4)
    _t, neg = rotation_profile(math.radians(-30), 0.0, 1.0, 0.4)
    assert np.allclose(neg, -pos, atol=1e-12)


def test_rotation_profile_validation():
    with pytest.raises(NonPositiveDuration):
        rotation_profile(1.0, 1.0, 1.0, 0.5)
    with pytest.raises(InvalidShape):
        rotation_profile(1.0, 0.0, 1.0, 1.0)


# --- primitive motion learning ------------------------------------------------------

def test_self_consistency_recovers_weights():
    rng = np.random.default_rng(4)
    base = dmp_learn([min_jerk(0.0, 1.0, 1.0, 0.002)])
    base.weights = rng.normal(0.0, 50.0, base.n_basis)
    roll = dmp_rollout(base, dt=0.001, duration=1.0)
    fitted = dmp_learn([roll.as_demo()], g=base.g, tau=base.tau)
    assert np.abs(fitted.weights - base.weights).max() <= 1e-6


def test_constant_demo_is_degenerate():
    flat = DemoTrajectory(y=np.zeros(50), yd=np.zeros(50), ydd=np.zeros(50),
                          dt=0.01)
    with pytest.raises(DegenerateDemo):
        dmp_learn([flat])


def test_min_jerk_reproduction_rmse():
    demo = min_jerk(0.0, 1.0, 1.0, 0.002)
    p = dmp_learn([demo], n_basis=20)
    roll = dmp_rollout(p, dt=0.002, duration=1.0)
    rmse = math.sqrt(np.mean((roll.y[:len(demo.y)] - demo.y) ** 2))
    assert rmse <= 0.02 * 1.0


def test_multiple_demos_pooled():
    demos = [min_jerk(0.0, 1.0, 1.0, 0.002), min_jerk(0.0, 1.0, 1.0, 0.004)]
    p = dmp_learn(demos, n_basis=20)
    roll = dmp_rollout(p, dt=0.002, duration=1.0)
    assert abs(roll.y[-1] - 1.0) < 0.02


def test_zero_forcing_monotone_no_overshoot():
    centers, widths = motion._basis_centers(20, motion.ALPHA_X)
    p = motion.DMPParams(alpha_z=25.0, beta_z=6.25, alpha_x=8.0, tau=1.0,
                         weights=np.zeros(20), centers=centers, widths=widths,
                         y0=0.0, g=1.0)
    roll = dmp_rollout(p, dt=0.001, duration=10.0)
    assert abs(roll.y[-1] - 1.0) <= 1e-3
    assert np.all(np.sign(roll.y - 1.0) <= 0)      # y-g never flips sign
    assert np.all(np.diff(roll.y) >= -1e-12)


def test_goal_equals_start_stays_constant():
    centers, widths = motion._basis_centers(20, motion.ALPHA_X)
    p = motion.DMPParams(25.0, 6.25, 8.0, 1.0, np.zeros(20), centers, widths,
                         y0=0.3, g=0.3)
    roll = dmp_rollout(p, dt=0.001, duration=2.0)
    assert np.allclose(roll.y, 0.3, atol=1e-12)


def test_learned_params_generalize_to_new_start():
    demo = min_jerk(0.2, 0.9, 1.0, 0.002)
    p = dmp_learn([demo], n_basis=20)
    for y0_new in (-0.5, 0.0, 1.4):
        roll = dmp_rollout(p, y0=y0_new, dt=0.001, duration=20.0 * p.tau)
        assert abs(roll.y[-1] - p.g) <= 1e-3 * max(abs(p.g - y0_new), 1e-6)


def test_goal_convergence_for_learned_fixture_set():
    for target in (0.5, 1.0, -0.7):
        demo = min_jerk(0.0, target, 1.0, 0.002)
        p = dmp_learn([demo], n_basis=15)
        roll = dmp_rollout(p, dt=0.001, duration=20.0 * p.tau)
        assert abs(roll.y[-1] - p.g) <= 1e-3 * max(abs(p.g - p.y0), 1e-6)


def test_lwr_method_available_and_reasonable():
    demo = min_jerk(0.0, 1.0, 1.0, 0.002)
    p = dmp_learn([demo], n_basis=20, method="lwr")
    roll = dmp_rollout(p, dt=0.002, duration=1.0)
    rmse = math.sqrt(np.mean((roll.y[:len(demo.y)] - demo.y) ** 2))
    assert rmse < 0.10


def test_params_json_roundtrip():
    p = dmp_learn([min_jerk(0.0, 1.0, 1.0, 0.002)])
    import json
    q = motion.DMPParams.from_dict(json.loads(p.to_json()))
    assert np.allclose(q.weights, p.weights)
    assert q.tau == p.tau and q.g == p.g


def test_default_primitive_library_reaches_target():
    lib = motion.default_primitive_library(displacement=(0.0, -90.0))
    assert set(lib) == {"push", "pull"}
    path = lib["pull"].rollout((10.0, 300.0), (200.0, 150.0), dt=0.002)
    assert path.shape[1] == 2
    # reach-after settles past the object (offset 0.3*disp), then the
    # backward drive (1.3*disp) carries the hand through it
    settle = np.array([200.0, 150.0 - 27.0])
    mid = path[np.argmin(np.abs(path[:, 1] - settle[1]))]
    assert abs(mid[0] - settle[0]) < 5.0
    end = settle + np.array([0.0, 117.0])
    assert np.hypot(*(path[-1] - end)) < 5.0


def test_trajectory_csv_export(tmp_path):
    cyc = _cycle(samples_per_segment=20)
    out = tmp_path / "traj.csv"
    motion.export_trajectory_csv(str(out), cyc.samples)
    head = out.read_text().splitlines()[0]
    assert head == "t,x,y,z,theta"
    data = np.loadtxt(str(out), delimiter=",", skiprows=1)
    assert data.shape[1] == 5
