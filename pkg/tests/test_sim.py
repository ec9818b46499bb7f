import numpy as np
import pytest

from trajsense import (
    DynamicsMode,
    JointState,
    NoiseConfig,
    PolicySpec,
    inject_spatial_noise,
    inject_temporal_noise,
    rollout,
    step,
)
from trajsense.errors import InvalidShiftError, InvalidStateError
from trajsense.sim import JOINT_HIGH, JOINT_LOW, START_POSE, TorqueVector

from oracles import damped_const_torque_state, ramp_torque_state

LINEAR = DynamicsMode("linear", damping=0.0)


def zero_state(angles=(0.5, 0.5, 0.5)):
    return JointState(np.array(angles), np.zeros(3))


def test_zero_torque_zero_velocity_is_fixed_point():
    s = zero_state()
    out = step(s, np.zeros(3), 0.01, LINEAR)
    assert np.array_equal(out.angles, s.angles)
    assert np.array_equal(out.velocities, s.velocities)


def test_joint_limit_clamps_and_zeroes_velocity():
    # Appendix-style hard stop: joint 2 (index 1) driven past its upper limit
    s = JointState(np.array([np.pi / 2, np.pi / 2, np.pi]), np.zeros(3))
    out = step(s, np.array([0.0, 5.0, 0.0]), 1.0, LINEAR)
    assert out.angles[1] == np.pi
    assert out.velocities[1] == 0.0
    assert np.all(out.angles <= JOINT_HIGH) and np.all(out.angles >= JOINT_LOW)


def test_constant_torque_matches_closed_form_after_100_steps():
    s = zero_state()
    u = np.array([1.0, 0.0, 0.0])
    cur = s
    for _ in range(100):
        cur = step(cur, u, 0.01, LINEAR)
    x_expect, v_expect = ramp_torque_state(0.5, 0.0, w=0.0, b=1.0, dt=0.01, n=100)
    assert cur.velocities[0] == pytest.approx(1.0, abs=1e-12)
    assert cur.angles[0] == pytest.approx(x_expect, abs=1e-12)
    assert x_expect == pytest.approx(1.0, abs=1e-12)  # x0 + u*t^2/2 = 0.5 + 0.5


def test_nonfinite_inputs_rejected():
    with pytest.raises(InvalidStateError):
        JointState(np.array([np.nan, 0, 0]), np.zeros(3))
    with pytest.raises(InvalidStateError):
        step(zero_state(), np.array([np.inf, 0, 0]), 0.01, LINEAR)
    with pytest.raises(InvalidStateError):
        TorqueVector(np.array([1.0, np.nan, 0.0]))


def test_step_rejects_nonpositive_dt():
    with pytest.raises(InvalidStateError):
        step(zero_state(), np.zeros(3), 0.0, LINEAR)


def ramp_policy():
    return PolicySpec("linear_openloop",
                      [1e-5, 1e-4, -1e-5, -0.28, -0.15, -0.08])


def test_rollout_from_platform_start_pose():
    traj = rollout(ramp_policy(), JointState(START_POSE, np.zeros(3)), 1500, 0.01,
                   LINEAR)
    assert traj.angles.shape == (1501, 3)
    assert traj.torques.shape == (1500, 3)
    assert np.all(traj.angles >= JOINT_LOW) and np.all(traj.angles <= JOINT_HIGH)


def test_pd_rollout_horizon_1500():
    pol = PolicySpec("pd_feedback", [1.0, 0.01],
                     {"x_star": np.array([np.pi / 10, 3 * np.pi / 4, 7 * np.pi / 12])})
    traj = rollout(pol, JointState(START_POSE, np.zeros(3)), 1500, 0.01,
                   DynamicsMode("linear", damping=0.5))
    assert traj.n_steps == 1500
    # the servo should have moved every joint toward its target
    start_err = np.abs(START_POSE - pol.fixed["x_star"])
    end_err = np.abs(traj.angles[-1] - pol.fixed["x_star"])
    assert np.all(end_err < start_err)


def test_rollout_deterministic_without_noise():
    a = rollout(ramp_policy(), zero_state(), 200, 0.01, LINEAR)
    b = rollout(ramp_policy(), zero_state(), 200, 0.01, LINEAR)
    assert np.array_equal(a.angles, b.angles)
    assert np.array_equal(a.velocities, b.velocities)
    assert np.array_equal(a.torques, b.torques)


def test_rollout_deterministic_with_seeded_noise():
    noise = NoiseConfig(temporal_shift=3, spatial_std=np.full(3, 0.01), seed=42)
    a = rollout(ramp_policy(), zero_state(), 200, 0.01, LINEAR, noise)
    b = rollout(ramp_policy(), zero_state(), 200, 0.01, LINEAR, noise)
    assert np.array_equal(a.angles, b.angles)


def test_linear_mode_matches_ramp_closed_form_everywhere():
    w, b = 0.02, -0.01
    pol = PolicySpec("linear_openloop", [w, 0.0, 0.0, b, 0.0, 0.0])
    dt = 0.01
    traj = rollout(pol, JointState(np.array([1.0, 1.0, 1.0]), np.zeros(3)), 400, dt,
                   LINEAR)
    for n in range(0, 401, 25):
        x_ref, v_ref = ramp_torque_state(1.0, 0.0, w, b, dt, n)
        assert traj.angles[n, 0] == pytest.approx(x_ref, rel=1e-9, abs=1e-12)
        assert traj.velocities[n, 0] == pytest.approx(v_ref, rel=1e-9, abs=1e-12)


def test_damped_linear_mode_matches_one_shot_solution():
    c = 0.8
    pol = PolicySpec("linear_openloop", [0.0, 0.0, 0.0, 0.3, 0.0, 0.0])
    traj = rollout(pol, JointState(np.array([1.0, 1.0, 1.0]), np.zeros(3)), 500, 0.01,
                   DynamicsMode("linear", damping=c))
    x_ref, v_ref = damped_const_torque_state(1.0, 0.0, 0.3, c, 500 * 0.01)
    assert traj.angles[500, 0] == pytest.approx(x_ref, rel=1e-9)
    assert traj.velocities[500, 0] == pytest.approx(v_ref, rel=1e-9)


def test_pendulum_mode_runs_and_respects_limits():
    pol = PolicySpec("sinusoidal", [0.5, 0.01], {"joints": (1,)})
    mode = DynamicsMode("pendulum3", damping=0.5, gravity_gain=0.3)
    traj = rollout(pol, JointState(START_POSE, np.zeros(3)), 2000, 0.01, mode)
    assert np.all(traj.angles >= JOINT_LOW) and np.all(traj.angles <= JOINT_HIGH)
    assert np.all(np.isfinite(traj.angles))


# -- temporal noise -----------------------------------------------------------


def test_temporal_shift_zero_is_identity():
    traj = rollout(ramp_policy(), zero_state(), 100, 0.01, LINEAR)
    out = inject_temporal_noise(traj, 0)
    assert np.array_equal(out.angles, traj.angles)


def test_temporal_shift_moves_states():
    traj = rollout(ramp_policy(), zero_state(), 100, 0.01, LINEAR)
    out = inject_temporal_noise(traj, 5)
    assert np.array_equal(out.angles[:-5], traj.angles[5:])
    assert np.array_equal(out.angles[-5:], np.tile(traj.angles[-1], (5, 1)))
    assert out.meta["temporal_shift"] == 5


def test_temporal_shift_inverse_restores_interior():
    traj = rollout(ramp_policy(), zero_state(), 100, 0.01, LINEAR)
    back = inject_temporal_noise(inject_temporal_noise(traj, -3), 3)
    assert np.array_equal(back.angles[3:-3], traj.angles[3:-3])


def test_temporal_shift_too_large_rejected():
    traj = rollout(ramp_policy(), zero_state(), 50, 0.01, LINEAR)
    with pytest.raises(InvalidShiftError):
        inject_temporal_noise(traj, 50)
    with pytest.raises(InvalidShiftError):
        inject_temporal_noise(traj, -51)


# -- spatial noise ------------------------------------------------------------


def test_spatial_noise_zero_is_identity():
    traj = rollout(ramp_policy(), zero_state(), 100, 0.01, LINEAR)
    out = inject_spatial_noise(traj, np.zeros(3), seed=1)
    assert np.array_equal(out.angles, traj.angles)


def test_spatial_noise_seed_sensitivity():
    traj = rollout(ramp_policy(), zero_state(), 100, 0.01, LINEAR)
    a = inject_spatial_noise(traj, np.full(3, 0.01), seed=1)
    b = inject_spatial_noise(traj, np.full(3, 0.01), seed=2)
    assert a.angles.shape == b.angles.shape
    assert not np.array_equal(a.angles, b.angles)


def test_spatial_noise_sup_norm_bounded_over_seeds():
    # Monte Carlo: 100 seeds, sigma = 0.01, sup deviation stays under 6 sigma
    traj = rollout(ramp_policy(), zero_state(), 100, 0.01, LINEAR)
    sigma = 0.01
    for seed in range(100):
        out = inject_spatial_noise(traj, np.full(3, sigma), seed=seed)
        dev = np.max(np.abs(out.angles - traj.angles))
        assert dev <= 6 * sigma
        assert out.meta["spatial_sup_deviation"] == pytest.approx(dev)


def test_repeat_noise_spread_grows_with_scale():
    # Assumption-style check: the worst pairwise sup-norm gap over M repeats
    # is bounded and grows monotonically with the noise scale
    traj = rollout(ramp_policy(), zero_state(), 100, 0.01, LINEAR)
    spreads = []
    for s in (0.005, 0.01, 0.02, 0.05):
        runs = [inject_spatial_noise(traj, np.full(3, s), seed=k).angles
                for k in range(20)]
        worst = max(np.max(np.abs(a - b)) for i, a in enumerate(runs)
                    for b in runs[i + 1:])
        spreads.append(worst)
        assert worst <= 12 * s  # two 6-sigma tails
    assert all(a < b for a, b in zip(spreads, spreads[1:]))
