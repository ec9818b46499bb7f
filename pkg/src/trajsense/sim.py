"""Simulator of the 3-joint finger platform.

Two dynamics modes are provided. The ``linear`` mode is a damped double
integrator per joint with an exact zero-order-hold discretization, so every
downstream estimator can be checked against closed-form solutions. The
``pendulum3`` mode is a gravity-coupled 3-link planar chain integrated with
semi-implicit Euler; it is nonlinear and cross-coupled.

Angles are clamped to the platform's joint limits ([0, pi], [0, pi],
[0, 2*pi]) with the velocity zeroed at the stop, which mimics a hard
mechanical limit.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidShiftError, InvalidStateError, PolicyEvalError

JOINT_LOW = np.array([0.0, 0.0, 0.0])
JOINT_HIGH = np.array([np.pi, np.pi, 2.0 * np.pi])

# Torque magnitude cap per component (simulator convention, abstract N*m).
TORQUE_CAP = 5.0

START_POSE = np.array([np.pi / 2.0, np.pi / 2.0, np.pi])


@dataclass
class JointState:
    """Angles (rad) and angular velocities (rad/s) of the three joints."""

    angles: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float).reshape(3)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.angles)) and np.all(np.isfinite(self.velocities))):
            raise InvalidStateError("non-finite joint state")


@dataclass
class TorqueVector:
    """Torque command for the three motors."""

    torques: np.ndarray

    def __post_init__(self):
        self.torques = np.asarray(self.torques, dtype=float).reshape(3)
        if not np.all(np.isfinite(self.torques)):
            raise InvalidStateError("non-finite torque")


@dataclass
class NoiseConfig:
    """Measurement corruption applied after a clean rollout.

    temporal_shift is a constant number of steps (the whole trajectory is
    shifted in time); spatial_std is a per-joint Gaussian scale applied to
    every recorded angle independently.
    """

    temporal_shift: int = 0
    spatial_std: np.ndarray = field(default_factory=lambda: np.zeros(3))
    seed: int = 0

    def __post_init__(self):
        self.temporal_shift = int(self.temporal_shift)
        self.spatial_std = np.asarray(self.spatial_std, dtype=float).reshape(3)
        if np.any(self.spatial_std < 0):
            raise InvalidStateError("spatial_std must be nonnegative")

    @property
    def is_clean(self):
        return self.temporal_shift == 0 and not np.any(self.spatial_std > 0)


@dataclass
class DynamicsMode:
    """Dynamics selector: 'linear' (exactly solvable) or 'pendulum3'."""

    tag: str = "linear"
    damping: float = 0.0
    gravity_gain: float = 0.0

    def __post_init__(self):
        if self.tag not in ("linear", "pendulum3"):
            raise InvalidStateError(f"unknown dynamics tag {self.tag!r}")
        if self.damping < 0:
            raise InvalidStateError("damping must be nonnegative")


@dataclass
class Trajectory:
    """One rollout: angles/velocities per step plus the applied torques.

    angles and velocities have shape (T+1, 3); torques has shape (T, 3).
    meta carries provenance (policy id, seed, dt, mode, noise settings).
    """

    dt: float
    angles: np.ndarray
    velocities: np.ndarray
    torques: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        self.torques = np.asarray(self.torques, dtype=float)
        if self.dt <= 0:
            raise InvalidStateError("dt must be positive")
        if self.angles.shape != self.velocities.shape:
            raise InvalidStateError("angles/velocities shape mismatch")
        if self.angles.shape[0] != self.torques.shape[0] + 1:
            raise InvalidStateError("need exactly one more state than torque")
        if self.angles.shape[0] < 2:
            raise InvalidStateError("trajectory must contain at least one step")

    @property
    def n_steps(self):
        return self.torques.shape[0]

    def state(self, t):
        return JointState(self.angles[t].copy(), self.velocities[t].copy())

    def copy(self):
        return Trajectory(self.dt, self.angles.copy(), self.velocities.copy(),
                          self.torques.copy(), dict(self.meta))


def _clamp(angles, velocities):
    clamped = np.clip(angles, JOINT_LOW, JOINT_HIGH)
    hit = clamped != angles
    if np.any(hit):
        velocities = np.where(hit, 0.0, velocities)
    return clamped, velocities


def _gravity_torque(angles, gravity_gain):
    # Planar chain with unit links: torque at joint i collects the gravity
    # pull of every link at or beyond i, expressed through the cumulative
    # link angles.
    phi = np.cumsum(angles)
    s = np.sin(phi)
    return gravity_gain * np.array([s[0] + s[1] + s[2], s[1] + s[2], s[2]])


def _step_arrays(angles, velocities, torque, dt, mode):
    """Advance raw angle/velocity arrays one step. No input validation."""
    u = np.clip(torque, -TORQUE_CAP, TORQUE_CAP)
    c = mode.damping
    if mode.tag == "linear":
        if c == 0.0:
            new_v = velocities + u * dt
            new_x = angles + velocities * dt + 0.5 * u * dt * dt
        else:
            decay = np.exp(-c * dt)
            drift = u / c
            new_v = velocities * decay + drift * (1.0 - decay)
            new_x = angles + drift * dt + (velocities - drift) * (1.0 - decay) / c
    else:
        acc = u - c * velocities - _gravity_torque(angles, mode.gravity_gain)
        new_v = velocities + dt * acc
        new_x = angles + dt * new_v
    return _clamp(new_x, new_v)


def step(state, torque, dt, mode):
    """Advance one timestep.

    In linear mode this is the exact discretization of xdd = u - damping*xd
    per joint, with the torque held constant over the step. In pendulum3
    mode it is semi-implicit Euler of the gravity-coupled chain.
    """
    if dt <= 0:
        raise InvalidStateError("dt must be positive")
    if isinstance(torque, TorqueVector):
        u = torque.torques
    else:
        u = np.asarray(torque, dtype=float).reshape(3)
    if not np.all(np.isfinite(u)):
        raise InvalidStateError("non-finite torque")
    if not (np.all(np.isfinite(state.angles)) and np.all(np.isfinite(state.velocities))):
        raise InvalidStateError("non-finite joint state")
    new_x, new_v = _step_arrays(state.angles, state.velocities, u, dt, mode)
    return JointState(new_x, new_v)


def rollout(policy, x0, n_steps, dt, mode, noise=None):
    """Roll the policy out for n_steps and return the recorded Trajectory.

    Deterministic given (policy, x0, n_steps, dt, mode, noise.seed): with a
    clean NoiseConfig repeated calls give bit-identical trajectories.
    """
    from .controllers import torque_at  # local import: controllers import sim types

    if n_steps < 1:
        raise InvalidStateError("n_steps must be >= 1")
    x = np.asarray(x0.angles, dtype=float).copy()
    v = np.asarray(x0.velocities, dtype=float).copy()
    if np.any(x < JOINT_LOW) or np.any(x > JOINT_HIGH):
        raise InvalidStateError("initial angles outside joint limits")

    angles = np.empty((n_steps + 1, 3))
    velocities = np.empty((n_steps + 1, 3))
    torques = np.empty((n_steps, 3))
    angles[0] = x
    velocities[0] = v
    for k in range(n_steps):
        try:
            u = torque_at(policy, k, k * dt, x, v)
        except Exception as exc:  # noqa: BLE001 - wrap with timestep context
            raise PolicyEvalError(f"controller failed at step {k}: {exc}", timestep=k) from exc
        u = np.clip(u, -TORQUE_CAP, TORQUE_CAP)
        torques[k] = u
        x, v = _step_arrays(x, v, u, dt, mode)
        angles[k + 1] = x
        velocities[k + 1] = v

    traj = Trajectory(dt, angles, velocities, torques, meta={
        "policy_id": policy.policy_id(),
        "seed": noise.seed if noise is not None else 0,
        "dt": dt,
        "mode": mode.tag,
        "temporal_shift": 0,
        "spatial_std": (0.0, 0.0, 0.0),
    })
    if noise is not None and not noise.is_clean:
        if noise.temporal_shift != 0:
            traj = inject_temporal_noise(traj, noise.temporal_shift)
        if np.any(noise.spatial_std > 0):
            traj = inject_spatial_noise(traj, noise.spatial_std, noise.seed)
    return traj


def inject_temporal_noise(traj, n):
    """Shift the recorded sequences by n steps: out[t] = in[t + n].

    Boundary entries are replicated so the trajectory keeps its length.
    """
    n = int(n)
    T = traj.n_steps
    if abs(n) >= T:
        raise InvalidShiftError(f"|shift| {abs(n)} must be < {T}")
    if n == 0:
        out = traj.copy()
        out.meta["temporal_shift"] = 0
        return out

    idx_states = np.clip(np.arange(T + 1) + n, 0, T)
    idx_torques = np.clip(np.arange(T) + n, 0, T - 1)
    out = Trajectory(traj.dt, traj.angles[idx_states], traj.velocities[idx_states],
                     traj.torques[idx_torques], dict(traj.meta))
    out.meta["temporal_shift"] = int(traj.meta.get("temporal_shift", 0)) + n
    return out


def inject_spatial_noise(traj, spatial_std, seed):
    """Add zero-mean Gaussian noise to every recorded angle.

    The per-dimension scales are spatial_std; the realized sup-norm deviation
    from the input trajectory is stored in meta["spatial_sup_deviation"].
    """
    spatial_std = np.asarray(spatial_std, dtype=float).reshape(3)
    if np.any(spatial_std < 0):
        raise InvalidStateError("spatial_std must be nonnegative")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, size=traj.angles.shape) * spatial_std
    out = Trajectory(traj.dt, traj.angles + noise, traj.velocities.copy(),
                     traj.torques.copy(), dict(traj.meta))
    out.meta["spatial_std"] = tuple(float(s) for s in spatial_std)
    out.meta["seed"] = seed
    out.meta["spatial_sup_deviation"] = float(np.max(np.abs(noise)))
    return out
