"""Controller families: linear open-loop ramp, sinusoidal drive, P/PD feedback.

Every controller is a pure function of (time, state, parameters). The flat
parameter vector theta is the differentiation variable downstream; its
ordering per family is

    linear_openloop : [w1, w2, w3, b1, b2, b3]
    sinusoidal      : [amp, omega] per driven joint, joints in ascending order
    p_feedback      : [kp]
    pd_feedback     : [kp, kd]

The sinusoidal phase advances in radians per *timestep* (the platform logs
are index-based), while the linear ramp uses seconds.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

FAMILIES = ("linear_openloop", "sinusoidal", "p_feedback", "pd_feedback")


@dataclass
class PolicySpec:
    """Controller family tag, flat parameter vector, and fixed constants.

    fixed may carry 'x_star' (target angles for feedback families) and
    'joints' (1-based driven joints for the sinusoidal family).
    """

    family: str
    theta: np.ndarray
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown controller family {self.family!r}")
        self.theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.theta)):
            raise ConfigError("theta components must be finite")
        m = self.theta.size
        if self.family == "linear_openloop" and m != 6:
            raise ConfigError("linear_openloop needs 6 parameters (w1..w3, b1..b3)")
        if self.family == "p_feedback" and m != 1:
            raise ConfigError("p_feedback needs 1 parameter (kp)")
        if self.family == "pd_feedback" and m != 2:
            raise ConfigError("pd_feedback needs 2 parameters (kp, kd)")
        if self.family == "sinusoidal":
            joints = self.fixed.get("joints", (1,))
            joints = tuple(int(j) for j in joints)
            if len(joints) == 0:
                raise ConfigError("sinusoidal needs a nonempty joint set")
            if any(j not in (1, 2, 3) for j in joints):
                raise ConfigError("sinusoidal joints must be in {1, 2, 3}")
            if m != 2 * len(joints):
                raise ConfigError("sinusoidal needs one (amp, omega) pair per driven joint")
            self.fixed["joints"] = joints
        if self.family in ("p_feedback", "pd_feedback"):
            x_star = np.asarray(self.fixed.get("x_star", np.zeros(3)), dtype=float).reshape(3)
            self.fixed["x_star"] = x_star

    def with_theta(self, theta):
        return PolicySpec(self.family, theta, dict(self.fixed))

    def policy_id(self):
        params = ",".join(f"{v:.6g}" for v in self.theta)
        return f"{self.family}({params})"


def linear_openloop(t, theta):
    """Open-loop ramp torque u_i = w_i * t + b_i, t in seconds."""
    theta = np.asarray(theta, dtype=float).reshape(6)
    return theta[:3] * t + theta[3:]


def sinusoidal(t, theta, joints):
    """Sinusoidal drive amp*sin(omega*t) on the given joints, zero elsewhere.

    theta holds one (amp, omega) pair per driven joint; t counts timesteps.
    """
    joints = tuple(int(j) for j in joints)
    if len(joints) == 0:
        raise ConfigError("sinusoidal needs a nonempty joint set")
    theta = np.asarray(theta, dtype=float).reshape(len(joints), 2)
    u = np.zeros(3)
    for (amp, omega), j in zip(theta, joints):
        u[j - 1] = amp * np.sin(omega * t)
    return u


def pd_feedback(angles, velocities, theta, x_star):
    """PD servo toward x_star: u = kp*(x_star - x) - kd*xd.

    The proportional error is taken as (x_star - x) so the published positive
    gains drive toward the target; kd damps the approach. The P controller is
    the kd = 0 special case.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    kp = theta[0]
    kd = theta[1] if theta.size > 1 else 0.0
    err = np.asarray(x_star, dtype=float) - np.asarray(angles, dtype=float)
    return kp * err - kd * np.asarray(velocities, dtype=float)


def torque_at(policy, step_index, t_seconds, angles, velocities):
    """Evaluate the policy's torque at one timestep (dispatch by family)."""
    if policy.family == "linear_openloop":
        return linear_openloop(t_seconds, policy.theta)
    if policy.family == "sinusoidal":
        return sinusoidal(step_index, policy.theta, policy.fixed["joints"])
    return pd_feedback(angles, velocities, policy.theta, policy.fixed["x_star"])
