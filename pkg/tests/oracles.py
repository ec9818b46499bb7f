"""Independent reference computations used to freeze expected test values.

Everything here is computed by a different route than the library code:
combinatorial closed-form sums instead of iterated stepping, one-shot
exponential solutions, homogeneous matrix powers for closed-loop maps, and
exhaustive brute-force sweeps. Keep this module free of trajsense imports so
the oracles cannot inherit a library bug.
"""

import numpy as np


def ramp_torque_state(x0, v0, w, b, dt, n):
    """Closed-form state of xdd = u with u_k = w*(k*dt) + b held per step.

    Direct combinatorial sums (no stepping):
      v_n = v0 + w*dt^2*n(n-1)/2 + b*dt*n
      x_n = x0 + v0*n*dt + w*dt^3*n(n-1)(2n-1)/12 + b*dt^2*n^2/2
    """
    v = v0 + w * dt**2 * n * (n - 1) / 2.0 + b * dt * n
    x = (x0 + v0 * n * dt + w * dt**3 * n * (n - 1) * (2 * n - 1) / 12.0
         + b * dt**2 * n * n / 2.0)
    return x, v


def ramp_torque_jacobian(dt, n):
    """d(x_n)/d(w), d(x_n)/d(b) for the ramp-torque double integrator."""
    dx_dw = dt**3 * n * (n - 1) * (2 * n - 1) / 12.0
    dx_db = dt**2 * n * n / 2.0
    return dx_dw, dx_db


def damped_const_torque_state(x0, v0, u, c, t):
    """One-shot continuous solution of xdd = u - c*xd at time t (c > 0)."""
    drift = u / c
    x = x0 + drift * t + (v0 - drift) * (1.0 - np.exp(-c * t)) / c
    v = drift + (v0 - drift) * np.exp(-c * t)
    return x, v


def pd_closed_loop_angle(x0, v0, kp, kd, x_star, dt, n, damping=0.0):
    """Angle after n steps of the discretized PD loop, via matrix power.

    Per step: u = kp*(x_star - x) - kd*v, then the exact zero-order-hold
    update of xdd = u - damping*xd. The affine step map is composed once as
    the n-th power of a 3x3 homogeneous matrix, a different route than
    iterating the simulator.
    """
    if damping == 0.0:
        g = dt * dt / 2.0   # torque-to-position gain over one step
        h = dt              # torque-to-velocity gain
        xv = dt             # velocity-to-position drift
        vv = 1.0
    else:
        c = damping
        E = np.exp(-c * dt)
        h = (1.0 - E) / c
        g = dt / c - (1.0 - E) / c**2
        xv = (1.0 - E) / c
        vv = E
    H = np.array([
        [1.0 - kp * g, xv - kd * g, kp * x_star * g],
        [-kp * h, vv - kd * h, kp * x_star * h],
        [0.0, 0.0, 1.0],
    ])
    z = np.linalg.matrix_power(H, n) @ np.array([x0, v0, 1.0])
    return z[0]


def brute_force_realign(ref_angles, other_angles, max_lag):
    """Lag minimizing the mean |ref - shifted(other)| over the overlap."""
    T = ref_angles.shape[0] - 1
    best_tau, best_res = 0, np.inf
    for tau in range(-max_lag, max_lag + 1):
        lo = max(0, -tau)
        hi = min(T, T - tau)
        res = np.mean(np.abs(other_angles[lo + tau: hi + tau + 1]
                             - ref_angles[lo: hi + 1]))
        if res < best_res - 1e-15 or (abs(res - best_res) <= 1e-15 and abs(tau) < abs(best_tau)):
            best_res, best_tau = res, tau
    return best_tau, best_res


def brute_force_corr_peak(ref_angles, other_angles, max_lag):
    """Argmax over lags of the summed per-window Pearson correlation.

    Independent implementation via np.corrcoef per (lag, dimension).
    """
    T = ref_angles.shape[0] - 1
    best = None
    for tau in range(-max_lag, max_lag + 1):
        lo = max(0, -tau)
        hi = min(T, T - tau)
        seg_o = other_angles[lo + tau: hi + tau + 1]
        seg_r = ref_angles[lo: hi + 1]
        c = 0.0
        for d in range(ref_angles.shape[1]):
            if seg_o[:, d].std() > 1e-15 and seg_r[:, d].std() > 1e-15:
                c += float(np.corrcoef(seg_o[:, d], seg_r[:, d])[0, 1])
        if best is None or c > best[1] + 1e-12:
            best = (tau, c)
        elif abs(c - best[1]) <= 1e-12 and abs(tau) < abs(best[0]):
            best = (tau, c)
    return best[0]
