"""Flat-file persistence: trajectory CSVs with meta sidecars, sample and
metrics CSVs.

Trajectory CSV schema: header t,x1,x2,x3,v1,v2,v3,u1,u2,u3, one row per
recorded step, floats printed with 9 significant digits. The final row is the
terminal state and carries empty torque cells. The sidecar (same path plus
'.meta') holds policy_id, seed, dt, mode, temporal_shift, spatial_std as
key = value lines.
"""

import csv
import os

import numpy as np

from .errors import ConfigError
from .sim import Trajectory

TRAJ_HEADER = ["t", "x1", "x2", "x3", "v1", "v2", "v3", "u1", "u2", "u3"]


def _fmt(x):
    return f"{x:.9g}"


def write_trajectory(traj, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJ_HEADER)
        T = traj.n_steps
        for t in range(T + 1):
            row = [str(t)]
            row += [_fmt(v) for v in traj.angles[t]]
            row += [_fmt(v) for v in traj.velocities[t]]
            row += [_fmt(v) for v in traj.torques[t]] if t < T else ["", "", ""]
            w.writerow(row)
    meta = traj.meta
    spatial = meta.get("spatial_std", (0.0, 0.0, 0.0))
    with open(path + ".meta", "w") as fh:
        fh.write(f"policy_id = {meta.get('policy_id', '')}\n")
        fh.write(f"seed = {meta.get('seed', 0)}\n")
        fh.write(f"dt = {_fmt(meta.get('dt', traj.dt))}\n")
        fh.write(f"mode = {meta.get('mode', '')}\n")
        fh.write(f"temporal_shift = {meta.get('temporal_shift', 0)}\n")
        fh.write(f"spatial_std = {','.join(_fmt(s) for s in spatial)}\n")


def read_trajectory(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRAJ_HEADER:
        raise ConfigError(f"{path}: not a trajectory CSV")
    body = rows[1:]
    n = len(body)
    angles = np.empty((n, 3))
    velocities = np.empty((n, 3))
    torques = np.empty((n - 1, 3))
    for i, row in enumerate(body):
        angles[i] = [float(v) for v in row[1:4]]
        velocities[i] = [float(v) for v in row[4:7]]
        if i < n - 1:
            torques[i] = [float(v) for v in row[7:10]]
    meta = {}
    meta_path = path + ".meta"
    dt = None
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            for line in fh:
                if "=" not in line:
                    continue
                key, val = (s.strip() for s in line.split("=", 1))
                meta[key] = val
        dt = float(meta.get("dt", "0") or 0) or None
        if dt is not None:
            meta["dt"] = dt
        meta["seed"] = int(meta.get("seed", 0))
        meta["temporal_shift"] = int(meta.get("temporal_shift", 0))
        if "spatial_std" in meta:
            meta["spatial_std"] = tuple(float(s) for s in meta["spatial_std"].split(","))
    if dt is None:
        raise ConfigError(f"{path}: missing dt in meta sidecar")
    return Trajectory(dt, angles, velocities, torques, meta)


def write_samples(samples, path):
    """Derivative-sample dataset: t, dtheta_*, dx_*, dtheta_norm (full precision)."""
    if not samples:
        raise ConfigError("no samples to write")
    m = samples[0].delta_theta.size
    d = samples[0].delta_x.size
    header = (["t"] + [f"dtheta_{j+1}" for j in range(m)]
              + [f"dx_{i+1}" for i in range(d)] + ["dtheta_norm"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in samples:
            row = [str(s.t)]
            row += [f"{v:.17g}" for v in s.delta_theta]
            row += [f"{v:.17g}" for v in s.delta_x]
            row.append(f"{s.magnitude:.17g}")
            w.writerow(row)


def read_samples(path):
    from .sensitivity import DerivativeSample

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    m = sum(1 for h in header if h.startswith("dtheta_") and h != "dtheta_norm")
    d = sum(1 for h in header if h.startswith("dx_"))
    out = []
    for row in rows[1:]:
        t = int(row[0])
        dtheta = np.array([float(v) for v in row[1:1 + m]])
        dx = np.array([float(v) for v in row[1 + m:1 + m + d]])
        out.append(DerivativeSample(t=t, delta_theta=dtheta, delta_x=dx,
                                    magnitude=float(row[1 + m + d])))
    return out


def write_perturbations(nominal, deltas, path):
    """Absolute parameter vectors, one row per sample: sample_id, theta_*."""
    m = len(nominal)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id"] + [f"theta_{j+1}" for j in range(m)])
        for i, d in enumerate(deltas):
            w.writerow([str(i)] + [f"{v:.17g}" for v in (np.asarray(nominal) + d)])


def read_perturbations(path, nominal):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    nominal = np.asarray(nominal, dtype=float)
    return [np.array([float(v) for v in row[1:]]) - nominal for row in rows[1:]]


def write_metrics(row, per_t, path_summary, path_per_t):
    with open(path_summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "mse_avg", "score_avg", "cos_avg", "n_timesteps"])
        w.writerow([row.label, f"{row.mse_avg:.10g}", f"{row.score_avg:.10g}",
                    f"{row.cos_avg:.10g}", str(row.n_timesteps)])
    with open(path_per_t, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "nmse", "score", "cos_mean", "n_test"])
        for r in per_t:
            w.writerow([str(r.t), f"{r.nmse:.10g}", f"{r.score:.10g}",
                        f"{r.cos_mean:.10g}", str(r.n_test)])
