"""Per-timestep trajectory sensitivity estimation.

Training pairs (delta_theta, delta_x_t) are finite differences between a
source rollout and rollouts under perturbed parameters, optionally
delay-aligned and voxelized first. The state coordinate whose sensitivity is
tracked is the angle vector (the measured quantity); velocities ride along in
the trajectories but are not regression targets.

Three views of the same map are provided: raw directional derivatives, a
linear reconstruction from orthonormal basis probes, and per-timestep GP
regressors that generalize to unseen perturbation directions.
"""

from dataclasses import dataclass, field

import numpy as np

from . import align as align_mod
from . import voxel as voxel_mod
from .errors import (
    ConfigError,
    DatasetError,
    DegenerateScoreError,
    InsufficientDataError,
    UndefinedAlignmentError,
    UntrainedTimestepError,
)
from .gp import ExactGP, GPConfig

_NORM_FLOOR = 1e-15
_VAR_FLOOR = 1e-24


@dataclass
class DerivativeSample:
    """One training pair: parameter change and the induced angle change at t."""

    t: int
    delta_theta: np.ndarray
    delta_x: np.ndarray
    magnitude: float = None

    def __post_init__(self):
        self.delta_theta = np.asarray(self.delta_theta, dtype=float).reshape(-1)
        self.delta_x = np.asarray(self.delta_x, dtype=float).reshape(-1)
        if self.magnitude is None:
            self.magnitude = float(np.linalg.norm(self.delta_theta))


@dataclass
class PreprocessConfig:
    """Alignment and voxelization applied before differencing.

    align_method: 'none', 'correlation', or 'zero_crossing'.
    gamma None or 0 disables voxelization.
    """

    align_method: str = "none"
    max_lag: int = align_mod.DEFAULT_MAX_LAG
    zero_dim: int = 0
    gamma: float = None
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))


def _preprocessed(source, traj, cfg):
    if cfg is None:
        return traj
    if cfg.align_method == "correlation":
        est = align_mod.estimate_delay(source, traj, cfg.max_lag)
        if est.tau_star != 0:
            traj = align_mod.apply_shift(traj, est.tau_star)
    elif cfg.align_method == "zero_crossing":
        est = align_mod.align_zero_crossing(source, traj, cfg.zero_dim)
        # landmark lag is reported ref-minus-other; undo it on the other side
        if est.tau_star != 0:
            traj = align_mod.apply_shift(traj, -est.tau_star)
    elif cfg.align_method != "none":
        raise ConfigError(f"unknown align_method {cfg.align_method!r}")
    return traj


def build_samples(source, perturbed, preprocess=None):
    """Difference perturbed rollouts against the source at every timestep.

    perturbed is a list of (delta_theta, Trajectory) pairs produced by rolling
    out theta_nominal + delta_theta. All trajectories must share the source's
    length and dt. Returns one DerivativeSample per (pair, timestep).
    """
    grid = None
    if preprocess is not None and preprocess.gamma:
        grid = voxel_mod.VoxelGrid(gamma=np.full(3, float(preprocess.gamma)),
                                   origin=preprocess.origin)
    src = voxel_mod.voxelize_trajectory(source, grid) if grid else source

    samples = []
    for delta_theta, traj in perturbed:
        delta_theta = np.asarray(delta_theta, dtype=float).reshape(-1)
        if np.linalg.norm(delta_theta) == 0.0:
            raise DatasetError("delta_theta must be nonzero")
        if traj.n_steps != source.n_steps or traj.dt != source.dt:
            raise DatasetError("perturbed trajectory length/dt mismatch")
        traj = _preprocessed(source, traj, preprocess)
        if grid:
            traj = voxel_mod.voxelize_trajectory(traj, grid)
        diffs = traj.angles - src.angles
        mag = float(np.linalg.norm(delta_theta))
        for t in range(source.n_steps + 1):
            samples.append(DerivativeSample(t=t, delta_theta=delta_theta,
                                            delta_x=diffs[t], magnitude=mag))
    return samples


def samples_by_timestep(samples):
    by_t = {}
    for s in samples:
        by_t.setdefault(s.t, []).append(s)
    return by_t


def directional_derivative(sample):
    """Finite-difference directional derivative: delta_x / ||delta_theta||_2."""
    if sample.magnitude <= 0.0:
        raise DatasetError("invalid sample: zero-norm delta_theta")
    return sample.delta_x / sample.magnitude


# -- linear reconstruction from basis probes ---------------------------------


@dataclass
class JacobianStack:
    """Per-timestep matrices of directional derivatives along basis columns.

    matrices[t] has shape (d, m); column j is the per-unit state change along
    basis direction j at timestep t.
    """

    matrices: dict
    basis: object

    def timesteps(self):
        return sorted(self.matrices)


def build_jacobian_stack(rollout_fn, basis, timesteps=None):
    """Probe each basis direction by finite differences.

    rollout_fn(delta_theta) must return the (T+1, d) angle array of a rollout
    at theta_nominal + delta_theta. The step along column j is basis.steps[:, j];
    the recorded column is the difference quotient, i.e. per unit length.
    """
    base = np.asarray(rollout_fn(np.zeros(basis.Lambda.shape[0])), dtype=float)
    if timesteps is None:
        timesteps = range(base.shape[0])
    m = basis.Lambda.shape[1]
    cols = []
    for j in range(m):
        step = basis.steps[:, j]
        h = float(np.linalg.norm(step))
        probe = np.asarray(rollout_fn(step), dtype=float)
        cols.append((probe - base) / h)
    matrices = {int(t): np.stack([c[t] for c in cols], axis=1) for t in timesteps}
    return JacobianStack(matrices=matrices, basis=basis)


def reconstruct_linear(stack, basis, delta_theta, t):
    """Directional derivative along an arbitrary delta_theta at timestep t.

    Computes matrices[t] @ (Lambda^T delta_theta): exact when the dynamics
    are linear in the parameters, first-order accurate otherwise.
    """
    if t not in stack.matrices:
        raise UntrainedTimestepError(f"no basis probe at timestep {t}")
    delta_theta = np.asarray(delta_theta, dtype=float).reshape(-1)
    return stack.matrices[t] @ (basis.Lambda.T @ delta_theta)


# -- per-timestep GP maps -----------------------------------------------------


@dataclass
class TimestepGP:
    """Independent scalar GPs, one per state dimension, for a single timestep."""

    t: int
    gps: list
    source_angles: np.ndarray = None

    def predict(self, delta_theta):
        delta_theta = np.atleast_2d(np.asarray(delta_theta, dtype=float))
        means, stds = [], []
        for gp in self.gps:
            mu, sd = gp.predict(delta_theta)
            means.append(mu)
            stds.append(sd)
        return np.stack(means, axis=1), np.stack(stds, axis=1)


def fit_gp(samples, t, config=None, seed=0, pin_origin=True, source_angles=None):
    """Fit the map delta_theta -> delta_x at one timestep.

    A (0, 0) training pair is pinned by default: applying no perturbation
    changes nothing, which anchors the small-perturbation behavior exactly.
    """
    at_t = [s for s in samples if s.t == t]
    if len(at_t) < 2:
        raise InsufficientDataError(f"need >= 2 samples at timestep {t}")
    X = np.stack([s.delta_theta for s in at_t])
    Y = np.stack([s.delta_x for s in at_t])
    if pin_origin:
        X = np.vstack([np.zeros((1, X.shape[1])), X])
        Y = np.vstack([np.zeros((1, Y.shape[1])), Y])
    config = config or GPConfig()
    gps = []
    for i in range(Y.shape[1]):
        gp = ExactGP(config)
        gp.fit(X, Y[:, i], seed=np.random.default_rng((seed, t, i)).integers(2**31))
        gps.append(gp)
    return TimestepGP(t=int(t), gps=gps, source_angles=source_angles)


class SensitivityModel:
    """The family of per-timestep GP maps plus training metadata."""

    def __init__(self, models, nominal_theta=None, delta_low=None, delta_high=None,
                 meta=None):
        self.models = dict(models)
        self.nominal_theta = None if nominal_theta is None else np.asarray(nominal_theta, float)
        self.delta_low = None if delta_low is None else np.asarray(delta_low, float)
        self.delta_high = None if delta_high is None else np.asarray(delta_high, float)
        self.meta = dict(meta or {})

    @property
    def timesteps(self):
        return sorted(self.models)

    def model_at(self, t):
        if t not in self.models:
            raise UntrainedTimestepError(f"no trained model at timestep {t}")
        return self.models[t]

    def predict(self, t, delta_theta):
        """Posterior mean and std of the angle change for one perturbation."""
        mean, std = self.model_at(t).predict(delta_theta)
        return mean[0], std[0]

    def source_angles_at(self, t):
        sa = self.model_at(t).source_angles
        if sa is None:
            raise UntrainedTimestepError(f"no source state stored at timestep {t}")
        return sa

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        arrays = {"timesteps": np.array(self.timesteps, dtype=int)}
        if self.nominal_theta is not None:
            arrays["nominal_theta"] = self.nominal_theta
        if self.delta_low is not None:
            arrays["delta_low"] = self.delta_low
            arrays["delta_high"] = self.delta_high
        for t, tm in self.models.items():
            key = f"t{t:06d}"
            if tm.source_angles is not None:
                arrays[f"{key}_src"] = np.asarray(tm.source_angles)
            for i, gp in enumerate(tm.gps):
                raw_X = gp._X * gp._x_scale + gp._x_mean
                arrays[f"{key}_d{i}_X"] = raw_X
                arrays[f"{key}_d{i}_y"] = gp._y
                arrays[f"{key}_d{i}_phi"] = np.concatenate(
                    [gp.log_ls, [gp.log_sf2, gp.log_sn2]])
        np.savez_compressed(path, **arrays)

    @classmethod
    def load(cls, path):
        data = np.load(path)
        models = {}
        for t in data["timesteps"]:
            key = f"t{t:06d}"
            gps = []
            for i in range(3):
                if f"{key}_d{i}_X" not in data:
                    break
                phi = data[f"{key}_d{i}_phi"]
                gp = ExactGP(GPConfig(optimize=False))
                gp.fit(data[f"{key}_d{i}_X"], data[f"{key}_d{i}_y"], seed=0)
                # restore the trained hyperparameters, then refactorize
                m = data[f"{key}_d{i}_X"].shape[1]
                gp.log_ls = phi[:m]
                gp.log_sf2 = float(phi[m])
                gp.log_sn2 = float(phi[m + 1])
                K = gp._kernel(gp._X, gp._X, gp.log_ls, gp.log_sf2)
                K += np.exp(gp.log_sn2) * np.eye(gp._X.shape[0])
                from .gp import _cholesky_with_jitter
                gp._L, gp.jitter = _cholesky_with_jitter(K, scale=np.exp(gp.log_sf2))
                gp._alpha = np.linalg.solve(gp._L.T, np.linalg.solve(gp._L, gp._y))
                gps.append(gp)
            src = data[f"{key}_src"] if f"{key}_src" in data else None
            models[int(t)] = TimestepGP(t=int(t), gps=gps, source_angles=src)
        nominal = data["nominal_theta"] if "nominal_theta" in data else None
        lo = data["delta_low"] if "delta_low" in data else None
        hi = data["delta_high"] if "delta_high" in data else None
        return cls(models, nominal_theta=nominal, delta_low=lo, delta_high=hi)

    def summary_lines(self):
        lines = []
        for t in self.timesteps:
            tm = self.models[t]
            lines.append(f"[t={t}]")
            lines.append(f"n_train = {tm.gps[0].n_train}")
            for i, gp in enumerate(tm.gps):
                ls = ",".join(f"{v:.6g}" for v in gp.lengthscales)
                lines.append(f"dim{i}_lengthscales = {ls}")
                lines.append(f"dim{i}_signal_var = {gp.signal_var:.6g}")
                lines.append(f"dim{i}_noise_var = {gp.noise_var:.6g}")
            lines.append("")
        return lines


def fit_sensitivity_model(samples, timesteps=None, stride=1, config=None, seed=0,
                          source=None, nominal_theta=None):
    """Fit TimestepGPs over a timestep grid and bundle them into a model.

    timesteps defaults to every stride-th step present in the samples. The
    source trajectory, when given, stores the per-timestep nominal angles the
    planner needs.
    """
    by_t = samples_by_timestep(samples)
    if timesteps is None:
        present = sorted(by_t)
        timesteps = present[::stride]
    deltas = np.stack([s.delta_theta for s in samples])
    models = {}
    for t in timesteps:
        if t not in by_t:
            raise ConfigError(f"no samples at requested timestep {t}")
        src_angles = source.angles[t] if source is not None else None
        models[int(t)] = fit_gp(by_t[t], t, config=config, seed=seed,
                                source_angles=src_angles)
    return SensitivityModel(models, nominal_theta=nominal_theta,
                            delta_low=deltas.min(axis=0), delta_high=deltas.max(axis=0))


# -- metrics ------------------------------------------------------------------


def gp_score(y_true, y_pred):
    """Coefficient of determination: 1 - residual SS / total SS (best is 1)."""
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=float).reshape(-1)
    if y_true.size < 2:
        raise DegenerateScoreError("need at least 2 points")
    v = float(np.sum((y_true - y_true.mean()) ** 2))
    if v <= 0.0:
        raise DegenerateScoreError("zero-variance ground truth")
    u = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - u / v

def cosine_alignment(pred, truth):
    """Cosine of the angle between predicted and true change vectors."""
    pred = np.asarray(pred, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    np_, nt = np.linalg.norm(pred), np.linalg.norm(truth)
    if np_ < _NORM_FLOOR or nt < _NORM_FLOOR:
        raise UndefinedAlignmentError("cosine undefined for zero vector")
    return float(np.clip(pred @ truth / (np_ * nt), -1.0, 1.0))


@dataclass
class MetricsRow:
    """Time-averaged quality of a fitted model on held-out perturbations."""

    label: str
    mse_avg: float
    score_avg: float
    cos_avg: float
    n_timesteps: int = 0


@dataclass
class TimestepMetrics:
    t: int
    nmse: float
    score: float
    cos_mean: float
    n_test: int


def evaluate(model, test_samples, label="", n_bins=20):
    """Score the model on held-out samples: normalized MSE, GP score, cos.

    Returns (MetricsRow, per-timestep TimestepMetrics list, histogram dict
    t -> counts of cos alignment in n_bins bins over [-1, 1]). Timesteps whose
    ground truth is degenerate (all-zero change, fewer than 2 test samples)
    are skipped.
    """
    if not test_samples:
        raise ConfigError("empty held-out set")
    by_t = samples_by_timestep(test_samples)
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    rows, hists = [], {}
    for t in model.timesteps:
        if t not in by_t or len(by_t[t]) < 2:
            continue
        X = np.stack([s.delta_theta for s in by_t[t]])
        Y = np.stack([s.delta_x for s in by_t[t]])
        P, _ = model.model_at(t).predict(X)
        var = Y.var(axis=0)
        valid = var > _VAR_FLOOR
        if not np.any(valid):
            continue
        nmse = float(np.mean(((P - Y) ** 2).mean(axis=0)[valid] / var[valid]))
        score = float(np.mean([gp_score(Y[:, i], P[:, i])
                               for i in np.flatnonzero(valid)]))
        cosines = []
        for p_row, y_row in zip(P, Y):
            try:
                cosines.append(cosine_alignment(p_row, y_row))
            except UndefinedAlignmentError:
                continue
        if not cosines:
            continue
        hists[t] = np.histogram(cosines, bins=edges)[0]
        rows.append(TimestepMetrics(t=int(t), nmse=nmse, score=score,
                                    cos_mean=float(np.mean(cosines)), n_test=len(by_t[t])))
    if not rows:
        raise ConfigError("no evaluable timesteps in the held-out set")
    row = MetricsRow(label=label,
                     mse_avg=float(np.mean([r.nmse for r in rows])),
                     score_avg=float(np.mean([r.score for r in rows])),
                     cos_avg=float(np.mean([r.cos_mean for r in rows])),
                     n_timesteps=len(rows))
    return row, rows, hists
