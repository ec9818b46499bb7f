"""Experiment configuration: flat INI files with one section per pipeline block.

Every experiment is a single diffable file; all randomness is seeded from the
[experiment] section, never from ambient entropy. See presets/ for one config
per benchmark task.
"""

import configparser
import hashlib

import numpy as np

from .controllers import PolicySpec
from .errors import ConfigError
from .perturb import PerturbationPlan
from .sensitivity import PreprocessConfig
from .sim import START_POSE, DynamicsMode, JointState, NoiseConfig

GAUSSIAN_RATE_SWEEP = (1, 5, 10, 50, 100, 500, 1000, 5000)


def _floats(raw):
    return [float(v.strip()) for v in raw.split(",") if v.strip() != ""]


def _ranges(raw):
    """Per-parameter uniform intervals: 'lo:hi' entries, '~' to freeze."""
    out = []
    for part in raw.split(","):
        part = part.strip()
        if part == "~":
            out.append(None)
        else:
            lo, hi = part.split(":")
            out.append((float(lo), float(hi)))
    return tuple(out)


class ExperimentConfig:
    """Typed view of an experiment INI file."""

    def __init__(self, parser):
        try:
            exp = parser["experiment"]
            self.label = exp.get("label", "experiment")
            self.seed = exp.getint("seed", 0)

            sim = parser["sim"]
            self.mode = DynamicsMode(sim.get("mode", "linear"),
                                     damping=sim.getfloat("damping", 0.0),
                                     gravity_gain=sim.getfloat("gravity_gain", 0.0))
            self.dt = sim.getfloat("dt", 0.01)
            self.n_steps = sim.getint("n_steps", None)
            x0 = _floats(sim.get("x0_angles", "")) or list(START_POSE)
            self.x0 = JointState(np.array(x0), np.zeros(3))
            self.noise = NoiseConfig(
                temporal_shift=sim.getint("temporal_shift", 0),
                spatial_std=np.array(_floats(sim.get("spatial_std", "0,0,0"))),
                seed=self.seed)

            pol = parser["policy"]
            fixed = {}
            if pol.get("x_star", None):
                fixed["x_star"] = np.array(_floats(pol["x_star"]))
            if pol.get("joints", None):
                fixed["joints"] = tuple(int(v) for v in _floats(pol["joints"]))
            self.policy = PolicySpec(pol["family"], np.array(_floats(pol["theta"])),
                                     fixed)

            per = parser["perturbation"]
            self.scheme = per.get("scheme", "uniform")
            self.count = per.getint("count", None)
            self.ranges = _ranges(per.get("ranges", "")) if self.scheme == "uniform" else ()
            self.lambda_rate = per.getfloat("lambda_rate", 100.0)
            sweep = per.get("lambda_sweep", "")
            self.lambda_sweep = tuple(_floats(sweep)) if sweep else ()
            self.n_per_lambda = per.getint("n_per_lambda", 0)

            pre = parser["preprocess"] if parser.has_section("preprocess") else {}
            self.align_method = pre.get("align", "none") if pre else "none"
            self.max_lag = int(pre.get("max_lag", 50)) if pre else 50
            self.epsilon = float(pre.get("epsilon", 0.01)) if pre else 0.01
            raw_gammas = pre.get("gamma_sweep", "0") if pre else "0"
            self.gamma_sweep = tuple(_floats(raw_gammas))

            gp = parser["gp"] if parser.has_section("gp") else {}
            self.stride = int(gp.get("stride", 1)) if gp else 1
            self.gp_optimize = (gp.get("optimize", "true").lower() == "true") if gp else True
            self.n_restarts = int(gp.get("n_restarts", 2)) if gp else 2

            ev = parser["eval"] if parser.has_section("eval") else {}
            self.holdout_fraction = float(ev.get("holdout_fraction", 0.2)) if ev else 0.2
            self.split_seed = int(ev.get("split_seed", 1)) if ev else 1

            if parser.has_section("planner"):
                pl = parser["planner"]
                self.plan_t = pl.getint("t_constraint", None)
                self.plan_target_kps = tuple(_floats(pl.get("target_kps", "")))
                self.plan_dims = pl.get("dims", "all")
            else:
                self.plan_t = None
                self.plan_target_kps = ()
                self.plan_dims = "all"
        except (KeyError, ValueError, TypeError, configparser.Error) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc

        if self.n_steps is None or self.n_steps < 1:
            raise ConfigError("sim.n_steps must be a positive integer")
        if self.count is None or self.count < 1:
            raise ConfigError("perturbation.count must be a positive integer")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("eval.holdout_fraction must be in (0, 1)")

    # -- derived objects -------------------------------------------------------

    def perturbation_plans(self):
        """One plan, or one plan per rate when a lambda sweep is configured."""
        if self.scheme == "uniform":
            return [PerturbationPlan("uniform", self.policy.theta, count=self.count,
                                     seed=self.seed + 1, ranges=self.ranges)]
        if self.lambda_sweep:
            n = self.n_per_lambda or max(1, self.count // len(self.lambda_sweep))
            return [PerturbationPlan("gaussian", self.policy.theta, count=n,
                                     seed=self.seed + 1 + k, lambda_rate=lam)
                    for k, lam in enumerate(self.lambda_sweep)]
        return [PerturbationPlan("gaussian", self.policy.theta, count=self.count,
                                 seed=self.seed + 1, lambda_rate=self.lambda_rate)]

    def preprocess_config(self, gamma):
        return PreprocessConfig(align_method=self.align_method, max_lag=self.max_lag,
                                gamma=(gamma if gamma > 0 else None))

    def fingerprint(self):
        """Stable hash of everything that determines the pipeline outputs."""
        parts = [
            self.label, self.seed, self.mode.tag, self.mode.damping,
            self.mode.gravity_gain, self.dt, self.n_steps,
            tuple(self.x0.angles), self.noise.temporal_shift,
            tuple(self.noise.spatial_std), self.policy.family,
            tuple(self.policy.theta),
            tuple(sorted((k, str(v)) for k, v in self.policy.fixed.items())),
            self.scheme, self.count, self.ranges, self.lambda_rate,
            self.lambda_sweep, self.n_per_lambda, self.align_method, self.max_lag,
            self.epsilon, self.gamma_sweep, self.stride, self.gp_optimize,
            self.n_restarts, self.holdout_fraction, self.split_seed, self.plan_t,
            self.plan_target_kps, self.plan_dims,
        ]
        return hashlib.sha256(repr(parts).encode()).hexdigest()[:16]


def load_config(path):
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    for section in ("experiment", "sim", "policy", "perturbation"):
        if not parser.has_section(section):
            raise ConfigError(f"config missing [{section}] section")
    return ExperimentConfig(parser)
