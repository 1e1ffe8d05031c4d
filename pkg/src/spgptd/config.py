"""Experiment configuration.

Configs are YAML (or JSON) mappings; every key is optional and falls back to
the per-task defaults below. Example::

    task: mountain_car          # mountain_car | usv | uuv | synthetic_prior
    estimator: sparse           # exact | sparse | lowrank
    mode: action_value          # action_value | state_value
    M: 5
    nu: 0.1
    episodes: 100
    seeds: [0, 1, 2]
    model:
      signal_variance: 10.0
      length_scales: [0.6, 0.06, 2.0]
      noise_variance: 0.01
      discount: 0.9
      terminal_value_zero: false
    optimizer:
      max_iterations: 100
      gradient_tolerance: 1.0e-5
      regularization_weight: 1.0e-3
      restarts: 1
      rng_seed: 0
      optimize_hyperparams: true
      optimize_pseudo: true
    policy: {epsilon: 0.1, actions: [[-1], [0], [1]]}
    agent: {refit_every_k_episodes: 5, window: 20, n_eval_states: 64}
    env: {max_steps: 50}        # any constant of the environment config
    compare: {n_samples: 100, M_grid: [5, 10, 20, 40, 100], n_subsets: 100}
    retention: {nu_min: 1.0e-12, nu_max: 10.0, n_nu: 14, n_trajectories: 100}
    landscape: {n_episodes: 6, grid: 50}
    bench: {N_grid: [100, 250, 500, 1000, 2000], M_grid: [5, 10, 25], reps: 5}
    out: results
"""

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .agent import EpsilonGreedy, FourierNav, LinearHeading, ValueMode
from .hyperopt import OptimConfig
from .kernel import KernelParams
from .trajectory import ModelParams

TASKS = ("mountain_car", "usv", "uuv", "synthetic_prior")
ESTIMATORS = ("exact", "sparse", "lowrank")

TASK_DEFAULTS = {
    "mountain_car": {
        "M": 5,
        "nu": 0.1,
        "model": {"signal_variance": 10.0, "length_scales": [0.6, 0.06, 2.0],
                  "noise_variance": 0.01, "discount": 0.9},
        "policy": {"kind": "epsilon_greedy", "epsilon": 0.1, "actions": [[-1.0], [0.0], [1.0]]},
        "landscape": {"bounds": [[-1.2, 0.6], [-0.07, 0.07]]},
    },
    "usv": {
        "M": 50,
        "nu": 0.1,
        "model": {"signal_variance": 100.0, "length_scales": [20.0, 20.0, 1.0, 0.2, 0.2],
                  "noise_variance": 0.1, "discount": 0.9},
        "policy": {"kind": "linear_heading", "epsilon": 0.1, "k_omega": 0.5, "bounds": [0.0, 2.0]},
        "landscape": {"bounds": [[-10.0, 70.0], [-10.0, 70.0]]},
    },
    "uuv": {
        "M": 50,
        "nu": 5.0,
        "model": {"signal_variance": 100.0, "length_scales": [20.0, 20.0, 1.0, 0.2, 2.0, 1.0, 1.0],
                  "noise_variance": 0.1, "discount": 0.9},
        "policy": {"kind": "fourier_nav", "epsilon": 0.1, "k_r": 0.05, "k_theta": 0.5,
                   "bounds": [[0.0, 2.0], [0.0, 5.0]]},
        "landscape": {"bounds": [[-10.0, 70.0], [-10.0, 70.0]]},
    },
    "synthetic_prior": {
        "M": 10,
        "nu": 0.1,
        "model": {"signal_variance": 1.0, "length_scales": [2.5, 2.5],
                  "noise_variance": 0.001, "discount": 0.9},
        "policy": {},
        "landscape": {},
    },
}


@dataclass
class ExperimentConfig:
    task: str = "mountain_car"
    estimator: str = "sparse"
    mode: str = "action_value"
    M: int = 5
    nu: float = 0.1
    episodes: int = 100
    seeds: list = field(default_factory=lambda: [0])
    model: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    policy: dict = field(default_factory=dict)
    agent: dict = field(default_factory=dict)
    env: dict = field(default_factory=dict)
    compare: dict = field(default_factory=dict)
    retention: dict = field(default_factory=dict)
    landscape: dict = field(default_factory=dict)
    bench: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    out: str = "results"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}; expected one of {ESTIMATORS}")
        ValueMode(self.mode)
        if self.estimator == "sparse" and self.M < 1:
            raise ValueError("M must be at least 1 for the sparse estimator")
        if self.estimator == "lowrank" and not self.nu > 0:
            raise ValueError("nu must be positive for the lowrank estimator")
        self.seeds = [int(s) for s in (self.seeds if isinstance(self.seeds, (list, tuple)) else [self.seeds])]

    # --- derived objects ---

    def model_params(self, dim=None):
        m = self.model
        ls = np.atleast_1d(np.asarray(m["length_scales"], dtype=float))
        if dim is not None and ls.size != dim:
            ls = np.resize(ls, dim)
        return ModelParams(
            KernelParams.from_natural(m["signal_variance"], ls),
            m["noise_variance"],
            m["discount"],
            bool(m.get("terminal_value_zero", False)),
        )

    def optim_config(self):
        return OptimConfig(**self.optimizer)

    def make_policy(self):
        p = dict(self.policy)
        kind = p.pop("kind", "epsilon_greedy")
        if kind == "epsilon_greedy":
            return EpsilonGreedy(np.asarray(p.get("actions", [[-1.0], [0.0], [1.0]]), dtype=float), p.get("epsilon", 0.1))
        if kind == "linear_heading":
            return LinearHeading(k_omega=p.get("k_omega", 0.5), epsilon=p.get("epsilon", 0.1),
                                 bounds=tuple(p.get("bounds", (0.0, 2.0))))
        if kind == "fourier_nav":
            b = p.get("bounds", [[0.0, 2.0], [0.0, 5.0]])
            return FourierNav(k_r=p.get("k_r", 0.05), k_theta=p.get("k_theta", 0.5), epsilon=p.get("epsilon", 0.1),
                              bounds=(tuple(b[0]), tuple(b[1])))
        raise ValueError(f"unknown policy kind {kind!r}")

    def to_dict(self):
        return asdict(self)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


GENERIC_DEFAULTS = {
    "optimizer": {"max_iterations": 100, "gradient_tolerance": 1e-5, "regularization_weight": 1e-3,
                  "restarts": 1, "rng_seed": 0, "optimize_hyperparams": True, "optimize_pseudo": True},
    "agent": {"refit_every_k_episodes": 5, "window": 20, "n_eval_states": 64, "min_episodes": 10,
              "grid_size": 100},
    "compare": {"n_samples": 100, "M_grid": [5, 10, 20, 40, 100], "n_subsets": 100, "dim": 2,
                "input_range": 10.0, "max_iterations": 100},
    "retention": {"nu_min": 1e-12, "nu_max": 10.0, "n_nu": 14, "n_trajectories": 100, "prior_length": 50},
    "landscape": {"n_episodes": 6, "grid": 50, "restarts": 3},
    "bench": {"N_grid": [100, 250, 500, 1000, 2000], "M_grid": [5, 10, 25], "reps": 5, "n_queries": 100},
    "fit": {"optimize": False, "init": "random-subset"},
}


def config_from_dict(d):
    d = dict(d or {})
    task = d.get("task", "mountain_car")
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    merged = _merge(_merge(GENERIC_DEFAULTS, TASK_DEFAULTS[task]), d)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**merged)


def load_config(path=None, **overrides):
    d = {}
    if path is not None:
        with open(path) as f:
            d = yaml.safe_load(f) or {}
        if not isinstance(d, dict):
            raise ValueError(f"{path}: config must be a mapping")
    d.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(d)
