"""Simulated navigation tasks: Mountain Car, a planar USV and a differential-drive UUV.

Rewards are computed on the state reached by the step. Noise terms are
``N(0, reward_noise_var)``; pass ``noise=False`` (or an env built with
``reward_noise_var=0``) for deterministic rewards.
"""

from dataclasses import dataclass, field

import numpy as np


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    reward: float
    terminal: bool


def _noise(rng, var):
    if rng is None or var <= 0:
        return 0.0
    return float(rng.normal(0.0, np.sqrt(var)))


# --- Mountain Car ---------------------------------------------------------

@dataclass(frozen=True)
class MountainCarConfig:
    min_position: float = -1.2
    max_position: float = 0.6
    max_speed: float = 0.07
    goal_position: float = 0.6
    power: float = 0.001
    gravity: float = 0.0025
    goal_reward: float = 1.0
    reward_noise_var: float = 0.001
    start: tuple = (-0.5, 0.0)
    max_steps: int = 50


def mountain_car_step(state, a, rng=None, cfg=MountainCarConfig()):
    s, v = float(state[0]), float(state[1])
    a = float(np.clip(a, -1.0, 1.0))
    v = float(np.clip(v + cfg.power * a - cfg.gravity * np.cos(3.0 * s), -cfg.max_speed, cfg.max_speed))
    s = float(np.clip(s + v, cfg.min_position, cfg.max_position))
    if s >= cfg.goal_position:
        return StepResult(np.array([s, v]), cfg.goal_reward, True)
    return StepResult(np.array([s, v]), _noise(rng, cfg.reward_noise_var) - s, False)


# --- goal-seeking reward --------------------------------------------------

@dataclass(frozen=True)
class GoalRewardConfig:
    r_min: float = -1.0
    r_goal: float = 10.0
    decay: float = 10.0
    reward_noise_var: float = 0.001
    inverted_goal_reward: bool = False


def goal_reward(position, goal, rng=None, cfg=GoalRewardConfig()):
    """Reward peaking at the goal and decaying to ``r_min`` with distance.

    ``inverted_goal_reward`` flips the sign of the exponential term, which makes
    the goal the minimum of the reward.
    """
    d = float(np.hypot(position[0] - goal[0], position[1] - goal[1]))
    bump = (cfg.r_goal - cfg.r_min) * np.exp(-d / cfg.decay)
    base = cfg.r_min - bump if cfg.inverted_goal_reward else cfg.r_min + bump
    return float(base) + _noise(rng, cfg.reward_noise_var)


# --- USV / UUV ------------------------------------------------------------

@dataclass(frozen=True)
class VesselConfig:
    dt: float = 1.0
    lag: float = 3.0
    speed: float = 3.0
    max_turn_rate: float = np.deg2rad(15.0)
    goal: tuple = (50.0, 50.0)
    goal_radius: float = 10.0
    reward: GoalRewardConfig = field(default_factory=GoalRewardConfig)
    start: tuple = (0.0, 0.0, 0.0, 0.0)
    max_steps: int = 100
    k_v: float = 1.0
    k_w: float = 1.0


def _vessel_update(x, y, th, thd, speed, omega, rng, cfg):
    omega = float(np.clip(omega, -cfg.max_turn_rate, cfg.max_turn_rate))
    x2 = x + cfg.dt * speed * np.cos(th)
    y2 = y + cfg.dt * speed * np.sin(th)
    th2 = wrap_angle(th + cfg.dt * thd)
    thd2 = thd + (cfg.dt / cfg.lag) * (omega - thd)
    d = np.hypot(cfg.goal[0] - x2, cfg.goal[1] - y2)
    reward = goal_reward((x2, y2), cfg.goal, rng, cfg.reward)
    return (x2, y2, th2, thd2), reward, bool(d <= cfg.goal_radius)


def usv_step(state, omega, rng=None, cfg=VesselConfig()):
    x, y, th, thd = (float(v) for v in state[:4])
    (x2, y2, th2, thd2), reward, term = _vessel_update(x, y, wrap_angle(th), thd, cfg.speed, omega, rng, cfg)
    return StepResult(np.array([x2, y2, th2, thd2]), reward, term)


def uuv_step(state, a_port, a_star, rng=None, cfg=VesselConfig(start=(0.0, 0.0, 0.0, 0.0, 0.0), max_steps=200)):
    x, y, th, thd, V = (float(v) for v in state[:5])
    v = cfg.k_v * (a_port + a_star)
    omega = cfg.k_w * (a_port - a_star)
    V2 = V + cfg.dt * v
    (x2, y2, th2, thd2), reward, term = _vessel_update(x, y, wrap_angle(th), thd, V2, omega, rng, cfg)
    return StepResult(np.array([x2, y2, th2, thd2, V2]), reward, term)


# --- common interface -----------------------------------------------------

class Env:
    """Stateful wrapper with its own RNG: ``reset()``, ``step(action)``."""

    name = "env"
    state_dim = 0
    action_dim = 0

    def __init__(self, cfg, seed=0):
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.state = None

    @property
    def max_steps(self):
        return self.cfg.max_steps

    def reset(self):
        self.state = np.array(self.cfg.start, dtype=float)
        return self.state.copy()

    def step(self, action):
        res = self.transition(self.state, action, self.rng)
        self.state = res.next_state
        return res

    def transition(self, state, action, rng=None):
        raise NotImplementedError


class MountainCar(Env):
    name = "mountain_car"
    state_dim = 2
    action_dim = 1

    def __init__(self, cfg=None, seed=0):
        super().__init__(cfg or MountainCarConfig(), seed)

    def transition(self, state, action, rng=None):
        return mountain_car_step(state, np.ravel(action)[0], rng, self.cfg)


class USV(Env):
    name = "usv"
    state_dim = 4
    action_dim = 1

    def __init__(self, cfg=None, seed=0):
        super().__init__(cfg or VesselConfig(), seed)

    def transition(self, state, action, rng=None):
        return usv_step(state, np.ravel(action)[0], rng, self.cfg)


class UUV(Env):
    name = "uuv"
    state_dim = 5
    action_dim = 2

    def __init__(self, cfg=None, seed=0):
        super().__init__(cfg or VesselConfig(start=(0.0, 0.0, 0.0, 0.0, 0.0), max_steps=200), seed)

    def transition(self, state, action, rng=None):
        a = np.ravel(action)
        return uuv_step(state, a[0], a[1], rng, self.cfg)


ENVS = {"mountain_car": MountainCar, "usv": USV, "uuv": UUV}


def make_env(name, seed=0, **overrides):
    """Build an environment, overriding any config constant by keyword."""
    cls = ENVS[name]
    base = cls().cfg
    if "reward" in overrides and isinstance(overrides["reward"], dict):
        overrides["reward"] = GoalRewardConfig(**{**base.reward.__dict__, **overrides["reward"]})
    cfg = type(base)(**{**base.__dict__, **overrides})
    return cls(cfg, seed)
