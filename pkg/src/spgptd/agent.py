"""Policies, rollouts, greedy improvement and policy iteration."""

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from . import envs as envs_mod
from .exact import ExactPosterior, fit_exact, predict_exact
from .hyperopt import OptimConfig, OptimizationFailedError, init_pseudo, optimize
from .lowrank import fit_lowrank
from .sparse import SparsePosterior, fit_sparse, predict_sparse
from .trajectory import ModelParams, Trajectory


class ValueMode(str, enum.Enum):
    action_value = "action_value"  # SARSA: x = (s, a)
    state_value = "state_value"  # TD: x = s


def predict_mean(posterior, X):
    if posterior is None:
        return np.zeros(len(X))
    if isinstance(posterior, ExactPosterior):
        return predict_exact(posterior, X, return_var=False)
    return predict_sparse(posterior, X, return_var=False)


# --- policies -------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonGreedy:
    actions: np.ndarray
    epsilon: float = 0.1

    def __post_init__(self):
        a = np.asarray(self.actions, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if len(a) == 0:
            raise ValueError("action grid is empty")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        object.__setattr__(self, "actions", a)

    def parameters(self):
        return np.zeros(0)


def _heading_error(state, goal):
    x, y, th = state[0], state[1], state[2]
    return envs_mod.wrap_angle(np.arctan2(goal[1] - y, goal[0] - x) - th)


@dataclass(frozen=True)
class LinearHeading:
    """``omega = k_omega * e_theta``."""

    k_omega: float = 0.5
    goal: tuple = (50.0, 50.0)
    epsilon: float = 0.1
    bounds: tuple = (0.0, 2.0)
    action_low: tuple = (-np.deg2rad(15.0),)
    action_high: tuple = (np.deg2rad(15.0),)

    def control(self, state):
        return np.array([self.k_omega * _heading_error(state, self.goal)])

    def parameters(self):
        return np.array([self.k_omega])

    def with_parameters(self, p):
        return replace(self, k_omega=float(p[0]))


@dataclass(frozen=True)
class FourierNav:
    """Range/heading feedback mapped to port and starboard actions."""

    k_r: float = 0.1
    k_theta: float = 0.5
    goal: tuple = (50.0, 50.0)
    epsilon: float = 0.1
    k_v: float = 1.0
    k_w: float = 1.0
    bounds: tuple = ((0.0, 2.0), (0.0, 5.0))
    action_low: tuple = (-1.0, -1.0)
    action_high: tuple = (1.0, 1.0)

    def control(self, state):
        e_th = _heading_error(state, self.goal)
        e_r = np.hypot(self.goal[0] - state[0], self.goal[1] - state[1])
        v = self.k_r * e_r * np.cos(e_th)
        omega = self.k_r * np.cos(e_th) * np.sin(e_th) + self.k_theta * e_th
        a_port = 0.5 * (v / self.k_v + omega / self.k_w)
        a_star = 0.5 * (v / self.k_v - omega / self.k_w)
        return np.array([a_port, a_star])

    def parameters(self):
        return np.array([self.k_r, self.k_theta])

    def with_parameters(self, p):
        return replace(self, k_r=float(p[0]), k_theta=float(p[1]))


# --- action selection -----------------------------------------------------

def make_inputs(state, action, mode):
    state = np.ravel(state)
    if ValueMode(mode) is ValueMode.state_value:
        return state.astype(float)
    return np.concatenate([state, np.ravel(action)]).astype(float)


def action_values(posterior, state, actions, mode=ValueMode.action_value, env=None, discount=None):
    """Predicted value of each candidate action in ``state``.

    In state-value mode the environment model supplies a one-step lookahead,
    ``R(s, a) + discount * V(s')``, with reward noise switched off.
    """
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    if ValueMode(mode) is ValueMode.action_value:
        X = np.hstack([np.tile(np.ravel(state), (len(actions), 1)), actions])
        return predict_mean(posterior, X)
    if env is None:
        raise ValueError("state-value mode needs an environment model for lookahead")
    if discount is None:
        discount = posterior.params.discount if posterior is not None else 1.0
    steps = [env.transition(state, a, None) for a in actions]
    nxt = np.array([s.next_state for s in steps])
    v = predict_mean(posterior, nxt)
    v = np.where([s.terminal for s in steps], 0.0, v)
    return np.array([s.reward for s in steps]) + discount * v


def greedy_action(posterior, s, action_grid, mode=ValueMode.action_value, env=None):
    """Grid action with the largest predicted value; ties go to the lowest index."""
    if posterior is False:
        raise ValueError("posterior is not fitted")
    grid = np.atleast_2d(np.asarray(action_grid, dtype=float))
    if grid.shape[0] == 1 and grid.shape[1] > 1 and np.ndim(action_grid) == 1:
        grid = grid.T
    q = action_values(posterior, s, grid, mode, env)
    return grid[int(np.argmax(q))]


def select_action(policy, posterior, state, mode, rng, env=None):
    if isinstance(policy, EpsilonGreedy):
        if posterior is None or rng.random() < policy.epsilon:
            return policy.actions[rng.integers(len(policy.actions))]
        return greedy_action(posterior, state, policy.actions, mode, env)
    if rng.random() < policy.epsilon:
        return rng.uniform(policy.action_low, policy.action_high)
    return policy.control(state)


# --- rollouts -------------------------------------------------------------

@dataclass
class Episode:
    inputs: np.ndarray
    rewards: np.ndarray
    terminal: bool
    states: np.ndarray
    actions: np.ndarray

    @property
    def total_reward(self):
        return float(np.sum(self.rewards))


def run_episode(env, policy, mode, max_steps, rng, posterior=None):
    mode = ValueMode(mode)
    s = env.reset()
    states, actions, rewards = [s], [], []
    terminal = False
    for _ in range(max_steps):
        a = np.atleast_1d(select_action(policy, posterior, s, mode, rng, env))
        res = env.step(a)
        actions.append(a)
        rewards.append(res.reward)
        s = res.next_state
        states.append(s)
        if res.terminal:
            terminal = True
            break
    # SARSA input for the final state uses the action the policy would take there
    actions.append(np.atleast_1d(select_action(policy, posterior, s, mode, rng, env)))
    states = np.array(states)
    actions = np.array(actions, dtype=float)
    if mode is ValueMode.action_value:
        inputs = np.hstack([states, actions])
    else:
        inputs = states.copy()
    return Episode(inputs, np.array(rewards), terminal, states, actions)


# --- policy improvement ---------------------------------------------------

def policy_objective(posterior, policy, eval_states, mode, env=None):
    """Mean predicted value of the policy's action over the evaluation states."""
    acts = np.array([policy.control(s) for s in eval_states])
    if ValueMode(mode) is ValueMode.action_value:
        return float(np.mean(predict_mean(posterior, np.hstack([eval_states, acts]))))
    vals = [action_values(posterior, s, a[None, :], mode, env)[0] for s, a in zip(eval_states, acts)]
    return float(np.mean(vals))


def greedy_update(posterior, policy, eval_states=None, mode=ValueMode.action_value, env=None, grid_size=100):
    """Improve the policy against the posterior mean.

    Epsilon-greedy policies are returned unchanged (they act greedily at
    selection time). Parametric policies keep their incumbent parameters unless
    a strictly better value is found.
    """
    if isinstance(policy, EpsilonGreedy):
        return policy
    if eval_states is None or len(eval_states) == 0:
        raise ValueError("empty evaluation state set")
    eval_states = np.asarray(eval_states, dtype=float)

    def J(p):
        return policy_objective(posterior, policy.with_parameters(p), eval_states, mode, env)

    incumbent = J(policy.parameters())
    if isinstance(policy, LinearHeading):
        lo, hi = policy.bounds
        res = minimize_scalar(lambda k: -J([k]), bounds=(lo, hi), method="bounded", options={"xatol": 1e-4})
        k = float(np.clip(res.x, lo, hi))
        return policy.with_parameters([k]) if -res.fun > incumbent else policy
    if isinstance(policy, FourierNav):
        (r_lo, r_hi), (t_lo, t_hi) = policy.bounds
        kr = np.linspace(r_lo, r_hi, grid_size)
        kt = np.linspace(t_lo, t_hi, grid_size)
        best, best_p = incumbent, policy.parameters()
        for a in kr:
            for b in kt:
                v = J([a, b])
                if v > best:
                    best, best_p = v, np.array([a, b])
        return policy.with_parameters(best_p)
    raise TypeError(f"unsupported policy {type(policy).__name__}")


# --- policy iteration -----------------------------------------------------

@dataclass
class PIConfig:
    params: ModelParams
    estimator: str = "sparse"  # exact | sparse | lowrank
    mode: ValueMode = ValueMode.action_value
    episodes: int = 100
    max_steps: int = None
    M: int = 5
    nu: float = 0.1
    optim: OptimConfig = field(default_factory=lambda: OptimConfig(optimize_hyperparams=False))
    refit_every_k_episodes: int = 5
    window: int = 20
    n_eval_states: int = 64
    min_episodes: int = 10
    convergence_tol: float = 1e-6
    max_retries: int = 3
    grid_size: int = 100
    seed: int = 0
    policy: object = None


@dataclass
class PIResult:
    policy: object
    rewards: list
    wall_ms: list
    posterior: object = None
    params: ModelParams = None
    Z: np.ndarray = None
    trajectory: Trajectory = None
    errors: list = field(default_factory=list)


class ValueEstimator:
    """Fits one of the three posteriors and keeps sparse state between refits."""

    def __init__(self, kind, params, M=5, nu=0.1, optim=None, refit_every=5, seed=0):
        if kind not in ("exact", "sparse", "lowrank"):
            raise ValueError(f"unknown estimator {kind!r}")
        self.kind = kind
        self.params = params
        self.M = M
        self.nu = nu
        self.optim = optim or OptimConfig(optimize_hyperparams=False)
        self.refit_every = max(1, int(refit_every))
        self.seed = seed
        self.Z = None
        self.n_fits = 0
        self.retention = None

    def fit(self, traj):
        if self.kind == "exact":
            post = fit_exact(traj, self.params)
        elif self.kind == "lowrank":
            res = fit_lowrank(traj, self.params, self.nu)
            self.retention = res.retention_fraction
            post = res.posterior
        else:
            if self.Z is None:
                self.Z = init_pseudo(traj, self.M, "random-subset", seed=self.seed)
            if self.n_fits % self.refit_every == 0 and self.optim.max_iterations > 0:
                cfg = replace(self.optim, rng_seed=self.optim.rng_seed + self.n_fits)
                try:
                    res = optimize(traj, self.params, self.Z, cfg)
                    self.params, self.Z = res.params, res.Z
                except OptimizationFailedError:
                    pass
            post = fit_sparse(traj, self.params, self.Z)
        self.n_fits += 1
        return post


def policy_iteration(env, estimator, cfg, policy=None):
    """Alternate rollouts, value estimation and greedy updates.

    Returns the final policy and the per-episode total reward series.
    """
    policy = policy if policy is not None else cfg.policy
    if policy is None:
        raise ValueError("no initial policy given")
    if isinstance(estimator, str):
        estimator = ValueEstimator(
            estimator, cfg.params, cfg.M, cfg.nu, cfg.optim, cfg.refit_every_k_episodes, cfg.seed
        )
    rng = np.random.default_rng(cfg.seed)
    env.rng = np.random.default_rng(cfg.seed + 1_000_003)
    max_steps = cfg.max_steps or env.max_steps
    episodes, rewards, wall = [], [], []
    errors = []
    posterior, eval_states = None, None
    traj = None
    for ep in range(cfg.episodes):
        t0 = time.perf_counter()
        for attempt in range(cfg.max_retries + 1):
            episode = run_episode(env, policy, cfg.mode, max_steps, rng, posterior)
            candidate = episodes + [episode]
            traj = Trajectory.from_episodes(
                [(e.inputs, e.rewards, e.terminal) for e in candidate[-cfg.window:]]
            )
            try:
                posterior = estimator.fit(traj)
                break
            except (np.linalg.LinAlgError, ValueError, OptimizationFailedError) as exc:
                errors.append((ep, attempt, repr(exc)))
        else:
            raise RuntimeError(f"episode {ep}: estimator failed {cfg.max_retries + 1} times")
        episodes = candidate
        rewards.append(episode.total_reward)
        if not isinstance(policy, EpsilonGreedy):
            if eval_states is None:
                visited = np.vstack([e.states for e in episodes])
                idx = np.random.default_rng(cfg.seed).choice(
                    len(visited), size=min(cfg.n_eval_states, len(visited)), replace=False
                )
                eval_states = visited[np.sort(idx)]
            new = greedy_update(posterior, policy, eval_states, cfg.mode, env, cfg.grid_size)
            change = np.max(np.abs(new.parameters() - policy.parameters()))
            policy = new
            wall.append(1e3 * (time.perf_counter() - t0))
            if ep + 1 >= cfg.min_episodes and change < cfg.convergence_tol:
                break
        else:
            wall.append(1e3 * (time.perf_counter() - t0))
    return PIResult(policy, rewards, wall, posterior, estimator.params, estimator.Z, traj, errors)
