"""Trajectories, model parameters and the temporal-difference operator H.

A trajectory stores every visited input once. Episode ``e`` owns the input rows
``inputs[start_e:end_e]`` where ``end_e = episode_breaks[e]``; an episode with
``T + 1`` inputs contributes ``T`` rewards. H is block diagonal over episodes,
so no TD coupling crosses an episode boundary.

File schema (JSON)::

    {
      "inputs": [[x_0...], [x_1...], ...],      # N_in rows of dimension D
      "rewards": [r_0, r_1, ...],               # N = N_in - n_episodes values
      "episode_breaks": [end_0, end_1, ...],    # exclusive end offsets into inputs
      "terminals": [false, true, ...]           # optional, one flag per episode
    }
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .kernel import KernelParams


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    inputs: np.ndarray
    rewards: np.ndarray
    episode_breaks: tuple
    terminals: tuple = None

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        r = np.asarray(self.rewards, dtype=float).ravel()
        breaks = tuple(int(b) for b in self.episode_breaks)
        if X.ndim != 2 or len(X) == 0:
            raise TrajectoryError("trajectory has no inputs")
        if not breaks:
            raise TrajectoryError("trajectory has no episodes")
        if any(b <= a for a, b in zip((0,) + breaks[:-1], breaks)):
            raise TrajectoryError("episode_breaks must be strictly increasing and positive")
        if breaks[-1] != len(X):
            raise TrajectoryError(f"last episode break {breaks[-1]} != number of inputs {len(X)}")
        starts = (0,) + breaks[:-1]
        if any(b - a < 2 for a, b in zip(starts, breaks)):
            raise TrajectoryError("every episode needs at least one transition (two inputs)")
        if len(r) != len(X) - len(breaks):
            raise TrajectoryError(
                f"expected {len(X) - len(breaks)} rewards for {len(X)} inputs in "
                f"{len(breaks)} episodes, got {len(r)}"
            )
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(X)):
            raise TrajectoryError("inputs and rewards must be finite")
        terms = self.terminals
        terms = (False,) * len(breaks) if terms is None else tuple(bool(t) for t in terms)
        if len(terms) != len(breaks):
            raise TrajectoryError("need one terminal flag per episode")
        X = X.copy()
        r = r.copy()
        X.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "episode_breaks", breaks)
        object.__setattr__(self, "terminals", terms)

    @property
    def n_inputs(self):
        return len(self.inputs)

    @property
    def n_transitions(self):
        return len(self.rewards)

    @property
    def dim(self):
        return self.inputs.shape[1]

    @property
    def n_episodes(self):
        return len(self.episode_breaks)

    def episode_slices(self):
        starts = (0,) + self.episode_breaks[:-1]
        return [slice(a, b) for a, b in zip(starts, self.episode_breaks)]

    @classmethod
    def from_episodes(cls, episodes):
        """Concatenate ``(inputs, rewards, terminal)`` triples."""
        X, r, breaks, terms = [], [], [], []
        n = 0
        for inputs, rewards, terminal in episodes:
            inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
            X.append(inputs)
            r.append(np.asarray(rewards, dtype=float).ravel())
            n += len(inputs)
            breaks.append(n)
            terms.append(bool(terminal))
        if not X:
            raise TrajectoryError("no episodes")
        return cls(np.vstack(X), np.concatenate(r), tuple(breaks), tuple(terms))

    def last_episodes(self, k):
        """Trajectory restricted to the most recent ``k`` episodes."""
        if k >= self.n_episodes:
            return self
        slices = self.episode_slices()[-k:]
        first = slices[0].start
        r_first = first - (self.n_episodes - k)
        return Trajectory(
            self.inputs[first:],
            self.rewards[r_first:],
            tuple(s.stop - first for s in slices),
            self.terminals[-k:],
        )

    def to_dict(self):
        return {
            "inputs": self.inputs.tolist(),
            "rewards": self.rewards.tolist(),
            "episode_breaks": list(self.episode_breaks),
            "terminals": list(self.terminals),
        }

    @classmethod
    def from_dict(cls, d):
        missing = {"inputs", "rewards", "episode_breaks"} - set(d)
        if missing:
            raise TrajectoryError(f"missing fields: {sorted(missing)}")
        return cls(d["inputs"], d["rewards"], d["episode_breaks"], d.get("terminals"))


def save_trajectory(traj, path):
    with open(path, "w") as f:
        json.dump(traj.to_dict(), f)
        f.write("\n")


def load_trajectory(path):
    with open(path) as f:
        text = f.read()
    if not text.strip():
        raise TrajectoryError(f"{path}: line 1: empty trajectory file")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise TrajectoryError(f"{path}: line {e.lineno}: {e.msg}") from None
    if not isinstance(d, dict):
        raise TrajectoryError(f"{path}: line 1: expected a JSON object")
    return Trajectory.from_dict(d)


@dataclass(frozen=True)
class ModelParams:
    kernel: KernelParams
    noise_variance: float
    discount: float
    terminal_value_zero: bool = False

    def __post_init__(self):
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        object.__setattr__(self, "discount", float(self.discount))
        if not (np.isfinite(self.noise_variance) and self.noise_variance > 0):
            raise ValueError("noise_variance must be positive")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")

    @property
    def dim(self):
        return self.kernel.dim

    @property
    def n_hyper(self):
        """Number of optimizable log-hyperparameters (kernel plus noise)."""
        return self.kernel.n_params + 1

    def hyper_vector(self):
        return np.concatenate([self.kernel.to_vector(), [np.log(self.noise_variance)]])

    def with_hyper_vector(self, v):
        v = np.asarray(v, dtype=float)
        return replace(self, kernel=KernelParams.from_vector(v[:-1]), noise_variance=float(np.exp(v[-1])))

    def to_dict(self):
        return {
            "log_signal_variance": self.kernel.log_signal_variance,
            "log_length_scales": self.kernel.log_length_scales.tolist(),
            "noise_variance": self.noise_variance,
            "discount": self.discount,
            "terminal_value_zero": self.terminal_value_zero,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            KernelParams(d["log_signal_variance"], d["log_length_scales"]),
            d["noise_variance"],
            d["discount"],
            bool(d.get("terminal_value_zero", False)),
        )


@dataclass(frozen=True)
class TDOperator:
    """Row t of H is ``e_src[t] - coef[t] * e_dst[t]``; at most two nonzeros per row."""

    src: np.ndarray
    dst: np.ndarray
    coef: np.ndarray
    n_inputs: int = field(default=0)

    @property
    def shape(self):
        return (len(self.src), self.n_inputs)

    def apply(self, A):
        """``H @ A`` for an ``(n_inputs, ...)`` array in O(N) row operations."""
        A = np.asarray(A)
        c = self.coef.reshape((-1,) + (1,) * (A.ndim - 1))
        return A[self.src] - c * A[self.dst]

    def apply_t(self, b):
        """``H.T @ b``."""
        b = np.asarray(b, dtype=float)
        out = np.zeros((self.n_inputs,) + b.shape[1:])
        c = self.coef.reshape((-1,) + (1,) * (b.ndim - 1))
        np.add.at(out, self.src, b)
        np.add.at(out, self.dst, -c * b)
        return out

    def to_sparse(self):
        n = len(self.src)
        rows = np.concatenate([np.arange(n), np.arange(n)])
        cols = np.concatenate([self.src, self.dst])
        vals = np.concatenate([np.ones(n), -self.coef])
        return sp.csr_matrix((vals, (rows, cols)), shape=self.shape)


def td_operator(traj, discount, terminal_value_zero=False):
    src, dst, coef = [], [], []
    for sl, term in zip(traj.episode_slices(), traj.terminals):
        idx = np.arange(sl.start, sl.stop - 1)
        src.append(idx)
        dst.append(idx + 1)
        c = np.full(len(idx), float(discount))
        if term and terminal_value_zero:
            c[-1] = 0.0
        coef.append(c)
    return TDOperator(np.concatenate(src), np.concatenate(dst), np.concatenate(coef), traj.n_inputs)


def build_h(traj, discount, terminal_value_zero=False):
    """The TD differencing matrix as a sparse ``(N, N_in)`` CSR matrix."""
    if traj is None or traj.n_transitions == 0:
        raise TrajectoryError("empty trajectory")
    return td_operator(traj, discount, terminal_value_zero).to_sparse()
