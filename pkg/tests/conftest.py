import numpy as np
import pytest

from spgptd.kernel import KernelParams
from spgptd.trajectory import ModelParams, Trajectory


def random_params(rng, dim, noise=None, discount=None):
    kp = KernelParams.from_natural(rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0, dim))
    return ModelParams(kp, noise if noise is not None else rng.uniform(0.05, 0.5),
                       discount if discount is not None else rng.uniform(0.0, 0.99))


def random_traj(rng, n_inputs, dim, n_episodes=1, scale=3.0):
    """Random trajectory split into episodes of at least two inputs each."""
    n_episodes = max(1, min(n_episodes, n_inputs // 2))
    lengths = np.full(n_episodes, 2)
    for i in rng.integers(0, n_episodes, size=n_inputs - 2 * n_episodes):
        lengths[i] += 1
    X = scale * rng.standard_normal((n_inputs, dim))
    return Trajectory(X, rng.standard_normal(n_inputs - n_episodes), tuple(np.cumsum(lengths)))


def spread_traj(rng, n_inputs, dim, n_episodes=1):
    """Like random_traj but with inputs spread so their mean nearest-neighbour gap stays near one."""
    side = max(1.0, n_inputs ** (1.0 / dim))
    traj = random_traj(rng, n_inputs, dim, n_episodes)
    X = side * rng.random((n_inputs, dim))
    return Trajectory(X, traj.rewards, traj.episode_breaks)


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
