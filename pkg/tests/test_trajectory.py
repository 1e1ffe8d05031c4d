import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spgptd.trajectory import (ModelParams, Trajectory, TrajectoryError, build_h, load_trajectory,
                               save_trajectory, td_operator)
from spgptd.kernel import KernelParams


def test_h_three_inputs_one_episode():
    traj = Trajectory(np.zeros((3, 1)), [1.0, 2.0], (3,))
    H = build_h(traj, 0.9).toarray()
    np.testing.assert_allclose(H, [[1, -0.9, 0], [0, 1, -0.9]])


def test_h_zero_discount_is_selection():
    traj = Trajectory(np.zeros((4, 2)), np.zeros(3), (4,))
    np.testing.assert_array_equal(build_h(traj, 0.0).toarray(), np.eye(3, 4))


def test_h_block_diagonal_over_episodes():
    traj = Trajectory(np.zeros((5, 1)), np.zeros(3), (2, 5))
    H = build_h(traj, 0.5).toarray()
    expected = np.array([[1, -0.5, 0, 0, 0], [0, 0, 1, -0.5, 0], [0, 0, 0, 1, -0.5]])
    np.testing.assert_array_equal(H, expected)


def test_terminal_row_drops_bootstrap():
    traj = Trajectory(np.zeros((3, 1)), np.zeros(2), (3,), terminals=[True])
    H = build_h(traj, 0.9, terminal_value_zero=True).toarray()
    np.testing.assert_allclose(H, [[1, -0.9, 0], [0, 1, 0]])
    np.testing.assert_allclose(build_h(traj, 0.9).toarray(), [[1, -0.9, 0], [0, 1, -0.9]])


def test_empty_trajectory_rejected():
    with pytest.raises(TrajectoryError):
        Trajectory(np.zeros((1, 1)), np.zeros(0), (1,))


def test_reward_count_validated():
    with pytest.raises(TrajectoryError):
        Trajectory(np.zeros((3, 1)), np.zeros(3), (3,))


@settings(max_examples=30, deadline=None)
@given(lengths=st.lists(st.integers(2, 6), min_size=1, max_size=4), gamma=st.floats(0, 1))
def test_operator_matches_dense(lengths, gamma):
    rng = np.random.default_rng(len(lengths))
    n = sum(lengths)
    traj = Trajectory(rng.standard_normal((n, 2)), rng.standard_normal(n - len(lengths)),
                      tuple(np.cumsum(lengths)))
    op = td_operator(traj, gamma)
    H = op.to_sparse().toarray()
    assert H.shape == (traj.n_transitions, n)
    assert np.all((H != 0).sum(axis=1) <= 2)
    A = rng.standard_normal((n, 3))
    np.testing.assert_allclose(op.apply(A), H @ A)
    b = rng.standard_normal(traj.n_transitions)
    np.testing.assert_allclose(op.apply_t(b), H.T @ b)


def test_last_episodes():
    traj = Trajectory.from_episodes([(np.full((k, 1), k), np.arange(k - 1), False) for k in (2, 3, 4)])
    sub = traj.last_episodes(2)
    assert sub.n_episodes == 2 and sub.n_inputs == 7 and sub.n_transitions == 5
    np.testing.assert_array_equal(sub.rewards, [0, 1, 0, 1, 2])
    assert traj.last_episodes(10) is traj


def test_save_load_roundtrip(tmp_path):
    traj = Trajectory(np.arange(8.0).reshape(4, 2), [1.0, 2.0], (2, 4), terminals=[True, False])
    path = tmp_path / "t.json"
    save_trajectory(traj, path)
    back = load_trajectory(path)
    np.testing.assert_array_equal(back.inputs, traj.inputs)
    assert back.episode_breaks == traj.episode_breaks and list(back.terminals) == [True, False]


def test_load_errors_report_line(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("")
    with pytest.raises(TrajectoryError, match="line 1"):
        load_trajectory(p)
    p.write_text('{\n"inputs": [[0]],\n oops}')
    with pytest.raises(TrajectoryError, match="line 3"):
        load_trajectory(p)


def test_model_params_hyper_vector_roundtrip():
    mp = ModelParams(KernelParams.from_natural(2.0, [1.0, 3.0]), 0.1, 0.9)
    back = mp.with_hyper_vector(mp.hyper_vector())
    np.testing.assert_allclose(back.hyper_vector(), mp.hyper_vector())
    assert ModelParams.from_dict(json.loads(json.dumps(mp.to_dict()))) == mp
    with pytest.raises(ValueError):
        ModelParams(mp.kernel, 0.0, 0.9)
    with pytest.raises(ValueError):
        ModelParams(mp.kernel, 0.1, 1.5)
