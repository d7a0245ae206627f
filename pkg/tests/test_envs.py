import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftlab.envs import (
    EnvUsageError,
    GridMaze,
    GridMazeSpec,
    MountainCar,
    PointMass,
    PointMassSpec,
    Termination,
    UnsupportedEnvError,
    enumerate_states,
    make_env,
)

UP, RIGHT, DOWN, LEFT = range(4)


def test_gridmaze_resets_to_upper_left_for_any_seed():
    env = GridMaze(GridMazeSpec(5))
    for seed in (0, 1, 99):
        assert env.reset(seed=seed) == 0


def test_gridmaze_open_move():
    env = GridMaze(GridMazeSpec(5))
    env.reset()
    t = env.step(RIGHT)
    assert (t.state, t.next_state, t.reward, t.termination) == (0, 1, 0.0, Termination.CONTINUING)


def test_smallest_maze_forced_path():
    env = GridMaze(GridMazeSpec(2))
    env.reset()
    assert env.step(DOWN).termination is Termination.CONTINUING
    t = env.step(RIGHT)
    assert t.reward == 1.0 and t.termination is Termination.TERMINAL


def test_stepping_after_terminal_is_a_usage_error():
    env = GridMaze(GridMazeSpec(2))
    env.reset()
    env.step(DOWN)
    env.step(RIGHT)
    with pytest.raises(EnvUsageError):
        env.step(UP)


def test_time_limit_is_truncation_not_terminal():
    env = GridMaze(GridMazeSpec(5, max_steps=3))
    env.reset()
    terms = [env.step(UP).termination for _ in range(3)]
    assert terms == [Termination.CONTINUING, Termination.CONTINUING, Termination.TRUNCATED]


def test_walls_block_movement():
    env = GridMaze(GridMazeSpec(3, walls=(1,)))
    env.reset()
    assert env.step(RIGHT).next_state == 0


def test_invalid_maze_specs_rejected():
    with pytest.raises(ValueError):
        GridMazeSpec(1)
    with pytest.raises(ValueError):
        GridMazeSpec(65)


@pytest.mark.parametrize("size, n", [(2, 4), (5, 25), (20, 400)])
def test_enumerate_states(size, n):
    states = enumerate_states(GridMaze(GridMazeSpec(size)))
    assert states == list(range(n))


def test_enumerate_states_unsupported_for_continuous_env():
    with pytest.raises(UnsupportedEnvError):
        enumerate_states(PointMass())


@pytest.mark.parametrize("obs", ["index", "onehot", "coords"])
def test_observation_round_trip(obs):
    env = GridMaze(GridMazeSpec(4, obs=obs))
    for cell in range(16):
        assert env.cell_of(env.observe(cell)) == cell


def test_pointmass_seeded_reset_is_repeatable():
    env = PointMass()
    a = env.reset(seed=7)
    b = env.reset(seed=7)
    assert np.array_equal(a, b)


def test_pointmass_dense_reward_is_negative_distance():
    env = PointMass(PointMassSpec(damping=0.0, dt=1e-9))
    env.reset_to([0.6, 0.1, 0.0, 0.0])
    t = env.step([0.0, 0.0])
    assert t.reward == pytest.approx(-0.5, abs=1e-12)


def test_pointmass_sparse_goal_terminates():
    env = PointMass(PointMassSpec(reward="sparse"))
    env.reset_to([0.6, 0.6, 0.0, 0.0])
    t = env.step([0.0, 0.0])
    assert t.reward == 1.0 and t.termination is Termination.TERMINAL


def test_mountaincar_start_band_and_rest():
    env = MountainCar()
    env.reset(seed=0)
    assert -0.6 <= env.pos <= -0.4 and env.vel == 0.0


def test_mountaincar_reward_only_at_flag():
    env = MountainCar()
    env.reset_to([(0.49 + 0.3) / 0.9, 1.0])
    t = env.step(2)
    assert t.reward == 1.0 and t.termination is Termination.TERMINAL


def test_make_env_names_unknown_field():
    with pytest.raises(ValueError, match="colour"):
        make_env({"name": "gridmaze", "size": 5, "colour": "red"})
    with pytest.raises(ValueError, match="env.name"):
        make_env({"name": "atari"})


def _rollout(env, actions):
    out = []
    for a in actions:
        t = env.step(a)
        out.append(t)
        if t.termination.done:
            env.reset()
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=120))
def test_pointmass_determinism_and_arena_bounds(seed, actions):
    runs = []
    for _ in range(2):
        env = PointMass(PointMassSpec(), seed=seed)
        env.reset()
        runs.append(_rollout(env, actions))
    for a, b in zip(*runs):
        assert np.array_equal(a.next_state, b.next_state) and a.reward == b.reward
        assert np.all(np.abs(a.next_state[:2]) <= 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.lists(st.integers(0, 3), min_size=1, max_size=300))
def test_gridmaze_reward_contract(size, actions):
    env = GridMaze(GridMazeSpec(size))
    env.reset()
    steps_in_episode = 0
    for t in _rollout(env, actions):
        steps_in_episode += 1
        assert t.reward in (0.0, 1.0)
        assert (t.reward == 1.0) == (t.termination is Termination.TERMINAL)
        assert steps_in_episode <= env.spec.max_steps
        if t.termination.done:
            steps_in_episode = 0


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=250, max_size=250))
def test_every_mountaincar_episode_ends_within_max_steps(actions):
    env = MountainCar()
    env.reset(seed=1)
    ends = [t.termination for t in _rollout(env, actions) if t.termination.done]
    assert ends and all(e in (Termination.TERMINAL, Termination.TRUNCATED) for e in ends)
