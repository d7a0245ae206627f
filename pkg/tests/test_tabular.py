import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from shiftlab.curves import success_auc
from shiftlab.envs import GridMaze, GridMazeSpec, Termination, Transition
from shiftlab.explore import EpsilonSchedule
from shiftlab.shift import ShiftSpec
from shiftlab.tabular import (
    CountBonus,
    EpsilonGreedy,
    Greedy,
    QTable,
    TabularConfig,
    offset_equivalence_check,
    run_tabular,
    select_action,
    td_update,
    value_iteration,
)

C = Termination.CONTINUING


def test_td_update_one_step():
    table = QTable.filled(2, 2)
    td_update(table, Transition(0, 1, 1.0, 1, C), ShiftSpec(0.0), alpha=0.5, gamma=0.9)
    assert table.values[0, 1] == 0.5


def test_td_update_negative_shift():
    table = QTable.filled(2, 2)
    td_update(table, Transition(0, 0, 0.0, 1, C), ShiftSpec(-1.0), alpha=1.0, gamma=0.9)
    assert table.values[0, 0] == -1.0


def test_terminal_cuts_bootstrap_unless_continuing():
    table = QTable.filled(2, 2, 3.0)
    t = Transition(0, 0, 1.0, 1, Termination.TERMINAL)
    td_update(table, t, ShiftSpec(0.5), 1.0, 0.9)
    assert table.values[0, 0] == 1.5
    table = QTable.filled(2, 2, 3.0)
    td_update(table, t, ShiftSpec(0.5), 1.0, 0.9, continuing=True)
    assert table.values[0, 0] == pytest.approx(1.5 + 0.9 * 3.0)


def test_truncated_bootstraps():
    table = QTable.filled(2, 2, 2.0)
    td_update(table, Transition(0, 0, 0.0, 1, Termination.TRUNCATED), ShiftSpec(), 1.0, 0.5)
    assert table.values[0, 0] == 1.0


def test_replayed_trajectory_keeps_offset():
    # A learns r+1 from 0, B learns r from -10 (= -1/(1-0.9)); A stays B + 10
    rng = np.random.default_rng(0)
    a, b = QTable.filled(6, 4, 0.0), QTable.filled(6, 4, -10.0)
    for _ in range(500):
        t = Transition(int(rng.integers(6)), int(rng.integers(4)), float(rng.random() < 0.2), int(rng.integers(6)), C)
        td_update(a, t, ShiftSpec(1.0), 0.5, 0.9, continuing=True)
        td_update(b, t, ShiftSpec(0.0), 0.5, 0.9, continuing=True)
        assert np.max(np.abs(a.values - b.values - 10.0)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(
    st.integers(0, 2**32 - 1),
    st.floats(-5, 5),
    st.floats(0.0, 0.99),
    st.floats(0.01, 1.0),
)
def test_offset_preservation_property(seed, b, gamma, alpha):
    rng = np.random.default_rng(seed)
    c = b / (1 - gamma)
    q1 = QTable(rng.normal(0, 3, size=(5, 3)))
    q2 = QTable(q1.values - c)
    t = Transition(int(rng.integers(5)), int(rng.integers(3)), float(rng.normal()), int(rng.integers(5)), C)
    td_update(q1, t, ShiftSpec(b), alpha, gamma, continuing=True)
    td_update(q2, t, ShiftSpec(0.0), alpha, gamma, continuing=True)
    scale = max(1.0, abs(c))
    assert np.max(np.abs(q1.values - q2.values - c)) <= 1e-12 * scale


def test_uniform_when_epsilon_one():
    table = QTable(np.array([[0.0, 5.0, 1.0, 2.0]]))
    explore = EpsilonGreedy(EpsilonSchedule(1.0, 1.0))
    rng = np.random.default_rng(0)
    draws = [select_action(table, 0, explore, None, rng) for _ in range(10_000)]
    assert chisquare(np.bincount(draws, minlength=4)).pvalue > 0.01


def test_greedy_when_epsilon_zero():
    table = QTable(np.array([[0.0, 5.0, 1.0]]))
    explore = EpsilonGreedy(EpsilonSchedule(0.0, 0.0))
    assert select_action(table, 0, explore, None, np.random.default_rng(0)) == 1
    assert select_action(table, 0, Greedy(), None, np.random.default_rng(0)) == 1


def test_count_bonus_prefers_unvisited():
    table = QTable.filled(1, 3)
    counts = np.array([[0, 9, 0]])
    rng = np.random.default_rng(0)
    picks = {select_action(table, 0, CountBonus(1.0), counts, rng) for _ in range(200)}
    assert picks == {0, 2}


def test_ties_are_broken_uniformly():
    table = QTable.filled(1, 3)
    rng = np.random.default_rng(1)
    draws = [select_action(table, 0, Greedy(), None, rng) for _ in range(6000)]
    assert chisquare(np.bincount(draws, minlength=3)).pvalue > 0.01


@pytest.mark.parametrize("kwargs", [dict(alpha=0.0), dict(alpha=1.5), dict(gamma=1.0), dict(gamma=-0.1)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TabularConfig(**kwargs)


def test_tiny_maze_is_solved():
    curve = run_tabular(GridMaze(GridMazeSpec(2)), TabularConfig(episodes=50), seed=0)
    assert curve.values("success")[-10:].min() == 1.0


def test_visit_counts_total_equals_steps():
    curve = run_tabular(GridMaze(GridMazeSpec(5)), TabularConfig(episodes=20), seed=3)
    steps = curve.points[-1].step
    assert curve.artifacts["visit_counts"].sum() == steps


def test_run_is_reproducible():
    cfg = TabularConfig(shift=ShiftSpec(-1.0), episodes=10)
    a = run_tabular(GridMaze(GridMazeSpec(5)), cfg, 4)
    b = run_tabular(GridMaze(GridMazeSpec(5)), cfg, 4)
    assert a.points == b.points


def test_mean_q_metric_is_debiased():
    # with no reward ever reached the raw table mean stays near 0 after debiasing
    cfg = TabularConfig(shift=ShiftSpec(0.5), gamma=0.5, episodes=1, continuing=True, q0=1.0)
    curve = run_tabular(GridMaze(GridMazeSpec(9, max_steps=5)), cfg, 0)
    assert curve.final("mean_q") == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("b,gamma", [(1.0, 0.9), (-0.5, 0.99), (8.0, 0.9)])
def test_offset_equivalence_within_tolerance(b, gamma):
    cfg = TabularConfig(gamma=gamma, episodes=100, continuing=True)
    report = offset_equivalence_check(GridMaze(GridMazeSpec(5)), cfg, seed=0, probe_b=b)
    assert report.ok and not report.policy_mismatch
    assert report.max_discrepancy < 1e-9


def test_offset_equivalence_zero_shift_is_exact():
    cfg = TabularConfig(episodes=20, continuing=True)
    assert offset_equivalence_check(GridMaze(GridMazeSpec(5)), cfg, seed=1, probe_b=0.0).max_discrepancy == 0.0


def test_offset_equivalence_reports_violation_step():
    cfg = TabularConfig(gamma=0.9, episodes=5, continuing=True)
    report = offset_equivalence_check(GridMaze(GridMazeSpec(5)), cfg, seed=0, probe_b=1.0, tol=0.0)
    assert report.first_violation is None or report.first_violation >= 1
    assert report.first_violation is not None or report.max_discrepancy == 0.0


def test_value_iteration_small_maze():
    env = GridMaze(GridMazeSpec(3))
    q = value_iteration(env, 0.9)
    # optimal path from the start is 4 moves long
    assert q[0].max() == pytest.approx(0.9**3)
    assert q.max() == pytest.approx(1.0)


def test_positive_shift_explores_worse_on_large_maze():
    aucs = {}
    for b in (1.0, -1.0):
        aucs[b] = np.median(
            [success_auc(run_tabular(GridMaze(GridMazeSpec(15)), TabularConfig(shift=ShiftSpec(b), episodes=50), s)) for s in range(8)]
        )
    assert aucs[1.0] < aucs[-1.0]
