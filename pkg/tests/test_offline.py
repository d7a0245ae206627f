import logging

import numpy as np
import pytest

from shiftlab import mlp
from shiftlab.envs import GridMaze, GridMazeSpec
from shiftlab.offline import (
    BehaviorModel,
    OfflineConfig,
    OfflineDataset,
    RandomPolicy,
    _checked_mask,
    cross_entropy,
    evaluate_gap,
    evaluate_table_gap,
    fit_behavior,
    generate_dataset,
    mixed_dataset,
    terminal_value,
    train_offline,
    train_offline_tabular,
)
from shiftlab.shift import ShiftSpec
from shiftlab.tabular import QTable, value_iteration


def _maze(obs="onehot", **kw):
    return GridMaze(GridMazeSpec(7, obs=obs, **kw))


@pytest.fixture(scope="module")
def random_data():
    return generate_dataset(_maze(), RandomPolicy(4), 10_000, seed=0)


def test_exact_size_and_header(random_data):
    assert len(random_data) == 10_000
    h = random_data.header
    assert h["count"] == 10_000 and h["version"] == 1 and h["behavior"] == "random"
    assert h["env_hash"] == _maze().spec_hash()


def test_random_goal_transitions_are_rare_but_present(random_data):
    frac = random_data.rewards.mean()
    assert 0 < frac < 0.05
    assert random_data.terminal.sum() == (random_data.rewards == 1.0).sum()


def test_same_seed_gives_byte_identical_file(tmp_path):
    paths = []
    for name in ("a", "b"):
        data = generate_dataset(_maze(), RandomPolicy(4), 500, seed=3)
        paths.append(tmp_path / f"{name}.jsonl")
        data.save(paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    other = tmp_path / "c.jsonl"
    generate_dataset(_maze(), RandomPolicy(4), 500, seed=4).save(other)
    assert other.read_bytes() != paths[0].read_bytes()


def test_mixed_dataset_is_deterministic():
    a = mixed_dataset(_maze(max_steps=30), 400, seed=1, dqn_episodes=3)
    b = mixed_dataset(_maze(max_steps=30), 400, seed=1, dqn_episodes=3)
    assert a.to_lines() == b.to_lines() and len(a) == 400 and a.header["behavior"] == "mixed"


def test_file_round_trip(tmp_path, random_data):
    path = tmp_path / "d.jsonl"
    random_data.save(path)
    back = OfflineDataset.load(path)
    assert back.header == random_data.header
    for col in ("states", "actions", "rewards", "next_states", "terms"):
        assert np.array_equal(getattr(back, col), getattr(random_data, col))


def test_file_format_rows(tmp_path):
    data = generate_dataset(_maze(obs="coords"), RandomPolicy(4), 3, seed=0)
    lines = data.to_lines()
    assert len(lines) == 4
    assert lines[1].startswith('{"s":[') and '"term":"' in lines[1]


def test_bad_version_rejected(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"version": 2, "count": 0}\n')
    with pytest.raises(ValueError):
        OfflineDataset.load(path)


def test_header_count_mismatch_rejected(random_data):
    with pytest.raises(ValueError):
        OfflineDataset({**random_data.header, "count": 3}, random_data.states, random_data.actions,
                       random_data.rewards, random_data.next_states, random_data.terms)


def test_n_must_be_positive():
    with pytest.raises(ValueError):
        generate_dataset(_maze(), RandomPolicy(4), 0, seed=0)


def test_behavior_model_probabilities(random_data):
    model = fit_behavior(random_data, 4, seed=0, epochs=1)
    p = model.probs(random_data.states[:100])
    assert np.allclose(p.sum(axis=1), 1.0)
    # uniform logging policy: cross-entropy close to log 4
    assert abs(cross_entropy(model, random_data) - np.log(4)) < 0.05


def test_zero_threshold_is_vacuous(random_data):
    model = fit_behavior(random_data, 4, seed=0, epochs=1, tau_bcq=0.0)
    assert model.allowed(random_data.states).all()
    small = generate_dataset(_maze(), RandomPolicy(4), 600, seed=2)
    cfg = OfflineConfig(hidden=(16,))
    a = train_offline(small, ShiftSpec(1.0), model, 2, cfg, seed=0)
    b = train_offline(small, ShiftSpec(1.0), None, 2, cfg, seed=0)
    assert np.array_equal(a.qnet.flat, b.qnet.flat)


def test_empty_candidate_set_falls_back_with_warning(caplog):
    mask = np.array([[True, False], [False, False]])
    with caplog.at_level(logging.WARNING, logger="shiftlab.offline"):
        out = _checked_mask(mask)
    assert out.tolist() == [[True, False], [True, True]]
    assert "no action" in caplog.text


def test_training_touches_no_environment(monkeypatch):
    data = generate_dataset(_maze(), RandomPolicy(4), 600, seed=2)

    def forbidden(self, action):
        raise AssertionError("environment stepped during offline training")

    monkeypatch.setattr(GridMaze, "step", forbidden)
    result = train_offline(data, ShiftSpec(8.0), None, 2, OfflineConfig(hidden=(16,)), seed=0)
    assert len(result.losses) == 2 and np.all(np.isfinite(result.losses))


def test_empty_dataset_rejected(random_data):
    empty = OfflineDataset({**random_data.header, "count": 0}, random_data.states[:0], random_data.actions[:0],
                           random_data.rewards[:0], random_data.next_states[:0], random_data.terms[:0])
    with pytest.raises(ValueError):
        train_offline(empty, ShiftSpec(), None)


@pytest.mark.parametrize("mode,expected", [("absorbing", 80.0), ("cut", 0.0)])
def test_terminal_value(mode, expected):
    assert terminal_value(8.0, 0.9, mode) == pytest.approx(expected)


def test_training_is_reproducible():
    data = generate_dataset(_maze(), RandomPolicy(4), 600, seed=2)
    cfg = OfflineConfig(hidden=(16,))
    a = train_offline(data, ShiftSpec(8.0), None, 2, cfg, seed=5)
    b = train_offline(data, ShiftSpec(8.0), None, 2, cfg, seed=5)
    assert np.array_equal(a.qnet.flat, b.qnet.flat) and a.losses == b.losses


def test_zero_q_in_rewardless_region_has_zero_gap():
    # three steps from the start can never reach the far corner
    env = _maze(max_steps=3)
    data = generate_dataset(env, RandomPolicy(4), 300, seed=0)
    spec = mlp.MlpSpec((49, 8, 4))
    qnet = mlp.MlpParams(spec, np.zeros(spec.n_params))
    report = evaluate_gap(env, qnet, lambda obs: 0, data, ShiftSpec(0.0), 0.99, n_rollouts=50)
    assert report.estimate == 0.0 and report.mc_return == 0.0 and report.gap == 0.0


def test_overestimating_table_has_gap_five():
    env = _maze(obs="index")
    data = generate_dataset(env, RandomPolicy(4), 2000, seed=0)
    q = value_iteration(env, 0.99)
    table = QTable(q + 5.0)
    report = evaluate_table_gap(env, table, data, ShiftSpec(0.0), 0.99, n_rollouts=200)
    assert report.gap == pytest.approx(5.0, abs=1e-9)
    assert report.success_rate == 1.0


def test_wrong_shift_misreports_by_discounted_difference(random_data):
    env = _maze()
    qnet = mlp.init(mlp.MlpSpec((49, 16, 4), output_gain=1.0), 0)
    policy = lambda obs: int(np.argmax(mlp.forward(qnet, obs)))  # noqa: E731
    right = evaluate_gap(env, qnet, policy, random_data, ShiftSpec(1.0), 0.9, n_rollouts=30, seed=1)
    wrong = evaluate_gap(env, qnet, policy, random_data, ShiftSpec(3.0), 0.9, n_rollouts=30, seed=1)
    assert right.mc_return == wrong.mc_return
    assert right.gap - wrong.gap == pytest.approx(2.0 / 0.1, abs=1e-9)


def test_tabular_relabel_linearity():
    env = _maze(obs="index")
    data = generate_dataset(env, RandomPolicy(4), 3000, seed=0)
    gamma, b1, b2 = 0.9, 0.5, 8.0
    offset = (b2 - b1) / (1 - gamma)
    t1 = train_offline_tabular(data, ShiftSpec(b1), 49, 4, epochs=3, gamma=gamma)
    t2 = train_offline_tabular(data, ShiftSpec(b2), 49, 4, epochs=3, gamma=gamma, q0=offset)
    assert np.max(np.abs(t2.values - t1.values - offset)) < 1e-9


def test_behavior_threshold_validation(random_data):
    model = fit_behavior(random_data, 4, seed=0, epochs=1)
    with pytest.raises(ValueError):
        BehaviorModel(model.net, tau_bcq=1.5)
