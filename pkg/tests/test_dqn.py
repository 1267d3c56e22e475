from dataclasses import replace

import numpy as np
import pytest

from valuerl import dqn
from valuerl.core import ContractViolation, Transition, make_rng
from valuerl.dqn import (CARTPOLE_DQN, HIGHWAY_DQN, Batch, DqnConfig, EpsilonSchedule,
                         ReplayBuffer, act, compute_targets_ddqn, compute_targets_dqn,
                         moving_average, sample_minibatch, sync_target, train_dqn)
from valuerl.envs import CartPoleEnv, TaxiEnv
from valuerl.nn import Network, forward, init_network


def tr(i, reward=0.0, done=False):
    return Transition(np.array([float(i)]), 0, reward, np.array([float(i + 1)]), done)


def constant_net(row):
    """One-input net whose output is ``row`` for input 0 (bias only)."""
    net = Network([1, len(row)])
    net.biases[0][:] = row
    return net


def small_config(**kw):
    base = dict(hidden_layers=(16,), batch_size=8, warmup=32, buffer_capacity=200,
                target_sync=20, episodes=8)
    base.update(kw)
    return replace(CARTPOLE_DQN, **base)


class TestReplayBuffer:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(3)
        for i in range(1, 5):
            buf.push(tr(i))
        assert [t.state[0] for t in buf.items()] == [2.0, 3.0, 4.0]

    def test_size_grows_to_capacity(self):
        buf = ReplayBuffer(3)
        sizes = []
        for i in range(5):
            buf.push(tr(i))
            sizes.append(len(buf))
        assert sizes == [1, 2, 3, 3, 3]

    def test_cartpole_capacity(self):
        assert CARTPOLE_DQN.buffer_capacity == 2000
        assert HIGHWAY_DQN.buffer_capacity == 50000

    def test_bad_capacity(self):
        with pytest.raises(ContractViolation):
            ReplayBuffer(0)

    def test_full_sample_is_permutation(self):
        buf = ReplayBuffer(10)
        for i in range(5):
            buf.push(tr(i))
        got = sorted(t.state[0] for t in sample_minibatch(buf, 5, make_rng(0)))
        assert got == [0.0, 1.0, 2.0, 3.0, 4.0]

    def test_uniform_inclusion(self):
        buf = ReplayBuffer(1000)
        for i in range(1000):
            buf.push(tr(i))
        rng = make_rng(1)
        counts = np.zeros(1000)
        for _ in range(10_000):
            idx = buf.sample_indices(64, rng)
            assert len(set(idx.tolist())) == 64
            assert idx.max() < len(buf)
            counts[idx] += 1
        freq = counts / 10_000
        assert np.all(np.abs(freq - 0.064) < 0.15 * 0.064)

    def test_oversize_batch(self):
        buf = ReplayBuffer(10)
        buf.push(tr(0))
        with pytest.raises(ContractViolation):
            buf.sample(2, make_rng(0))


class TestTargets:
    def test_terminal_failure(self):
        net = constant_net([5.0, 9.0])
        y = compute_targets_dqn([Transition([0.0], 0, -100.0, [0.0], True)], net, 0.95)
        assert y.tolist() == [-100.0]

    def test_bootstrap_arithmetic(self):
        net = constant_net([2.0, 3.0])
        y = compute_targets_dqn([Transition([0.0], 0, 1.0, [0.0], False)], net, 0.95)
        assert y[0] == pytest.approx(3.85)

    def test_zero_gamma(self):
        net = constant_net([2.0, 3.0])
        batch = [Transition([0.0], 0, r, [0.0], False) for r in (1.0, -2.0, 0.5)]
        assert compute_targets_dqn(batch, net, 0.0).tolist() == [1.0, -2.0, 0.5]
        assert compute_targets_ddqn(batch, net, net, 0.0).tolist() == [1.0, -2.0, 0.5]

    def test_ddqn_decoupled_selection(self):
        main, target = constant_net([0.0, 5.0]), constant_net([7.0, 1.0])
        y = compute_targets_ddqn([Transition([0.0], 0, 2.0, [0.0], False)], main, target, 0.9)
        assert y[0] == pytest.approx(2.0 + 0.9 * 1.0)

    def test_identical_nets_agree(self):
        rng = make_rng(3)
        net = init_network([4, 8, 2], rng)
        batch = [Transition(rng.normal(size=4), int(rng.integers(2)), float(rng.normal()),
                            rng.normal(size=4), bool(rng.random() < 0.2)) for _ in range(32)]
        assert np.array_equal(compute_targets_ddqn(batch, net, net.copy(), 0.95),
                              compute_targets_dqn(batch, net, 0.95))

    def test_empty_batch(self):
        with pytest.raises(ContractViolation):
            Batch.from_transitions([])


class TestSync:
    def test_forward_equality(self):
        rng = make_rng(0)
        main, target = init_network([4, 8, 2], rng), init_network([4, 8, 2], rng)
        sync_target(main, target)
        x = rng.normal(size=(100, 4))
        assert np.max(np.abs(forward(main, x) - forward(target, x))) == 0

    def test_independence_and_idempotence(self):
        rng = make_rng(1)
        main, target = init_network([4, 8, 2], rng), init_network([4, 8, 2], rng)
        sync_target(main, target)
        sync_target(main, target)
        snapshot = [p.copy() for p in target.params]
        main.weights[0] += 1.0
        assert all(np.array_equal(a, b) for a, b in zip(snapshot, target.params))


class TestAct:
    def test_greedy(self):
        assert act(constant_net([0.2, 0.9]), [0.0], 0.0, make_rng(0)) == 1

    def test_tie(self):
        assert act(constant_net([0.5, 0.5]), [0.0], 0.0, make_rng(0)) == 0

    def test_uniform(self):
        rng = make_rng(4)
        net = constant_net([0.2, 0.9])
        counts = np.bincount([act(net, [0.0], 1.0, rng) for _ in range(40_000)], minlength=2)
        assert np.all(np.abs(counts / 40_000 - 0.5) < 0.03 * 0.5)


class TestEpsilonSchedule:
    def test_multiplicative(self):
        s = EpsilonSchedule("multiplicative", 1.0, 0.001, 0.995)
        s.on_env_step(10)
        assert s.value == 1.0
        for _ in range(3):
            s.on_update()
        assert s.value == pytest.approx(0.995 ** 3)
        for _ in range(5000):
            s.on_update()
        assert s.value == 0.001

    def test_linear(self):
        s = EpsilonSchedule("linear", 1.0, 0.02, fraction=0.1, total_steps=20000)
        s.on_env_step(0)
        assert s.value == 1.0
        s.on_env_step(1000)
        assert s.value == pytest.approx(0.51)
        s.on_env_step(2000)
        assert s.value == pytest.approx(0.02)
        s.on_env_step(19_999)
        assert s.value == pytest.approx(0.02)

    def test_linear_needs_budget(self):
        with pytest.raises(ContractViolation):
            EpsilonSchedule("linear", 1.0, 0.02)


@pytest.mark.parametrize("bad", [dict(batch_size=64, warmup=32), dict(warmup=3000),
                                 dict(target_sync=0), dict(epsilon_fraction=0.0),
                                 dict(variant="sarsa"), dict(episodes=None)])
def test_config_invariants(bad):
    with pytest.raises(ContractViolation):
        replace(CARTPOLE_DQN, **bad).validate()


def test_rejects_discrete_env():
    with pytest.raises(ContractViolation):
        train_dqn(TaxiEnv(), small_config(), make_rng(0))


def test_no_updates_before_warmup():
    rng = make_rng(0)
    net = init_network([4, 16, 2], make_rng(5))
    before = [p.copy() for p in net.params]
    res = train_dqn(CartPoleEnv(), small_config(warmup=200, total_timesteps=150, episodes=None,
                                                epsilon_schedule="linear"), rng, net=net)
    assert res.updates == 0
    assert all(np.array_equal(a, b) for a, b in zip(before, res.net.params))
    assert all(np.isnan(row.loss) for row in res.step_log)


def test_one_update_per_step_after_warmup():
    res = train_dqn(CartPoleEnv(), small_config(), make_rng(1))
    assert res.updates == res.timesteps - small_config().warmup + 1


def test_shaping_only_in_buffer():
    res = train_dqn(CartPoleEnv(), small_config(failure_reward=-100.0), make_rng(2))
    stored = [t.reward for t in res.buffer.items()]
    assert -100.0 in stored
    assert set(stored) <= {1.0, -100.0}
    assert all(r > 0 for r in res.episode_rewards)
    assert sum(t.done for t in res.buffer.items()) == stored.count(-100.0)


def test_reproducible():
    a = train_dqn(CartPoleEnv(), small_config(), make_rng(7))
    b = train_dqn(CartPoleEnv(), small_config(), make_rng(7))
    assert a.episode_rewards == b.episode_rewards
    assert all(np.array_equal(p, q) for p, q in zip(a.net.params, b.net.params))


def test_target_constant_between_syncs(monkeypatch):
    changes = []
    real_update = dqn._update

    def spy(net, target_net, adam, buffer, config, rng):
        before = [p.copy() for p in target_net.params]
        loss = real_update(net, target_net, adam, buffer, config, rng)
        changes.append(before)
        return loss

    monkeypatch.setattr(dqn, "_update", spy)
    res = train_dqn(CartPoleEnv(), small_config(target_sync=7), make_rng(3))
    assert res.updates > 30
    for i in range(1, len(changes)):
        same = all(np.array_equal(p, q) for p, q in zip(changes[i - 1], changes[i]))
        # the snapshot before update i differs from update i-1 only after a sync
        assert same == (i % 7 != 0)


def test_ddqn_matches_dqn_after_each_sync(monkeypatch):
    rng = make_rng(8)
    probe = [Transition(rng.normal(size=4), 0, 1.0, rng.normal(size=4), False)
             for _ in range(16)]
    syncs = []
    real_sync = dqn.sync_target

    def checked_sync(main, target):
        real_sync(main, target)
        syncs.append(np.array_equal(compute_targets_ddqn(probe, main, target, 0.95),
                                    compute_targets_dqn(probe, target, 0.95)))

    monkeypatch.setattr(dqn, "sync_target", checked_sync)
    train_dqn(CartPoleEnv(), small_config(variant="ddqn", target_sync=10), make_rng(4))
    assert len(syncs) > 3 and all(syncs)


def test_timestep_budget_drops_partial_episode():
    res = train_dqn(CartPoleEnv(), small_config(episodes=None, total_timesteps=100,
                                                epsilon_schedule="linear"), make_rng(5))
    assert res.timesteps == 100
    assert sum(res.episode_rewards) <= 100


def test_moving_average():
    assert moving_average([1, 2, 3, 4], window=2).tolist() == [1.0, 1.5, 2.5, 3.5]
    assert moving_average([], window=3).size == 0
