import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from valuerl.core import make_rng
from valuerl.envs.cartpole import (PUSH_LEFT, PUSH_RIGHT, CartPoleEnv, CartPoleParams,
                                   cartpole_reset, cartpole_step, euler_update, pole_energy)

P = CartPoleParams()


def hand_integrated_push_right():
    # at rest, upright: sin = 0, cos = 1
    total = 1.1
    temp = 10.0 / total
    theta_acc = -temp / (0.5 * (4 / 3 - 0.1 / total))
    x_acc = temp - 0.1 * 0.5 * theta_acc / total
    return np.array([0.0, 0.02 * x_acc, 0.0, 0.02 * theta_acc])


def test_push_right_from_rest():
    nxt, r, done = cartpole_step(np.zeros(4), PUSH_RIGHT)
    expected = hand_integrated_push_right()
    assert np.allclose(nxt, expected, atol=1e-12)
    assert np.allclose(nxt, [0, 0.19512, 0, -0.29268], atol=1e-4)
    assert r == 1.0 and not done


def test_push_left_mirrors_push_right():
    right, _, _ = cartpole_step(np.zeros(4), PUSH_RIGHT)
    left, _, _ = cartpole_step(np.zeros(4), PUSH_LEFT)
    assert np.array_equal(left, -right)


@settings(max_examples=300)
@given(st.lists(st.floats(-0.3, 0.3), min_size=4, max_size=4))
def test_mirror_symmetry(state):
    s = np.array(state)
    a, _, _ = cartpole_step(s, PUSH_RIGHT)
    b, _, _ = cartpole_step(-s, PUSH_LEFT)
    assert np.allclose(b, -a, atol=1e-12, rtol=0)


def test_balanced_fixed_point():
    s = (0.0, 0.0, 0.0, 0.0)
    for _ in range(100):
        s = euler_update(s, 0.0, P)
    assert s == (0.0, 0.0, 0.0, 0.0)


def test_energy_drift_is_first_order():
    s0 = (0.0, 0.0, 0.05, 0.0)
    drift = {}
    for tau, n in ((0.02, 100), (0.01, 200)):
        s = s0
        for _ in range(n):
            s = euler_update(s, 0.0, P, tau)
        drift[tau] = abs(pole_energy(s, P) - pole_energy(s0, P))
    assert 1.6 < drift[0.02] / drift[0.01] < 2.4
    # per-step drift stays well inside O(tau) with a unit constant
    assert drift[0.02] / 100 < 0.02


def test_reset_bounds_and_mean():
    rng = make_rng(0)
    draws = np.array([cartpole_reset(rng) for _ in range(10_000)])
    assert np.all(np.abs(draws) <= 0.05)
    big = make_rng(1).uniform(-0.05, 0.05, size=(100_000, 4))
    assert np.all(np.abs(big.mean(axis=0)) < 0.002)
    many = np.array([cartpole_reset(rng) for _ in range(100_000)])
    assert np.all(np.abs(many.mean(axis=0)) < 0.002)


def test_reset_seeded():
    assert np.array_equal(cartpole_reset(make_rng(3)), cartpole_reset(make_rng(3)))


def test_termination_thresholds():
    assert P.theta_threshold == pytest.approx(math.radians(15))
    _, _, done = cartpole_step(np.array([0.0, 0.0, 0.27, 0.0]), PUSH_RIGHT)
    assert done
    _, _, done = cartpole_step(np.array([2.4, 1.0, 0.0, 0.0]), PUSH_RIGHT)
    assert done
    _, _, done = cartpole_step(np.array([0.0, 0.0, 0.2, 0.0]), PUSH_LEFT)
    assert not done
    twelve = CartPoleParams(theta_threshold_deg=12.0)
    _, _, done = cartpole_step(np.array([0.0, 0.0, 0.22, 0.0]), PUSH_LEFT, twelve)
    assert done


def balancing_policy(obs):
    x, x_dot, theta, theta_dot = obs
    return PUSH_RIGHT if theta + 0.5 * theta_dot + 0.01 * x + 0.05 * x_dot > 0 else PUSH_LEFT


def test_step_cap_at_500():
    env = CartPoleEnv(seed=0)
    obs = env.reset()
    total, done, steps = 0.0, False, 0
    while not done:
        obs, r, done = env.step(balancing_policy(obs))
        total += r
        steps += 1
    assert steps == 500
    assert env.truncated
    assert total == steps


def test_return_equals_length():
    env = CartPoleEnv(seed=2)
    env.reset()
    rng = make_rng(2)
    total, steps, done = 0.0, 0, False
    while not done:
        _, r, done = env.step(int(rng.integers(2)))
        total += r
        steps += 1
    assert total == steps and not env.truncated
