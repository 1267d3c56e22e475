"""Tabular Q-learning, greedy evaluation and an exact value-iteration oracle."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import ContractViolation, Env, EnvDescriptor, child_seed


@dataclass
class TabularParams:
    learning_rate: float = 0.1
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_decay: float = 0.995
    epsilon_warmup_episodes: int = 200
    episodes: int = 5000

    def validate(self) -> "TabularParams":
        if not 0 < self.learning_rate <= 1:
            raise ContractViolation("learning_rate must lie in (0, 1]")
        if not 0 < self.gamma <= 1:
            raise ContractViolation("gamma must lie in (0, 1]")
        if not 0 <= self.epsilon_end <= self.epsilon_start <= 1:
            raise ContractViolation("need 0 <= epsilon_end <= epsilon_start <= 1")
        if not 0 < self.epsilon_decay <= 1:
            raise ContractViolation("epsilon_decay must lie in (0, 1]")
        if self.episodes < 0 or self.epsilon_warmup_episodes < 0:
            raise ContractViolation("episode counts must be non-negative")
        return self


def q_update(q: np.ndarray, s: int, a: int, r: float, s_next: int, done: bool,
             alpha: float, gamma: float) -> float:
    bootstrap = 0.0 if done else gamma * q[s_next].max()
    q[s, a] += alpha * (r + bootstrap - q[s, a])
    return float(q[s, a])


def epsilon_greedy(q_row, epsilon: float, rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(len(q_row)))
    return int(np.argmax(q_row))


def decay_epsilon(epsilon: float, decay: float, floor: float) -> float:
    return max(floor, epsilon * decay)


@dataclass
class TabularResult:
    q: np.ndarray
    episode_rewards: list[float] = field(default_factory=list)
    episode_epsilons: list[float] = field(default_factory=list)
    table_diffs: list[float] = field(default_factory=list)


def train_tabular(env: Env, params: TabularParams, rng: np.random.Generator,
                  on_episode: Optional[Callable[[int, float, float], None]] = None) -> TabularResult:
    """Epsilon-greedy Q-learning over ``params.episodes`` episodes.

    Epsilon is recorded as used during each episode, then decayed once per
    episode after the warm-up. ``table_diffs`` holds the max absolute change
    of the table over each episode.
    """
    params.validate()
    d = env.descriptor
    if not d.discrete:
        raise ContractViolation("tabular learning needs a discrete-observation environment")
    q = np.zeros((d.observation_dim, d.action_count))
    result = TabularResult(q)
    eps = params.epsilon_start
    alpha, gamma = params.learning_rate, params.gamma
    n_actions = d.action_count
    for episode in range(params.episodes):
        before = q.copy()
        state = env.reset(seed=child_seed(rng))
        total = 0.0
        done = False
        while not done:
            if rng.random() < eps:
                action = int(rng.integers(n_actions))
            else:
                action = int(np.argmax(q[state]))
            next_state, reward, done = env.step(action)
            # time-limit cut-offs still bootstrap
            terminal = done and not env.truncated
            q_update(q, state, action, reward, next_state, terminal, alpha, gamma)
            total += reward
            state = next_state
        result.episode_rewards.append(total)
        result.episode_epsilons.append(eps)
        result.table_diffs.append(float(np.max(np.abs(q - before))))
        if on_episode is not None:
            on_episode(episode, total, eps)
        if episode + 1 >= params.epsilon_warmup_episodes:
            eps = decay_epsilon(eps, params.epsilon_decay, params.epsilon_end)
    return result


def greedy_policy(q: np.ndarray) -> Callable[[int], int]:
    best = np.argmax(q, axis=1)
    return lambda s: int(best[s])


def random_policy(descriptor, rng: np.random.Generator) -> Callable[[object], int]:
    """Uniform random actions; ``descriptor`` may be an EnvDescriptor or an action count."""
    n = descriptor.action_count if isinstance(descriptor, EnvDescriptor) else int(descriptor)
    if n < 1:
        raise ContractViolation("action count must be positive")
    if n == 1:
        return lambda _s: 0
    return lambda _s: int(rng.integers(n))


@dataclass
class EvalStats:
    episodes: int
    penalties_per_episode: float
    timesteps_per_trip: float
    reward_per_move: float
    mean_return: float
    returns: list[float] = field(default_factory=list)
    lengths: list[int] = field(default_factory=list)


def evaluate(env: Env, policy: Callable, episodes: int, rng: np.random.Generator) -> EvalStats:
    """Run ``policy`` without learning; a penalty is any step the env flags as penalized."""
    if episodes < 1:
        raise ContractViolation("episodes must be >= 1")
    returns, lengths, penalties = [], [], 0
    for _ in range(episodes):
        state = env.reset(seed=child_seed(rng))
        total, steps, done = 0.0, 0, False
        while not done:
            state, reward, done = env.step(policy(state))
            total += reward
            steps += 1
            penalties += env.penalized
        returns.append(total)
        lengths.append(steps)
    total_steps = sum(lengths)
    return EvalStats(
        episodes=episodes,
        penalties_per_episode=penalties / episodes,
        timesteps_per_trip=total_steps / episodes,
        reward_per_move=sum(returns) / total_steps,
        mean_return=sum(returns) / episodes,
        returns=returns, lengths=lengths)


def value_iteration_oracle(transitions, gamma: float, tol: float = 1e-12,
                           max_sweeps: int = 100_000, history: Optional[list] = None) -> np.ndarray:
    """Exact Q* for a deterministic MDP given as (next_state, reward, done) arrays.

    ``transitions`` may also be an object with a ``transition_table()`` method.
    Sweeps are synchronous; ``history`` collects the max change of each sweep.
    """
    if tol <= 0:
        raise ContractViolation("tol must be > 0")
    if hasattr(transitions, "transition_table"):
        transitions = transitions.transition_table()
    nxt, rew, done = (np.asarray(x) for x in transitions)
    cont = gamma * (~done.astype(bool))
    q = np.zeros(rew.shape)
    for _ in range(max_sweeps):
        new = rew + cont * q.max(axis=1)[nxt]
        change = float(np.max(np.abs(new - q)))
        q = new
        if history is not None:
            history.append(change)
        if change < tol:
            break
    return q
