"""Environment contract, transitions, seeding and the shared episode runner."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

Observation = Union[int, np.ndarray]

_MASK64 = (1 << 64) - 1


class ContractViolation(ValueError):
    """Raised when a caller breaks an operation's preconditions."""


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def make_rng(seed: Optional[int] = None) -> np.random.Generator:
    """Counter-based Philox generator keyed from ``seed`` via splitmix64.

    ``None`` draws fresh OS entropy.
    """
    if seed is None:
        return np.random.Generator(np.random.Philox())
    seed = int(seed) & _MASK64
    k0 = splitmix64(seed)
    k1 = splitmix64(k0)
    key = np.array([k0, k1], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


@dataclass(frozen=True)
class EnvDescriptor:
    observation_kind: str  # "discrete" | "vector"
    observation_dim: int   # state count for discrete, vector width otherwise
    action_count: int
    max_episode_steps: int

    def __post_init__(self):
        if self.observation_kind not in ("discrete", "vector"):
            raise ContractViolation(f"unknown observation kind {self.observation_kind!r}")
        if self.action_count < 2:
            raise ContractViolation("action_count must be >= 2")
        if self.max_episode_steps < 1:
            raise ContractViolation("max_episode_steps must be >= 1")

    @property
    def discrete(self) -> bool:
        return self.observation_kind == "discrete"


@dataclass
class Transition:
    state: Observation
    action: int
    reward: float
    next_state: Observation
    done: bool


@dataclass
class EpisodeTrace:
    transitions: list[Transition] = field(default_factory=list)
    gamma: float = 1.0

    @property
    def rewards(self) -> list[float]:
        return [t.reward for t in self.transitions]

    @property
    def length(self) -> int:
        return len(self.transitions)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    @property
    def discounted_return(self) -> float:
        return discounted_return(self.rewards, self.gamma)

    @property
    def actions(self) -> list[int]:
        return [t.action for t in self.transitions]


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    g = 0.0
    for r in reversed(rewards):
        g = r + gamma * g
    return float(g)


class Env:
    """Base class for the single-agent, episodic environments in this package.

    Subclasses set ``descriptor`` and implement ``_reset`` and ``_step``; the
    base class owns the step counter, the terminal latch and action checks.
    A step returns ``(observation, reward, done)``. ``truncated`` tells
    whether the last ``done`` came from the step cap rather than a terminal
    condition, and ``penalized`` whether the last step counts as a penalty
    for evaluation metrics.
    """

    descriptor: EnvDescriptor

    def __init__(self, seed: Optional[int] = None):
        self.rng = make_rng(seed)
        self.elapsed_steps = 0
        self.truncated = False
        self.penalized = False
        self._needs_reset = True

    def reset(self, seed: Optional[int] = None) -> Observation:
        if seed is not None:
            self.rng = make_rng(seed)
        self.elapsed_steps = 0
        self.truncated = False
        self.penalized = False
        self._needs_reset = False
        return self._reset()

    def step(self, action: int) -> tuple[Observation, float, bool]:
        if self._needs_reset:
            raise ContractViolation("step() called before reset() or after the episode ended")
        a = int(action)
        if a != action or not 0 <= a < self.descriptor.action_count:
            raise ContractViolation(
                f"action {action!r} outside [0, {self.descriptor.action_count})")
        obs, reward, terminal = self._step(a)
        self.elapsed_steps += 1
        self.truncated = not terminal and self.elapsed_steps >= self.descriptor.max_episode_steps
        done = terminal or self.truncated
        if done:
            self._needs_reset = True
        return obs, float(reward), done

    def _reset(self) -> Observation:
        raise NotImplementedError

    def _step(self, action: int) -> tuple[Observation, float, bool]:
        raise NotImplementedError


Policy = Callable[[Observation], int]


def run_episode(env: Env, policy: Policy, max_steps: int,
                rng: Optional[np.random.Generator] = None,
                seed: Optional[int] = None, gamma: float = 1.0) -> EpisodeTrace:
    """Roll ``policy`` out for one episode, stopping at done or ``max_steps``.

    The reset seed is ``seed`` if given, else drawn from ``rng``; with neither
    the environment continues its own stream.
    """
    if max_steps < 1:
        raise ContractViolation("max_steps must be >= 1")
    if seed is None and rng is not None:
        seed = child_seed(rng)
    trace = EpisodeTrace(gamma=gamma)
    state = env.reset(seed=seed)
    for _ in range(max_steps):
        action = int(policy(state))
        next_state, reward, done = env.step(action)
        trace.transitions.append(Transition(state, action, reward, next_state, done))
        state = next_state
        if done:
            break
    return trace


def argmax_first(values) -> int:
    """Index of the maximum, lowest index on ties."""
    return int(np.argmax(values))
