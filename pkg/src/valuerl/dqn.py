"""Deep Q-learning with experience replay and a hard-synced target network."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ContractViolation, Env, Transition, child_seed
from .nn import AdamState, Network, adam_step, backward, forward, init_network


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ContractViolation("capacity must be >= 1")
        self.capacity = int(capacity)
        self._items: list[Optional[Transition]] = [None] * self.capacity
        self._next = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, transition: Transition) -> None:
        self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def items(self) -> list[Transition]:
        """Contents from oldest to newest."""
        if self.size < self.capacity:
            return list(self._items[:self.size])
        return self._items[self._next:] + self._items[:self._next]

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if batch_size > self.size:
            raise ContractViolation(f"cannot sample {batch_size} from {self.size} transitions")
        return rng.choice(self.size, size=batch_size, replace=False)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        return [self._items[i] for i in self.sample_indices(batch_size, rng)]


def sample_minibatch(buffer: ReplayBuffer, batch_size: int, rng) -> list[Transition]:
    return buffer.sample(batch_size, rng)


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "Batch":
        if not transitions:
            raise ContractViolation("empty batch")
        return cls(
            states=np.array([np.asarray(t.state, dtype=np.float64) for t in transitions]),
            actions=np.array([t.action for t in transitions], dtype=np.int64),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
            next_states=np.array([np.asarray(t.next_state, dtype=np.float64) for t in transitions]),
            dones=np.array([t.done for t in transitions], dtype=bool))


def _as_batch(batch) -> Batch:
    return batch if isinstance(batch, Batch) else Batch.from_transitions(batch)


def compute_targets_dqn(batch, target_net: Network, gamma: float) -> np.ndarray:
    b = _as_batch(batch)
    next_q = forward(target_net, b.next_states).max(axis=1)
    return b.rewards + gamma * np.where(b.dones, 0.0, next_q)


def compute_targets_ddqn(batch, main_net: Network, target_net: Network, gamma: float) -> np.ndarray:
    b = _as_batch(batch)
    pick = forward(main_net, b.next_states).argmax(axis=1)
    next_q = forward(target_net, b.next_states)[np.arange(len(pick)), pick]
    return b.rewards + gamma * np.where(b.dones, 0.0, next_q)


def sync_target(main_net: Network, target_net: Network) -> None:
    target_net.load_from(main_net)


def act(net: Network, observation, epsilon: float, rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(net.layer_sizes[-1]))
    return int(np.argmax(forward(net, observation)[0]))


class EpsilonSchedule:
    """Either multiplicative decay per gradient step or linear annealing per
    environment step, behind one interface."""

    def __init__(self, kind: str, start: float, end: float, decay: float = 0.995,
                 fraction: float = 0.1, total_steps: Optional[int] = None):
        if kind not in ("multiplicative", "linear"):
            raise ContractViolation(f"unknown epsilon schedule {kind!r}")
        if kind == "linear" and not total_steps:
            raise ContractViolation("linear epsilon schedule needs a timestep budget")
        self.kind, self.start, self.end = kind, start, end
        self.decay, self.fraction, self.total_steps = decay, fraction, total_steps
        self.value = start

    def on_env_step(self, t: int) -> None:
        if self.kind == "linear":
            progress = min(1.0, t / (self.fraction * self.total_steps))
            self.value = self.start + progress * (self.end - self.start)

    def on_update(self) -> None:
        if self.kind == "multiplicative":
            self.value = max(self.end, self.value * self.decay)


@dataclass
class DqnConfig:
    gamma: float = 0.95
    learning_rate: float = 0.001
    batch_size: int = 64
    buffer_capacity: int = 2000
    warmup: int = 1000
    target_sync: int = 500
    epsilon_schedule: str = "multiplicative"
    epsilon_start: float = 1.0
    epsilon_end: float = 0.001
    epsilon_decay: float = 0.995
    epsilon_fraction: float = 0.1
    variant: str = "dqn"
    failure_reward: Optional[float] = None
    hidden_layers: tuple = (512, 256, 64)
    episodes: Optional[int] = 1000
    total_timesteps: Optional[int] = None
    stop_moving_avg: Optional[float] = None  # early stop once reached
    moving_avg_window: int = 50

    def validate(self) -> "DqnConfig":
        if not self.batch_size <= self.warmup <= self.buffer_capacity:
            raise ContractViolation("need batch_size <= warmup <= buffer_capacity")
        if self.batch_size < 1:
            raise ContractViolation("batch_size must be >= 1")
        if self.target_sync < 1:
            raise ContractViolation("target_sync must be >= 1")
        if not 0 < self.epsilon_fraction <= 1:
            raise ContractViolation("epsilon_fraction must lie in (0, 1]")
        if not 0 <= self.epsilon_end <= self.epsilon_start <= 1:
            raise ContractViolation("need 0 <= epsilon_end <= epsilon_start <= 1")
        if not 0 < self.epsilon_decay <= 1:
            raise ContractViolation("epsilon_decay must lie in (0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ContractViolation("gamma must lie in [0, 1]")
        if self.learning_rate < 0:
            raise ContractViolation("learning_rate must be >= 0")
        if self.variant not in ("dqn", "ddqn"):
            raise ContractViolation(f"unknown variant {self.variant!r}")
        if self.epsilon_schedule not in ("multiplicative", "linear"):
            raise ContractViolation(f"unknown epsilon schedule {self.epsilon_schedule!r}")
        if self.episodes is None and self.total_timesteps is None:
            raise ContractViolation("need an episode or timestep budget")
        if self.epsilon_schedule == "linear" and not self.total_timesteps:
            raise ContractViolation("linear epsilon schedule needs total_timesteps")
        return self

    def schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.epsilon_schedule, self.epsilon_start, self.epsilon_end,
                               self.epsilon_decay, self.epsilon_fraction, self.total_timesteps)


@dataclass
class StepLogRow:
    episode: int
    step: int
    epsilon: float
    loss: float
    buffer_size: int


@dataclass
class DqnResult:
    net: Network
    target_net: Network
    episode_rewards: list[float] = field(default_factory=list)
    episode_epsilons: list[float] = field(default_factory=list)
    step_log: list[StepLogRow] = field(default_factory=list)
    updates: int = 0
    timesteps: int = 0
    buffer: Optional[ReplayBuffer] = None


def masked_targets(pred: np.ndarray, actions: np.ndarray, y: np.ndarray):
    """Target matrix equal to ``pred`` except the taken actions, and the mask
    selecting those entries."""
    target = pred.copy()
    rows = np.arange(len(actions))
    target[rows, actions] = y
    mask = np.zeros_like(pred)
    mask[rows, actions] = 1.0
    return target, mask


def train_dqn(env: Env, config: DqnConfig, rng: np.random.Generator,
              net: Optional[Network] = None,
              on_episode: Optional[Callable[[int, float, float], None]] = None,
              log_every: int = 1) -> DqnResult:
    """Train a Q-network on ``env``.

    Each environment step stores one transition (with the failure reward
    substituted when the episode ended early and shaping is enabled); once
    the buffer holds ``warmup`` transitions every step also performs one
    Adam step on a uniform minibatch. The reported episode rewards are the
    environment's own, never the shaped ones. Training stops at whichever
    budget (episodes, timesteps) comes first, or at ``stop_moving_avg``.
    """
    config.validate()
    d = env.descriptor
    if d.discrete:
        raise ContractViolation("DQN needs a vector-observation environment")
    sizes = [d.observation_dim, *config.hidden_layers, d.action_count]
    if net is None:
        net = init_network(sizes, rng)
    elif net.layer_sizes != sizes:
        raise ContractViolation(f"network shape {net.layer_sizes} does not fit env {sizes}")
    target_net = net.copy()
    adam = AdamState(lr=config.learning_rate)
    buffer = ReplayBuffer(config.buffer_capacity)
    schedule = config.schedule()
    result = DqnResult(net, target_net, buffer=buffer)
    window = config.moving_avg_window
    t = 0
    episode = 0
    while config.episodes is None or episode < config.episodes:
        state = env.reset(seed=child_seed(rng))
        total = 0.0
        eps_used = schedule.value
        done = False
        finished = True
        while not done:
            if config.total_timesteps is not None and t >= config.total_timesteps:
                finished = False
                break
            schedule.on_env_step(t)
            action = act(net, state, schedule.value, rng)
            next_state, reward, done = env.step(action)
            t += 1
            total += reward
            stored = reward
            if done and not env.truncated and config.failure_reward is not None:
                stored = config.failure_reward
            buffer.push(Transition(state, action, stored, next_state, done))
            state = next_state
            loss = float("nan")
            if len(buffer) >= config.warmup:
                loss = _update(net, target_net, adam, buffer, config, rng)
                result.updates += 1
                schedule.on_update()
                if result.updates % config.target_sync == 0:
                    sync_target(net, target_net)
            if log_every and t % log_every == 0:
                result.step_log.append(StepLogRow(episode, t, schedule.value, loss, len(buffer)))
        if not finished:
            break
        result.episode_rewards.append(total)
        result.episode_epsilons.append(eps_used)
        if on_episode is not None:
            on_episode(episode, total, eps_used)
        episode += 1
        if (config.stop_moving_avg is not None and len(result.episode_rewards) >= window
                and np.mean(result.episode_rewards[-window:]) >= config.stop_moving_avg):
            break
    result.timesteps = t
    return result


def _update(net, target_net, adam, buffer, config, rng) -> float:
    batch = Batch.from_transitions(buffer.sample(config.batch_size, rng))
    if config.variant == "ddqn":
        y = compute_targets_ddqn(batch, net, target_net, config.gamma)
    else:
        y = compute_targets_dqn(batch, target_net, config.gamma)
    pred = forward(net, batch.states)
    target, mask = masked_targets(pred, batch.actions, y)
    loss, grads = backward(net, batch.states, target, mask)
    adam_step(net, grads, adam)
    return loss


def moving_average(values: Sequence[float], window: int = 50) -> np.ndarray:
    """Trailing mean over up to ``window`` most recent values."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        return v
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def greedy_net_policy(net: Network) -> Callable:
    return lambda obs: int(np.argmax(forward(net, obs)[0]))


CARTPOLE_DQN = DqnConfig()

HIGHWAY_DQN = DqnConfig(
    gamma=0.99, learning_rate=0.0005, batch_size=32, buffer_capacity=50000, warmup=100,
    target_sync=500, epsilon_schedule="linear", epsilon_start=1.0, epsilon_end=0.02,
    epsilon_fraction=0.1, hidden_layers=(256, 256), episodes=None, total_timesteps=20000)
