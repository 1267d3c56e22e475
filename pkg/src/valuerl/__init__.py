"""Value-based reinforcement learning: tabular Q-learning, DQN/DDQN and three small environments."""

__version__ = "0.1.0"
