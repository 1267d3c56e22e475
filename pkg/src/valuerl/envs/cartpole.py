"""Cart-pole balancing with explicit Euler integration."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import Env, EnvDescriptor

PUSH_LEFT, PUSH_RIGHT = 0, 1


@dataclass(frozen=True)
class CartPoleParams:
    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_half_length: float = 0.5
    force_mag: float = 10.0
    tau: float = 0.02
    x_threshold: float = 2.4
    theta_threshold_deg: float = 15.0
    max_episode_steps: int = 500

    @property
    def theta_threshold(self) -> float:
        return math.radians(self.theta_threshold_deg)


def cartpole_derivatives(state, force: float, p: CartPoleParams):
    """Accelerations (x_acc, theta_acc) for state (x, x_dot, theta, theta_dot)."""
    _, _, theta, theta_dot = state
    total_mass = p.cart_mass + p.pole_mass
    pml = p.pole_mass * p.pole_half_length
    cos, sin = math.cos(theta), math.sin(theta)
    temp = (force + pml * theta_dot ** 2 * sin) / total_mass
    theta_acc = (p.gravity * sin - cos * temp) / (
        p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos ** 2 / total_mass))
    x_acc = temp - pml * theta_acc * cos / total_mass
    return x_acc, theta_acc


def euler_update(state, force: float, p: CartPoleParams, tau: Optional[float] = None):
    tau = p.tau if tau is None else tau
    x, x_dot, theta, theta_dot = state
    x_acc, theta_acc = cartpole_derivatives(state, force, p)
    x = x + tau * x_dot
    x_dot = x_dot + tau * x_acc
    theta = theta + tau * theta_dot
    theta_dot = theta_dot + tau * theta_acc
    return x, x_dot, theta, theta_dot


def is_failed(state, p: CartPoleParams) -> bool:
    x, _, theta, _ = state
    return abs(x) > p.x_threshold or abs(theta) > p.theta_threshold


def cartpole_step(state, action: int, p: CartPoleParams = CartPoleParams()):
    """One decision step; ``done`` here covers only the failure conditions."""
    force = p.force_mag if action == PUSH_RIGHT else -p.force_mag
    nxt = euler_update(tuple(float(v) for v in state), force, p)
    return np.array(nxt), 1.0, is_failed(nxt, p)


def cartpole_reset(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-0.05, 0.05, size=4)


def pole_energy(state, p: CartPoleParams) -> float:
    """Total mechanical energy with the pivot height as the potential reference."""
    _, x_dot, theta, theta_dot = state
    l = p.pole_half_length
    # pole centre of mass velocity
    vx = x_dot + l * theta_dot * math.cos(theta)
    vy = -l * theta_dot * math.sin(theta)
    inertia = p.pole_mass * l ** 2 / 3.0
    kinetic = (0.5 * p.cart_mass * x_dot ** 2 + 0.5 * p.pole_mass * (vx ** 2 + vy ** 2)
               + 0.5 * inertia * theta_dot ** 2)
    return kinetic + p.pole_mass * p.gravity * l * math.cos(theta)


class CartPoleEnv(Env):
    """Observation is ``[x, x_dot, theta, theta_dot]``."""

    def __init__(self, seed: Optional[int] = None, params: CartPoleParams = CartPoleParams()):
        super().__init__(seed)
        self.params = params
        self.descriptor = EnvDescriptor("vector", 4, 2, params.max_episode_steps)
        self.state = np.zeros(4)

    def _reset(self):
        self.state = cartpole_reset(self.rng)
        return self.state.copy()

    def _step(self, action):
        self.state, reward, failed = cartpole_step(self.state, action, self.params)
        return self.state.copy(), reward, failed
