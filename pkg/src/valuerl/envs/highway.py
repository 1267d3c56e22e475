"""A lightweight multi-lane highway for lane-change decision making.

The ego vehicle picks one of five meta-actions per 0.25 s decision step.
Ambient traffic is spawned ahead of the ego, drives at constant speed,
brakes when it closes in on a leader, and occasionally hops to a free
adjacent lane. Lanes are indexed from 0 (leftmost); the rightmost lane has
the highest index.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from ..core import ContractViolation, Env, EnvDescriptor

LANE_LEFT, IDLE, LANE_RIGHT, FASTER, SLOWER = range(5)
ACTION_NAMES = ("LANE_LEFT", "IDLE", "LANE_RIGHT", "FASTER", "SLOWER")

VEHICLE_LENGTH = 5.0
VEHICLE_WIDTH = 2.0
LANE_WIDTH = 4.0

SPEED_STEP = 5.0          # m/s per FASTER/SLOWER
EGO_ACCEL = 5.0           # m/s^2 relaxation toward target speed
BRAKE_DECEL = 5.0         # m/s^2 for ambient vehicles
HEADWAY = 1.0             # s; brake when gap < 2 * v * HEADWAY
LANE_CHANGE_STEPS = 4
LANE_CHANGE_PROB = 0.01
DESPAWN_BEHIND = 250.0
MIN_SPAWN_GAP = 2.0

OBS_VEHICLES = 5
OBS_FEATURES = 5
OBS_RANGE = 100.0
OBS_SPEED_RANGE = 40.0


@dataclass
class HighwayConfig:
    lanes_count: int = 4
    vehicles_count: int = 50
    vehicles_density: float = 1.0
    duration: int = 120
    v_min: float = 20.0
    v_max: float = 30.0
    speed_coeff: float = 0.4
    collision_coeff: float = 1.0
    right_lane_coeff: float = 0.1
    dt: float = 0.25

    def validate(self) -> "HighwayConfig":
        if self.lanes_count < 2:
            raise ContractViolation("lanes_count must be >= 2")
        if self.vehicles_count < 0:
            raise ContractViolation("vehicles_count must be >= 0")
        if self.vehicles_density <= 0:
            raise ContractViolation("vehicles_density must be > 0")
        if self.duration < 1:
            raise ContractViolation("duration must be >= 1")
        if not self.v_min < self.v_max:
            raise ContractViolation("v_min must be < v_max")
        if self.v_max > OBS_SPEED_RANGE:
            raise ContractViolation(f"v_max must be <= {OBS_SPEED_RANGE}")
        for name in ("speed_coeff", "collision_coeff", "right_lane_coeff"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be >= 0")
        if self.dt <= 0:
            raise ContractViolation("dt must be > 0")
        return self

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def highway_reward(v: float, collided: bool, lane: int, config: HighwayConfig) -> float:
    """Affine speed reward minus collision penalty plus a right-lane bonus."""
    speed_frac = min(max((v - config.v_min) / (config.v_max - config.v_min), 0.0), 1.0)
    return (config.speed_coeff * speed_frac
            - config.collision_coeff * float(collided)
            + config.right_lane_coeff * lane / (config.lanes_count - 1))


def safe_gap(v_follower: float, v_leader: float, dt: float) -> float:
    """Bumper gap a follower needs to stop closing in on its leader by braking."""
    closing = max(v_follower - v_leader, 0.0)
    return closing ** 2 / (2 * BRAKE_DECEL) + closing * dt + MIN_SPAWN_GAP


@dataclass
class Ego:
    lane: int
    s: float
    v: float
    target_v: float
    target_lane: int
    change_progress: int = 0  # decision steps into the current lane change

    @property
    def lateral_dir(self) -> int:
        return (self.target_lane > self.lane) - (self.target_lane < self.lane)

    @property
    def y(self) -> float:
        return (self.lane + self.lateral_dir * self.change_progress / LANE_CHANGE_STEPS) * LANE_WIDTH

    def lateral_speed(self, dt: float) -> float:
        return self.lateral_dir * LANE_WIDTH / (LANE_CHANGE_STEPS * dt)

    def occupied_lanes(self) -> set[int]:
        return {self.lane, self.target_lane}


class HighwayEnv(Env):
    """Observation: flattened 5x5 matrix, ego row first (see ``observe``)."""

    def __init__(self, config: Optional[HighwayConfig] = None, seed: Optional[int] = None,
                 log_trajectory: bool = False):
        super().__init__(seed)
        self.config = (config or HighwayConfig()).validate()
        self.descriptor = EnvDescriptor("vector", OBS_VEHICLES * OBS_FEATURES, 5,
                                        self.config.duration)
        self.log_trajectory = log_trajectory
        self.trajectory: list[dict] = []
        self.crashed = False
        self.ego = Ego(0, 0.0, 0.0, 0.0, 0)
        self.lanes = np.zeros(0, dtype=np.int64)
        self.s = np.zeros(0)
        self.v = np.zeros(0)

    # --- world construction -------------------------------------------------

    def _reset(self):
        cfg = self.config
        rng = self.rng
        mid = 0.5 * (cfg.v_min + cfg.v_max)
        self.ego = Ego(int(rng.integers(cfg.lanes_count)), 0.0, mid, mid, 0)
        self.ego.target_lane = self.ego.lane
        self.lanes = np.zeros(0, dtype=np.int64)
        self.s = np.zeros(0)
        self.v = np.zeros(0)
        self.crashed = False
        self.trajectory = []
        traffic = ([], [], [])
        by_lane = self._by_lane(traffic)
        front = 0.0
        for _ in range(cfg.vehicles_count):
            front = self._spawn_ahead(front, traffic, by_lane)
        self._set_traffic(traffic)
        return self.observe()

    def _set_traffic(self, traffic):
        lanes, s, v = traffic
        self.lanes = np.array(lanes, dtype=np.int64)
        self.s = np.array(s, dtype=np.float64)
        self.v = np.array(v, dtype=np.float64)

    def _traffic_lists(self):
        return self.lanes.tolist(), self.s.tolist(), self.v.tolist()

    def set_world(self, ego_lane: int, ego_v: float, vehicles=(), ego_target_v=None):
        """Replace the world with a scripted one: ``vehicles`` is (lane, s, v) rows."""
        cfg = self.config
        self.reset()
        tv = ego_v if ego_target_v is None else ego_target_v
        self.ego = Ego(ego_lane, 0.0, float(ego_v), float(tv), ego_lane)
        rows = np.asarray(list(vehicles), dtype=float).reshape(-1, 3)
        if np.any((rows[:, 0] < 0) | (rows[:, 0] >= cfg.lanes_count)):
            raise ContractViolation("vehicle lane out of range")
        self.lanes = rows[:, 0].astype(np.int64)
        self.s = rows[:, 1].copy()
        self.v = rows[:, 2].copy()
        return self.observe()

    def _lane_is_clear(self, lane: int, s: float, v: float, others) -> bool:
        """Could a vehicle at (lane, s, v) sit there without an imminent conflict?

        ``others`` lists the (s, v) pairs of the ambient vehicles already in ``lane``.
        """
        dt = self.config.dt
        if lane in self.ego.occupied_lanes():
            others = others + [(self.ego.s, self.ego.v)]
        for so, vo in others:
            if so >= s:
                if so - s - VEHICLE_LENGTH < safe_gap(v, vo, dt):
                    return False
            elif s - so - VEHICLE_LENGTH < safe_gap(vo, v, dt):
                return False
        return True

    def _by_lane(self, traffic):
        by_lane = [[] for _ in range(self.config.lanes_count)]
        for lo, so, vo in zip(*traffic):
            by_lane[lo].append((so, vo))
        return by_lane

    def _spawn_ahead(self, front: float, traffic, by_lane) -> float:
        """Append one vehicle beyond ``front`` to ``traffic`` and ``by_lane``; returns its position."""
        cfg = self.config
        rng = self.rng
        mean_gap = 25.0 / cfg.vehicles_density
        s = front
        while True:
            s += rng.exponential(mean_gap)
            v = rng.uniform(0.7 * cfg.v_min, cfg.v_max)
            for lane in rng.permutation(cfg.lanes_count).tolist():
                if self._lane_is_clear(lane, s, v, by_lane[lane]):
                    traffic[0].append(lane)
                    traffic[1].append(s)
                    traffic[2].append(v)
                    by_lane[lane].append((s, v))
                    return s

    # --- dynamics -----------------------------------------------------------

    def _apply_action(self, action: int):
        cfg = self.config
        ego = self.ego
        if action == FASTER:
            ego.target_v = min(ego.target_v + SPEED_STEP, cfg.v_max)
        elif action == SLOWER:
            ego.target_v = max(ego.target_v - SPEED_STEP, max(cfg.v_min - SPEED_STEP, 0.0))
        elif action in (LANE_LEFT, LANE_RIGHT) and ego.change_progress == 0:
            delta = -1 if action == LANE_LEFT else 1
            ego.target_lane = min(max(ego.lane + delta, 0), cfg.lanes_count - 1)

    def _move_ego(self):
        dt = self.config.dt
        ego = self.ego
        limit = EGO_ACCEL * dt
        ego.v = float(ego.v + min(max(ego.target_v - ego.v, -limit), limit))
        ego.s += ego.v * dt
        if ego.target_lane != ego.lane:
            ego.change_progress += 1
            if ego.change_progress >= LANE_CHANGE_STEPS:
                ego.lane = ego.target_lane
                ego.change_progress = 0

    def _sort_traffic(self):
        """Reorder the ambient arrays by (lane, position)."""
        order = np.lexsort((self.s, self.lanes))
        self.lanes, self.s, self.v = self.lanes[order], self.s[order], self.v[order]

    def _leader_gaps(self):
        """Bumper gap and speed of each ambient vehicle's nearest leader (ambient
        or ego) in its lane; inf gap when none. Expects sorted traffic."""
        lanes, s, v = self.lanes, self.s, self.v
        n = len(s)
        gap = np.empty(n)
        gap[-1] = np.inf
        np.subtract(s[1:], s[:-1] + VEHICLE_LENGTH, out=gap[:-1])
        gap[:-1][lanes[1:] != lanes[:-1]] = np.inf
        lead_v = np.zeros(n)
        lead_v[:-1] = v[1:]
        # only the vehicle directly behind the ego in a lane can have it as leader
        ego = self.ego
        key = lanes * 1e6 + s
        for lane in {ego.lane, ego.target_lane}:
            j = int(np.searchsorted(key, lane * 1e6 + ego.s)) - 1
            if j >= 0 and lanes[j] == lane:
                ego_gap = ego.s - s[j] - VEHICLE_LENGTH
                if ego_gap < gap[j]:
                    gap[j] = ego_gap
                    lead_v[j] = ego.v
        return gap, lead_v

    def _move_ambient(self):
        cfg = self.config
        dt = cfg.dt
        if len(self.s) == 0:
            return
        self._sort_traffic()
        gap, lead_v = self._leader_gaps()
        v = self.v
        braking = ((gap < 2 * HEADWAY * v) & (v > lead_v)).nonzero()[0]
        if len(braking):
            v[braking] = np.maximum(v[braking] - BRAKE_DECEL * dt, lead_v[braking])
        hops = (self.rng.random(len(self.s)) < LANE_CHANGE_PROB).nonzero()[0]
        if len(hops):
            traffic = self._traffic_lists()
            for i in hops.tolist():
                lane = traffic[0][i]
                options = [l for l in (lane - 1, lane + 1) if 0 <= l < cfg.lanes_count]
                target = options[int(self.rng.integers(len(options)))]
                others = [(so, vo) for j, (lo, so, vo) in enumerate(zip(*traffic))
                          if lo == target and j != i]
                if self._lane_is_clear(target, traffic[1][i], traffic[2][i], others):
                    self.lanes[i] = target
                    traffic[0][i] = target
        self.s += self.v * dt

    def _respawn(self):
        if len(self.s) == 0 or self.s.min() >= self.ego.s - DESPAWN_BEHIND:
            return
        keep = self.s >= self.ego.s - DESPAWN_BEHIND
        dropped = int(np.count_nonzero(~keep))
        self.lanes, self.s, self.v = self.lanes[keep], self.s[keep], self.v[keep]
        traffic = self._traffic_lists()
        by_lane = self._by_lane(traffic)
        for _ in range(dropped):
            front = max(max(traffic[1], default=0.0), self.ego.s)
            self._spawn_ahead(front, traffic, by_lane)
        self._set_traffic(traffic)

    def collided(self) -> bool:
        if len(self.s) == 0:
            return False
        ego = self.ego
        close = (np.abs(self.s - ego.s) < VEHICLE_LENGTH).nonzero()[0]
        if len(close) == 0:
            return False
        y = ego.y
        return any(abs(lane * LANE_WIDTH - y) < VEHICLE_WIDTH for lane in self.lanes[close].tolist())

    def ambient_overlaps(self) -> bool:
        """True if any two ambient vehicles overlap (used for sanity checks)."""
        order = np.lexsort((self.s, self.lanes))
        lanes, s = self.lanes[order], self.s[order]
        same = lanes[1:] == lanes[:-1]
        return bool(np.any(same & (s[1:] - s[:-1] < VEHICLE_LENGTH)))

    def _step(self, action):
        self._apply_action(action)
        self._move_ego()
        self._move_ambient()
        self.crashed = self.collided()
        self._respawn()
        reward = highway_reward(self.ego.v, self.crashed, self.ego.lane, self.config)
        self.penalized = self.crashed
        if self.log_trajectory:
            self.trajectory.append({
                "step": self.elapsed_steps + 1, "ego_lane": self.ego.lane,
                "ego_s": self.ego.s, "ego_v": self.ego.v,
                "reward": reward, "collided": int(self.crashed)})
        return self.observe(), reward, self.crashed

    # --- observation --------------------------------------------------------

    def observe(self) -> np.ndarray:
        """5x5 kinematics matrix, flattened row-major.

        Ego row: [1, travelled fraction, lateral position, speed, lateral speed].
        Other rows, nearest four vehicles within 100 m by |ds|:
        [1, ds, dy, dv, lateral speed]; absent rows are zero.
        """
        cfg = self.config
        ego = self.ego
        obs = np.zeros((OBS_VEHICLES, OBS_FEATURES))
        max_travel = OBS_SPEED_RANGE * cfg.dt * cfg.duration
        lat_scale = LANE_WIDTH * (cfg.lanes_count - 1)
        lat_speed_scale = LANE_WIDTH / (LANE_CHANGE_STEPS * cfg.dt)
        ego_y = ego.y
        obs[0] = (1.0, ego.s / max_travel, ego_y / lat_scale,
                  ego.v / OBS_SPEED_RANGE, ego.lateral_speed(cfg.dt) / lat_speed_scale)
        if len(self.s):
            ds = self.s - ego.s
            dist = np.abs(ds)
            nearest = np.argsort(dist, kind="stable")[:OBS_VEHICLES - 1]
            nearest = nearest[dist[nearest] <= OBS_RANGE]
            k = len(nearest)
            if k:
                block = obs[1:1 + k]
                block[:, 0] = 1.0
                block[:, 1] = ds[nearest] / OBS_RANGE
                block[:, 2] = (self.lanes[nearest] * LANE_WIDTH - ego_y) / lat_scale
                block[:, 3] = (self.v[nearest] - ego.v) / OBS_SPEED_RANGE
        return np.clip(obs, -1.0, 1.0, out=obs).reshape(-1)


def write_trajectory_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["step", "ego_lane", "ego_s", "ego_v", "reward", "collided"])
        w.writeheader()
        for row in rows:
            w.writerow(row)
