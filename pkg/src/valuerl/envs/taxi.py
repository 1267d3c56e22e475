"""5x5 Taxi gridworld with the 500-state encoding.

Map (``|`` is a wall, ``:`` is passable)::

    +---------+
    |R: | : :G|
    | : | : : |
    | : : : : |
    | | : | : |
    |Y| : |B: |
    +---------+
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..core import ContractViolation, Env, EnvDescriptor

N_ROWS = N_COLS = 5
N_PASSENGER_LOCS = 5  # four landmarks + in-taxi
N_DESTINATIONS = 4
STATE_COUNT = N_ROWS * N_COLS * N_PASSENGER_LOCS * N_DESTINATIONS
IN_TAXI = 4

SOUTH, NORTH, EAST, WEST, PICKUP, DROPOFF = range(6)
ACTION_NAMES = ("south", "north", "east", "west", "pickup", "dropoff")

LANDMARKS = ((0, 0), (0, 4), (4, 0), (4, 3))
LANDMARK_NAMES = "RGYB"

# walls between horizontally adjacent cells, as (row, left_col)
WALLS = frozenset({(0, 1), (1, 1), (3, 0), (3, 2), (4, 0), (4, 2)})

STEP_REWARD = -1.0
ILLEGAL_REWARD = -10.0
SUCCESS_REWARD = 20.0


def taxi_encode(row: int, col: int, passenger_loc: int, destination: int) -> int:
    if not (0 <= row < N_ROWS and 0 <= col < N_COLS
            and 0 <= passenger_loc < N_PASSENGER_LOCS and 0 <= destination < N_DESTINATIONS):
        raise ContractViolation(
            f"taxi state fields out of range: {(row, col, passenger_loc, destination)}")
    return ((row * N_COLS + col) * N_PASSENGER_LOCS + passenger_loc) * N_DESTINATIONS + destination


def taxi_decode(state: int) -> tuple[int, int, int, int]:
    if not 0 <= state < STATE_COUNT:
        raise ContractViolation(f"taxi state id {state} outside [0, {STATE_COUNT})")
    state, destination = divmod(state, N_DESTINATIONS)
    state, passenger_loc = divmod(state, N_PASSENGER_LOCS)
    row, col = divmod(state, N_COLS)
    return row, col, passenger_loc, destination


def blocked(a: tuple[int, int], b: tuple[int, int]) -> bool:
    """True if a taxi cannot move directly between cells ``a`` and ``b``."""
    (r1, c1), (r2, c2) = a, b
    for r, c in (a, b):
        if not (0 <= r < N_ROWS and 0 <= c < N_COLS):
            return True
    if abs(r1 - r2) + abs(c1 - c2) != 1:
        return True
    if r1 == r2:
        return (r1, min(c1, c2)) in WALLS
    return False


_MOVES = {SOUTH: (1, 0), NORTH: (-1, 0), EAST: (0, 1), WEST: (0, -1)}


def taxi_step(state: int, action: int) -> tuple[int, float, bool]:
    """Deterministic transition: returns (next_state, reward, done)."""
    if not 0 <= action < 6:
        raise ContractViolation(f"taxi action {action} outside [0, 6)")
    row, col, pas, dest = taxi_decode(state)
    if action in _MOVES:
        dr, dc = _MOVES[action]
        nr, nc = row + dr, col + dc
        if blocked((row, col), (nr, nc)):
            nr, nc = row, col
        return taxi_encode(nr, nc, pas, dest), STEP_REWARD, False
    here = (row, col)
    if action == PICKUP:
        if pas != IN_TAXI and LANDMARKS[pas] == here:
            return taxi_encode(row, col, IN_TAXI, dest), STEP_REWARD, False
        return state, ILLEGAL_REWARD, False
    if pas == IN_TAXI and LANDMARKS[dest] == here:
        return taxi_encode(row, col, dest, dest), SUCCESS_REWARD, True
    if pas == IN_TAXI and here in LANDMARKS:
        # legal drop at the wrong landmark: the passenger waits there
        return taxi_encode(row, col, LANDMARKS.index(here), dest), STEP_REWARD, False
    return state, ILLEGAL_REWARD, False


def transition_table() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Enumerate every (state, action) into next-state, reward and done arrays."""
    nxt = np.empty((STATE_COUNT, 6), dtype=np.int64)
    rew = np.empty((STATE_COUNT, 6))
    done = np.empty((STATE_COUNT, 6), dtype=bool)
    for s in range(STATE_COUNT):
        for a in range(6):
            nxt[s, a], rew[s, a], done[s, a] = taxi_step(s, a)
    return nxt, rew, done


def start_states() -> list[int]:
    """States of the start distribution: passenger waiting away from its destination."""
    return [s for s in range(STATE_COUNT)
            if taxi_decode(s)[2] != IN_TAXI and taxi_decode(s)[2] != taxi_decode(s)[3]]


_TABLE = None


def _table():
    global _TABLE
    if _TABLE is None:
        nxt, rew, done = transition_table()
        # plain lists are much faster than numpy scalars inside python loops
        _TABLE = (nxt.tolist(), rew.tolist(), done.tolist())
    return _TABLE


class TaxiEnv(Env):
    state_count = STATE_COUNT
    action_names = ACTION_NAMES

    def __init__(self, seed: Optional[int] = None, max_episode_steps: int = 200):
        super().__init__(seed)
        self.descriptor = EnvDescriptor("discrete", STATE_COUNT, 6, max_episode_steps)
        self._starts = np.array(start_states())
        self.s = 0

    def transition_table(self):
        return transition_table()

    def _reset(self) -> int:
        self.s = int(self._starts[self.rng.integers(len(self._starts))])
        return self.s

    def _step(self, action):
        nxt, rew, done = _table()
        s = self.s
        self.s = nxt[s][action]
        reward = rew[s][action]
        self.penalized = reward == ILLEGAL_REWARD
        return self.s, reward, done[s][action]

    def render(self, state: Optional[int] = None) -> str:
        return render(self.s if state is None else state)


def render(state: int) -> str:
    """Character grid: ``T`` empty taxi, ``@`` taxi with passenger, lowercase
    landmark = waiting passenger; the destination is named on the last line."""
    row, col, pas, dest = taxi_decode(state)
    lines = ["+" + "-" * (2 * N_COLS - 1) + "+"]
    for r in range(N_ROWS):
        cells = []
        for c in range(N_COLS):
            ch = " "
            if (r, c) in LANDMARKS:
                i = LANDMARKS.index((r, c))
                ch = LANDMARK_NAMES[i].lower() if i == pas else LANDMARK_NAMES[i]
            if (r, c) == (row, col):
                ch = "@" if pas == IN_TAXI else "T"
            cells.append(ch)
        line = "|"
        for c, ch in enumerate(cells):
            line += ch
            if c < N_COLS - 1:
                line += "|" if (r, c) in WALLS else ":"
        lines.append(line + "|")
    lines.append("+" + "-" * (2 * N_COLS - 1) + "+")
    lines.append(f"destination: {LANDMARK_NAMES[dest]}")
    return "\n".join(lines)
