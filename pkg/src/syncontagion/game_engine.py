"""Minority Game and $-Game price-direction loop.

Agents hold ``S`` strategy tables over ``m``-bit direction histories. Each
step every agent plays its best-scoring table, the summed order imbalance
``A`` sets the next move, and every table of every agent is scored
virtually against ``A``.

Histories are encoded as integers with the oldest bit most significant, so
``(0, 1, 0)`` is index 2 and a strategy table is a vector of ``2**m``
predictions in {+1, -1}.
"""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidParameterError, StateError

# 2**24 entries per table is already 16 MB of int8 per strategy.
MAX_MEMORY = 24


class Variant(str, enum.Enum):
    MINORITY = "minority"
    DOLLAR = "dollar"


class Payoff(str, enum.Enum):
    LINEAR = "linear"
    SIGN = "sign"


class TieBreak(str, enum.Enum):
    LOWEST = "lowest"
    RANDOM = "random"


def _check_memory(m: int) -> None:
    if not isinstance(m, (int, np.integer)) or m < 1 or m > MAX_MEMORY:
        raise InvalidParameterError(f"memory must be an integer in [1, {MAX_MEMORY}], got {m!r}")


@dataclass(frozen=True)
class HistoryWindow:
    """The last ``m`` price directions, oldest first (0 = down, 1 = up)."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        _check_memory(len(bits))
        if any(b not in (0, 1) for b in bits):
            raise InvalidParameterError(f"history bits must be 0 or 1, got {bits}")
        object.__setattr__(self, "bits", bits)

    @property
    def m(self) -> int:
        return len(self.bits)

    @property
    def index(self) -> int:
        idx = 0
        for b in self.bits:
            idx = (idx << 1) | b
        return idx

    @classmethod
    def from_index(cls, index: int, m: int) -> "HistoryWindow":
        _check_memory(m)
        if not 0 <= index < (1 << m):
            raise InvalidParameterError(f"history index {index} out of range for m={m}")
        return cls(tuple((index >> (m - 1 - k)) & 1 for k in range(m)))

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True, eq=False)
class StrategyTable:
    """A buy (+1) / sell (-1) prediction for every possible ``m``-bit history."""

    predictions: np.ndarray

    def __post_init__(self):
        pred = np.asarray(self.predictions, dtype=np.int8).copy()
        if pred.ndim != 1 or pred.size < 2 or pred.size & (pred.size - 1):
            raise InvalidParameterError("a strategy table needs 2**m entries with m >= 1")
        if not np.all(np.abs(pred) == 1):
            raise InvalidParameterError("predictions must be +1 or -1")
        pred.setflags(write=False)
        object.__setattr__(self, "predictions", pred)

    @property
    def m(self) -> int:
        return int(self.predictions.size).bit_length() - 1

    @classmethod
    def from_rows(cls, rows: dict) -> "StrategyTable":
        """Build from ``{history_string_or_tuple: prediction}``, e.g. ``{"010": 1, ...}``."""
        hists = [HistoryWindow(tuple(int(c) for c in k)) for k in rows]
        m = hists[0].m
        if len(rows) != 1 << m or any(h.m != m for h in hists):
            raise InvalidParameterError("rows must cover every history of one memory length")
        pred = np.zeros(1 << m, dtype=np.int8)
        for h, v in zip(hists, rows.values()):
            pred[h.index] = v
        return cls(pred)

    @classmethod
    def constant(cls, m: int, action: int) -> "StrategyTable":
        _check_memory(m)
        return cls(np.full(1 << m, action, dtype=np.int8))

    def __eq__(self, other):
        return isinstance(other, StrategyTable) and np.array_equal(self.predictions, other.predictions)

    def __hash__(self):
        return hash(self.predictions.tobytes())


def random_strategy(m: int, rng: np.random.Generator) -> StrategyTable:
    _check_memory(m)
    return StrategyTable(_random_tables(rng, (1 << m,)))


def _random_tables(rng: np.random.Generator, shape) -> np.ndarray:
    return (2 * rng.integers(0, 2, size=shape, dtype=np.int8) - 1).astype(np.int8)


def strategy_predict(s: StrategyTable, h: HistoryWindow) -> int:
    if s.m != h.m:
        raise InvalidParameterError(f"memory mismatch: table m={s.m}, history m={h.m}")
    return int(s.predictions[h.index])


@dataclass(frozen=True)
class GameConfig:
    n_agents: int = 101
    memory: int = 3
    strategies_per_agent: int = 2
    variant: Variant = Variant.MINORITY
    seed: int = 0
    payoff: Payoff = Payoff.LINEAR
    tie_break: TieBreak = TieBreak.LOWEST

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "payoff", Payoff(self.payoff))
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))
        if self.n_agents < 1:
            raise InvalidParameterError("n_agents must be >= 1")
        if self.strategies_per_agent < 1:
            raise InvalidParameterError("strategies_per_agent must be >= 1")
        _check_memory(self.memory)


@dataclass
class AgentState:
    strategies: list[StrategyTable]
    scores: list[int]


@dataclass
class StepRecord:
    t: int
    A: int
    move: int
    actions: np.ndarray
    chosen_strategy: np.ndarray
    coin_flip: bool = False


@dataclass
class GameState:
    """Mutable game state.

    ``strategies`` has shape (N, S, 2**m) and is never written after
    construction, so clones share it. ``prev_predictions`` holds every
    strategy's prediction from the previous step ($-Game payoff) and is
    ``None`` before the first step.
    """

    config: GameConfig
    strategies: np.ndarray
    scores: np.ndarray
    history_index: int
    rng: np.random.Generator
    t: int = 0
    prev_predictions: np.ndarray | None = None
    _mask: int = field(init=False, repr=False)

    def __post_init__(self):
        cfg = self.config
        shape = (cfg.n_agents, cfg.strategies_per_agent, 1 << cfg.memory)
        if self.strategies.shape != shape:
            raise InvalidParameterError(f"strategies shape {self.strategies.shape} != {shape}")
        if self.scores.shape != shape[:2]:
            raise InvalidParameterError(f"scores shape {self.scores.shape} != {shape[:2]}")
        self._mask = (1 << cfg.memory) - 1
        if not 0 <= self.history_index <= self._mask:
            raise StateError("history is not initialized")

    @classmethod
    def initial(cls, config: GameConfig) -> "GameState":
        """Seed-drawn history (m bits, then all tables) and zero scores."""
        rng = np.random.default_rng(config.seed)
        bits = rng.integers(0, 2, size=config.memory)
        history = HistoryWindow(tuple(int(b) for b in bits))
        shape = (config.n_agents, config.strategies_per_agent, 1 << config.memory)
        strategies = _random_tables(rng, shape)
        return cls(config, strategies, np.zeros(shape[:2], dtype=np.int64), history.index, rng)

    @classmethod
    def from_strategies(
        cls,
        config: GameConfig,
        agents: Sequence[Sequence[StrategyTable]],
        history: HistoryWindow,
        scores=None,
    ) -> "GameState":
        """Hand-built state, e.g. a population all holding one known table."""
        if len(agents) != config.n_agents:
            raise InvalidParameterError("agent count does not match n_agents")
        if history.m != config.memory:
            raise InvalidParameterError("history length does not match memory")
        strategies = np.array([[s.predictions for s in a] for a in agents], dtype=np.int8)
        sc = np.zeros(strategies.shape[:2], dtype=np.int64) if scores is None else np.array(scores, dtype=np.int64)
        return cls(config, strategies, sc, history.index, np.random.default_rng(config.seed))

    @property
    def history(self) -> HistoryWindow:
        return HistoryWindow.from_index(self.history_index, self.config.memory)

    def agent(self, i: int) -> AgentState:
        return AgentState(
            strategies=[StrategyTable(s) for s in self.strategies[i]],
            scores=[int(x) for x in self.scores[i]],
        )

    @property
    def agents(self) -> list[AgentState]:
        return [self.agent(i) for i in range(self.config.n_agents)]

    def clone(self) -> "GameState":
        other = copy.copy(self)
        other.scores = self.scores.copy()
        other.rng = copy.deepcopy(self.rng)
        if self.prev_predictions is not None:
            other.prev_predictions = self.prev_predictions.copy()
        return other

    def best_strategies(self) -> np.ndarray:
        """Index of each agent's top-scoring strategy, ties to the lowest index.

        Pure: never touches the RNG, even under the random tie-break.
        """
        return np.argmax(self.scores, axis=1)

    def _choose(self) -> np.ndarray:
        if self.config.tie_break is TieBreak.LOWEST:
            return self.best_strategies()
        top = self.scores == self.scores.max(axis=1, keepdims=True)
        noise = self.rng.random(self.scores.shape)
        return np.argmax(np.where(top, noise, -1.0), axis=1)


def game_step(state: GameState, forced_move: int | None = None) -> StepRecord:
    """Advance one step in place.

    ``forced_move`` overrides only the direction appended to the history
    (used by the two-branch oracle); actions, ``A`` and score updates are
    the agents' realized ones.
    """
    if state.strategies is None or state.scores is None:
        raise StateError("game state is not initialized")
    cfg = state.config
    n = cfg.n_agents
    h = state.history_index

    chosen = state._choose()
    predictions = state.strategies[:, :, h]
    actions = predictions[np.arange(n), chosen]
    A = int(actions.sum(dtype=np.int64))

    coin = False
    if forced_move is not None:
        if forced_move not in (0, 1):
            raise InvalidParameterError("forced_move must be 0 or 1")
        move = int(forced_move)
    elif A > 0:
        move = 1
    elif A < 0:
        move = 0
    else:
        move = int(state.rng.integers(0, 2))
        coin = True

    signal = A if cfg.payoff is Payoff.LINEAR else int(np.sign(A))
    if cfg.variant is Variant.MINORITY:
        state.scores -= predictions.astype(np.int64) * signal
    elif state.prev_predictions is not None:
        state.scores += state.prev_predictions.astype(np.int64) * signal
    state.prev_predictions = predictions

    record = StepRecord(state.t, A, move, actions.copy(), chosen, coin)
    state.history_index = ((h << 1) | move) & state._mask
    state.t += 1
    return record


def run_game(config: GameConfig, T: int) -> list[StepRecord]:
    if T < 1:
        raise InvalidParameterError("T must be >= 1")
    state = GameState.initial(config)
    return [game_step(state) for _ in range(T)]


def step_rows(records: Iterable[StepRecord], agent_actions: bool = False) -> tuple[list[str], list[list]]:
    """CSV columns and rows: t, A, move and optionally one column per agent."""
    records = list(records)
    columns = ["t", "A", "move"]
    if agent_actions and records:
        columns += [f"a{i}" for i in range(len(records[0].actions))]
    rows = []
    for r in records:
        row = [r.t, r.A, r.move]
        if agent_actions:
            row += [int(a) for a in r.actions]
        rows.append(row)
    return columns, rows
