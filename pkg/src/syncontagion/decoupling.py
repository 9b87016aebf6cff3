"""Decoupled strategies and probability-1 predictive days.

A strategy is decoupled at history ``h`` when its prediction after the next
move is the same whichever way that move goes. If the decoupled tables in
play outweigh half the population, the move two steps ahead is already
fixed. ``two_branch_oracle`` checks this by brute force.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, UnsupportedModeError
from .game_engine import (
    GameConfig,
    GameState,
    HistoryWindow,
    StrategyTable,
    TieBreak,
    game_step,
    strategy_predict,
)


class Direction(str, enum.Enum):
    UP = "up"
    DOWN = "down"

    @classmethod
    def from_move(cls, move: int) -> "Direction":
        return cls.UP if move == 1 else cls.DOWN


class Source(str, enum.Enum):
    CONDITION = "condition"
    ORACLE = "oracle"


@dataclass(frozen=True)
class ImbalanceSplit:
    a_coupled: int
    a_decoupled: int
    total: int
    # A(t) actually produced by the in-use tables at the current history.
    realized: int
    n_decoupled: int


@dataclass(frozen=True)
class PredictiveDay:
    t: int
    direction: Direction
    source: Source
    run_length: int
    run_start: bool


def successor(h: HistoryWindow, x: int) -> HistoryWindow:
    if x not in (0, 1):
        raise InvalidParameterError(f"move must be 0 or 1, got {x!r}")
    return HistoryWindow(h.bits[1:] + (x,))


def is_decoupled(s: StrategyTable, h: HistoryWindow) -> bool:
    return strategy_predict(s, successor(h, 0)) == strategy_predict(s, successor(h, 1))


def _successor_indices(state: GameState) -> tuple[int, int]:
    mask = (1 << state.config.memory) - 1
    base = (state.history_index << 1) & mask
    return base, base | 1


def split_imbalance(state: GameState) -> ImbalanceSplit:
    """Split the in-use tables into coupled and decoupled at the current history.

    Coupled tables contribute today's action; decoupled ones contribute
    their common prediction for the step after next.
    """
    n = state.config.n_agents
    chosen = state.best_strategies()
    tables = state.strategies[np.arange(n), chosen]
    s0, s1 = _successor_indices(state)
    ahead0 = tables[:, s0].astype(np.int64)
    decoupled = ahead0 == tables[:, s1]
    now = tables[:, state.history_index].astype(np.int64)
    a_dec = int(ahead0[decoupled].sum())
    a_cpl = int(now[~decoupled].sum())
    return ImbalanceSplit(a_cpl, a_dec, a_cpl + a_dec, int(now.sum()), int(decoupled.sum()))


def _flag(a_decoupled: int, n: int) -> Direction | None:
    # 2a > N is a > N/2 without floats.
    if 2 * a_decoupled > n:
        return Direction.UP
    if 2 * a_decoupled < -n:
        return Direction.DOWN
    return None


def predictability_flag(state: GameState) -> Direction | None:
    return _flag(split_imbalance(state).a_decoupled, state.config.n_agents)


def _check_oracle_mode(config: GameConfig) -> None:
    if config.tie_break is not TieBreak.LOWEST:
        raise UnsupportedModeError("two-branch oracle needs the deterministic lowest-index tie-break")
    if config.n_agents % 2 == 0:
        raise UnsupportedModeError("two-branch oracle needs odd N so no move is a coin flip")


@dataclass(frozen=True)
class OracleOutcome:
    direction: Direction | None
    # True when neither branch changes any agent's chosen-strategy index
    # between today and tomorrow.
    choices_stable: bool
    branch_moves: tuple[int, int]


def oracle_outcome(state: GameState) -> OracleOutcome:
    _check_oracle_mode(state.config)
    today = state.best_strategies()
    moves = []
    stable = True
    for forced in (0, 1):
        branch = state.clone()
        game_step(branch, forced_move=forced)
        stable &= bool(np.array_equal(branch.best_strategies(), today))
        rec = game_step(branch)
        if rec.coin_flip:
            return OracleOutcome(None, stable, (-1, -1))
        moves.append(rec.move)
    direction = Direction.from_move(moves[0]) if moves[0] == moves[1] else None
    return OracleOutcome(direction, stable, (moves[0], moves[1]))


def two_branch_oracle(state: GameState) -> Direction | None:
    """Direction of the move after next if it is the same for both next moves."""
    return oracle_outcome(state).direction


@dataclass
class ScanRow:
    t: int
    a_coupled: int
    a_decoupled: int
    flag_eq2: Direction | None
    oracle_direction: Direction | None
    choices_stable: bool
    run_length: int = 0


@dataclass
class ScanResult:
    config: GameConfig
    rows: list[ScanRow]
    days: list[PredictiveDay] = field(default_factory=list)

    @property
    def flagged(self) -> list[ScanRow]:
        return [r for r in self.rows if r.flag_eq2 is not None]

    @property
    def agreement_rate(self) -> float | None:
        """Share of flagged days the oracle confirms in the flagged direction."""
        flagged = self.flagged
        if not flagged:
            return None
        return sum(r.oracle_direction == r.flag_eq2 for r in flagged) / len(flagged)

    @property
    def run_starts(self) -> list[PredictiveDay]:
        return [d for d in self.days if d.run_start and d.run_length >= 2]

    def csv(self) -> tuple[list[str], list[list]]:
        columns = ["t", "a_coupled", "a_decoupled", "flag_eq2", "oracle_direction", "run_length"]
        rows = [
            [
                r.t,
                r.a_coupled,
                r.a_decoupled,
                r.flag_eq2.value if r.flag_eq2 else "",
                r.oracle_direction.value if r.oracle_direction else "",
                r.run_length,
            ]
            for r in self.rows
        ]
        return columns, rows


def scan_predictive_days(config: GameConfig, T: int, state: GameState | None = None) -> ScanResult:
    """Run a game for T steps and evaluate the oracle on days 0..T-3.

    Each row also records whether the decoupled-majority condition fired,
    so the agreement between condition and oracle can be measured.
    ``state`` replaces the seed-drawn start (it is advanced in place).
    """
    if T < 3:
        raise InvalidParameterError("T must be >= 3")
    _check_oracle_mode(config)
    if state is None:
        state = GameState.initial(config)
    n = config.n_agents
    rows = []
    for _ in range(T - 2):
        split = split_imbalance(state)
        outcome = oracle_outcome(state)
        rows.append(ScanRow(
            state.t, split.a_coupled, split.a_decoupled,
            _flag(split.a_decoupled, n), outcome.direction, outcome.choices_stable,
        ))
        game_step(state)

    run = 0
    for row in reversed(rows):
        run = run + 1 if row.oracle_direction is not None else 0
        row.run_length = run

    days = []
    prev_predictive = False
    for row in rows:
        if row.oracle_direction is not None:
            days.append(PredictiveDay(row.t, row.oracle_direction, Source.ORACLE,
                                      row.run_length, not prev_predictive))
        prev_predictive = row.oracle_direction is not None
    return ScanResult(config, rows, days)
