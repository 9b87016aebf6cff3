"""Communication-driven bullishness with market feedback.

Each day the population meets in random groups. A size-``k`` group holding
``j`` bulls turns all-bullish with probability ``m[k][j]`` and all-bearish
otherwise. The change in bullishness moves the market return, and that
return tilts tomorrow's persuasion probabilities.

Group-size weights ``pi[k]`` are agent-level: the chance that a randomly
picked agent sits in a group of size ``k``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidParameterError

# math.comb is exact for any size, but B**j underflows long before this.
MAX_GROUP_SIZE = 1000


class Baseline(str, enum.Enum):
    MAJORITY = "majority"
    NEUTRAL = "neutral"


def binomial_coeff(k: int, j: int) -> int:
    if not (0 <= j <= k <= MAX_GROUP_SIZE):
        raise InvalidParameterError(f"need 0 <= j <= k <= {MAX_GROUP_SIZE}, got k={k}, j={j}")
    return math.comb(k, j)


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """``rows[k - 1][j]`` is the chance a size-k group with j bulls goes all-bullish."""

    rows: tuple[np.ndarray, ...]

    def __post_init__(self):
        rows = tuple(np.array(r, dtype=float) for r in self.rows)
        for k, r in enumerate(rows, start=1):
            if r.shape != (k + 1,):
                raise InvalidParameterError(f"row for k={k} needs {k + 1} entries")
            if np.any((r < 0) | (r > 1)):
                raise InvalidParameterError(f"row for k={k} has entries outside [0, 1]")
            r.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def k_max(self) -> int:
        return len(self.rows)

    def __getitem__(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.k_max:
            raise InvalidParameterError(f"group size {k} outside 1..{self.k_max}")
        return self.rows[k - 1]

    def __eq__(self, other):
        return isinstance(other, TransitionMatrix) and len(self.rows) == len(other.rows) and all(
            np.array_equal(a, b) for a, b in zip(self.rows, other.rows)
        )


def baseline_matrix(kind: Baseline | str, k_max: int, tie_prob: float = 0.5) -> TransitionMatrix:
    kind = Baseline(kind)
    if k_max < 1:
        raise InvalidParameterError("k_max must be >= 1")
    if not 0 <= tie_prob <= 1:
        raise InvalidParameterError("tie_prob must be in [0, 1]")
    rows = []
    for k in range(1, k_max + 1):
        j = np.arange(k + 1)
        if kind is Baseline.NEUTRAL:
            r = j / k
        else:
            r = np.where(2 * j > k, 1.0, 0.0)
            r[2 * j == k] = tie_prob
        r[0], r[k] = 0.0, 1.0
        rows.append(r)
    return TransitionMatrix(tuple(rows))


def modulate_matrix(baseline: TransitionMatrix, r: float, alpha: float,
                    pin_unanimity: bool = True) -> TransitionMatrix:
    """Scale the baseline by ``exp(r / alpha)``, capped at 1.

    Always applied to the stored baseline, never to yesterday's output.
    """
    if not alpha > 0:
        raise InvalidParameterError("alpha must be > 0")
    factor = math.exp(r / alpha)
    rows = []
    for row in baseline.rows:
        new = np.minimum(1.0, row * factor)
        if pin_unanimity:
            new[0], new[-1] = row[0], row[-1]
        rows.append(new)
    return TransitionMatrix(tuple(rows))


def _weights(pi, k_max: int) -> np.ndarray:
    """Normalize group-size weights to an array indexed by k - 1."""
    if isinstance(pi, Mapping):
        w = np.zeros(max(pi))
        for k, v in pi.items():
            if k < 1:
                raise InvalidParameterError("group sizes start at 1")
            w[k - 1] = v
    else:
        w = np.asarray(pi, dtype=float)
    if w.size > k_max and np.any(w[k_max:] > 0):
        raise InvalidParameterError(f"weights reach group size {w.size} beyond k_max={k_max}")
    if np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
        raise InvalidParameterError("group-size weights must be nonnegative and sum to 1")
    return w[:k_max]


def update_bullishness(B: float, m: TransitionMatrix, pi) -> float:
    """Mean-field bullishness after one round of group meetings."""
    if not 0 <= B <= 1:
        raise InvalidParameterError("B must lie in [0, 1]")
    w = _weights(pi, m.k_max)
    total = 0.0
    for k, wk in enumerate(w, start=1):
        if wk == 0:
            continue
        j = np.arange(k + 1)
        coeff = np.array([binomial_coeff(k, i) for i in j], dtype=float)
        total += wk * float(np.sum(m[k] * coeff * B ** j * (1 - B) ** (k - j)))
    return min(1.0, max(0.0, total))


def market_return(RB: float, phi: float, mu: float) -> float:
    if not mu > 0:
        raise InvalidParameterError("mu must be > 0")
    return RB / mu + phi


def volatility(RB: float, sigma0: float, beta: float) -> float:
    if not (sigma0 > 0 and beta > 0):
        raise InvalidParameterError("sigma0 and beta must be > 0")
    return sigma0 * math.exp(RB / beta)


@dataclass(frozen=True)
class SentimentParams:
    group_weights: tuple[float, ...] = (0.0, 1 / 3, 1 / 3, 1 / 3)
    mu: float = 1.0
    sigma0: float = 0.01
    beta: float = 1.0
    alpha: float = 0.05
    clamp_eps: float = 1e-3
    pin_unanimity: bool = True
    log_change: bool = False

    def __post_init__(self):
        w = tuple(float(x) for x in self.group_weights)
        object.__setattr__(self, "group_weights", w)
        _weights(w, len(w))
        if not (self.mu > 0 and self.sigma0 > 0 and self.beta > 0 and self.alpha > 0):
            raise InvalidParameterError("mu, sigma0, beta and alpha must be > 0")
        if not 0 < self.clamp_eps < 0.5:
            raise InvalidParameterError("clamp_eps must be in (0, 0.5)")

    @property
    def k_max(self) -> int:
        return len(self.group_weights)


@dataclass(frozen=True)
class SentimentState:
    B: float
    B_prev: float
    r: float
    sigma: float
    baseline: TransitionMatrix
    t: int = 0

    @classmethod
    def initial(cls, B0: float, baseline: TransitionMatrix, params: SentimentParams) -> "SentimentState":
        B0 = _clamp(B0, params.clamp_eps)
        return cls(B0, B0, 0.0, params.sigma0, baseline)


@dataclass(frozen=True)
class DayRecord:
    t: int
    B: float
    RB: float
    sigma: float
    r: float
    tipping_flag: int = 0


def _clamp(B: float, eps: float) -> float:
    return min(1.0 - eps, max(eps, B))


def coupled_step(state: SentimentState, params: SentimentParams, rng: np.random.Generator | None = None,
                 phi: float | None = None) -> tuple[SentimentState, DayRecord]:
    """One day of the sentiment-return loop.

    ``phi`` fixes the news shock; otherwise it is drawn N(0, sigma(t)).
    """
    m = modulate_matrix(state.baseline, state.r, params.alpha, params.pin_unanimity)
    B = _clamp(update_bullishness(state.B, m, params.group_weights), params.clamp_eps)
    if params.log_change:
        RB = math.log(B / state.B)
    else:
        RB = (B - state.B) / state.B
    sigma = volatility(RB, params.sigma0, params.beta)
    if phi is None:
        if rng is None:
            raise InvalidParameterError("need an rng or an explicit phi")
        phi = float(rng.normal(0.0, sigma))
    r = market_return(RB, phi, params.mu)
    t = state.t + 1
    new = SentimentState(B, state.B, r, sigma, state.baseline, t)
    return new, DayRecord(t, B, RB, sigma, r)


def run_sentiment(state: SentimentState, params: SentimentParams, T: int, seed: int | None = None,
                  noise: bool = True) -> list[DayRecord]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(T):
        state, rec = coupled_step(state, params, rng, None if noise else 0.0)
        out.append(rec)
    return out


def simulate_day_agents(population: Sequence[bool] | np.ndarray, m: TransitionMatrix, pi,
                        rng: np.random.Generator) -> np.ndarray:
    """One day of meetings for an explicit population of bull (True) / bear agents.

    Agents are shuffled and cut into consecutive groups. Sizes are drawn so
    that agent-level size frequencies follow ``pi``; the last group takes
    whatever remains.
    """
    pop = np.asarray(population, dtype=bool)
    n = pop.size
    if n == 0:
        raise InvalidParameterError("population must be nonempty")
    w = _weights(pi, m.k_max)
    sizes_k = np.arange(1, w.size + 1)
    per_group = w / sizes_k
    per_group /= per_group.sum()
    cdf = np.cumsum(per_group)
    cdf[-1] = 1.0

    expected = float(per_group @ sizes_k)
    sizes = np.empty(0, dtype=np.int64)
    while sizes.sum() < n:
        draw = np.searchsorted(cdf, rng.random(int((n - sizes.sum()) / expected) + 8), side="right") + 1
        sizes = np.concatenate([sizes, draw])
    ends = np.cumsum(sizes)
    cut = int(np.searchsorted(ends, n))
    sizes = sizes[: cut + 1]
    ends = ends[: cut + 1]
    sizes[-1] -= int(ends[-1] - n)
    ends[-1] = n

    order = rng.permutation(n)
    running = np.concatenate([[0], np.cumsum(pop[order], dtype=np.int64)])
    bulls = running[ends] - running[ends - sizes]

    table = np.zeros((m.k_max + 1, m.k_max + 1))
    for k in range(1, m.k_max + 1):
        table[k, : k + 1] = m[k]
    verdict = rng.random(sizes.size) < table[sizes, bulls]

    out = np.empty(n, dtype=bool)
    out[order] = np.repeat(verdict, sizes)
    return out


class TippingKind(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class TippingEvent:
    t: int
    kind: TippingKind
    B_at_event: float


def detect_tipping(series: Sequence, upper: float = 0.9, lower: float = 0.1) -> list[TippingEvent]:
    """Days where B crosses ``upper`` from below or ``lower`` from above.

    ``series`` holds DayRecords or bare B values (then t is the position).
    """
    if not (0 < lower < upper < 1):
        raise InvalidParameterError("need 0 < lower < upper < 1")
    events = []
    prev = None
    for pos, item in enumerate(series):
        t, B = (item.t, item.B) if isinstance(item, DayRecord) else (pos, float(item))
        if prev is not None:
            if prev <= upper < B:
                events.append(TippingEvent(t, TippingKind.UPPER, B))
            elif prev >= lower > B:
                events.append(TippingEvent(t, TippingKind.LOWER, B))
        prev = B
    return events


def flag_tipping(records: Sequence[DayRecord], upper: float = 0.9, lower: float = 0.1,
                 B0: float | None = None) -> list[DayRecord]:
    """Copy of ``records`` with ``tipping_flag`` set to +1 / -1 on crossing days."""
    seq = list(records) if B0 is None else [B0, *records]
    flags = {e.t: (1 if e.kind is TippingKind.UPPER else -1) for e in detect_tipping(seq, upper, lower)}
    return [replace(r, tipping_flag=flags.get(r.t, 0)) for r in records]


def day_rows(records: Sequence[DayRecord]) -> tuple[list[str], list[list]]:
    return ["t", "B", "RB", "sigma", "r", "tipping_flag"], [
        [r.t, r.B, r.RB, r.sigma, r.r, r.tipping_flag] for r in records
    ]
