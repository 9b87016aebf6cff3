"""Daily quotes, open/close returns and the change-blindness analysis.

Change blindness: the probability that a market's next return shares the
sign of a prior move elsewhere stays near one half for small moves and
rises for large ones.
"""

from __future__ import annotations

import bisect
import csv
import enum
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, InvalidParameterError

log = logging.getLogger(__name__)

DEFAULT_EDGES = (0.0, 0.005, 0.01, 0.02, 0.03, 0.05, math.inf)


class ReturnKind(str, enum.Enum):
    OPEN_CLOSE = "open-close"
    CLOSE_OPEN = "close-open"


class Lag(str, enum.Enum):
    SAME = "same"
    NEXT = "next"


@dataclass(frozen=True)
class QuoteRow:
    date: date
    index_id: str
    open: float
    close: float


@dataclass
class LoadResult:
    rows: list[QuoteRow]
    diagnostics: list[str] = field(default_factory=list)
    duplicates: int = 0


def load_quotes(path) -> LoadResult:
    """Read ``date,index_id,open,close`` CSV; bad rows become diagnostics.

    Raises DataError only when no valid row remains.
    """
    path = Path(path)
    rows: list[QuoteRow] = []
    diags: list[str] = []
    seen: set[tuple[date, str]] = set()
    dup = 0
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"date", "index_id", "open", "close"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: header lacks columns {sorted(missing)}")
        for rec in reader:
            line = reader.line_num
            try:
                d = date.fromisoformat(rec["date"].strip())
            except (ValueError, AttributeError):
                diags.append(f"{path}:{line}: malformed date {rec['date']!r}")
                continue
            try:
                o, c = float(rec["open"]), float(rec["close"])
            except (TypeError, ValueError):
                diags.append(f"{path}:{line}: non-numeric price")
                continue
            if not (o > 0 and c > 0):
                diags.append(f"{path}:{line}: nonpositive price (open={o}, close={c})")
                continue
            key = (d, rec["index_id"].strip())
            if key in seen:
                dup += 1
                diags.append(f"{path}:{line}: duplicate ({key[0]}, {key[1]}) ignored")
                continue
            seen.add(key)
            rows.append(QuoteRow(d, key[1], o, c))
    if not rows:
        raise DataError(f"{path}: no valid quote rows ({len(diags)} rejected)")
    rows.sort(key=lambda r: (r.index_id, r.date))
    return LoadResult(rows, diags, dup)


@dataclass
class ReturnSeries:
    dates: list
    values: np.ndarray
    kind: ReturnKind

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.dates) != len(self.values):
            raise InvalidParameterError("dates and values differ in length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise InvalidParameterError("dates must be strictly increasing")

    def __len__(self):
        return len(self.dates)


def _ret(new: float, old: float, log_returns: bool) -> float:
    return math.log(new / old) if log_returns else (new - old) / old


def compute_returns(rows: Iterable[QuoteRow], kind: ReturnKind | str,
                    log_returns: bool = False) -> dict[str, ReturnSeries]:
    """Per-index returns.

    Open-close is keyed by its own day. Close-open spans consecutive rows
    d -> d' and is keyed by d', the day the overnight move is priced in.
    """
    kind = ReturnKind(kind)
    by_id: dict[str, list[QuoteRow]] = defaultdict(list)
    for r in rows:
        by_id[r.index_id].append(r)
    out = {}
    for idx, rs in sorted(by_id.items()):
        rs.sort(key=lambda r: r.date)
        if kind is ReturnKind.OPEN_CLOSE:
            dates = [r.date for r in rs]
            vals = [_ret(r.close, r.open, log_returns) for r in rs]
        else:
            if len(rs) < 2:
                log.warning("index %s has %d row(s); close-open needs 2", idx, len(rs))
            dates = [b.date for b in rs[1:]]
            vals = [_ret(b.open, a.close, log_returns) for a, b in zip(rs, rs[1:])]
        out[idx] = ReturnSeries(dates, np.array(vals), kind)
    return out


def weighted_index(series: Mapping[str, ReturnSeries], weights: Mapping[str, float]) -> ReturnSeries:
    """Weighted return over the dates each member shares with at least one other.

    Weights are renormalized over the members present on each date.
    """
    acc: dict = defaultdict(lambda: [0.0, 0.0])
    kinds = {s.kind for s in series.values()}
    for idx, s in series.items():
        w = float(weights[idx])
        for d, v in zip(s.dates, s.values):
            acc[d][0] += w * v
            acc[d][1] += w
    dates = sorted(d for d, (_, tw) in acc.items() if tw > 0)
    vals = [acc[d][0] / acc[d][1] for d in dates]
    return ReturnSeries(dates, np.array(vals), kinds.pop() if len(kinds) == 1 else ReturnKind.OPEN_CLOSE)


def align(conditioning: ReturnSeries, response: ReturnSeries, lag: Lag | str = Lag.SAME):
    """Paired (conditioning, response) values.

    ``same`` pairs equal dates; ``next`` pairs each conditioning date with
    the first response date strictly after it.
    """
    lag = Lag(lag)
    if lag is Lag.SAME:
        pos = {d: k for k, d in enumerate(response.dates)}
        pairs = [(i, pos[d]) for i, d in enumerate(conditioning.dates) if d in pos]
    else:
        pairs = []
        for i, d in enumerate(conditioning.dates):
            k = bisect.bisect_right(response.dates, d)
            if k < len(response.dates):
                pairs.append((i, k))
    if not pairs:
        return np.empty(0), np.empty(0)
    ci, ri = map(np.array, zip(*pairs))
    return conditioning.values[ci], response.values[ri]


@dataclass
class ConditionalBins:
    bin_edges: np.ndarray
    counts: np.ndarray
    matches: np.ndarray
    magnitude: bool = True
    n_aligned: int = 0
    n_outside: int = 0

    @property
    def probabilities(self) -> list[float | None]:
        return [m / c if c else None for m, c in zip(self.matches, self.counts)]

    def csv(self) -> tuple[list[str], list[list]]:
        rows = [
            [float(lo), float(hi), int(c), "" if p is None else p]
            for lo, hi, c, p in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts, self.probabilities)
        ]
        return ["bin_lo", "bin_hi", "count", "probability"], rows


def sign_agreement(cond: np.ndarray, resp: np.ndarray, edges: Sequence[float] = DEFAULT_EDGES,
                   magnitude: bool = True) -> ConditionalBins:
    """Bin paired values by the conditioning value and count sign matches.

    Pairs with a zero on either side are dropped. Bins are [lo, hi); the
    last bin also includes its upper edge.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise InvalidParameterError("edges must be strictly increasing with at least two entries")
    cond = np.asarray(cond, dtype=float)
    resp = np.asarray(resp, dtype=float)
    keep = (cond != 0) & (resp != 0)
    cond, resp = cond[keep], resp[keep]
    x = np.abs(cond) if magnitude else cond
    b = np.searchsorted(edges, x, side="right") - 1
    b[x == edges[-1]] = edges.size - 2
    inside = (b >= 0) & (b < edges.size - 1)
    agree = np.sign(cond) == np.sign(resp)
    nb = edges.size - 1
    counts = np.bincount(b[inside], minlength=nb)
    matches = np.bincount(b[inside], weights=agree[inside].astype(float), minlength=nb).astype(int)
    return ConditionalBins(edges, counts, matches, magnitude, int(keep.sum()), int((~inside).sum()))


def change_blindness(conditioning: ReturnSeries, response: ReturnSeries,
                     edges: Sequence[float] = DEFAULT_EDGES, lag: Lag | str = Lag.SAME,
                     magnitude: bool = True) -> ConditionalBins:
    """Probability that the response has the conditioning move's sign, per bin."""
    cond, resp = align(conditioning, response, lag)
    if cond.size == 0:
        raise DataError("conditioning and response series share no aligned dates")
    return sign_agreement(cond, resp, edges, magnitude)
