"""Market indices as coupled integrate-and-fire oscillators.

``cum[i, j]`` is the stress that index ``j``'s returns have built up on
index ``i``. Once its magnitude exceeds the threshold ``R_C`` it discharges:
the coupled share ``alpha_ij * beta_ij * cum[i, j]`` is priced into ``R_i``
and the accumulator restarts from ``R_j``'s latest return.

Within a step the order is fixed: firing sets are read from the previous
stress, all returns are computed, then all stress entries are updated at
once.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class IndexMeta:
    id: str
    capitalization: float
    timezone: float

    def __post_init__(self):
        if not self.capitalization > 0:
            raise InvalidParameterError(f"{self.id}: capitalization must be > 0")


@dataclass(frozen=True)
class IafParams:
    threshold: float = 0.05
    gamma: float = 1.0
    tau: float = 3.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not (self.threshold > 0 and self.gamma > 0 and self.tau > 0):
            raise InvalidParameterError("threshold, gamma and tau must be > 0")
        if not self.noise_sigma >= 0:
            raise InvalidParameterError("noise_sigma must be >= 0")


def coupling_alpha(K_i: float, K_j: float, gamma: float) -> float:
    """Capitalization coupling ``1 - exp(-K_j / (K_i * gamma))``."""
    if not (K_i > 0 and K_j > 0 and gamma > 0):
        raise InvalidParameterError("capitalizations and gamma must be > 0")
    return -math.expm1(-K_j / (K_i * gamma))


def coupling_beta(Z_i: float, Z_j: float, tau: float) -> float:
    """Time-zone coupling ``exp(-|Z_i - Z_j| / tau)``."""
    if not tau > 0:
        raise InvalidParameterError("tau must be > 0")
    return math.exp(-abs(Z_i - Z_j) / tau)


def coupling_matrix(metas: Sequence[IndexMeta], params: IafParams) -> np.ndarray:
    """Matrix of ``alpha_ij * beta_ij`` with a zero diagonal (row = receiver)."""
    K = np.array([m.capitalization for m in metas], dtype=float)
    Z = np.array([m.timezone for m in metas], dtype=float)
    alpha = -np.expm1(-K[None, :] / (K[:, None] * params.gamma))
    beta = np.exp(-np.abs(Z[:, None] - Z[None, :]) / params.tau)
    w = alpha * beta
    np.fill_diagonal(w, 0.0)
    return w


@dataclass
class IafState:
    metas: list[IndexMeta]
    params: IafParams
    coupling: np.ndarray
    stress: np.ndarray
    t: int = 0
    last_returns: np.ndarray = None

    def __post_init__(self):
        n = len(self.metas)
        if self.coupling.shape != (n, n) or self.stress.shape != (n, n):
            raise InvalidParameterError("coupling and stress must be N x N for N indices")
        if self.last_returns is None:
            self.last_returns = np.zeros(n)

    @classmethod
    def build(cls, metas: Sequence[IndexMeta], params: IafParams, coupling=None, stress=None) -> "IafState":
        metas = list(metas)
        n = len(metas)
        if len({m.id for m in metas}) != n:
            raise InvalidParameterError("index ids must be unique")
        w = coupling_matrix(metas, params) if coupling is None else np.array(coupling, dtype=float)
        s = np.zeros((n, n)) if stress is None else np.array(stress, dtype=float)
        return cls(metas, params, w, s)

    @property
    def n(self) -> int:
        return len(self.metas)

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.metas]

    def index_of(self, key) -> int:
        if isinstance(key, (int, np.integer)) and 0 <= key < self.n:
            return int(key)
        ids = self.ids
        if key in ids:
            return ids.index(key)
        raise InvalidParameterError(f"unknown index {key!r}")

    def copy(self) -> "IafState":
        return IafState(list(self.metas), self.params, self.coupling.copy(), self.stress.copy(),
                        self.t, self.last_returns.copy())


def _firing(state: IafState) -> np.ndarray:
    fire = np.abs(state.stress) > state.params.threshold
    np.fill_diagonal(fire, False)
    return fire


def iaf_step(state: IafState, injected: Mapping[int, float] | np.ndarray | None = None,
             rng: np.random.Generator | None = None) -> np.ndarray:
    """Advance one step in place and return R(t).

    ``injected`` maps index position to a return that replaces the computed
    one; a full-length array with NaN for "no override" also works.
    """
    n = state.n
    fire = _firing(state)
    transmitted = np.where(fire, state.coupling * state.stress, 0.0).sum(axis=1)
    returns = transmitted / np.maximum(fire.sum(axis=1), 1)
    if state.params.noise_sigma > 0:
        if rng is None:
            raise InvalidParameterError("noise_sigma > 0 needs an rng")
        returns = returns + rng.normal(0.0, state.params.noise_sigma, size=n)

    if injected is not None:
        if isinstance(injected, Mapping):
            for k, v in injected.items():
                if not 0 <= k < n:
                    raise InvalidParameterError(f"override index {k} out of range for {n} indices")
                returns[k] = v
        else:
            inj = np.asarray(injected, dtype=float)
            if inj.shape != (n,):
                raise InvalidParameterError(f"override vector has shape {inj.shape}, expected ({n},)")
            mask = ~np.isnan(inj)
            returns[mask] = inj[mask]

    state.stress = np.where(fire, 0.0, state.stress) + returns[None, :]
    np.fill_diagonal(state.stress, 0.0)
    state.last_returns = returns
    state.t += 1
    return returns


@dataclass(frozen=True)
class CascadeEvent:
    t: int
    source: int
    target: int
    stress: float
    contribution: float


@dataclass
class CascadeTrace:
    origin: tuple[int, float]
    events: list[CascadeEvent] = field(default_factory=list)
    steps: int = 0

    def csv(self, ids: Sequence[str]) -> tuple[list[str], list[list]]:
        return ["t", "source", "target", "stress"], [
            [e.t, ids[e.source], ids[e.target], e.stress] for e in self.events
        ]


def trace_quake(state: IafState, origin, shock: float, horizon: int = 100,
                rng: np.random.Generator | None = None) -> CascadeTrace:
    """Inject ``shock`` as the origin's return at step 0 and follow the firings.

    Works on a copy of ``state``. Only firings along a nonzero coupling are
    recorded as events; the run stops after the first step without any
    threshold crossing, or at ``horizon``.
    """
    o = state.index_of(origin)
    if state.params.noise_sigma > 0 and rng is None:
        raise InvalidParameterError("tracing with noise needs a seeded rng")
    st = state.copy()
    trace = CascadeTrace(origin=(o, float(shock)))
    for t in range(horizon + 1):
        fire = _firing(st)
        live = fire & (st.coupling != 0)
        for i, j in zip(*np.nonzero(live)):
            s = float(st.stress[i, j])
            trace.events.append(CascadeEvent(t, int(j), int(i), s, float(st.coupling[i, j] * s)))
        iaf_step(st, {o: shock} if t == 0 else None, rng)
        trace.steps = t + 1
        if t > 0 and not fire.any():
            break
    trace.events.sort(key=lambda e: (e.t, e.target, e.source))
    return trace


def run_iaf(state: IafState, T: int, seed: int | None = None,
            injections: Mapping[int, Mapping[int, float]] | None = None) -> tuple[np.ndarray, IafState]:
    """Run T steps on a copy of ``state``; returns (T x N returns, final state).

    ``injections`` maps step -> {index position: return}.
    """
    if T < 1:
        raise InvalidParameterError("T must be >= 1")
    rng = np.random.default_rng(seed)
    st = state.copy()
    out = np.empty((T, st.n))
    injections = injections or {}
    for t in range(T):
        out[t] = iaf_step(st, injections.get(t), rng)
    return out, st


def returns_csv(returns: np.ndarray, ids: Sequence[str]) -> tuple[list[str], list[list]]:
    return ["t", *ids], [[t, *map(float, row)] for t, row in enumerate(returns)]


def load_network(path) -> tuple[IafState, dict]:
    """Parse an INI network file.

    ::

        [params]
        threshold = 0.05
        gamma = 1.0
        tau = 3.0
        noise_sigma = 0.0

        [index:N225]
        capitalization = 4.5
        timezone = 9

        [link:N225->HSI]     ; optional explicit alpha*beta, source->target
        weight = 1.0

    With any ``link`` section the coupling matrix is explicit and unlisted
    pairs are zero; otherwise it comes from capitalizations and time zones.
    Extra keys in ``[params]`` are returned as a dict for the caller.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    path = Path(path)
    with path.open() as fh:
        cp.read_file(fh)
    p = cp["params"] if cp.has_section("params") else {}
    known = {"threshold", "gamma", "tau", "noise_sigma"}
    params = IafParams(**{k: float(v) for k, v in p.items() if k in known})
    extra = {k: v for k, v in p.items() if k not in known}

    metas = [
        IndexMeta(name.split(":", 1)[1].strip(), float(sec["capitalization"]), float(sec.get("timezone", 0)))
        for name, sec in cp.items() if name.startswith("index:")
    ]
    if not metas:
        raise InvalidParameterError(f"{path}: no [index:...] sections")
    state = IafState.build(metas, params)

    links = [(name, sec) for name, sec in cp.items() if name.startswith("link:")]
    if links:
        w = np.zeros((state.n, state.n))
        for name, sec in links:
            src, _, dst = name.split(":", 1)[1].partition("->")
            w[state.index_of(dst.strip()), state.index_of(src.strip())] = float(sec["weight"])
        np.fill_diagonal(w, 0.0)
        state.coupling = w
    return state, extra
