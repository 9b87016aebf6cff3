"""Command-line driver: one subcommand per simulator or analysis.

Every run writes plot-ready CSVs and a ``manifest.json`` into ``--out``.
Exit status is 0 on success, 2 for usage or configuration problems and 1
for failures while running or writing output.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import RNG_ALGORITHM, __version__
from .decoupling import scan_predictive_days
from .errors import DataError, InvalidParameterError
from .game_engine import GameConfig, run_game, step_rows
from .iaf_network import IafParams, IafState, IndexMeta, load_network, returns_csv, run_iaf, trace_quake
from .market_data import DEFAULT_EDGES, change_blindness, compute_returns, load_quotes
from .opinion_dynamics import (
    SentimentParams,
    SentimentState,
    baseline_matrix,
    day_rows,
    flag_tipping,
    run_sentiment,
    simulate_day_agents,
    update_bullishness,
)
from .output import RunManifest, config_hash, emit_csv

log = logging.getLogger("syncontagion")

COMMANDS = ("mg-sim", "dollar-sim", "decoupling-scan", "iaf-sim", "quake-trace", "opinion-sim", "change-blindness")

DEFAULT_WORLD = [
    IndexMeta("SPX", 25.0, -5),
    IndexMeta("FTSE", 3.0, 0),
    IndexMeta("DAX", 2.0, 1),
    IndexMeta("CAC", 2.5, 1),
    IndexMeta("N225", 6.0, 9),
    IndexMeta("HSI", 4.0, 8),
]
DEFAULT_WORLD_PARAMS = IafParams(threshold=0.03, gamma=1.0, tau=3.0, noise_sigma=0.01)


class ConfigError(Exception):
    pass


def _read_ini(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    if path is None:
        return cp
    p = Path(path)
    try:
        with p.open() as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    return cp


def _section(cp, name) -> dict:
    return dict(cp[name]) if cp.has_section(name) else {}


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _run_settings(args, cp, default_steps: int) -> tuple[int, int]:
    run = _section(cp, "run")
    seed = args.seed if args.seed is not None else int(run.get("seed", 0))
    steps = args.steps if args.steps is not None else int(run.get("steps", default_steps))
    if seed < 0 or seed >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    return seed, steps


def _game_config(args, cp, seed: int, variant: str) -> GameConfig:
    g = _section(cp, "game")
    return GameConfig(
        n_agents=args.n_agents or int(g.get("n_agents", 101)),
        memory=args.memory or int(g.get("memory", 3)),
        strategies_per_agent=args.strategies or int(g.get("strategies_per_agent", 2)),
        variant=variant or g.get("variant", "minority"),
        seed=seed,
        payoff=g.get("payoff", "linear"),
        tie_break=g.get("tie_break", "lowest"),
    )


def _game_dict(cfg: GameConfig) -> dict:
    return {
        "n_agents": cfg.n_agents, "memory": cfg.memory, "strategies_per_agent": cfg.strategies_per_agent,
        "variant": cfg.variant.value, "payoff": cfg.payoff.value, "tie_break": cfg.tie_break.value,
    }


def _network(args, cp):
    if args.config and cp.sections() and any(s.startswith("index:") for s in cp.sections()):
        state, _ = load_network(args.config)
    else:
        state = IafState.build(DEFAULT_WORLD, DEFAULT_WORLD_PARAMS)
    if args.noise_sigma is not None or args.threshold is not None:
        p = state.params
        state.params = IafParams(
            threshold=p.threshold if args.threshold is None else args.threshold,
            gamma=p.gamma, tau=p.tau,
            noise_sigma=p.noise_sigma if args.noise_sigma is None else args.noise_sigma,
        )
    return state


def _network_dict(state: IafState) -> dict:
    return {
        "indices": [[m.id, m.capitalization, m.timezone] for m in state.metas],
        "params": [state.params.threshold, state.params.gamma, state.params.tau, state.params.noise_sigma],
        "coupling": [[float(x) for x in row] for row in state.coupling],
    }


def _weights_from_text(text: str, k_max: int | None) -> tuple[float, ...]:
    """Parse ``"2:1 3:1 4:1"`` into normalized agent-level weights by k."""
    pairs = {}
    for tok in text.replace(",", " ").split():
        k, _, w = tok.partition(":")
        pairs[int(k)] = float(w)
    if not pairs or any(k < 1 or w < 0 for k, w in pairs.items()):
        raise ConfigError(f"bad group_weights {text!r}")
    top = max(pairs) if k_max is None else k_max
    total = sum(pairs.values())
    if total <= 0 or max(pairs) > top:
        raise ConfigError(f"bad group_weights {text!r}")
    return tuple(pairs.get(k, 0.0) / total for k in range(1, top + 1))


# --- subcommands -------------------------------------------------------------
# Each returns (resolved config dict, {filename: (columns, rows, extra comments)}, summary).


def _cmd_game(args, cp, variant):
    seed, steps = _run_settings(args, cp, 1000)
    cfg = _game_config(args, cp, seed, variant)
    records = run_game(cfg, steps)
    cols, rows = step_rows(records, args.agent_actions)
    conf = {**_game_dict(cfg), "steps": steps, "agent_actions": args.agent_actions}
    return conf, {"steps.csv": (cols, rows, [])}, {"records": len(rows)}


def _cmd_scan(args, cp):
    seed, steps = _run_settings(args, cp, 1000)
    cfg = _game_config(args, cp, seed, None)
    res = scan_predictive_days(cfg, steps)
    cols, rows = res.csv()
    summary = {
        "predictive_days": len(res.days),
        "run_starts": len(res.run_starts),
        "flagged_days": len(res.flagged),
        "agreement_rate": res.agreement_rate,
    }
    return {**_game_dict(cfg), "steps": steps}, {"scan.csv": (cols, rows, [])}, summary


def _cmd_iaf(args, cp):
    seed, steps = _run_settings(args, cp, 1000)
    state = _network(args, cp)
    injections: dict[int, dict[int, float]] = {}
    for name in cp.sections():
        if name.startswith("inject:"):
            t = int(name.split(":", 1)[1])
            injections[t] = {state.index_of(k): float(v) for k, v in cp[name].items()}
    returns, final = run_iaf(state, steps, seed, injections)
    cols, rows = returns_csv(returns, state.ids)
    conf = {**_network_dict(state), "steps": steps,
            "injections": {str(t): {str(k): v for k, v in d.items()} for t, d in sorted(injections.items())}}
    return conf, {"returns.csv": (cols, rows, [])}, {"max_abs_stress": float(np.abs(final.stress).max())}


def _cmd_quake(args, cp):
    seed, steps = _run_settings(args, cp, 50)
    horizon = args.horizon if args.horizon is not None else steps
    state = _network(args, cp)
    q = _section(cp, "quake")
    origin = args.origin or q.get("origin") or state.ids[0]
    shock = args.shock if args.shock is not None else float(q.get("shock", -0.07))
    rng = np.random.default_rng(seed) if state.params.noise_sigma > 0 else None
    trace = trace_quake(state, origin, shock, horizon, rng)
    cols, rows = trace.csv(state.ids)
    conf = {**_network_dict(state), "origin": state.ids[state.index_of(origin)], "shock": shock, "horizon": horizon}
    comments = [f"origin={conf['origin']} shock={shock!r}"]
    return conf, {"cascade.csv": (cols, rows, comments)}, {"events": len(rows), "steps": trace.steps}


def _cmd_opinion(args, cp):
    seed, steps = _run_settings(args, cp, 500)
    o = _section(cp, "opinion")
    try:
        k_max = int(o["k_max"]) if "k_max" in o else None
        weights = _weights_from_text(o.get("group_weights", "2:1 3:1 4:1"), k_max)
        params = SentimentParams(
            group_weights=weights,
            mu=float(o.get("mu", 1.0)),
            sigma0=float(o.get("sigma0", 0.01)),
            beta=float(o.get("beta", 1.0)),
            alpha=float(o.get("alpha", 0.05)),
            clamp_eps=float(o.get("clamp_eps", 1e-3)),
            pin_unanimity=_bool(o.get("pin_unanimity", True)),
            log_change=_bool(o.get("log_change", False)),
        )
        kind = o.get("baseline", "majority")
        tie = float(o.get("tie_prob", 0.5))
        B0 = float(o.get("B0", 0.5))
        upper, lower = float(o.get("upper", 0.9)), float(o.get("lower", 0.1))
        noise = _bool(o.get("noise", True))
    except ValueError as exc:
        raise ConfigError(f"bad [opinion] value: {exc}") from exc
    agents = args.agents if args.agents is not None else int(o.get("agents", 0))

    base = baseline_matrix(kind, params.k_max, tie)
    state = SentimentState.initial(B0, base, params)
    records = flag_tipping(run_sentiment(state, params, steps, seed, noise), upper, lower, B0=state.B)
    cols, rows = day_rows(records)
    outputs = {"days.csv": (cols, rows, [])}
    conf = {
        "baseline": kind, "tie_prob": tie, "group_weights": list(weights), "mu": params.mu,
        "sigma0": params.sigma0, "beta": params.beta, "alpha": params.alpha, "clamp_eps": params.clamp_eps,
        "pin_unanimity": params.pin_unanimity, "log_change": params.log_change, "B0": B0,
        "upper": upper, "lower": lower, "noise": noise, "steps": steps, "agents": agents,
    }
    summary = {"upper_tips": sum(r.tipping_flag == 1 for r in records),
               "lower_tips": sum(r.tipping_flag == -1 for r in records)}

    if agents > 0:
        # Finite-population meetings under the fixed baseline, next to the mean-field map.
        rng = np.random.default_rng([seed, 1])
        pop = np.zeros(agents, dtype=bool)
        pop[: int(round(B0 * agents))] = True
        B_mf = B0
        mrows = []
        for t in range(1, steps + 1):
            pop = simulate_day_agents(pop, base, weights, rng)
            B_mf = update_bullishness(B_mf, base, weights)
            mrows.append([t, float(pop.mean()), B_mf])
        outputs["meetings.csv"] = (["t", "B_agents", "B_meanfield"], mrows, [])
    return conf, outputs, summary


def _cmd_change_blindness(args, cp):
    seed, _ = _run_settings(args, cp, 1)
    a = _section(cp, "analysis")
    base_dir = Path(args.config).parent if args.config else Path.cwd()
    quotes = args.quotes or a.get("quotes")
    if not quotes:
        raise ConfigError("change-blindness needs --quotes or [analysis] quotes = PATH")
    qpath = Path(quotes) if args.quotes or Path(quotes).is_absolute() else base_dir / quotes
    cond_id = args.conditioning or a.get("conditioning")
    resp_id = args.response or a.get("response")
    if not cond_id or not resp_id:
        raise ConfigError("change-blindness needs conditioning and response index ids")
    cond_kind = a.get("conditioning_kind", "open-close")
    resp_kind = a.get("response_kind", "close-open")
    lag = args.lag or a.get("lag", "next")
    magnitude = _bool(a.get("magnitude", True))
    log_returns = _bool(a.get("log_returns", False))
    edges = [float(x) for x in a["edges"].split()] if "edges" in a else list(DEFAULT_EDGES)

    if not qpath.is_file():
        raise ConfigError(f"cannot read quotes {qpath}")
    loaded = load_quotes(qpath)
    for d in loaded.diagnostics:
        log.warning(d)
    cseries = compute_returns(loaded.rows, cond_kind, log_returns)
    rseries = compute_returns(loaded.rows, resp_kind, log_returns)
    for idx, s in ((cond_id, cseries), (resp_id, rseries)):
        if idx not in s:
            raise ConfigError(f"index {idx!r} not in {qpath}")
    bins = change_blindness(cseries[cond_id], rseries[resp_id], edges, lag, magnitude)
    cols, rows = bins.csv()
    conf = {
        "quotes": qpath.name, "conditioning": cond_id, "response": resp_id, "conditioning_kind": cond_kind,
        "response_kind": resp_kind, "lag": lag, "magnitude": magnitude, "log_returns": log_returns,
        "edges": edges, "rejected_rows": len(loaded.diagnostics),
    }
    comments = [
        f"conditioning={cond_id}:{cond_kind} response={resp_id}:{resp_kind} lag={lag} "
        f"magnitude={magnitude} log_returns={log_returns}",
        f"edges={' '.join(repr(e) for e in edges)}",
    ]
    return conf, {"bins.csv": (cols, rows, comments)}, {"aligned_pairs": bins.n_aligned}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="syncontagion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def common(p):
        p.add_argument("--config", help="INI scenario file")
        p.add_argument("--seed", type=int, help="RNG seed (overrides [run] seed)")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--steps", type=int, help="number of steps T (overrides [run] steps)")
        return p

    for name, helptext in (
        ("mg-sim", "Minority Game run: t, A, move per step"),
        ("dollar-sim", "$-Game run: t, A, move per step"),
        ("decoupling-scan", "predictive-day scan with decoupled/coupled split"),
    ):
        p = common(sub.add_parser(name, help=helptext))
        p.add_argument("--n-agents", type=int)
        p.add_argument("--memory", type=int)
        p.add_argument("--strategies", type=int)
        if name != "decoupling-scan":
            p.add_argument("--agent-actions", action="store_true", help="add one column per agent")

    for name, helptext in (("iaf-sim", "integrate-and-fire index network returns"),
                           ("quake-trace", "follow one shock through the network")):
        p = common(sub.add_parser(name, help=helptext))
        p.add_argument("--noise-sigma", type=float)
        p.add_argument("--threshold", type=float)
        if name == "quake-trace":
            p.add_argument("--shock", type=float, help="origin return at step 0 (default -0.07)")
            p.add_argument("--origin", help="index id (default: first index)")
            p.add_argument("--horizon", type=int)

    p = common(sub.add_parser("opinion-sim", help="bullishness / return feedback loop"))
    p.add_argument("--agents", type=int, help="also run a finite population of this size")

    p = common(sub.add_parser("change-blindness", help="sign agreement binned by prior-move size"))
    p.add_argument("--quotes")
    p.add_argument("--conditioning")
    p.add_argument("--response")
    p.add_argument("--lag", choices=("same", "next"))
    return parser


HANDLERS = {
    "mg-sim": lambda a, c: _cmd_game(a, c, "minority"),
    "dollar-sim": lambda a, c: _cmd_game(a, c, "dollar"),
    "decoupling-scan": _cmd_scan,
    "iaf-sim": _cmd_iaf,
    "quake-trace": _cmd_quake,
    "opinion-sim": _cmd_opinion,
    "change-blindness": _cmd_change_blindness,
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_experiment(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.agent_actions = getattr(args, "agent_actions", False)
    for attr in ("n_agents", "memory", "strategies", "noise_sigma", "threshold", "shock", "origin",
                 "horizon", "agents", "quotes", "conditioning", "response", "lag"):
        if not hasattr(args, attr):
            setattr(args, attr, None)

    started = _now()
    try:
        cp = _read_ini(args.config)
        conf, outputs, summary = HANDLERS[args.command](args, cp)
        seed, _ = _run_settings(args, cp, 1)
    except (ConfigError, InvalidParameterError, DataError, configparser.Error, KeyError, ValueError) as exc:
        print(f"syncontagion {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - driver boundary
        print(f"syncontagion {args.command}: runtime error: {exc}", file=sys.stderr)
        return 1

    conf = {"command": args.command, "seed": seed, **conf}
    digest = config_hash(conf)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        header = [f"syncontagion {__version__} {args.command}", f"seed={seed} config_hash={digest}",
                  f"rng={RNG_ALGORITHM}"]
        written = []
        for fname, (cols, rows, extra) in outputs.items():
            emit_csv(cols, rows, out / fname, header + list(extra))
            written.append(fname)
        manifest = RunManifest(args.command, digest, seed, started, _now(), written,
                               {k: v for k, v in summary.items() if not (isinstance(v, float) and math.isnan(v))})
        manifest.write(out / "manifest.json")
    except OSError as exc:
        print(f"syncontagion {args.command}: cannot write output in {out}: {exc.strerror or exc}", file=sys.stderr)
        return 1
    print(f"{args.command}: wrote {', '.join(written)} to {out}")
    return 0


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    sys.exit(run_experiment())


if __name__ == "__main__":
    main()
