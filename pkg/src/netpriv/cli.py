"""Command-line front end.

Numeric flags accept either a single value or an inclusive range written
``start:stop:step``.  Every CSV starts with a ``#`` line holding the JSON
manifest needed to reproduce it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, analytic, harness
from .analytic import AnalyticInputs, DomainError
from .model import ConfigError, Scenario, ScenarioConfig

SIM_COLUMNS = (
    "scenario", "n_users", "n_exits", "rho", "rho_e", "p_f", "cap", "trials", "seed",
    "h_max", "h_analytic", "h_paper_style", "h_empirical_mean", "h_empirical_ci95",
)
ANALYTIC_COLUMNS = ("formula", "n_users", "rho", "rho_e", "p_f", "cap", "k", "value")
LONGTERM_COLUMNS = ("seed", "session_index", "intersection_size", "isolated")
FIGURE_COLUMNS = ("figure", "scenario", "n_users", "rho", "rho_e", "p_f", "cap", "h_max", "h_analytic")

FORMULAS = (
    "max-entropy", "mean-cc-length", "cc-break-pmf", "expected-cc-break",
    "closed-form", "p2priv-p2p", "p2priv-cs", "netpriv",
)
RANGE_TOL = 1e-9
# config-file keys may use the flag spelling
KEY_ALIASES = {"n": "n_users", "pf": "p_f"}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# value parsing

def parse_range(text: str, kind=float) -> list:
    """``a`` or ``a:b:step`` (both ends inclusive)."""
    parts = str(text).split(":")
    try:
        if len(parts) == 1:
            return [kind(parts[0])]
        if len(parts) != 3:
            raise ValueError
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"bad value or range {text!r}") from None
    if step <= 0 or stop < start:
        raise UsageError(f"bad range {text!r}: need start <= stop and step > 0")
    count = math.floor((stop - start) / step + RANGE_TOL) + 1
    return [kind(round(start + i * step, 12)) for i in range(count)]


def parse_cap(text):
    if text is None or str(text).lower() == "auto":
        return None
    try:
        cap = int(text)
    except ValueError:
        raise UsageError(f"cap must be a positive integer or 'auto', got {text!r}") from None
    if cap < 1:
        raise UsageError("cap must be positive")
    return cap


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".6g")
    return str(value)


def read_config_file(path: str) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        out[KEY_ALIASES.get(key, key)] = value.strip()
    return out


# ---------------------------------------------------------------------------
# output

def manifest(subcommand: str, settings: dict, outputs: list) -> dict:
    return {
        "tool": "netpriv",
        "version": __version__,
        "subcommand": subcommand,
        "settings": settings,
        "outputs": outputs,
        # keep last: the only field allowed to differ between reruns
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def render_csv(header: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=False) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def emit(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# argument plumbing

def _add_scenario_flags(p, scenario=True):
    if scenario:
        p.add_argument("--scenario", choices=[s.value for s in Scenario])
    p.add_argument("--n", dest="n_users", help="user nodes (value or range)")
    p.add_argument("--n-exits", dest="n_exits", help="exit nodes")
    p.add_argument("--rho", help="colluding fraction of users (value or range)")
    p.add_argument("--rho-e", dest="rho_e", help="colluding fraction of exits (value or range)")
    p.add_argument("--pf", dest="p_f", help="forwarding probability (value or range)")
    p.add_argument("--cap", help="break cap: integer or 'auto'")
    p.add_argument("--config", help="flat key=value file; flags win over it")


DEFAULTS = {
    "scenario": "p2priv-cs",
    "n_users": "1000",
    "n_exits": "1",
    "rho": "0.1",
    "rho_e": "0.0",
    "p_f": str(2 / 3),
    "cap": "auto",
    "trials": str(harness.DEFAULT_TRIALS),
    "jitter_max": None,
    "cascade_len": None,
    "workers": "1",
    "sessions": "50",
    "seeds": "200",
}


def resolve(args, keys) -> dict:
    """Flags over config file over built-in defaults."""
    from_file = read_config_file(args.config) if getattr(args, "config", None) else {}
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        if v is None:
            v = from_file.get(k)
        if v is None:
            v = DEFAULTS.get(k)
        out[k] = v
    if "seed" in keys:
        out["seed"] = _resolve_seed(getattr(args, "seed", None), from_file.get("seed"))
    return out


def _resolve_seed(flag, from_file) -> int:
    raw = flag if flag is not None else from_file
    if raw is None:
        raw = os.environ.get("NETPRIV_SEED")
    if raw is None:
        print("netpriv: warning: no --seed given; using seed 0", file=sys.stderr)
        raw = 0
    try:
        seed = int(raw)
    except ValueError:
        raise UsageError(f"seed must be an integer, got {raw!r}") from None
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    return seed


def _int_flag(value, name, minimum=1) -> int:
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise UsageError(f"{name} must be an integer, got {value!r}") from None
    if v < minimum:
        raise UsageError(f"{name} must be at least {minimum}")
    return v


def _opt_int(value, name):
    return None if value in (None, "", "auto", "none") else _int_flag(value, name)


def _grid_axes(settings) -> dict:
    return {
        "n_users": parse_range(settings["n_users"], int),
        "rho": parse_range(settings["rho"]),
        "rho_e": parse_range(settings["rho_e"]),
        "p_f": parse_range(settings["p_f"]),
    }


def _base_config(settings, seed) -> ScenarioConfig:
    axes = _grid_axes(settings)
    return ScenarioConfig(
        n_users=axes["n_users"][0],
        n_exits=_int_flag(settings["n_exits"], "--n-exits"),
        rho=axes["rho"][0],
        rho_e=axes["rho_e"][0],
        p_f=axes["p_f"][0],
        scenario=Scenario(settings["scenario"]),
        break_cap=parse_cap(settings["cap"]),
        jitter_max=_opt_int(settings.get("jitter_max"), "--jitter-max"),
        cascade_len=_opt_int(settings.get("cascade_len"), "--cascade-len"),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# subcommands

def cmd_analytic(args) -> int:
    s = resolve(args, ["n_users", "n_exits", "rho", "rho_e", "p_f", "cap"])
    formula = args.formula
    if formula not in FORMULAS:
        raise UsageError(f"unknown formula {formula!r}; choose from {', '.join(FORMULAS)}")
    ks = parse_range(args.k, int) if args.k is not None else [None]
    cap_flag = parse_cap(s["cap"])
    rows = []
    axes = _grid_axes(s)
    for n in axes["n_users"]:
        for rho in axes["rho"]:
            for rho_e in axes["rho_e"]:
                for p_f in axes["p_f"]:
                    for k in ks:
                        cap = cap_flag if cap_flag is not None else analytic.auto_cap(n, rho)
                        value = _evaluate(formula, n, rho, rho_e, p_f, cap, k)
                        rows.append(dict(formula=formula, n_users=n, rho=rho, rho_e=rho_e,
                                         p_f=p_f, cap=cap, k=k, value=value))
    settings = dict(s, formula=formula, k=args.k)
    emit(render_csv(manifest("analytic", settings, [args.out or "-"]), ANALYTIC_COLUMNS, rows), args.out)
    return 0


def _evaluate(formula, n, rho, rho_e, p_f, cap, k):
    _check_fraction(rho, "--rho")
    _check_fraction(rho_e, "--rho-e")
    if not 0.0 <= p_f < 1.0:
        raise UsageError("--pf must lie in [0, 1)")
    if formula == "max-entropy":
        return analytic.max_entropy(n, rho)
    if formula == "mean-cc-length":
        return analytic.mean_cc_length(p_f)
    if formula == "cc-break-pmf":
        if k is None:
            raise UsageError("cc-break-pmf needs --k")
        return analytic.cc_break_pmf(k, rho, p_f)
    if formula == "expected-cc-break":
        return analytic.expected_cc_break(rho, p_f, cap)
    if formula == "closed-form":
        return analytic.expected_cc_break_closed_form(rho, p_f, analytic.mean_cc_length(p_f))
    inputs = AnalyticInputs(n, rho, rho_e, p_f, cap)
    scenario = {"p2priv-p2p": Scenario.P2PRIV_P2P, "p2priv-cs": Scenario.P2PRIV_CS,
                "netpriv": Scenario.NETPRIV_CS}[formula]
    return analytic.entropy_for(scenario, inputs)


def _check_fraction(x, name):
    if not 0.0 <= x <= 1.0:
        raise UsageError(f"{name} must lie in [0, 1], got {x}")


def cmd_simulate(args) -> int:
    keys = ["scenario", "n_users", "n_exits", "rho", "rho_e", "p_f", "cap", "trials",
            "jitter_max", "cascade_len", "workers", "seed"]
    s = resolve(args, keys)
    trials = _int_flag(s["trials"], "--trials")
    workers = _int_flag(s["workers"], "--workers")
    try:
        base = _base_config(s, s["seed"])
        configs = harness.grid(base, _grid_axes(s))
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    reports = [harness.run_monte_carlo(c, trials, workers) for c in configs]
    settings = dict(s, resolved=[_config_dict(c) for c in configs])
    outputs = [args.out or "-"] + ([args.report] if args.report else [])
    header = manifest("simulate", settings, outputs)
    emit(render_csv(header, SIM_COLUMNS, [r.as_dict() for r in reports]), args.out)
    if args.report:
        doc = {"manifest": header, "reports": [r.as_dict() for r in reports]}
        emit(json.dumps(doc, indent=2) + "\n", args.report)
    return 0


def cmd_longterm(args) -> int:
    keys = ["scenario", "n_users", "n_exits", "rho", "rho_e", "p_f", "cap", "sessions",
            "seeds", "jitter_max", "cascade_len", "seed"]
    s = resolve(args, keys)
    sessions = _int_flag(s["sessions"], "--sessions")
    n_seeds = _int_flag(s["seeds"], "--seeds")
    try:
        config = _base_config(s, s["seed"])
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    seeds = [s["seed"] + i for i in range(n_seeds)]
    runs = harness.run_longterm(config, sessions, seeds)
    rows = []
    for run in runs:
        for i, size in enumerate(run.trajectory, 1):
            rows.append(dict(seed=run.seed, session_index=i, intersection_size=size,
                             isolated=run.isolation_index is not None and i >= run.isolation_index))
    settings = dict(s, resolved=_config_dict(config))
    emit(render_csv(manifest("longterm", settings, [args.out or "-"]), LONGTERM_COLUMNS, rows), args.out)
    return 0


def cmd_reproduce(args) -> int:
    fid = args.figure_id
    if fid not in harness.FIGURES:
        raise UsageError(f"unknown figure {fid!r}; valid ids: {', '.join(harness.FIGURES)}")
    preset = harness.FIGURES[fid]
    seed = _resolve_seed(args.seed, None)
    trials = _int_flag(args.trials, "--trials")
    out_dir = Path(args.out_dir)
    base = replace(preset.base, seed=seed)

    analytic_path = out_dir / f"{fid}_analytic.csv"
    outputs = [str(analytic_path)]
    overlay = preset.overlay and not args.no_overlay
    if overlay:
        overlay_path = out_dir / f"{fid}_montecarlo.csv"
        outputs.append(str(overlay_path))
    settings = {"figure": fid, "title": preset.title, "base": _config_dict(base),
                "axes": {k: list(v) for k, v in preset.axes.items()},
                "trials": trials if overlay else None}
    header = manifest("reproduce", settings, outputs)

    points = harness.analytic_sweep(base, preset.axes)
    rows = [dict(asdict(p), figure=fid) for p in points]
    emit(render_csv(header, FIGURE_COLUMNS, rows), analytic_path)
    if overlay:
        reports = harness.sweep(base, preset.axes, trials)
        emit(render_csv(header, SIM_COLUMNS, [r.as_dict() for r in reports]), overlay_path)
    for path in outputs:
        print(path)
    return 0


def _config_dict(c: ScenarioConfig) -> dict:
    d = asdict(c)
    d["scenario"] = c.scenario.value
    d["cap"] = c.cap
    return d


def build_parser() -> Parser:
    p = Parser(prog="netpriv", description=__doc__,
               formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"netpriv {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=Parser)

    a = sub.add_parser("analytic", help="evaluate closed-form quantities over a grid")
    a.add_argument("--formula", required=True, help=f"one of: {', '.join(FORMULAS)}")
    a.add_argument("--k", help="cascade size for cc-break-pmf (value or range)")
    _add_scenario_flags(a, scenario=False)
    a.add_argument("--out", help="CSV path (default stdout)")
    a.set_defaults(func=cmd_analytic)

    m = sub.add_parser("simulate", help="Monte Carlo entropy estimate")
    _add_scenario_flags(m)
    m.add_argument("--trials")
    m.add_argument("--seed", help="master seed (falls back to $NETPRIV_SEED)")
    m.add_argument("--jitter-max", dest="jitter_max")
    m.add_argument("--cascade-len", dest="cascade_len", help="fixed NetPriv cascade length")
    m.add_argument("--workers", help="worker processes")
    m.add_argument("--out", help="CSV path (default stdout)")
    m.add_argument("--report", help="JSON report path")
    m.set_defaults(func=cmd_simulate)

    lt = sub.add_parser("longterm", help="intersection attack over repeated sessions")
    _add_scenario_flags(lt)
    lt.add_argument("--sessions")
    lt.add_argument("--seeds", help="number of seeds, counted up from --seed")
    lt.add_argument("--seed")
    lt.add_argument("--jitter-max", dest="jitter_max")
    lt.add_argument("--cascade-len", dest="cascade_len")
    lt.add_argument("--out", help="CSV path (default stdout)")
    lt.set_defaults(func=cmd_longterm)

    r = sub.add_parser("reproduce", help="datasets for the published figures")
    r.add_argument("figure_id", help=f"one of: {', '.join(harness.FIGURES)}")
    r.add_argument("--out-dir", default=".")
    r.add_argument("--trials", default="1000", help="Monte Carlo trials per overlay point")
    r.add_argument("--no-overlay", action="store_true")
    r.add_argument("--seed")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: analytic, simulate, longterm, reproduce")
        return args.func(args)
    except UsageError as exc:
        print(f"netpriv: error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, ConfigError) as exc:
        print(f"netpriv: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"netpriv: runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
