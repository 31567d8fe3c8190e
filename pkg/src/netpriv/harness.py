"""Monte Carlo runs, parameter sweeps and figure presets."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Mapping, Optional, Sequence

from . import analytic, streams
from .adversary import (
    entropy_of,
    intersection_attack,
    observe_session,
    posterior_from_observation,
)
from .model import ConfigError, Scenario, ScenarioConfig, build_population
from .sim import CascadeRegistry, execute_session

DEFAULT_TRIALS = 100_000
# Trials are grouped into fixed-size blocks with one RNG stream each, so the
# result does not depend on how many workers process the blocks.
BLOCK_SIZE = 2_000

SWEEP_AXES = ("rho", "rho_e", "p_f", "n_users")


@dataclass(frozen=True)
class EntropyReport:
    scenario: str
    n_users: int
    n_exits: int
    rho: float
    rho_e: float
    p_f: float
    cap: int
    trials: int
    seed: int
    h_max: float
    h_analytic: float
    h_paper_style: float
    h_empirical_mean: float
    h_empirical_ci95: float
    mean_break: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AnalyticPoint:
    scenario: str
    n_users: int
    rho: float
    rho_e: float
    p_f: float
    cap: int
    h_max: float
    h_analytic: float


@dataclass(frozen=True)
class LongtermRun:
    seed: int
    alice: str
    trajectory: tuple
    isolation_index: Optional[int]


def analytic_entropy(config: ScenarioConfig) -> float:
    return analytic.entropy_for(config.scenario, analytic.AnalyticInputs.from_config(config))


def _expected_break(config: ScenarioConfig) -> float:
    # what the adversary assumes about n_break when it cannot count connections
    return max(1.0, analytic.expected_cc_break(config.rho, config.p_f, config.cap))


def _run_block(config: ScenarioConfig, block: int, size: int) -> tuple:
    population = build_population(config)
    view = population.view
    honest = population.honest_users
    guess = _expected_break(config)
    rnd = streams.stream(config.seed, streams.SESSIONS, block)
    s_h = s_h2 = s_b = 0.0
    for t in range(size):
        alice = honest[int(rnd.random() * len(honest))]
        trace = execute_session(
            config, population, alice, rnd, session_id=block * BLOCK_SIZE + t,
            registry=CascadeRegistry(),
        )
        log = observe_session(trace, view, config.scenario)
        h = entropy_of(posterior_from_observation(log, view, population, guess))
        s_h += h
        s_h2 += h * h
        s_b += len(trace.cascade.members)
    return s_h, s_h2, s_b


def _blocks(trials: int) -> list:
    full, tail = divmod(trials, BLOCK_SIZE)
    sizes = [BLOCK_SIZE] * full + ([tail] if tail else [])
    return list(enumerate(sizes))


def run_monte_carlo(config: ScenarioConfig, trials: int = DEFAULT_TRIALS, workers: int = 1) -> EntropyReport:
    """Simulate ``trials`` sessions, each with a fresh honest Alice.

    ``h_empirical_mean`` averages the per-session posterior entropy.
    ``h_paper_style`` plugs the empirical mean broken-cascade size into the
    scenario's closed-form entropy, which is how the analytic curves treat
    the expectation.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    blocks = _blocks(trials)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_block, *zip(*[(config, b, n) for b, n in blocks])))
    else:
        parts = [_run_block(config, b, n) for b, n in blocks]
    # fixed block order keeps the float sums identical across worker counts
    s_h = math.fsum(p[0] for p in parts)
    s_h2 = math.fsum(p[1] for p in parts)
    s_b = math.fsum(p[2] for p in parts)

    mean_h = s_h / trials
    var = max(0.0, s_h2 / trials - mean_h * mean_h)
    if trials > 1:
        var *= trials / (trials - 1)
    ci = 1.96 * math.sqrt(var / trials)
    mean_b = s_b / trials

    inputs = analytic.AnalyticInputs.from_config(config)
    h_analytic = analytic.entropy_for(config.scenario, inputs)
    if config.rho == 0.0:
        paper_style = h_analytic
    else:
        paper_style = analytic.entropy_for(config.scenario, inputs, n_break=max(1.0, mean_b))
    return EntropyReport(
        scenario=config.scenario.value,
        n_users=config.n_users,
        n_exits=config.n_exits,
        rho=config.rho,
        rho_e=config.rho_e,
        p_f=config.p_f,
        cap=config.cap,
        trials=trials,
        seed=config.seed,
        h_max=analytic.max_entropy(config.n_users, config.rho),
        h_analytic=h_analytic,
        h_paper_style=paper_style,
        h_empirical_mean=mean_h,
        h_empirical_ci95=ci,
        mean_break=mean_b,
    )


def grid(base: ScenarioConfig, axes: Mapping[str, Sequence]) -> list:
    """Cartesian product of ``axes`` over ``base``, in axis-declaration order."""
    for name, values in axes.items():
        if name not in SWEEP_AXES:
            raise ConfigError(f"cannot sweep over {name!r}")
        if len(values) == 0:
            raise ConfigError(f"axis {name!r} is empty")
    names = list(axes)
    out = []
    for combo in itertools.product(*(axes[n] for n in names)):
        out.append(replace(base, **dict(zip(names, combo))))
    return out


def sweep(base: ScenarioConfig, axes: Mapping[str, Sequence], trials: int = DEFAULT_TRIALS,
          workers: int = 1) -> list:
    return [run_monte_carlo(c, trials, workers) for c in grid(base, axes)]


def analytic_sweep(base: ScenarioConfig, axes: Mapping[str, Sequence]) -> list:
    rows = []
    for c in grid(base, axes):
        rows.append(AnalyticPoint(
            scenario=c.scenario.value,
            n_users=c.n_users,
            rho=c.rho,
            rho_e=c.rho_e,
            p_f=c.p_f,
            cap=c.cap,
            h_max=analytic.max_entropy(c.n_users, c.rho),
            h_analytic=analytic_entropy(c),
        ))
    return rows


def run_longterm(config: ScenarioConfig, sessions: int, seeds: Sequence[int]) -> list:
    """Repeat sessions from one Alice per seed and intersect candidate sets.

    The NetPriv cascade (and its exit choices) is keyed on Alice, so every
    session of a seed reuses it.
    """
    if sessions < 1:
        raise ConfigError("sessions must be at least 1")
    runs = []
    for seed in seeds:
        cfg = replace(config, seed=seed)
        population = build_population(cfg)
        pick = streams.stream(seed, streams.ALICE)
        alice = population.honest_users[int(pick.random() * len(population.honest_users))]
        registry = CascadeRegistry()
        logs = []
        for i in range(sessions):
            rnd = streams.stream(seed, streams.SESSIONS, i)
            trace = execute_session(cfg, population, alice, rnd, session_id=i, registry=registry)
            logs.append(observe_session(trace, population.view, cfg.scenario))
        sets = intersection_attack(logs, population.view, population)
        sizes = tuple(len(s) for s in sets)
        isolated = next((i + 1 for i, s in enumerate(sets) if s == {alice}), None)
        runs.append(LongtermRun(seed, str(alice), sizes, isolated))
    return runs


def first_connector_rate(config: ScenarioConfig, sessions: int) -> float:
    """Fraction of sessions in which Alice's connection arrives first."""
    population = build_population(config)
    honest = population.honest_users
    hits = 0
    for block, size in _blocks(sessions):
        rnd = streams.stream(config.seed, streams.SESSIONS, block)
        for t in range(size):
            alice = honest[int(rnd.random() * len(honest))]
            trace = execute_session(config, population, alice, rnd, session_id=t,
                                    registry=CascadeRegistry())
            hits += trace.connections[0].source == alice
    return hits / sessions


# ---------------------------------------------------------------------------
# figure presets

P_F_SERIES = (1 / 2, 2 / 3, 4 / 5, 6 / 7)


def _steps(start: float, stop: float, step: float) -> list:
    n = int(round((stop - start) / step))
    return [round(start + i * step, 10) for i in range(n + 1)]


@dataclass(frozen=True)
class FigurePreset:
    figure_id: str
    title: str
    base: ScenarioConfig
    axes: dict
    overlay: bool = True


def _preset(fid, title, scenario, n, axes, **kw):
    base = ScenarioConfig(n_users=n, scenario=scenario, n_exits=kw.pop("n_exits", 1), **kw)
    return FigurePreset(fid, title, base, axes)


FIGURES = {
    "fig2": _preset("fig2", "P2Priv, P2P scenario, |N|=10", Scenario.P2PRIV_P2P, 10,
                    {"p_f": P_F_SERIES, "rho": _steps(0.0, 0.9, 0.05)}),
    "fig3": _preset("fig3", "P2Priv, P2P scenario, |N|=1000", Scenario.P2PRIV_P2P, 1000,
                    {"p_f": P_F_SERIES, "rho": _steps(0.0, 0.95, 0.05)}),
    "fig4": _preset("fig4", "P2Priv, client-server scenario, |N|=10", Scenario.P2PRIV_CS, 10,
                    {"p_f": P_F_SERIES, "rho": _steps(0.0, 0.9, 0.05)}),
    "fig5": _preset("fig5", "P2Priv, client-server scenario, |N|=1000", Scenario.P2PRIV_CS, 1000,
                    {"p_f": P_F_SERIES, "rho": _steps(0.0, 0.95, 0.05)}),
    "fig6": _preset("fig6", "NetPriv surface, |CC|=4, |N|=10", Scenario.NETPRIV_CS, 10,
                    {"rho": _steps(0.0, 0.9, 0.1), "rho_e": _steps(0.0, 1.0, 0.1)},
                    n_exits=10),
    "fig7": _preset("fig7", "NetPriv surface, |CC|=4, |N|=1000", Scenario.NETPRIV_CS, 1000,
                    {"rho": _steps(0.0, 0.9, 0.1), "rho_e": _steps(0.0, 1.0, 0.1)},
                    n_exits=100),
    "fig8": _preset("fig8", "NetPriv, rho_e=1/2, |N|=10", Scenario.NETPRIV_CS, 10,
                    {"rho": _steps(0.0, 0.9, 0.05)}, rho_e=0.5, n_exits=10),
    "fig9": _preset("fig9", "NetPriv, rho_e=1/2, |N|=1000", Scenario.NETPRIV_CS, 1000,
                    {"rho": _steps(0.0, 0.95, 0.05)}, rho_e=0.5, n_exits=100),
}
