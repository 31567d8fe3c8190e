"""Closed-form anonymity quantities for P2Priv and NetPriv.

Everything here is a pure function of its arguments.  Set sizes that are
expectations (broken cascade size, eavesdropped subset) enter the entropy
expressions as real-valued weights, without rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import FLOOR_EPS, Scenario, ScenarioConfig, robust_floor


class DomainError(ValueError):
    """An analytic quantity was requested outside its domain."""


@dataclass(frozen=True)
class AnalyticInputs:
    n_users: int
    rho: float
    rho_e: float = 0.0
    p_f: float = 2 / 3
    cap: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_f < 1.0:
            raise DomainError(f"p_f must lie in [0, 1), got {self.p_f}")
        if not (0.0 <= self.rho <= 1.0 and 0.0 <= self.rho_e <= 1.0):
            raise DomainError("rho and rho_e must lie in [0, 1]")
        if self.cap == 0:
            object.__setattr__(self, "cap", auto_cap(self.n_users, self.rho))
        if self.cap < 1:
            raise DomainError("cap must be at least 1")

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "AnalyticInputs":
        return cls(config.n_users, config.rho, config.rho_e, config.p_f, config.cap)


@dataclass(frozen=True)
class PosteriorParams:
    p_a1: float
    p_other: float
    n_eavesdropped: float
    n_break: float
    n_outside: float

    def total(self) -> float:
        return self.p_a1 * self.n_eavesdropped + self.p_other * self.n_outside


def auto_cap(n_users: int, rho: float) -> int:
    return max(1, robust_floor(n_users * (1.0 - rho)))


def max_entropy(n_users: int, rho: float) -> float:
    honest = n_users * (1.0 - rho)
    if honest < 1.0 - FLOOR_EPS:
        raise DomainError("no honest candidates: n_users * (1 - rho) < 1")
    return max(0.0, math.log2(honest))


def mean_cc_length(p_f: float) -> float:
    if not 0.0 <= p_f < 1.0:
        raise DomainError(f"p_f must lie in [0, 1), got {p_f}")
    return (p_f - 2) / (p_f - 1)


def cc_break_pmf(n: int, rho: float, p_f: float) -> float:
    """Probability that the actively broken cascade holds exactly ``n`` nodes.

    Defined for rho in [0, 1]; at rho = 0 it degenerates to the law of the
    unbroken walk.
    """
    if n < 1:
        raise DomainError("cascade size must be at least 1")
    _check_walk(rho, p_f)
    if n == 1:
        return rho
    return (1.0 - rho) ** (n - 1) * (p_f ** (n - 1) * rho + (1.0 - p_f) * p_f ** (n - 2))


def cc_break_pmf_vector(cap: int, rho: float, p_f: float) -> np.ndarray:
    """``cc_break_pmf`` for n = 1..cap as an array (index 0 holds n = 1)."""
    _check_walk(rho, p_f)
    out = np.empty(cap, dtype=float)
    out[0] = rho
    if cap > 1:
        k = np.arange(2, cap + 1, dtype=float)
        with np.errstate(under="ignore"):
            out[1:] = (1.0 - rho) ** (k - 1) * (p_f ** (k - 1) * rho + (1.0 - p_f) * p_f ** (k - 2))
    return out


def expected_cc_break(rho: float, p_f: float, cap: int) -> float:
    """Mean broken cascade size by direct summation up to ``cap``.

    The truncated distribution is deliberately not renormalised.
    """
    if cap < 1:
        raise DomainError("cap must be at least 1")
    pmf = cc_break_pmf_vector(cap, rho, p_f)
    return float(np.dot(np.arange(1, cap + 1, dtype=float), pmf))


def expected_cc_break_closed_form(rho: float, p_f: float, cc_len: float) -> float:
    """The published closed form for the mean broken cascade size.

    Read as one fraction whose denominator is p_f * (1 + p_f * (rho - 1)).
    Kept for cross-checking only; it does not reproduce the direct sum.
    """
    _check_walk(rho, p_f)
    denom = p_f * (1.0 + p_f * (rho - 1.0))
    if denom == 0.0:
        raise DomainError("closed form undefined at p_f = 0")
    c = cc_len
    r1 = rho - 1.0
    numer = (
        (1.0 + c) * p_f**c * r1**c
        - c * p_f ** (c + 1) * r1 ** (c + 1)
        - p_f * (rho - 2.0)
        + p_f**2 * r1
    )
    return numer / denom


def eavesdrop_size(fraction: float, n_break: float) -> float:
    return fraction * n_break


def posterior_from_sizes(
    n_users: int,
    rho: float,
    n_break: float,
    n_eavesdropped: float,
    paper_literal: bool = False,
) -> PosteriorParams:
    """Per-node probabilities inside and outside the eavesdropped set.

    The default keeps the distribution normalised: the mass left outside the
    eavesdropped set is 1 - n_eavesdropped / n_break.  ``paper_literal``
    instead uses (1 - p_a1) as the outside mass, which does not normalise.
    """
    if n_break < 1.0 - FLOOR_EPS:
        raise DomainError("n_break must be at least 1")
    outside = n_users - rho * n_users - n_eavesdropped
    p_a1 = 1.0 / n_break
    outside_mass = (1.0 - p_a1) if paper_literal else (1.0 - n_eavesdropped / n_break)
    if outside <= 0.0:
        if outside_mass <= FLOOR_EPS and outside > -FLOOR_EPS:
            return PosteriorParams(p_a1, 0.0, n_eavesdropped, n_break, 0.0)
        raise DomainError("no honest node left outside the eavesdropped set")
    return PosteriorParams(p_a1, outside_mass / outside, n_eavesdropped, n_break, outside)


def posterior_params(
    inputs: AnalyticInputs,
    scenario: Scenario,
    *,
    n_break: float | None = None,
    paper_literal: bool = False,
) -> PosteriorParams:
    scenario = Scenario(scenario)
    if n_break is None:
        n_break = _break_size(inputs)
    if scenario is Scenario.P2PRIV_P2P:
        fraction = inputs.rho
    elif scenario is Scenario.NETPRIV_CS:
        fraction = inputs.rho_e
    else:
        # the compromised server sees every connection
        fraction = 1.0
    n_eav = eavesdrop_size(fraction, n_break)
    return posterior_from_sizes(inputs.n_users, inputs.rho, n_break, n_eav, paper_literal)


def _two_part_entropy(params: PosteriorParams) -> float:
    # mass-weighted form: exact when the outside mass is 0
    inside_mass = params.n_eavesdropped / params.n_break
    outside_mass = params.p_other * params.n_outside
    h = inside_mass * math.log2(params.n_break)
    if params.p_other > 0.0:
        h -= outside_mass * math.log2(params.p_other)
    return h


def entropy_p2priv_p2p(
    inputs: AnalyticInputs, *, n_break: float | None = None, paper_literal: bool = False
) -> float:
    if inputs.rho == 0.0:
        return max_entropy(inputs.n_users, 0.0)
    params = posterior_params(
        inputs, Scenario.P2PRIV_P2P, n_break=n_break, paper_literal=paper_literal
    )
    if paper_literal:
        h = params.n_eavesdropped * params.p_a1 * math.log2(params.n_break)
        if params.p_other > 0.0:
            h -= params.n_outside * params.p_other * math.log2(params.p_other)
        return h
    return _two_part_entropy(params)


def entropy_p2priv_cs(inputs: AnalyticInputs, *, n_break: float | None = None) -> float:
    if inputs.rho == 0.0:
        return max_entropy(inputs.n_users, 0.0)
    if n_break is None:
        n_break = _break_size(inputs)
    return math.log2(n_break)


def entropy_netpriv(inputs: AnalyticInputs, *, n_break: float | None = None) -> float:
    if inputs.rho == 0.0:
        return max_entropy(inputs.n_users, 0.0)
    params = posterior_params(inputs, Scenario.NETPRIV_CS, n_break=n_break)
    return _two_part_entropy(params)


def entropy_for(scenario: Scenario, inputs: AnalyticInputs, *, n_break: float | None = None) -> float:
    scenario = Scenario(scenario)
    if scenario is Scenario.P2PRIV_P2P:
        return entropy_p2priv_p2p(inputs, n_break=n_break)
    if scenario is Scenario.P2PRIV_CS:
        return entropy_p2priv_cs(inputs, n_break=n_break)
    return entropy_netpriv(inputs, n_break=n_break)


def _break_size(inputs: AnalyticInputs) -> float:
    # The truncated, unrenormalised sum can dip below one cascade member when
    # the cap is tiny (e.g. cap = 1 gives rho); a cascade always holds Alice.
    return max(1.0, expected_cc_break(inputs.rho, inputs.p_f, inputs.cap))


def _check_walk(rho: float, p_f: float) -> None:
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [0, 1], got {rho}")
    if not 0.0 <= p_f < 1.0:
        raise DomainError(f"p_f must lie in [0, 1), got {p_f}")
