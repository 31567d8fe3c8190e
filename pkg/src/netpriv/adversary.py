"""What the colluding adversary sees, and what it concludes from it."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .model import AdversaryView, NodeId, Population, Role, Scenario
from .sim import PerfectMix, SessionTrace, token_digest


class ObservationPoint(str, enum.Enum):
    MALICIOUS_PEER = "peer"
    MALICIOUS_EXIT = "exit"
    SERVER = "server"


class TokenIntercept(NamedTuple):
    holder: NodeId
    time: int
    token_hash: str


class Observation(NamedTuple):
    source: NodeId
    point: ObservationPoint
    time: int


@dataclass(frozen=True)
class ObservationLog:
    session_id: int
    token_intercepts: tuple = ()
    observed_connections: tuple = ()
    # parallel connections counted at a compromised destination; None if unknown
    connection_count: Optional[int] = None

    @property
    def empty(self) -> bool:
        return not self.token_intercepts and not self.observed_connections

    def user_sources(self) -> frozenset:
        return frozenset(o.source for o in self.observed_connections if o.source.role is Role.USER)

    @property
    def complete(self) -> bool:
        """True when every counted connection has a known user source."""
        return self.connection_count is not None and len(self.user_sources()) == self.connection_count


@dataclass(frozen=True)
class CandidateDistribution:
    """Posterior over honest users: ``p_observed`` on each observed source,
    ``p_rest`` on every other honest user."""

    observed: frozenset
    p_observed: float
    honest: frozenset
    p_rest: float

    @property
    def n_rest(self) -> int:
        return len(self.honest) - len(self.observed)

    def probability(self, node: NodeId) -> float:
        if node in self.observed:
            return self.p_observed
        if node in self.honest:
            return self.p_rest
        return 0.0

    @property
    def probabilities(self) -> dict:
        return {n: self.probability(n) for n in self.honest}

    def total(self) -> float:
        return len(self.observed) * self.p_observed + self.n_rest * self.p_rest

    @property
    def support(self) -> frozenset:
        if self.p_rest > 0.0:
            return self.honest
        return self.observed if self.p_observed > 0.0 else frozenset()


def observe_session(trace: SessionTrace, view: AdversaryView, scenario: Scenario) -> ObservationLog:
    scenario = Scenario(scenario)
    digest = None
    intercepts = []
    for e in PerfectMix(view).leaked(trace.token_path_events):
        if digest is None:
            digest = token_digest(trace.token)
        intercepts.append(TokenIntercept(e.holder, e.time, digest))

    seen = []
    count = None
    if scenario is Scenario.P2PRIV_P2P:
        for c in trace.connections:
            if view.is_malicious(c.destination):
                seen.append(Observation(c.source, ObservationPoint.MALICIOUS_PEER, c.time))
    elif scenario is Scenario.P2PRIV_CS:
        if view.server_compromised:
            seen = [Observation(c.source, ObservationPoint.SERVER, c.time) for c in trace.connections]
            count = len(seen)
    else:
        if view.server_compromised:
            seen = [
                Observation(c.visible_source, ObservationPoint.SERVER, c.time)
                for c in trace.connections
            ]
            count = len(seen)
        for req, c in zip(trace.exit_requests, trace.connections):
            if view.is_malicious(req.sealed_for):
                src, _, _ = req.open(req.sealed_for)
                seen.append(Observation(src, ObservationPoint.MALICIOUS_EXIT, c.time))

    return ObservationLog(trace.session_id, tuple(intercepts), tuple(seen), count)


def posterior_from_observation(
    log: ObservationLog,
    view: AdversaryView,
    population: Population,
    expected_break: Optional[float] = None,
) -> CandidateDistribution:
    """Normalised two-level posterior.

    Each observed source gets 1 / n_break, where n_break is the counted
    number of parallel connections when the destination is compromised and
    ``expected_break`` otherwise.  The remaining mass is spread evenly over
    the honest users that were not observed.
    """
    honest = population.honest_set
    observed = log.user_sources() - view.malicious_users
    k = len(observed)
    n_honest = len(honest)
    if k == 0:
        return CandidateDistribution(frozenset(), 0.0, honest, 1.0 / n_honest)

    n_break = log.connection_count if log.connection_count is not None else expected_break
    if n_break is None:
        n_break = k
    n_break = max(n_break, k)
    rest = n_honest - k
    if rest == 0:
        return CandidateDistribution(observed, 1.0 / k, honest, 0.0)
    rest_mass = 1.0 - k / n_break
    return CandidateDistribution(observed, 1.0 / n_break, honest, rest_mass / rest)


def entropy_of(dist: CandidateDistribution) -> float:
    h = 0.0
    for count, p in ((len(dist.observed), dist.p_observed), (dist.n_rest, dist.p_rest)):
        if count and p > 0.0:
            h -= count * p * math.log2(p)
    return max(h, 0.0)


def candidate_set(log: ObservationLog, population: Population) -> frozenset:
    """Users that may have sent the session's request.

    Observed sources narrow the set only when they account for every
    connection; otherwise the unobserved connections could come from any
    honest user.
    """
    if log.complete:
        return log.user_sources()
    return population.honest_set


def intersection_attack(
    logs: Sequence[ObservationLog], view: AdversaryView, population: Population
) -> list:
    """Running intersection of per-session candidate sets, one entry per log."""
    out = []
    current = None
    for log in logs:
        cands = candidate_set(log, population) - view.malicious_users
        current = cands if current is None else current & cands
        out.append(current)
    return out
