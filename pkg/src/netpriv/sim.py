"""Single-session protocol simulation on a global logical clock.

A session injects a cloning token at tick 0.  The token moves one holder
per tick through the signalling layer (a perfect mix: nothing links the
sender to the token).  When the active adversary is on, the first colluding
holder keeps the token and the cascade ends there.  Every surviving member
then connects at ``request_time`` plus its own random delay.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .model import (
    AdversaryView,
    CloningToken,
    ExitRequest,
    NodeId,
    Population,
    Scenario,
    ScenarioConfig,
)


class SimulationError(RuntimeError):
    pass


class CustodyEvent(NamedTuple):
    holder: NodeId
    time: int


class Connection(NamedTuple):
    source: NodeId
    exit: Optional[NodeId]
    destination: NodeId
    time: int

    @property
    def visible_source(self) -> NodeId:
        """The source address the destination sees."""
        return self.exit if self.exit is not None else self.source


@dataclass(frozen=True)
class Cascade:
    """Token custody path and the cloning cascade it produced.

    ``path`` starts with Alice and lists every token holder in order,
    including a colluding holder that absorbed the token.  ``members`` are
    the distinct nodes before the break; they are the ones that connect.
    """

    path: tuple
    break_index: Optional[int] = None
    persistent: bool = False
    members: tuple = field(init=False, repr=False)

    def __post_init__(self):
        honest = self.path if self.break_index is None else self.path[: self.break_index]
        object.__setattr__(self, "members", tuple(dict.fromkeys(honest)))

    @property
    def alice(self) -> NodeId:
        return self.path[0]

    @property
    def walk_length(self) -> int:
        """Honest custody events, revisits included."""
        return len(self.path) if self.break_index is None else self.break_index


@dataclass(frozen=True)
class SessionTrace:
    session_id: int
    alice: NodeId
    cascade: Cascade
    token: CloningToken
    token_path_events: tuple
    connections: tuple
    exit_requests: tuple = ()

    @property
    def break_index(self) -> Optional[int]:
        return self.cascade.break_index


class PerfectMix:
    """Unlinkable token delivery: only colluding custodians see anything."""

    def __init__(self, view: AdversaryView):
        self.view = view

    def leaked(self, events) -> list:
        return [e for e in events if self.view.is_malicious(e.holder)]


class CascadeRegistry:
    """Per-session-key memory of NetPriv path and exit choices."""

    def __init__(self):
        self._paths: dict = {}
        self._exits: dict = {}

    def path(self, key):
        return self._paths.get(key)

    def remember(self, key, path: tuple) -> None:
        self._paths[key] = path

    def exits_for(self, key, members: tuple, exits: tuple, rnd: random.Random) -> dict:
        chosen = self._exits.setdefault(key, {})
        for m in members:
            if m not in chosen:
                chosen[m] = exits[int(rnd.random() * len(exits))]
        return chosen


def establish_cc_random_walk(
    population: Population,
    alice: NodeId,
    p_f: float,
    rnd: random.Random,
    cap: Optional[int] = None,
    active: bool = True,
) -> Cascade:
    """Grow a cascade by random walk from ``alice``.

    The first hop is always taken; each further hop happens with probability
    ``p_f``.  Next holders are uniform over all users except the current one.
    """
    mask = population.malicious_mask
    users = population.users
    n = len(users)
    limit = cap if cap is not None else n
    cur = alice.index
    if mask[cur]:
        raise SimulationError("alice must be honest")
    path = [cur]
    broken = None
    draw = rnd.random
    while len(path) < limit:
        nxt = int(draw() * (n - 1))
        if nxt >= cur:
            nxt += 1
        if active and mask[nxt]:
            broken = len(path)
            path.append(nxt)
            break
        path.append(nxt)
        cur = nxt
        if draw() >= p_f:
            break
    return Cascade(tuple(users[i] for i in path), broken)


def draw_cascade_length(p_f: float, rnd: random.Random, limit: int) -> int:
    """Length of a cascade under the random-walk law (mean (2-p_f)/(1-p_f))."""
    length = 2
    while length < limit and rnd.random() < p_f:
        length += 1
    return min(length, limit)


def establish_cc_persistent(
    population: Population,
    alice: NodeId,
    target_len: int,
    session_key,
    rnd: random.Random,
    registry: Optional[CascadeRegistry] = None,
    active: bool = True,
) -> Cascade:
    """Sender-chosen cascade, reused for every session under ``session_key``.

    Alice cannot tell colluders apart, so she picks clones uniformly among
    the other users; with the active adversary the token still stops at the
    first colluding clone along her path.
    """
    if target_len < 1:
        raise SimulationError("target_len must be at least 1")
    if target_len > len(population.honest_users):
        raise SimulationError("target_len exceeds the honest population")
    if population.malicious_mask[alice.index]:
        raise SimulationError("alice must be honest")
    path = registry.path(session_key) if registry is not None else None
    if path is None or path[0] != alice:
        picked = rnd.sample(range(population.n_users - 1), target_len - 1)
        path = (alice,) + tuple(
            population.users[i + 1 if i >= alice.index else i] for i in picked
        )
        if registry is not None:
            registry.remember(session_key, path)
    broken = None
    if active:
        for pos, node in enumerate(path):
            if population.malicious_mask[node.index]:
                broken = pos
                break
    return Cascade(path[: broken + 1] if broken is not None else path, broken, persistent=True)


def deliver_token(
    cascade: Cascade, token: CloningToken, mix: PerfectMix, injected_at: int = 0
) -> tuple:
    """Hand the token along the custody path, one tick per hop.

    Returns every custody event; ``mix.leaked`` selects the ones the
    adversary gets to see (those at colluding holders, who also read the
    token's fields).
    """
    if token.request_time <= injected_at + len(cascade.path):
        raise SimulationError(
            f"request_time {token.request_time} does not leave room for "
            f"{len(cascade.path)} hops after tick {injected_at}"
        )
    return tuple(CustodyEvent(node, injected_at + i) for i, node in enumerate(cascade.path))


def token_digest(token: CloningToken) -> str:
    h = hashlib.sha256()
    h.update(token.dest_addr.encode())
    h.update(token.request_time.to_bytes(8, "big"))
    h.update(token.request)
    return h.hexdigest()


def execute_session(
    config: ScenarioConfig,
    population: Population,
    alice: NodeId,
    rnd: random.Random,
    session_id: int = 0,
    registry: Optional[CascadeRegistry] = None,
    session_key=None,
    request: bytes = b"item-of-interest",
) -> SessionTrace:
    scenario = config.scenario
    cap = config.cap
    if scenario is Scenario.NETPRIV_CS:
        if registry is None:
            registry = CascadeRegistry()
        key = alice if session_key is None else session_key
        stored = registry.path(key)
        if stored is not None and stored[0] == alice:
            target = len(stored)
        elif config.cascade_len is not None:
            target = config.cascade_len
        else:
            target = draw_cascade_length(config.p_f, rnd, min(cap, len(population.honest_users)))
        cascade = establish_cc_persistent(
            population, alice, target, key, rnd, registry, active=config.active
        )
    else:
        cascade = establish_cc_random_walk(
            population, alice, config.p_f, rnd, cap=cap, active=config.active
        )

    dest_addr = "swarm" if scenario is Scenario.P2PRIV_P2P else str(population.server)
    token = CloningToken(dest_addr, config.traversal_bound + 1, request)
    events = deliver_token(cascade, token, PerfectMix(population.view))

    members = cascade.members
    jitter = config.effective_jitter
    times = [token.request_time + int(rnd.random() * (jitter + 1)) for _ in members]
    # simultaneous arrivals reach the destination in random order
    order = sorted(range(len(members)), key=lambda i: (times[i], rnd.random()))

    sealed = []
    conns = []
    if scenario is Scenario.NETPRIV_CS:
        exit_of = registry.exits_for(key, members, population.exits, rnd)
        for i in order:
            m = members[i]
            req = ExitRequest(m, population.server, request, exit_of[m])
            sealed.append(req)
            conns.append(Connection(m, exit_of[m], population.server, times[i]))
    elif scenario is Scenario.P2PRIV_CS:
        conns = [Connection(members[i], None, population.server, times[i]) for i in order]
    else:
        users = population.users
        n = len(users)
        for i in order:
            m = members[i]
            peer = int(rnd.random() * (n - 1))
            if peer >= m.index:
                peer += 1
            conns.append(Connection(m, None, users[peer], times[i]))

    return SessionTrace(
        session_id=session_id,
        alice=alice,
        cascade=cascade,
        token=token,
        token_path_events=events,
        connections=tuple(conns),
        exit_requests=tuple(sealed),
    )


def trace_lines(trace: SessionTrace) -> list:
    """Canonical line-oriented serialisation, used for regression fixtures."""
    lines = [
        f"session {trace.session_id}",
        f"alice {trace.alice}",
        f"token {trace.token.dest_addr} {trace.token.request_time} {trace.token.request.hex()}",
        "path " + " ".join(str(n) for n in trace.cascade.path),
        f"break {'-' if trace.break_index is None else trace.break_index}",
    ]
    lines += [f"custody {e.holder} {e.time}" for e in trace.token_path_events]
    for c in trace.connections:
        via = "-" if c.exit is None else str(c.exit)
        lines.append(f"conn {c.source} {via} {c.destination} {c.time}")
    return lines
