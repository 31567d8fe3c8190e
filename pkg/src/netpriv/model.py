"""Domain types shared by the analytic, simulation and adversary layers."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from . import streams

# Guards floor() against products such as 10 * (1 - 0.9) = 0.9999999999999998.
FLOOR_EPS = 1e-9


def robust_floor(x: float) -> int:
    return math.floor(x + FLOOR_EPS)


class ConfigError(ValueError):
    """Raised for scenario parameters outside their valid domain."""


class Role(str, enum.Enum):
    USER = "u"
    EXIT = "e"
    SERVER = "s"


class NodeId(NamedTuple):
    role: Role
    index: int

    def __str__(self) -> str:
        return f"{self.role.value}{self.index}"


SERVER = NodeId(Role.SERVER, 0)


class Scenario(str, enum.Enum):
    P2PRIV_P2P = "p2priv-p2p"
    P2PRIV_CS = "p2priv-cs"
    NETPRIV_CS = "netpriv-cs"

    @property
    def client_server(self) -> bool:
        return self is not Scenario.P2PRIV_P2P


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of one simulated network.

    ``break_cap=None`` means AUTO: floor(n_users * (1 - rho)).
    ``jitter_max=None`` means four times the cascade traversal bound.
    ``cascade_len=None`` lets a NetPriv sender draw the length of her
    persistent cascade from the same geometric law that ``p_f`` induces on
    the random walk; an integer fixes it.
    """

    n_users: int
    n_exits: int = 1
    rho: float = 0.0
    rho_e: float = 0.0
    p_f: float = 2 / 3
    scenario: Scenario = Scenario.P2PRIV_CS
    break_cap: Optional[int] = None
    jitter_max: Optional[int] = None
    cascade_len: Optional[int] = None
    active: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must lie in [0, 1], got {self.rho}")
        if not 0.0 <= self.rho_e <= 1.0:
            raise ConfigError(f"rho_e must lie in [0, 1], got {self.rho_e}")
        if not 0.0 <= self.p_f < 1.0:
            raise ConfigError(f"p_f must lie in [0, 1), got {self.p_f}")
        if self.n_users < 2:
            raise ConfigError("n_users must be at least 2")
        if self.n_exits < 1:
            raise ConfigError("n_exits must be at least 1")
        if self.break_cap is not None and self.break_cap < 1:
            raise ConfigError("break_cap must be positive")
        if self.jitter_max is not None and self.jitter_max < 1:
            raise ConfigError("jitter_max must be positive")
        if self.cascade_len is not None and self.cascade_len < 1:
            raise ConfigError("cascade_len must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def n_malicious(self) -> int:
        return robust_floor(self.rho * self.n_users)

    @property
    def n_malicious_exits(self) -> int:
        return robust_floor(self.rho_e * self.n_exits)

    @property
    def cap(self) -> int:
        """Effective bound on the broken cascade size (and on walk length)."""
        if self.break_cap is not None:
            return self.break_cap
        return max(1, robust_floor(self.n_users * (1.0 - self.rho)))

    @property
    def traversal_bound(self) -> int:
        """Ticks a token may need to cross the longest permitted cascade."""
        return self.cap + 1

    @property
    def effective_jitter(self) -> int:
        if self.jitter_max is not None:
            return self.jitter_max
        return 4 * self.traversal_bound


@dataclass(frozen=True)
class AdversaryView:
    malicious_users: frozenset = frozenset()
    malicious_exits: frozenset = frozenset()
    server_compromised: bool = False

    def is_malicious(self, node: NodeId) -> bool:
        if node.role is Role.USER:
            return node in self.malicious_users
        if node.role is Role.EXIT:
            return node in self.malicious_exits
        return self.server_compromised


@dataclass(frozen=True)
class Population:
    users: tuple
    exits: tuple
    server: Optional[NodeId]
    view: AdversaryView
    # index-aligned with users; the hot loops in sim read this instead of hashing
    malicious_mask: tuple = field(repr=False)
    honest_users: tuple = field(repr=False)
    honest_set: frozenset = field(repr=False)

    @property
    def n_users(self) -> int:
        return len(self.users)


@dataclass(frozen=True)
class CloningToken:
    dest_addr: str
    request_time: int
    request: bytes


class SealedError(PermissionError):
    """Raised when a node other than the addressed exit opens a request."""


class ExitRequest:
    """A request sealed for one exit node.

    Stands in for public-key encryption: the fields are only handed out to
    the node named in ``sealed_for``.
    """

    __slots__ = ("sealed_for", "_src", "_dest", "_request")

    def __init__(self, src_addr: NodeId, dest_addr: NodeId, request: bytes, sealed_for: NodeId):
        if sealed_for.role is not Role.EXIT:
            raise ValueError("requests can only be sealed for exit nodes")
        self.sealed_for = sealed_for
        self._src = src_addr
        self._dest = dest_addr
        self._request = request

    def open(self, as_node: NodeId) -> tuple:
        if as_node != self.sealed_for:
            raise SealedError(f"{as_node} cannot open a request sealed for {self.sealed_for}")
        return self._src, self._dest, self._request

    def __repr__(self) -> str:
        return f"ExitRequest(sealed_for={self.sealed_for})"


def build_population(config: ScenarioConfig) -> Population:
    """Assign roles and draw the colluding subsets for ``config``.

    Colluders are a uniform random subset drawn from the population stream of
    ``config.seed``.  A compromised server exists only in the client-server
    scenarios and only when the adversary holds user nodes (rho > 0); at
    rho = 0 there is no adversary to speak of.
    """
    n = config.n_users
    if n * (1.0 - config.rho) < 1.0 - FLOOR_EPS:
        raise ConfigError("no honest user left: n_users * (1 - rho) < 1")

    users = tuple(NodeId(Role.USER, i) for i in range(n))
    exits = ()
    if config.scenario is Scenario.NETPRIV_CS:
        exits = tuple(NodeId(Role.EXIT, i) for i in range(config.n_exits))
    server = SERVER if config.scenario.client_server else None

    rnd = streams.stream(config.seed, streams.POPULATION)
    bad = sorted(rnd.sample(range(n), config.n_malicious))
    bad_exits = sorted(rnd.sample(range(len(exits)), config.n_malicious_exits)) if exits else []

    mask = [False] * n
    for i in bad:
        mask[i] = True
    view = AdversaryView(
        malicious_users=frozenset(users[i] for i in bad),
        malicious_exits=frozenset(exits[i] for i in bad_exits),
        server_compromised=server is not None and config.rho > 0,
    )
    honest = tuple(u for u, m in zip(users, mask) if not m)
    return Population(
        users=users,
        exits=exits,
        server=server,
        view=view,
        malicious_mask=tuple(mask),
        honest_users=honest,
        honest_set=frozenset(honest),
    )
