import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netpriv import streams
from netpriv.adversary import (
    CandidateDistribution,
    Observation,
    ObservationLog,
    ObservationPoint,
    entropy_of,
    intersection_attack,
    observe_session,
    posterior_from_observation,
)
from netpriv.model import AdversaryView, NodeId, Role, Scenario, ScenarioConfig, build_population
from netpriv.sim import CascadeRegistry, execute_session


def user(i):
    return NodeId(Role.USER, i)


def seen(*idx, point=ObservationPoint.SERVER):
    return tuple(Observation(user(i), point, 5) for i in idx)


def test_empty_adversary_sees_nothing():
    for scenario in Scenario:
        cfg = ScenarioConfig(n_users=30, n_exits=4, scenario=scenario, seed=4)
        pop = build_population(cfg)
        assert pop.view == AdversaryView()
        trace = execute_session(cfg, pop, pop.users[0], streams.stream(4, 1))
        assert observe_session(trace, pop.view, scenario).empty


def test_client_server_observes_every_member():
    cfg = ScenarioConfig(n_users=100, rho=0.1, scenario=Scenario.P2PRIV_CS, seed=6)
    pop = build_population(cfg)
    rnd = streams.stream(6, 1)
    for _ in range(300):
        trace = execute_session(cfg, pop, pop.honest_users[0], rnd)
        log = observe_session(trace, pop.view, cfg.scenario)
        assert log.user_sources() == set(trace.cascade.members)
        assert log.connection_count == len(trace.cascade.members)
        dist = posterior_from_observation(log, pop.view, pop)
        assert entropy_of(dist) == pytest.approx(math.log2(len(trace.cascade.members)), abs=1e-12)
        if trace.break_index is not None:
            assert [i.holder for i in log.token_intercepts] == [trace.cascade.path[-1]]


def test_netpriv_without_colluding_exits_hides_users():
    cfg = ScenarioConfig(n_users=60, n_exits=5, rho=0.2, rho_e=0.0,
                         scenario=Scenario.NETPRIV_CS, seed=3)
    pop = build_population(cfg)
    rnd = streams.stream(3, 1)
    for i in range(200):
        trace = execute_session(cfg, pop, pop.honest_users[i % 20], rnd, registry=CascadeRegistry())
        log = observe_session(trace, pop.view, cfg.scenario)
        assert not log.user_sources()
        assert {o.source.role for o in log.observed_connections} <= {Role.EXIT}


def test_netpriv_colluding_exit_reveals_source(netpriv_pop):
    cfg, pop = netpriv_pop
    rnd = streams.stream(1, 1)
    for i in range(200):
        trace = execute_session(cfg, pop, pop.honest_users[i % 30], rnd, registry=CascadeRegistry())
        log = observe_session(trace, pop.view, cfg.scenario)
        expected = {c.source for c in trace.connections if c.exit in pop.view.malicious_exits}
        assert log.user_sources() == expected
        assert log.connection_count == len(trace.connections)


def test_p2p_observes_connections_into_colluders():
    cfg = ScenarioConfig(n_users=40, rho=0.25, scenario=Scenario.P2PRIV_P2P, seed=9)
    pop = build_population(cfg)
    trace = execute_session(cfg, pop, pop.honest_users[0], streams.stream(9, 1))
    log = observe_session(trace, pop.view, cfg.scenario)
    expected = {c.source for c in trace.connections if c.destination in pop.view.malicious_users}
    assert log.user_sources() == expected
    assert log.connection_count is None


def test_posterior_empty_log_is_uniform(small_cs):
    _, pop = small_cs
    dist = posterior_from_observation(ObservationLog(0), pop.view, pop)
    assert len(dist.probabilities) == 8
    assert all(p == 1 / 8 for p in dist.probabilities.values())
    assert entropy_of(dist) == 3.0


def test_posterior_full_cascade(small_cs):
    _, pop = small_cs
    honest = [h.index for h in pop.honest_users[:3]]
    log = ObservationLog(0, observed_connections=seen(*honest), connection_count=3)
    dist = posterior_from_observation(log, pop.view, pop)
    assert dist.support == {user(i) for i in honest}
    assert entropy_of(dist) == pytest.approx(math.log2(3))


def test_posterior_half_observed(small_cs):
    _, pop = small_cs
    observed = pop.honest_users[0].index
    log = ObservationLog(0, observed_connections=seen(observed, point=ObservationPoint.MALICIOUS_EXIT),
                         connection_count=2)
    dist = posterior_from_observation(log, pop.view, pop)
    assert dist.probability(user(observed)) == 0.5
    others = [h for h in pop.honest_users if h.index != observed]
    assert len(others) == 7
    assert all(dist.probability(h) == pytest.approx(0.5 / 7) for h in others)
    for bad in pop.view.malicious_users:
        assert dist.probability(bad) == 0.0


@pytest.mark.parametrize("probs, h", [
    ((3, 0.0, 8, 1 / 8), 3.0),
    ((1, 1.0, 4, 0.0), 0.0),
])
def test_entropy_of(probs, h):
    k, p_obs, n_honest, p_rest = probs
    honest = frozenset(user(i) for i in range(n_honest))
    observed = frozenset(user(i) for i in range(k)) if p_obs else frozenset()
    assert entropy_of(CandidateDistribution(observed, p_obs, honest, p_rest)) == h


def test_entropy_of_three_point():
    honest = frozenset(user(i) for i in range(3))
    dist = CandidateDistribution(frozenset({user(0)}), 0.5, honest, 0.25)
    assert dist.total() == 1.0
    assert entropy_of(dist) == 1.5


@settings(max_examples=300, deadline=None)
@given(
    n=st.integers(3, 200),
    rho=st.floats(0.0, 0.8),
    k=st.integers(0, 20),
    extra=st.integers(0, 10),
    known=st.booleans(),
    seed=st.integers(0, 2**32),
)
def test_posterior_normalised(n, rho, k, extra, known, seed):
    if n * (1 - rho) < 1:
        return
    pop = build_population(ScenarioConfig(n_users=n, rho=rho, scenario=Scenario.P2PRIV_CS, seed=seed))
    k = min(k, len(pop.honest_users))
    obs = seen(*(h.index for h in pop.honest_users[:k]))
    log = ObservationLog(0, observed_connections=obs, connection_count=(k + extra) if known else None)
    dist = posterior_from_observation(log, pop.view, pop, expected_break=k + extra / 2)
    assert dist.total() == pytest.approx(1.0, abs=1e-9)
    assert not dist.support & pop.view.malicious_users
    assert len(dist.support) + len(pop.view.malicious_users) <= n


def _logs(cfg, sessions, alice=None):
    pop = build_population(cfg)
    alice = alice or pop.honest_users[0]
    reg = CascadeRegistry()
    logs = []
    for i in range(sessions):
        trace = execute_session(cfg, pop, alice, streams.stream(cfg.seed, 1, i), session_id=i, registry=reg)
        logs.append(observe_session(trace, pop.view, cfg.scenario))
    return pop, alice, logs


def test_intersection_single_session(small_cs):
    cfg, _ = small_cs
    pop, alice, logs = _logs(cfg, 1)
    sets = intersection_attack(logs, pop.view, pop)
    assert sets == [logs[0].user_sources()]


def test_intersection_monotone_and_keeps_alice():
    for seed in range(40):
        for scenario in Scenario:
            cfg = ScenarioConfig(n_users=50, n_exits=4, rho=0.1, rho_e=0.75, scenario=scenario, seed=seed)
            pop, alice, logs = _logs(cfg, 12)
            sets = intersection_attack(logs, pop.view, pop)
            assert all(alice in s for s in sets)
            assert all(b <= a for a, b in zip(sets, sets[1:]))


def test_p2priv_cs_isolates_alice_eventually():
    cfg = ScenarioConfig(n_users=100, rho=0.1, scenario=Scenario.P2PRIV_CS, seed=5)
    pop, alice, logs = _logs(cfg, 50)
    assert intersection_attack(logs, pop.view, pop)[-1] == {alice}


def test_netpriv_intersection_is_constant():
    for seed in range(30):
        cfg = ScenarioConfig(n_users=100, n_exits=5, rho=0.1, rho_e=1.0,
                             scenario=Scenario.NETPRIV_CS, seed=seed)
        pop, alice, logs = _logs(cfg, 10)
        sets = intersection_attack(logs, pop.view, pop)
        assert all(s == sets[0] for s in sets)
        assert sets[0] == logs[0].user_sources()


def test_incomplete_observation_does_not_narrow(small_cs):
    _, pop = small_cs
    h = pop.honest_users
    partial = ObservationLog(0, observed_connections=seen(h[0].index), connection_count=3)
    assert intersection_attack([partial], pop.view, pop) == [pop.honest_set]
    p2p = replace(partial, connection_count=None)
    assert intersection_attack([p2p], pop.view, pop) == [pop.honest_set]
