"""Deterministic round scheduler.

Each round applies churn events and then runs five phases over the remaining
agents: ack collection, departure detection plus weight assignment, a fixed
number of max-consensus flood iterations, the data exchange, and the state
update.  Agents that join in a round only initialize; their acks are first
heard, and they first transmit, in the following round.

Within a phase every agent reads only prior-phase messages and its own state,
so phases may be evaluated concurrently; the default driver is single-threaded
and bit-reproducible.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable, Mapping

from .agent import (
    AckMessage,
    AgentState,
    DataMessage,
    DetectionMessage,
    apply_update,
    assign_push_weights,
    detect_departures,
    init_arrival,
    make_outbound,
    max_consensus_step,
    scaled_triple,
)
from .costs import ClusterObjective, CostFunction, cluster_minimizer, gradient
from .errors import ConfigurationError, SimulationError
from .topology import (
    ActivationVector,
    ClusterPartition,
    MaximalDigraph,
    active_subgraph,
    clusters,
)

if TYPE_CHECKING:
    from .scenario import Scenario

JOIN = "join"
LEAVE = "leave"

# Joining agents draw their initial estimate uniformly from this interval
# when a scenario says "random".
X_HAT_RANGE = (1.0, 5.0)


@dataclass(frozen=True)
class ChurnEvent:
    """One join or leave taking effect at the given round."""

    round: int
    agent: int
    kind: str
    x_hat: float | str | None = None
    cost: CostFunction | None = None


@dataclass
class WorldState:
    round: int
    activation: ActivationVector
    prev_activation: ActivationVector
    agents: dict[int, AgentState]
    partition: ClusterPartition

    def active_ids(self) -> tuple[int, ...]:
        return self.activation.active_ids()


@dataclass(frozen=True)
class AgentRecord:
    agent: int
    x: float
    y: float
    z: float
    w: float
    h: int


@dataclass(frozen=True)
class ClusterRecord:
    members: tuple[int, ...]
    minimizer: float
    error: float
    lemma1_residual: float


@dataclass(frozen=True)
class RoundRecord:
    round: int
    active: tuple[int, ...]
    agents: tuple[AgentRecord, ...]
    clusters: tuple[ClusterRecord, ...]


@dataclass
class Trace:
    """Per-round, per-agent history of one run plus its reproducibility metadata."""

    records: list[RoundRecord]
    seed: int
    gamma: float
    node_count: int
    diameter_bound: int

    def agent_series(self, agent: int) -> list[AgentRecord]:
        return [
            rec
            for rr in self.records
            for rec in rr.agents
            if rec.agent == agent
        ]


def partition_population(
    prev: ActivationVector, curr: ActivationVector
) -> tuple[frozenset[int], frozenset[int], frozenset[int]]:
    """Split the population into (remaining, joining, departing) sets."""
    if len(prev) != len(curr):
        raise ConfigurationError(
            f"activation lengths differ: {len(prev)} vs {len(curr)}"
        )
    before = set(prev.active_ids())
    after = set(curr.active_ids())
    return (
        frozenset(before & after),
        frozenset(after - before),
        frozenset(before - after),
    )


def initial_world(
    graph: MaximalDigraph,
    initial_agents: Mapping[int, tuple[float, CostFunction]],
    gamma: float,
) -> WorldState:
    """Round-0 world: every initially active agent is a fresh arrival."""
    activation = ActivationVector.from_ids(graph.node_count, initial_agents.keys())
    agents = {
        aid: init_arrival(aid, x_hat, cost, gamma)
        for aid, (x_hat, cost) in sorted(initial_agents.items())
    }
    none_active = ActivationVector.from_ids(graph.node_count, ())
    partition = clusters(active_subgraph(graph, activation), activation.active_ids())
    return WorldState(
        round=0,
        activation=activation,
        prev_activation=none_active,
        agents=agents,
        partition=partition,
    )


def _apply_events(
    world: WorldState, events: Iterable[ChurnEvent], graph: MaximalDigraph, gamma: float
) -> tuple[ActivationVector, dict[int, AgentState]]:
    """Leave-first-then-join activation update plus fresh states for joiners."""
    next_round = world.round + 1
    active = set(world.active_ids())
    joiners: dict[int, AgentState] = {}
    for ev in sorted(events, key=lambda e: (e.kind != LEAVE, e.agent)):
        if ev.round != next_round:
            raise SimulationError(
                f"event for v{ev.agent} is scheduled for round {ev.round}, "
                f"but the engine is at round {next_round}"
            )
        if ev.kind == LEAVE:
            if ev.agent not in active:
                raise SimulationError(
                    f"round {next_round}: v{ev.agent} cannot leave while inactive"
                )
            active.discard(ev.agent)
        elif ev.kind == JOIN:
            if ev.agent in active:
                raise SimulationError(
                    f"round {next_round}: v{ev.agent} cannot join while active"
                )
            if not isinstance(ev.x_hat, (int, float)):
                raise ConfigurationError(
                    f"round {next_round}: join for v{ev.agent} has unresolved "
                    f"initial estimate {ev.x_hat!r}"
                )
            if ev.cost is None:
                raise ConfigurationError(
                    f"round {next_round}: join for v{ev.agent} carries no cost function"
                )
            active.add(ev.agent)
            joiners[ev.agent] = init_arrival(ev.agent, ev.x_hat, ev.cost, gamma)
        else:
            raise ConfigurationError(f"unknown event kind {ev.kind!r}")
    return ActivationVector.from_ids(graph.node_count, active), joiners


def run_round(
    world: WorldState,
    events: Iterable[ChurnEvent],
    graph: MaximalDigraph,
    gamma: float,
    reset_enabled: bool = True,
) -> WorldState:
    """Advance the world by one round.

    ``reset_enabled=False`` is a fault-injection hook for tests: detection
    still runs, but the tracker reset it would trigger is suppressed,
    reproducing the biased drift that unnoticed departures cause.
    """
    activation, joiners = _apply_events(world, events, graph, gamma)
    remaining = sorted(set(world.active_ids()) & set(activation.active_ids()))
    remaining_set = frozenset(remaining)
    active_now = activation.active_ids()

    # Phase 2: acks travel on the reverse control channels.  An out-neighbor
    # acks iff it was active last round and still is, so this round's joiners
    # are first acknowledged in the next round.
    acks: dict[int, list[AckMessage]] = {
        j: [AckMessage(l) for l in graph.potential_out(j) if l in remaining_set]
        for j in remaining
    }

    # Phase 3: detection reads the previous ack vector before weights replace it.
    hbar0: dict[int, int] = {}
    assignments = {}
    states: dict[int, AgentState] = {}
    for j in remaining:
        state = world.agents[j]
        acked = frozenset(m.sender for m in acks[j])
        hbar0[j] = detect_departures(state.prev_acks, acked)
        assignments[j], states[j] = assign_push_weights(
            state, graph.potential_out(j), acked
        )

    # Phase 4: flood the detection bits over the currently active edges.
    # Joiners relay with an initial 0; they can spread a detection but never
    # create one.
    in_neighbors = {
        j: [i for i in graph.potential_in(j) if activation.is_active(i)]
        for j in active_now
    }
    values = {j: hbar0.get(j, 0) for j in active_now}
    for _ in range(graph.diameter_bound):
        inbox = {
            j: [DetectionMessage(i, values[i]) for i in in_neighbors[j]]
            for j in active_now
        }
        values = {
            j: max_consensus_step(values[j], (m.hbar for m in inbox[j]))
            for j in active_now
        }
    flags = {j: values[j] if reset_enabled else 0 for j in remaining}

    # Phase 5: data exchange among the remaining agents and the update.
    inboxes: dict[int, list[DataMessage]] = {j: [] for j in remaining}
    for j in remaining:
        for msg in make_outbound(states[j], assignments[j].weight, assignments[j].active_out):
            inboxes[msg.target].append(msg)
    next_states: dict[int, AgentState] = {}
    for j in remaining:
        inbound = sorted(inboxes[j], key=lambda m: m.sender)
        try:
            next_states[j] = apply_update(
                states[j],
                scaled_triple(states[j], assignments[j].weight),
                inbound,
                flags[j],
                cost_next=states[j].cost,
            )
        except SimulationError as exc:
            raise SimulationError(f"round {world.round + 1}: {exc}") from exc

    agents = {**joiners, **next_states}
    partition = clusters(active_subgraph(graph, activation), active_now)
    return WorldState(
        round=world.round + 1,
        activation=activation,
        prev_activation=world.activation,
        agents=agents,
        partition=partition,
    )


def resolve_draws(scenario: "Scenario") -> tuple[dict[int, float], list[ChurnEvent]]:
    """Materialize every "random" initial estimate with one seeded generator.

    Draw order is fixed: initially active agents in ascending id, then join
    events in (round, agent) order.  Join events without an explicit cost
    inherit the agent's configured one.
    """
    rng = random.Random(scenario.seed)
    lo, hi = X_HAT_RANGE
    initial: dict[int, float] = {}
    for aid in sorted(scenario.agents):
        spec = scenario.agents[aid]
        if not spec.active:
            continue
        initial[aid] = rng.uniform(lo, hi) if spec.x_hat == "random" else float(spec.x_hat)
    events: list[ChurnEvent] = []
    for ev in sorted(scenario.events, key=lambda e: (e.round, e.agent)):
        if ev.kind == JOIN:
            x_hat = ev.x_hat if ev.x_hat is not None else "random"
            if x_hat == "random":
                x_hat = rng.uniform(lo, hi)
            cost = ev.cost if ev.cost is not None else scenario.agents[ev.agent].cost
            ev = replace(ev, x_hat=float(x_hat), cost=cost)
        events.append(ev)
    return initial, events


def _cluster_records(
    world: WorldState, cache: dict[tuple, float]
) -> tuple[ClusterRecord, ...]:
    records = []
    for members in world.partition.clusters:
        ordered = tuple(sorted(members))
        states = [world.agents[j] for j in ordered]
        key = tuple((j, s.cost.valid_from) for j, s in zip(ordered, states))
        if key not in cache:
            cache[key] = cluster_minimizer(
                ClusterObjective(ordered, tuple(s.cost for s in states))
            )
        minimizer = cache[key]
        error = math.sqrt(math.fsum((s.z - minimizer) ** 2 for s in states))
        residual = abs(
            math.fsum(s.w for s in states)
            - math.fsum(gradient(s.cost, s.z) for s in states)
        )
        records.append(ClusterRecord(ordered, minimizer, error, residual))
    return tuple(records)


def _round_record(world: WorldState, cache: dict[tuple, float]) -> RoundRecord:
    rows = tuple(
        AgentRecord(j, s.x, s.y, s.z, s.w, s.h)
        for j, s in sorted(world.agents.items())
    )
    return RoundRecord(world.round, world.active_ids(), rows, _cluster_records(world, cache))


def run(scenario: "Scenario", reset_enabled: bool = True) -> Trace:
    """Run the scenario for rounds 0..T and record the full trace.

    Deterministic: identical scenario and seed produce bit-identical traces.
    """
    graph = scenario.graph
    initial_xhat, events = resolve_draws(scenario)
    initial = {
        aid: (initial_xhat[aid], scenario.agents[aid].cost) for aid in initial_xhat
    }
    world = initial_world(graph, initial, scenario.gamma)
    by_round: dict[int, list[ChurnEvent]] = {}
    for ev in events:
        by_round.setdefault(ev.round, []).append(ev)

    cache: dict[tuple, float] = {}
    records = [_round_record(world, cache)]
    for k in range(1, scenario.rounds + 1):
        world = run_round(
            world, by_round.get(k, ()), graph, scenario.gamma, reset_enabled=reset_enabled
        )
        records.append(_round_record(world, cache))
    return Trace(
        records=records,
        seed=scenario.seed,
        gamma=scenario.gamma,
        node_count=graph.node_count,
        diameter_bound=graph.diameter_bound,
    )
