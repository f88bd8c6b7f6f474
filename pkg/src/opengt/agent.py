"""Per-agent protocol state machine.

Each operation is a pure function from (state, inbound messages) to
(state, outbound messages); the engine sequences them into rounds.  An
agent keeps a numerator ``x``, a positive push-sum weight ``y``, the ratio
estimate ``z = x/y``, a gradient tracker ``w``, and a one-bit departure flag
``h`` agreed through max-consensus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

from .costs import CostFunction, gradient
from .errors import ConfigurationError, SimulationError


@dataclass(frozen=True)
class AgentState:
    id: int
    x: float
    y: float
    z: float
    w: float
    h: int
    prev_acks: frozenset[int]
    cost: CostFunction
    gamma: float


@dataclass(frozen=True)
class DataMessage:
    """Scaled triple sent on a directed data link; ``h`` rides along for
    completeness but receivers act on the max-consensus outcome instead."""

    sender: int
    target: int
    sx: float
    sy: float
    sw: float
    h: int


@dataclass(frozen=True)
class AckMessage:
    """One-bit presence signal on the reverse control channel; absence of a
    message encodes 0, so only active agents ever send one."""

    sender: int
    bit: int = 1


@dataclass(frozen=True)
class DetectionMessage:
    """One detection bit relayed during the flood between optimization rounds."""

    sender: int
    hbar: int


@dataclass(frozen=True)
class PushAssignment:
    out_degree: int
    weight: float
    active_out: frozenset[int]


def init_arrival(agent_id: int, x_hat: float, cost: CostFunction, gamma: float) -> AgentState:
    """State of an agent that (re-)joins: estimate at its initial guess,
    unit weight, tracker seeded with its own gradient, flag clear."""
    if gamma <= 0:
        raise ConfigurationError(f"step size must be positive, got {gamma}")
    x_hat = float(x_hat)
    return AgentState(
        id=agent_id,
        x=x_hat,
        y=1.0,
        z=x_hat,
        w=gradient(cost, x_hat),
        h=0,
        prev_acks=frozenset(),
        cost=cost,
        gamma=float(gamma),
    )


def detect_departures(prev_acks: frozenset[int], curr_acks: frozenset[int]) -> int:
    """1 iff some out-neighbor acked last round but is silent now.

    Arrivals never trigger (they were not in ``prev_acks``), and a freshly
    joined agent holds an empty ``prev_acks`` so it cannot fire spuriously.
    """
    return 1 if any(l not in curr_acks for l in prev_acks) else 0


def assign_push_weights(
    state: AgentState, potential_out: Iterable[int], acks_received: Iterable[int]
) -> tuple[PushAssignment, AgentState]:
    """Out-degree from the received acks, the common weight 1/(1+degree) for
    every acked link and for self, and the state with ``prev_acks`` replaced.

    Callers must run :func:`detect_departures` on the old ``prev_acks`` first;
    both rounds' ack vectors are needed simultaneously.
    """
    potential = frozenset(potential_out)
    acked = frozenset(acks_received)
    if not acked <= potential:
        raise ConfigurationError(
            f"agent v{state.id}: acks {sorted(acked - potential)} are not potential out-neighbors"
        )
    degree = len(acked)
    assignment = PushAssignment(
        out_degree=degree,
        weight=1.0 / (1 + degree),
        active_out=acked,
    )
    return assignment, replace(state, prev_acks=acked)


def max_consensus_step(own: int, incoming: Iterable[int]) -> int:
    """One synchronous flood step: maximum of the own bit and all received bits."""
    result = own
    for bit in incoming:
        if bit > result:
            result = bit
    return result


def scaled_triple(state: AgentState, weight: float) -> tuple[float, float, float]:
    """The weighted share ``(w*(x - gamma*w_tracker), w*y, w*w_tracker)``;
    used both as the self-contribution and as the payload of each message."""
    return (
        weight * (state.x - state.gamma * state.w),
        weight * state.y,
        weight * state.w,
    )


def make_outbound(
    state: AgentState, weight: float, active_out: Iterable[int]
) -> list[DataMessage]:
    """One message per acked out-neighbor; the self share stays local and is
    never put on the wire."""
    if not 0.0 < weight <= 1.0:
        raise ConfigurationError(f"push weight must be in (0, 1], got {weight}")
    sx, sy, sw = scaled_triple(state, weight)
    return [
        DataMessage(sender=state.id, target=l, sx=sx, sy=sy, sw=sw, h=state.h)
        for l in sorted(active_out)
    ]


def apply_update(
    state: AgentState,
    self_contribution: tuple[float, float, float],
    inbound: Iterable[DataMessage],
    h_k: int,
    cost_next: CostFunction,
) -> AgentState:
    """Advance one optimization round from the mixed shares.

    With ``h_k = 1`` the tracker resets to the new local gradient exactly,
    discarding the mixed tracker values; otherwise it follows the usual
    gradient-tracking correction.
    """
    messages = list(inbound)
    x_next = math.fsum([self_contribution[0], *(m.sx for m in messages)])
    y_next = math.fsum([self_contribution[1], *(m.sy for m in messages)])
    if y_next <= 0.0:
        raise SimulationError(
            f"agent v{state.id}: push-sum weight became non-positive ({y_next})"
        )
    z_next = x_next / y_next
    g_next = gradient(cost_next, z_next)
    if h_k:
        w_next = g_next
    else:
        w_mixed = math.fsum([self_contribution[2], *(m.sw for m in messages)])
        w_next = g_next + (w_mixed - gradient(state.cost, state.z))
    return AgentState(
        id=state.id,
        x=x_next,
        y=y_next,
        z=z_next,
        w=w_next,
        h=h_k,
        prev_acks=state.prev_acks,
        cost=cost_next,
        gamma=state.gamma,
    )
