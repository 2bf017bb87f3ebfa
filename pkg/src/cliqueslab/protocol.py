"""Honest participants of the generalized IKA.2 agreement and key refresh.

Parties are numbered 1..n.  The upflow runs U_1 -> ... -> U_{n-1}, U_{n-1}
broadcasts C_{n-1}, every U_i (i < n) answers U_n with D_i = g_i^{-1} C_{n-1},
and U_n broadcasts the key material list {g_n D_1, ..., g_n D_{n-1}, C_{n-1}}.

``participant_step`` is a pure transition function over ``ParticipantState``
values.  Out-of-phase or malformed input never raises; it is dropped and
recorded in ``state.violations``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .errors import InvalidPointError, ProtocolError
from .group_action import GroupAction, SetPoint

BROADCAST = "broadcast"


@dataclass(frozen=True)
class Chain:
    index: int
    point: SetPoint
    msg_type = "chain"


@dataclass(frozen=True)
class BroadcastC:
    point: SetPoint
    msg_type = "broadcast_c"


@dataclass(frozen=True)
class Response:
    index: int
    point: SetPoint
    msg_type = "response"


@dataclass(frozen=True)
class KeyMaterial:
    points: tuple
    msg_type = "key_material"


@dataclass(frozen=True)
class Refresh:
    initiator: int
    points: tuple
    msg_type = "refresh"


Message = Union[Chain, BroadcastC, Response, KeyMaterial, Refresh]


def message_points(msg: Message) -> tuple:
    if isinstance(msg, (KeyMaterial, Refresh)):
        return tuple(msg.points)
    return (msg.point,)


class Phase(enum.Enum):
    AWAIT_CHAIN = "AwaitChain"
    AWAIT_BROADCAST = "AwaitBroadcast"
    AWAIT_RESPONSES = "AwaitResponses"
    AWAIT_KEY_MATERIAL = "AwaitKeyMaterial"
    ESTABLISHED = "Established"


@dataclass(frozen=True)
class ParticipantState:
    id: int
    n: int
    secret: int
    action: GroupAction = field(repr=False)
    phase: Phase = Phase.AWAIT_CHAIN
    # the value this user believes is C_{n-1}
    received_c: Optional[SetPoint] = None
    sent_response: Optional[SetPoint] = None
    # U_n only: step-(4) responses keyed by claimed sender
    responses: tuple = ()
    step5: Optional[tuple] = None
    memory: Optional[tuple] = None
    key: Optional[SetPoint] = None
    refresh_checks: tuple = ()
    violations: tuple = ()

    @property
    def base(self) -> SetPoint:
        return self.action.base

    def mem(self, k: int) -> SetPoint:
        """Memory entry at 1-based position k."""
        return self.memory[k - 1]


def new_participant(action: GroupAction, index: int, n: int, secret: int) -> ParticipantState:
    if n < 3:
        raise ProtocolError(f"group size must be at least 3, got {n}")
    if not 1 <= index <= n:
        raise ProtocolError(f"party index {index} outside [1, {n}]")
    action.check_scalar(secret)
    phase = Phase.AWAIT_BROADCAST if index == n else Phase.AWAIT_CHAIN
    return ParticipantState(id=index, n=n, secret=secret, action=action, phase=phase)


@dataclass(frozen=True)
class CheckReport:
    """Local consistency checks; ``None`` marks a check that does not apply."""

    party: int
    v1_last_element: Optional[bool] = None
    v2_no_echoed_broadcast: Optional[bool] = None
    v3_not_returned: Optional[bool] = None
    v4_refresh_position: Optional[bool] = None

    def as_dict(self) -> dict:
        return {"V1": self.v1_last_element, "V2": self.v2_no_echoed_broadcast,
                "V3": self.v3_not_returned, "V4": self.v4_refresh_position}

    @property
    def passed(self) -> bool:
        return all(v is not False for v in self.as_dict().values())


def compute_chain(action: GroupAction, secret: int, prev: SetPoint) -> SetPoint:
    return action.act(secret, prev)


def compute_response(action: GroupAction, secret: int, c_last: SetPoint) -> SetPoint:
    return action.act(action.invert(secret), c_last)


def assemble_key_material(action: GroupAction, secret_n: int, responses, c_last: SetPoint,
                          n: Optional[int] = None) -> tuple:
    """Step (5): U_n's list, ``responses`` ordered by sender index 1..n-1."""
    responses = list(responses)
    expected = len(responses) + 1 if n is None else n
    if expected < 3 or len(responses) != expected - 1:
        raise ProtocolError(f"expected {expected - 1} responses, got {len(responses)}")
    action.check_point(c_last)
    return tuple(action.act(secret_n, d) for d in responses) + (c_last,)


def derive_initial_key(action: GroupAction, secret: int, material: SetPoint) -> SetPoint:
    return action.act(secret, material)


def build_refresh(state: ParticipantState, new_secret: int):
    """Start a key refresh from ``state``; returns ``(Refresh, new_state)``."""
    if state.phase is not Phase.ESTABLISHED:
        raise ProtocolError(f"U_{state.id} cannot refresh in phase {state.phase.value}")
    act = state.action.act
    c = state.id
    points = tuple(e if k == c else act(new_secret, e)
                   for k, e in enumerate(state.memory, start=1))
    new_state = replace(state,
                        secret=state.action.compose(new_secret, state.secret),
                        key=act(new_secret, state.key),
                        memory=points)
    return Refresh(c, points), new_state


def apply_refresh(state: ParticipantState, msg: Refresh) -> ParticipantState:
    if state.phase is not Phase.ESTABLISHED:
        raise ProtocolError(f"U_{state.id} received a refresh in phase {state.phase.value}")
    if len(msg.points) != state.n:
        raise ProtocolError(f"refresh list has {len(msg.points)} entries, expected {state.n}")
    if not 1 <= msg.initiator <= state.n:
        raise ProtocolError(f"refresh initiator {msg.initiator} outside [1, {state.n}]")
    for x in msg.points:
        state.action.check_point(x)
    c = msg.initiator
    # V4 is recorded, never fatal
    v4 = msg.points[c - 1] == state.mem(c)
    return replace(state,
                   key=state.action.act(state.secret, msg.points[state.id - 1]),
                   memory=tuple(msg.points),
                   refresh_checks=state.refresh_checks + ((c, v4),))


def _violation(state: ParticipantState, note: str):
    return replace(state, violations=state.violations + (note,)), []


def participant_step(state: ParticipantState, incoming: Optional[Message] = None):
    """Advance one participant; returns ``(new_state, [(destination, msg), ...])``.

    ``destination`` is a party index or ``BROADCAST``.
    """
    try:
        return _step(state, incoming)
    except (ProtocolError, InvalidPointError) as exc:
        kind = type(incoming).__name__ if incoming is not None else "start"
        return _violation(state, f"{kind} dropped: {exc}")


def _step(s: ParticipantState, msg):
    a, n, i = s.action, s.n, s.id
    ph = s.phase

    if msg is None:
        if i == 1 and ph is Phase.AWAIT_CHAIN:
            c1 = compute_chain(a, s.secret, a.base)
            return replace(s, phase=Phase.AWAIT_BROADCAST), [(2, Chain(1, c1))]
        raise ProtocolError("spontaneous start is only valid for U_1 before the upflow")

    if isinstance(msg, Chain) and ph is Phase.AWAIT_CHAIN and i > 1:
        if msg.index != i - 1:
            raise ProtocolError(f"chain from U_{msg.index}, expected U_{i - 1}")
        c_i = compute_chain(a, s.secret, msg.point)
        if i < n - 1:
            return replace(s, phase=Phase.AWAIT_BROADCAST), [(i + 1, Chain(i, c_i))]
        # U_{n-1}: broadcast C_{n-1}, then its own step-(4) response
        d = compute_response(a, s.secret, c_i)
        new = replace(s, phase=Phase.AWAIT_KEY_MATERIAL, received_c=c_i, sent_response=d)
        return new, [(BROADCAST, BroadcastC(c_i)), (n, Response(i, d))]

    if isinstance(msg, BroadcastC) and ph is Phase.AWAIT_BROADCAST:
        a.check_point(msg.point)
        if i == n:
            key = derive_initial_key(a, s.secret, msg.point)
            return replace(s, phase=Phase.AWAIT_RESPONSES, received_c=msg.point, key=key), []
        d = compute_response(a, s.secret, msg.point)
        new = replace(s, phase=Phase.AWAIT_KEY_MATERIAL, received_c=msg.point, sent_response=d)
        return new, [(n, Response(i, d))]

    if isinstance(msg, Response) and ph is Phase.AWAIT_RESPONSES:
        if not 1 <= msg.index <= n - 1:
            raise ProtocolError(f"response index {msg.index} outside [1, {n - 1}]")
        if any(j == msg.index for j, _ in s.responses):
            raise ProtocolError(f"duplicate response from U_{msg.index}")
        a.check_point(msg.point)
        responses = tuple(sorted(s.responses + ((msg.index, msg.point),),
                                 key=lambda r: r[0]))
        if len(responses) < n - 1:
            return replace(s, responses=responses), []
        material = assemble_key_material(a, s.secret, [d for _, d in responses], s.received_c, n)
        new = replace(s, responses=responses, step5=material, memory=material,
                      phase=Phase.ESTABLISHED)
        return new, [(BROADCAST, KeyMaterial(material))]

    if isinstance(msg, KeyMaterial) and ph is Phase.AWAIT_KEY_MATERIAL:
        if len(msg.points) != n:
            raise ProtocolError(f"key material has {len(msg.points)} entries, expected {n}")
        for x in msg.points:
            a.check_point(x)
        key = derive_initial_key(a, s.secret, msg.points[i - 1])
        return replace(s, step5=tuple(msg.points), memory=tuple(msg.points), key=key,
                       phase=Phase.ESTABLISHED), []

    if isinstance(msg, Refresh) and ph is Phase.ESTABLISHED:
        return apply_refresh(s, msg), []

    raise ProtocolError(f"out of phase ({ph.value})")


def run_checks(state: ParticipantState) -> CheckReport:
    if state.phase is not Phase.ESTABLISHED:
        raise ProtocolError(f"U_{state.id} is not established")
    v4 = all(ok for _, ok in state.refresh_checks) if state.refresh_checks else None
    if state.id == state.n:
        v2 = all(d != state.received_c for _, d in state.responses)
        return CheckReport(state.id, v2_no_echoed_broadcast=v2, v4_refresh_position=v4)
    v1 = state.step5[-1] == state.received_c
    v3 = state.step5[state.id - 1] != state.sent_response
    return CheckReport(state.id, v1_last_element=v1, v3_not_returned=v3, v4_refresh_position=v4)
