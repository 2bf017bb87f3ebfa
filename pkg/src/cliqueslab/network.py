"""Deterministic in-process message fabric with adversarial interposition.

Every message goes through one global FIFO queue and is logged when it is
dequeued.  Traffic to or from a party in the active policy's ``controlled``
set is handed to the attacker instead of the recipient.  Honest parties
never see transcript kinds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from collections import deque
from typing import Optional

from .errors import AuthorizationError, ConfigurationError, LabError, NonterminationError
from .group_action import GroupAction
from .protocol import (BROADCAST, BroadcastC, Chain, KeyMaterial, Message, ParticipantState,
                       Refresh, Response, build_refresh, participant_step)

ATTACKER = "attacker"

DELIVERED = "delivered"
INTERCEPTED = "intercepted"
FORGED = "forged"
DROPPED = "dropped"

_STEP_LABELS = {"chain": "(1)", "broadcast_c": "(2)", "response": "(4)",
                "key_material": "(5)", "refresh": "refresh"}


def endpoint_name(ep) -> str:
    if ep == ATTACKER or ep == BROADCAST:
        return ep
    return f"U{ep}"


def parse_endpoint(name: str):
    if name in (ATTACKER, BROADCAST):
        return name
    return int(name[1:])


def encode_payload(action: GroupAction, msg: Message) -> str:
    if isinstance(msg, (Chain, Response)):
        return f"{msg.index}|{action.encode(msg.point)}"
    if isinstance(msg, BroadcastC):
        return action.encode(msg.point)
    if isinstance(msg, KeyMaterial):
        return action.encode_many(msg.points)
    return f"{msg.initiator}|{action.encode_many(msg.points)}"


def decode_message(action: GroupAction, msg_type: str, payload: str) -> Message:
    if msg_type == "chain":
        i, pt = payload.split("|")
        return Chain(int(i), action.decode(pt))
    if msg_type == "response":
        i, pt = payload.split("|")
        return Response(int(i), action.decode(pt))
    if msg_type == "broadcast_c":
        return BroadcastC(action.decode(payload))
    if msg_type == "key_material":
        return KeyMaterial(action.decode_many(payload))
    if msg_type == "refresh":
        c, pts = payload.split("|")
        return Refresh(int(c), action.decode_many(pts))
    raise ValueError(f"unknown message type {msg_type!r}")


@dataclass(frozen=True)
class TranscriptEntry:
    seq: int
    kind: str
    sender: object  # true origin
    claimed_from: object
    to: object
    message: Message
    annotation: str = ""

    def to_record(self, action: GroupAction) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "from": endpoint_name(self.sender),
            "claimed_from": endpoint_name(self.claimed_from),
            "to": endpoint_name(self.to),
            "msg_type": self.message.msg_type,
            "payload": encode_payload(action, self.message),
            "annotation": self.annotation,
        }


def transcript_to_jsonl(transcript, action: GroupAction) -> str:
    return "".join(json.dumps(e.to_record(action), ensure_ascii=False) + "\n"
                   for e in transcript)


def transcript_from_jsonl(text: str, action: GroupAction) -> list:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        r = json.loads(line)
        out.append(TranscriptEntry(
            seq=r["seq"], kind=r["kind"], sender=parse_endpoint(r["from"]),
            claimed_from=parse_endpoint(r["claimed_from"]), to=parse_endpoint(r["to"]),
            message=decode_message(action, r["msg_type"], r["payload"]),
            annotation=r["annotation"]))
    return out


@dataclass
class InterpositionPolicy:
    controlled: frozenset = frozenset()
    active: bool = False

    def diverts(self, *endpoints) -> bool:
        return self.active and any(ep in self.controlled for ep in endpoints)


@dataclass
class _Pending:
    kind: str
    sender: object
    claimed_from: object
    to: object
    message: Message
    annotation: str


class AttackerPort:
    """The only handle an attacker gets on the network: forging, nothing else."""

    def __init__(self, network: "Network"):
        self._net = network
        self.n = network.n
        self.action = network.action

    def forge_as(self, claimed_sender, to, msg: Message, annotation: str = "") -> None:
        self._net.forge_as(ATTACKER, claimed_sender, to, msg, annotation)

    def forward(self, entry: TranscriptEntry, to, annotation: str = "") -> None:
        """Pass an intercepted message on unchanged, under its original sender."""
        self.forge_as(entry.claimed_from, to, entry.message, annotation)

    @property
    def controlled(self) -> frozenset:
        return self._net.policy.controlled


class Network:
    def __init__(self, action: GroupAction, n: int,
                 policy: Optional[InterpositionPolicy] = None,
                 max_deliveries: Optional[int] = None):
        self.action = action
        self.n = n
        self.policy = policy or InterpositionPolicy()
        self.max_deliveries = max_deliveries if max_deliveries is not None else 10 * n * n
        self.transcript: list[TranscriptEntry] = []
        self._endpoints: set = set()
        self._parties: dict[int, ParticipantState] = {}
        self._attacker = None
        self._queue: deque[_Pending] = deque()

    # registration

    def register(self, endpoint) -> None:
        if endpoint in self._endpoints:
            raise ConfigurationError("endpoint", f"{endpoint_name(endpoint)} already registered")
        if endpoint != ATTACKER and not (isinstance(endpoint, int) and 1 <= endpoint <= self.n):
            raise ConfigurationError("endpoint", f"invalid endpoint {endpoint!r}")
        self._endpoints.add(endpoint)

    def add_participant(self, state: ParticipantState) -> None:
        self.register(state.id)
        self._parties[state.id] = state

    def add_attacker(self, attacker) -> AttackerPort:
        """Register ``attacker``; it must provide ``on_intercept(entry) -> str``."""
        self.register(ATTACKER)
        self._attacker = attacker
        return AttackerPort(self)

    @property
    def endpoints(self) -> frozenset:
        return frozenset(self._endpoints)

    def _require(self, *endpoints) -> None:
        for ep in endpoints:
            if ep not in self._endpoints:
                raise ConfigurationError("endpoint", f"{endpoint_name(ep)} is not registered")

    # sending

    def unicast(self, sender, to, msg: Message, annotation: str = "") -> None:
        self._require(sender, to)
        kind = INTERCEPTED if self.policy.diverts(sender, to) else DELIVERED
        self._queue.append(_Pending(kind, sender, sender, to, msg, annotation))

    def broadcast(self, sender, msg: Message, annotation: str = "") -> None:
        self._require(sender)
        if self.policy.diverts(sender):
            self._queue.append(_Pending(INTERCEPTED, sender, sender, BROADCAST, msg, annotation))
            return
        for to in self._others(sender):
            self.unicast(sender, to, msg, annotation)

    def forge_as(self, caller, claimed_sender, to, msg: Message, annotation: str = "") -> None:
        if caller != ATTACKER:
            raise AuthorizationError(f"{endpoint_name(caller)} may not forge messages")
        self._require(ATTACKER, claimed_sender)
        targets = self._others(claimed_sender) if to == BROADCAST else [to]
        self._require(*targets)
        if not self.policy.active and not all(t in self.policy.controlled for t in targets):
            raise AuthorizationError("forging requires an active interposition policy")
        for t in targets:
            self._queue.append(_Pending(FORGED, ATTACKER, claimed_sender, t, msg, annotation))

    def _others(self, sender) -> list:
        return [p for p in sorted(self._parties) if p != sender]

    # driving participants

    def start(self, party: int = 1) -> None:
        self._dispatch(party, None, "")

    def initiate_refresh(self, party: int, new_secret: int, annotation: str = "") -> Refresh:
        msg, state = build_refresh(self._parties[party], new_secret)
        self._parties[party] = state
        self.broadcast(party, msg, annotation)
        return msg

    def _dispatch(self, party: int, msg: Optional[Message], annotation: str) -> bool:
        before = self._parties[party]
        state, outputs = participant_step(before, msg)
        self._parties[party] = state
        for dest, out in outputs:
            label = annotation if annotation.startswith("fork:") else _STEP_LABELS[out.msg_type]
            if dest == BROADCAST:
                self.broadcast(party, out, label)
            else:
                self.unicast(party, dest, out, label)
        return len(state.violations) == len(before.violations)

    def run_until_quiescent(self) -> list:
        deliveries = 0
        while self._queue:
            deliveries += 1
            if deliveries > self.max_deliveries:
                raise NonterminationError(
                    f"more than {self.max_deliveries} deliveries without quiescence")
            item = self._queue.popleft()
            seq = len(self.transcript)
            entry = TranscriptEntry(seq, item.kind, item.sender, item.claimed_from,
                                    item.to, item.message, item.annotation)
            if item.kind == INTERCEPTED:
                if self._attacker is None:
                    raise LabError("message diverted but no attacker is attached")
                label = self._attacker.on_intercept(entry)
                if label:
                    entry = replace(entry, annotation=label)
            else:
                accepted = self._dispatch(item.to, item.message, item.annotation)
                if not accepted and item.kind == DELIVERED:
                    entry = replace(entry, kind=DROPPED)
            self.transcript.append(entry)
        return self.transcript

    # test and report inspection hook; never handed to the attacker

    def inspect(self, party: int) -> ParticipantState:
        return self._parties[party]

    def parties(self) -> dict:
        return dict(self._parties)

    def snapshot(self) -> dict:
        if self._queue:
            raise LabError("cannot snapshot with messages in flight")
        return dict(self._parties)

    def restore(self, snap: dict) -> None:
        if self._queue:
            raise LabError("cannot restore with messages in flight")
        self._parties = dict(snap)
