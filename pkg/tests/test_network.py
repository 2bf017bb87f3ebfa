from collections import Counter

import pytest

from cliqueslab.errors import AuthorizationError, ConfigurationError, LabError, NonterminationError
from cliqueslab.network import (ATTACKER, DELIVERED, DROPPED, FORGED, INTERCEPTED,
                                InterpositionPolicy, Network, transcript_from_jsonl,
                                transcript_to_jsonl)
from cliqueslab.protocol import BroadcastC, Chain, Response, message_points, new_participant


def build(action, secrets, policy=None):
    n = len(secrets)
    net = Network(action, n, policy)
    for i, g in enumerate(secrets, start=1):
        net.add_participant(new_participant(action, i, n, g))
    return net


class Recorder:
    """Attacker stand-in that only records and labels what it sees."""

    def __init__(self):
        self.seen = []

    def on_intercept(self, entry):
        self.seen.append(entry)
        return "seen"


def test_registration_errors(modexp):
    net = build(modexp, [3, 4, 5])
    with pytest.raises(ConfigurationError):
        net.add_participant(new_participant(modexp, 2, 3, 4))
    with pytest.raises(ConfigurationError):
        net.register(7)
    net.add_attacker(Recorder())
    with pytest.raises(ConfigurationError):
        net.register(ATTACKER)
    with pytest.raises(ConfigurationError):
        Network(modexp, 3).unicast(1, 2, Chain(1, 8))


def test_honest_transcript_shape(modexp):
    net = build(modexp, [3, 4, 5])
    net.start(1)
    t = net.run_until_quiescent()
    assert len(t) == 7
    assert [e.seq for e in t] == list(range(7))
    assert {e.kind for e in t} == {DELIVERED}
    assert [(e.sender, e.to, e.message.msg_type) for e in t] == [
        (1, 2, "chain"),
        (2, 1, "broadcast_c"), (2, 3, "broadcast_c"), (2, 3, "response"),
        (1, 3, "response"),
        (3, 1, "key_material"), (3, 2, "key_material"),
    ]
    assert [e.annotation for e in t] == ["(1)", "(2)", "(2)", "(4)", "(4)", "(5)", "(5)"]


def test_empty_system_is_quiescent(modexp):
    net = build(modexp, [3, 4, 5])
    assert net.run_until_quiescent() == []


def test_determinism(action):
    secrets = [2, 3, 5, 7]
    runs = []
    for _ in range(2):
        net = build(action, secrets)
        net.start(1)
        runs.append(transcript_to_jsonl(net.run_until_quiescent(), action))
    assert runs[0] == runs[1]


def test_livelock_guard(modexp):
    net = build(modexp, [3, 4, 5])
    net.max_deliveries = 3
    net.start(1)
    with pytest.raises(NonterminationError):
        net.run_until_quiescent()


def test_default_guard_is_quadratic(modexp):
    assert Network(modexp, 4).max_deliveries == 160


def test_forge_authorization(modexp):
    net = build(modexp, [3, 4, 5], InterpositionPolicy(frozenset({2, 3}), active=False))
    port = net.add_attacker(Recorder())
    with pytest.raises(AuthorizationError):
        net.forge_as(1, 2, 3, BroadcastC(2))
    with pytest.raises(AuthorizationError):
        port.forge_as(2, 1, BroadcastC(2))   # U_1 is not controlled and policy inactive
    port.forge_as(2, 3, BroadcastC(2))        # a controlled target is allowed
    net.policy.active = True
    port.forge_as(2, 1, BroadcastC(2))
    t = net.run_until_quiescent()
    assert [(e.kind, e.sender, e.claimed_from, e.to) for e in t] == [
        (FORGED, ATTACKER, 2, 3), (FORGED, ATTACKER, 2, 1)]


def test_port_exposes_no_state(modexp):
    net = build(modexp, [3, 4, 5])
    port = net.add_attacker(Recorder())
    public = {name for name in dir(port) if not name.startswith("_")}
    assert public == {"forge_as", "forward", "n", "action", "controlled"}


def test_interception_routing(modexp):
    policy = InterpositionPolicy(frozenset({2, 3}), active=True)
    net = build(modexp, [3, 4, 5], policy)
    rec = Recorder()
    net.add_attacker(rec)
    net.start(1)
    t = net.run_until_quiescent()
    # the chain into U_2 is diverted; nothing else moves because the recorder forwards nothing
    assert [(e.kind, e.to, e.annotation) for e in t] == [(INTERCEPTED, 2, "seen")]
    assert rec.seen[0].message == Chain(1, 8)
    assert net.inspect(2).phase.value == "AwaitChain"


def test_broadcast_from_controlled_sender_is_one_entry(modexp):
    policy = InterpositionPolicy(frozenset({3}), active=True)
    net = build(modexp, [3, 4, 5], policy)
    net.add_attacker(Recorder())
    net.broadcast(3, BroadcastC(2))
    t = net.run_until_quiescent()
    assert len(t) == 1 and t[0].to == "broadcast" and t[0].kind == INTERCEPTED


def test_diversion_without_attacker(modexp):
    net = build(modexp, [3, 4, 5], InterpositionPolicy(frozenset({2}), active=True))
    net.start(1)
    with pytest.raises(LabError):
        net.run_until_quiescent()


def test_rejected_delivery_is_marked_dropped(modexp):
    net = build(modexp, [3, 4, 5])
    net.unicast(1, 3, Response(1, 16))   # U_3 still awaits C_{n-1}
    t = net.run_until_quiescent()
    assert t[0].kind == DROPPED
    assert net.inspect(3).violations


def test_no_leakage_and_conservation(modexp):
    net = build(modexp, [3, 4, 5])
    net.start(1)
    t = net.run_until_quiescent()
    points = [p for e in t for p in message_points(e.message)]
    # multiset of transmitted points for the reference run
    assert Counter(points) == Counter([8, 2, 2, 8, 16, 6, 16, 2, 6, 16, 2])
    assert 9 not in points
    assert all(e.kind in (DELIVERED,) for e in t)
    assert sum(1 for e in t if e.to == 3) == 3


def test_snapshot_restore(modexp):
    net = build(modexp, [3, 4, 5])
    net.start(1)
    net.run_until_quiescent()
    snap = net.snapshot()
    net.initiate_refresh(1, 6)
    with pytest.raises(LabError):
        net.snapshot()
    net.run_until_quiescent()
    assert net.inspect(2).key == 3
    net.restore(snap)
    assert net.inspect(2).key == 9


def test_jsonl_round_trip(action):
    net = build(action, [2, 3, 4, 5])
    net.start(1)
    t = net.run_until_quiescent()
    net.initiate_refresh(2, 3)
    t = net.run_until_quiescent()
    text = transcript_to_jsonl(t, action)
    back = transcript_from_jsonl(text, action)
    assert back == t
    assert transcript_to_jsonl(back, action) == text
    first = text.splitlines()[0]
    assert first.startswith('{"seq": 0, "kind": "delivered", "from": "U1", "claimed_from": "U1"')
