"""The active attack on IKA.2, its exit strategy, and the MITM conversion.

The attacker controls every link of U_{n-1} and U_n.  It is driven by the
network: ``on_intercept`` is called for each diverted message and returns the
attack-step label for the transcript.  The only outward handle it holds is an
``AttackerPort``; it never sees participant state.

Every forged point is logged with a derivation (an intercepted payload entry
or the public base point, plus the attacker scalars applied to it) so that
``audit_provenance`` can recompute it from the transcript alone.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .errors import SequencingError, UnsupportedInitiatorError
from .group_action import GroupAction, SetPoint
from .network import (BROADCAST, FORGED, INTERCEPTED, AttackerPort, InterpositionPolicy,
                      Network, TranscriptEntry)
from .protocol import (BroadcastC, Chain, KeyMaterial, Refresh, Response, message_points,
                       new_participant, run_checks)

ATTACK_STEPS = ("(a)", "(b)", "(c)", "(d)", "(e)", "(f)", "(g)", "(h)", "(i)", "(j)")


@dataclass(frozen=True)
class Known:
    """A point the attacker knows and how she came to know it."""

    point: SetPoint
    # ("entry", seq, index) into an intercepted payload, or ("base",)
    source: tuple
    scalars: tuple = ()


@dataclass
class AttackerState:
    ghat: int
    hhat: int
    fhat: int
    ghat_fixed: bool = False
    c_last: Optional[Known] = None        # C_{n-1}, step (b)
    c_prev: Optional[Known] = None        # C_{n-2}, step (c)
    decoys: list = field(default_factory=list)
    captured_f: Optional[list] = None     # U_n's step-(5) list, step (f)
    responses_h: dict = field(default_factory=dict)
    attack_key: Optional[SetPoint] = None
    current_key: Optional[SetPoint] = None
    done: set = field(default_factory=set)
    exit_rounds: int = 0
    mitm_initiator: Optional[int] = None
    mitm_keys: Optional[dict] = None
    lost_key: bool = False


class ActiveAttacker:
    def __init__(self, action: GroupAction, n: int, rng: random.Random,
                 ghat: Optional[int] = None, hhat: Optional[int] = None,
                 fhat: Optional[int] = None):
        if n < 3:
            raise SequencingError("(a)", f"attack needs n >= 3, got {n}")
        self.action = action
        self.n = n
        self.rng = rng
        pick = lambda v: action.check_scalar(v) if v is not None else action.random_scalar(rng, nontrivial=True)  # noqa: E731
        self.state = AttackerState(ghat=pick(ghat), hhat=pick(hhat), fhat=pick(fhat),
                                   ghat_fixed=ghat is not None)
        # labelled scalars referenced by derivations
        self.scalars: dict[str, int] = {}
        # one list of Known per forged transcript entry, in forging order
        self.provenance: list[list[Known]] = []
        self.port: Optional[AttackerPort] = None
        self.mode = "attack"

    def attach(self, network: Network) -> AttackerPort:
        self.port = network.add_attacker(self)
        return self.port

    # derivation helpers

    def _captured(self, entry: TranscriptEntry, index: int = 0) -> Known:
        return Known(message_points(entry.message)[index], ("entry", entry.seq, index))

    def _apply(self, label: str, value: int, k: Known) -> Known:
        self.scalars[label] = value
        return Known(self.action.act(value, k.point), k.source, k.scalars + (label,))

    def _fresh_orbit_point(self, label: str) -> Known:
        g = self.action.random_scalar(self.rng)
        self.scalars[label] = g
        return Known(self.action.act(g, self.action.base), ("base",), (label,))

    def _forge(self, claimed, to, make, knowns, label: str) -> None:
        msg = make(tuple(k.point for k in knowns))
        self.provenance.append(list(knowns))
        self.port.forge_as(claimed, to, msg, label)

    def _forward(self, entry: TranscriptEntry, to, label: str) -> None:
        knowns = [self._captured(entry, i) for i in range(len(message_points(entry.message)))]
        self.provenance.append(knowns)
        self.port.forward(entry, to, label)

    # network callback

    def on_intercept(self, entry: TranscriptEntry) -> str:
        n, msg = self.n, entry.message
        st = self.state
        if isinstance(msg, Chain):
            # (a): the upflow into U_{n-1} passes untouched
            self._forward(entry, entry.to, "(a)")
            st.done.add("(a)")
            return "(a)"
        if isinstance(msg, BroadcastC) and entry.sender == n - 1 and st.c_last is None:
            st.c_last = self._captured(entry)
            st.done.add("(b)")
            self._maybe_forge_d_e()
            return "(b)"
        if isinstance(msg, Response) and entry.sender == n - 1 and st.c_prev is None:
            st.c_prev = self._captured(entry)
            st.done.add("(c)")
            self._maybe_forge_d_e()
            return "(c)"
        if isinstance(msg, KeyMaterial) and entry.sender == n and st.captured_f is None:
            st.captured_f = [self._captured(entry, i) for i in range(n)]
            st.done.add("(f)")
            st.attack_key = st.current_key = self.compute_attack_key()
            self._forge_g()
            return "(f)"
        if isinstance(msg, Response) and entry.sender <= n - 2 and entry.to == n:
            if entry.sender in st.responses_h:
                raise SequencingError("(h)", f"duplicate response from U_{entry.sender}")
            st.responses_h[entry.sender] = self._captured(entry)
            if len(st.responses_h) == n - 2:
                st.done.add("(h)")
                self._forge_i()
            return "(h)"
        if isinstance(msg, Refresh):
            return self._on_refresh(entry)
        raise SequencingError("?", f"unexpected interception of {msg.msg_type} "
                                   f"from U_{entry.sender} in mode {self.mode}")

    # the attack, steps (b)-(i)

    def _maybe_forge_d_e(self) -> None:
        st, a, n = self.state, self.action, self.n
        if st.c_last is None or st.c_prev is None:
            return
        if not st.ghat_fixed:
            # keep the forged step-(2) value distinct from the C_{n-2} response
            while a.act(st.ghat, st.c_last.point) == st.c_prev.point:
                st.ghat = a.random_scalar(self.rng, nontrivial=True)
        forged_c = self._apply("ghat", st.ghat, st.c_last)
        self._forge(n - 1, n, lambda p: BroadcastC(p[0]), [forged_c], "(d)")
        st.done.add("(d)")

        st.decoys = []
        for j in range(1, n - 2):
            m = self._fresh_orbit_point(f"m{j}")
            while m.point == forged_c.point:
                m = self._fresh_orbit_point(f"m{j}")
            st.decoys.append(m)
        claimed = st.decoys + [st.c_prev, st.c_last]
        for j, k in enumerate(claimed, start=1):
            self._forge(j, n, lambda p, j=j: Response(j, p[0]), [k], "(e)")
        st.done.add("(e)")

    def compute_attack_key(self) -> SetPoint:
        st = self.state
        if st.captured_f is None:
            raise SequencingError("(f)", "U_n's key material was never intercepted")
        # C_n = g_n * C_{n-1} sits at position n-1 of U_n's list
        return self.action.act(st.ghat, st.captured_f[self.n - 2].point)

    def _forge_g(self) -> None:
        c_n = self.state.captured_f[self.n - 2]
        for i in range(1, self.n - 1):
            self._forge(self.n - 1, i, lambda p: BroadcastC(p[0]), [c_n], "(g)")
        self.state.done.add("(g)")

    def _forge_i(self) -> None:
        st, n = self.state, self.n
        e_prev = st.captured_f[n - 3]      # E_{n-1} = g_n * C_{n-2}
        c_n = st.captured_f[n - 2]
        body = [self._apply("ghat", st.ghat, st.responses_h[j]) for j in range(1, n - 1)]
        body.append(self._apply("ghat", st.ghat, e_prev))
        for i in range(1, n - 1):
            self._forge(n, i, KeyMaterial, body + [c_n], "(i)")
        # U_{n-1} expects its own broadcast value last
        self._forge(n, n - 1, KeyMaterial, body + [st.c_last], "(i)")
        st.done.add("(i)")
        st.done.add("(j)")

    def require_complete(self) -> None:
        for step in ATTACK_STEPS:
            if step not in self.state.done:
                raise SequencingError(step, "expected interception or forgery did not happen")

    # closed-form E_k from captured material

    def _e(self, k: int) -> Known:
        st, n = self.state, self.n
        if k <= n - 2:
            return st.responses_h[k]
        if k == n - 1:
            return st.captured_f[n - 3]
        return st.c_last

    def _c_n(self) -> Known:
        return self.state.captured_f[self.n - 2]

    def _scaled(self, k: Known, *labels) -> Known:
        for label in labels:
            k = self._apply(label, getattr(self.state, label), k)
        return k

    # exit strategy

    def forge_exit_round(self, which: int) -> None:
        st, n = self.state, self.n
        if "(j)" not in st.done:
            raise SequencingError("exit", "the key agreement attack has not completed")
        if which != st.exit_rounds + 1 or which > 2:
            raise SequencingError(f"exit-{which}", f"round {st.exit_rounds} was the last one forged")
        e = self._e
        if which == 1:
            hg = lambda k: self._scaled(e(k), "ghat", "hhat")  # noqa: E731
            fhg = lambda k: self._scaled(e(k), "ghat", "hhat", "fhat")  # noqa: E731
            to_low = [hg(k) for k in range(1, n - 1)] + [self._scaled(e(n - 1), "ghat"), fhg(n)]
            to_prev = [fhg(1)] + [hg(k) for k in range(2, n)] + [e(n)]
            to_last = [fhg(1)] + [hg(k) for k in range(2, n - 1)] + [self._c_n(), hg(n)]
            for i in range(1, n - 1):
                self._forge(n - 1, i, lambda p: Refresh(n - 1, p), to_low, "exit-1")
            self._forge(n, n - 1, lambda p: Refresh(n, p), to_prev, "exit-1")
            self._forge(n - 1, n, lambda p: Refresh(n - 1, p), to_last, "exit-1")
            st.current_key = self._scaled(self._c_n(), "ghat", "hhat").point
        else:
            full = [self._scaled(e(k), "ghat", "hhat", "fhat") for k in range(1, n + 1)]
            for i in range(1, n - 1):
                self._forge(n, i, lambda p: Refresh(n, p), full, "exit-2")
            for i in (n - 1, n):
                self._forge(1, i, lambda p: Refresh(1, p), full, "exit-2")
            st.current_key = self._scaled(self._c_n(), "ghat", "hhat", "fhat").point
        st.exit_rounds = which
        self.mode = "exited" if which == 2 else "exit"

    def forge_exit_refreshes(self) -> None:
        """Queue both forged refreshes; FIFO delivery keeps them ordered."""
        self.forge_exit_round(1)
        self.forge_exit_round(2)

    # MITM conversion

    def convert_to_mitm(self, initiator: int) -> None:
        """Arm the conversion for an honest refresh from U_initiator.

        ``initiator <= n-2`` isolates U_n with a separate key.  ``n-1`` is
        handled by re-applying ghat to U_n's copy so that every user agrees
        again and the attacker drops out.  ``n`` is not supported.
        """
        st, n = self.state, self.n
        if "(j)" not in st.done:
            raise SequencingError("mitm", "the key agreement attack has not completed")
        if st.exit_rounds:
            raise SequencingError("mitm", "exit refreshes were already forged")
        if initiator == n:
            raise UnsupportedInitiatorError("mitm", "no conversion is implemented for a U_n refresh")
        if not 1 <= initiator < n:
            raise SequencingError("mitm", f"initiator {initiator} outside [1, {n}]")
        st.mitm_initiator = initiator
        self.mode = "mitm" if initiator <= n - 2 else "apply-ghat"

    def _on_refresh(self, entry: TranscriptEntry) -> str:
        st, n, msg = self.state, self.n, entry.message
        if self.mode not in ("mitm", "apply-ghat") or msg.initiator != st.mitm_initiator:
            raise SequencingError("mitm", f"unexpected refresh from U_{msg.initiator}")
        if self.mode == "mitm":
            if entry.to == n - 1:
                self._forward(entry, n - 1, "mitm")
                return "mitm"
            if entry.to != n:
                raise SequencingError("mitm", f"refresh copy for U_{entry.to} was diverted")
            return self._mitm_isolate(entry)
        return self._mitm_apply_ghat(entry)

    def _mitm_isolate(self, entry: TranscriptEntry) -> str:
        st, n, c = self.state, self.n, self.state.mitm_initiator
        observed = self._captured(entry, n - 1)   # g_c' * C_n
        group_key = self.action.act(st.ghat, observed.point)
        hhat = st.hhat
        # the isolated key must differ from the group key
        while self.action.act(hhat, self._c_n().point) == group_key:
            hhat = self.action.random_scalar(self.rng, nontrivial=True)
        self.scalars["hhat_mitm"] = hhat
        fake = []
        for k in range(1, n + 1):
            if k == c:
                fake.append(st.captured_f[c - 1])
            elif k == n:
                fake.append(self._apply("hhat_mitm", hhat, st.c_last))
            else:
                fake.append(self._fresh_orbit_point(f"r{k}"))
        self._forge(c, n, lambda p: Refresh(c, p), fake, "mitm")
        st.mitm_keys = {
            "group": group_key,
            "isolated": self.action.act(hhat, self._c_n().point),
        }
        st.current_key = st.mitm_keys["group"]
        return "mitm"

    def _mitm_apply_ghat(self, entry: TranscriptEntry) -> str:
        st, n = self.state, self.n
        if entry.to != BROADCAST:
            raise SequencingError("mitm", "expected the refresh broadcast of U_{n-1}")
        for i in range(1, n - 1):
            self._forward(entry, i, "mitm")
        pts = [self._captured(entry, k) for k in range(n)]
        pts[n - 2] = self._c_n()                    # the value U_n holds at position n-1
        pts[n - 1] = self._apply("ghat", st.ghat, pts[n - 1])
        self._forge(n - 1, n, lambda p: Refresh(n - 1, p), pts, "mitm")
        st.lost_key = True
        return "mitm"


def audit_provenance(transcript, attacker: ActiveAttacker) -> list:
    """Recompute every forged payload from the transcript; return mismatches."""
    a = attacker.action
    by_seq = {e.seq: e for e in transcript}
    forged = [e for e in transcript if e.kind == FORGED]
    problems = []
    if len(forged) != len(attacker.provenance):
        problems.append(f"{len(forged)} forged entries but {len(attacker.provenance)} derivations")
    for entry, knowns in zip(forged, attacker.provenance):
        points = message_points(entry.message)
        if len(points) != len(knowns):
            problems.append(f"seq {entry.seq}: payload length mismatch")
            continue
        for pos, (pt, k) in enumerate(zip(points, knowns)):
            if k.source[0] == "base":
                value = a.base
            else:
                _, seq, idx = k.source
                src = by_seq.get(seq)
                if src is None or src.kind != INTERCEPTED or seq >= entry.seq:
                    problems.append(f"seq {entry.seq}[{pos}]: source {seq} is not an earlier interception")
                    continue
                value = message_points(src.message)[idx]
            for label in k.scalars:
                value = a.act(attacker.scalars[label], value)
            if value != pt:
                problems.append(f"seq {entry.seq}[{pos}]: recomputed {value!r} != sent {pt!r}")
    return problems


@dataclass
class AttackOutcome:
    attacker_key: SetPoint
    user_keys: dict
    transcript: list
    checks: dict
    attacker: ActiveAttacker = field(repr=False)
    network: Network = field(repr=False)


def attack_network(action: GroupAction, secrets, attacker_rng: random.Random,
                   ghat=None, hhat=None, fhat=None):
    """Wire n honest parties and an attacker controlling U_{n-1} and U_n."""
    n = len(secrets)
    policy = InterpositionPolicy(controlled=frozenset({n - 1, n}), active=True)
    net = Network(action, n, policy)
    for i, g in enumerate(secrets, start=1):
        net.add_participant(new_participant(action, i, n, g))
    attacker = ActiveAttacker(action, n, attacker_rng, ghat=ghat, hhat=hhat, fhat=fhat)
    attacker.attach(net)
    return net, attacker


def execute_ika_attack(n: int, action: GroupAction, seed: int, secrets=None,
                       ghat=None) -> AttackOutcome:
    rng = random.Random(seed)
    if secrets is None:
        secrets = [action.random_scalar(rng, nontrivial=True) for _ in range(n)]
    net, attacker = attack_network(action, secrets, random.Random(f"attacker:{seed}"), ghat=ghat)
    net.start(1)
    net.run_until_quiescent()
    attacker.require_complete()
    parties = net.parties()
    return AttackOutcome(
        attacker_key=attacker.state.attack_key,
        user_keys={i: s.key for i, s in parties.items()},
        transcript=list(net.transcript),
        checks={i: run_checks(s) for i, s in parties.items()},
        attacker=attacker, network=net)


def passive_eavesdrop(n: int, action: GroupAction, seed: int, secrets=None) -> list:
    """Run the honest protocol and hand back only what a wiretap would see."""
    rng = random.Random(seed)
    if secrets is None:
        secrets = [action.random_scalar(rng, nontrivial=True) for _ in range(n)]
    net = Network(action, n)
    for i, g in enumerate(secrets, start=1):
        net.add_participant(new_participant(action, i, n, g))
    net.start(1)
    return list(net.run_until_quiescent())
