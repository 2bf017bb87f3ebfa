"""Offline verification: rebuild every reported key from a transcript.

The verifier replays what each party received into fresh participants built
from the configured secrets, recomputes the attacker's keys from intercepted
payloads and the reported attacker scalars, and compares the lot with the
report.  It shares no code with the attacker.
"""

from __future__ import annotations

from .group_action import GroupAction
from .network import DELIVERED, DROPPED, FORGED, INTERCEPTED, ATTACKER
from .protocol import KeyMaterial, Refresh, build_refresh, new_participant, participant_step
from .scenarios import ScenarioConfig, SecretSchedule


def _replay(parties: dict, entries, schedule: SecretSchedule, start: bool) -> dict:
    parties = dict(parties)
    if start:
        parties[1], _ = participant_step(parties[1], None)
    initiated = set()
    for e in entries:
        msg = e.message
        if (isinstance(msg, Refresh) and e.sender != ATTACKER and e.sender == msg.initiator
                and e.sender not in initiated):
            initiated.add(e.sender)
            _, parties[e.sender] = build_refresh(parties[e.sender], schedule.next_refresh_secret())
        if e.kind in (DELIVERED, DROPPED, FORGED) and e.to in parties:
            parties[e.to], _ = participant_step(parties[e.to], msg)
    return parties


def _intercepted_key_material(transcript, n):
    for e in transcript:
        if e.kind == INTERCEPTED and isinstance(e.message, KeyMaterial) and e.sender == n:
            return e.message.points
    return None


def verify(cfg: ScenarioConfig, transcript, report: dict) -> list:
    """Return a list of discrepancies (empty when the report checks out)."""
    action: GroupAction = cfg.action
    n = cfg.n
    schedule = SecretSchedule(action, cfg)
    fresh = {i: new_participant(action, i, n, g) for i, g in enumerate(schedule.secrets, 1)}
    by_label = {None: fresh}
    problems = []
    enc = action.encode

    scalars = report.get("attacker_scalars") or {}
    material = _intercepted_key_material(transcript, n)
    c_n = material[n - 2] if material is not None else None

    for phase in report["phases"]:
        base = by_label.get(phase["from"])
        if base is None:
            problems.append(f"{phase['label']}: unknown base phase {phase['from']!r}")
            continue
        entries = transcript[phase["start_seq"]:phase["end_seq"]]
        parties = _replay(base, entries, schedule, start=phase["from"] is None)
        by_label[phase["label"]] = parties

        for i, s in parties.items():
            got = None if s.key is None else enc(s.key)
            if phase["keys"].get(f"U{i}") != got:
                problems.append(f"{phase['label']}: U{i} key {phase['keys'].get(f'U{i}')} "
                                f"but replay gives {got}")

        expect_attacker = None
        label = phase["label"]
        if c_n is not None and scalars:
            chain = {"attack": ("ghat",), "exit-1": ("ghat", "hhat"),
                     "exit-2": ("ghat", "hhat", "fhat")}.get(label)
            if chain:
                pt = c_n
                for name in chain:
                    pt = action.act(scalars[name], pt)
                expect_attacker = enc(pt)
        if expect_attacker is not None and phase["attacker_key"] != expect_attacker:
            problems.append(f"{label}: attacker key {phase['attacker_key']} "
                            f"but transcript gives {expect_attacker}")

        if phase.get("attacker_keys"):
            refresh = [e for e in entries if e.kind == INTERCEPTED
                       and isinstance(e.message, Refresh) and e.to == n]
            if not refresh:
                problems.append(f"{label}: no intercepted refresh for U{n}")
            else:
                group = enc(action.act(scalars["ghat"], refresh[0].message.points[n - 1]))
                isolated = enc(action.act(scalars["hhat_mitm"], c_n))
                if phase["attacker_keys"] != {"group": group, "isolated": isolated}:
                    problems.append(f"{label}: attacker keys {phase['attacker_keys']} but "
                                    f"transcript gives group={group} isolated={isolated}")
    return problems
