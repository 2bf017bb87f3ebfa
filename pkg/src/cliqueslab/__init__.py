"""Generalized IKA.2 group key agreement, the two-link active attack against it,
and the attacker's forged-refresh exit strategy, over a simulated network."""

from .group_action import INFINITY, PRESETS, EllipticAction, ModExpAction, action_from_dict
from .protocol import ParticipantState, Phase, participant_step, run_checks
from .network import ATTACKER, InterpositionPolicy, Network
from .attacker import ActiveAttacker, execute_ika_attack, passive_eavesdrop
from .scenarios import oracle_expected_key, parse_config, run_scenario, write_outputs

__all__ = [
    "INFINITY", "PRESETS", "EllipticAction", "ModExpAction", "action_from_dict",
    "ParticipantState", "Phase", "participant_step", "run_checks",
    "ATTACKER", "InterpositionPolicy", "Network",
    "ActiveAttacker", "execute_ika_attack", "passive_eavesdrop",
    "oracle_expected_key", "parse_config", "run_scenario", "write_outputs",
]
