"""Scenario configs, the scenario runner and the verification report."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from functools import reduce
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import yaml

from .attacker import ActiveAttacker, attack_network, audit_provenance
from .errors import ConfigurationError, ParameterError
from .group_action import PRESETS, GroupAction, action_from_dict
from .network import Network, transcript_to_jsonl
from .protocol import Phase, message_points, new_participant, run_checks

SCENARIOS = ("honest", "refresh", "active-attack", "attack-no-ghat", "exit-strategy",
             "refresh-failure", "mitm-conversion", "passive")
ATTACK_SCENARIOS = ("active-attack", "attack-no-ghat", "exit-strategy",
                    "refresh-failure", "mitm-conversion")


@dataclass
class ScenarioConfig:
    scenario: str
    n: int = 3
    backend: object = "modexp"
    seed: int = 0
    fixed_secrets: Optional[list] = None
    refresh_secrets: list = field(default_factory=list)
    attacker: dict = field(default_factory=dict)
    c: Optional[int] = None
    max_deliveries: Optional[int] = None
    out_dir: str = "out"
    transcript_path: Optional[str] = None
    report_path: Optional[str] = None

    @property
    def action(self) -> GroupAction:
        if isinstance(self.backend, str):
            return PRESETS[self.backend]
        return action_from_dict(self.backend)

    @property
    def transcript_file(self) -> Path:
        return Path(self.transcript_path or Path(self.out_dir) / f"{self.scenario}.transcript.jsonl")

    @property
    def report_file(self) -> Path:
        return Path(self.report_path or Path(self.out_dir) / f"{self.scenario}.report.json")


def _schema() -> dict:
    return json.loads(resources.files("cliqueslab").joinpath("config_schema.json").read_text())


def parse_config(source, overrides: Optional[dict] = None) -> ScenarioConfig:
    """Load a YAML config from a path, YAML text or a dict, then validate it.

    ``overrides`` (e.g. from the command line) replace top-level keys; ``None``
    values are ignored.
    """
    if isinstance(source, dict):
        data = dict(source)
    else:
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                        and Path(source).exists()):
            try:
                text = Path(source).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigurationError("config", str(exc)) from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError("config", f"not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config", "top level must be a mapping")
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v

    try:
        jsonschema.validate(data, _schema())
    except jsonschema.ValidationError as exc:
        where = exc.absolute_path[0] if exc.absolute_path else (
            exc.message.split("'")[1] if "'" in exc.message else "config")
        raise ConfigurationError(str(where), exc.message) from None

    out = data.get("output", {})
    cfg = ScenarioConfig(
        scenario=data["scenario"], n=data.get("n", 3), backend=data.get("backend", "modexp"),
        seed=data.get("seed", 0), fixed_secrets=data.get("fixed_secrets"),
        refresh_secrets=list(data.get("refresh_secrets", [])),
        attacker=dict(data.get("attacker", {})), c=data.get("c"),
        max_deliveries=data.get("max_deliveries"), out_dir=out.get("dir", "out"),
        transcript_path=out.get("transcript"), report_path=out.get("report"))

    if cfg.n < 3:
        raise ConfigurationError("n", f"group size must be at least 3, got {cfg.n}")
    try:
        action = cfg.action
    except (ParameterError, KeyError, ValueError) as exc:
        raise ConfigurationError("backend", str(exc)) from exc
    if cfg.fixed_secrets is not None:
        if len(cfg.fixed_secrets) != cfg.n:
            raise ConfigurationError("fixed_secrets", f"need {cfg.n} values, got {len(cfg.fixed_secrets)}")
        _check_scalars(action, "fixed_secrets", cfg.fixed_secrets)
    _check_scalars(action, "refresh_secrets", cfg.refresh_secrets)
    for name, v in cfg.attacker.items():
        _check_scalars(action, f"attacker.{name}", [v])
    if cfg.scenario == "mitm-conversion":
        if cfg.c is None:
            raise ConfigurationError("c", "mitm-conversion needs the refresh initiator c")
        if not 1 <= cfg.c <= cfg.n - 1:
            raise ConfigurationError("c", f"mitm-conversion supports 1 <= c <= n-1, got {cfg.c}")
    elif cfg.c is not None and not 1 <= cfg.c <= cfg.n:
        raise ConfigurationError("c", f"initiator {cfg.c} outside [1, {cfg.n}]")
    return cfg


def _check_scalars(action, name, values) -> None:
    for v in values:
        if not 1 <= v < action.q:
            raise ConfigurationError(name, f"{v} is not in [1, {action.q - 1}]")


def oracle_expected_key(action: GroupAction, secrets, extra=(), s=None):
    """Closed form (prod secrets * prod extra) . s, by direct scalar arithmetic."""
    s = action.base if s is None else s
    product = reduce(lambda x, y: x * y % action.q, list(secrets) + list(extra), 1)
    return action.act(product, s)


def closed_form_e(action: GroupAction, secrets, k: int):
    """E_k: the base point acted on by every secret except the k-th."""
    return oracle_expected_key(action, [g for j, g in enumerate(secrets, 1) if j != k])


class SecretSchedule:
    """Deterministic source of honest randomness: n secrets, then refresh secrets."""

    def __init__(self, action: GroupAction, cfg: ScenarioConfig):
        self.action = action
        self.rng = random.Random(cfg.seed)
        if cfg.fixed_secrets is not None:
            self.secrets = list(cfg.fixed_secrets)
        else:
            self.secrets = [action.random_scalar(self.rng, nontrivial=True) for _ in range(cfg.n)]
        self._fixed_refresh = list(cfg.refresh_secrets)

    def next_refresh_secret(self) -> int:
        if self._fixed_refresh:
            return self._fixed_refresh.pop(0)
        return self.action.random_scalar(self.rng, nontrivial=True)


def attacker_rng(seed: int) -> random.Random:
    return random.Random(f"attacker:{seed}")


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    action: GroupAction
    transcript: list
    report: dict
    network: Network = field(repr=False)
    attacker: Optional[ActiveAttacker] = field(default=None, repr=False)
    secrets: list = field(default_factory=list)


class _Runner:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.action = cfg.action
        self.n = cfg.n
        self.schedule = SecretSchedule(self.action, cfg)
        self.secrets = self.schedule.secrets
        self.attacker = None
        self.phases: list[dict] = []
        self.verdicts: dict[str, bool] = {}
        self.refresh_log: list[tuple] = []
        self._mark = 0
        if cfg.scenario in ATTACK_SCENARIOS:
            a = dict(cfg.attacker)
            if cfg.scenario == "attack-no-ghat":
                a["ghat"] = 1
            self.net, self.attacker = attack_network(self.action, self.secrets,
                                                     attacker_rng(cfg.seed), **a)
        else:
            self.net = Network(self.action, self.n)
            for i, g in enumerate(self.secrets, start=1):
                self.net.add_participant(new_participant(self.action, i, self.n, g))
        if cfg.max_deliveries is not None:
            self.net.max_deliveries = cfg.max_deliveries

    def enc(self, pt):
        return None if pt is None else self.action.encode(pt)

    def run(self):
        self.net.start(1)
        self.net.run_until_quiescent()
        if self.attacker is not None:
            self.attacker.require_complete()
            self.record("attack", attacker_key=self.attacker.state.attack_key)
        else:
            self.record("ika")
        getattr(self, "_" + self.cfg.scenario.replace("-", "_"))()

    def record(self, label, base=None, attacker_key=None, attacker_keys=None, **extra) -> dict:
        parties = self.net.parties()
        keys = {i: s.key for i, s in parties.items()}
        pool = list(keys.values()) + ([attacker_key] if attacker_key is not None else [])
        memories = [s.memory for s in parties.values()]
        phase = {
            "label": label,
            "from": base,
            "start_seq": self._mark,
            "end_seq": len(self.net.transcript),
            "keys": {f"U{i}": self.enc(k) for i, k in keys.items()},
            "attacker_key": self.enc(attacker_key),
            "attacker_keys": ({k: self.enc(v) for k, v in attacker_keys.items()}
                              if attacker_keys else None),
            "agreement": None not in pool and len(set(pool)) == 1,
            "distinct_keys": len(set(keys.values())),
            "memories_identical": None not in memories and len(set(memories)) == 1,
            "checks": {f"U{i}": run_checks(s).as_dict() for i, s in parties.items()
                       if s.phase is Phase.ESTABLISHED},
            "violations": {f"U{i}": list(s.violations) for i, s in parties.items() if s.violations},
        }
        phase.update(extra)
        self._mark = len(self.net.transcript)
        self.phases.append(phase)
        return phase

    def refresh(self, c, annotation=""):
        g = self.schedule.next_refresh_secret()
        old = self.net.inspect(c).key
        self.net.initiate_refresh(c, g, annotation)
        self.net.run_until_quiescent()
        self.refresh_log.append((c, g))
        return g, old

    def fork_refreshes(self, base_label, prefix):
        snap = self.net.snapshot()
        out = []
        for c in range(1, self.n + 1):
            self.net.restore(snap)
            g, old = self.refresh(c, f"fork:{prefix} c={c}")
            phase = self.record(f"{prefix} c={c}", base=base_label)
            out.append((c, g, old, phase))
        self.net.restore(snap)
        return out

    # helpers for verdicts

    def all_checks_pass(self, phase) -> bool:
        return all(v is not False for chk in phase["checks"].values() for v in chk.values())

    def v4_passes(self, phase) -> bool:
        return all(chk["V4"] is not False for chk in phase["checks"].values())

    def oracle(self, extra=()):
        return oracle_expected_key(self.action, self.secrets, extra)

    def keys_equal(self, phase, expected) -> bool:
        want = self.enc(expected)
        return all(k == want for k in phase["keys"].values())

    # scenarios

    def _honest(self):
        ika = self.phases[-1]
        self.verdicts["agreement"] = ika["agreement"]
        self.verdicts["keys match oracle"] = self.keys_equal(ika, self.oracle())
        self.verdicts["checks pass"] = self.all_checks_pass(ika)
        self.verdicts["no violations"] = not ika["violations"]

    def _passive(self):
        self._honest()
        key = self.net.inspect(1).key
        sent = {pt for e in self.net.transcript for pt in message_points(e.message)}
        self.verdicts["key never transmitted"] = key not in sent

    def _refresh(self):
        self._honest()
        initiators = [self.cfg.c] if self.cfg.c is not None else range(1, self.n + 1)
        prev = "ika"
        for c in initiators:
            g, old = self.refresh(c, f"refresh c={c}")
            phase = self.record(f"refresh c={c}", base=prev)
            prev = phase["label"]
            self.verdicts[f"refresh c={c}: agreement"] = phase["agreement"]
            self.verdicts[f"refresh c={c}: key is new secret applied to old key"] = \
                self.keys_equal(phase, self.action.act(g, old))
            self.verdicts[f"refresh c={c}: memories identical"] = phase["memories_identical"]
            self.verdicts[f"refresh c={c}: checks pass"] = self.all_checks_pass(phase)

    def _ghat_extra(self):
        return [self.attacker.state.ghat]

    def _attack_common(self):
        st = self.attacker.state
        ika = self.phases[-1]
        self.verdicts["all users and attacker share one key"] = ika["agreement"]
        self.verdicts["attacker key matches oracle"] = \
            st.attack_key == self.oracle(self._ghat_extra())
        self.verdicts["provenance audit clean"] = not audit_provenance(self.net.transcript,
                                                                      self.attacker)
        return ika

    def _active_attack(self):
        ika = self._attack_common()
        self.verdicts["checks pass"] = self.all_checks_pass(ika)
        self.verdicts["memory table matches closed form"] = self.memory_table_holds()

    def memory_table_holds(self) -> bool:
        a, n, st = self.action, self.n, self.attacker.state
        E = [closed_form_e(a, self.secrets, k) for k in range(1, n + 1)]
        c_n = self.oracle()
        gE = [a.act(st.ghat, e) for e in E]
        g_n = self.secrets[-1]
        expect = {i: tuple(gE[:n - 1]) + (c_n,) for i in range(1, n - 1)}
        expect[n - 1] = tuple(gE[:n - 1]) + (E[n - 1],)
        expect[n] = tuple(a.act(g_n, m.point) for m in st.decoys) + (E[n - 2], c_n, gE[n - 1])
        return all(self.net.inspect(i).memory == expect[i] for i in range(1, n + 1))

    def _attack_no_ghat(self):
        ika = self._attack_common()
        n = self.n
        chk = ika["checks"]
        self.verdicts["V2 fails at U_n"] = chk[f"U{n}"]["V2"] is False
        self.verdicts["V3 fails at every U_i, i <= n-2"] = all(
            chk[f"U{i}"]["V3"] is False for i in range(1, n - 1))

    def _exit_strategy(self):
        self._attack_common()
        st = self.attacker.state
        self.attacker.forge_exit_round(1)
        self.net.run_until_quiescent()
        r1 = self.record("exit-1", base="attack", attacker_key=st.current_key)
        self.attacker.forge_exit_round(2)
        self.net.run_until_quiescent()
        r2 = self.record("exit-2", base="exit-1", attacker_key=st.current_key)
        g = st.ghat
        self.verdicts["exit-1: keys equal hhat*ghat*C_n"] = r1["agreement"] and \
            self.keys_equal(r1, self.oracle([g, st.hhat]))
        self.verdicts["exit-2: keys equal fhat*hhat*ghat*C_n"] = r2["agreement"] and \
            self.keys_equal(r2, self.oracle([g, st.hhat, st.fhat]))
        self.verdicts["memories identical after exit"] = r2["memories_identical"]
        self.verdicts["V4 passes at every forged-refresh recipient"] = all(
            ok for s in self.net.parties().values() for _, ok in s.refresh_checks)
        self.verdicts["provenance audit clean"] = not audit_provenance(self.net.transcript,
                                                                      self.attacker)
        self.net.policy.active = False
        for c, _, _, phase in self.fork_refreshes("exit-2", "post-exit"):
            self.verdicts[f"post-exit c={c}: agreement"] = phase["agreement"]
            self.verdicts[f"post-exit c={c}: V4 passes"] = self.v4_passes(phase)
            self.verdicts[f"post-exit c={c}: attacker excluded"] = \
                phase["keys"]["U1"] != self.enc(st.current_key)

    def _refresh_failure(self):
        self._attack_common()
        self.net.policy.active = False
        failed = []
        for c, _, _, phase in self.fork_refreshes("attack", "refresh"):
            ok = phase["distinct_keys"] >= 2
            self.verdicts[f"refresh c={c}: at least two distinct keys"] = ok
            failed.append(ok)
        self.verdicts["refresh failed as expected"] = all(failed)

    def _mitm_conversion(self):
        self._attack_common()
        st, n, c = self.attacker.state, self.n, self.cfg.c
        prior_key = st.current_key
        self.attacker.convert_to_mitm(c)
        g, old = self.refresh(c, "refresh")
        if c <= n - 2:
            phase = self.record("mitm", base="attack", attacker_keys=st.mitm_keys)
            keys = self.net.parties()
            group = {keys[i].key for i in range(1, n)}
            user_side = self.action.act(g, old)
            self.verdicts["U_1..U_{n-1} agree"] = len(group) == 1
            self.verdicts["attacker shares the group key"] = group == {st.mitm_keys["group"]}
            self.verdicts["group key via attacker equals user-side g_c' * old key"] = \
                st.mitm_keys["group"] == user_side
            self.verdicts["attacker shares the isolated key with U_n"] = \
                keys[n].key == st.mitm_keys["isolated"]
            self.verdicts["isolated key equals hhat * C_n"] = st.mitm_keys["isolated"] == \
                self.oracle([self.attacker.scalars["hhat_mitm"]])
            self.verdicts["the two keys differ"] = st.mitm_keys["group"] != st.mitm_keys["isolated"]
        else:
            phase = self.record("mitm", base="attack")
            self.verdicts["all users agree"] = phase["agreement"]
            self.verdicts["attacker excluded"] = \
                phase["keys"]["U1"] != self.enc(prior_key) and st.lost_key
        self.verdicts["V4 passes at every refresh recipient"] = self.v4_passes(phase)
        self.verdicts["provenance audit clean"] = not audit_provenance(self.net.transcript,
                                                                      self.attacker)

    def report(self) -> dict:
        first = self.phases[0]
        scalars = None
        if self.attacker is not None:
            st = self.attacker.state
            scalars = {"ghat": st.ghat, "hhat": st.hhat, "fhat": st.fhat}
            if "hhat_mitm" in self.attacker.scalars:
                scalars["hhat_mitm"] = self.attacker.scalars["hhat_mitm"]
        extra = self._ghat_extra() if self.attacker is not None else []
        return {
            "scenario": self.cfg.scenario,
            "n": self.n,
            "params": self.action.to_dict(),
            "seed": self.cfg.seed,
            "attacker_scalars": scalars,
            "keys": first["keys"],
            "attacker_key": self.enc(self.attacker.state.attack_key) if self.attacker else None,
            "oracle_key": self.enc(self.oracle(extra)),
            "agreement": first["agreement"],
            "checks": first["checks"],
            "phases": self.phases,
            "verdicts": self.verdicts,
            "all_verdicts_hold": all(self.verdicts.values()),
        }


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    r = _Runner(cfg)
    r.run()
    return ScenarioResult(config=cfg, action=r.action, transcript=list(r.net.transcript),
                          report=r.report(), network=r.net, attacker=r.attacker,
                          secrets=list(r.secrets))


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, ensure_ascii=False) + "\n"


def write_outputs(result: ScenarioResult, transcript_path=None, report_path=None) -> int:
    """Write both artifacts; exit code 0 iff every verdict holds, 1 otherwise, 3 on I/O error."""
    tpath = Path(transcript_path or result.config.transcript_file)
    rpath = Path(report_path or result.config.report_file)
    try:
        for p in (tpath, rpath):
            p.parent.mkdir(parents=True, exist_ok=True)
        tpath.write_text(transcript_to_jsonl(result.transcript, result.action), encoding="utf-8")
        rpath.write_text(report_to_json(result.report), encoding="utf-8")
    except OSError:
        return 3
    return 0 if result.report["all_verdicts_hold"] else 1
