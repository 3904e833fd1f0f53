"""Scenario configuration: an INI file with a ``[run]`` section and one
``[attack:<name>]`` section per attack.

Attack parameters may list several comma-separated values; the attack is then
run once per point of the cartesian product of its parameter lists.

    [run]
    scenario = blind
    detector = broken_arrows
    corpus = images/
    seed = 0

    [attack:jpeg]
    quality = 90, 50, 5
"""
from __future__ import annotations

import configparser
import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field

SCENARIOS = ("white-box", "black-box", "oracle", "blind")
DETECTORS = ("broken_arrows", "surrogate", "external")

# attack -> scenarios it belongs to; controls are allowed everywhere
ATTACK_SCENARIOS = {
    "ddn": ("white-box",),
    "ba_optimal": ("white-box",),
    "cgba": ("black-box",),
    "wis": ("oracle",),
    "oracle_gradient": ("oracle",),
    "jpeg": ("blind",),
    "gamma": ("blind",),
    "sharpen": ("blind",),
    "purify": ("blind",),
    "identity": SCENARIOS,
    "noise": SCENARIOS,
}

FULL_SIZE = 1024
SMALL_SIZE = 256


@dataclass(frozen=True)
class AttackSpec:
    name: str
    params: tuple = ()  # sorted (key, value) pairs

    @property
    def label(self) -> str:
        if not self.params:
            return self.name
        return f"{self.name}(" + ",".join(f"{k}={v}" for k, v in self.params) + ")"

    def kwargs(self) -> dict:
        return dict(self.params)


@dataclass
class ScenarioConfig:
    scenario: str = "blind"
    detector: str = "broken_arrows"
    attacks: list[AttackSpec] = field(default_factory=list)
    alpha: float = 1e-6
    target_psnr: float = 42.0
    corpus: str = ""
    seed: int = 0
    size: int = FULL_SIZE
    limit: int | None = None
    m: int | None = None            # decoder / projection dimension
    n_f: int | None = None          # Broken-Arrows host length
    n_c: int | None = None          # Broken-Arrows cone count
    decoder_seed: int = 0           # surrogate decoder ("model") seed
    sidecar: str | None = None      # launch command for an external decoder
    message: str | None = None      # 0/1 string embedded by an external model
    purifier: str = "bicubic2x"     # or "sidecar:<command>"
    whitener: str | None = None     # .npz path; fitted on the corpus when absent
    cache_dir: str | None = None
    workers: int = 1
    log: str | None = None

    def validate(self) -> "ScenarioConfig":
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.detector not in DETECTORS:
            raise ValueError(f"unknown detector {self.detector!r}; expected one of {DETECTORS}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.size < 16:
            raise ValueError("size too small")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        for a in self.attacks:
            if a.name not in ATTACK_SCENARIOS:
                raise ValueError(f"unknown attack {a.name!r}")
            if self.scenario not in ATTACK_SCENARIOS[a.name]:
                raise ValueError(f"attack {a.name!r} does not belong to the {self.scenario} scenario")
            if a.name == "ba_optimal" and self.detector != "broken_arrows":
                raise ValueError("ba_optimal needs the broken_arrows detector")
        if self.detector == "external" and not self.message:
            raise ValueError("external detector needs the embedded message bits")
        if self.message and set(self.message) - {"0", "1"}:
            raise ValueError("message must be a string of 0/1 bits")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attacks"] = [{"name": a.name, "params": [list(p) for p in a.params]} for a in self.attacks]
        return d

    def result_dict(self) -> dict:
        """Everything that influences results; output paths and worker count excluded."""
        d = self.to_dict()
        for k in ("log", "workers", "cache_dir"):
            d.pop(k, None)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.result_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _parse_value(text: str):
    t = text.strip()
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def expand_grid(name: str, section: dict) -> list[AttackSpec]:
    keys = sorted(section)
    lists = [[_parse_value(v) for v in section[k].split(",") if v.strip()] for k in keys]
    return [AttackSpec(name, tuple(zip(keys, combo))) for combo in itertools.product(*lists)]


_RUN_TYPES = {
    "scenario": str, "detector": str, "alpha": float, "target_psnr": float, "corpus": str,
    "seed": int, "size": int, "limit": int, "m": int, "n_f": int, "n_c": int,
    "decoder_seed": int, "sidecar": str, "message": str, "purifier": str, "whitener": str,
    "cache_dir": str, "workers": int, "log": str,
}


def coerce(key: str, value):
    if key not in _RUN_TYPES:
        raise ValueError(f"unknown run option {key!r}")
    if value is None or value == "":
        return None
    return _RUN_TYPES[key](value)


def apply_sets(cp: configparser.ConfigParser, sets) -> None:
    """Apply ``section.key=value`` overrides, e.g. ``attack:jpeg.quality=5``."""
    for item in sets:
        lhs, sep, value = item.partition("=")
        section, dot, key = lhs.rpartition(".")
        if not sep or not dot or not section or not key:
            raise ValueError(f"override {item!r} is not of the form section.key=value")
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key.strip()] = value.strip()


def parse_config(text: str, overrides: dict | None = None, sets=()) -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    apply_sets(cp, sets)
    run = dict(cp["run"]) if cp.has_section("run") else {}
    for k, v in (overrides or {}).items():
        if v is not None:
            run[k] = v
    kwargs = {k: coerce(k, v) for k, v in run.items()}
    kwargs = {k: v for k, v in kwargs.items() if v is not None}
    attacks = []
    for sec in cp.sections():
        if sec.startswith("attack:"):
            attacks.extend(expand_grid(sec.split(":", 1)[1].strip(), dict(cp[sec])))
    return ScenarioConfig(attacks=attacks, **kwargs).validate()


def load_config(path, overrides: dict | None = None, sets=()) -> ScenarioConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read(), overrides, sets)
