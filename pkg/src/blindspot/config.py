"""INI experiment configuration, validation, hashing and per-cell seed derivation.

List-valued fields are comma separated. ``none`` stands for ``None`` inside
the model search-space lists. Unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .aggregation import AGGREGATORS
from .envs import DOMAINS, CatcherConfig, FlappyConfig
from .feedback import PROTOCOLS
from .model import SearchSpace
from .tabular import QLearningParams

ORACLE_MODES = ("strict", "lenient")
CONFIG_AGGREGATORS = tuple(a for a in AGGREGATORS if a != "ds-original")


class ConfigError(ValueError):
    """Carries one message per invalid field."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))


@dataclass
class ExperimentConfig:
    domains: tuple[str, ...] = ("catcher",)
    oracle_modes: tuple[str, ...] = ("strict",)
    protocols: tuple[str, ...] = ("R-A",)
    aggregators: tuple[str, ...] = ("ds",)
    budgets: tuple[int, ...] = (1000, 2000, 4000, 8000)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    master_seed: int = 0
    out: str = "runs/default"
    oil_episodes: int = 100
    weight_rollouts: int = 1000
    workers: int = 1
    # lenient-oracle percentile per domain
    percentiles: dict = field(default_factory=lambda: {"catcher": 0.95, "flappybird": 0.7})
    include_zero_deltas: bool = True
    catcher: CatcherConfig = field(default_factory=CatcherConfig)
    flappybird: FlappyConfig = field(default_factory=FlappyConfig)
    rl: QLearningParams = field(default_factory=QLearningParams)
    search: SearchSpace = field(default_factory=SearchSpace)
    n_trials: int = 20
    calib_frac: float = 0.3

    def env_config(self, domain: str):
        return self.catcher if domain == "catcher" else self.flappybird

    def validate(self) -> ExperimentConfig:
        errs = []

        def members(name, values, allowed):
            if not values:
                errs.append(f"{name}: must not be empty")
            for v in values:
                if v not in allowed:
                    errs.append(f"{name}: {v!r} not in {list(allowed)}")

        members("experiment.domains", self.domains, DOMAINS)
        members("experiment.oracle_modes", self.oracle_modes, ORACLE_MODES)
        members("experiment.protocols", self.protocols, PROTOCOLS)
        members("experiment.aggregators", self.aggregators, CONFIG_AGGREGATORS)
        if not self.budgets or any(b < 1 for b in self.budgets):
            errs.append("experiment.budgets: need at least one budget, all >= 1")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            errs.append("experiment.seeds: need at least one seed, no duplicates")
        for name in ("oil_episodes", "weight_rollouts", "workers"):
            if getattr(self, name) < 1:
                errs.append(f"experiment.{name}: must be >= 1")
        for d, p in self.percentiles.items():
            if not 0.0 < p < 1.0:
                errs.append(f"oracle.{d}_percentile: must lie strictly between 0 and 1")
        if self.n_trials < 1:
            errs.append("model.n_trials: must be >= 1")
        if not 0.0 <= self.calib_frac < 1.0:
            errs.append("model.calib_frac: must lie in [0, 1)")
        try:
            self.rl.validate()
        except ValueError as e:
            errs.append(f"rl: {e}")
        if errs:
            raise ConfigError(errs)
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        d.pop("workers")
        return d

    def hash(self) -> str:
        """Digest over every field that changes results (``out`` and ``workers`` excluded)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def derive_seed(master: int, *parts) -> int:
    """Hash-split seed: SHA-256 of the master seed and the cell path, folded to 31 bits.

    Adding or removing other cells never changes an existing cell's seed.
    """
    key = "/".join(str(p) for p in (master, *parts))
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "big") & 0x7FFFFFFF


# ---------------------------------------------------------------- parsing


def _split(v: str) -> list[str]:
    return [x.strip() for x in v.split(",") if x.strip()]


def _opt_int(v: str):
    return None if v.lower() == "none" else int(v)


def _bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _gaps(v: str):
    # "1-3, 6-8"
    out = []
    for g in _split(v):
        lo, hi = g.split("-")
        out.append((int(lo), int(hi)))
    return tuple(out)


EXPERIMENT_KEYS = {
    "domains": lambda v: tuple(_split(v)),
    "oracle_modes": lambda v: tuple(_split(v)),
    "protocols": lambda v: tuple(_split(v)),
    "aggregators": lambda v: tuple(_split(v)),
    "budgets": lambda v: tuple(int(x) for x in _split(v)),
    "seeds": lambda v: tuple(int(x) for x in _split(v)),
    "master_seed": int,
    "out": str,
    "oil_episodes": int,
    "weight_rollouts": int,
    "workers": int,
}


def _dataclass_parsers(cls, special=None) -> dict:
    special = special or {}
    conv = {int: int, float: float, bool: _bool, "int": int, "float": float, "bool": _bool}
    out = {}
    for f in dataclasses.fields(cls):
        if f.name in special:
            out[f.name] = special[f.name]
        else:
            out[f.name] = conv[f.type]
    return out


CATCHER_KEYS = _dataclass_parsers(CatcherConfig)
FLAPPY_KEYS = _dataclass_parsers(FlappyConfig, {
    "gaps": _gaps,
    "gap_probs": lambda v: tuple(float(x) for x in _split(v)),
})
RL_KEYS = {k: p for k, p in _dataclass_parsers(QLearningParams).items() if k != "seed"}
MODEL_KEYS = {
    "n_trials": int,
    "calib_frac": float,
    "n_trees": lambda v: tuple(int(x) for x in _split(v)),
    "max_depth": lambda v: tuple(_opt_int(x) for x in _split(v)),
    "min_samples_leaf": lambda v: tuple(int(x) for x in _split(v)),
    "max_features": lambda v: tuple(int(x) for x in _split(v)) or None,
}
ORACLE_KEYS = {
    "catcher_percentile": float,
    "flappybird_percentile": float,
    "include_zero_deltas": _bool,
}
SECTIONS = {
    "experiment": EXPERIMENT_KEYS,
    "oracle": ORACLE_KEYS,
    "catcher": CATCHER_KEYS,
    "flappybird": FLAPPY_KEYS,
    "rl": RL_KEYS,
    "model": MODEL_KEYS,
}


def _read_sections(parser: configparser.ConfigParser, errs: list[str]) -> dict:
    values: dict = {s: {} for s in SECTIONS}
    for sec in parser.sections():
        if sec not in SECTIONS:
            errs.append(f"{sec}: unknown section")
            continue
        for key, raw in parser.items(sec):
            if key not in SECTIONS[sec]:
                errs.append(f"{sec}.{key}: unknown key")
                continue
            try:
                values[sec][key] = SECTIONS[sec][key](raw)
            except ValueError as e:
                errs.append(f"{sec}.{key}: {e}")
    return values


def _build(values: dict, errs: list[str]) -> ExperimentConfig:
    cfg = ExperimentConfig(**values["experiment"])
    o = values["oracle"]
    cfg.percentiles = {"catcher": o.get("catcher_percentile", 0.95),
                       "flappybird": o.get("flappybird_percentile", 0.7)}
    cfg.include_zero_deltas = o.get("include_zero_deltas", True)
    for sec, cls, attr in (("catcher", CatcherConfig, "catcher"),
                           ("flappybird", FlappyConfig, "flappybird"),
                           ("rl", QLearningParams, "rl")):
        try:
            setattr(cfg, attr, cls(**values[sec]))
        except (ValueError, TypeError) as e:
            errs.append(f"{sec}: {e}")
    m = dict(values["model"])
    cfg.n_trials = m.pop("n_trials", cfg.n_trials)
    cfg.calib_frac = m.pop("calib_frac", cfg.calib_frac)
    cfg.search = SearchSpace(**m)
    return cfg


def default_config_path() -> Path:
    return Path(str(resources.files("blindspot") / "defaults.ini"))


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read the shipped defaults, then ``path`` on top, then ``overrides``.

    ``overrides`` maps ``"section.key"`` to a raw string value, the same text
    an INI file would hold.
    """
    parser = configparser.ConfigParser()
    parser.read(default_config_path())
    if path is not None:
        if not Path(path).exists():
            raise ConfigError([f"{path}: no such config file"])
        parser.read(path)
    errs: list[str] = []
    for dotted, raw in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        if not parser.has_section(sec):
            parser.add_section(sec)
        parser.set(sec, key, str(raw))
    values = _read_sections(parser, errs)
    cfg = _build(values, errs)
    try:
        cfg.validate()
    except ConfigError as e:
        errs.extend(e.errors)
    if errs:
        raise ConfigError(errs)
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text that ``load_config`` maps back to ``cfg``."""
    j = lambda xs: ", ".join("none" if x is None else str(x) for x in xs)
    p = configparser.ConfigParser()
    p["experiment"] = {
        "domains": j(cfg.domains), "oracle_modes": j(cfg.oracle_modes),
        "protocols": j(cfg.protocols), "aggregators": j(cfg.aggregators),
        "budgets": j(cfg.budgets), "seeds": j(cfg.seeds), "master_seed": str(cfg.master_seed),
        "out": cfg.out, "oil_episodes": str(cfg.oil_episodes),
        "weight_rollouts": str(cfg.weight_rollouts), "workers": str(cfg.workers),
    }
    p["oracle"] = {"catcher_percentile": repr(cfg.percentiles["catcher"]),
                   "flappybird_percentile": repr(cfg.percentiles["flappybird"]),
                   "include_zero_deltas": str(cfg.include_zero_deltas).lower()}
    for sec, obj in (("catcher", cfg.catcher), ("flappybird", cfg.flappybird), ("rl", cfg.rl)):
        d = {}
        for f in dataclasses.fields(obj):
            if sec == "rl" and f.name == "seed":
                continue
            v = getattr(obj, f.name)
            if f.name == "gaps":
                d[f.name] = ", ".join(f"{lo}-{hi}" for lo, hi in v)
            elif isinstance(v, tuple):
                d[f.name] = j(v)
            elif isinstance(v, bool):
                d[f.name] = str(v).lower()
            else:
                d[f.name] = repr(v) if isinstance(v, float) else str(v)
        p[sec] = d
    s = cfg.search
    p["model"] = {"n_trials": str(cfg.n_trials), "calib_frac": repr(cfg.calib_frac),
                  "n_trees": j(s.n_trees), "max_depth": j(s.max_depth),
                  "min_samples_leaf": j(s.min_samples_leaf),
                  "max_features": j(s.max_features or ())}
    buf = io.StringIO()
    p.write(buf)
    return buf.getvalue()
