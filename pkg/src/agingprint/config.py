"""Run configuration shared by the command-line tools.

A JSON document with optional sections ``ingest``, ``physics``, ``ident``,
``soh``, ``mapping`` and ``synth``; any key left out keeps its default.
Unknown sections or keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from . import __version__
from .identify import IdentConfig
from .ingest import ConfigError, IngestConfig
from .mapping import MappingConfig, config_hash
from .physics import FoecmParams, OcvModel, default_ocv
from .soh.train import TrainConfig


@dataclass(frozen=True)
class PhysicsSettings:
    """Fixed physics; the fingerprint resistances are identified per cycle."""

    R0: float = 0.02
    cpe_Q: float = 50.0
    cpe_alpha: float = 0.7
    tau_W: float = 600.0
    Q_nominal: float = 1.1
    ocv_file: str | None = None

    def params(self) -> FoecmParams:
        m = OcvModel.from_csv(self.ocv_file) if self.ocv_file else default_ocv()
        return FoecmParams(R0=self.R0, cpe_Q=self.cpe_Q, cpe_alpha=self.cpe_alpha,
                           tau_W=self.tau_W, Q=self.Q_nominal, ocv=m)


@dataclass(frozen=True)
class IdentSettings:
    V_g: float = 2.4
    R_dyn_bracket: tuple[float, float] = (0.0, 1.0)
    R_W_bracket: tuple[float, float] = (0.0, 1.0)
    tol: float = 1e-6
    stage1: str = "profiled"
    memory: int | None = None


@dataclass(frozen=True)
class SynthSettings:
    profiles: tuple[str, ...] = ("short", "medium", "long")
    cells: int = 4
    cycles_per_cell: int = 30
    noise_sigma: float = 0.005
    spread: float = 0.04


@dataclass(frozen=True)
class RunConfig:
    ingest: IngestConfig = field(default_factory=IngestConfig)
    physics: PhysicsSettings = field(default_factory=PhysicsSettings)
    ident: IdentSettings = field(default_factory=IdentSettings)
    soh: TrainConfig = field(default_factory=TrainConfig)
    mapping: MappingConfig = field(default_factory=MappingConfig)
    synth: SynthSettings = field(default_factory=SynthSettings)
    seed: int = 0

    def ident_config(self) -> IdentConfig:
        s = self.ident
        return IdentConfig(V_g=s.V_g, R_dyn_bracket=tuple(s.R_dyn_bracket),
                           R_W_bracket=tuple(s.R_W_bracket), tol=s.tol,
                           stage1=s.stage1, theta=self.physics.params(),
                           memory=s.memory)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def stamp(self) -> str:
        """Provenance line written at the top of every output file."""
        return f"agingprint {__version__} config={self.hash()} seed={self.seed}"


_SECTIONS = {f.name: f for f in fields(RunConfig) if f.name != "seed"}


def _coerce(value, default):
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(value)
    return value


def _apply(section, overrides: dict, name: str):
    known = {f.name for f in fields(section)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    values = {k: _coerce(v, getattr(section, k)) for k, v in overrides.items()}
    try:
        return replace(section, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def merge_config(base: RunConfig, doc: dict) -> RunConfig:
    """Overlay a parsed config document onto ``base``."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be an object")
    unknown = sorted(set(doc) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    updates = {}
    for name, sub in doc.items():
        if name == "seed":
            updates["seed"] = int(sub)
            continue
        if not isinstance(sub, dict):
            raise ConfigError(f"section [{name}] must be an object")
        updates[name] = _apply(getattr(base, name), sub, name)
    return replace(base, **updates)


def load_config(path: str | None = None, seed: int | None = None) -> RunConfig:
    cfg = RunConfig()
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        cfg = merge_config(cfg, doc)
    if seed is not None:
        cfg = replace(cfg, seed=int(seed), soh=replace(cfg.soh, seed=int(seed)))
    return cfg
