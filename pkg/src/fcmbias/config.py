"""Audit configuration, loaded from YAML (JSON also parses)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .fcm import SimulationConfig
from .forest import ForestConfig


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSettings:
    path: str = ""
    schema: str = ""
    normalize: bool = False
    max_rows: int | None = None  # seeded row subsample before splitting


@dataclass
class SplitSettings:
    fractions: tuple[float, float, float] = (0.7, 0.2, 0.1)


@dataclass
class ForestSettings:
    n_estimators: list[int] = field(default_factory=lambda: [100, 500, 1000])
    criterion: list[str] = field(default_factory=lambda: ["gini", "entropy"])
    max_features: list[str] = field(default_factory=lambda: ["sqrt", "log2"])
    max_depth: int | None = None

    def grid(self, seed: int) -> list[ForestConfig]:
        return [
            ForestConfig(n, c, r, seed, self.max_depth)
            for n in self.n_estimators
            for c in self.criterion
            for r in self.max_features
        ]


@dataclass
class ShapleySettings:
    method: str = "kernel"  # "kernel" | "exact" | "auto"
    background_size: int = 100
    n_coalitions: int = 4096
    positive_class: str | None = None  # defaults to the second class name
    global_instances: int | None = 200  # None: every train+validation row
    global_n_coalitions: int = 1024
    global_background_size: int = 50


@dataclass
class AssociationSettings:
    alpha: float = 2.0
    c_min: int = 2
    c_max: int = 10
    diagonal: str = "unit"


@dataclass
class FCMSettings:
    phis: list[float] = field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8])
    max_iter: int = 100
    fp_tol: float = 1e-6
    cycle_window: int = 20
    activation: str = "absolute"  # "absolute" | "signed" | "max_normalized"

    def simulation(self, phi: float) -> SimulationConfig:
        return SimulationConfig(phi, self.max_iter, self.fp_tol, self.cycle_window)


@dataclass
class AuditConfig:
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    split: SplitSettings = field(default_factory=SplitSettings)
    forest: ForestSettings = field(default_factory=ForestSettings)
    shapley: ShapleySettings = field(default_factory=ShapleySettings)
    association: AssociationSettings = field(default_factory=AssociationSettings)
    fcm: FCMSettings = field(default_factory=FCMSettings)
    protected: list[str] = field(default_factory=list)  # empty: schema flags
    instance_rule: str = "one_per_class"
    seed: int = 0
    out_dir: str = "runs/audit"

    def validate(self) -> None:
        if any(not 0.0 <= p <= 1.0 for p in self.fcm.phis):
            raise ConfigError(f"phi values must lie in [0, 1]: {self.fcm.phis}")
        if self.fcm.activation not in ("absolute", "signed", "max_normalized"):
            raise ConfigError(f"unknown activation mode {self.fcm.activation!r}")
        if self.instance_rule != "one_per_class":
            raise ConfigError(f"unknown instance rule {self.instance_rule!r}")
        if self.shapley.method not in ("kernel", "exact", "auto"):
            raise ConfigError(f"unknown shapley method {self.shapley.method!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("out_dir")
        d["split"]["fractions"] = list(d["split"]["fractions"])
        return d


_SECTIONS = {
    "dataset": DatasetSettings,
    "split": SplitSettings,
    "forest": ForestSettings,
    "shapley": ShapleySettings,
    "association": AssociationSettings,
    "fcm": FCMSettings,
}


def _section(cls, raw, name):
    raw = raw or {}
    known = {f.name for f in fields(cls)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"section {name!r}: unknown keys {sorted(extra)}")
    return cls(**raw)


def config_from_dict(raw: dict, base_dir: Path | str | None = None) -> AuditConfig:
    raw = dict(raw or {})
    kwargs = {}
    for name, cls in _SECTIONS.items():
        kwargs[name] = _section(cls, raw.pop(name, None), name)
    extra = set(raw) - {"protected", "instance_rule", "seed", "out_dir"}
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    cfg = AuditConfig(**kwargs, **raw)
    cfg.split.fractions = tuple(float(v) for v in cfg.split.fractions)
    cfg.fcm.phis = [float(p) for p in cfg.fcm.phis]
    if base_dir is not None:
        base = Path(base_dir)
        for attr in ("path", "schema"):
            val = getattr(cfg.dataset, attr)
            if val and not Path(val).is_absolute():
                setattr(cfg.dataset, attr, str(base / val))
    cfg.validate()
    return cfg


def load_config(path) -> AuditConfig:
    """Read a YAML config; dataset paths resolve relative to the file."""
    path = Path(path)
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return config_from_dict(raw, path.parent)
