"""Experiment configuration: defaults, JSON round-trip, override merging."""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .glyphs import GLYPH_NAMES
from .hierarchy import FeatureSet, RolloutSettings
from .pipeline import DataSettings
from .sim import SimConfig

MODEL_KINDS = ("mlp", "lstm")
SUITES = ("preliminary", "main")


@dataclass
class TrainSettings:
    lr: float = 1e-4
    batch_size: int = 16
    epochs: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class EvalSettings:
    resolution: int = 256
    stroke_radius_px: int = 2


@dataclass
class ExperimentConfig:
    suite: str = "main"
    master_seed: int = 1234
    out_dir: str = "runs/main"
    train_glyph: str = "A"
    glyphs: list = field(default_factory=lambda: ["A", "4", "B"])
    model_kinds: list = field(default_factory=lambda: ["mlp", "lstm"])
    feature_sets: list = field(default_factory=lambda: ["pos_vel_trq"])
    feedback_modes: list = field(default_factory=lambda: [False, True])
    run_count: int = 5
    demo_count: int = 7
    jobs: int = 1
    sim: SimConfig = field(default_factory=SimConfig)
    data: DataSettings = field(default_factory=DataSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    rollout: RolloutSettings = field(default_factory=RolloutSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def as_dict(self):
        return dataclasses.asdict(self)

    def content_hash(self):
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def validate(self):
        if self.train_glyph not in GLYPH_NAMES:
            raise ConfigError(f"unknown train glyph {self.train_glyph!r}")
        for g in self.glyphs:
            if g not in GLYPH_NAMES:
                raise ConfigError(f"unknown glyph {g!r}; have {GLYPH_NAMES}")
        for k in self.model_kinds:
            if k not in MODEL_KINDS:
                raise ConfigError(f"unknown model kind {k!r}")
        for f in self.feature_sets:
            try:
                FeatureSet.from_label(f)
            except KeyError as exc:
                raise ConfigError(str(exc)) from exc
        for fb in self.feedback_modes:
            if not isinstance(fb, bool):
                raise ConfigError(f"feedback mode {fb!r} is not a bool")
        if self.run_count < 1:
            raise ConfigError("run_count must be >= 1")
        if self.demo_count < self.data.train_episodes + self.data.val_episodes:
            raise ConfigError(
                f"demo_count {self.demo_count} below train+val episodes "
                f"{self.data.train_episodes}+{self.data.val_episodes}")
        if self.train.epochs < 1 or self.train.batch_size < 1:
            raise ConfigError("train.epochs and train.batch_size must be >= 1")
        if self.train.lr <= 0:
            raise ConfigError("train.lr must be > 0")
        if self.eval.resolution < 8:
            raise ConfigError("eval.resolution must be >= 8")
        if self.eval.stroke_radius_px < 0:
            raise ConfigError("eval.stroke_radius_px must be >= 0")
        if self.rollout.feedback_space not in ("normalized", "physical"):
            raise ConfigError(
                f"unknown feedback space {self.rollout.feedback_space!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.data.downsample < 1:
            raise ConfigError("data.downsample must be >= 1")
        return self


def preset(suite: str) -> ExperimentConfig:
    """Built-in experiment definitions.

    preliminary: trained character only, all three feature sets, feedback
    off -- the reference-richness comparison.  main: both model kinds on
    the full feature set, every character, feedback off and on.
    """
    if suite == "preliminary":
        return ExperimentConfig(
            suite="preliminary",
            out_dir="runs/preliminary",
            glyphs=["A"],
            feature_sets=["pos", "pos_vel", "pos_vel_trq"],
            feedback_modes=[False],
        )
    if suite == "main":
        return ExperimentConfig(suite="main")
    raise ConfigError(f"unknown experiment suite {suite!r}; have {SUITES}")


# ---------------------------------------------------------------------------
# dict round-trip with strict keys


def _from_dict(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, "
                          f"got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        sub = f"{path}.{name}" if path else name
        if dataclasses.is_dataclass(f.type):
            kwargs[name] = _from_dict(f.type, value, sub)
        elif f.type is tuple or isinstance(f.default, tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _merge(base: dict, override: dict, path=""):
    out = dict(base)
    for key, value in override.items():
        sub = f"{path}.{key}" if path else key
        if key in out and isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{sub}: expected an object")
            out[key] = _merge(out[key], value, sub)
        else:
            out[key] = value
    return out


def config_from_dict(data: dict) -> ExperimentConfig:
    cfg = _from_dict(ExperimentConfig, data, "")
    return cfg.validate()


def load_config(path=None, base_suite: str = "main",
                overrides: dict | None = None) -> ExperimentConfig:
    """Preset -> optional JSON file -> optional override dict, deep-merged."""
    merged = preset(base_suite).as_dict()
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        merged = _merge(merged, data)
    if overrides:
        merged = _merge(merged, overrides)
    return config_from_dict(merged)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.as_dict(), indent=2, sort_keys=True)
