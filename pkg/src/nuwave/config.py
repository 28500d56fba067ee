"""Run configuration: dataclass sections loaded from YAML with strict keys."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .diffusion import PRESETS as SCHEDULE_PRESETS, manual_schedule, schedule_preset
from .dsp import CorpusSpec
from .model import MODEL_PRESETS, ModelConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    corpus_dir: str = "corpus"
    sample_rate: int = 4000
    duration: float = 2.0
    n_train: int = 20
    n_test: int = 4
    components: list = field(default_factory=lambda: [2, 5])
    f0_range: list = field(default_factory=lambda: [80.0, 300.0])
    band: list = field(default_factory=lambda: [40.0, 1950.0])
    noise_gain: float = 0.05
    edge_silence: float = 0.1
    encoding: str = "pcm16"

    def corpus_spec(self, n):
        return CorpusSpec(sample_rate=self.sample_rate, duration=self.duration, n_utterances=n,
                          components=tuple(self.components), f0_range=tuple(self.f0_range),
                          band=tuple(self.band), noise_gain=self.noise_gain,
                          edge_silence=self.edge_silence)


@dataclass
class ModelSection:
    preset: str = "desk"
    overrides: dict = field(default_factory=dict)


@dataclass
class ScheduleConfig:
    # preset name or explicit list of betas
    train: object = "paper-train-1000"
    infer: object = "paper-infer-8"


@dataclass
class OptimConfig:
    lr: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainConfig:
    steps: int = 20000
    patch_base: int = 32768
    checkpoint_every: int = 1000


@dataclass
class EvalConfig:
    spectrograms: bool = False


@dataclass
class RunConfig:
    seed: int = 0
    upscale_ratio: int = 2
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelSection = field(default_factory=ModelSection)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def model_config(self):
        if self.model.preset not in MODEL_PRESETS:
            raise ConfigError(f"unknown model preset {self.model.preset!r}")
        base = MODEL_PRESETS[self.model.preset](self.upscale_ratio).to_dict()
        unknown = set(self.model.overrides) - set(base)
        if unknown:
            raise ConfigError(f"unknown model override keys: {sorted(unknown)}")
        if "upscale_ratio" in self.model.overrides:
            raise ConfigError("set upscale_ratio at the top level, not as a model override")
        base.update(self.model.overrides)
        return ModelConfig.from_dict(base)

    def train_schedule(self):
        return _schedule(self.schedule.train)

    def infer_schedule(self):
        return _schedule(self.schedule.infer)

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)


def _schedule(spec):
    if isinstance(spec, str):
        if spec not in SCHEDULE_PRESETS:
            raise ConfigError(f"unknown schedule preset {spec!r}")
        return schedule_preset(spec)
    try:
        return manual_schedule([float(b) for b in spec])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid schedule betas: {exc}") from None


def _build(cls, values, where):
    if not isinstance(values, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(values).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(values) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config keys in {where or 'top level'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in values.items():
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}".lstrip("."))
        else:
            kwargs[name] = value
    return dataclasses.replace(cls(), **kwargs)


def _merge(base, update):
    out = dict(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "overrides":
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


DESK_PRESET = {
    "upscale_ratio": 2,
    "data": {"sample_rate": 4000},
    "model": {"preset": "desk"},
    "schedule": {"train": "paper-train-1000", "infer": "paper-infer-8"},
    "optim": {"lr": 1e-3},
    "train": {"steps": 20000, "patch_base": 2048, "checkpoint_every": 1000},
}

PAPER_PRESET = {
    "upscale_ratio": 2,
    "data": {"sample_rate": 48000, "band": [40.0, 23500.0], "f0_range": [80.0, 300.0],
             "duration": 4.0},
    "model": {"preset": "paper"},
    "optim": {"lr": 3e-5},
    "train": {"patch_base": 32768},
}

RUN_PRESETS = {"desk": DESK_PRESET, "paper": PAPER_PRESET}


def parse_override(text):
    """``a.b.c=value`` -> nested dict; the value is parsed as YAML."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    node = yaml.safe_load(raw)
    for part in reversed(key.strip().split(".")):
        node = {part: node}
    return node


def load_config(path=None, preset="desk", overrides=()):
    values = dict(RUN_PRESETS[preset]) if preset else {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        values = _merge(values, loaded)
    for ov in overrides:
        values = _merge(values, ov)
    cfg = _build(RunConfig, values, "")
    if not isinstance(cfg.upscale_ratio, int) or cfg.upscale_ratio < 2:
        raise ConfigError(f"upscale_ratio must be an integer >= 2, got {cfg.upscale_ratio!r}")
    try:
        cfg.model_config()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid model config: {exc}") from None
    cfg.train_schedule()
    cfg.infer_schedule()
    return cfg
