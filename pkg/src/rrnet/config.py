"""Run configuration: flat ``section.key=value`` text files, presets, sweeps.

Example::

    task.preset=filmtrust
    data.ratings=data/filmtrust/ratings.txt
    data.trust=data/filmtrust/trust.txt
    train.epochs=500
    sweep.model.hidden=8,16,32
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .build import BuildConfig
from .errors import ConfigError
from .model import ModelConfig
from .train import TrainConfig

MAPPING_PRESETS = ("synthetic", "esc10", "esc50", "cifar10", "cifar100")
PRESETS = MAPPING_PRESETS + ("filmtrust",)


@dataclass
class DataConfig:
    ratings: str = ""
    trust: str = ""
    features1: str = ""
    features2: str = ""
    confidence: str = ""
    truth: str = ""
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 0
    embedding_dim: int = 128
    observed_pairs: bool = False
    max_inter_edges: int = 8_000_000
    rating_min: float = 0.5
    rating_max: float = 4.0

    def __post_init__(self):
        self.split = tuple(float(x) for x in self.split)
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ConfigError(f"data.split must be three fractions summing to 1, got {self.split}")
        if self.embedding_dim <= 0:
            raise ConfigError("data.embedding_dim must be positive")
        if self.rating_max <= self.rating_min:
            raise ConfigError("data.rating_max must exceed data.rating_min")


@dataclass
class SynthConfig:
    n: int = 100
    clusters: int = 10
    dim1: int = 16
    dim2: int = 12
    latent_dim: int = 8
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.clusters <= self.n:
            raise ConfigError(f"synth.clusters must lie in [1, synth.n], got {self.clusters}")
        if self.noise < 0:
            raise ConfigError("synth.noise must be non-negative")


@dataclass
class RunConfig:
    preset: str = "synthetic"
    build: BuildConfig = field(default_factory=BuildConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    out_dir: str = "runs/latest"
    repeats: int = 1
    sweep: list[tuple[str, list[str]]] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return "rating" if self.preset == "filmtrust" else "mapping"

    @property
    def uses_files(self) -> bool:
        return self.kind == "rating" or self.preset != "synthetic" or bool(self.data.features1)

    def input_paths(self) -> dict[str, str]:
        if self.kind == "rating":
            keys = ("ratings", "trust")
        elif self.uses_files:
            keys = ("features1", "features2", "confidence", "truth")
        else:
            keys = ()
        return {f"data.{k}": getattr(self.data, k) for k in keys}

    def check_paths(self) -> None:
        """Raise ``FileNotFoundError`` naming the first missing input file."""
        for key, path in self.input_paths().items():
            if key == "data.trust" and not path:
                continue
            if not path:
                raise ConfigError(f"{key} must be set for preset {self.preset!r}")
            if not Path(path).is_file():
                raise FileNotFoundError(f"{key}: no such file {path}")


def _preset_values(name: str) -> dict[str, Any]:
    shared_optim = {"train.momentum": 0.9, "train.weight_decay": 5e-4, "train.reduction": "mean"}
    common_mapping = {"model.hidden": 16, "model.encoder_hidden_layers": 1,
                      "build.metric": "cosine", "train.epochs": 500,
                      "data.split": (0.6, 0.2, 0.2), **shared_optim}
    table = {
        "synthetic": {**common_mapping, "model.hidden": 32, "model.n_intra_units": 1,
                      "model.n_inter_units": 1, "build.k_intra1": 5, "build.k_intra2": 2,
                      "build.k_inter": 10, "train.learning_rate": 0.1, "train.epochs": 1000,
                      "train.eval_every": 10},
        "esc10": {**common_mapping, "model.n_intra_units": 1, "model.n_inter_units": 1,
                  "build.k_intra1": 5, "build.k_intra2": 2, "build.k_inter": 10,
                  "train.learning_rate": 0.01},
        "esc50": {**common_mapping, "model.n_intra_units": 1, "model.n_inter_units": 1,
                  "build.k_intra1": 10, "build.k_intra2": 2, "build.k_inter": 20,
                  "train.learning_rate": 0.1},
        "cifar10": {**common_mapping, "model.n_intra_units": 2, "model.n_inter_units": 3,
                    "build.k_intra1": 10, "build.k_intra2": 2, "build.k_inter": 10,
                    "train.learning_rate": 0.01},
        "cifar100": {**common_mapping, "model.n_intra_units": 2, "model.n_inter_units": 3,
                     "build.k_intra1": 20, "build.k_intra2": 3, "build.k_inter": 15,
                     "train.learning_rate": 0.01},
        "filmtrust": {"model.hidden": 16, "model.encoder_hidden_layers": 1,
                      "model.n_intra_units": 2, "model.n_inter_units": 3,
                      "train.learning_rate": 0.01, "train.epochs": 500, "train.eval_every": 1,
                      "data.embedding_dim": 128, "data.split": (0.8, 0.1, 0.1),
                      "data.ratings": "data/filmtrust/ratings.txt",
                      "data.trust": "data/filmtrust/trust.txt", "repeats": 5, **shared_optim},
    }
    if name not in table:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    return table[name]


_SECTIONS = ("build", "model", "train", "data", "synth")
_TOP = ("preset", "out_dir", "repeats")
_HIDDEN = {("model", "raw_dims")}
# axes that expand into several real fields
_DERIVED = {"model.total_units"}


def _field_types(obj) -> dict[str, Any]:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


def _coerce(key: str, text: str, current: Any) -> Any:
    text = text.strip()
    try:
        if isinstance(current, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        if isinstance(current, tuple):
            return tuple(float(x) for x in text.split(","))
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(current).__name__}") from None


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


def _set(cfg: RunConfig, key: str, value: Any) -> None:
    if key == "task.preset":
        key = "preset"
    if key in _TOP:
        current = getattr(cfg, key)
        setattr(cfg, key, _coerce(key, value, current) if isinstance(value, str) else value)
        return
    if key == "model.total_units":
        total = int(value)
        cfg.model.n_intra_units = total // 2
        cfg.model.n_inter_units = total - total // 2
        return
    section, _, name = key.partition(".")
    if section not in _SECTIONS or not name or (section, name) in _HIDDEN:
        raise ConfigError(f"unknown config key {key!r}")
    obj = getattr(cfg, section)
    fields = _field_types(obj)
    if name not in fields:
        raise ConfigError(f"unknown config key {key!r}")
    setattr(obj, name, _coerce(key, value, fields[name]) if isinstance(value, str) else value)


def _revalidate(cfg: RunConfig) -> RunConfig:
    for section in _SECTIONS:
        setattr(cfg, section, dataclasses.replace(getattr(cfg, section)))
    if cfg.preset not in PRESETS:
        raise ConfigError(f"unknown preset {cfg.preset!r}; choose from {PRESETS}")
    if cfg.train.learning_rate <= 0:
        raise ConfigError("train.learning_rate must be positive")
    if cfg.repeats < 1:
        raise ConfigError("repeats must be >= 1")
    return cfg


def parse_lines(lines) -> list[tuple[str, str]]:
    out = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        out.append((key.strip(), value.strip()))
    return out


def resolve(pairs: list[tuple[str, str]], overrides: Optional[dict[str, str]] = None) -> RunConfig:
    """Build a RunConfig: defaults, then the preset, then explicit keys, then overrides."""
    pairs = list(pairs) + list((overrides or {}).items())
    preset = "synthetic"
    for key, value in pairs:
        if key in ("task.preset", "preset"):
            preset = value
    cfg = RunConfig()
    for key, value in _preset_values(preset).items():
        _set(cfg, key, value)
    cfg.preset = preset
    for key, value in pairs:
        if key in ("task.preset", "preset"):
            continue
        if key.startswith("sweep."):
            axis = key[len("sweep."):]
            if axis not in _DERIVED:
                _check_key(axis)
            cfg.sweep.append((axis, [v.strip() for v in value.split(",") if v.strip()]))
            continue
        _set(cfg, key, value)
    return _revalidate(cfg)


def _check_key(key: str) -> None:
    probe = RunConfig()
    section, _, name = key.partition(".")
    if key in _TOP:
        return
    if section not in _SECTIONS or (section, name) in _HIDDEN or \
            name not in _field_types(getattr(probe, section)):
        raise ConfigError(f"unknown sweep axis {key!r}")


def load_config(path, overrides: Optional[dict[str, str]] = None) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return resolve(parse_lines(p.read_text().splitlines()), overrides)


def to_lines(cfg: RunConfig) -> list[str]:
    """Every resolved field, defaults included; feeding these back reproduces ``cfg``."""
    lines = [f"task.preset={cfg.preset}", f"out_dir={cfg.out_dir}", f"repeats={cfg.repeats}"]
    for section in _SECTIONS:
        for name, value in _field_types(getattr(cfg, section)).items():
            if (section, name) in _HIDDEN:
                continue
            lines.append(f"{section}.{name}={_format(value)}")
    for axis, values in cfg.sweep:
        lines.append(f"sweep.{axis}={','.join(values)}")
    return lines


def sweep_cells(cfg: RunConfig) -> list[tuple[dict[str, str], RunConfig]]:
    """Cross product of the sweep axes; each cell is an independent config."""
    if not cfg.sweep:
        return [({}, dataclasses.replace(cfg, sweep=[]))]
    axes = [a for a, _ in cfg.sweep]
    base = [line for line in to_lines(cfg) if not line.startswith("sweep.")]
    cells = []
    for combo in itertools.product(*(vals for _, vals in cfg.sweep)):
        assignment = dict(zip(axes, combo))
        cells.append((assignment, resolve(parse_lines(base), assignment)))
    return cells
