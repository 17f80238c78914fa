"""Run configuration: one INI file with a section per pipeline stage.

Unknown sections or keys are rejected outright — a typo must never silently
fall back to a default.  Values are converted per key; the dataclasses below
carry the validated result and are what the pipeline stages actually read.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .model import ENCODER_KINDS, EncoderSpec, Vocabulary


@dataclass(frozen=True)
class DataConfig:
    """Where the corpus comes from: the synthetic benchmark or files on disk."""

    mode: str = "synthetic"
    entity_types: tuple[str, ...] = ()
    train_path: str = ""
    test_path: str = ""
    gazetteer_path: str = ""
    case_sensitive: bool = True

    def __post_init__(self) -> None:
        if self.mode not in ("synthetic", "files"):
            raise ConfigError(f"data.mode must be 'synthetic' or 'files', got {self.mode!r}")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "tiny-transformer"
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    max_len: int = 64
    dropout: float = 0.1

    def __post_init__(self) -> None:
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"model.kind must be one of {ENCODER_KINDS}, got {self.kind!r}")

    def encoder_spec(self, vocab: Vocabulary) -> EncoderSpec:
        return EncoderSpec(
            vocab=vocab,
            kind=self.kind,
            hidden_size=self.hidden_size,
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            max_len=self.max_len,
            dropout=self.dropout,
        )


@dataclass(frozen=True)
class RobustConfig:
    q: float = 0.7
    tau: float = 0.7
    passes: int = 12
    weight_update_period: int = 50
    drop_rate: float = 0.5
    batch_size: int = 32
    lr: float = 3e-3


@dataclass(frozen=True)
class EnsembleConfig:
    num_members: int = 5
    distill_epochs: int = 8
    batch_size: int = 32
    lr: float = 1e-3


@dataclass(frozen=True)
class AugmentConfig:
    adapter: str = "corpus-mlm"
    mask_rate: float = 0.15
    top_k: int = 5
    mlm_epochs: int = 5
    mlm_lr: float = 1e-3

    def __post_init__(self) -> None:
        allowed = ("corpus-mlm", "grammar-oracle", "subprocess")
        if self.adapter not in allowed:
            raise ConfigError(f"augment.adapter must be one of {allowed}, got {self.adapter!r}")


@dataclass(frozen=True)
class SelfTrainConfig:
    iterations: int = 3
    lr: float = 2e-4
    batch_size: int = 32
    confidence_offset: float = 0.05
    passes_per_iteration: int = 1


@dataclass(frozen=True)
class BenchConfig:
    """Synthetic benchmark sizes, noise rates, and seed layout."""

    train_size: int = 2000
    test_size: int = 500
    data_seed: int = 7
    flip_rate: float = 0.3
    deletion_rate: float = 0.2
    ab_seeds: int = 3
    variance_seeds: int = 5
    seed_base: int = 100


@dataclass(frozen=True)
class TrainRecipe:
    """Everything a pipeline run needs, one field per stage."""

    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    robust: RobustConfig = field(default_factory=RobustConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    selftrain: SelfTrainConfig = field(default_factory=SelfTrainConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    seed: int = 0

    def metadata(self) -> dict[str, str]:
        """Hyperparameters worth carrying inside checkpoints."""
        return {
            "recipe.q": repr(self.robust.q),
            "recipe.tau": repr(self.robust.tau),
            "recipe.num_members": str(self.ensemble.num_members),
            "recipe.mask_rate": repr(self.augment.mask_rate),
            "recipe.top_k": str(self.augment.top_k),
            "recipe.st_iterations": str(self.selftrain.iterations),
            "seed": str(self.seed),
        }


_SECTIONS: dict[str, type] = {
    "data": DataConfig,
    "model": ModelConfig,
    "robust": RobustConfig,
    "ensemble": EnsembleConfig,
    "augment": AugmentConfig,
    "selftrain": SelfTrainConfig,
    "bench": BenchConfig,
}

_RUN_KEYS = ("seed",)


def _convert(section: str, key: str, raw: str, target: Any) -> Any:
    try:
        if target is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if target is int:
            return int(raw)
        if target is float:
            return float(raw)
        if target is str:
            return raw.strip()
        if target == tuple[str, ...]:
            return tuple(raw.split())
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc
    raise ConfigError(f"[{section}] {key}: unsupported config field type {target}")


def _section_fields(cls: type) -> dict[str, Any]:
    return {f.name: f.type for f in fields(cls)}


_TYPE_NAMES = {
    "str": str,
    "int": int,
    "float": float,
    "bool": bool,
    "tuple[str, ...]": tuple[str, ...],
}


def _resolve_type(annotation: Any) -> Any:
    if isinstance(annotation, str):
        return _TYPE_NAMES[annotation]
    return annotation


def load_recipe(path: Path | str, overrides: tuple[str, ...] = ()) -> TrainRecipe:
    """Parse an INI config file, apply ``section.key=value`` overrides."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    return parse_recipe(text, overrides)


def parse_recipe(text: str, overrides: tuple[str, ...] = ()) -> TrainRecipe:
    """Parse INI-format config text; unknown sections or keys are rejected."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    values: dict[str, dict[str, str]] = {
        section: dict(parser.items(section)) for section in parser.sections()
    }
    for spec in overrides:
        if "=" not in spec or "." not in spec.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {spec!r}")
        dotted, value = spec.split("=", 1)
        section, key = dotted.split(".", 1)
        values.setdefault(section, {})[key] = value

    known = set(_SECTIONS) | {"run"}
    for section in values:
        if section not in known:
            raise ConfigError(f"unknown config section [{section}]")

    built: dict[str, Any] = {}
    for section, cls in _SECTIONS.items():
        raw_items = values.get(section, {})
        schema = _section_fields(cls)
        kwargs = {}
        for key, raw in raw_items.items():
            if key not in schema:
                raise ConfigError(f"unknown config key [{section}] {key}")
            kwargs[key] = _convert(section, key, raw, _resolve_type(schema[key]))
        built[section] = cls(**kwargs)

    seed = 0
    for key, raw in values.get("run", {}).items():
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown config key [run] {key}")
        seed = _convert("run", key, raw, int)

    return TrainRecipe(
        data=built["data"],
        model=built["model"],
        robust=built["robust"],
        ensemble=built["ensemble"],
        augment=built["augment"],
        selftrain=built["selftrain"],
        bench=built["bench"],
        seed=seed,
    )


def with_seed(recipe: TrainRecipe, seed: int | None) -> TrainRecipe:
    return recipe if seed is None else replace(recipe, seed=seed)


DEFAULT_CONFIG_TEXT = """\
# Pipeline configuration. Every key shown carries its shipped default;
# unknown keys are rejected, so typos fail loudly.

[run]
seed = 0

[data]
# synthetic: generate the benchmark corpus; files: read the paths below.
mode = synthetic
# Used in files mode: ordered entity type names, e.g. "PER LOC ORG MISC".
entity_types =
train_path =
test_path =
gazetteer_path =
case_sensitive = true

[model]
# tiny-transformer | recurrent-bidirectional | pretrained-adapter
kind = tiny-transformer
hidden_size = 64
num_layers = 2
num_heads = 4
max_len = 64
dropout = 0.1

[robust]
# Exponent of the generalized loss; 0.7 trades noise robustness against fit speed.
q = 0.7
# Removal threshold on the model's probability for a token's given label.
tau = 0.7
# Long enough for a plain cross-entropy baseline to start memorizing label
# noise on the bundled benchmark; the robust arm stays stable here.
passes = 12
# Batches between removal-weight refreshes.
weight_update_period = 50
# Fraction of non-entity tokens excluded from training.
drop_rate = 0.5
batch_size = 32
lr = 3e-3

[ensemble]
num_members = 5
# Enough passes over the cached averaged targets for the distilled model to
# reach the averaged ensemble's accuracy rather than stopping short of it.
distill_epochs = 8
batch_size = 32
lr = 1e-3

[augment]
# corpus-mlm | grammar-oracle | subprocess (command from DISTNER_MLM_CMD)
adapter = corpus-mlm
mask_rate = 0.15
top_k = 5
mlm_epochs = 5
mlm_lr = 1e-3

[selftrain]
iterations = 3
# Strong enough for the consistency term on augmented views to matter;
# an order of magnitude lower and self-training barely moves the model.
lr = 2e-4
batch_size = 32
confidence_offset = 0.05
passes_per_iteration = 1

[bench]
train_size = 2000
test_size = 500
data_seed = 7
flip_rate = 0.3
deletion_rate = 0.2
ab_seeds = 3
variance_seeds = 5
seed_base = 100
"""


def write_default_config(path: Path | str) -> None:
    Path(path).write_text(DEFAULT_CONFIG_TEXT, encoding="utf-8")
