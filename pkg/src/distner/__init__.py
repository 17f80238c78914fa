"""Distantly supervised sequence tagging with noise-robust training.

The pipeline: match a gazetteer (or a synthetic generator) to get cheap noisy
labels, train an ensemble of taggers under a noise-tolerant loss with on-line
label removal, distill the ensemble into one model, then self-train it on its
own sharpened soft labels over original and replacement-augmented text.
"""
from .augment import (
    AugmentedPair,
    MlmAdapter,
    SubprocessMlmClient,
    augment_corpus,
    audit_augmentation,
    mask_sequence,
    sample_replacements,
    train_corpus_mlm,
)
from .config import TrainRecipe, load_recipe, parse_recipe, write_default_config
from .corpus import (
    LabelAssignment,
    Sentence,
    TagScheme,
    read_column_corpus,
    write_column_corpus,
)
from .ensembling import EnsembleSpec, average_predictions, distill, train_members
from .errors import DistnerError
from .evaluation import PRF, decode_entities, encode_entities, score, score_corpus
from .gazetteer import Gazetteer, match_gazetteer, read_gazetteer, write_gazetteer
from .harness import (
    NoiseSpec,
    default_grammar,
    generate,
    inject_noise,
    run_ab,
)
from .losses import GceConfig, ce_loss, gce_loss, mae_loss
from .model import (
    EncoderSpec,
    TaggerModel,
    Vocabulary,
    build_tagger,
    configure_torch,
    load_tagger,
    predict_corpus,
    save_tagger,
)
from .robust import RobustSchedule, train_robust, update_weights
from .selftrain import SelfTrainSchedule, compute_soft_labels, self_train, st_loss

__version__ = "0.1.0"

__all__ = [
    "AugmentedPair",
    "MlmAdapter",
    "SubprocessMlmClient",
    "augment_corpus",
    "audit_augmentation",
    "mask_sequence",
    "sample_replacements",
    "train_corpus_mlm",
    "TrainRecipe",
    "load_recipe",
    "parse_recipe",
    "write_default_config",
    "LabelAssignment",
    "Sentence",
    "TagScheme",
    "read_column_corpus",
    "write_column_corpus",
    "EnsembleSpec",
    "average_predictions",
    "distill",
    "train_members",
    "DistnerError",
    "PRF",
    "decode_entities",
    "encode_entities",
    "score",
    "score_corpus",
    "Gazetteer",
    "match_gazetteer",
    "read_gazetteer",
    "write_gazetteer",
    "NoiseSpec",
    "default_grammar",
    "generate",
    "inject_noise",
    "run_ab",
    "GceConfig",
    "ce_loss",
    "gce_loss",
    "mae_loss",
    "EncoderSpec",
    "TaggerModel",
    "Vocabulary",
    "build_tagger",
    "configure_torch",
    "load_tagger",
    "predict_corpus",
    "save_tagger",
    "RobustSchedule",
    "train_robust",
    "update_weights",
    "SelfTrainSchedule",
    "compute_soft_labels",
    "self_train",
    "st_loss",
]
