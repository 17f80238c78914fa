"""Sequence tagger: a pluggable token encoder behind a two-head output.

One linear head separates entity tokens from non-entity tokens; a second
classifies entity types.  The combined per-token distribution factorizes as

    P(O)    = 1 - p_entity
    P(type) = p_entity * type_dist[type]

so both heads stay consistent with a single joint distribution.  The desk
default encoder is a 2-layer transformer small enough to train in seconds
on one CPU; a bidirectional GRU is available, and an external pre-trained
encoder can be plugged in through ``adapter_factory`` without touching the
heads or training code.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .corpus import LabelAssignment, Sentence, TagScheme
from .errors import ConfigError, ParameterError, ShapeError, TrainingError
from .losses import ProbTable

EPS = 1e-8

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
MASK_TOKEN = "[MASK]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN)

ENCODER_KINDS = ("tiny-transformer", "recurrent-bidirectional", "pretrained-adapter")


def configure_torch(num_threads: int = 1) -> None:
    """Pin CPU thread count; single-threaded mode makes runs bit-reproducible."""
    torch.set_num_threads(num_threads)


@dataclass(frozen=True)
class Vocabulary:
    """Token inventory with reserved pad/unknown/mask entries at ids 0..2."""

    tokens: tuple[str, ...]
    _ids: dict[str, int] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.tokens[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ParameterError(f"vocabulary must start with {SPECIAL_TOKENS}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ParameterError("vocabulary has duplicate tokens")
        object.__setattr__(self, "_ids", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def build(cls, corpus: Sequence[Sentence]) -> "Vocabulary":
        seen = sorted({tok for sent in corpus for tok in sent.tokens} - set(SPECIAL_TOKENS))
        return cls(tokens=SPECIAL_TOKENS + tuple(seen))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    @property
    def mask_id(self) -> int:
        return 2

    def encode(self, tokens: Sequence[str]) -> list[int]:
        unk = self.unk_id
        return [self._ids.get(t, unk) for t in tokens]

    def token(self, idx: int) -> str:
        return self.tokens[idx]


@dataclass(frozen=True)
class EncoderSpec:
    """Architecture and vocabulary of the token encoder."""

    vocab: Vocabulary
    kind: str = "tiny-transformer"
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    max_len: int = 64
    dropout: float = 0.1

    def __post_init__(self) -> None:
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder kind {self.kind!r}; choose from {ENCODER_KINDS}")
        if self.hidden_size <= 0 or self.num_layers <= 0 or self.max_len <= 0:
            raise ParameterError("hidden size, layer count and max length must be positive")
        if self.kind == "tiny-transformer" and self.hidden_size % self.num_heads:
            raise ParameterError(
                f"hidden size {self.hidden_size} not divisible by {self.num_heads} heads"
            )
        if self.kind == "recurrent-bidirectional" and self.hidden_size % 2:
            raise ParameterError("bidirectional encoder needs an even hidden size")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout must be in [0, 1), got {self.dropout}")


class TransformerTokenEncoder(nn.Module):
    def __init__(self, spec: EncoderSpec):
        super().__init__()
        h = spec.hidden_size
        self.embed = nn.Embedding(len(spec.vocab), h, padding_idx=spec.vocab.pad_id)
        self.positions = nn.Embedding(spec.max_len, h)
        self.dropout = nn.Dropout(spec.dropout)
        layer = nn.TransformerEncoderLayer(
            d_model=h,
            nhead=spec.num_heads,
            dim_feedforward=4 * h,
            dropout=spec.dropout,
            batch_first=True,
        )
        self.layers = nn.TransformerEncoder(
            layer, num_layers=spec.num_layers, enable_nested_tensor=False
        )

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        pos = torch.arange(ids.shape[1], device=ids.device)
        x = self.dropout(self.embed(ids) + self.positions(pos)[None, :, :])
        return self.layers(x, src_key_padding_mask=pad_mask)


class RecurrentTokenEncoder(nn.Module):
    def __init__(self, spec: EncoderSpec):
        super().__init__()
        h = spec.hidden_size
        self.embed = nn.Embedding(len(spec.vocab), h, padding_idx=spec.vocab.pad_id)
        self.dropout = nn.Dropout(spec.dropout)
        self.rnn = nn.GRU(
            input_size=h,
            hidden_size=h // 2,
            num_layers=spec.num_layers,
            bidirectional=True,
            batch_first=True,
            dropout=spec.dropout if spec.num_layers > 1 else 0.0,
        )

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        out, _ = self.rnn(self.dropout(self.embed(ids)))
        return out


def build_encoder(
    spec: EncoderSpec,
    adapter_factory: Callable[[EncoderSpec], nn.Module] | None = None,
) -> nn.Module:
    if spec.kind == "tiny-transformer":
        return TransformerTokenEncoder(spec)
    if spec.kind == "recurrent-bidirectional":
        return RecurrentTokenEncoder(spec)
    if adapter_factory is None:
        raise ConfigError(
            "encoder kind 'pretrained-adapter' needs an adapter_factory providing the "
            "external encoder module; see README for the integration contract"
        )
    return adapter_factory(spec)


@dataclass
class TaggerOutput:
    """Per-sentence inference products: combined table plus cached heads."""

    probs: ProbTable
    p_entity: np.ndarray
    type_dist: np.ndarray


class TaggerModel(nn.Module):
    """Encoder plus binary entity head and entity-type head."""

    def __init__(
        self,
        spec: EncoderSpec,
        scheme: TagScheme,
        adapter_factory: Callable[[EncoderSpec], nn.Module] | None = None,
    ):
        super().__init__()
        self.spec = spec
        self.scheme = scheme
        self.encoder = build_encoder(spec, adapter_factory)
        self.binary_head = nn.Linear(spec.hidden_size, 1)
        self.type_head = nn.Linear(spec.hidden_size, scheme.num_entity_types)

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def batch_tensors(self, sentences: Sequence[Sentence]) -> tuple[torch.Tensor, torch.Tensor]:
        """Pad sentences into id and pad-mask tensors (True marks padding)."""
        if not sentences:
            raise ShapeError("empty batch")
        vocab = self.spec.vocab
        for sent in sentences:
            if len(sent) > self.spec.max_len:
                raise ShapeError(
                    f"{sent.seq_id}: {len(sent)} tokens exceeds max length {self.spec.max_len}"
                )
        width = max(len(s) for s in sentences)
        ids = torch.full((len(sentences), width), vocab.pad_id, dtype=torch.long)
        pad = torch.ones((len(sentences), width), dtype=torch.bool)
        for row, sent in enumerate(sentences):
            ids[row, : len(sent)] = torch.tensor(vocab.encode(sent.tokens), dtype=torch.long)
            pad[row, : len(sent)] = False
        return ids, pad

    def forward_batch(
        self, ids: torch.Tensor, pad_mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Return (p_entity, type_dist, combined) with shapes (B,L), (B,L,E), (B,L,C)."""
        hidden = self.encoder(ids, pad_mask)
        p_entity = torch.sigmoid(self.binary_head(hidden)).squeeze(-1)
        type_dist = torch.softmax(self.type_head(hidden), dim=-1)
        combined = torch.cat(
            [(1.0 - p_entity).unsqueeze(-1), p_entity.unsqueeze(-1) * type_dist], dim=-1
        )
        return p_entity, type_dist, combined

    def forward(self, sentence: Sentence) -> TaggerOutput:
        ids, pad = self.batch_tensors([sentence])
        p_entity, type_dist, combined = self.forward_batch(ids, pad)
        n = len(sentence)
        return TaggerOutput(
            probs=ProbTable(combined[0, :n].detach().double().numpy()),
            p_entity=p_entity[0, :n].detach().double().numpy(),
            type_dist=type_dist[0, :n].detach().double().numpy(),
        )

    def export_state(self) -> dict[str, np.ndarray]:
        return {
            name: tensor.detach().cpu().numpy().astype(np.float32)
            for name, tensor in self.state_dict().items()
        }

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        state = {name: torch.from_numpy(np.asarray(arr, dtype=np.float32)) for name, arr in arrays.items()}
        self.load_state_dict(state, strict=True)


def build_tagger(spec: EncoderSpec, scheme: TagScheme, seed: int) -> TaggerModel:
    """Construct a tagger with seed-determined initial parameters."""
    torch.manual_seed(seed)
    return TaggerModel(spec, scheme)


def clone_tagger(model: TaggerModel) -> TaggerModel:
    """Independent copy with identical parameters."""
    twin = TaggerModel(model.spec, model.scheme)
    twin.load_state_dict(model.state_dict())
    return twin


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class Objective:
    """What a train step minimizes.

    ``kind`` is one of the token-classification losses ("ce", "mae", "gce"),
    applied to both heads on their own targets with equal weight, or "kl"
    for matching per-token target distributions over all classes.
    """

    kind: str
    q: float = 0.7

    def __post_init__(self) -> None:
        if self.kind not in ("ce", "mae", "gce", "kl"):
            raise ParameterError(f"unknown objective kind {self.kind!r}")
        if self.kind == "gce" and not 0.0 < self.q <= 1.0:
            raise ParameterError(f"q must be in (0, 1], got {self.q}")


def loss_terms(f: torch.Tensor, kind: str, q: float) -> torch.Tensor:
    """Elementwise per-token loss term on label probabilities f."""
    f = f.clamp_min(EPS)
    if kind == "ce":
        return -torch.log(f)
    if kind == "mae":
        return 1.0 - f
    if kind == "gce":
        return (1.0 - f.pow(q)) / q
    raise ParameterError(f"unknown loss kind {kind!r}")


def classification_loss(
    p_entity: torch.Tensor,
    type_dist: torch.Tensor,
    labels: torch.Tensor,
    contributing: torch.Tensor,
    kind: str,
    q: float,
) -> torch.Tensor | None:
    """Two-head loss: binary term on all contributing tokens plus a type
    term on the entity-labeled ones, each a mean over its own support."""
    binary_f = torch.where(labels == 0, 1.0 - p_entity, p_entity)
    total = None
    if contributing.any():
        total = loss_terms(binary_f[contributing], kind, q).mean()
    entity = contributing & (labels > 0)
    if entity.any():
        offsets = (labels - 1).clamp_min(0)
        type_f = type_dist.gather(-1, offsets.unsqueeze(-1)).squeeze(-1)
        type_term = loss_terms(type_f[entity], kind, q).mean()
        total = type_term if total is None else total + type_term
    return total


def kl_to_target(
    combined: torch.Tensor, target: torch.Tensor, real: torch.Tensor
) -> torch.Tensor | None:
    """Mean per-token KL(target || combined) over real (non-pad) tokens."""
    if not real.any():
        return None
    t = target.clamp(min=EPS)
    per_token = (t * (t.log() - combined.clamp_min(EPS).log())).sum(-1)
    return per_token[real].mean()


ClassificationBatch = Sequence[tuple[Sentence, LabelAssignment]]
TargetBatch = Sequence[tuple[Sentence, np.ndarray]]


def _pad_per_token(values: Sequence[np.ndarray], width: int, dtype: torch.dtype) -> torch.Tensor:
    out = torch.zeros((len(values), width), dtype=dtype)
    for row, arr in enumerate(values):
        out[row, : len(arr)] = torch.tensor(np.asarray(arr))
    return out


def train_step(
    model: TaggerModel,
    batch: ClassificationBatch | TargetBatch,
    objective: Objective,
    optimizer: torch.optim.Optimizer,
    scheduler: torch.optim.lr_scheduler.LRScheduler | None = None,
) -> float:
    """One gradient update; returns the (finite) scalar loss.

    Raises :class:`TrainingError` naming the batch's sequence ids when the
    loss or a gradient is non-finite; the parameters are left untouched in
    that case.
    """
    sentences = [item[0] for item in batch]
    ids, pad = model.batch_tensors(sentences)
    p_entity, type_dist, combined = model.forward_batch(ids, pad)
    real = ~pad

    if objective.kind == "kl":
        width = ids.shape[1]
        targets = torch.zeros((len(batch), width, combined.shape[-1]), dtype=combined.dtype)
        for row, (sent, rows) in enumerate(batch):
            rows = np.asarray(rows)
            if rows.shape != (len(sent), combined.shape[-1]):
                raise ShapeError(
                    f"{sent.seq_id}: target shape {rows.shape} does not match "
                    f"({len(sent)}, {combined.shape[-1]})"
                )
            targets[row, : len(sent)] = torch.tensor(rows, dtype=combined.dtype)
        loss = kl_to_target(combined, targets, real)
    else:
        width = ids.shape[1]
        labels = _pad_per_token([a.labels for _, a in batch], width, torch.long)
        weights = _pad_per_token([a.weights for _, a in batch], width, combined.dtype)
        included = _pad_per_token(
            [a.included.astype(np.float64) for _, a in batch], width, combined.dtype
        )
        contributing = real & (weights > 0) & (included > 0)
        loss = classification_loss(p_entity, type_dist, labels, contributing, objective.kind, objective.q)

    if loss is None:
        return 0.0
    if not torch.isfinite(loss):
        raise TrainingError(
            f"non-finite loss in batch of sequences {[s.seq_id for s in sentences]}"
        )
    optimizer.zero_grad()
    loss.backward()
    for name, param in model.named_parameters():
        if param.grad is not None and not torch.all(torch.isfinite(param.grad)):
            raise TrainingError(
                f"non-finite gradient in {name} for batch {[s.seq_id for s in sentences]}"
            )
    optimizer.step()
    if scheduler is not None:
        scheduler.step()
    return float(loss.detach())


def make_optimizer(
    model: nn.Module, lr: float, total_steps: int | None = None
) -> tuple[torch.optim.Optimizer, torch.optim.lr_scheduler.LRScheduler | None]:
    """Adam with a linear learning-rate decay to zero over ``total_steps``."""
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    if total_steps is None or total_steps <= 0:
        return optimizer, None
    schedule = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: max(0.0, 1.0 - step / total_steps)
    )
    return optimizer, schedule


# ---------------------------------------------------------------------------
# Inference


def predict_full(
    model: TaggerModel, corpus: Sequence[Sentence], batch_size: int = 64
) -> list[TaggerOutput]:
    """Deterministic inference (dropout off) preserving corpus order."""
    was_training = model.training
    model.eval()
    outputs: list[TaggerOutput] = []
    with torch.no_grad():
        for start in range(0, len(corpus), batch_size):
            chunk = corpus[start : start + batch_size]
            ids, pad = model.batch_tensors(chunk)
            p_entity, type_dist, combined = model.forward_batch(ids, pad)
            for row, sent in enumerate(chunk):
                n = len(sent)
                outputs.append(
                    TaggerOutput(
                        probs=ProbTable(combined[row, :n].double().numpy()),
                        p_entity=p_entity[row, :n].double().numpy(),
                        type_dist=type_dist[row, :n].double().numpy(),
                    )
                )
    if was_training:
        model.train()
    return outputs


def predict_corpus(
    model: TaggerModel, corpus: Sequence[Sentence], batch_size: int = 64
) -> list[ProbTable]:
    return [out.probs for out in predict_full(model, corpus, batch_size)]


def predicted_labels(model: TaggerModel, corpus: Sequence[Sentence], batch_size: int = 64) -> list[list[str]]:
    """Argmax label names per token for every sentence."""
    scheme = model.scheme
    out = []
    for table in predict_corpus(model, corpus, batch_size):
        out.append([scheme.label_name(int(idx)) for idx in table.rows.argmax(axis=1)])
    return out


# ---------------------------------------------------------------------------
# Checkpoint bridging


def spec_metadata(spec: EncoderSpec, scheme: TagScheme) -> dict[str, str]:
    return {
        "encoder.kind": spec.kind,
        "encoder.hidden_size": str(spec.hidden_size),
        "encoder.num_layers": str(spec.num_layers),
        "encoder.num_heads": str(spec.num_heads),
        "encoder.max_len": str(spec.max_len),
        "encoder.dropout": repr(spec.dropout),
        "vocab": " ".join(spec.vocab.tokens),
        "entity_types": " ".join(scheme.entity_types),
    }


def spec_from_metadata(meta: dict[str, str]) -> tuple[EncoderSpec, TagScheme]:
    vocab = Vocabulary(tuple(meta["vocab"].split(" ")))
    spec = EncoderSpec(
        vocab=vocab,
        kind=meta["encoder.kind"],
        hidden_size=int(meta["encoder.hidden_size"]),
        num_layers=int(meta["encoder.num_layers"]),
        num_heads=int(meta["encoder.num_heads"]),
        max_len=int(meta["encoder.max_len"]),
        dropout=float(meta["encoder.dropout"]),
    )
    scheme = TagScheme(tuple(meta["entity_types"].split(" ")))
    return spec, scheme


def save_tagger(model: TaggerModel, path, extra_metadata: dict[str, str] | None = None) -> None:
    from .checkpoints import save_checkpoint

    meta = spec_metadata(model.spec, model.scheme)
    meta.update(extra_metadata or {})
    save_checkpoint(model.export_state(), meta, path)


def load_tagger(path) -> tuple[TaggerModel, dict[str, str]]:
    from .checkpoints import load_checkpoint

    arrays, meta = load_checkpoint(path)
    spec, scheme = spec_from_metadata(meta)
    model = build_tagger(spec, scheme, seed=0)
    model.load_state(arrays)
    return model, meta
