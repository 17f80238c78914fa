"""Contextualized, label-preserving sequence augmentation.

A masked-LM adapter proposes replacements for a random 15% of positions;
candidates are truncated to the top 5, filtered so the surface form agrees
with the original token (capitalization and subword continuation), and
sampled by renormalized probability.  When nothing survives the filter the
original token is kept.  Three adapters ship: a small masked LM trained on
the working corpus, an oracle backed by the synthetic grammar (exact
label-preservation audits), and a line-delimited JSON client for an
external masked-LM process.
"""
from __future__ import annotations

import json
import subprocess
import warnings
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
import torch
from torch import nn

from .corpus import Sentence, token_is_capitalized, token_is_subword
from .errors import AdapterError, ParameterError, ShapeError
from .model import EncoderSpec, MASK_TOKEN, build_encoder, make_optimizer

Candidate = tuple[str, float]


def mask_count(n: int, rate: float) -> int:
    """Number of positions to mask: round-half-up of rate*n, at least 1."""
    return max(1, int(np.floor(rate * n + 0.5)))


@dataclass(frozen=True)
class MaskedSequence:
    """A sentence with a chosen set of positions hidden behind the mask symbol."""

    original: Sentence
    positions: tuple[int, ...]

    def __post_init__(self) -> None:
        n = len(self.original)
        if len(set(self.positions)) != len(self.positions):
            raise ParameterError(f"duplicate masked positions in {self.original.seq_id}")
        if any(p < 0 or p >= n for p in self.positions):
            raise ParameterError(f"masked position out of range in {self.original.seq_id}")

    @property
    def masked_tokens(self) -> list[str]:
        view = list(self.original.tokens)
        for p in self.positions:
            view[p] = MASK_TOKEN
        return view


@dataclass(frozen=True)
class MlmDistribution:
    """Ranked candidates per masked position, probabilities non-increasing."""

    candidates: tuple[tuple[Candidate, ...], ...]

    def __post_init__(self) -> None:
        for position_list in self.candidates:
            if not position_list:
                raise ParameterError("empty candidate list for a masked position")
            probs = [p for _, p in position_list]
            if any(p <= 0.0 for p in probs):
                raise ParameterError("candidate probabilities must be positive")
            if any(a < b - 1e-12 for a, b in zip(probs, probs[1:])):
                raise ParameterError("candidate probabilities must be non-increasing")


class MlmAdapter(Protocol):
    """Ranked-replacement source for masked positions."""

    def candidates(self, masked: MaskedSequence, top_k: int) -> MlmDistribution: ...


@dataclass(frozen=True)
class Replacement:
    position: int
    original: str
    token: str
    rank: int  # 1-based rank in the truncated candidate list; 0 when kept
    kept: bool


@dataclass(frozen=True)
class AugmentedSequence:
    """The augmented token row plus per-position provenance."""

    sentence: Sentence
    replacements: tuple[Replacement, ...]


@dataclass(frozen=True)
class AugmentedPair:
    index: int
    masked: MaskedSequence
    augmented: AugmentedSequence

    @property
    def original(self) -> Sentence:
        return self.masked.original


def mask_sequence(sentence: Sentence, rate: float, rng: np.random.Generator) -> MaskedSequence:
    if not 0.0 < rate < 1.0:
        raise ParameterError(f"mask rate must be in (0, 1), got {rate}")
    n = len(sentence)
    count = mask_count(n, rate)
    positions = tuple(sorted(int(p) for p in rng.choice(n, size=count, replace=False)))
    return MaskedSequence(original=sentence, positions=positions)


def _surface_agrees(original: Sentence, position: int, candidate: str) -> bool:
    return (
        token_is_capitalized(candidate) == original.is_capitalized[position]
        and token_is_subword(candidate) == original.is_subword[position]
    )


def sample_replacements(
    masked: MaskedSequence,
    dist: MlmDistribution,
    top_k: int,
    rng: np.random.Generator,
) -> AugmentedSequence:
    """Sample one replacement per masked position under the surface constraints."""
    if top_k < 1:
        raise ParameterError(f"top_k must be >= 1, got {top_k}")
    if len(dist.candidates) != len(masked.positions):
        raise ShapeError(
            f"{len(dist.candidates)} candidate lists for {len(masked.positions)} "
            f"masked positions in {masked.original.seq_id}"
        )
    original = masked.original
    tokens = list(original.tokens)
    replacements = []
    for position, full_list in zip(masked.positions, dist.candidates):
        truncated = full_list[:top_k]
        eligible = [
            (rank, token, prob)
            for rank, (token, prob) in enumerate(truncated, start=1)
            if _surface_agrees(original, position, token)
        ]
        if not eligible:
            replacements.append(
                Replacement(position, original.tokens[position], original.tokens[position], 0, True)
            )
            continue
        probs = np.array([prob for _, _, prob in eligible], dtype=np.float64)
        choice = int(rng.choice(len(eligible), p=probs / probs.sum()))
        rank, token, _ = eligible[choice]
        tokens[position] = token
        replacements.append(
            Replacement(position, original.tokens[position], token, rank, False)
        )
    sentence = Sentence(
        tokens=tuple(tokens),
        seq_id=original.seq_id,
        is_capitalized=original.is_capitalized,
        is_subword=original.is_subword,
    )
    return AugmentedSequence(sentence=sentence, replacements=tuple(replacements))


def augment_corpus(
    corpus: Sequence[Sentence],
    adapter: MlmAdapter,
    rate: float = 0.15,
    top_k: int = 5,
    seed: int = 0,
) -> list[AugmentedPair]:
    """One augmented sequence per original, skipping adapter failures.

    Each sequence draws from its own generator seeded with ``seed ^ index``,
    so results do not depend on processing order or on other sequences'
    outcomes.
    """
    if seed < 0:
        raise ParameterError(f"seed must be >= 0, got {seed}")
    pairs: list[AugmentedPair] = []
    for index, sentence in enumerate(corpus):
        rng = np.random.default_rng(seed ^ index)
        masked = mask_sequence(sentence, rate, rng)
        try:
            dist = adapter.candidates(masked, top_k)
            augmented = sample_replacements(masked, dist, top_k, rng)
        except AdapterError as exc:
            warnings.warn(f"adapter failed on {sentence.seq_id}: {exc}; pair omitted")
            continue
        pairs.append(AugmentedPair(index=index, masked=masked, augmented=augmented))
    return pairs


def audit_augmentation(pair: AugmentedPair, rate: float, top_k: int) -> list[str]:
    """Return constraint violations (empty list = fully compliant)."""
    problems = []
    original = pair.original
    augmented = pair.augmented.sentence
    masked = set(pair.masked.positions)
    if len(augmented) != len(original):
        problems.append("length changed")
    if len(masked) != mask_count(len(original), rate):
        problems.append(
            f"masked {len(masked)} positions, expected {mask_count(len(original), rate)}"
        )
    for i, (old, new) in enumerate(zip(original.tokens, augmented.tokens)):
        if i not in masked and old != new:
            problems.append(f"unmasked position {i} changed")
    by_position = {r.position: r for r in pair.augmented.replacements}
    if set(by_position) != masked:
        problems.append("provenance positions disagree with masked positions")
    for r in pair.augmented.replacements:
        if r.kept:
            if r.token != r.original:
                problems.append(f"position {r.position} flagged kept but token changed")
            continue
        if not 1 <= r.rank <= top_k:
            problems.append(f"position {r.position} rank {r.rank} outside top {top_k}")
        if not _surface_agrees(original, r.position, r.token):
            problems.append(f"position {r.position} violates surface agreement")
    return problems


def write_augmented_pairs(pairs: Sequence[AugmentedPair], path) -> None:
    """One JSON object per pair: index, masked positions, tokens, provenance."""
    with open(path, "w", encoding="utf-8") as handle:
        for pair in pairs:
            record = {
                "index": pair.index,
                "seq_id": pair.original.seq_id,
                "positions": list(pair.masked.positions),
                "tokens": list(pair.augmented.sentence.tokens),
                "replacements": [
                    [r.position, r.original, r.token, r.rank, r.kept]
                    for r in pair.augmented.replacements
                ],
            }
            handle.write(json.dumps(record) + "\n")


def read_augmented_pairs(path, corpus: Sequence[Sentence]) -> list[AugmentedPair]:
    """Rebuild pairs against the corpus they were generated from."""
    pairs: list[AugmentedPair] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                index = int(record["index"])
                original = corpus[index]
                if record["seq_id"] != original.seq_id:
                    raise ValueError(
                        f"sequence id {record['seq_id']!r} does not match corpus "
                        f"entry {original.seq_id!r} at index {index}"
                    )
                masked = MaskedSequence(
                    original=original, positions=tuple(int(p) for p in record["positions"])
                )
                sentence = Sentence(
                    tokens=tuple(record["tokens"]),
                    seq_id=original.seq_id,
                    is_capitalized=original.is_capitalized,
                    is_subword=original.is_subword,
                )
                replacements = tuple(
                    Replacement(int(p), str(old), str(new), int(rank), bool(kept))
                    for p, old, new, rank, kept in record["replacements"]
                )
            except (KeyError, TypeError, ValueError, IndexError) as exc:
                raise ShapeError(f"{path}:{lineno}: malformed augmented pair: {exc}") from exc
            pairs.append(
                AugmentedPair(
                    index=index,
                    masked=masked,
                    augmented=AugmentedSequence(sentence=sentence, replacements=replacements),
                )
            )
    return pairs


# ---------------------------------------------------------------------------
# Adapter (b): a small masked LM trained on the working corpus


class MaskedLmModel(nn.Module):
    def __init__(self, spec: EncoderSpec):
        super().__init__()
        self.spec = spec
        self.encoder = build_encoder(spec)
        self.lm_head = nn.Linear(spec.hidden_size, len(spec.vocab))

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        return self.lm_head(self.encoder(ids, pad_mask))


class CorpusMlm:
    """Masked-LM adapter backed by a model trained on the corpus itself."""

    def __init__(self, model: MaskedLmModel):
        self.model = model

    def candidates(self, masked: MaskedSequence, top_k: int) -> MlmDistribution:
        spec = self.model.spec
        vocab = spec.vocab
        if len(masked.original) > spec.max_len:
            raise AdapterError(
                f"{masked.original.seq_id}: length {len(masked.original)} exceeds "
                f"adapter max {spec.max_len}"
            )
        ids = torch.tensor([vocab.encode(masked.masked_tokens)], dtype=torch.long)
        pad = torch.zeros_like(ids, dtype=torch.bool)
        self.model.eval()
        with torch.no_grad():
            logits = self.model(ids, pad)[0]
        probs = torch.softmax(logits.double(), dim=-1).numpy()
        special = (vocab.pad_id, vocab.unk_id, vocab.mask_id)
        lists = []
        for position in masked.positions:
            row = probs[position].copy()
            row[list(special)] = 0.0
            order = np.argsort(-row, kind="stable")[:top_k]
            lists.append(tuple((vocab.token(int(i)), float(row[i])) for i in order))
        return MlmDistribution(candidates=tuple(lists))


def train_corpus_mlm(
    corpus: Sequence[Sentence],
    spec: EncoderSpec,
    epochs: int = 5,
    batch_size: int = 32,
    lr: float = 1e-3,
    mask_rate: float = 0.15,
    seed: int = 0,
) -> CorpusMlm:
    """Fit the small masked LM with a plain mask-and-predict objective."""
    if not corpus:
        raise ParameterError("cannot train a masked LM on an empty corpus")
    torch.manual_seed(seed)
    model = MaskedLmModel(spec)
    vocab = spec.vocab
    encoded = [vocab.encode(s.tokens) for s in corpus]
    steps = epochs * max(1, (len(corpus) + batch_size - 1) // batch_size)
    optimizer, decay = make_optimizer(model, lr, steps)
    rng = np.random.default_rng(seed)
    loss_fn = nn.CrossEntropyLoss()
    model.train()
    for _ in range(epochs):
        order = rng.permutation(len(corpus))
        for start in range(0, len(order), batch_size):
            chunk = [encoded[i] for i in order[start : start + batch_size]]
            width = max(len(c) for c in chunk)
            ids = torch.full((len(chunk), width), vocab.pad_id, dtype=torch.long)
            targets = torch.full((len(chunk), width), -100, dtype=torch.long)
            pad = torch.ones((len(chunk), width), dtype=torch.bool)
            for row, seq in enumerate(chunk):
                ids[row, : len(seq)] = torch.tensor(seq)
                pad[row, : len(seq)] = False
                hidden = rng.choice(len(seq), size=mask_count(len(seq), mask_rate), replace=False)
                for p in hidden:
                    targets[row, p] = seq[p]
                    ids[row, p] = vocab.mask_id
            logits = model(ids, pad)
            loss = loss_fn(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            decay.step()
    return CorpusMlm(model)


# ---------------------------------------------------------------------------
# Adapter: external masked-LM process speaking JSON lines


class SubprocessMlmClient:
    """Client for an external masked LM reachable over stdin/stdout.

    Protocol: one JSON object per line.  Request:
    ``{"tokens": [...], "positions": [...], "top_k": 5}`` where tokens holds
    the masked view.  Response: ``{"candidates": [[[token, prob], ...], ...]}``
    with one ranked list per requested position.  Any malformed response or
    process death raises :class:`AdapterError`.
    """

    def __init__(self, command: Sequence[str]):
        if not command:
            raise ParameterError("empty adapter command")
        self.command = list(command)
        self._proc: subprocess.Popen | None = None

    def _process(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as exc:
                raise AdapterError(f"cannot start adapter {self.command}: {exc}") from exc
        return self._proc

    def candidates(self, masked: MaskedSequence, top_k: int) -> MlmDistribution:
        proc = self._process()
        request = {
            "tokens": masked.masked_tokens,
            "positions": list(masked.positions),
            "top_k": top_k,
        }
        try:
            assert proc.stdin is not None and proc.stdout is not None
            proc.stdin.write(json.dumps(request) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (OSError, ValueError) as exc:
            raise AdapterError(f"adapter pipe failure: {exc}") from exc
        if not line:
            raise AdapterError("adapter closed its output stream")
        try:
            payload = json.loads(line)
            lists = tuple(
                tuple((str(token), float(prob)) for token, prob in position_list)
                for position_list in payload["candidates"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise AdapterError(f"malformed adapter response: {line!r}") from exc
        if len(lists) != len(masked.positions):
            raise AdapterError(
                f"adapter returned {len(lists)} lists for {len(masked.positions)} positions"
            )
        try:
            return MlmDistribution(candidates=lists)
        except ParameterError as exc:
            raise AdapterError(f"invalid adapter candidates: {exc}") from exc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=5)
        self._proc = None

    def __enter__(self) -> "SubprocessMlmClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
