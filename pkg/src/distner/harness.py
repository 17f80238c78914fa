"""Synthetic benchmark: corpus generator, controlled noise, A/B protocols.

The grammar builds sentences from templates whose literal trigger words
("met", "near", "joined", ...) make each entity slot's type recoverable from
context alone.  Each type's lexicon shares a block of surface forms with a
second type, so memorizing a token's identity is not enough — exactly the
ambiguity that makes distant labels noisy.  Noise is injected at span level
with the decisions recorded, so every corrupted token is known and removal
quality can be measured against ground truth rather than eyeballed.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .augment import AugmentedPair, MaskedSequence, MlmDistribution, augment_corpus
from .config import TrainRecipe
from .corpus import LabelAssignment, Sentence, TagScheme
from .ensembling import EnsembleSpec, distill, train_members
from .errors import AdapterError, ParameterError
from .evaluation import PRF, Span, decode_entities, score_corpus
from .gazetteer import Gazetteer
from .losses import GceConfig
from .model import (
    EncoderSpec,
    SPECIAL_TOKENS,
    TaggerModel,
    Vocabulary,
    clone_tagger,
    configure_torch,
    predicted_labels,
)
from .robust import LabeledPair, RobustSchedule, train_robust
from .selftrain import SelfTrainSchedule, self_train

PROTOCOLS = ("gce_vs_ce", "removal_on_off", "ensemble_variance", "st_on_off", "aug_on_off")

TemplatePart = tuple[str, str]  # ("slot", type) | ("lit", word) | ("ctx", "")


@dataclass(frozen=True)
class SyntheticGrammar:
    """Typed lexicons, filler words, and templates with typed slots."""

    entity_types: tuple[str, ...]
    pools: dict[str, tuple[str, ...]]
    filler_words: tuple[str, ...]
    trigger_words: tuple[str, ...]
    templates: tuple[tuple[TemplatePart, ...], ...]
    two_token_rate: float = 0.25

    def __post_init__(self) -> None:
        if set(self.pools) != set(self.entity_types):
            raise ParameterError("pools must cover exactly the entity types")
        for name, pool in self.pools.items():
            if not pool:
                raise ParameterError(f"empty lexicon for type {name}")
        if set(self.filler_words) & set(self.trigger_words):
            raise ParameterError("filler and trigger word sets must be disjoint")
        entity_tokens = {t for pool in self.pools.values() for t in pool}
        if entity_tokens & (set(self.filler_words) | set(self.trigger_words)):
            raise ParameterError("entity lexicons must not overlap context words")
        for template in self.templates:
            previous_slot = None
            for kind, value in template:
                if kind == "slot":
                    if value not in self.pools:
                        raise ParameterError(f"template slot of unknown type {value!r}")
                    if previous_slot == value:
                        raise ParameterError("adjacent same-type slots are not allowed")
                    previous_slot = value
                elif kind == "lit":
                    previous_slot = None
                elif kind == "ctx":
                    previous_slot = None
                else:
                    raise ParameterError(f"unknown template part kind {kind!r}")

    @property
    def scheme(self) -> TagScheme:
        return TagScheme(self.entity_types)

    @property
    def context_words(self) -> tuple[str, ...]:
        return self.filler_words + self.trigger_words

    @property
    def all_tokens(self) -> tuple[str, ...]:
        seen = sorted({t for pool in self.pools.values() for t in pool})
        return tuple(seen) + tuple(sorted(self.context_words))


def _template(spec: str) -> tuple[TemplatePart, ...]:
    """Compact template notation: '_' = filler slot, '<TYPE>' = entity slot,
    anything else a literal word."""
    parts: list[TemplatePart] = []
    for piece in spec.split():
        if piece == "_":
            parts.append(("ctx", ""))
        elif piece.startswith("<") and piece.endswith(">"):
            parts.append(("slot", piece[1:-1]))
        else:
            parts.append(("lit", piece))
    return tuple(parts)


def default_grammar() -> SyntheticGrammar:
    """The shipped benchmark grammar: 4 types, 100 surface forms, length-12
    templates with two entity slots each.

    Six surface forms are shared between AGENT and GROUP and six between
    PLACE and ITEM, so roughly a third of entity mentions cannot be typed
    without reading the trigger words around them.
    """
    shared_agent_group = ("Vesta", "Orion", "Lyra", "Corvo", "Mira", "Pavo")
    shared_place_item = ("Drift", "Ember", "Frost", "Gale", "Haven", "Isle")
    pools = {
        "AGENT": (
            "Aldor", "Barin", "Cedro", "Davin", "Elgar", "Farin",
            "Goran", "Halden", "Ivo", "Jareth", "Kelvin", "Lorn",
        ) + shared_agent_group,
        "PLACE": (
            "Ashford", "Brimley", "Caldora", "Dunmore", "Eastvale", "Fenwick",
            "Glenholm", "Harrow", "Ironfell", "Janwick", "Karst", "Lowden",
        ) + shared_place_item,
        "GROUP": (
            "Alliance", "Brigade", "Caucus", "Dynasty", "Enclave", "Faction",
            "Guild", "Horde", "Institute", "Junta", "Kinship", "League",
        ) + shared_agent_group,
        "ITEM": (
            "Amulet", "Beacon", "Chalice", "Diadem", "Emblem", "Flask",
            "Goblet", "Harp", "Idol", "Jewel", "Kettle", "Lantern",
        ) + shared_place_item,
    }
    fillers = (
        "the", "a", "an", "and", "or", "but", "of", "to",
        "in", "on", "at", "by", "for", "with", "from", "after",
        "before", "while", "again", "soon", "early", "late", "often", "never",
        "quietly", "slowly", "once", "twice", "still", "just", "then", "there",
    )
    triggers = ("met", "said", "near", "visited", "joined", "backed", "found", "carried")
    templates = tuple(
        _template(spec)
        for spec in (
            "_ met <AGENT> _ near <PLACE> _ _ _ _ _ _",
            "<AGENT> said _ _ joined <GROUP> _ _ _ _ _ _",
            "_ _ visited <PLACE> _ found <ITEM> _ _ _ _ _",
            "backed <GROUP> _ _ met <AGENT> _ _ _ _ _ _",
            "_ carried <ITEM> _ _ near <PLACE> _ _ _ _ _",
            "_ _ joined <GROUP> _ _ found <ITEM> _ _ _ _",
            "<AGENT> said _ carried <ITEM> _ _ _ _ _ _ _",
            "_ backed <GROUP> _ _ visited <PLACE> _ _ _ _ _",
        )
    )
    return SyntheticGrammar(
        entity_types=("AGENT", "PLACE", "GROUP", "ITEM"),
        pools=pools,
        filler_words=fillers,
        trigger_words=triggers,
        templates=templates,
    )


def grammar_vocabulary(grammar: SyntheticGrammar) -> Vocabulary:
    return Vocabulary(SPECIAL_TOKENS + grammar.all_tokens)


@dataclass(frozen=True)
class GeneratedSequence:
    sentence: Sentence
    gold: LabelAssignment
    spans: tuple[Span, ...]


def generate(
    grammar: SyntheticGrammar, n_sequences: int, seed: int
) -> list[GeneratedSequence]:
    """Sample sentences from the grammar with their gold labels and spans."""
    if n_sequences <= 0:
        raise ParameterError(f"n_sequences must be positive, got {n_sequences}")
    scheme = grammar.scheme
    rng = np.random.default_rng(seed)
    out: list[GeneratedSequence] = []
    for i in range(n_sequences):
        template = grammar.templates[int(rng.integers(len(grammar.templates)))]
        tokens: list[str] = []
        labels: list[int] = []
        spans: list[Span] = []
        for kind, value in template:
            if kind == "lit":
                tokens.append(value)
                labels.append(0)
            elif kind == "ctx":
                tokens.append(str(rng.choice(grammar.filler_words)))
                labels.append(0)
            else:
                pool = grammar.pools[value]
                length = 2 if rng.random() < grammar.two_token_rate else 1
                start = len(tokens)
                for _ in range(length):
                    tokens.append(str(rng.choice(pool)))
                    labels.append(scheme.label_index(value))
                spans.append((start, start + length, value))
        sentence = Sentence.from_tokens(tokens, seq_id=f"synth{seed}:{i}")
        out.append(
            GeneratedSequence(
                sentence=sentence,
                gold=LabelAssignment.fresh(labels),
                spans=tuple(spans),
            )
        )
    return out


def derive_gazetteer(grammar: SyntheticGrammar) -> Gazetteer:
    """Single-token gazetteer straight from the lexicons; shared surface
    forms yield one entry per type, i.e. genuine ambiguity."""
    pairs = [
        ((token,), type_name)
        for type_name in grammar.entity_types
        for token in grammar.pools[type_name]
    ]
    return Gazetteer.from_pairs(pairs, grammar.scheme)


# ---------------------------------------------------------------------------
# Noise injection


@dataclass(frozen=True)
class NoiseSpec:
    """Span-level corruption rates; deletion erases a span to O, flip swaps
    its type for a random different one."""

    flip_rate: float = 0.3
    deletion_rate: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        # rate 1.0 is admitted for saturation checks (e.g. delete everything)
        if not 0.0 <= self.flip_rate <= 1.0 or not 0.0 <= self.deletion_rate <= 1.0:
            raise ParameterError("noise rates must lie in [0, 1]")
        if self.flip_rate + self.deletion_rate > 1.0:
            raise ParameterError("flip_rate + deletion_rate must not exceed 1")


@dataclass
class NoiseOutcome:
    pairs: list[LabeledPair]
    masks: list[np.ndarray]
    spans_total: int
    spans_flipped: int
    spans_deleted: int

    @property
    def corruption_rate(self) -> float:
        """Fraction of corrupted tokens over all tokens."""
        total = sum(mask.size for mask in self.masks)
        hit = sum(int(mask.sum()) for mask in self.masks)
        return hit / total if total else 0.0


def inject_noise(
    generated: Sequence[GeneratedSequence], spec: NoiseSpec, scheme: TagScheme
) -> NoiseOutcome:
    """Corrupt gold labels span by span; the masks mark changed tokens."""
    rng = np.random.default_rng(spec.seed)
    pairs: list[LabeledPair] = []
    masks: list[np.ndarray] = []
    total = flipped = deleted = 0
    entity_indices = [scheme.label_index(t) for t in scheme.entity_types]
    for item in generated:
        labels = item.gold.labels.copy()
        mask = np.zeros(len(labels), dtype=bool)
        for start, end, type_name in item.spans:
            total += 1
            draw = rng.random()
            if draw < spec.flip_rate:
                current = scheme.label_index(type_name)
                others = [i for i in entity_indices if i != current]
                labels[start:end] = others[int(rng.integers(len(others)))]
                mask[start:end] = True
                flipped += 1
            elif draw < spec.flip_rate + spec.deletion_rate:
                labels[start:end] = 0
                mask[start:end] = True
                deleted += 1
        pairs.append((item.sentence, LabelAssignment.fresh(labels)))
        masks.append(mask)
    return NoiseOutcome(
        pairs=pairs, masks=masks, spans_total=total, spans_flipped=flipped, spans_deleted=deleted
    )


# ---------------------------------------------------------------------------
# Oracle masked LM (adapter (c)): knows every position's true slot


class GrammarOracleLm:
    """Masked-LM stand-in that answers from the generator's ground truth.

    An entity position's candidates come from its true type's lexicon, a
    context position's from the context words, so every sampled replacement
    is label-preserving by construction — which is what makes exact
    augmentation audits possible.
    """

    def __init__(self, grammar: SyntheticGrammar, generated: Sequence[GeneratedSequence]):
        self.grammar = grammar
        self.scheme = grammar.scheme
        self.gold_by_seq = {g.sentence.seq_id: g.gold.labels for g in generated}

    @classmethod
    def from_labels(
        cls,
        grammar: SyntheticGrammar,
        sentences: Sequence[Sentence],
        labels: Sequence[np.ndarray],
    ) -> "GrammarOracleLm":
        """Key ground truth by the given sentences' ids (e.g. after a corpus
        has been round-tripped through a file and its ids renamed)."""
        oracle = cls(grammar, ())
        oracle.gold_by_seq = {s.seq_id: np.asarray(l) for s, l in zip(sentences, labels)}
        return oracle

    def candidates(self, masked: MaskedSequence, top_k: int) -> MlmDistribution:
        labels = self.gold_by_seq.get(masked.original.seq_id)
        if labels is None:
            raise AdapterError(f"no ground truth for sequence {masked.original.seq_id}")
        lists = []
        for position in masked.positions:
            label = int(labels[position])
            if label == 0:
                pool = self.grammar.context_words
            else:
                pool = self.grammar.pools[self.scheme.label_name(label)]
            digest = zlib.crc32(f"{masked.original.seq_id}|{position}".encode("utf-8"))
            rng = np.random.default_rng(digest)
            k = min(top_k, len(pool))
            chosen = rng.choice(len(pool), size=k, replace=False)
            lists.append(tuple((pool[int(c)], 1.0 / k) for c in chosen))
        return MlmDistribution(candidates=tuple(lists))


def audit_label_preservation(
    pair: AugmentedPair, grammar: SyntheticGrammar, gold_labels: np.ndarray
) -> list[str]:
    """Check every replacement stays inside its position's true lexicon."""
    problems = []
    scheme = grammar.scheme
    for r in pair.augmented.replacements:
        if r.kept:
            continue
        label = int(gold_labels[r.position])
        if label == 0:
            allowed = set(grammar.context_words)
        else:
            allowed = set(grammar.pools[scheme.label_name(label)])
        if r.token not in allowed:
            problems.append(
                f"position {r.position}: {r.token!r} not valid for label "
                f"{scheme.label_name(label)}"
            )
    return problems


# ---------------------------------------------------------------------------
# A/B protocols


def evaluate_model(
    model: TaggerModel, test_set: Sequence[GeneratedSequence], batch_size: int = 128
) -> PRF:
    """Entity-level micro P/R/F1 of the model on a generated test split."""
    sentences = [g.sentence for g in test_set]
    pred = [decode_entities(row) for row in predicted_labels(model, sentences, batch_size)]
    gold = [list(g.spans) for g in test_set]
    return score_corpus(pred, gold)


@dataclass
class RemovalStats:
    removed: int
    corrupted_among_removed: int
    base_rate: float

    @property
    def precision(self) -> float:
        return self.corrupted_among_removed / self.removed if self.removed else 0.0

    @property
    def enrichment(self) -> float:
        return self.precision / self.base_rate if self.base_rate else 0.0


def removal_stats(
    pairs: Sequence[LabeledPair], masks: Sequence[np.ndarray], base_rate: float
) -> RemovalStats:
    removed = corrupted = 0
    for (_, assignment), mask in zip(pairs, masks):
        zeroed = assignment.included & (assignment.weights == 0.0)
        removed += int(zeroed.sum())
        corrupted += int((zeroed & mask).sum())
    return RemovalStats(removed=removed, corrupted_among_removed=corrupted, base_rate=base_rate)


@dataclass
class AbReport:
    """Per-seed metrics, medians, and deltas of one A/B comparison."""

    protocol: str
    seeds: tuple[int, ...]
    arms: dict[str, list[float]]
    extras: dict[str, float] = field(default_factory=dict)

    def median(self, arm: str) -> float:
        return float(np.median(self.arms[arm]))

    def to_kv(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for arm, values in self.arms.items():
            for seed, value in zip(self.seeds, values):
                out[f"{arm}.seed{seed}"] = value
            out[f"{arm}.median"] = self.median(arm)
        out.update(self.extras)
        return out

    def format_text(self) -> str:
        lines = [f"protocol {self.protocol}", "seeds " + " ".join(str(s) for s in self.seeds)]
        for arm, values in self.arms.items():
            row = " ".join(f"{v:.6f}" for v in values)
            lines.append(f"arm {arm:<16} f1 {row}  median {self.median(arm):.6f}")
        for key, value in self.extras.items():
            lines.append(f"{key} {value:.6f}")
        return "\n".join(lines) + "\n"


def write_ab_report(report: AbReport, text_path, kv_path=None) -> None:
    from pathlib import Path

    Path(text_path).write_text(report.format_text(), encoding="utf-8")
    if kv_path is not None:
        body = "".join(f"{k}={v:.6f}\n" for k, v in report.to_kv().items())
        Path(kv_path).write_text(body, encoding="utf-8")


@dataclass
class BenchData:
    """One generated benchmark: clean splits, noisy training labels, masks."""

    grammar: SyntheticGrammar
    scheme: TagScheme
    encoder_spec: EncoderSpec
    train: list[GeneratedSequence]
    test: list[GeneratedSequence]
    noise: NoiseOutcome

    @property
    def noisy_pairs(self) -> list[LabeledPair]:
        return self.noise.pairs

    @property
    def train_sentences(self) -> list[Sentence]:
        return [g.sentence for g in self.train]


def benchmark_data(recipe: TrainRecipe) -> BenchData:
    """Generate the benchmark splits shared by every arm of a protocol."""
    grammar = default_grammar()
    scheme = grammar.scheme
    bench = recipe.bench
    train = generate(grammar, bench.train_size, bench.data_seed)
    test = generate(grammar, bench.test_size, bench.data_seed + 1)
    noise = inject_noise(
        train,
        NoiseSpec(
            flip_rate=bench.flip_rate,
            deletion_rate=bench.deletion_rate,
            seed=bench.data_seed + 2,
        ),
        scheme,
    )
    encoder_spec = recipe.model.encoder_spec(grammar_vocabulary(grammar))
    return BenchData(
        grammar=grammar,
        scheme=scheme,
        encoder_spec=encoder_spec,
        train=train,
        test=test,
        noise=noise,
    )


def _robust_arm(
    data: BenchData, recipe: TrainRecipe, seed: int, loss_kind: str, removal: bool
):
    rb = recipe.robust
    schedule = RobustSchedule(
        passes=rb.passes,
        weight_update_period=rb.weight_update_period,
        drop_rate=rb.drop_rate,
        batch_size=rb.batch_size,
        seed=seed,
    )
    return train_robust(
        data.noisy_pairs,
        data.encoder_spec,
        data.scheme,
        schedule,
        gce=GceConfig(q=rb.q, tau=rb.tau),
        lr=rb.lr,
        loss_kind=loss_kind,
        removal=removal,
    )


def _ab_seeds(recipe: TrainRecipe, count: int) -> tuple[int, ...]:
    return tuple(recipe.bench.seed_base + i for i in range(count))


def _loss_arm_protocol(
    recipe: TrainRecipe, arm_a: tuple[str, bool], arm_b: tuple[str, bool], name: str
) -> AbReport:
    configure_torch(1)
    data = benchmark_data(recipe)
    seeds = _ab_seeds(recipe, recipe.bench.ab_seeds)
    arms: dict[str, list[float]] = {}
    enrichments: list[float] = []
    base_rate = data.noise.corruption_rate
    for seed in seeds:
        for loss_kind, removal in (arm_a, arm_b):
            result = _robust_arm(data, recipe, seed, loss_kind, removal)
            f1 = evaluate_model(result.model, data.test).f1
            label = _arm_label(loss_kind, removal)
            arms.setdefault(label, []).append(f1)
            if removal:
                stats = removal_stats(result.pairs, data.noise.masks, base_rate)
                enrichments.append(stats.enrichment)
    labels = list(arms)
    extras = {
        "delta_median": float(np.median(arms[labels[0]]) - np.median(arms[labels[1]])),
        "corruption_rate": base_rate,
    }
    if enrichments:
        extras["removal_enrichment_median"] = float(np.median(enrichments))
        extras["removal_enrichment_min"] = float(np.min(enrichments))
    return AbReport(protocol=name, seeds=seeds, arms=arms, extras=extras)


def _arm_label(loss_kind: str, removal: bool) -> str:
    return f"{loss_kind}_{'removal' if removal else 'plain'}"


def _gce_vs_ce(recipe: TrainRecipe) -> AbReport:
    return _loss_arm_protocol(recipe, ("gce", True), ("ce", False), "gce_vs_ce")


def _removal_on_off(recipe: TrainRecipe) -> AbReport:
    return _loss_arm_protocol(recipe, ("gce", True), ("gce", False), "removal_on_off")


def _ensemble_pipeline(
    data: BenchData, recipe: TrainRecipe, base_seed: int
) -> tuple[list, TaggerModel]:
    """Train K members and distill them; returns (member results, distilled)."""
    ens = EnsembleSpec(num_members=recipe.ensemble.num_members, base_seed=base_seed)
    members = train_members(
        data.noisy_pairs,
        data.encoder_spec,
        data.scheme,
        RobustSchedule(
            passes=recipe.robust.passes,
            weight_update_period=recipe.robust.weight_update_period,
            drop_rate=recipe.robust.drop_rate,
            batch_size=recipe.robust.batch_size,
            seed=base_seed,
        ),
        ens,
        gce=GceConfig(q=recipe.robust.q, tau=recipe.robust.tau),
        lr=recipe.robust.lr,
    )
    distilled = distill(
        [r.model for r in members],
        data.train_sentences,
        data.encoder_spec,
        data.scheme,
        seed=ens.distill_seed,
        epochs=recipe.ensemble.distill_epochs,
        batch_size=recipe.ensemble.batch_size,
        lr=recipe.ensemble.lr,
    )
    return members, distilled.model


def _ensemble_variance(recipe: TrainRecipe) -> AbReport:
    configure_torch(1)
    data = benchmark_data(recipe)
    bases = tuple(
        recipe.bench.seed_base + 1000 * i for i in range(recipe.bench.variance_seeds)
    )
    member_f1s: list[float] = []
    distilled_f1s: list[float] = []
    for base in bases:
        members, distilled_model = _ensemble_pipeline(data, recipe, base)
        member_f1s.extend(evaluate_model(r.model, data.test).f1 for r in members)
        distilled_f1s.append(evaluate_model(distilled_model, data.test).f1)
    extras = {
        "member_std": float(np.std(member_f1s, ddof=1)),
        "distilled_std": float(np.std(distilled_f1s, ddof=1)),
        "member_mean": float(np.mean(member_f1s)),
        "distilled_mean": float(np.mean(distilled_f1s)),
    }
    return AbReport(
        protocol="ensemble_variance",
        seeds=bases,
        arms={"distilled": distilled_f1s},
        extras=extras,
    )


def _st_pipeline(recipe: TrainRecipe, name: str) -> AbReport:
    """Shared engine of st_on_off / aug_on_off: per seed, build the distilled
    model and self-train it twice — with and without the augmented view."""
    configure_torch(1)
    data = benchmark_data(recipe)
    seeds = _ab_seeds(recipe, recipe.bench.ab_seeds)
    arms: dict[str, list[float]] = {"ens": [], "st_plain": [], "st_aug": []}
    oracle = GrammarOracleLm(data.grammar, data.train)
    for seed in seeds:
        _, ens_model = _ensemble_pipeline(data, recipe, seed)
        arms["ens"].append(evaluate_model(ens_model, data.test).f1)
        aug_pairs = augment_corpus(
            data.train_sentences,
            oracle,
            rate=recipe.augment.mask_rate,
            top_k=recipe.augment.top_k,
            seed=seed,
        )
        for arm, use_aug in (("st_plain", False), ("st_aug", True)):
            st_schedule = SelfTrainSchedule(
                batch_size=recipe.selftrain.batch_size,
                lr=recipe.selftrain.lr,
                confidence_offset=recipe.selftrain.confidence_offset,
                passes_per_iteration=recipe.selftrain.passes_per_iteration,
                use_augmented=use_aug,
                seed=seed,
            )
            result = self_train(
                clone_tagger(ens_model),
                data.train_sentences,
                aug_pairs,
                recipe.selftrain.iterations,
                st_schedule,
            )
            arms[arm].append(evaluate_model(result.model, data.test).f1)
    extras = {
        "st_aug_minus_st_plain": float(np.median(arms["st_aug"]) - np.median(arms["st_plain"])),
        "st_plain_minus_ens": float(np.median(arms["st_plain"]) - np.median(arms["ens"])),
    }
    return AbReport(protocol=name, seeds=seeds, arms=arms, extras=extras)


def _st_on_off(recipe: TrainRecipe) -> AbReport:
    return _st_pipeline(recipe, "st_on_off")


def _aug_on_off(recipe: TrainRecipe) -> AbReport:
    return _st_pipeline(recipe, "aug_on_off")


def run_ab(protocol: str, recipe: TrainRecipe) -> AbReport:
    """Run one named A/B comparison end to end on the synthetic benchmark."""
    runners = {
        "gce_vs_ce": _gce_vs_ce,
        "removal_on_off": _removal_on_off,
        "ensemble_variance": _ensemble_variance,
        "st_on_off": _st_on_off,
        "aug_on_off": _aug_on_off,
    }
    if protocol not in runners:
        raise ParameterError(f"unknown protocol {protocol!r}; choose from {PROTOCOLS}")
    return runners[protocol](recipe)
