"""Command-line pipeline: composable stages sharing one config file.

Each subcommand reads its inputs from and writes its artifacts to a single
working directory, so ``run-all`` is literally the stage subcommands executed
in order — manual stage-by-stage invocation with the same config and seed
produces byte-identical artifacts.  Every invocation ends by writing a
``manifest.txt`` recording the config digest, effective seed, overrides, and
the artifacts of each stage that ran.
"""
from __future__ import annotations

import argparse
import hashlib
import multiprocessing
import os
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .augment import (
    AugmentedPair,
    MlmAdapter,
    SubprocessMlmClient,
    augment_corpus,
    read_augmented_pairs,
    train_corpus_mlm,
    write_augmented_pairs,
)
from .config import (
    DEFAULT_CONFIG_TEXT,
    TrainRecipe,
    parse_recipe,
    with_seed,
)
from .corpus import (
    LabeledCorpus,
    Sentence,
    TagScheme,
    assignments,
    read_column_corpus,
    sentences,
    write_column_corpus,
)
from .ensembling import EnsembleSpec, distill
from .errors import CliError, ConfigError, DistnerError
from .evaluation import decode_entities, score_corpus, token_f1, write_report
from .gazetteer import match_gazetteer, read_gazetteer
from .harness import (
    PROTOCOLS,
    GrammarOracleLm,
    SyntheticGrammar,
    benchmark_data,
    default_grammar,
    grammar_vocabulary,
    run_ab,
    write_ab_report,
)
from .losses import GceConfig
from .model import (
    EncoderSpec,
    TaggerModel,
    Vocabulary,
    configure_torch,
    load_tagger,
    predicted_labels,
    save_tagger,
)
from .robust import RobustSchedule, train_robust
from .selftrain import SelfTrainSchedule, self_train, write_st_metrics

MLM_COMMAND_VAR = "DISTNER_MLM_CMD"

DISTANT_LABELS = "distant_labels.txt"
TEST_GOLD = "test_gold.txt"
ENSEMBLE_CKPT = "ensemble.ckpt"
FINAL_CKPT = "final.ckpt"
AUGMENTED_PAIRS = "augmented_pairs.jsonl"
ST_METRICS = "st_metrics.txt"
REPORT_TEXT = "report.txt"
REPORT_KV = "report.kv"
MANIFEST = "manifest.txt"


def _member_ckpt(k: int) -> str:
    return f"member_{k:03d}.ckpt"


def _member_audit(k: int) -> str:
    return f"weight_audit_{k:03d}.tsv"


# ---------------------------------------------------------------------------
# Invocation context


@dataclass
class CliRun:
    """Everything a stage needs beyond its own flags."""

    recipe: TrainRecipe
    out: Path
    config_text: str
    config_source: str
    overrides: tuple[str, ...]

    @property
    def config_digest(self) -> str:
        return hashlib.sha256(self.config_text.encode("utf-8")).hexdigest()


def _prepare(args: argparse.Namespace) -> CliRun:
    overrides = tuple(args.stage_override or ())
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise CliError(f"config file {path} does not exist")
        text = path.read_text(encoding="utf-8")
        source = str(path)
    else:
        text = DEFAULT_CONFIG_TEXT
        source = "builtin-defaults"
    recipe = parse_recipe(text, overrides)
    recipe = with_seed(recipe, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return CliRun(recipe=recipe, out=out, config_text=text, config_source=source, overrides=overrides)


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise CliError(f"missing input artifact {path}; produce it with the {producer!r} subcommand")
    return path


def _write_manifest(
    run: CliRun,
    stages: Sequence[tuple[str, Sequence[Path]]],
    inputs: dict[str, Path] | None = None,
) -> Path:
    lines = [
        "format=distner-manifest",
        "version=1",
        f"config.source={run.config_source}",
        f"config.sha256={run.config_digest}",
        f"seed={run.recipe.seed}",
    ]
    for i, override in enumerate(run.overrides):
        lines.append(f"override.{i}={override}")
    for name, value in sorted((inputs or {}).items()):
        lines.append(f"input.{name}={value}")
    for i, (name, artifacts) in enumerate(stages):
        lines.append(f"stage.{i}={name}")
        for j, artifact in enumerate(artifacts):
            rel = os.path.relpath(artifact, run.out)
            lines.append(f"stage.{i}.artifact.{j}={rel}")
    path = run.out / MANIFEST
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Shared resolution helpers


def _resolve_scheme(recipe: TrainRecipe) -> tuple[TagScheme, SyntheticGrammar | None]:
    if recipe.data.mode == "synthetic":
        grammar = default_grammar()
        if recipe.data.entity_types and tuple(recipe.data.entity_types) != grammar.scheme.entity_types:
            raise ConfigError(
                "synthetic mode fixes the entity types to "
                f"{grammar.scheme.entity_types}; remove data.entity_types or switch to files mode"
            )
        return grammar.scheme, grammar
    if not recipe.data.entity_types:
        raise ConfigError("files mode needs a non-empty data.entity_types")
    return TagScheme(tuple(recipe.data.entity_types)), None


def _training_corpus(run: CliRun, scheme: TagScheme) -> LabeledCorpus:
    path = _require(run.out / DISTANT_LABELS, "distant-label")
    corpus = read_column_corpus(path, scheme, max_len=run.recipe.model.max_len)
    if not corpus:
        raise CliError(f"{path} holds no sequences")
    return corpus


def _encoder_spec(recipe: TrainRecipe, grammar: SyntheticGrammar | None, sents: Sequence[Sentence]) -> EncoderSpec:
    vocab = grammar_vocabulary(grammar) if grammar is not None else Vocabulary.build(list(sents))
    return recipe.model.encoder_spec(vocab)


# ---------------------------------------------------------------------------
# Stages


def stage_distant_label(run: CliRun) -> list[Path]:
    recipe = run.recipe
    scheme, grammar = _resolve_scheme(recipe)
    labels_path = run.out / DISTANT_LABELS
    if grammar is not None:
        data = benchmark_data(recipe)
        write_column_corpus(data.noisy_pairs, labels_path, scheme)
        gold_path = run.out / TEST_GOLD
        write_column_corpus([(g.sentence, g.gold) for g in data.test], gold_path, scheme)
        return [labels_path, gold_path]
    if not recipe.data.train_path:
        raise ConfigError("files mode needs data.train_path")
    if not recipe.data.gazetteer_path:
        raise ConfigError("files mode needs data.gazetteer_path")
    train_file = Path(recipe.data.train_path)
    if not train_file.exists():
        raise CliError(f"training corpus {train_file} does not exist")
    gaz_file = Path(recipe.data.gazetteer_path)
    if not gaz_file.exists():
        raise CliError(f"gazetteer file {gaz_file} does not exist")
    sents = sentences(read_column_corpus(train_file, scheme))
    gaz = read_gazetteer(gaz_file, scheme)
    labeled = match_gazetteer(sents, gaz, scheme, recipe.data.case_sensitive)
    write_column_corpus(list(zip(sents, labeled)), labels_path, scheme)
    return [labels_path]


def _train_one_member(
    run: CliRun,
    corpus: LabeledCorpus,
    spec: EncoderSpec,
    scheme: TagScheme,
    ensemble: EnsembleSpec,
    k: int,
) -> list[Path]:
    recipe = run.recipe
    rb = recipe.robust
    seed = ensemble.member_seeds[k]
    schedule = RobustSchedule(
        passes=rb.passes,
        weight_update_period=rb.weight_update_period,
        drop_rate=rb.drop_rate,
        batch_size=rb.batch_size,
        seed=seed,
    )
    audit_path = run.out / _member_audit(k)
    result = train_robust(
        [(s, a) for s, a in corpus],
        spec,
        scheme,
        schedule,
        gce=GceConfig(q=rb.q, tau=rb.tau),
        lr=rb.lr,
        loss_kind="gce",
        removal=True,
        audit_path=audit_path,
    )
    ckpt_path = run.out / _member_ckpt(k)
    meta = recipe.metadata()
    meta.update({"stage": "train-robust", "member.index": str(k), "member.seed": str(seed)})
    save_tagger(result.model, ckpt_path, meta)
    return [ckpt_path, audit_path]


def _member_job(payload: tuple[str, str, tuple[str, ...], int, str, int]) -> list[str]:
    """Worker-process body for parallel member training (must be picklable)."""
    config_text, out_dir, overrides, seed, config_source, k = payload
    configure_torch(1)
    recipe = with_seed(parse_recipe(config_text, overrides), seed)
    run = CliRun(
        recipe=recipe,
        out=Path(out_dir),
        config_text=config_text,
        config_source=config_source,
        overrides=overrides,
    )
    scheme, grammar = _resolve_scheme(recipe)
    corpus = _training_corpus(run, scheme)
    spec = _encoder_spec(recipe, grammar, sentences(corpus))
    ensemble = EnsembleSpec(num_members=recipe.ensemble.num_members, base_seed=recipe.seed)
    return [str(p) for p in _train_one_member(run, corpus, spec, scheme, ensemble, k)]


def stage_train_robust(run: CliRun, jobs: int = 1) -> list[Path]:
    recipe = run.recipe
    scheme, grammar = _resolve_scheme(recipe)
    corpus = _training_corpus(run, scheme)
    spec = _encoder_spec(recipe, grammar, sentences(corpus))
    ensemble = EnsembleSpec(num_members=recipe.ensemble.num_members, base_seed=recipe.seed)
    artifacts: list[Path] = []
    if jobs > 1 and ensemble.num_members > 1:
        payloads = [
            (run.config_text, str(run.out), run.overrides, recipe.seed, run.config_source, k)
            for k in range(ensemble.num_members)
        ]
        context = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(jobs, ensemble.num_members), mp_context=context) as pool:
            for produced in pool.map(_member_job, payloads):
                artifacts.extend(Path(p) for p in produced)
    else:
        for k in range(ensemble.num_members):
            artifacts.extend(_train_one_member(run, corpus, spec, scheme, ensemble, k))
    return artifacts


def _load_members(members_dir: Path) -> list[TaggerModel]:
    paths = sorted(members_dir.glob("member_*.ckpt"))
    if not paths:
        raise CliError(
            f"no member checkpoints under {members_dir}; produce them with the 'train-robust' subcommand"
        )
    return [load_tagger(p)[0] for p in paths]


def stage_distill(run: CliRun, members_dir: Path | None = None) -> list[Path]:
    recipe = run.recipe
    scheme, _ = _resolve_scheme(recipe)
    members = _load_members(members_dir or run.out)
    corpus = _training_corpus(run, scheme)
    ensemble = EnsembleSpec(num_members=len(members), base_seed=recipe.seed)
    result = distill(
        members,
        sentences(corpus),
        members[0].spec,
        scheme,
        seed=ensemble.distill_seed,
        epochs=recipe.ensemble.distill_epochs,
        batch_size=recipe.ensemble.batch_size,
        lr=recipe.ensemble.lr,
    )
    path = run.out / ENSEMBLE_CKPT
    meta = recipe.metadata()
    meta.update({"stage": "distill", "distill.final_mean_kl": f"{result.final_mean_kl:.6f}"})
    save_tagger(result.model, path, meta)
    return [path]


def _build_adapter(run: CliRun, grammar: SyntheticGrammar | None, sents: Sequence[Sentence]) -> MlmAdapter:
    recipe = run.recipe
    kind = recipe.augment.adapter
    if kind == "corpus-mlm":
        spec = _encoder_spec(recipe, grammar, sents)
        return train_corpus_mlm(
            list(sents),
            spec,
            epochs=recipe.augment.mlm_epochs,
            lr=recipe.augment.mlm_lr,
            mask_rate=recipe.augment.mask_rate,
            seed=recipe.seed,
        )
    if kind == "grammar-oracle":
        if grammar is None:
            raise ConfigError("the grammar-oracle adapter only works in synthetic data mode")
        generated = benchmark_data(recipe).train
        if len(generated) != len(sents) or any(
            g.sentence.tokens != s.tokens for g, s in zip(generated, sents)
        ):
            raise CliError(
                f"{DISTANT_LABELS} does not match the synthetic corpus this config generates; "
                "re-run 'distant-label' with the same config"
            )
        return GrammarOracleLm.from_labels(grammar, sents, [g.gold.labels for g in generated])
    if kind == "subprocess":
        command = os.environ.get(MLM_COMMAND_VAR, "")
        if not command.strip():
            raise CliError(
                f"the subprocess adapter needs the {MLM_COMMAND_VAR} environment variable "
                "to hold the replacement-model command line"
            )
        return SubprocessMlmClient(shlex.split(command))
    raise ConfigError(f"unknown augment.adapter {kind!r}; choose corpus-mlm, grammar-oracle or subprocess")


def stage_augment(run: CliRun) -> list[Path]:
    recipe = run.recipe
    scheme, grammar = _resolve_scheme(recipe)
    sents = sentences(_training_corpus(run, scheme))
    adapter = _build_adapter(run, grammar, sents)
    try:
        pairs = augment_corpus(
            sents,
            adapter,
            rate=recipe.augment.mask_rate,
            top_k=recipe.augment.top_k,
            seed=recipe.seed,
        )
    finally:
        closer = getattr(adapter, "close", None)
        if closer is not None:
            closer()
    path = run.out / AUGMENTED_PAIRS
    write_augmented_pairs(pairs, path)
    return [path]


def stage_self_train(
    run: CliRun, checkpoint: Path | None = None, augmented: Path | None = None
) -> list[Path]:
    recipe = run.recipe
    scheme, _ = _resolve_scheme(recipe)
    ckpt = _require(checkpoint or run.out / ENSEMBLE_CKPT, "distill")
    model, _ = load_tagger(ckpt)
    sents = sentences(_training_corpus(run, scheme))
    pairs_path = _require(augmented or run.out / AUGMENTED_PAIRS, "augment")
    pairs: list[AugmentedPair] = read_augmented_pairs(pairs_path, sents)
    st = recipe.selftrain
    schedule = SelfTrainSchedule(
        batch_size=st.batch_size,
        lr=st.lr,
        confidence_offset=st.confidence_offset,
        passes_per_iteration=st.passes_per_iteration,
        use_augmented=True,
        seed=recipe.seed,
    )
    result = self_train(model, sents, pairs, iterations=st.iterations, schedule=schedule)
    final_path = run.out / FINAL_CKPT
    meta = recipe.metadata()
    meta.update({"stage": "self-train", "selftrain.binary_drift": f"{result.overall_binary_drift:.6f}"})
    save_tagger(result.model, final_path, meta)
    metrics_path = run.out / ST_METRICS
    write_st_metrics(metrics_path, result.metrics)
    return [final_path, metrics_path]


def _gold_corpus_path(run: CliRun, gold: Path | None) -> Path:
    if gold is not None:
        if not gold.exists():
            raise CliError(f"gold corpus {gold} does not exist")
        return gold
    if run.recipe.data.mode == "synthetic":
        return _require(run.out / TEST_GOLD, "distant-label")
    if not run.recipe.data.test_path:
        raise ConfigError("files mode needs data.test_path (or pass --gold)")
    path = Path(run.recipe.data.test_path)
    if not path.exists():
        raise CliError(f"test corpus {path} does not exist")
    return path


def _labels_as_names(corpus: LabeledCorpus, scheme: TagScheme) -> list[list[str]]:
    return [
        [scheme.label_name(int(idx)) for idx in assignment.labels]
        for assignment in assignments(corpus)
    ]


def stage_evaluate(
    run: CliRun,
    checkpoint: Path | None = None,
    gold: Path | None = None,
    pred: Path | None = None,
) -> list[Path]:
    scheme, _ = _resolve_scheme(run.recipe)
    gold_path = _gold_corpus_path(run, gold)
    gold_corpus = read_column_corpus(gold_path, scheme)
    gold_names = _labels_as_names(gold_corpus, scheme)
    if pred is not None:
        if not pred.exists():
            raise CliError(f"prediction corpus {pred} does not exist")
        pred_corpus = read_column_corpus(pred, scheme)
        if len(pred_corpus) != len(gold_corpus):
            raise CliError(
                f"{pred} has {len(pred_corpus)} sequences but {gold_path} has {len(gold_corpus)}"
            )
        pred_names = _labels_as_names(pred_corpus, scheme)
    else:
        ckpt = _require(checkpoint or run.out / FINAL_CKPT, "self-train")
        model, _ = load_tagger(ckpt)
        pred_names = predicted_labels(model, sentences(gold_corpus))
    pred_spans = [decode_entities(names) for names in pred_names]
    gold_spans = [decode_entities(names) for names in gold_names]
    entity = score_corpus(pred_spans, gold_spans)
    token = token_f1(pred_names, gold_names)
    metrics = {
        "entity_precision": entity.precision,
        "entity_recall": entity.recall,
        "entity_f1": entity.f1,
        "token_f1": token.f1,
        "sequences": float(len(gold_corpus)),
        "gold_spans": float(sum(len(s) for s in gold_spans)),
        "predicted_spans": float(sum(len(s) for s in pred_spans)),
    }
    text_path = run.out / REPORT_TEXT
    kv_path = run.out / REPORT_KV
    write_report(metrics, text_path, kv_path)
    print(text_path.read_text(encoding="utf-8"), end="")
    return [text_path, kv_path]


def stage_synth_bench(run: CliRun, protocol: str, plot: bool = False) -> list[Path]:
    report = run_ab(protocol, run.recipe)
    text_path = run.out / f"ab_{protocol}.txt"
    kv_path = run.out / f"ab_{protocol}.kv"
    write_ab_report(report, text_path, kv_path)
    artifacts = [text_path, kv_path]
    if plot:
        artifacts.append(_plot_report(report, run.out / f"ab_{protocol}.png"))
    print(text_path.read_text(encoding="utf-8"), end="")
    return artifacts


def _plot_report(report, path: Path) -> Path:
    try:
        import matplotlib
    except ImportError as exc:
        raise CliError("plotting needs matplotlib; install it or drop --plot") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = sorted(report.arms)
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(names), 3.2))
    ax.boxplot([report.arms[n] for n in names], tick_labels=names)
    ax.set_ylabel("entity F1")
    ax.set_title(report.protocol)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# Subcommand entry points


def cmd_distant_label(args: argparse.Namespace) -> int:
    run = _prepare(args)
    artifacts = stage_distant_label(run)
    manifest = _write_manifest(run, [("distant-label", artifacts)])
    print(f"distant-label: wrote {', '.join(p.name for p in artifacts)}; manifest {manifest}")
    return 0


def cmd_train_robust(args: argparse.Namespace) -> int:
    if args.members is not None:
        # Fold the flag into the override list so the manifest records it and
        # parallel workers reconstruct the same effective config.
        args.stage_override = list(args.stage_override or []) + [
            f"ensemble.num_members={args.members}"
        ]
    run = _prepare(args)
    configure_torch(1)
    artifacts = stage_train_robust(run, jobs=args.jobs)
    manifest = _write_manifest(run, [("train-robust", artifacts)])
    ckpts = [p.name for p in artifacts if p.suffix == ".ckpt"]
    print(f"train-robust: trained {len(ckpts)} members ({', '.join(ckpts)}); manifest {manifest}")
    return 0


def _given(**kwargs: Path | None) -> dict[str, Path]:
    return {name: path for name, path in kwargs.items() if path is not None}


def cmd_distill(args: argparse.Namespace) -> int:
    run = _prepare(args)
    configure_torch(1)
    artifacts = stage_distill(run, members_dir=args.members_dir)
    manifest = _write_manifest(run, [("distill", artifacts)], _given(members_dir=args.members_dir))
    print(f"distill: wrote {artifacts[0].name}; manifest {manifest}")
    return 0


def cmd_augment(args: argparse.Namespace) -> int:
    run = _prepare(args)
    configure_torch(1)
    artifacts = stage_augment(run)
    manifest = _write_manifest(run, [("augment", artifacts)])
    print(f"augment: wrote {artifacts[0].name}; manifest {manifest}")
    return 0


def cmd_self_train(args: argparse.Namespace) -> int:
    run = _prepare(args)
    configure_torch(1)
    artifacts = stage_self_train(run, checkpoint=args.checkpoint, augmented=args.augmented)
    manifest = _write_manifest(
        run, [("self-train", artifacts)], _given(checkpoint=args.checkpoint, augmented=args.augmented)
    )
    print(f"self-train: wrote {', '.join(p.name for p in artifacts)}; manifest {manifest}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    run = _prepare(args)
    configure_torch(1)
    artifacts = stage_evaluate(run, checkpoint=args.checkpoint, gold=args.gold, pred=args.pred)
    manifest = _write_manifest(
        run,
        [("evaluate", artifacts)],
        _given(checkpoint=args.checkpoint, gold=args.gold, pred=args.pred),
    )
    print(f"evaluate: wrote {', '.join(p.name for p in artifacts)}; manifest {manifest}")
    return 0


def cmd_synth_bench(args: argparse.Namespace) -> int:
    run = _prepare(args)
    configure_torch(1)
    artifacts = stage_synth_bench(run, protocol=args.protocol, plot=args.plot)
    manifest = _write_manifest(run, [("synth-bench", artifacts)])
    print(f"synth-bench: wrote {', '.join(p.name for p in artifacts)}; manifest {manifest}")
    return 0


def cmd_run_all(args: argparse.Namespace) -> int:
    run = _prepare(args)
    configure_torch(1)
    stages: list[tuple[str, Sequence[Path]]] = []
    stages.append(("distant-label", stage_distant_label(run)))
    stages.append(("train-robust", stage_train_robust(run, jobs=args.jobs)))
    stages.append(("distill", stage_distill(run)))
    stages.append(("augment", stage_augment(run)))
    stages.append(("self-train", stage_self_train(run)))
    stages.append(("evaluate", stage_evaluate(run)))
    manifest = _write_manifest(run, stages)
    print(f"run-all: completed {len(stages)} stages; manifest {manifest}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="config file (defaults to built-in values)")
    common.add_argument("--seed", type=int, default=None, help="override the run seed")
    common.add_argument("--out", type=Path, default=Path("out"), help="working directory for artifacts")
    common.add_argument(
        "--stage-override",
        action="append",
        default=None,
        metavar="SECTION.KEY=VALUE",
        help="override a single config value (repeatable)",
    )

    parser = argparse.ArgumentParser(
        prog="distner",
        description="Distantly supervised tagger pipeline: noisy labeling, robust training, "
        "ensemble distillation, augmentation and self-training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distant-label", parents=[common], help="produce distant labels (synthetic generator or gazetteer match)")
    p.set_defaults(func=cmd_distant_label)

    p = sub.add_parser("train-robust", parents=[common], help="train the noise-robust ensemble members")
    p.add_argument("--members", type=int, default=None, help="override the ensemble size")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes for member training")
    p.set_defaults(func=cmd_train_robust)

    p = sub.add_parser("distill", parents=[common], help="distill the members into one model")
    p.add_argument("--members-dir", type=Path, default=None, help="directory holding member_*.ckpt (default: --out)")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("augment", parents=[common], help="produce replacement-augmented training sequences")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("self-train", parents=[common], help="refine the distilled model on its own soft labels")
    p.add_argument("--checkpoint", type=Path, default=None, help="starting checkpoint (default: OUT/ensemble.ckpt)")
    p.add_argument("--augmented", type=Path, default=None, help="augmented pairs file (default: OUT/augmented_pairs.jsonl)")
    p.set_defaults(func=cmd_self_train)

    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint or a prediction file against gold labels")
    p.add_argument("--checkpoint", type=Path, default=None, help="checkpoint to score (default: OUT/final.ckpt)")
    p.add_argument("--gold", type=Path, default=None, help="gold labeled corpus (default from config/data mode)")
    p.add_argument("--pred", type=Path, default=None, help="score this labeled corpus instead of running a model")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth-bench", parents=[common], help="run a controlled-noise A/B protocol")
    p.add_argument("--protocol", required=True, choices=PROTOCOLS, help="which comparison to run")
    p.add_argument("--plot", action="store_true", help="also write a box plot (needs matplotlib)")
    p.set_defaults(func=cmd_synth_bench)

    p = sub.add_parser("run-all", parents=[common], help="run every stage in order and evaluate")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes for member training")
    p.set_defaults(func=cmd_run_all)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DistnerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
