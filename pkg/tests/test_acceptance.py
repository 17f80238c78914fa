"""Acceptance gate for the whole pipeline.

Every check prints a single ``[PASS]``/``[FAIL]`` line with the measured
quantities before asserting, so a bare ``pytest tests/test_acceptance.py -s``
doubles as a readable report.  Fast checks are oracle-based; the directional
comparisons (noise robustness, ensembling, self-training, determinism) run
the real protocols at benchmark scale and share session-scoped runs.
"""

import hashlib
import time

import numpy as np
import pytest
import torch

from distner.augment import augment_corpus, audit_augmentation
from distner.cli import main
from distner.config import TrainRecipe
from distner.corpus import Sentence, TagScheme
from distner.evaluation import PRF, decode_entities, encode_entities, score
from distner.harness import (
    GrammarOracleLm,
    audit_label_preservation,
    default_grammar,
    generate,
    run_ab,
)
from distner.losses import ProbTable, ce_loss, gce_loss, mae_loss
from distner.model import (
    EncoderSpec,
    Vocabulary,
    build_tagger,
    classification_loss,
)
from distner.selftrain import compute_soft_labels


def _report(capsys, ok, name, detail):
    with capsys.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _random_tables(count=100, tokens=20, classes=5, seed=20240820):
    rng = np.random.default_rng(seed)
    tables = []
    for _ in range(count):
        rows = rng.uniform(0.0, 1.0, size=(tokens, classes))
        rows /= rows.sum(axis=1, keepdims=True)
        labels = rng.integers(0, classes, size=tokens)
        tables.append((ProbTable(rows), labels))
    return tables


# ---------------------------------------------------------------------------
# Loss-layer checks


def test_gce_matches_ce_in_the_small_q_limit(capsys):
    start = time.perf_counter()
    gaps = {1e-3: [], 1e-5: []}
    for table, labels in _random_tables():
        ce = ce_loss(table, labels).value
        for q in gaps:
            gce = gce_loss(table, labels, q=q).value
            gaps[q].append(abs(gce - ce) / ce)
    elapsed = time.perf_counter() - start
    worst_coarse = max(gaps[1e-3])
    worst_fine = max(gaps[1e-5])
    ok = worst_coarse < 1e-2 and worst_fine < 1e-4 and elapsed < 1.0
    _report(
        capsys,
        ok,
        "gce-ce-limit",
        f"rel gap {worst_coarse:.2e} @ q=1e-3, {worst_fine:.2e} @ q=1e-5 "
        f"on 100 tables ({elapsed:.2f}s)",
    )


def test_gce_at_q_one_equals_mae(capsys):
    start = time.perf_counter()
    worst = 0.0
    for table, labels in _random_tables():
        gce = gce_loss(table, labels, q=1.0).value
        mae = mae_loss(table, labels).value
        worst = max(worst, abs(gce - mae))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-12 and elapsed < 1.0
    _report(capsys, ok, "gce-q1-mae", f"max |gce - mae| = {worst:.2e} ({elapsed:.2f}s)")


def test_loss_gradients_match_finite_differences(capsys):
    start = time.perf_counter()
    step = 1e-6
    losses = {
        "ce": lambda t, y: ce_loss(t, y),
        "mae": lambda t, y: mae_loss(t, y),
        "gce": lambda t, y: gce_loss(t, y, q=0.7),
    }
    labels = np.zeros(1, dtype=np.int64)

    def value(fn, f):
        return fn(ProbTable(np.array([[f, 1.0 - f]])), labels).value

    worst = 0.0
    for f in np.linspace(0.05, 0.95, 181):
        for fn in losses.values():
            analytic = fn(ProbTable(np.array([[f, 1.0 - f]])), labels).grad[0]
            fd = (value(fn, f + step) - value(fn, f - step)) / (2.0 * step)
            worst = max(worst, abs(analytic - fd))

    ordered = True
    for f in np.linspace(0.05, 0.999, 300):
        table = ProbTable(np.array([[f, 1.0 - f]]))
        g_mae = abs(mae_loss(table, labels).grad[0])
        g_gce = abs(gce_loss(table, labels, q=0.7).grad[0])
        g_ce = abs(ce_loss(table, labels).grad[0])
        ordered = ordered and g_mae < g_gce < g_ce
    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and ordered and elapsed < 5.0
    _report(
        capsys,
        ok,
        "loss-gradients",
        f"max |analytic - fd| = {worst:.2e}, |d mae| < |d gce| < |d ce| "
        f"{'holds' if ordered else 'VIOLATED'} ({elapsed:.2f}s)",
    )


def test_soft_labels_match_brute_force_oracle(capsys):
    start = time.perf_counter()

    def oracle(f):
        f = np.asarray(f, dtype=np.float64)
        squared = f * f
        per_class = squared / f.sum(axis=0)
        return per_class / per_class.sum(axis=1, keepdims=True)

    rng = np.random.default_rng(914)
    worst = 0.0
    worst_row_sum = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        c = int(rng.integers(2, 6))
        f = rng.uniform(0.01, 0.99, size=(n, c))
        got = compute_soft_labels(f).rows
        worst = max(worst, float(np.max(np.abs(got - oracle(f)))))
        worst_row_sum = max(worst_row_sum, float(np.max(np.abs(got.sum(axis=1) - 1.0))))

    example = compute_soft_labels(np.array([[0.8, 0.2], [0.4, 0.6]])).rows
    expected = np.array([[0.914286, 0.085714], [0.228571, 0.771429]])
    example_ok = np.array_equal(np.round(example, 6), expected)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and worst_row_sum < 1e-9 and example_ok and elapsed < 5.0
    _report(
        capsys,
        ok,
        "soft-label-oracle",
        f"max dev {worst:.2e} over 1000 inputs, row sums off by {worst_row_sum:.2e}, "
        f"worked example {'reproduced' if example_ok else 'WRONG'} ({elapsed:.2f}s)",
    )


def test_micro_model_gradients_match_finite_differences(capsys):
    start = time.perf_counter()
    vocab = Vocabulary.build([Sentence.from_tokens(["ada", "bix", "cor"], "grad:0")])
    spec = EncoderSpec(
        vocab,
        kind="tiny-transformer",
        hidden_size=4,
        num_layers=1,
        num_heads=2,
        max_len=8,
        dropout=0.0,
    )
    model = build_tagger(spec, TagScheme(("T1", "T2")), seed=3).double()
    model.eval()
    sentence = Sentence.from_tokens(["ada", "bix", "cor"], "grad:0")
    ids, pad = model.batch_tensors([sentence])
    labels = torch.tensor([[0, 1, 2]])
    contributing = torch.ones((1, 3), dtype=torch.bool)

    def loss():
        p_entity, type_dist, _ = model.forward_batch(ids, pad)
        return classification_loss(p_entity, type_dist, labels, contributing, "gce", 0.7)

    model.zero_grad()
    loss().backward()
    analytic = {name: p.grad.detach().clone() for name, p in model.named_parameters()}

    step = 5e-5
    worst = 0.0
    checked = 0
    with torch.no_grad():
        for name, param in model.named_parameters():
            flat = param.data.view(-1)
            grads = analytic[name].view(-1)
            for i in range(flat.numel()):
                keep = float(flat[i])
                flat[i] = keep + step
                upper = float(loss())
                flat[i] = keep - step
                lower = float(loss())
                flat[i] = keep
                fd = (upper - lower) / (2.0 * step)
                a = float(grads[i])
                rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
                worst = max(worst, rel)
                checked += 1
    elapsed = time.perf_counter() - start
    ok = worst < 1e-3 and elapsed < 30.0
    _report(
        capsys,
        ok,
        "micro-model-gradients",
        f"max rel err {worst:.2e} over {checked} parameters ({elapsed:.2f}s)",
    )


# ---------------------------------------------------------------------------
# Benchmark-scale directional comparisons (session-scoped, minutes each)


@pytest.fixture(scope="session")
def noise_ab():
    start = time.perf_counter()
    report = run_ab("gce_vs_ce", TrainRecipe())
    return report, time.perf_counter() - start


def test_robust_arm_beats_ce_under_synthetic_noise(capsys, noise_ab):
    report, elapsed = noise_ab
    delta = report.extras["delta_median"]
    ok = delta >= 0.02 and elapsed < 900.0
    _report(
        capsys,
        ok,
        "noise-ab",
        f"gce+removal median f1 leads ce by {delta * 100:+.2f} points over "
        f"{len(report.seeds)} seeds ({elapsed:.0f}s)",
    )


def test_removed_tokens_are_enriched_in_corruptions(capsys, noise_ab):
    report, _ = noise_ab
    enrichment = report.extras["removal_enrichment_min"]
    rate = report.extras["corruption_rate"]
    ok = enrichment >= 1.5
    _report(
        capsys,
        ok,
        "removal-enrichment",
        f"removed tokens are corrupted at {enrichment:.1f}x the corpus rate "
        f"({rate:.3f}) in the worst seed",
    )


def test_distillation_shrinks_seed_variance(capsys):
    start = time.perf_counter()
    report = run_ab("ensemble_variance", TrainRecipe())
    elapsed = time.perf_counter() - start
    member_std = report.extras["member_std"]
    distilled_std = report.extras["distilled_std"]
    ok = distilled_std <= member_std and elapsed < 1800.0
    _report(
        capsys,
        ok,
        "ensemble-variance",
        f"distilled f1 std {distilled_std:.4f} vs member std {member_std:.4f} "
        f"across {len(report.seeds)} base seeds ({elapsed:.0f}s)",
    )


def test_self_training_helps_and_augmentation_does_not_hurt(capsys):
    start = time.perf_counter()
    report = run_ab("aug_on_off", TrainRecipe())
    elapsed = time.perf_counter() - start
    med = {arm: float(np.median(values)) for arm, values in report.arms.items()}
    leg_aug = med["st_aug"] >= med["st_plain"]
    leg_plain = med["st_plain"] >= med["ens"] - 0.005
    ok = leg_aug and leg_plain and elapsed < 1200.0
    _report(
        capsys,
        ok,
        "self-training",
        f"median f1 aug {med['st_aug']:.6f} >= plain {med['st_plain']:.6f} "
        f"{'holds' if leg_aug else 'VIOLATED'} (gap {report.extras['st_aug_minus_st_plain']:+.6f}); "
        f"plain >= ensemble {med['ens']:.6f} - 0.005 "
        f"{'holds' if leg_plain else 'VIOLATED'} (gap {report.extras['st_plain_minus_ens']:+.6f}) "
        f"({elapsed:.0f}s)",
    )


# ---------------------------------------------------------------------------
# Augmentation and evaluator audits


def test_augmentation_constraints_and_label_preservation(capsys):
    start = time.perf_counter()
    grammar = default_grammar()
    generated = generate(grammar, 1000, seed=41)
    oracle = GrammarOracleLm(grammar, generated)
    pairs = augment_corpus(
        [g.sentence for g in generated], oracle, rate=0.15, top_k=5, seed=17
    )
    constraint_violations = 0
    label_violations = 0
    for pair in pairs:
        if audit_augmentation(pair, rate=0.15, top_k=5):
            constraint_violations += 1
        if audit_label_preservation(pair, grammar, generated[pair.index].gold.labels):
            label_violations += 1
    elapsed = time.perf_counter() - start
    ok = (
        len(pairs) == 1000
        and constraint_violations == 0
        and label_violations == 0
        and elapsed < 60.0
    )
    _report(
        capsys,
        ok,
        "augmentation-audit",
        f"{len(pairs)} pairs, {constraint_violations} constraint and "
        f"{label_violations} label-preservation violations ({elapsed:.2f}s)",
    )


def _random_span_set(rng, length, types=("PER", "LOC", "ORG", "MISC")):
    spans = []
    pos = 0
    while pos < length:
        if rng.random() < 0.45:
            width = int(rng.integers(1, min(3, length - pos) + 1))
            kind = types[int(rng.integers(len(types)))]
            if spans and spans[-1][1] == pos and spans[-1][2] == kind:
                kind = types[(types.index(kind) + 1) % len(types)]
            spans.append((pos, pos + width, kind))
            pos += width
        else:
            pos += 1
    return spans


def test_span_scoring_example_and_round_trip(capsys):
    start = time.perf_counter()
    gold = [(0, 2, "PER"), (3, 4, "ORG")]
    pred = [(0, 2, "PER"), (3, 4, "PER")]
    example_ok = score(pred, gold) == PRF(0.5, 0.5, 0.5)

    rng = np.random.default_rng(77)
    failures = 0
    for _ in range(10_000):
        length = int(rng.integers(1, 13))
        spans = _random_span_set(rng, length)
        decoded = decode_entities(encode_entities(spans, length))
        if decoded != spans:
            failures += 1
    elapsed = time.perf_counter() - start
    ok = example_ok and failures == 0 and elapsed < 10.0
    _report(
        capsys,
        ok,
        "span-scoring",
        f"worked example {'reproduced' if example_ok else 'WRONG'}, "
        f"{failures} round-trip failures in 10000 span sets ({elapsed:.2f}s)",
    )


# ---------------------------------------------------------------------------
# Whole-pipeline determinism


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_pipeline_rerun_is_bit_identical(capsys, tmp_path):
    start = time.perf_counter()
    first, second = tmp_path / "first", tmp_path / "second"
    for out in (first, second):
        assert main(["run-all", "--out", str(out)]) == 0
    hashes = {
        name: (_digest(first / name), _digest(second / name))
        for name in ("final.ckpt", "ensemble.ckpt")
    }
    ckpts_ok = all(a == b for a, b in hashes.values())
    reports_ok = all(
        (first / name).read_bytes() == (second / name).read_bytes()
        for name in ("report.kv", "report.txt")
    )
    elapsed = time.perf_counter() - start
    ok = ckpts_ok and reports_ok and elapsed < 1800.0
    _report(
        capsys,
        ok,
        "pipeline-determinism",
        f"final checkpoint {hashes['final.ckpt'][0][:12]} reproduced "
        f"{'exactly' if ckpts_ok and reports_ok else 'WITH DIFFERENCES'} ({elapsed:.0f}s)",
    )
