import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from distner.augment import augment_corpus
from distner.corpus import Sentence, TagScheme
from distner.errors import ParameterError, ShapeError
from distner.model import EncoderSpec, Vocabulary, build_tagger
from distner.selftrain import (
    SelfTrainSchedule,
    SoftLabelTable,
    compute_soft_labels,
    self_train,
    soft_labels_for_corpus,
    st_loss,
    write_st_metrics,
)

SCHEME = TagScheme(("PER", "ORG"))


def oracle_soft_labels(f):
    """Straight-line reimplementation: y_ij = (f_ij^2 / g_j) / sum_k (f_ik^2 / g_k)."""
    f = np.asarray(f, dtype=np.float64)
    g = f.sum(axis=0)
    weighted = f**2 / g
    return weighted / weighted.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Soft labels


def test_soft_label_worked_example():
    table = compute_soft_labels(np.array([[0.8, 0.2], [0.4, 0.6]]))
    np.testing.assert_allclose(
        table.rows, [[0.914286, 0.085714], [0.228571, 0.771429]], atol=5e-7
    )
    np.testing.assert_allclose(table.class_mass, [1.2, 0.8], atol=1e-12)


@settings(max_examples=50)
@given(
    hnp.arrays(
        np.float64,
        st.tuples(st.integers(1, 6), st.integers(2, 4)),
        elements=st.floats(0.01, 0.99),
    )
)
def test_soft_labels_match_oracle(f):
    table = compute_soft_labels(f)
    np.testing.assert_allclose(table.rows, oracle_soft_labels(f), atol=1e-9)


@settings(max_examples=50)
@given(
    hnp.arrays(
        np.float64,
        st.tuples(st.integers(1, 6), st.integers(2, 4)),
        elements=st.floats(0.01, 0.99),
    )
)
def test_soft_label_rows_are_distributions(f):
    rows = compute_soft_labels(f).rows
    assert rows.min() >= 0.0
    np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-9)


def test_squaring_sharpens_under_equal_class_mass():
    # mirrored rows give both classes the same mass, isolating the squaring
    f = np.array([[0.6, 0.4], [0.4, 0.6]])
    rows = compute_soft_labels(f).rows
    assert rows[0, 0] > 0.6
    assert rows[1, 1] > 0.6


def test_one_hot_rows_are_a_fixed_point():
    f = np.array([[1.0, 0.0], [0.0, 1.0]])
    rows = compute_soft_labels(f).rows
    np.testing.assert_allclose(rows, f, atol=1e-6)


def test_frequent_class_is_downweighted():
    """Two tokens with identical per-token predictions split differently when
    one class dominates the corpus mass."""
    f = np.array([[0.5, 0.5], [0.9, 0.1], [0.9, 0.1]])
    rows = compute_soft_labels(f).rows
    # for the ambiguous token the rarer second class wins the normalization
    assert rows[0, 1] > rows[0, 0]


def test_soft_labels_shape_validation():
    with pytest.raises(ShapeError):
        compute_soft_labels(np.zeros((0, 2)))
    with pytest.raises(ShapeError):
        compute_soft_labels(np.zeros(3))


def test_zero_mass_class_warns():
    with pytest.warns(UserWarning, match="near-zero"):
        compute_soft_labels(np.array([[0.9, 0.0], [0.8, 0.0]]))


def test_corpus_soft_labels_share_class_mass():
    slices = [np.array([[0.8, 0.2]]), np.array([[0.4, 0.6], [0.3, 0.2]])]
    tables = soft_labels_for_corpus(slices)
    assert len(tables) == 2
    np.testing.assert_allclose(tables[0].class_mass, tables[1].class_mass)
    stacked = compute_soft_labels(np.concatenate(slices, axis=0))
    np.testing.assert_allclose(
        np.concatenate([t.rows for t in tables], axis=0), stacked.rows
    )


def test_corpus_soft_labels_empty():
    assert soft_labels_for_corpus([]) == []


def test_soft_label_table_validation():
    with pytest.raises(ParameterError):
        SoftLabelTable(rows=np.array([[0.5, 0.6]]), class_mass=np.ones(2))
    with pytest.raises(ParameterError):
        SoftLabelTable(rows=np.array([[1.5, -0.5]]), class_mass=np.ones(2))
    with pytest.raises(ShapeError):
        SoftLabelTable(rows=np.ones(2), class_mass=np.ones(2))


# ---------------------------------------------------------------------------
# Self-training loss


def one_hot_table():
    return SoftLabelTable(rows=np.array([[1.0, 0.0]]), class_mass=np.ones(2))


def test_st_loss_one_hot_vs_uniform_is_two_log_two():
    uniform = np.array([[0.5, 0.5]])
    got = st_loss(one_hot_table(), uniform, uniform)
    assert got == pytest.approx(2 * math.log(2), abs=1e-12)


def test_st_loss_single_view_halves():
    uniform = np.array([[0.5, 0.5]])
    got = st_loss(one_hot_table(), uniform, None)
    assert got == pytest.approx(math.log(2), abs=1e-12)


def test_st_loss_identity_is_zero():
    table = SoftLabelTable(rows=np.array([[0.3, 0.7]]), class_mass=np.ones(2))
    pred = np.array([[0.3, 0.7]])
    assert st_loss(table, pred, pred) == pytest.approx(0.0, abs=1e-12)


def test_st_loss_symmetric_in_views():
    table = SoftLabelTable(rows=np.array([[0.3, 0.7], [0.6, 0.4]]), class_mass=np.ones(2))
    a = np.array([[0.2, 0.8], [0.5, 0.5]])
    b = np.array([[0.7, 0.3], [0.1, 0.9]])
    assert st_loss(table, a, b) == pytest.approx(st_loss(table, b, a), abs=1e-12)


def test_st_loss_renormalizes_full_distributions():
    """Passing rows that still carry the outside class must match passing the
    renormalized entity slice."""
    table = SoftLabelTable(rows=np.array([[0.3, 0.7]]), class_mass=np.ones(2))
    full = np.array([[0.2, 0.4, 0.4]])  # outside first; entity view is [0.5, 0.5]
    entity = np.array([[0.5, 0.5]])
    assert st_loss(table, full, None) == pytest.approx(
        st_loss(table, entity, None), abs=1e-12
    )


def test_st_loss_nonnegative():
    rng = np.random.default_rng(0)
    raw = rng.random((4, 2)) + 0.05
    table = compute_soft_labels(raw)
    pred = rng.random((4, 2)) + 0.05
    assert st_loss(table, pred, pred) >= 0.0


def test_st_loss_shape_errors():
    table = one_hot_table()
    with pytest.raises(ShapeError):
        st_loss(table, np.array([[0.5, 0.5], [0.5, 0.5]]), None)
    with pytest.raises(ShapeError):
        st_loss(table, np.array([[0.2, 0.2, 0.2, 0.4]]), None)


# ---------------------------------------------------------------------------
# Self-training loop


def toy_corpus(n=8):
    out = []
    for i in range(n):
        person = ("alice", "bob")[i % 2]
        out.append(Sentence.from_tokens([person, "works", "at", "acme"], f"st{i}"))
    return out


def toy_model(corpus, seed=0):
    vocab = Vocabulary.build(corpus)
    spec = EncoderSpec(vocab=vocab, hidden_size=16, num_layers=1, num_heads=2, max_len=8, dropout=0.0)
    return build_tagger(spec, SCHEME, seed)


class EchoAdapter:
    def candidates(self, masked, top_k):
        lists = []
        for p in masked.positions:
            tok = masked.original.tokens[p]
            lists.append(((tok, 0.6), ("works", 0.4)))
        return __import__("distner.augment", fromlist=["MlmDistribution"]).MlmDistribution(
            candidates=tuple(lists)
        )


def test_schedule_validation():
    with pytest.raises(ParameterError):
        SelfTrainSchedule(batch_size=0)
    with pytest.raises(ParameterError):
        SelfTrainSchedule(passes_per_iteration=0)


def test_zero_iterations_is_identity():
    corpus = toy_corpus()
    model = toy_model(corpus)
    before = model.export_state()
    result = self_train(model, corpus, [], 0, SelfTrainSchedule())
    assert result.metrics == []
    assert result.overall_binary_drift == 0.0
    for name, arr in model.export_state().items():
        np.testing.assert_array_equal(arr, before[name], err_msg=name)


def test_negative_iterations_rejected():
    corpus = toy_corpus(2)
    with pytest.raises(ParameterError):
        self_train(toy_model(corpus), corpus, [], -1, SelfTrainSchedule())


def test_self_train_metrics_shape():
    corpus = toy_corpus()
    model = toy_model(corpus)
    pairs = augment_corpus(corpus, EchoAdapter(), seed=1)
    schedule = SelfTrainSchedule(batch_size=4, lr=1e-4, seed=3)
    result = self_train(model, corpus, pairs, 2, schedule)
    assert result.model is model
    assert len(result.metrics) == 2
    for i, row in enumerate(result.metrics, start=1):
        assert row["iteration"] == float(i)
        assert np.isfinite(row["mean_loss"])
        assert row["soft_entropy"] >= 0.0
        assert 0.0 <= row["selected_fraction"] <= 1.0
        assert row["binary_drift"] >= 0.0
    assert 0.0 <= result.overall_binary_drift < 0.5


def test_self_train_without_pairs_uses_original_only():
    corpus = toy_corpus(4)
    model = toy_model(corpus)
    result = self_train(model, corpus, [], 1, SelfTrainSchedule(batch_size=4, lr=1e-4))
    assert len(result.metrics) == 1


def test_self_train_is_deterministic():
    corpus = toy_corpus()
    pairs = augment_corpus(corpus, EchoAdapter(), seed=1)
    schedule = SelfTrainSchedule(batch_size=4, lr=1e-4, seed=3)
    a = self_train(toy_model(corpus), corpus, pairs, 1, schedule)
    b = self_train(toy_model(corpus), corpus, pairs, 1, schedule)
    for name, arr in a.model.export_state().items():
        np.testing.assert_array_equal(arr, b.model.export_state()[name], err_msg=name)
    assert a.metrics == b.metrics


def test_metrics_file_format(tmp_path):
    metrics = [
        {"iteration": 1.0, "mean_loss": 0.5, "binary_drift": 0.01},
        {"iteration": 2.0, "mean_loss": 0.25, "binary_drift": 0.02},
    ]
    path = tmp_path / "st.txt"
    write_st_metrics(path, metrics)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "binary_drift=0.010000 iteration=1.000000 mean_loss=0.500000"
    assert lines[1] == "binary_drift=0.020000 iteration=2.000000 mean_loss=0.250000"
