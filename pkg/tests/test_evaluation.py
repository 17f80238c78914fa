import pytest
from hypothesis import given
from hypothesis import strategies as st

from distner.errors import ShapeError
from distner.evaluation import (
    PRF,
    decode_entities,
    encode_entities,
    format_report,
    score,
    score_corpus,
    token_f1,
    write_report,
)


# ---------------------------------------------------------------------------
# Decoding


def test_decode_runs():
    assert decode_entities(["PER", "PER", "O", "ORG"]) == [(0, 2, "PER"), (3, 4, "ORG")]


def test_decode_all_outside():
    assert decode_entities(["O", "O", "O"]) == []


def test_decode_type_change_splits_runs():
    assert decode_entities(["PER", "ORG", "ORG"]) == [(0, 1, "PER"), (1, 3, "ORG")]


def test_decode_trailing_entity():
    assert decode_entities(["O", "LOC"]) == [(1, 2, "LOC")]


def test_encode_basic():
    assert encode_entities([(0, 2, "PER"), (3, 4, "ORG")], 4) == ["PER", "PER", "O", "ORG"]


def test_encode_rejects_bad_spans():
    with pytest.raises(ShapeError):
        encode_entities([(0, 3, "PER")], 2)
    with pytest.raises(ShapeError):
        encode_entities([(1, 1, "PER")], 3)
    with pytest.raises(ShapeError):
        encode_entities([(0, 2, "PER"), (1, 3, "ORG")], 4)


def non_degenerate_span_sets(length):
    """Non-overlapping typed spans with no adjacent same-type pair."""

    @st.composite
    def build(draw):
        n = draw(st.integers(min_value=1, max_value=length))
        spans = []
        i = 0
        prev_type = None
        while i < n:
            if draw(st.booleans()):
                end = draw(st.integers(min_value=i + 1, max_value=n))
                etype = draw(
                    st.sampled_from([t for t in ("PER", "ORG", "LOC") if t != prev_type])
                )
                spans.append((i, end, etype))
                prev_type = etype
                i = end
            else:
                prev_type = None
                i += 1
        return n, spans

    return build()


@given(non_degenerate_span_sets(12))
def test_decode_encode_round_trip(case):
    n, spans = case
    assert decode_entities(encode_entities(spans, n)) == spans


# ---------------------------------------------------------------------------
# Scoring


def test_perfect_prediction():
    spans = [(0, 2, "PER"), (3, 4, "ORG")]
    assert score(spans, spans) == PRF(1.0, 1.0, 1.0)


def test_half_right_hand_example():
    gold = [(0, 2, "PER"), (3, 4, "ORG")]
    pred = [(0, 2, "PER"), (3, 4, "PER")]
    assert score(pred, gold) == PRF(0.5, 0.5, 0.5)


def test_empty_prediction_scores_zero():
    assert score([], [(0, 1, "PER")]) == PRF(0.0, 0.0, 0.0)
    assert score([(0, 1, "PER")], []) == PRF(0.0, 0.0, 0.0)


def test_boundary_error_is_no_credit():
    assert score([(0, 3, "PER")], [(0, 2, "PER")]).f1 == 0.0


def test_score_corpus_micro_average():
    gold = [[(0, 2, "PER")], [(0, 1, "ORG"), (2, 3, "LOC")]]
    pred = [[(0, 2, "PER")], [(0, 1, "LOC"), (2, 3, "LOC")]]
    got = score_corpus(pred, gold)
    assert got.precision == pytest.approx(2 / 3)
    assert got.recall == pytest.approx(2 / 3)
    assert got.f1 == pytest.approx(2 / 3)


def test_score_corpus_alignment():
    with pytest.raises(ShapeError):
        score_corpus([[]], [[], []])


@given(st.lists(non_degenerate_span_sets(8), min_size=1, max_size=4))
def test_f1_bounds_and_symmetry(cases):
    pred = [spans for _, spans in cases]
    gold = list(reversed(pred))
    forward = score_corpus(pred, gold)
    backward = score_corpus(gold, pred)
    assert 0.0 <= forward.f1 <= 1.0
    assert forward.precision == pytest.approx(backward.recall)
    assert forward.recall == pytest.approx(backward.precision)
    assert forward.f1 == pytest.approx(backward.f1)


# ---------------------------------------------------------------------------
# Token-level scoring


def test_token_f1_counts():
    pred = [["PER", "O", "ORG"]]
    gold = [["PER", "O", "LOC"]]
    got = token_f1(pred, gold)
    assert got.precision == pytest.approx(0.5)
    assert got.recall == pytest.approx(0.5)


def test_token_f1_alignment_errors():
    with pytest.raises(ShapeError):
        token_f1([["O"]], [["O"], ["O"]])
    with pytest.raises(ShapeError):
        token_f1([["O", "O"]], [["O"]])


# ---------------------------------------------------------------------------
# Reports


def test_format_report_fixed_digits():
    text = format_report({"entity_f1": 0.5, "token_f1": 1 / 3}, title="t")
    assert "entity_f1  0.500000" in text
    assert "token_f1   0.333333" in text


def test_write_report_twins(tmp_path):
    metrics = {"entity_f1": 0.25}
    text_path = tmp_path / "r.txt"
    kv_path = tmp_path / "r.kv"
    write_report(metrics, text_path, kv_path)
    assert "0.250000" in text_path.read_text(encoding="utf-8")
    assert kv_path.read_text(encoding="utf-8") == "entity_f1=0.250000\n"
