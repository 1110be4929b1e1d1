import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conceptvlm.errors import UndefinedMetricError
from conceptvlm.metrics import (
    accuracy,
    balanced_recall,
    bleu,
    captioning_recall,
    parse_choice_letter,
    parse_yes_no,
    weighted_score,
)


def test_parse_yes_no():
    assert parse_yes_no("Yes") == "Yes"
    assert parse_yes_no("  yes, it is") == "Yes"
    assert parse_yes_no("NO") == "No"
    assert parse_yes_no("maybe") is None
    assert parse_yes_no("") is None


def test_parse_choice():
    assert parse_choice_letter("A") == 0
    assert parse_choice_letter("b.") == 1
    assert parse_choice_letter("") is None


def test_balanced_recall_perfect():
    expected = ["Yes"] * 4 + ["No"] * 6
    assert balanced_recall(expected, list(expected)) == 1.0


def test_balanced_recall_constant_yes_is_half():
    expected = ["Yes"] * 3 + ["No"] * 17
    predicted = ["Yes"] * 20
    assert balanced_recall(expected, predicted) == 0.5


def test_balanced_recall_hand_count():
    # 8/10 yes recall, 6/10 no recall -> 0.7
    expected = ["Yes"] * 10 + ["No"] * 10
    predicted = ["Yes"] * 8 + ["No"] * 2 + ["No"] * 6 + ["Yes"] * 4
    assert balanced_recall(expected, predicted) == pytest.approx(0.7)


def test_balanced_recall_undefined():
    with pytest.raises(UndefinedMetricError):
        balanced_recall(["Yes", "Yes"], ["Yes", "Yes"])


def test_bleu_identity():
    assert bleu("the red circle sits left", "the red circle sits left") == pytest.approx(1.0)


def test_bleu_disjoint():
    assert bleu("alpha beta gamma", "delta epsilon zeta") == 0.0


def test_bleu_empty_candidate():
    assert bleu("", "some reference") == 0.0


def test_bleu_hand_worksheet():
    # candidate "the cat sat" vs reference "the cat sat down":
    #   p1 = 3/3; p2 = (2+1)/(2+1); p3 = (1+1)/(1+1); p4 = (0+1)/(0+1)
    #   geometric mean = 1; brevity = exp(1 - 4/3)
    expect = math.exp(1 - 4 / 3)
    assert bleu("the cat sat", "the cat sat down") == pytest.approx(expect, abs=1e-9)


def test_bleu_case_and_whitespace_invariance():
    a = bleu("The  Red\tcircle", "the red circle")
    assert a == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.sampled_from(["a", "b", "c", "dd"]), min_size=0, max_size=8),
    st.lists(st.sampled_from(["a", "b", "c", "dd"]), min_size=1, max_size=8),
)
def test_bleu_bounds(cand_tokens, ref_tokens):
    score = bleu(" ".join(cand_tokens), " ".join(ref_tokens))
    assert 0.0 <= score <= 1.0


def test_captioning_recall_perfect():
    captions = ["<sks1> on the left", "<sks1> and <sks2> together"]
    required = [["<sks1>"], ["<sks1>", "<sks2>"]]
    assert captioning_recall(captions, required) == 1.0


def test_captioning_recall_partial():
    captions = ["only <sks1> here"]
    required = [["<sks1>", "<sks2>"]]
    assert captioning_recall(captions, required) == 0.5


def test_captioning_recall_corpus_matches_substring_oracle():
    captions = ["<sks1> x", "nothing", "<sks2> and <sks1>", "<sks2>"]
    required = [["<sks1>"], ["<sks1>"], ["<sks1>", "<sks2>"], ["<sks1>", "<sks2>"]]
    found = sum(1 for c, req in zip(captions, required) for r in req if r in c)
    needed = sum(len(r) for r in required)
    assert captioning_recall(captions, required) == pytest.approx(found / needed)


def test_weighted_score_constant():
    assert weighted_score(0.8, 0.8, 10, 20) == pytest.approx(0.8)


def test_weighted_score_reproduces_reported_aggregate():
    # 0.882 over 1180 single + 0.905 over 600 multi -> 0.890 at 3 decimals
    got = weighted_score(0.882, 0.905, 1180, 600)
    assert round(got, 3) == 0.890


def test_weighted_score_between_inputs():
    got = weighted_score(0.3, 0.9, 7, 3)
    assert 0.3 <= got <= 0.9
    assert got == pytest.approx((0.3 * 7 + 0.9 * 3) / 10)


def test_weighted_score_degenerate_counts():
    assert weighted_score(0.7, None, 5, 0) == 0.7
    assert weighted_score(None, 0.4, 0, 5) == 0.4
    assert weighted_score(None, None, 0, 0) is None


def test_accuracy():
    assert accuracy(3, 4) == 0.75
    with pytest.raises(UndefinedMetricError):
        accuracy(0, 0)
