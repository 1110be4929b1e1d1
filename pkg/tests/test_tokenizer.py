import pytest

from conceptvlm.errors import InputError
from conceptvlm.tokenizer import BASE_VOCAB_SIZE, BOS_ID, EOS_ID, PAD_ID, Vocabulary


def test_round_trip_plain_text():
    vocab = Vocabulary()
    text = "Can you see the red circle?\nYes"
    ids = vocab.encode(text)
    assert all(0 <= i < BASE_VOCAB_SIZE for i in ids)
    assert vocab.decode(ids) == text


def test_identifier_is_single_token():
    vocab = Vocabulary(identifiers=("<sks1>", "<sks2>"))
    ids = vocab.encode("<sks1> and <sks2>")
    assert ids[0] == BASE_VOCAB_SIZE
    assert ids[-1] == BASE_VOCAB_SIZE + 1
    assert ids.count(BASE_VOCAB_SIZE) == 1
    assert vocab.decode(ids) == "<sks1> and <sks2>"


def test_longest_match_priority():
    vocab = Vocabulary(identifiers=("<a>", "<a>b"))
    ids = vocab.encode("<a>b")
    assert ids == [BASE_VOCAB_SIZE + 1]


def test_special_ids_distinct():
    assert len({PAD_ID, BOS_ID, EOS_ID}) == 3
    assert Vocabulary().decode([PAD_ID, BOS_ID, EOS_ID]) == ""


def test_unknown_character_rejected():
    with pytest.raises(InputError):
        Vocabulary().encode("café")


def test_duplicate_identifiers_rejected():
    with pytest.raises(InputError):
        Vocabulary(identifiers=("<x>", "<x>"))


def test_expansion_never_remaps_base_ids():
    base = Vocabulary()
    expanded = Vocabulary(identifiers=("<sks1>",))
    text = "hello world 123"
    assert base.encode(text) == expanded.encode(text)
    assert expanded.size == BASE_VOCAB_SIZE + 1
