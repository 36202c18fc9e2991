"""Vocabulary, tag set, BiLSTM encoder, prediction and model persistence."""

from __future__ import annotations

import numpy as np
import pytest

from emrkg.corpus import BioSentence
from emrkg.derm import MASK_SYMBOL
from emrkg.errors import DataError
from emrkg.schema import EntitySchema
from emrkg.tagger import (
    TaggerModel,
    TagSet,
    Vocabulary,
    encode,
    gradient_check,
    load_model,
    predict,
    save_model,
)
from emrkg.tagger.model import (
    ModelFormatError,
    init_model,
    param_arrays,
    sentence_loss,
    sentence_loss_and_grads,
)
from emrkg.tagger.crf import nll
from emrkg.tagger.vocab import PAD_TOKEN, UNK_TOKEN


@pytest.fixture(scope="module")
def small_schema() -> EntitySchema:
    return EntitySchema(("Disease", "Symptom"))


@pytest.fixture(scope="module")
def vocab() -> Vocabulary:
    return Vocabulary.build(["肝癌伴腹痛", "头晕乏力。"])


@pytest.fixture()
def model(small_schema, vocab) -> TaggerModel:
    return init_model(
        vocab, TagSet(small_schema), d_emb=6, hidden=5, rng=np.random.default_rng(0)
    )


# -- vocabulary ----------------------------------------------------------


def test_vocabulary_reserves_pad_unk_mask_first(vocab):
    assert vocab.tokens[:3] == (PAD_TOKEN, UNK_TOKEN, MASK_SYMBOL)
    assert list(vocab.tokens[3:]) == sorted(vocab.tokens[3:])
    assert "肝" in vocab.tokens


def test_vocabulary_encodes_unknown_chars_as_unk(vocab):
    indices = vocab.encode("肝X")
    assert indices[0] == vocab.index["肝"]
    assert indices[1] == vocab.index[UNK_TOKEN]


def test_vocabulary_build_includes_extra_surfaces():
    vocab = Vocabulary.build(["肝癌"], extra=["心悸"])
    assert "心" in vocab.index
    assert "悸" in vocab.index


def test_vocabulary_rejects_duplicates_and_missing_reserved():
    with pytest.raises(DataError):
        Vocabulary((PAD_TOKEN, UNK_TOKEN, MASK_SYMBOL, "肝", "肝"))
    with pytest.raises(DataError):
        Vocabulary((PAD_TOKEN, UNK_TOKEN, "肝"))


# -- tag set ----------------------------------------------------------


def test_tagset_orders_o_then_b_i_pairs(small_schema):
    tagset = TagSet(small_schema)
    assert tagset.tags == ("O", "B-Disease", "I-Disease", "B-Symptom", "I-Symptom")
    assert tagset.start == 5
    assert tagset.stop == 6


def test_tagset_encode_decode_round_trip(small_schema):
    tagset = TagSet(small_schema)
    tags = ("O", "B-Disease", "I-Disease", "O")
    assert tagset.decode(tagset.encode(tags)) == tags
    with pytest.raises(DataError):
        tagset.encode(("B-Gene",))


def test_allowed_transitions_enforce_bio_structure(small_schema):
    tagset = TagSet(small_schema)
    allowed = tagset.allowed_transitions()
    idx = tagset.index
    assert allowed[idx["B-Disease"], idx["I-Disease"]]
    assert allowed[idx["I-Disease"], idx["I-Disease"]]
    assert not allowed[idx["O"], idx["I-Disease"]]
    assert not allowed[idx["B-Symptom"], idx["I-Disease"]]
    assert not allowed[tagset.start, idx["I-Disease"]]
    assert allowed[tagset.start, idx["B-Disease"]]
    assert not allowed[:, tagset.start].any()
    assert not allowed[tagset.stop, :].any()
    assert allowed[idx["O"], tagset.stop]


# -- encoder ----------------------------------------------------------


def test_init_model_shapes_and_masked_transitions(model, vocab):
    assert model.embedding.shape == (len(vocab), 6)
    assert model.proj_w.shape == (10, 5)
    assert model.transitions.shape == (7, 7)
    assert np.all(np.isneginf(model.transitions[~model.allowed]))
    assert np.all(np.isfinite(model.transitions[model.allowed]))


def test_init_model_is_rng_deterministic(small_schema, vocab):
    tagset = TagSet(small_schema)
    a = init_model(vocab, tagset, 6, 5, np.random.default_rng(1))
    b = init_model(vocab, tagset, 6, 5, np.random.default_rng(1))
    for (name, left), (_, right) in zip(param_arrays(a), param_arrays(b)):
        np.testing.assert_array_equal(left, right, err_msg=name)


def test_encode_emits_one_score_row_per_character(model):
    emissions = encode(model, "肝癌伴")
    assert emissions.shape == (3, 5)
    np.testing.assert_array_equal(emissions, encode(model, "肝癌伴"))


def test_encode_with_zero_projection_returns_bias(model):
    model.proj_w = np.zeros_like(model.proj_w)
    model.proj_b = np.arange(5.0)
    emissions = encode(model, "肝癌")
    np.testing.assert_array_equal(emissions, np.tile(np.arange(5.0), (2, 1)))


def test_predict_returns_well_formed_sentences(model):
    sentences = [
        BioSentence("肝癌伴腹痛。", ("O",) * 6),
        BioSentence("头晕X乏力", ("O",) * 5),  # X is out of vocabulary
    ]
    predicted = predict(model, sentences)
    assert [p.chars for p in predicted] == [s.chars for s in sentences]
    # BioSentence construction validates the tag structure itself.
    assert all(isinstance(p, BioSentence) for p in predicted)
    assert predicted == predict(model, sentences)


def test_sentence_loss_equals_crf_nll_of_encoded_emissions(model):
    chars = "肝癌伴腹痛"
    tags = ("B-Disease", "I-Disease", "O", "B-Symptom", "I-Symptom")
    indices = model.vocab.encode(chars)
    tag_indices = model.tagset.encode(tags)
    expected = nll(encode(model, chars), model.transitions, tag_indices)
    assert sentence_loss(model, indices, tag_indices) == pytest.approx(expected, abs=1e-12)
    loss, grads = sentence_loss_and_grads(model, indices, tag_indices)
    assert loss == pytest.approx(expected, abs=1e-12)
    assert set(name for name, _ in param_arrays(model)) == set(grads)


def test_unused_embedding_rows_get_zero_gradient(model):
    indices = model.vocab.encode("肝癌")
    tag_indices = model.tagset.encode(("B-Disease", "I-Disease"))
    _, grads = sentence_loss_and_grads(model, indices, tag_indices)
    used = set(int(i) for i in indices)
    for row in range(model.embedding.shape[0]):
        if row not in used:
            assert np.all(grads["embedding"][row] == 0.0)
    assert any(np.any(grads["embedding"][row] != 0.0) for row in used)


def test_gradient_check_on_a_toy_model(small_schema):
    vocab = Vocabulary.build(["肝癌痛"])
    model = init_model(
        vocab, TagSet(small_schema), d_emb=4, hidden=4, rng=np.random.default_rng(7)
    )
    encoded = [
        (vocab.encode("肝癌"), model.tagset.encode(("B-Disease", "I-Disease"))),
        (vocab.encode("痛"), model.tagset.encode(("O",))),
    ]
    assert gradient_check(model, encoded, epsilon=1e-4) < 1e-4


# -- persistence ----------------------------------------------------------


def test_save_load_round_trip_is_bit_exact(model, tmp_path):
    path = tmp_path / "model.bin"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.vocab == model.vocab
    assert loaded.tagset.schema == model.tagset.schema
    for (name, left), (_, right) in zip(param_arrays(model), param_arrays(loaded)):
        np.testing.assert_array_equal(left, right, err_msg=name)
    sentences = [BioSentence("肝癌伴腹痛。", ("O",) * 6)]
    assert predict(loaded, sentences) == predict(model, sentences)


def test_save_is_byte_deterministic(model, tmp_path):
    first = tmp_path / "a.bin"
    second = tmp_path / "b.bin"
    save_model(model, first)
    save_model(model, second)
    assert first.read_bytes() == second.read_bytes()


def test_load_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bogus.bin"
    path.write_bytes(b"not a model file at all")
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_load_rejects_truncated_file(model, tmp_path):
    path = tmp_path / "model.bin"
    save_model(model, path)
    data = path.read_bytes()
    truncated = tmp_path / "cut.bin"
    truncated.write_bytes(data[: len(data) // 2])
    with pytest.raises(ModelFormatError, match="truncated"):
        load_model(truncated)
