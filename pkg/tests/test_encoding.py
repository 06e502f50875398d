import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csfn_dst.encoding import (
    DONTCARE,
    SEG,
    SEGMENTS,
    SPECIALS,
    EmbeddingTable,
    LengthError,
    TokenSequence,
    Vocabulary,
    embed_sequence,
    init_graph_embeddings,
    load_embedding_file,
    parse_state_tokens,
    serialize_state,
    serialize_utterance,
    tokenize,
    value_tokens,
)
from csfn_dst.schema_graph import build_schema_graph


@pytest.fixture
def vocab():
    return Vocabulary.build([tokenize("hello hi hotel price range expensive parking dont care taxi area north")])


def test_tokenize_examples():
    assert tokenize("Hello, world") == ["hello", ",", "world"]
    assert tokenize("") == []
    assert tokenize("price_range") == ["price", "range"]
    assert value_tokens("cambridge-station") == ("cambridge", "station")


def test_vocab_layout(vocab, tmp_path):
    assert tuple(vocab.itos[: len(SPECIALS)]) == SPECIALS
    assert vocab.id("never-seen") == vocab.unk_id
    vocab.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt").itos == vocab.itos
    with pytest.raises(ValueError):
        Vocabulary(["a", "b"])


def test_utterance_first_turn(vocab):
    seq = serialize_utterance("", "hi", vocab)
    assert seq.tokens == ["[CLS]", ";", "hi", "[SEP]"]
    assert seq.position_ids.tolist() == [0, 1, 2, 3]


def test_utterance_segments(vocab):
    seq = serialize_utterance("hello", "hi", vocab)
    assert seq.tokens == ["[CLS]", "hello", ";", "hi", "[SEP]"]
    assert seq.segment_ids.tolist() == [SEG["utt_cls"]] + [SEG["utt_body"]] * 4


def test_utterance_truncates_from_the_left(vocab, caplog):
    seq = serialize_utterance("", " ".join(str(i) for i in range(20)), vocab, max_len=8)
    assert len(seq) == 8
    assert seq.tokens[-2] == "19" and seq.tokens[0] == "[CLS]"
    assert "truncated" in caplog.text


def test_state_examples(vocab):
    assert serialize_state({}, vocab).tokens == ["[CLS]"]
    seq = serialize_state({("hotel", "price_range"): ("expensive",)}, vocab)
    assert seq.tokens == ["[CLS]", "hotel", "-", "price", "range", "-", "expensive"]
    assert seq.position_ids.tolist() == [0, 0, 1, 2, 3, 4, 5]
    assert serialize_state({("hotel", "parking"): DONTCARE}, vocab).tokens[-2:] == ["dont", "care"]


def test_state_rejects_empty_value(vocab):
    with pytest.raises(ValueError):
        serialize_state({("hotel", "area"): ()}, vocab)


def test_segment_inventory():
    assert len(SEGMENTS) == len(set(SEGMENTS)) == 7


def _zero_tables(vocab, d=4, keep=("token",)):
    tables = EmbeddingTable(len(vocab), d, np.random.default_rng(0), 16)
    for name in ("token", "segment", "position"):
        if name not in keep:
            getattr(tables, name).data[:] = 0.0
    return tables


def test_embed_sequence_sums(vocab):
    tables = EmbeddingTable(len(vocab), 4, np.random.default_rng(0), 16)
    seq = serialize_state({}, vocab)
    row = embed_sequence(seq, tables).data[0]
    expect = tables.token.data[vocab.cls_id] + tables.segment.data[SEG["state_cls"]] + tables.position.data[0]
    np.testing.assert_array_equal(row, expect)
    zero = _zero_tables(vocab)
    np.testing.assert_array_equal(embed_sequence(seq, zero).data, zero.token.data[seq.token_ids])


def test_embed_positions_differ_by_position_rows(vocab):
    tables = EmbeddingTable(len(vocab), 4, np.random.default_rng(1), 16)
    ids = vocab.ids(["hi", "hi"])
    seq = TokenSequence(["hi", "hi"], ids, np.array([1, 1]), np.array([0, 1]))
    out = embed_sequence(seq, tables).data
    np.testing.assert_allclose(out[1] - out[0], tables.position.data[1] - tables.position.data[0], atol=1e-15)


def test_embed_length_error(vocab):
    tables = EmbeddingTable(len(vocab), 4, np.random.default_rng(0), 3)
    with pytest.raises(LengthError):
        embed_sequence(serialize_utterance("hello", "hi", vocab), tables)


def test_embed_linear_in_token_table(vocab):
    tables = _zero_tables(vocab)
    seq = serialize_utterance("hello", "hi", vocab)
    a = embed_sequence(seq, tables).data
    tables.token.data *= 2.0
    np.testing.assert_array_equal(embed_sequence(seq, tables).data, 2.0 * a)


def test_graph_embeddings_average_name_tokens(vocab):
    from csfn_dst.schema_graph import SchemaDef

    g = build_schema_graph(SchemaDef.from_dict({"domains": ["taxi", "hotel"],
                                                "slots": {"taxi": ["area"], "hotel": ["price_range"]}}))
    tables = _zero_tables(vocab)
    h = init_graph_embeddings(g, tables, vocab).data
    tok = tables.token.data
    np.testing.assert_array_equal(h[0], tok[vocab.id("taxi")])
    np.testing.assert_allclose(h[g.slot_index("price_range")], (tok[vocab.id("price")] + tok[vocab.id("range")]) / 2)


def test_graph_segment_difference(vocab):
    from csfn_dst.schema_graph import SchemaDef

    g = build_schema_graph(SchemaDef.from_dict({"domains": ["area"], "slots": {"area": ["area"]}}))
    tables = EmbeddingTable(len(vocab), 4, np.random.default_rng(2), 16)
    h = init_graph_embeddings(g, tables, vocab).data
    seg = tables.segment.data
    np.testing.assert_allclose(h[0] - h[1], seg[SEG["node_domain"]] - seg[SEG["node_slot"]], atol=1e-15)


def test_graph_ignores_positions(vocab, toy_schema):
    g = build_schema_graph(toy_schema)
    tables = EmbeddingTable(len(vocab), 4, np.random.default_rng(0), 16)
    before = init_graph_embeddings(g, tables, vocab).data.copy()
    tables.position.data += 1.0
    np.testing.assert_array_equal(init_graph_embeddings(g, tables, vocab).data, before)


def test_load_embedding_file(vocab, tmp_path):
    tables = EmbeddingTable(len(vocab), 2, np.random.default_rng(0), 4)
    path = tmp_path / "emb.txt"
    path.write_text("hotel 1.5 -2\nzzz 0 0\n", encoding="utf-8")
    assert load_embedding_file(path, vocab, tables) == 1
    np.testing.assert_array_equal(tables.token.data[vocab.id("hotel")], [1.5, -2.0])
    path.write_text("hotel 1 2 3\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_embedding_file(path, vocab, tables)


word = st.sampled_from(["north", "cheap", "the", "cow", "pub", "09:30", "two", "kings", "college"])


@st.composite
def states(draw, schema):
    pairs = draw(st.lists(st.sampled_from(schema.domain_slots), max_size=5, unique=True))
    return {p: tuple(draw(st.lists(word, min_size=1, max_size=3))) for p in pairs}


@settings(max_examples=80, deadline=None)
@given(data=st.data())
def test_state_round_trip_and_length(data, toy_schema):
    state = data.draw(states(toy_schema))
    vocab = Vocabulary.build([])
    seq = serialize_state(state, vocab)
    expect_len = 1 + sum(len(tokenize(d)) + len(tokenize(s)) + len(v) + 2 for (d, s), v in state.items())
    assert len(seq) == expect_len
    assert parse_state_tokens(seq.tokens, toy_schema.domains) == state
    for lo, hi in seq.triplet_spans:
        assert seq.position_ids[lo:hi].tolist() == list(range(hi - lo))
