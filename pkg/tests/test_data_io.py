import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csfn_dst.data_io import (
    DONTCARE_TEXT,
    Corpus,
    CorpusError,
    Dialogue,
    Turn,
    generate_toy_corpus,
    load_corpus,
    load_multiwoz,
    normalize_slot_name,
    normalize_value,
    save_corpus,
    state_from_triplets,
    state_to_triplets,
)
from csfn_dst.encoding import DONTCARE, tokenize

SAMPLE = Path(__file__).parent / "data" / "multiwoz_sample.json"


def test_toy_split_sizes(toy_corpus):
    assert (len(toy_corpus.train), len(toy_corpus.valid), len(toy_corpus.test)) == (160, 20, 20)
    ids = [d.id for d in toy_corpus.all_dialogues()]
    assert len(set(ids)) == 200


def test_toy_is_deterministic(toy_schema, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_corpus(generate_toy_corpus(toy_schema, 40, 3), a)
    save_corpus(generate_toy_corpus(toy_schema, 40, 3), b)
    assert a.read_bytes() == b.read_bytes()
    save_corpus(generate_toy_corpus(toy_schema, 40, 4), b)
    assert a.read_bytes() != b.read_bytes()


def test_toy_values_are_copyable(toy_corpus):
    for dial in toy_corpus.all_dialogues():
        prev = {}
        for turn in dial.turns:
            state = turn.state_dict()
            available = set(tokenize(turn.system)) | set(tokenize(turn.user))
            available |= {tok for (d, s), v in prev.items() for tok in (*tokenize(d), *tokenize(s), *v)}
            for key, value in state.items():
                if value != DONTCARE and prev.get(key) != value:
                    assert set(value) <= available, (dial.id, key, value)
            prev = state


def test_toy_states_only_grow(toy_corpus, toy_schema):
    known = set(toy_schema.domain_slots)
    for dial in toy_corpus.all_dialogues():
        assert 2 <= len(dial.turns) <= 6
        prev = {}
        for turn in dial.turns:
            state = turn.state_dict()
            assert set(state) <= known
            assert len(state) > len(prev)
            assert all(state[k] == v for k, v in prev.items())
            prev = state


def test_toy_gate_classes_all_present(toy_corpus, toy_schema):
    counts = {"none": 0, "dontcare": 0, "ptr": 0}
    for dial in toy_corpus.all_dialogues():
        for turn in dial.turns:
            state = turn.state_dict()
            for key in toy_schema.domain_slots:
                v = state.get(key)
                counts["none" if v is None else "dontcare" if v == DONTCARE else "ptr"] += 1
    total = sum(counts.values())
    assert all(c / total >= 0.01 for c in counts.values()), counts


def test_triplet_conversion():
    state = state_from_triplets([("hotel", "area", "north"), ("taxi", "leave_at", DONTCARE_TEXT), ("a", "b", "")])
    assert state == {("hotel", "area"): ("north",), ("taxi", "leave_at"): DONTCARE}
    assert state_from_triplets(state_to_triplets(state)) == state


text = st.text(st.characters(blacklist_categories=("Cs",)), max_size=12)


@settings(max_examples=30, deadline=None)
@given(user=text, system=text, value=st.sampled_from(["north", "café", "東京", DONTCARE_TEXT]))
def test_corpus_json_round_trip(tmp_path_factory, user, system, value):
    path = tmp_path_factory.mktemp("c") / "corpus.json"
    dial = Dialogue("d1", [Turn(system, user, [("hotel", "area", value)])])
    corpus = Corpus(train=[dial], test=[Dialogue("d2", [Turn("", "hi", [])])])
    save_corpus(corpus, path)
    back = load_corpus(path)
    assert back.train == corpus.train and back.test == corpus.test and back.valid == []


def test_corpus_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(CorpusError):
        load_corpus(bad)
    bad.write_text(json.dumps({"version": 99, "dialogues": []}), encoding="utf-8")
    with pytest.raises(CorpusError):
        load_corpus(bad)
    dup = {"dialogues": [{"id": "x", "turns": []}, {"id": "x", "turns": []}]}
    bad.write_text(json.dumps(dup), encoding="utf-8")
    with pytest.raises(CorpusError):
        load_corpus(bad)
    with pytest.raises(CorpusError):
        Corpus().split("dev")


def test_default_split_is_80_10_10(tmp_path):
    raw = {"dialogues": [{"id": str(i), "turns": [{"user": "hi"}]} for i in range(10)]}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    c = load_corpus(path)
    assert [len(c.train), len(c.valid), len(c.test)] == [8, 1, 1]


@pytest.mark.parametrize("raw,expect", [
    ("dontcare", DONTCARE_TEXT), ("do n't care", DONTCARE_TEXT), ("Don't Care", DONTCARE_TEXT),
    ("none", None), ("", None), ("Modern  European", "modern european"), ("cambridge-station", "cambridge station"),
])
def test_normalize_value(raw, expect):
    assert normalize_value(raw) == expect


def test_normalize_slot_name():
    assert normalize_slot_name("pricerange") == "price_range"
    assert normalize_slot_name("book day") == "book_day"
    assert normalize_slot_name("ArriveBy") == "arrive_by"


def test_multiwoz_sample(mw_schema):
    corpus, report = load_multiwoz(SAMPLE, mw_schema)
    assert len(corpus.test) == 50 and not corpus.train
    assert report.dialogues_excluded == 3
    assert report.dropped["excluded domain police"] == 3
    assert report.dropped["unknown hotel-wifi"] == 1
    known = set(mw_schema.domain_slots)
    values = set()
    for dial in corpus.test:
        for turn in dial.turns:
            for d, s, v in turn.state:
                assert (d, s) in known
                values.add(v)
    assert DONTCARE_TEXT in values
    assert all(v == v.lower() for v in values)
    assert not values & {"dontcare", "none", "do n't care"}


def test_multiwoz_directory_layout(mw_schema, tmp_path):
    (tmp_path / "dev_dials.json").write_bytes(SAMPLE.read_bytes())
    corpus, _ = load_multiwoz(tmp_path, mw_schema)
    assert len(corpus.valid) == 50 and not corpus.train and not corpus.test
    (tmp_path / "test_dials.json").write_text("[oops", encoding="utf-8")
    with pytest.raises(CorpusError):
        load_multiwoz(tmp_path, mw_schema)
