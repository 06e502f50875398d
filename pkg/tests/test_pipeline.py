import json

import numpy as np
import pytest

from csfn_dst.data_io import Corpus, Dialogue, Turn
from csfn_dst.encoding import DONTCARE, EOS
from csfn_dst.fusion import ModelConfig
from csfn_dst.numerics import TrainingError, count_parameters
from csfn_dst.pipeline import (
    CSFNDST,
    TrainConfig,
    build_vocab,
    evaluate,
    gate_f1,
    graph_mask,
    infer_dialogue,
    joint_goal_accuracy,
    make_targets,
    train,
)
from csfn_dst.pipeline.metrics import domain_accuracy, slot_f1, turn_accuracy
from csfn_dst.pipeline.model import value_token_lists
from csfn_dst.pipeline.train import build_model, turn_examples
from csfn_dst.prediction import DONTCARE_GATE, NONE, PTR, assemble_state
from csfn_dst.schema_graph import adjacency_matrix, build_schema_graph

SMALL = dict(d_model=16, n_heads=2, n_layers=1, dropout=0.0)


@pytest.fixture(scope="module")
def small_corpus(toy_corpus):
    return Corpus(toy_corpus.train[:40], toy_corpus.valid[:5], toy_corpus.test[:5], toy_corpus.schema)


def _small_model(corpus, schema, seed=0, **kw):
    return CSFNDST(ModelConfig(**{**SMALL, **kw}), build_vocab(corpus.train, schema), schema, seed=seed)


# -- metrics --------------------------------------------------------------------
def test_joint_accuracy_examples():
    empty = [{}] * 3
    assert joint_goal_accuracy(empty, empty) == 1.0
    gold = [{("hotel", "area"): ("north",)}] * 4
    pred = gold[:3] + [{("hotel", "area"): ("south",)}]
    assert joint_goal_accuracy(pred, gold) == 0.75
    with pytest.raises(ValueError):
        joint_goal_accuracy(pred, gold[:2])


def test_joint_accuracy_ignores_order_and_case():
    a = {("hotel", "area"): ("north",), ("taxi", "leave_at"): ("09:30",)}
    b = {("taxi", "leave_at"): ("09:30",), ("hotel", "area"): ("North",)}
    assert joint_goal_accuracy([a], [b]) == 1.0


def test_gate_f1_examples():
    gold = np.array([[NONE, DONTCARE_GATE, PTR], [PTR, NONE, DONTCARE_GATE]])
    perfect = gate_f1(gold, gold)
    assert all(v["f1"] == 1.0 for v in perfect.values())
    pred = np.where(gold == DONTCARE_GATE, NONE, gold)
    out = gate_f1(pred, gold)
    assert out["DONTCARE"]["recall"] == 0.0 and out["DONTCARE"]["f1"] == 0.0
    assert out["NONE"]["precision"] == 0.5 and out["PTR"]["f1"] == 1.0
    assert out["DONTCARE"]["support"] == 2


def test_breakdowns():
    golds = [{("hotel", "area"): ("north",)}, {("hotel", "area"): ("north",)}, {}]
    preds = [golds[0], {}, {}]
    assert domain_accuracy(preds, golds, ["a", "a", "b"], ["hotel", "taxi"]) == {
        "hotel": {"accuracy": 0.5, "turns": 2}}
    turns = turn_accuracy(preds, golds, [1, 2, 1])
    assert turns["1"]["accuracy"] == 1.0 and turns["2"]["accuracy"] == 0.0
    assert sum(v["proportion"] for v in turns.values()) == pytest.approx(1.0, abs=1e-9)
    f1 = slot_f1(preds, golds, [("hotel", "area"), ("taxi", "area")])
    assert f1["hotel-area"] == pytest.approx(2 / 3) and f1["taxi-area"] == 1.0


def test_single_domain_accuracy_equals_joint():
    golds = [{("hotel", "area"): ("north",)}, {("hotel", "stars"): ("two",)}, {("hotel", "area"): ("east",)}]
    preds = [golds[0], {}, golds[2]]
    dom = domain_accuracy(preds, golds, ["a", "a", "b"], ["hotel"])
    assert dom["hotel"]["accuracy"] == joint_goal_accuracy(preds, golds)


# -- targets ---------------------------------------------------------------------
def test_make_targets_examples(mw_schema):
    g = build_schema_graph(mw_schema)
    vocab = build_vocab([Dialogue("d", [Turn("", "a train on saturday", [("train", "day", "saturday")])])], mw_schema)
    t = make_targets({}, {}, g, vocab)
    assert np.all(t.gates == NONE) and t.ptr_slots == [] and t.values == []
    t = make_targets({}, {("hotel", "parking"): DONTCARE}, g, vocab)
    assert t.gates[g.domain_slots.index(("hotel", "parking"))] == DONTCARE_GATE and not t.ptr_slots
    t = make_targets({}, {("train", "day"): ("saturday",)}, g, vocab)
    j = g.domain_slots.index(("train", "day"))
    assert t.ptr_slots == [j] and vocab.tokens(t.values[0]) == ["saturday", EOS]


def test_targets_round_trip_toy(toy_corpus, toy_schema):
    g = build_schema_graph(toy_schema)
    vocab = build_vocab(toy_corpus.train, toy_schema)
    for dial in toy_corpus.all_dialogues():
        for turn in dial.turns:
            state = turn.state_dict()
            t = make_targets({}, state, g, vocab)
            assert assemble_state(t.gates, value_token_lists(t, vocab), g) == state


# -- model -----------------------------------------------------------------------
def _hand_count(d, V, L):
    emb = V * d + 7 * d + 192 * d
    layer = 9 * 4 * d * d + 3 * (8 * d * d + 5 * d) + 6 * 2 * d
    gate = d * d + d + 3 * d + 3
    decoder = (6 * d * d + 6 * d) + (2 * d * d + 2 * d) + 2 * d * d + 3 * d
    return emb + L * layer + gate + decoder


def test_parameter_count(small_corpus, toy_schema):
    model = _small_model(small_corpus, toy_schema, n_layers=2)
    assert count_parameters(model) == _hand_count(16, len(model.vocab), 2)
    assert model.decoder.embedding is model.tables.token


def test_graph_mask_modes(toy_schema):
    g = build_schema_graph(toy_schema)
    np.testing.assert_array_equal(graph_mask(g, "schema"), adjacency_matrix(g))
    assert graph_mask(g, "full_ones").all()
    np.testing.assert_array_equal(graph_mask(g, "I"), np.eye(g.n_nodes))
    with pytest.raises(ValueError):
        graph_mask(g, "dense")


def test_checkpoint_round_trip(small_corpus, toy_schema, tmp_path):
    model = _small_model(small_corpus, toy_schema, seed=3)
    model.save(tmp_path / "m.ckpt")
    back = CSFNDST.load(tmp_path / "m.ckpt")
    for a, b in zip(model.parameters(), back.parameters()):
        assert a.name == b.name and a.data.dtype == b.data.dtype
        np.testing.assert_array_equal(a.data, b.data)
    back.save(tmp_path / "n.ckpt")
    assert (tmp_path / "m.ckpt").read_bytes() == (tmp_path / "n.ckpt").read_bytes()


# -- inference -------------------------------------------------------------------
def test_zero_turn_dialogue(small_corpus, toy_schema):
    model = _small_model(small_corpus, toy_schema)
    assert infer_dialogue(Dialogue("empty", []), model) == ([], [], [])
    with pytest.raises(ValueError):
        infer_dialogue(Dialogue("empty", []), model, "beam")


def test_oracles_with_all_none_gold(small_corpus, toy_schema):
    model = _small_model(small_corpus, toy_schema)
    # forbid DONTCARE so every surviving slot must come from a gold value
    model.gate.b2.data[DONTCARE_GATE] = -1e4
    dial = Dialogue("quiet", [Turn("", "hello there", []), Turn("anything else ?", "no thanks", [])])
    for mode in ("gate", "value"):
        states, _, _ = infer_dialogue(dial, model, mode)
        assert states == [{}, {}]


def test_value_oracle_uses_gold_values(small_corpus, toy_schema):
    model = _small_model(small_corpus, toy_schema)
    model.gate.b2.data[:] = [-1e4, -1e4, 0.0]  # every slot PTR
    dial = small_corpus.test[0]
    states, _, traces = infer_dialogue(dial, model, "value")
    assert states == [t.state_dict() for t in dial.turns]
    assert traces[0]["dialogue_id"] == dial.id and traces[0]["turn"] == 0


def test_evaluate_report_fields(small_corpus, toy_schema):
    model = _small_model(small_corpus, toy_schema)
    report, traces = evaluate(small_corpus.test, model, "prev_state")
    assert report.n_turns == len(traces) == sum(len(d.turns) for d in small_corpus.test)
    assert report.oracle_mode == "prev_state" and report.ablation == "schema"
    assert 0.0 <= report.joint_accuracy <= 1.0
    assert sum(v["proportion"] for v in report.turn_accuracy.values()) == pytest.approx(1.0, abs=1e-9)
    assert set(json.loads(report.to_json())) >= {"joint_accuracy", "gate_f1", "slot_f1", "domain_accuracy"}
    threaded, _ = evaluate(small_corpus.test, model, "prev_state", workers=3)
    assert threaded.to_json() == report.to_json()


# -- training --------------------------------------------------------------------
def test_zero_lr_leaves_parameters(small_corpus, toy_schema):
    one = Corpus(small_corpus.train[:1], [], [], small_corpus.schema)
    cfg = TrainConfig(epochs=1, lr=0.0, seed=2)
    model = build_model(one, toy_schema, ModelConfig(**SMALL), cfg)
    before = model.snapshot()
    train(one, toy_schema, ModelConfig(**SMALL), cfg, model=model)
    for name, value in model.snapshot().items():
        np.testing.assert_array_equal(value, before[name])


def _mean_loss(model, examples):
    total = 0.0
    for enc, targets in examples:
        lg, lv = model.losses(enc, targets)
        total += float(lg.data) + float(lv.data)
    return total / len(examples)


def test_one_epoch_reduces_loss(small_corpus, toy_schema, tmp_path):
    cfg = TrainConfig(epochs=1, batch_size=8, seed=1)
    model = build_model(small_corpus, toy_schema, ModelConfig(**SMALL), cfg)
    examples = turn_examples(small_corpus.train, model)
    start = _mean_loss(model, examples)
    result = train(small_corpus, toy_schema, ModelConfig(**SMALL), cfg, log_path=tmp_path / "log.jsonl", model=model)
    assert _mean_loss(model, examples) < start
    lines = [json.loads(x) for x in (tmp_path / "log.jsonl").read_text().splitlines()]
    assert len(lines) == -(-len(examples) // 8)
    assert set(lines[0]) == {"epoch", "step", "L_gate", "L_value", "L_total", "lr"}
    assert result.best_epoch == 1 and "valid_joint_accuracy" in result.history[0]


def test_non_finite_loss_aborts(small_corpus, toy_schema):
    cfg = TrainConfig(epochs=1, seed=1)
    model = build_model(small_corpus, toy_schema, ModelConfig(**SMALL), cfg)
    model.gate.w2.data[0, 0] = np.nan
    with pytest.raises(TrainingError, match="gate.w2"):
        train(small_corpus, toy_schema, ModelConfig(**SMALL), cfg, model=model)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    assert TrainConfig(ablation="full_ones").ablation == "ones"
