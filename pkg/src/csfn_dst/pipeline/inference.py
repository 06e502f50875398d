from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..data_io import Dialogue, state_to_triplets
from ..prediction import GATE_NAMES
from .metrics import EvalReport, breakdown_reports, gate_f1, joint_goal_accuracy
from .model import CSFNDST, gate_labels

ORACLE_MODES = ("none", "prev_state", "gate", "value")


def infer_dialogue(dialogue: Dialogue, model: CSFNDST, oracle_mode: str = "none"):
    """Run a dialogue turn by turn, feeding back the predicted state.

    Oracle modes substitute gold information: ``prev_state`` feeds the gold
    previous state, ``gate`` uses gold gate classes, ``value`` uses gold
    values for every slot gated PTR. Returns ``(states, gate_classes, traces)``.
    """
    if oracle_mode not in ORACLE_MODES:
        raise ValueError(f"unknown oracle mode {oracle_mode!r}; expected one of {ORACLE_MODES}")
    g = model.graph
    prev, gold_prev = {}, {}
    states, gates, traces = [], [], []
    for t, turn in enumerate(dialogue.turns):
        gold = turn.state_dict()
        enc = model.prepare(turn.system, turn.user, gold_prev if oracle_mode == "prev_state" else prev)
        gold_gates = gate_labels(gold, g) if oracle_mode == "gate" else None
        gold_values = None
        if oracle_mode == "value":
            gold_values = {j: gold[k] for j, k in enumerate(g.domain_slots) if k in gold}
        _, classes, decoded, state = model.predict(enc, gold_gates, gold_values)
        states.append(state)
        gates.append(classes)
        traces.append({
            "dialogue_id": dialogue.id,
            "turn": t,
            "gates": {f"{d}-{s}": GATE_NAMES[c] for (d, s), c in zip(g.domain_slots, classes)},
            "values": {f"{g.domain_slots[j][0]}-{g.domain_slots[j][1]}": " ".join(v) for j, v in sorted(decoded.items())},
            "state": state_to_triplets(state),
        })
        prev, gold_prev = state, gold
    return states, gates, traces


def evaluate(dialogues, model: CSFNDST, oracle_mode: str = "none", workers: int = 1):
    """Evaluate a list of dialogues. Returns ``(EvalReport, traces)``."""
    model.eval()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda d: infer_dialogue(d, model, oracle_mode), dialogues))
    else:
        results = [infer_dialogue(d, model, oracle_mode) for d in dialogues]
    preds, golds, pgates, ggates, dids, tidx, traces = [], [], [], [], [], [], []
    for dial, (states, gates, tr) in zip(dialogues, results):
        for t, (turn, state, gate) in enumerate(zip(dial.turns, states, gates)):
            gold = turn.state_dict()
            preds.append(state)
            golds.append(gold)
            pgates.append(gate)
            ggates.append(gate_labels(gold, model.graph))
            dids.append(dial.id)
            tidx.append(t + 1)
        traces.extend(tr)
    shape = (-1, model.graph.J)
    report = EvalReport(
        joint_accuracy=joint_goal_accuracy(preds, golds),
        n_turns=len(golds),
        oracle_mode=oracle_mode,
        ablation=model.ablation,
        gate_f1=gate_f1(np.array(pgates).reshape(shape) if pgates else np.zeros((0, model.graph.J)),
                        np.array(ggates).reshape(shape) if ggates else np.zeros((0, model.graph.J))),
        **breakdown_reports(preds, golds, dids, tidx, model.graph),
    )
    return report, traces


def write_traces(traces, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in traces:
            fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")
