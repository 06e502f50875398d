"""Joint goal accuracy, gate F1 and the per-domain / per-turn / per-slot breakdowns.

States are ``{(domain, slot): value_tokens}`` dicts; values compare as
lowercased token tuples, so whitespace differences never matter.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..prediction import GATE_NAMES


def _norm(state: dict) -> dict:
    return {k: tuple(t.lower() for t in v) for k, v in state.items()}


def joint_goal_accuracy(preds, golds) -> float:
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predicted turns vs {len(golds)} gold turns")
    if not golds:
        return 0.0
    hits = sum(_norm(p) == _norm(g) for p, g in zip(preds, golds))
    return hits / len(golds)


def _f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    # a class that never occurs and is never predicted counts as perfect
    if tp + fp + fn == 0:
        return 1.0, 1.0, 1.0
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f1


def gate_f1(pred_gates, gold_gates) -> dict:
    """One-vs-rest precision / recall / F1 per gate class over all (turn, slot) decisions."""
    pred = np.asarray(pred_gates).reshape(-1)
    gold = np.asarray(gold_gates).reshape(-1)
    if pred.shape != gold.shape:
        raise ValueError("gate arrays are not aligned")
    out = {}
    for c, name in enumerate(GATE_NAMES):
        tp = int(np.sum((pred == c) & (gold == c)))
        fp = int(np.sum((pred == c) & (gold != c)))
        fn = int(np.sum((pred != c) & (gold == c)))
        prec, rec, f1 = _f1(tp, fp, fn)
        out[name] = {"precision": prec, "recall": rec, "f1": f1, "support": int(np.sum(gold == c))}
    return out


def domain_accuracy(preds, golds, dialogue_ids, domains) -> dict:
    """Joint accuracy restricted to each domain's slots.

    Only turns of dialogues whose gold states mention the domain are counted.
    """
    active = {}
    for did, gold in zip(dialogue_ids, golds):
        active.setdefault(did, set()).update(d for d, _ in gold)
    out = {}
    for dom in domains:
        hits = total = 0
        for did, p, g in zip(dialogue_ids, preds, golds):
            if dom not in active[did]:
                continue
            total += 1
            sub_p = {k: v for k, v in _norm(p).items() if k[0] == dom}
            sub_g = {k: v for k, v in _norm(g).items() if k[0] == dom}
            hits += sub_p == sub_g
        if total:
            out[dom] = {"accuracy": hits / total, "turns": total}
    return out


def turn_accuracy(preds, golds, turn_indices) -> dict:
    """Joint accuracy grouped by 1-based turn index, with each group's share of turns."""
    groups = {}
    for p, g, t in zip(preds, golds, turn_indices):
        groups.setdefault(int(t), []).append(_norm(p) == _norm(g))
    n = len(golds)
    return {
        str(t): {"accuracy": float(np.mean(v)), "proportion": len(v) / n, "turns": len(v)}
        for t, v in sorted(groups.items())
    }


def slot_f1(preds, golds, domain_slots) -> dict:
    """F1 of (slot, value) detection per domain-slot pair."""
    counts = {k: [0, 0, 0] for k in domain_slots}
    for p, g in zip(preds, golds):
        p, g = _norm(p), _norm(g)
        for k in domain_slots:
            pv, gv = p.get(k), g.get(k)
            if pv is not None and pv == gv:
                counts[k][0] += 1
                continue
            if pv is not None:
                counts[k][1] += 1
            if gv is not None:
                counts[k][2] += 1
    return {f"{d}-{s}": _f1(*counts[(d, s)])[2] for d, s in domain_slots}


@dataclass
class EvalReport:
    joint_accuracy: float
    n_turns: int
    oracle_mode: str
    ablation: str
    gate_f1: dict = field(default_factory=dict)
    domain_accuracy: dict = field(default_factory=dict)
    turn_accuracy: dict = field(default_factory=dict)
    slot_f1: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)


def breakdown_reports(preds, golds, dialogue_ids, turn_indices, graph) -> dict:
    return {
        "domain_accuracy": domain_accuracy(preds, golds, dialogue_ids, graph.domains),
        "turn_accuracy": turn_accuracy(preds, golds, turn_indices),
        "slot_f1": slot_f1(preds, golds, graph.domain_slots),
    }
