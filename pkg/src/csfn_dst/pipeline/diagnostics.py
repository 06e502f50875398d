"""Whole-model finite-difference check on a hand-sized instance."""
from __future__ import annotations

import numpy as np

from ..encoding import SEG, TokenSequence, Vocabulary, serialize_utterance
from ..fusion import ModelConfig
from ..numerics import GradCheckReport, grad_check
from ..schema_graph import SchemaDef, state_adjacency
from ..prediction import DONTCARE_GATE, PTR
from .model import CSFNDST, EncodedTurn, Targets

TOY_CHECK_SCHEMA = {"domains": ["a", "b"], "slots": {"a": ["x"], "b": ["y"]}, "overlap_pairs": []}


def _state_sequence(tokens: list[str], vocab: Vocabulary) -> TokenSequence:
    n = len(tokens)
    segments = np.full(n, SEG["state_body"], dtype=np.int64)
    segments[0] = SEG["state_cls"]
    positions = np.concatenate([[0], np.arange(n - 1)]).astype(np.int64)
    spans = [(1, n)]
    return TokenSequence(tokens, vocab.ids(tokens), segments, positions, spans, state_adjacency(n, spans))


def toy_check_model(seed: int = 0, d_model: int = 8, n_heads: int = 2, n_layers: int = 2):
    """Float64 model plus one encoded turn: 6 graph nodes, 7 utterance and 4 state tokens."""
    schema = SchemaDef.from_dict(TOY_CHECK_SCHEMA)
    vocab = Vocabulary.build([["a", "b", "x", "y", "ok", "to", "v", "w", "now"]])
    cfg = ModelConfig(d_model=d_model, n_heads=n_heads, n_layers=n_layers, dropout=0.0)
    model = CSFNDST(cfg, vocab, schema, seed=seed, dtype=np.float64)
    model.eval()
    turn = EncodedTurn(serialize_utterance("ok", "to v now", vocab),
                       _state_sequence(["[CLS]", "b", "y", "w"], vocab))
    targets = Targets(np.array([PTR, DONTCARE_GATE]), [0], [vocab.ids(["v", "[EOS]"])])
    return model, turn, targets


def model_grad_check(per_param: int = 2, seed: int = 0, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Central-difference check of L_gate + L_value over every parameter tensor."""
    model, turn, targets = toy_check_model(seed)

    def loss():
        l_gate, l_value = model.losses(turn, targets)
        return l_gate + l_value

    return grad_check(loss, model.parameters(), h=h, tol=tol, per_param=per_param,
                      rng=np.random.default_rng(seed))
