from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..encoding import (
    DONTCARE,
    EOS,
    MAX_STATE_LEN,
    MAX_UTTERANCE_LEN,
    EmbeddingTable,
    TokenSequence,
    Vocabulary,
    embed_sequence,
    graph_inputs,
    init_graph_embeddings,
    serialize_state,
    serialize_utterance,
    tokenize,
)
from ..fusion import CsfnLayer, ModelConfig, csfn_forward, make_dropout
from ..numerics import Module, Tensor, load_checkpoint, no_grad, save_checkpoint
from ..prediction import (
    DONTCARE_GATE,
    NONE,
    PTR,
    DecoderParams,
    GateClassifier,
    argmax_high,
    assemble_state,
    copy_context,
    decode_values,
    gate_loss,
    slot_gate,
    value_loss,
)
from ..schema_graph import SchemaDef, SchemaGraph, adjacency_matrix, build_schema_graph

EMBED_SCALE = 0.1
ABLATIONS = ("schema", "ones", "identity")
_ABLATION_ALIASES = {"full_ones": "ones", "1": "ones", "I": "identity"}


def canonical_ablation(mode: str) -> str:
    mode = _ABLATION_ALIASES.get(mode, mode)
    if mode not in ABLATIONS:
        raise ValueError(f"unknown ablation mode {mode!r}; expected one of {ABLATIONS}")
    return mode


def graph_mask(g: SchemaGraph, ablation: str) -> np.ndarray:
    """Schema adjacency, or the all-ones / identity replacement used for ablations."""
    ablation = canonical_ablation(ablation)
    if ablation == "ones":
        return np.ones((g.n_nodes, g.n_nodes), dtype=np.int8)
    if ablation == "identity":
        return np.eye(g.n_nodes, dtype=np.int8)
    return adjacency_matrix(g)


@dataclass
class EncodedTurn:
    utterance: TokenSequence
    state: TokenSequence


@dataclass
class Targets:
    gates: np.ndarray   # J class ids
    ptr_slots: list     # zero-based ordinals with gold PTR
    values: list        # per PTR slot, token ids ending with [EOS]


def gate_labels(state: dict, g: SchemaGraph) -> np.ndarray:
    """Gate class per domain-slot pair derived from the full turn state."""
    labels = np.full(g.J, NONE, dtype=np.int64)
    for j, key in enumerate(g.domain_slots):
        value = state.get(key)
        if value:
            labels[j] = DONTCARE_GATE if tuple(value) == DONTCARE else PTR
    return labels


def make_targets(prev_state: dict, state: dict, g: SchemaGraph, vocab: Vocabulary) -> Targets:
    """Gate labels and [EOS]-terminated value ids for one turn.

    ``prev_state`` is accepted for interface symmetry; labels depend only on
    the full target state.
    """
    labels = gate_labels(state, g)
    slots = [int(j) for j in np.flatnonzero(labels == PTR)]
    values = [vocab.ids(list(state[g.domain_slots[j]]) + [EOS]) for j in slots]
    return Targets(labels, slots, values)


def value_token_lists(targets: Targets, vocab: Vocabulary) -> dict:
    """Inverse of the value part of make_targets: ordinal -> token list without [EOS]."""
    return {j: vocab.tokens(ids[:-1]) for j, ids in zip(targets.ptr_slots, targets.values)}


class CSFNDST(Module):
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, schema: SchemaDef, seed: int = 0,
                 dtype=np.float32, ablation: str = "schema"):
        rng = np.random.default_rng(seed)
        d, s = cfg.d_model, cfg.init_scale
        self.tables = EmbeddingTable(len(vocab), d, rng, max(MAX_UTTERANCE_LEN, MAX_STATE_LEN), dtype, EMBED_SCALE)
        self.layers = [CsfnLayer(cfg, rng, dtype) for _ in range(cfg.n_layers)]
        self.gate = GateClassifier(d, rng, dtype, s)
        self.decoder = DecoderParams(d, self.tables.token, rng, dtype, s)
        self.assign_names()
        self.cfg = cfg
        self.vocab = vocab
        self.schema = schema
        self.graph = build_schema_graph(schema)
        self.dtype = np.dtype(dtype)
        self.seed = seed
        self.training = False
        self.dropout_rng = np.random.default_rng(seed + 1)
        self._graph_inputs = graph_inputs(self.graph, vocab, dtype)
        self.set_ablation(ablation)

    def set_ablation(self, ablation: str) -> None:
        self.ablation = canonical_ablation(ablation)
        self.graph_adjacency = graph_mask(self.graph, self.ablation)

    # -- encoding ------------------------------------------------------------
    def prepare(self, system: str, user: str, prev_state: dict) -> EncodedTurn:
        return EncodedTurn(serialize_utterance(system, user, self.vocab), serialize_state(prev_state, self.vocab))

    def encode(self, turn: EncodedTurn):
        drop = make_dropout(self.cfg.dropout, self.dropout_rng) if self.training else None
        h_g = init_graph_embeddings(self.graph, self.tables, inputs=self._graph_inputs)
        h_x = embed_sequence(turn.utterance, self.tables)
        h_b = embed_sequence(turn.state, self.tables)
        return csfn_forward(h_g, h_x, h_b, self.graph_adjacency, turn.state.adjacency, self.layers,
                            self.cfg.n_heads, drop)

    def copy_context(self, turn: EncodedTurn, h_x, h_b):
        return copy_context(h_x, h_b, turn.utterance.token_ids, turn.state.token_ids, len(self.vocab))

    # -- training objective ---------------------------------------------------
    def losses(self, turn: EncodedTurn, targets: Targets) -> tuple[Tensor, Tensor]:
        h_g, h_x, h_b = self.encode(turn)
        probs = slot_gate(h_g, self.gate, self.graph)
        l_gate = gate_loss(probs, targets.gates)
        ctx = self.copy_context(turn, h_x, h_b)
        l_value = value_loss(h_g, h_x, h_b, ctx, self.graph, self.decoder, targets.ptr_slots, targets.values)
        return l_gate, l_value

    # -- inference ------------------------------------------------------------
    def predict(self, turn: EncodedTurn, gold_gates=None, gold_values: dict | None = None):
        """Predict the turn state.

        ``gold_gates`` replaces the gate classifier's decisions; ``gold_values``
        (ordinal -> tokens) replaces decoding for every slot gated PTR. Returns
        ``(gate_probs, gate_classes, decoded, state)``.
        """
        with no_grad():
            h_g, h_x, h_b = self.encode(turn)
            probs = slot_gate(h_g, self.gate, self.graph).data
            classes = argmax_high(probs) if gold_gates is None else np.asarray(gold_gates)
            slots = [int(j) for j in np.flatnonzero(classes == PTR)]
            if gold_values is not None:
                decoded = {j: list(gold_values.get(j, ())) for j in slots}
            else:
                ctx = self.copy_context(turn, h_x, h_b)
                out = decode_values(h_g, h_x, h_b, ctx, self.graph, self.decoder, slots, self.vocab,
                                    self.cfg.max_decode_len)
                decoded = dict(zip(slots, out))
        return probs, classes, decoded, assemble_state(classes, decoded, self.graph)

    # -- persistence ----------------------------------------------------------
    def header(self) -> dict:
        return {
            "model": asdict(self.cfg),
            "schema": self.schema.to_dict(),
            "vocab": self.vocab.itos,
            "seed": self.seed,
            "dtype": self.dtype.name,
            "ablation": self.ablation,
        }

    def save(self, path, extra: dict | None = None) -> None:
        save_checkpoint(path, self.parameters(), self.header(), extra)

    @classmethod
    def load(cls, path) -> "CSFNDST":
        config, arrays, _ = load_checkpoint(path)
        model = cls(
            ModelConfig(**config["model"]),
            Vocabulary(config["vocab"]),
            SchemaDef.from_dict(config["schema"]),
            seed=config["seed"],
            dtype=np.dtype(config["dtype"]),
            ablation=config["ablation"],
        )
        for p in model.parameters():
            p.data[...] = arrays[p.name]
        return model

    def snapshot(self) -> dict:
        return {p.name: p.data.copy() for p in self.parameters()}

    def restore(self, snap: dict) -> None:
        for p in self.parameters():
            p.data[...] = snap[p.name]


def build_vocab(dialogues, schema: SchemaDef) -> Vocabulary:
    """Vocabulary over training utterances, state values and schema names."""
    lists = [list(DONTCARE)]
    for d in schema.domains:
        lists.append(tokenize(d))
        for s in schema.slots_per_domain[d]:
            lists.append(tokenize(s))
    for dial in dialogues:
        for t in dial.turns:
            lists.append(tokenize(t.system))
            lists.append(tokenize(t.user))
            for _, _, v in t.state:
                lists.append(tokenize(v.replace("-", " ")))
    return Vocabulary.build(lists)
