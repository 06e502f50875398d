"""Tokenization, vocabulary and the three model inputs.

* utterance: ``[CLS] A_t ; U_t [SEP]``
* previous state: ``[CLS]`` followed by ``domain - slot - value`` triplets,
  positions restarting at 0 for each triplet
* schema graph: one row per node, the mean of its name-token embeddings plus
  a node-type segment embedding (no positions)
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import Module, Parameter, Tensor, embedding, matmul, uniform_init
from .schema_graph import NODE_DOMAIN, NODE_DOMAIN_SLOT, NODE_SLOT, SchemaGraph, state_adjacency

log = logging.getLogger(__name__)

PAD, UNK, CLS, SEP, EOS, SEMI, DASH = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[EOS]", ";", "-"
SPECIALS = (PAD, UNK, CLS, SEP, EOS, SEMI, DASH)
DONTCARE = ("dont", "care")

SEGMENTS = ("utt_cls", "utt_body", "state_cls", "state_body", "node_domain", "node_slot", "node_domain_slot")
SEG = {name: i for i, name in enumerate(SEGMENTS)}
NODE_SEGMENT = {NODE_DOMAIN: SEG["node_domain"], NODE_SLOT: SEG["node_slot"], NODE_DOMAIN_SLOT: SEG["node_domain_slot"]}

MAX_UTTERANCE_LEN = 128
MAX_STATE_LEN = 192

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class LengthError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, treat underscores as spaces, split off punctuation."""
    return _TOKEN_RE.findall(text.lower().replace("_", " "))


def value_tokens(text: str) -> tuple[str, ...]:
    """Tokens of a slot value. Literal dashes become spaces (``-`` is reserved)."""
    return tuple(tokenize(text.replace("-", " ")))


class Vocabulary:
    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            raise ValueError("vocabulary must start with the special tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.itos = tokens
        self.stoi = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def build(cls, token_lists) -> "Vocabulary":
        seen = set()
        for toks in token_lists:
            seen.update(toks)
        seen.difference_update(SPECIALS)
        return cls(list(SPECIALS) + sorted(seen))

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, self.stoi[UNK])

    def ids(self, tokens) -> np.ndarray:
        unk = self.stoi[UNK]
        return np.array([self.stoi.get(t, unk) for t in tokens], dtype=np.int64)

    def tokens(self, ids) -> list[str]:
        return [self.itos[i] for i in ids]

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())

    pad_id = property(lambda self: self.stoi[PAD])
    unk_id = property(lambda self: self.stoi[UNK])
    cls_id = property(lambda self: self.stoi[CLS])
    sep_id = property(lambda self: self.stoi[SEP])
    eos_id = property(lambda self: self.stoi[EOS])
    dash_id = property(lambda self: self.stoi[DASH])


@dataclass
class TokenSequence:
    tokens: list[str]
    token_ids: np.ndarray
    segment_ids: np.ndarray
    position_ids: np.ndarray
    triplet_spans: list[tuple[int, int]] = field(default_factory=list)
    adjacency: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.tokens)


def serialize_utterance(system: str, user: str, vocab: Vocabulary, max_len: int = MAX_UTTERANCE_LEN) -> TokenSequence:
    body = tokenize(system) + [SEMI] + tokenize(user)
    if len(body) + 2 > max_len:
        log.warning("utterance of %d tokens truncated to %d", len(body) + 2, max_len)
        body = body[len(body) - (max_len - 2) :]
    tokens = [CLS] + body + [SEP]
    n = len(tokens)
    segments = np.full(n, SEG["utt_body"], dtype=np.int64)
    segments[0] = SEG["utt_cls"]
    return TokenSequence(tokens, vocab.ids(tokens), segments, np.arange(n, dtype=np.int64))


def triplet_tokens(domain: str, slot: str, value) -> list[str]:
    if not value:
        raise ValueError(f"empty value for {domain}-{slot}")
    return tokenize(domain) + [DASH] + tokenize(slot) + [DASH] + list(value)


def serialize_state(state: dict, vocab: Vocabulary, max_len: int = MAX_STATE_LEN) -> TokenSequence:
    """Serialize ``{(domain, slot): value_tokens}`` sorted by (domain, slot)."""
    tokens, segments, positions, spans = [CLS], [SEG["state_cls"]], [0], []
    for (domain, slot) in sorted(state):
        trip = triplet_tokens(domain, slot, state[(domain, slot)])
        if len(tokens) + len(trip) > max_len:
            log.warning("previous state exceeds %d tokens; dropping remaining triplets", max_len)
            break
        start = len(tokens)
        tokens += trip
        segments += [SEG["state_body"]] * len(trip)
        positions += list(range(len(trip)))
        spans.append((start, len(tokens)))
    return TokenSequence(
        tokens,
        vocab.ids(tokens),
        np.array(segments, dtype=np.int64),
        np.array(positions, dtype=np.int64),
        spans,
        state_adjacency(len(tokens), spans),
    )


def parse_state_tokens(tokens, domains) -> dict:
    """Invert ``serialize_state`` from token text alone.

    Each triplet carries exactly two ``-`` separators; the boundary between one
    value and the next domain is found by matching the longest known domain
    name at the end of the run between separators.
    """
    if not tokens or tokens[0] != CLS:
        raise ValueError("state sequence must start with [CLS]")
    dom_toks = sorted((tuple(tokenize(d)), d) for d in domains)
    dom_toks.sort(key=lambda x: -len(x[0]))
    chunks, cur = [], []
    for tok in tokens[1:]:
        if tok == DASH:
            chunks.append(cur)
            cur = []
        else:
            cur.append(tok)
    chunks.append(cur)
    if len(chunks) == 1:
        if chunks[0]:
            raise ValueError("dangling tokens in state sequence")
        return {}
    # chunks: d1 | s1 | v1+d2 | s2 | v2+d3 | ... | vK
    state = {}
    domain = _match_domain(chunks[0], dom_toks, whole=True)
    for k in range(1, len(chunks) - 1, 2):
        slot = "_".join(chunks[k])
        rest = chunks[k + 1]
        if k + 2 < len(chunks):
            nxt = _match_domain(rest, dom_toks, whole=False)
            value = tuple(rest[: len(rest) - len(tokenize(nxt))])
        else:
            nxt, value = None, tuple(rest)
        state[(domain, slot)] = value
        domain = nxt
    return state


def _match_domain(run, dom_toks, whole):
    for toks, name in dom_toks:
        if (whole and tuple(run) == toks) or (not whole and len(run) > len(toks) and tuple(run[-len(toks):]) == toks):
            return name
    raise ValueError(f"cannot find a domain name in {run!r}")


class EmbeddingTable(Module):
    """Token, segment and position tables. The token table is shared with the decoder."""

    def __init__(self, vocab_size: int, d_model: int, rng: np.random.Generator, max_positions: int = MAX_STATE_LEN,
                 dtype=np.float64, scale: float = 0.1):
        self.token = Parameter(uniform_init(rng, (vocab_size, d_model), scale, dtype))
        self.segment = Parameter(uniform_init(rng, (len(SEGMENTS), d_model), scale, dtype))
        self.position = Parameter(uniform_init(rng, (max_positions, d_model), scale, dtype))

    @property
    def d_model(self) -> int:
        return self.token.shape[1]


def embed_sequence(seq: TokenSequence, tables: EmbeddingTable) -> Tensor:
    if len(seq.position_ids) and seq.position_ids.max() >= tables.position.shape[0]:
        raise LengthError(f"position {seq.position_ids.max()} beyond table size {tables.position.shape[0]}")
    return (
        embedding(tables.token, seq.token_ids)
        + embedding(tables.segment, seq.segment_ids)
        + embedding(tables.position, seq.position_ids)
    )


@dataclass(frozen=True)
class GraphInputs:
    """Constant per (graph, vocabulary): token-averaging matrix and node segments."""

    averaging: np.ndarray
    segment_ids: np.ndarray


def graph_inputs(g: SchemaGraph, vocab: Vocabulary, dtype=np.float64) -> GraphInputs:
    names = g.node_names()
    avg = np.zeros((len(names), len(vocab)), dtype=dtype)
    for row, name in enumerate(names):
        ids = vocab.ids(tokenize(name))
        np.add.at(avg[row], ids, 1.0 / len(ids))
    segs = np.array([NODE_SEGMENT[t] for t in g.node_types()], dtype=np.int64)
    return GraphInputs(avg, segs)


def init_graph_embeddings(g: SchemaGraph, tables: EmbeddingTable, vocab: Vocabulary | None = None,
                          inputs: GraphInputs | None = None) -> Tensor:
    if inputs is None:
        inputs = graph_inputs(g, vocab, tables.token.dtype)
    return matmul(Tensor(inputs.averaging.astype(tables.token.dtype, copy=False)), tables.token) + embedding(
        tables.segment, inputs.segment_ids
    )


def load_embedding_file(path, vocab: Vocabulary, tables: EmbeddingTable) -> int:
    """Overwrite token rows from a ``token v1 ... v_d`` text file. Returns rows replaced."""
    d = tables.d_model
    hit = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            if len(parts) - 1 != d:
                raise ValueError(f"{path}:{lineno}: expected {d} values, got {len(parts) - 1}")
            if parts[0] in vocab:
                tables.token.data[vocab.id(parts[0])] = np.asarray(parts[1:], dtype=tables.token.dtype)
                hit += 1
    return hit
