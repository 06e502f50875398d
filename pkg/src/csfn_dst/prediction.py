"""Slot gates, the copy-augmented GRU value decoder and state assembly."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .encoding import DONTCARE, Vocabulary
from .fusion import FFNParams
from .numerics import (
    Module,
    Parameter,
    Tensor,
    concat,
    embedding,
    nll,
    reshape,
    sigmoid,
    softmax,
    tanh,
    transpose,
    uniform_init,
)
from .schema_graph import SchemaGraph

log = logging.getLogger(__name__)

NONE, DONTCARE_GATE, PTR = 0, 1, 2
GATE_NAMES = ("NONE", "DONTCARE", "PTR")


def argmax_high(p: np.ndarray) -> np.ndarray:
    """Row-wise argmax where ties go to the highest index."""
    k = p.shape[-1]
    return (k - 1 - np.argmax(p[..., ::-1], axis=-1)).astype(np.int64)


@dataclass
class GatePrediction:
    probs: np.ndarray  # J x 3

    @property
    def classes(self) -> np.ndarray:
        return argmax_high(self.probs)


class GateClassifier(FFNParams):
    def __init__(self, d: int, rng, dtype=np.float64, scale: float = 0.1):
        super().__init__(d, d, 3, rng, dtype, scale)


def slot_gate(HG: Tensor, gate: GateClassifier, g: SchemaGraph) -> Tensor:
    """Gate distribution (J x 3) from the final domain-slot node states."""
    rows = HG[g.M + g.N :]
    return softmax(gate(rows))


def gate_loss(probs: Tensor, labels) -> Tensor:
    """Summed cross-entropy over domain-slot pairs. ``labels`` are class ids or one-hots."""
    labels = np.asarray(labels)
    if labels.ndim == 2:
        labels = labels.argmax(axis=-1)
    return nll(probs, labels)


def select_ptr_slots(probs) -> list[int]:
    p = probs.probs if isinstance(probs, GatePrediction) else np.asarray(probs)
    return [int(j) for j in np.flatnonzero(argmax_high(p) == PTR)]


class AttParams(Module):
    def __init__(self, d: int, rng, dtype=np.float64, scale: float = 0.1):
        self.w1 = Parameter(uniform_init(rng, (d, d), scale, dtype))
        self.w2 = Parameter(uniform_init(rng, (d, d), scale, dtype))
        self.b = Parameter(np.zeros(d, dtype=dtype))
        self.v = Parameter(uniform_init(rng, (1, d), scale, dtype))


def att(x: Tensor, H: Tensor, p: AttParams) -> Tensor:
    """Additive attention of each row of x (R x d) over rows of H (S x d) -> R x S."""
    R, S, d = x.shape[0], H.shape[0], H.shape[1]
    xw = reshape(x @ p.w1, (R, 1, d))
    hw = reshape(H @ p.w2, (1, S, d))
    u = reshape(tanh(xw + hw + p.b) @ transpose(p.v), (R, S))
    return softmax(u)


class GRUParams(Module):
    """Gates stacked as [reset | update | candidate] along the output axis."""

    def __init__(self, d: int, rng, dtype=np.float64, scale: float = 0.1):
        self.w_x = Parameter(uniform_init(rng, (d, 3 * d), scale, dtype))
        self.w_h = Parameter(uniform_init(rng, (d, 3 * d), scale, dtype))
        self.b_x = Parameter(np.zeros(3 * d, dtype=dtype))
        self.b_h = Parameter(np.zeros(3 * d, dtype=dtype))


def gru_cell(h: Tensor, x: Tensor, p: GRUParams) -> Tensor:
    d = h.shape[-1]
    gx = x @ p.w_x + p.b_x
    gh = h @ p.w_h + p.b_h
    r = sigmoid(gx[:, :d] + gh[:, :d])
    z = sigmoid(gx[:, d : 2 * d] + gh[:, d : 2 * d])
    n = tanh(gx[:, 2 * d :] + r * gh[:, 2 * d :])
    return n + z * (h - n)


class DecoderParams(Module):
    def __init__(self, d: int, token_table: Parameter, rng, dtype=np.float64, scale: float = 0.1):
        self.gru = GRUParams(d, rng, dtype, scale)
        self.att = AttParams(d, rng, dtype, scale)
        self.w_proj = Parameter(uniform_init(rng, (2 * d, d), scale, dtype))
        self.w_gen = Parameter(uniform_init(rng, (3 * d, 1), scale, dtype))
        self.embedding = token_table


@dataclass
class CopyContext:
    """Encoder memory for one turn: final X and B states plus their token ids."""

    states: Tensor          # (|X| + |B|) x d
    copy_matrix: np.ndarray  # (|X| + |B|) x V, one-hot rows


def copy_context(HX: Tensor, HB: Tensor, x_ids, b_ids, vocab_size: int) -> CopyContext:
    ids = np.concatenate([np.asarray(x_ids), np.asarray(b_ids)])
    onehot = np.zeros((len(ids), vocab_size), dtype=HX.dtype)
    onehot[np.arange(len(ids)), ids] = 1.0
    return CopyContext(concat([HX, HB], axis=0), onehot)


def decoder_step(g_prev: Tensor, e_k: Tensor, ctx: CopyContext, p: DecoderParams):
    """One GRU step; returns ``(g_k, P_value, p_gen, P_ctx)``."""
    g = gru_cell(g_prev, e_k, p.gru)
    p_ctx = att(g, ctx.states, p.att)
    c = p_ctx @ ctx.states
    p_vocab = softmax(concat([g, c], axis=1) @ p.w_proj @ transpose(p.embedding))
    p_gen = sigmoid(concat([g, e_k, c], axis=1) @ p.w_gen)
    p_value = p_gen * p_vocab + (1.0 - p_gen) * (p_ctx @ Tensor(ctx.copy_matrix))
    return g, p_value, p_gen, p_ctx


def decoder_init(HG: Tensor, HX: Tensor, HB: Tensor, g: SchemaGraph, slots) -> tuple[Tensor, Tensor]:
    """Initial hidden state (CLS of X plus CLS of B) and first inputs (domain-slot node states)."""
    g0 = HX[0:1] + HB[0:1]
    e0 = HG[np.asarray([g.M + g.N + j for j in slots], dtype=np.int64)]
    return g0, e0


def value_loss(HG, HX, HB, ctx: CopyContext, g: SchemaGraph, p: DecoderParams, slots, targets) -> Tensor:
    """Teacher-forced summed cross-entropy for the given slots.

    ``targets`` holds one id sequence per slot, each ending with [EOS].
    """
    if not slots:
        return Tensor(np.zeros((), dtype=HG.dtype))
    R, T = len(slots), max(len(t) for t in targets)
    gold = np.zeros((R, T), dtype=np.int64)
    live = np.zeros((R, T), dtype=HG.dtype)
    for r, seq in enumerate(targets):
        gold[r, : len(seq)] = seq
        live[r, : len(seq)] = 1.0
    h, e = decoder_init(HG, HX, HB, g, slots)
    total = None
    for k in range(T):
        h, p_value, _, _ = decoder_step(h, e, ctx, p)
        step = nll(p_value, gold[:, k], live[:, k])
        total = step if total is None else total + step
        e = embedding(p.embedding, gold[:, k])
    return total


def step_distribution_loss(step_distributions, gold_ids) -> Tensor:
    """Summed cross-entropy of a list of 1 x V (or V) step distributions against gold ids."""
    total = None
    for dist, gid in zip(step_distributions, gold_ids):
        dist = dist if dist.ndim == 2 else reshape(dist, (1, dist.shape[0]))
        term = nll(dist, [gid])
        total = term if total is None else total + term
    return total


def blocked_ids(vocab: Vocabulary) -> np.ndarray:
    """Token ids the greedy decoder may never emit."""
    return np.array([vocab.pad_id, vocab.cls_id, vocab.sep_id, vocab.dash_id], dtype=np.int64)


def decode_values(HG, HX, HB, ctx: CopyContext, g: SchemaGraph, p: DecoderParams, slots, vocab: Vocabulary,
                  max_len: int) -> list[list[str]]:
    """Greedy decoding for every slot in ``slots`` at once; [EOS] is dropped."""
    if not slots:
        return []
    blocked = blocked_ids(vocab)
    eos = vocab.eos_id
    h, e = decoder_init(HG, HX, HB, g, slots)
    out = [[] for _ in slots]
    done = np.zeros(len(slots), dtype=bool)
    for _ in range(max_len):
        h, p_value, _, _ = decoder_step(h, e, ctx, p)
        scores = p_value.data.copy()
        scores[:, blocked] = -np.inf
        nxt = np.argmax(scores, axis=1)
        for r, tok in enumerate(nxt):
            if done[r]:
                continue
            if tok == eos:
                done[r] = True
            else:
                out[r].append(vocab.itos[tok])
        if done.all():
            break
        e = embedding(p.embedding, nxt)
    for r, toks in enumerate(out):
        if not toks:
            log.warning("empty value decoded for %s; slot omitted", g.domain_slots[slots[r]])
    return out


def decode_value(j: int, HG, HX, HB, ctx, g, p, vocab, max_len: int) -> list[str]:
    return decode_values(HG, HX, HB, ctx, g, p, [j], vocab, max_len)[0]


def assemble_state(gates, decoded: dict, g: SchemaGraph) -> dict:
    """Build ``{(domain, slot): value_tokens}`` from gate classes and decoded values.

    ``decoded`` maps the zero-based domain-slot ordinal to a token list.
    """
    state = {}
    for j, cls in enumerate(np.asarray(gates)):
        key = g.domain_slots[j]
        if cls == DONTCARE_GATE:
            state[key] = DONTCARE
        elif cls == PTR:
            value = tuple(decoded.get(j, ()))
            if value:
                state[key] = value
    return state
