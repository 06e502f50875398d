"""Fusion layers over the graph, utterance and previous-state streams.

Each layer updates the graph (G), utterance (X) and previous-state (B) streams.
Per stream: one internal attention over the stream itself plus two external
attentions over the other streams, summed with the residual, layer-normed, then
a residual FFN and a second layer norm. Internal attention is masked by the
schema adjacency for G and by the triplet adjacency for B; X is unmasked.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import Module, Parameter, Tensor, ffn, layer_norm, masked_softmax, reshape, transpose, uniform_init
from .numerics import dropout as _dropout

LN_EPS = 1e-6


@dataclass
class ModelConfig:
    d_model: int = 400
    n_heads: int = 4
    n_layers: int = 6
    d_ff: int | None = None
    max_decode_len: int = 10
    dropout: float = 0.1
    init_scale: float | None = 0.1

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.n_layers < 1:
            raise ValueError("need at least one layer")
        if self.d_ff is None:
            self.d_ff = 4 * self.d_model


class AttentionParams(Module):
    """Per-head projections stored side by side: head h owns columns h*dk:(h+1)*dk."""

    def __init__(self, d: int, rng, dtype=np.float64, scale: float = 0.1):
        self.w_q = Parameter(uniform_init(rng, (d, d), scale, dtype))
        self.w_k = Parameter(uniform_init(rng, (d, d), scale, dtype))
        self.w_v = Parameter(uniform_init(rng, (d, d), scale, dtype))
        self.w_o = Parameter(uniform_init(rng, (d, d), scale, dtype))


class FFNParams(Module):
    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng, dtype=np.float64, scale: float = 0.1):
        self.w1 = Parameter(uniform_init(rng, (d_in, d_hidden), scale, dtype))
        self.b1 = Parameter(np.zeros(d_hidden, dtype=dtype))
        self.w2 = Parameter(uniform_init(rng, (d_hidden, d_out), scale, dtype))
        self.b2 = Parameter(np.zeros(d_out, dtype=dtype))

    def __call__(self, x: Tensor, dropout=None) -> Tensor:
        return ffn(x, self.w1, self.b1, self.w2, self.b2, dropout=dropout)


class LayerNormParams(Module):
    def __init__(self, d: int, dtype=np.float64):
        self.gamma = Parameter(np.ones(d, dtype=dtype))
        self.beta = Parameter(np.zeros(d, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, LN_EPS)


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    n, d = x.shape
    return transpose(reshape(x, (n, n_heads, d // n_heads)), (1, 0, 2))


def graph_multi_head_attention(Y: Tensor, Z: Tensor, A, p: AttentionParams, n_heads: int,
                               return_weights: bool = False):
    """Multi-head attention of rows of Y over rows of Z, restricted to A[i, j] == 1.

    ``A=None`` means fully connected. With ``return_weights`` the per-head
    attention tensor (H x |Y| x |Z|) is returned alongside the output.
    """
    d = Y.shape[-1]
    if Z.shape[-1] != d or p.w_q.shape != (d, d):
        raise ValueError(f"attention shapes: Y {Y.shape}, Z {Z.shape}, W_Q {p.w_q.shape}")
    if A is not None and np.shape(A) != (Y.shape[0], Z.shape[0]):
        raise ValueError(f"mask shape {np.shape(A)} does not match {Y.shape[0]}x{Z.shape[0]}")
    q = _split_heads(Y @ p.w_q, n_heads)
    k = _split_heads(Z @ p.w_k, n_heads)
    v = _split_heads(Z @ p.w_v, n_heads)
    scores = (q @ transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(d / n_heads))
    weights = masked_softmax(scores, None if A is None else np.asarray(A)[None])
    ctx = reshape(transpose(weights @ v, (1, 0, 2)), (Y.shape[0], d))
    out = ctx @ p.w_o
    return (out, weights) if return_weights else out


def multi_head_attention(Y: Tensor, Z: Tensor, p: AttentionParams, n_heads: int, return_weights: bool = False):
    return graph_multi_head_attention(Y, Z, None, p, n_heads, return_weights)


class CsfnLayer(Module):
    def __init__(self, cfg: ModelConfig, rng, dtype=np.float64):
        d, s = cfg.d_model, cfg.init_scale
        for name in ("gg", "gx", "gb", "xx", "xb", "xg", "bb", "bx", "bg"):
            setattr(self, name, AttentionParams(d, rng, dtype, s))
        self.ffn_g = FFNParams(d, cfg.d_ff, d, rng, dtype, s)
        self.ffn_x = FFNParams(d, cfg.d_ff, d, rng, dtype, s)
        self.ffn_b = FFNParams(d, cfg.d_ff, d, rng, dtype, s)
        self.ln1_g, self.ln2_g = LayerNormParams(d, dtype), LayerNormParams(d, dtype)
        self.ln1_x, self.ln2_x = LayerNormParams(d, dtype), LayerNormParams(d, dtype)
        self.ln1_b, self.ln2_b = LayerNormParams(d, dtype), LayerNormParams(d, dtype)


def csfn_layer(HG: Tensor, HX: Tensor, HB: Tensor, AG, AB, p: CsfnLayer, n_heads: int, drop=None):
    """One fusion layer. ``drop`` is an optional dropout callable (training only)."""
    d = drop or (lambda t: t)

    def attend(Y, Z, A, params):
        return d(graph_multi_head_attention(Y, Z, A, params, n_heads))

    def update(H, internal, ext1, ext2, ln1, ln2, ff):
        c = ln1(H + internal + ext1 + ext2)
        return ln2(c + ff(c, dropout=drop))

    new_g = update(HG, attend(HG, HG, AG, p.gg), attend(HG, HX, None, p.gx), attend(HG, HB, None, p.gb),
                   p.ln1_g, p.ln2_g, p.ffn_g)
    new_x = update(HX, attend(HX, HX, None, p.xx), attend(HX, HB, None, p.xb), attend(HX, HG, None, p.xg),
                   p.ln1_x, p.ln2_x, p.ffn_x)
    new_b = update(HB, attend(HB, HB, AB, p.bb), attend(HB, HX, None, p.bx), attend(HB, HG, None, p.bg),
                   p.ln1_b, p.ln2_b, p.ffn_b)
    return new_g, new_x, new_b


def csfn_forward(HG: Tensor, HX: Tensor, HB: Tensor, AG, AB, layers, n_heads: int, drop=None):
    if not layers:
        raise ValueError("csfn_forward needs at least one layer")
    for layer in layers:
        HG, HX, HB = csfn_layer(HG, HX, HB, AG, AB, layer, n_heads, drop)
    return HG, HX, HB


def make_dropout(rate: float, rng: np.random.Generator):
    if rate <= 0:
        return None
    return lambda t: _dropout(t, rate, rng)
