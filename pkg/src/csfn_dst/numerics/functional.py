"""Fused primitives: softmax with masking, layer norm, FFN, losses, dropout."""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, _result, log_floor, matmul, relu, tsum

PROB_FLOOR = 1e-12


def masked_softmax(logits: Tensor, mask=None, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` where entries with ``mask == 0`` get probability 0.

    A row with no allowed entry comes back as all zeros. ``mask`` may be any
    array broadcastable against ``logits``; ``None`` means nothing is masked.
    """
    z = logits.data
    if mask is not None:
        allowed = np.asarray(mask) != 0
        z = np.where(allowed, z, -np.inf)
    m = z.max(axis=axis, keepdims=True)
    if mask is not None:
        m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(z - m)
    s = e.sum(axis=axis, keepdims=True)
    if mask is not None:
        s = np.where(s > 0, s, 1.0)
    y = (e / s).astype(logits.dtype, copy=False)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (logits,), back)


def softmax(logits: Tensor, axis: int = -1) -> Tensor:
    return masked_softmax(logits, None, axis=axis)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    xd, gd = x.data, gamma.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gd + beta.data

    def back(g):
        flat = g.reshape(-1, d)
        dgamma = (flat * xhat.reshape(-1, d)).sum(axis=0)
        dbeta = flat.sum(axis=0)
        dxhat = g * gd
        dx = inv * (
            dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgamma, dbeta

    return _result(out, (x, gamma, beta), back)


def ffn(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor, dropout=None) -> Tensor:
    """max(0, x W1 + b1) W2 + b2, with optional dropout on the inner activation."""
    if x.shape[-1] != w1.shape[0] or w1.shape[1] != w2.shape[0] or w2.shape[1] != b2.shape[-1]:
        raise ShapeError(f"ffn: x {x.shape}, W1 {w1.shape}, W2 {w2.shape}, b2 {b2.shape}")
    h = relu(matmul(x, w1) + b1)
    if dropout is not None:
        h = dropout(h)
    return matmul(h, w2) + b2


def cross_entropy(probs: Tensor, onehot) -> Tensor:
    """-log(probs . onehot) for a single distribution, floored at PROB_FLOOR."""
    oh = np.asarray(onehot)
    if oh.shape != probs.shape or not np.isin(oh, (0, 1)).all() or oh.sum() != 1:
        raise ValueError(f"cross_entropy: invalid one-hot label {oh!r}")
    picked = tsum(probs * Tensor(oh.astype(probs.dtype)))
    return -log_floor(picked, PROB_FLOOR)


def nll(probs: Tensor, targets, weights=None) -> Tensor:
    """Summed -log p[target] over the leading axes of ``probs``.

    ``targets`` holds one class index per row; ``weights`` (0/1 per row) drops
    padded rows from the sum.
    """
    p = probs.data
    t = np.asarray(targets, dtype=np.int64)
    rows = np.indices(t.shape)
    picked = p[(*rows, t)]
    clipped = np.maximum(picked, PROB_FLOOR)
    live = picked > PROB_FLOOR
    w = np.ones_like(picked) if weights is None else np.asarray(weights, dtype=p.dtype)
    loss = -(w * np.log(clipped)).sum()

    def back(g):
        out = np.zeros_like(p)
        out[(*rows, t)] = np.where(live, -g * w / clipped, 0.0)
        return (out,)

    return _result(np.asarray(loss, dtype=p.dtype), (probs,), back)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))
