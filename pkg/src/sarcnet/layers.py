"""Network building blocks with explicit backward passes.

Each public per-example op (``embed``, ``lstm_step``, ``bilstm_encode``,
``attend``, ``dense``, ``dropout``) has a batched, masked counterpart used by
the model. The batched versions return a cache consumed by the matching
``*_backward`` function.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, DomainError
from .tensor import softmax, softmax_backward

N_GATES = 4  # gate order: input, forget, candidate, output


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# -- embedding -------------------------------------------------------------

def embed(token_ids, table: np.ndarray) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64)
    vocab_size = table.shape[0]
    bad = np.flatnonzero((ids < 0) | (ids >= vocab_size))
    if bad.size:
        pos = int(bad[0])
        raise IndexError(f"token id {int(ids.ravel()[pos])} at position {pos} outside vocabulary of size {vocab_size}")
    return table[ids]


def embed_backward(token_ids, dout: np.ndarray, vocab_size: int) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64).ravel()
    dtable = np.zeros((vocab_size, dout.shape[-1]), dtype=dout.dtype)
    np.add.at(dtable, ids, dout.reshape(-1, dout.shape[-1]))
    return dtable


# -- LSTM ------------------------------------------------------------------

@dataclass
class LstmCellParams:
    """Gate blocks stacked along axis 0 in the order (i, f, g, o)."""

    Wx: np.ndarray  # (4, H, D)
    Wh: np.ndarray  # (4, H, H)
    b: np.ndarray   # (4, H)

    def __post_init__(self):
        if self.Wx.ndim != 3 or self.Wx.shape[0] != N_GATES:
            raise DimensionError(f"Wx must be (4,H,D), got {self.Wx.shape}")
        h = self.Wx.shape[1]
        if self.Wh.shape != (N_GATES, h, h) or self.b.shape != (N_GATES, h):
            raise DimensionError(
                f"inconsistent LSTM blocks: Wx {self.Wx.shape}, Wh {self.Wh.shape}, b {self.b.shape}")

    @property
    def hidden(self) -> int:
        return self.Wx.shape[1]

    @property
    def input_dim(self) -> int:
        return self.Wx.shape[2]

    @classmethod
    def init(cls, rng, input_dim: int, hidden: int, dtype=np.float32):
        wx = np.stack([glorot_uniform(rng, (hidden, input_dim), input_dim, hidden, dtype) for _ in range(N_GATES)])
        wh = np.stack([glorot_uniform(rng, (hidden, hidden), hidden, hidden, dtype) for _ in range(N_GATES)])
        b = np.zeros((N_GATES, hidden), dtype=dtype)
        b[1] = 1.0  # forget gate
        return cls(wx, wh, b)

    @classmethod
    def zeros(cls, input_dim: int, hidden: int, dtype=np.float64):
        return cls(np.zeros((N_GATES, hidden, input_dim), dtype),
                   np.zeros((N_GATES, hidden, hidden), dtype),
                   np.zeros((N_GATES, hidden), dtype))


def lstm_step(x, h_prev, c_prev, p: LstmCellParams):
    """One LSTM transition: c = f*c_prev + i*g, h = o*tanh(c)."""
    x = np.asarray(x)
    if x.shape != (p.input_dim,) or np.shape(h_prev) != (p.hidden,) or np.shape(c_prev) != (p.hidden,):
        raise DimensionError(
            f"lstm_step: x {x.shape}, h {np.shape(h_prev)}, c {np.shape(c_prev)} "
            f"vs params H={p.hidden}, D={p.input_dim}")
    z = np.einsum("ghd,d->gh", p.Wx, x) + np.einsum("ghk,k->gh", p.Wh, h_prev) + p.b
    i, f, o = sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[3])
    g = np.tanh(z[2])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def lstm_forward_batch(x: np.ndarray, mask: np.ndarray, p: LstmCellParams):
    """Run one direction over (B, L, D). Masked steps carry state unchanged and
    emit zeros."""
    b, length, _ = x.shape
    hdim = p.hidden
    wx = p.Wx.reshape(N_GATES * hdim, -1)
    wh = p.Wh.reshape(N_GATES * hdim, hdim)
    xw = x @ wx.T + p.b.reshape(-1)
    h = np.zeros((b, hdim), dtype=x.dtype)
    c = np.zeros((b, hdim), dtype=x.dtype)
    gates = np.empty((b, length, N_GATES * hdim), dtype=x.dtype)
    c_prev_all = np.empty((b, length, hdim), dtype=x.dtype)
    h_prev_all = np.empty((b, length, hdim), dtype=x.dtype)
    tc_all = np.empty((b, length, hdim), dtype=x.dtype)
    out = np.empty((b, length, hdim), dtype=x.dtype)
    for t in range(length):
        z = xw[:, t] + h @ wh.T
        a = np.empty_like(z)
        a[:, :2 * hdim] = sigmoid(z[:, :2 * hdim])
        a[:, 2 * hdim:3 * hdim] = np.tanh(z[:, 2 * hdim:3 * hdim])
        a[:, 3 * hdim:] = sigmoid(z[:, 3 * hdim:])
        i, f, g, o = a[:, :hdim], a[:, hdim:2 * hdim], a[:, 2 * hdim:3 * hdim], a[:, 3 * hdim:]
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, t, None]
        gates[:, t] = a
        c_prev_all[:, t] = c
        h_prev_all[:, t] = h
        tc_all[:, t] = tc
        out[:, t] = h_new * m
        c = np.where(m, c_new, c)
        h = np.where(m, h_new, h)
    cache = (x, mask, p, gates, c_prev_all, h_prev_all, tc_all)
    return out, cache


def lstm_backward_batch(dout: np.ndarray, cache):
    """Backprop through time. Returns (dx, dict of dWx, dWh, db)."""
    x, mask, p, gates, c_prev_all, h_prev_all, tc_all = cache
    b, length, _ = x.shape
    hdim = p.hidden
    wh = p.Wh.reshape(N_GATES * hdim, hdim)
    wx = p.Wx.reshape(N_GATES * hdim, -1)
    dz_all = np.zeros_like(gates)
    dwh = np.zeros_like(wh)
    dh_carry = np.zeros((b, hdim), dtype=dout.dtype)
    dc_carry = np.zeros((b, hdim), dtype=dout.dtype)
    for t in reversed(range(length)):
        m = mask[:, t, None].astype(dout.dtype)
        a = gates[:, t]
        i, f, g, o = a[:, :hdim], a[:, hdim:2 * hdim], a[:, 2 * hdim:3 * hdim], a[:, 3 * hdim:]
        tc = tc_all[:, t]
        dh_new = m * (dout[:, t] + dh_carry)
        dc_new = m * dc_carry + dh_new * o * (1.0 - tc * tc)
        dz = np.empty_like(a)
        dz[:, :hdim] = dc_new * g * i * (1.0 - i)
        dz[:, hdim:2 * hdim] = dc_new * c_prev_all[:, t] * f * (1.0 - f)
        dz[:, 2 * hdim:3 * hdim] = dc_new * i * (1.0 - g * g)
        dz[:, 3 * hdim:] = dh_new * tc * o * (1.0 - o)
        dz_all[:, t] = dz
        dwh += dz.T @ h_prev_all[:, t]
        dh_carry = dz @ wh + (1.0 - m) * dh_carry
        dc_carry = dc_new * f + (1.0 - m) * dc_carry
    flat_dz = dz_all.reshape(-1, N_GATES * hdim)
    dwx = flat_dz.T @ x.reshape(b * length, -1)
    dx = dz_all @ wx
    grads = {
        "Wx": dwx.reshape(p.Wx.shape),
        "Wh": dwh.reshape(p.Wh.shape),
        "b": flat_dz.sum(axis=0).reshape(p.b.shape),
    }
    return dx, grads


def reverse_index(lengths: np.ndarray, length: int) -> np.ndarray:
    """Per-row gather index reversing the first ``lengths[b]`` positions and
    leaving padding in place. The mapping is an involution."""
    t = np.arange(length)[None, :]
    lens = np.asarray(lengths)[:, None]
    return np.where(t < lens, lens - 1 - t, t)


def bilstm_encode(seq: np.ndarray, fwd: LstmCellParams, bwd: LstmCellParams) -> np.ndarray:
    """Annotations for an unpadded (N, D) sequence: row j = [fwd_j ; bwd_j]."""
    seq = np.asarray(seq)
    if seq.ndim != 2:
        raise DimensionError(f"bilstm_encode: expected (N,D), got {seq.shape}")
    n = seq.shape[0]
    if n == 0:
        raise DomainError("bilstm_encode of an empty sequence")
    out = np.zeros((n, fwd.hidden + bwd.hidden), dtype=seq.dtype)
    h = np.zeros(fwd.hidden, dtype=seq.dtype)
    c = np.zeros_like(h)
    for j in range(n):
        h, c = lstm_step(seq[j], h, c, fwd)
        out[j, :fwd.hidden] = h
    h = np.zeros(bwd.hidden, dtype=seq.dtype)
    c = np.zeros_like(h)
    for j in reversed(range(n)):
        h, c = lstm_step(seq[j], h, c, bwd)
        out[j, fwd.hidden:] = h
    return out


def bilstm_forward_batch(x: np.ndarray, lengths: np.ndarray, fwd: LstmCellParams, bwd: LstmCellParams):
    b, length, _ = x.shape
    mask = np.arange(length)[None, :] < np.asarray(lengths)[:, None]
    rev = reverse_index(lengths, length)
    rows = np.arange(b)[:, None]
    hf, cache_f = lstm_forward_batch(x, mask, fwd)
    hb_rev, cache_b = lstm_forward_batch(x[rows, rev], mask, bwd)
    ann = np.concatenate([hf, hb_rev[rows, rev]], axis=-1)
    return ann, (cache_f, cache_b, rev, fwd.hidden)


def bilstm_backward_batch(dann: np.ndarray, cache):
    cache_f, cache_b, rev, hf = cache
    rows = np.arange(dann.shape[0])[:, None]
    dx_f, gf = lstm_backward_batch(dann[..., :hf], cache_f)
    dx_b_rev, gb = lstm_backward_batch(dann[..., hf:][rows, rev], cache_b)
    return dx_f + dx_b_rev[rows, rev], gf, gb


# -- attention -------------------------------------------------------------

@dataclass
class AttentionScorerParams:
    """score_i = v . tanh(W h_i + b)"""

    W: np.ndarray  # (A, 2H)
    b: np.ndarray  # (A,)
    v: np.ndarray  # (A,)

    def __post_init__(self):
        if self.W.ndim != 2 or self.W.shape[0] < 1 or self.b.shape != (self.W.shape[0],) \
                or self.v.shape != (self.W.shape[0],):
            raise DimensionError(f"attention params: W {self.W.shape}, b {self.b.shape}, v {self.v.shape}")

    @classmethod
    def init(cls, rng, annotation_dim: int, size: int, dtype=np.float32):
        return cls(glorot_uniform(rng, (size, annotation_dim), annotation_dim, size, dtype),
                   np.zeros(size, dtype=dtype),
                   glorot_uniform(rng, (size,), size, 1, dtype))


@dataclass
class EncodedSequence:
    annotations: np.ndarray  # (N, 2H)
    scores: np.ndarray       # (N,)
    alphas: np.ndarray       # (N,)
    context: np.ndarray      # (2H,)


def attend(annotations: np.ndarray, p: AttentionScorerParams) -> EncodedSequence:
    annotations = np.asarray(annotations)
    if annotations.ndim != 2 or annotations.shape[1] != p.W.shape[1]:
        raise DimensionError(f"attend: annotations {annotations.shape} vs W {p.W.shape}")
    if annotations.shape[0] == 0:
        raise DomainError("attend over zero annotations")
    scores = np.tanh(annotations @ p.W.T + p.b) @ p.v
    alphas = softmax(scores)
    return EncodedSequence(annotations, scores, alphas, alphas @ annotations)


def attend_batch(ann: np.ndarray, mask: np.ndarray, p: AttentionScorerParams):
    """Masked additive self-attention over (B, L, 2H); masked alphas are exactly 0."""
    u = np.tanh(ann @ p.W.T + p.b)
    scores = u @ p.v
    alphas = softmax(np.where(mask, scores, -np.inf), axis=1)
    context = np.einsum("bl,blk->bk", alphas, ann)
    return context, alphas, scores, (ann, u, alphas, p)


def attend_backward_batch(dcontext: np.ndarray, cache, dalphas_extra=None):
    ann, u, alphas, p = cache
    dalphas = np.einsum("bk,blk->bl", dcontext, ann)
    if dalphas_extra is not None:
        dalphas = dalphas + dalphas_extra
    dann = alphas[:, :, None] * dcontext[:, None, :]
    dscores = softmax_backward(alphas, dalphas, axis=1)
    dv = np.einsum("bl,bla->a", dscores, u)
    da = dscores[:, :, None] * p.v * (1.0 - u * u)
    dw = np.einsum("bla,blk->ak", da, ann)
    db = da.sum(axis=(0, 1))
    dann = dann + da @ p.W
    return dann, {"W": dw, "b": db, "v": dv}


# -- dense / dropout ---------------------------------------------------------

ACTIVATIONS = ("identity", "tanh", "sigmoid")


def dense(x: np.ndarray, W: np.ndarray, b: np.ndarray, activation: str = "identity") -> np.ndarray:
    """activation(W x + b). ``x`` may carry leading batch axes."""
    x = np.asarray(x)
    if W.ndim != 2 or x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise DimensionError(f"dense: x {x.shape}, W {W.shape}, b {b.shape}")
    z = x @ W.T + b
    if activation == "identity":
        return z
    if activation == "tanh":
        return np.tanh(z)
    if activation == "sigmoid":
        return sigmoid(z)
    raise ConfigError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")


def dense_backward(x, W, out, dout, activation: str = "identity"):
    """Returns (dx, dW, db) given the forward output ``out``."""
    if activation == "tanh":
        dz = dout * (1.0 - out * out)
    elif activation == "sigmoid":
        dz = dout * out * (1.0 - out)
    else:
        dz = dout
    x2 = x.reshape(-1, x.shape[-1])
    dz2 = dz.reshape(-1, dz.shape[-1])
    return dz @ W, dz2.T @ x2, dz2.sum(axis=0)


def dropout(x: np.ndarray, rate: float, rng: np.random.Generator | None, training: bool):
    """Inverted dropout. Returns (output, keep-scale mask or None)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    scale = (keep / (1.0 - rate)).astype(x.dtype)
    return x * scale, scale


def dropout_backward(dout: np.ndarray, scale):
    return dout if scale is None else dout * scale
