"""Dense-tensor kernel: forward ops, their vector-Jacobian products, and a
finite-difference oracle.

Tensors are plain ``numpy.ndarray`` objects. Training runs in float32 and
gradient checks in float64; every op here preserves the dtype it is given.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError, DomainError, NumericError

TRAIN_DTYPE = np.float32
CHECK_DTYPE = np.float64


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def matmul_backward(a, b, dout):
    """Return (da, db) for out = a @ b."""
    return dout @ b.T, a.T @ dout


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax. Entries equal to ``-inf`` get probability 0."""
    scores = np.asarray(scores)
    if scores.size == 0 or scores.shape[axis] == 0:
        raise DomainError("softmax of an empty score vector")
    shifted = scores - np.max(scores, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray, axis: int = -1) -> np.ndarray:
    dot = np.sum(probs * dprobs, axis=axis, keepdims=True)
    return probs * (dprobs - dot)


def _windows(x: np.ndarray, width: int) -> np.ndarray:
    # (B, L, D) -> (B, L-width+1, width*D), window rows in time order
    b, length, d = x.shape
    view = np.lib.stride_tricks.sliding_window_view(x, width, axis=1)  # (B, T, D, w)
    return np.ascontiguousarray(view.transpose(0, 1, 3, 2)).reshape(b, length - width + 1, width * d)


def conv1d_valid_batch(seq: np.ndarray, filters: np.ndarray, bias: np.ndarray):
    """Batched valid convolution. ``seq`` is (B, L, D); returns (out, windows)."""
    if seq.ndim != 3 or filters.ndim != 3 or bias.ndim != 1:
        raise DimensionError(
            f"conv1d: expected seq (B,L,D), filters (F,w,D), bias (F); got "
            f"{seq.shape}, {filters.shape}, {bias.shape}")
    n_filters, width, dim = filters.shape
    if seq.shape[2] != dim or bias.shape[0] != n_filters:
        raise DimensionError(
            f"conv1d: seq {seq.shape} incompatible with filters {filters.shape} / bias {bias.shape}")
    if seq.shape[1] < width:
        raise DomainError(
            f"conv1d: sequence of length {seq.shape[1]} is shorter than filter width {width}; pad first")
    win = _windows(seq, width)
    out = win @ filters.reshape(n_filters, width * dim).T + bias
    return out, win


def conv1d_valid(seq: np.ndarray, filters: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """out[t, f] = bias[f] + sum_{j<w, d<D} seq[t+j, d] * filters[f, j, d]."""
    seq = np.asarray(seq)
    if seq.ndim != 2:
        raise DimensionError(f"conv1d: expected seq (L,D), got {seq.shape}")
    out, _ = conv1d_valid_batch(seq[None], np.asarray(filters), np.asarray(bias))
    return out[0]


def conv1d_valid_backward(windows: np.ndarray, filters: np.ndarray, dout: np.ndarray,
                          seq_len: int):
    """VJP of :func:`conv1d_valid_batch`. Returns (dseq, dfilters, dbias)."""
    n_filters, width, dim = filters.shape
    b, t, _ = dout.shape
    dfilters = np.einsum("btf,btk->fk", dout, windows).reshape(filters.shape)
    dbias = dout.sum(axis=(0, 1))
    dwin = (dout @ filters.reshape(n_filters, width * dim)).reshape(b, t, width, dim)
    dseq = np.zeros((b, seq_len, dim), dtype=dout.dtype)
    for j in range(width):
        dseq[:, j:j + t] += dwin[:, :, j]
    return dseq, dfilters, dbias


def max_over_time(featmap: np.ndarray):
    """Column-wise max of a (T, F) map with the winning row per column.

    Ties resolve to the smallest row index.
    """
    featmap = np.asarray(featmap)
    if featmap.ndim != 2:
        raise DimensionError(f"max_over_time: expected (T,F), got {featmap.shape}")
    if featmap.shape[0] == 0:
        raise DomainError("max_over_time over zero time steps")
    idx = np.argmax(featmap, axis=0)
    return featmap[idx, np.arange(featmap.shape[1])], [int(i) for i in idx]


def max_over_time_batch(featmap: np.ndarray, valid: np.ndarray):
    """Batched masked max over axis 1. ``valid`` is a (B, T) boolean mask."""
    masked = np.where(valid[:, :, None], featmap, -np.inf)
    idx = np.argmax(masked, axis=1)  # (B, F); first maximum wins
    vals = np.take_along_axis(featmap, idx[:, None, :], axis=1)[:, 0, :]
    return vals, idx


def max_over_time_backward(dvals: np.ndarray, idx, steps: int) -> np.ndarray:
    """Route ``dvals`` to the recorded argmax cells; every other cell gets 0.

    Accepts the unbatched form (dvals (F,), idx list) or the batched form
    (dvals (B, F), idx (B, F)).
    """
    dvals = np.asarray(dvals)
    idx = np.asarray(idx)
    if dvals.ndim == 1:
        out = np.zeros((steps, dvals.shape[0]), dtype=dvals.dtype)
        out[idx, np.arange(dvals.shape[0])] = dvals
        return out
    b, f = dvals.shape
    out = np.zeros((b, steps, f), dtype=dvals.dtype)
    np.put_along_axis(out, idx[:, None, :], dvals[:, None, :], axis=1)
    return out


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` in float64.

    ``f`` receives a float64 array that is perturbed in place between calls;
    it must not keep a reference to it.
    """
    if eps <= 0:
        raise DomainError("finite_diff_grad needs eps > 0")
    x = np.array(x, dtype=CHECK_DTYPE)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value while perturbing coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / (||a|| + ||n||); 0 when both are zero."""
    a = np.asarray(analytic, dtype=CHECK_DTYPE).ravel()
    n = np.asarray(numeric, dtype=CHECK_DTYPE).ravel()
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    if denom < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


@dataclass
class Parameter:
    """A trainable tensor with its gradient and AdaDelta accumulators."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)
    accum_sq_grad: np.ndarray = field(default=None)
    accum_sq_delta: np.ndarray = field(default=None)

    def __post_init__(self):
        self.value = np.asarray(self.value)
        for name in ("grad", "accum_sq_grad", "accum_sq_delta"):
            t = getattr(self, name)
            if t is None:
                setattr(self, name, np.zeros_like(self.value))
            elif np.shape(t) != self.value.shape:
                raise DimensionError(f"Parameter.{name} has shape {np.shape(t)}, value has {self.value.shape}")

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0
