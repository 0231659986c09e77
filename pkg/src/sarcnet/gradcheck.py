"""Finite-difference verification of every backward pass.

Each check builds a random float64 instance, projects the layer output onto a
fixed random direction to get a scalar, and compares the analytic gradient of
every input and parameter against central differences.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import layers
from .model import ModelConfig, init_params
from .tensor import (
    CHECK_DTYPE,
    conv1d_valid_backward,
    conv1d_valid_batch,
    finite_diff_grad,
    max_over_time_backward,
    max_over_time_batch,
    relative_error,
    softmax,
    softmax_backward,
)
from .train import loss_and_grads

TOLERANCE = 1e-4
EPS = 1e-5

TOY_CONFIG = ModelConfig(variant="hybrid", embedding_dim=3, filter_width=2, out_channels=2, hidden_units=2,
                         attention_size=2, mlp_hidden=3, dropout=0.0, l2=1e-3, max_len=6, seed=3)


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    passed: bool
    worst_tensor: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        where = f" ({self.worst_tensor})" if self.worst_tensor and not self.passed else ""
        return f"{status}  {self.name:<22} max_rel_err={self.max_rel_error:.3e}{where}"


def _compare(name, tensors: dict, objective, analytic: dict, fault: bool, frozen_rows=None) -> CheckResult:
    """``objective(tensors)`` must read its inputs from ``tensors`` on every call.

    ``frozen_rows`` maps a tensor name to row indices that are never trained;
    they are dropped from the comparison.
    """
    frozen_rows = frozen_rows or {}
    worst, worst_name = 0.0, ""
    for key, arr in tensors.items():
        def f(x, key=key):
            saved = tensors[key]
            tensors[key] = x
            try:
                return objective(tensors)
            finally:
                tensors[key] = saved
        numeric = finite_diff_grad(f, arr, EPS)
        grad = analytic[key] * (1.01 if fault else 1.0)
        if key in frozen_rows:
            keep = np.ones(len(numeric), dtype=bool)
            keep[frozen_rows[key]] = False
            grad, numeric = grad[keep], numeric[keep]
        err = relative_error(grad, numeric)
        if err > worst:
            worst, worst_name = err, key
    return CheckResult(name, worst, worst < TOLERANCE, worst_name)


def _rand(rng, *shape):
    return rng.standard_normal(shape).astype(CHECK_DTYPE)


def check_softmax(rng, fault=False):
    t = {"scores": _rand(rng, 3, 5)}
    r = _rand(rng, 3, 5)

    def obj(t):
        return float(np.sum(r * softmax(t["scores"], axis=1)))

    probs = softmax(t["scores"], axis=1)
    return _compare("softmax", t, obj, {"scores": softmax_backward(probs, r, axis=1)}, fault)


def check_conv1d(rng, fault=False):
    t = {"seq": _rand(rng, 2, 6, 3), "filters": _rand(rng, 4, 3, 3), "bias": _rand(rng, 4)}
    r = _rand(rng, 2, 4, 4)

    def obj(t):
        return float(np.sum(r * conv1d_valid_batch(t["seq"], t["filters"], t["bias"])[0]))

    _, win = conv1d_valid_batch(t["seq"], t["filters"], t["bias"])
    dseq, dfil, db = conv1d_valid_backward(win, t["filters"], r, 6)
    return _compare("conv1d_valid", t, obj, {"seq": dseq, "filters": dfil, "bias": db}, fault)


def check_max_over_time(rng, fault=False):
    t = {"featmap": _rand(rng, 2, 5, 3)}
    valid = np.array([[True] * 5, [True, True, True, False, False]])
    r = _rand(rng, 2, 3)

    def obj(t):
        return float(np.sum(r * max_over_time_batch(t["featmap"], valid)[0]))

    _, idx = max_over_time_batch(t["featmap"], valid)
    return _compare("max_over_time", t, obj, {"featmap": max_over_time_backward(r, idx, 5)}, fault)


def check_embed(rng, fault=False):
    ids = np.array([[2, 0, 4], [4, 4, 1]])
    t = {"table": _rand(rng, 5, 3)}
    r = _rand(rng, 2, 3, 3)

    def obj(t):
        return float(np.sum(r * layers.embed(ids, t["table"])))

    return _compare("embed", t, obj, {"table": layers.embed_backward(ids, r, 5)}, fault)


def _lstm_tensors(rng, d, h):
    return {"Wx": _rand(rng, 4, h, d) * 0.5, "Wh": _rand(rng, 4, h, h) * 0.5, "b": _rand(rng, 4, h) * 0.5}


def check_lstm(rng, fault=False):
    lengths = np.array([4, 2])
    mask = np.arange(4)[None, :] < lengths[:, None]
    t = {"x": _rand(rng, 2, 4, 3), **_lstm_tensors(rng, 3, 2)}
    r = _rand(rng, 2, 4, 2)

    def run(t):
        return layers.lstm_forward_batch(t["x"], mask, layers.LstmCellParams(t["Wx"], t["Wh"], t["b"]))

    def obj(t):
        return float(np.sum(r * run(t)[0]))

    dx, g = layers.lstm_backward_batch(r, run(t)[1])
    return _compare("lstm", t, obj, {"x": dx, **g}, fault)


def check_bilstm(rng, fault=False):
    lengths = np.array([3, 1, 4])
    t = {"x": _rand(rng, 3, 4, 2)}
    t.update({f"f.{k}": v for k, v in _lstm_tensors(rng, 2, 3).items()})
    t.update({f"b.{k}": v for k, v in _lstm_tensors(rng, 2, 3).items()})
    r = _rand(rng, 3, 4, 6)

    def run(t):
        fwd = layers.LstmCellParams(t["f.Wx"], t["f.Wh"], t["f.b"])
        bwd = layers.LstmCellParams(t["b.Wx"], t["b.Wh"], t["b.b"])
        return layers.bilstm_forward_batch(t["x"], lengths, fwd, bwd)

    def obj(t):
        return float(np.sum(r * run(t)[0]))

    dx, gf, gb = layers.bilstm_backward_batch(r, run(t)[1])
    analytic = {"x": dx, **{f"f.{k}": v for k, v in gf.items()}, **{f"b.{k}": v for k, v in gb.items()}}
    return _compare("bilstm", t, obj, analytic, fault)


def check_attention(rng, fault=False):
    mask = np.array([[True, True, True, True], [True, True, False, False]])
    t = {"ann": _rand(rng, 2, 4, 4), "W": _rand(rng, 3, 4), "b": _rand(rng, 3), "v": _rand(rng, 3)}
    r = _rand(rng, 2, 4)

    def run(t):
        return layers.attend_batch(t["ann"], mask, layers.AttentionScorerParams(t["W"], t["b"], t["v"]))

    def obj(t):
        return float(np.sum(r * run(t)[0]))

    dann, g = layers.attend_backward_batch(r, run(t)[3])
    return _compare("attention", t, obj, {"ann": dann, **g}, fault)


def check_dense(rng, activation, fault=False):
    t = {"x": _rand(rng, 3, 4), "W": _rand(rng, 2, 4), "b": _rand(rng, 2)}
    r = _rand(rng, 3, 2)

    def obj(t):
        return float(np.sum(r * layers.dense(t["x"], t["W"], t["b"], activation)))

    out = layers.dense(t["x"], t["W"], t["b"], activation)
    dx, dw, db = layers.dense_backward(t["x"], t["W"], out, r, activation)
    return _compare(f"dense[{activation}]", t, obj, {"x": dx, "W": dw, "b": db}, fault)


def check_dropout(rng, fault=False):
    t = {"x": _rand(rng, 4, 5)}
    r = _rand(rng, 4, 5)

    def obj(t):
        return float(np.sum(r * layers.dropout(t["x"], 0.4, np.random.default_rng(7), True)[0]))

    _, scale = layers.dropout(t["x"], 0.4, np.random.default_rng(7), True)
    return _compare("dropout", t, obj, {"x": layers.dropout_backward(r, scale)}, fault)


def _toy_batch(rng, vocab_size):
    # includes a 1-token row (shorter than the filter) and a 2-token row
    lengths = np.array([2, 1, 4, 2])
    ids = np.zeros((4, 4), dtype=np.int64)
    for row, n in enumerate(lengths):
        ids[row, :n] = rng.integers(1, vocab_size, size=n)
    labels = np.array([1, 0, 1, 0])
    return ids, lengths, labels


def check_model(rng, variant, fault=False, dropout=0.3):
    config = replace(TOY_CONFIG, variant=variant, dropout=dropout)
    vocab_size = 7
    table = rng.uniform(-0.5, 0.5, size=(vocab_size, config.embedding_dim))
    table[0] = 0.0
    params = init_params(config, table, dtype=CHECK_DTYPE)
    # the default output-layer init is small; scale up so every path carries signal
    for name in params:
        if name != "embedding":
            params[name] = params[name] + 0.3 * _rand(rng, *params[name].shape)
    ids, lengths, labels = _toy_batch(rng, vocab_size)

    def obj(t):
        return loss_and_grads(t, ids, lengths, labels, config, training=True, rng=np.random.default_rng(11))[0]

    _, grads, _ = loss_and_grads(params, ids, lengths, labels, config, training=True,
                                 rng=np.random.default_rng(11))
    return _compare(f"model[{variant}]", params, obj, grads, fault, frozen_rows={"embedding": [0]})


CHECKS = {
    "softmax": check_softmax,
    "conv1d_valid": check_conv1d,
    "max_over_time": check_max_over_time,
    "embed": check_embed,
    "lstm": check_lstm,
    "bilstm": check_bilstm,
    "attention": check_attention,
    "dense[identity]": lambda rng, fault=False: check_dense(rng, "identity", fault),
    "dense[tanh]": lambda rng, fault=False: check_dense(rng, "tanh", fault),
    "dense[sigmoid]": lambda rng, fault=False: check_dense(rng, "sigmoid", fault),
    "dropout": check_dropout,
    "model[hybrid]": lambda rng, fault=False: check_model(rng, "hybrid", fault),
    "model[baseline]": lambda rng, fault=False: check_model(rng, "baseline", fault),
}


def run_selfcheck(seed: int = 0, fault: str | None = None) -> list[CheckResult]:
    """Run every registered check once. ``fault`` names a check whose analytic
    gradient is deliberately perturbed by 1% (used to test the harness)."""
    if fault is not None and fault not in CHECKS:
        raise KeyError(f"unknown check {fault!r}; choose from {sorted(CHECKS)}")
    rng = np.random.default_rng(seed)
    return [check(rng, fault=(name == fault)) for name, check in CHECKS.items()]
