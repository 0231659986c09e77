"""Hybrid CNN + attentive BiLSTM classifier, the CNN-only baseline, inference
helpers and the checkpoint container."""
from __future__ import annotations

import json
import struct
import warnings
import zlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import PAD_ID, Vocabulary, tokenize
from .errors import ConfigError, DomainError, FormatError, IntegrityError, UnsupportedVariantError
from .layers import (
    AttentionScorerParams,
    LstmCellParams,
    attend_backward_batch,
    attend_batch,
    bilstm_backward_batch,
    bilstm_forward_batch,
    dense,
    dense_backward,
    dropout,
    dropout_backward,
    embed_backward,
    glorot_uniform,
)
from .tensor import conv1d_valid_backward, conv1d_valid_batch, max_over_time_backward, max_over_time_batch, softmax

VARIANTS = ("baseline", "hybrid")


@dataclass
class ModelConfig:
    variant: str = "hybrid"
    embedding_dim: int = 50
    filter_width: int = 3
    out_channels: int = 64
    hidden_units: int = 64
    attention_size: int = 64
    mlp_hidden: int = 64
    dropout: float = 0.5
    l2: float = 1e-5
    learning_rate: float = 1.0
    max_len: int = 32
    seed: int = 0

    def problems(self) -> list[str]:
        out = []
        if self.variant not in VARIANTS:
            out.append(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("embedding_dim", "filter_width", "out_channels", "hidden_units",
                     "attention_size", "mlp_hidden", "max_len"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            out.append(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.l2 < 0:
            out.append(f"l2 must be >= 0, got {self.l2}")
        if self.learning_rate <= 0:
            out.append(f"learning_rate must be > 0, got {self.learning_rate}")
        return out

    def validate(self) -> "ModelConfig":
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    @property
    def hybrid(self) -> bool:
        return self.variant == "hybrid"

    @property
    def feature_width(self) -> int:
        return self.out_channels + (2 * self.hidden_units if self.hybrid else 0)


# Weight tensors penalised by L2 (biases and the embedding table are not).
WEIGHT_NAMES = ("conv.filters", "lstm_fwd.Wx", "lstm_fwd.Wh", "lstm_bwd.Wx", "lstm_bwd.Wh",
                "attn.W", "attn.v", "head.W1", "head.W2")


def init_params(config: ModelConfig, embedding_table: np.ndarray, dtype=np.float32) -> dict[str, np.ndarray]:
    """Seeded initialisation of every tensor except the supplied embedding table."""
    config.validate()
    if embedding_table.ndim != 2 or embedding_table.shape[1] != config.embedding_dim:
        raise ConfigError(
            f"embedding table {embedding_table.shape} does not match embedding_dim={config.embedding_dim}")
    rng = np.random.default_rng(config.seed)
    d, w, f = config.embedding_dim, config.filter_width, config.out_channels
    h, a, m = config.hidden_units, config.attention_size, config.mlp_hidden
    p = {
        "embedding": np.array(embedding_table, dtype=dtype),
        "conv.filters": glorot_uniform(rng, (f, w, d), w * d, f, dtype),
        "conv.bias": np.zeros(f, dtype=dtype),
    }
    if config.hybrid:
        for side in ("lstm_fwd", "lstm_bwd"):
            cell = LstmCellParams.init(rng, d, h, dtype)
            p[f"{side}.Wx"], p[f"{side}.Wh"], p[f"{side}.b"] = cell.Wx, cell.Wh, cell.b
        att = AttentionScorerParams.init(rng, 2 * h, a, dtype)
        p["attn.W"], p["attn.b"], p["attn.v"] = att.W, att.b, att.v
    width = config.feature_width
    p["head.W1"] = glorot_uniform(rng, (m, width), width, m, dtype)
    p["head.b1"] = np.zeros(m, dtype=dtype)
    p["head.W2"] = glorot_uniform(rng, (2, m), m, 2, dtype)
    p["head.b2"] = np.zeros(2, dtype=dtype)
    return p


def n_parameters(params: dict[str, np.ndarray]) -> int:
    return int(sum(v.size for v in params.values()))


def _lstm(params, side) -> LstmCellParams:
    return LstmCellParams(params[f"{side}.Wx"], params[f"{side}.Wh"], params[f"{side}.b"])


def _attn(params) -> AttentionScorerParams:
    return AttentionScorerParams(params["attn.W"], params["attn.b"], params["attn.v"])


@dataclass
class ForwardCache:
    ids: np.ndarray
    lengths: np.ndarray
    probs: np.ndarray
    logits: np.ndarray
    alphas: np.ndarray | None
    context: np.ndarray | None
    annotations: np.ndarray | None
    _saved: tuple


def forward_batch(params, ids, lengths, config: ModelConfig, training: bool = False,
                  rng: np.random.Generator | None = None) -> ForwardCache:
    """Forward pass over a padded batch.

    ``ids`` is (B, L) with padding id 0 beyond each row's ``lengths[b]``.
    Both variants share this path; ``config.variant`` selects the branches.
    """
    ids = np.asarray(ids, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if ids.ndim != 2 or lengths.shape != (ids.shape[0],):
        raise DomainError(f"ids must be (B, L) with B lengths, got {ids.shape} and {lengths.shape}")
    if np.any(lengths < 1) or np.any(lengths > ids.shape[1]):
        raise DomainError("every true length must lie in [1, L]")
    width = config.filter_width
    if ids.shape[1] < width:
        # short sequences are zero-padded up to the filter width for the conv branch
        ids = np.pad(ids, ((0, 0), (0, width - ids.shape[1])), constant_values=PAD_ID)
    table = params["embedding"]
    if ids.max(initial=0) >= table.shape[0]:
        raise IndexError(f"token id {int(ids.max())} outside vocabulary of size {table.shape[0]}")
    x = table[ids]
    b, length, _ = x.shape

    conv, win = conv1d_valid_batch(x, params["conv.filters"], params["conv.bias"])
    act = np.tanh(conv)
    steps = conv.shape[1]
    n_windows = np.maximum(lengths, width) - width + 1
    valid = np.arange(steps)[None, :] < n_windows[:, None]
    pooled, argmax = max_over_time_batch(act, valid)

    feats = [pooled]
    alphas = context = ann = None
    bcache = acache = None
    if config.hybrid:
        ann, bcache = bilstm_forward_batch(x, lengths, _lstm(params, "lstm_fwd"), _lstm(params, "lstm_bwd"))
        mask = np.arange(length)[None, :] < lengths[:, None]
        context, alphas, _, acache = attend_batch(ann, mask, _attn(params))
        feats.append(context)
    feat = np.concatenate(feats, axis=1)
    dropped, keep = dropout(feat, config.dropout, rng, training)
    hidden = dense(dropped, params["head.W1"], params["head.b1"], "tanh")
    logits = dense(hidden, params["head.W2"], params["head.b2"], "identity")
    probs = softmax(logits, axis=1)
    saved = (x, win, act, argmax, steps, bcache, acache, keep, dropped, hidden)
    return ForwardCache(ids, lengths, probs, logits, alphas, context, ann, saved)


def backward_batch(params, cache: ForwardCache, dlogits: np.ndarray, config: ModelConfig) -> dict[str, np.ndarray]:
    """Gradients of every parameter given dL/dlogits (B, 2)."""
    x, win, act, argmax, steps, bcache, acache, keep, dropped, hidden = cache._saved
    grads = {}
    dhidden, grads["head.W2"], grads["head.b2"] = dense_backward(hidden, params["head.W2"], cache.logits, dlogits)
    ddropped, grads["head.W1"], grads["head.b1"] = dense_backward(dropped, params["head.W1"], hidden, dhidden, "tanh")
    dfeat = dropout_backward(ddropped, keep)
    f = config.out_channels
    dact = max_over_time_backward(dfeat[:, :f], argmax, steps)
    dconv = dact * (1.0 - act * act)
    dx, grads["conv.filters"], grads["conv.bias"] = conv1d_valid_backward(
        win, params["conv.filters"], dconv, x.shape[1])
    if config.hybrid:
        dann, ga = attend_backward_batch(dfeat[:, f:], acache)
        dx_lstm, gf, gb = bilstm_backward_batch(dann, bcache)
        dx = dx + dx_lstm
        for k, v in ga.items():
            grads[f"attn.{k}"] = v
        for side, g in (("lstm_fwd", gf), ("lstm_bwd", gb)):
            for k, v in g.items():
                grads[f"{side}.{k}"] = v
    dtable = embed_backward(cache.ids, dx, params["embedding"].shape[0])
    dtable[PAD_ID] = 0.0
    grads["embedding"] = dtable
    return grads


# -- inference ---------------------------------------------------------------

@dataclass
class Prediction:
    probs: np.ndarray          # (non-sarcastic, sarcastic)
    label: int
    attention: list[float] | None = None


@dataclass
class Artifacts:
    params: dict[str, np.ndarray]
    config: ModelConfig
    vocab: Vocabulary


def encode_text(text: str, artifacts: Artifacts):
    tokens = tokenize(text)
    if not tokens:
        raise DomainError(f"text {text!r} has no tokens")
    tokens = tokens[:artifacts.config.max_len]
    return tokens, np.array([artifacts.vocab.encode(tokens)], dtype=np.int64)


def predict(text: str, artifacts: Artifacts) -> Prediction:
    tokens, ids = encode_text(text, artifacts)
    out = forward_batch(artifacts.params, ids, np.array([len(tokens)]), artifacts.config, training=False)
    probs = out.probs[0].astype(np.float64)
    attention = None if out.alphas is None else out.alphas[0, :len(tokens)].astype(np.float64).tolist()
    return Prediction(probs, int(np.argmax(probs)), attention)


def explain(text: str, artifacts: Artifacts) -> list[tuple[str, float]]:
    """(token, attention weight) pairs over the non-padded tokens."""
    if not artifacts.config.hybrid:
        raise UnsupportedVariantError("attention explanations need a hybrid model; this one is a baseline")
    tokens, _ = encode_text(text, artifacts)
    pred = predict(text, artifacts)
    return list(zip(tokens, pred.attention))


# -- checkpoint container ------------------------------------------------------
#
# b"SARC" | u16 major | u16 minor
# u32 n | config JSON (n bytes)
# u32 n | vocabulary JSON list (n bytes)
# u32 tensor count, then per tensor: u16 n | name | u8 ndim | u32 dims... | f32 LE values
# u32 CRC-32 of everything above

MAGIC = b"SARC"
FORMAT_VERSION = (1, 0)


def save_checkpoint(params: dict[str, np.ndarray], config: ModelConfig, vocab: Vocabulary, path,
                    _version=FORMAT_VERSION) -> None:
    """Write tensors as little-endian float32; values stored in float64 are narrowed."""
    def block(raw: bytes) -> bytes:
        return struct.pack("<I", len(raw)) + raw

    parts = [MAGIC, struct.pack("<HH", *_version),
             block(json.dumps(asdict(config), sort_keys=True).encode()),
             block(json.dumps(vocab.itos, ensure_ascii=False).encode()),
             struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        raw_name = name.encode()
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path) -> Artifacts:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a sarcnet checkpoint (bad magic bytes)")
    if len(blob) < 12:
        raise IntegrityError(f"{path}: truncated checkpoint")
    major, minor = struct.unpack_from("<HH", blob, 4)
    if major != FORMAT_VERSION[0]:
        raise FormatError(f"{path}: checkpoint format {major}.{minor} is not readable by {FORMAT_VERSION[0]}.x")
    if minor > FORMAT_VERSION[1]:
        warnings.warn(f"{path}: checkpoint minor version {minor} is newer than {FORMAT_VERSION[1]}; "
                      "unknown additions are ignored", stacklevel=2)
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise IntegrityError(f"{path}: checksum mismatch (truncated or corrupted)")
    try:
        pos = 8
        (n,) = struct.unpack_from("<I", body, pos)
        cfg_raw = json.loads(body[pos + 4:pos + 4 + n])
        pos += 4 + n
        (n,) = struct.unpack_from("<I", body, pos)
        itos = json.loads(body[pos + 4:pos + 4 + n])
        pos += 4 + n
        (count,) = struct.unpack_from("<I", body, pos)
        pos += 4
        params = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", body, pos)
            name = body[pos + 2:pos + 2 + n].decode()
            pos += 2 + n
            (ndim,) = struct.unpack_from("<B", body, pos)
            shape = struct.unpack_from(f"<{ndim}I", body, pos + 1)
            pos += 1 + 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * size > len(body):
                raise IntegrityError(f"{path}: tensor {name!r} runs past end of file")
            params[name] = np.frombuffer(body, dtype="<f4", count=size, offset=pos).reshape(shape).astype(np.float32)
            pos += 4 * size
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise IntegrityError(f"{path}: malformed checkpoint ({exc})") from None
    known = {f.name for f in fields(ModelConfig)}
    config = ModelConfig(**{k: v for k, v in cfg_raw.items() if k in known}).validate()
    vocab = Vocabulary(itos)
    if "embedding" in params and params["embedding"].shape[0] != len(vocab):
        raise IntegrityError(f"{path}: embedding has {params['embedding'].shape[0]} rows "
                             f"but the vocabulary has {len(vocab)} entries")
    return Artifacts(params, config, vocab)
