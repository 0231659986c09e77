"""Pretrained word vectors and the trainable embedding matrix.

Only the word2vec *text* format is read. The binary GoogleNews release can be
converted once offline, e.g. with gensim::

    KeyedVectors.load_word2vec_format(src, binary=True).save_word2vec_format(dst, binary=False)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import PAD_ID, Vocabulary
from .errors import DomainError, ParseError

log = logging.getLogger(__name__)

DEFAULT_OOV_RANGE = 0.25


@dataclass
class PretrainedVectors:
    dim: int
    vectors: dict[str, np.ndarray]

    def __contains__(self, word):
        return word in self.vectors

    def __len__(self):
        return len(self.vectors)


def load_vectors_text(path, restrict_to: Vocabulary | None = None) -> PretrainedVectors:
    """Parse ``count dim`` header followed by ``word v1 ... vD`` lines."""
    wanted = None if restrict_to is None else restrict_to.stoi
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8", errors="replace") as fh:
        header = fh.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise ParseError("expected header 'count dim'", 1)
        dim = int(header[1])
        if dim < 1:
            raise ParseError("dimension must be positive", 1)
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            word = parts[0]
            if len(parts) - 1 != dim:
                raise ParseError(f"word {word!r} has {len(parts) - 1} values, header says {dim}", lineno)
            if wanted is not None and word not in wanted:
                continue
            try:
                vec = np.array(parts[1:], dtype=np.float32)
            except ValueError:
                raise ParseError(f"non-numeric value in vector for {word!r}", lineno) from None
            if not np.all(np.isfinite(vec)):
                raise ParseError(f"non-finite value in vector for {word!r}", lineno)
            if word in vectors:
                log.warning("duplicate vector for %r at line %d; keeping the later one", word, lineno)
            vectors[word] = vec
    return PretrainedVectors(dim, vectors)


def build_embedding_matrix(vocab: Vocabulary, pre: PretrainedVectors | None, oov_range: float = DEFAULT_OOV_RANGE,
                           seed: int = 0, dim: int | None = None):
    """Return (table (V, D) float32, missing tokens).

    Rows for covered words are copied verbatim; the rest are drawn
    i.i.d. from U(-oov_range, oov_range). Row 0 (padding) is zero. With no
    pretrained vectors every row is random at dimension ``dim``.
    """
    if oov_range <= 0:
        raise DomainError("oov_range must be positive")
    if pre is None:
        if dim is None or dim < 1:
            raise DomainError("a positive embedding dim is required without pretrained vectors")
        d = dim
    else:
        d = pre.dim
        if dim is not None and dim != d:
            raise DomainError(f"requested embedding dim {dim} but pretrained vectors have {d}")
    rng = np.random.default_rng(seed)
    table = rng.uniform(-oov_range, oov_range, size=(len(vocab), d)).astype(np.float32)
    missing = []
    for i, word in enumerate(vocab.itos):
        if i < 2:
            continue
        if pre is not None and word in pre.vectors:
            table[i] = pre.vectors[word]
        else:
            missing.append(word)
    table[PAD_ID] = 0.0
    return table, missing


def coverage(vocab: Vocabulary, pre: PretrainedVectors) -> float:
    """Percentage of non-reserved vocabulary tokens with no pretrained vector."""
    words = vocab.words
    if not words:
        raise DomainError("coverage of an empty vocabulary")
    return 100.0 * sum(w not in pre.vectors for w in words) / len(words)


def coverage_report(vocab: Vocabulary, pre: PretrainedVectors) -> str:
    words = vocab.words
    missing = sum(w not in pre.vectors for w in words)
    return "\n".join([
        f"vocabulary_tokens: {len(words)}",
        f"embedding_dim: {pre.dim}",
        f"covered: {len(words) - missing}",
        f"missing: {missing}",
        f"missing_pct: {coverage(vocab, pre):.2f}",
    ])
