"""Headlines corpus: loading, tokenization, vocabulary, splits and statistics."""
from __future__ import annotations

import hashlib
import json
import string
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ParseError

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
DEFAULT_MAX_LEN = 32

_ASCII_PUNCT = set(string.punctuation)


@dataclass(frozen=True)
class HeadlineRecord:
    headline: str
    is_sarcastic: bool
    article_link: str = ""

    def __post_init__(self):
        if not self.headline.strip():
            raise DomainError("headline is empty after trimming")

    @property
    def label(self) -> int:
        return int(self.is_sarcastic)


def load_dataset(path) -> list[HeadlineRecord]:
    """Read the one-JSON-object-per-line corpus file, preserving file order."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict) or "headline" not in obj or "is_sarcastic" not in obj:
                raise ParseError("expected an object with keys is_sarcastic, headline, article_link", lineno)
            label = obj["is_sarcastic"]
            if isinstance(label, bool) or label not in (0, 1):
                raise ParseError(f"is_sarcastic must be 0 or 1, got {label!r}", lineno)
            headline = obj["headline"]
            if not isinstance(headline, str):
                raise ParseError("headline must be a string", lineno)
            try:
                records.append(HeadlineRecord(headline, bool(label), str(obj.get("article_link", ""))))
            except DomainError as exc:
                raise ParseError(str(exc), lineno) from None
    return records


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _is_punct(ch: str) -> bool:
    return ch in _ASCII_PUNCT or unicodedata.category(ch).startswith("P")


def tokenize(headline: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation from token edges.

    Interior characters (apostrophes, hyphens, asterisks, digits) survive.
    """
    tokens = []
    for raw in headline.lower().split():
        lo, hi = 0, len(raw)
        while lo < hi and _is_punct(raw[lo]):
            lo += 1
        while hi > lo and _is_punct(raw[hi - 1]):
            hi -= 1
        if lo < hi:
            tokens.append(raw[lo:hi])
    return tokens


@dataclass
class Vocabulary:
    """Token/id mapping with id 0 reserved for padding and 1 for unknown words."""

    itos: list[str]
    stoi: dict[str, int] = field(init=False)

    def __post_init__(self):
        if self.itos[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise DomainError("vocabulary must start with the reserved padding and unknown tokens")
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise DomainError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    @property
    def words(self) -> list[str]:
        """Non-reserved tokens in id order."""
        return self.itos[2:]


def build_vocabulary(corpus_tokens: Iterable[Iterable[str]], min_count: int = 1) -> Vocabulary:
    """Keep tokens seen at least ``min_count`` times, ordered by (-count, token)."""
    if min_count < 1:
        raise DomainError("min_count must be >= 1")
    counts = Counter()
    for toks in corpus_tokens:
        counts.update(toks)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary([PAD_TOKEN, UNK_TOKEN] + kept)


@dataclass
class SplitIndices:
    train: list[int]
    val: list[int]
    test: list[int]
    seed: int

    def partition(self, name: str) -> list[int]:
        if name not in ("train", "val", "test"):
            raise DomainError(f"unknown partition {name!r}; expected train, val or test")
        return getattr(self, name)


def split_sizes(n: int) -> tuple[int, int, int]:
    # val/test rounded to nearest, train takes the remainder
    n_val = int(np.floor(n * 0.1 + 0.5))
    return n - 2 * n_val, n_val, n_val


def split_dataset(n: int, seed: int) -> SplitIndices:
    """Seeded shuffle of 0..n-1 cut contiguously into 80/10/10."""
    if n < 10:
        raise DomainError(f"need at least 10 records to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n).tolist()
    n_train, n_val, _ = split_sizes(n)
    return SplitIndices(perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:], seed)


def save_split(split: SplitIndices, path, dataset_digest: str = "") -> None:
    """Text manifest: one ``key<TAB>value`` line per field, indices space-separated."""
    lines = [f"seed\t{split.seed}", f"dataset_sha256\t{dataset_digest}"]
    for name in ("train", "val", "test"):
        lines.append(f"{name}\t" + " ".join(map(str, split.partition(name))))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_split(path) -> tuple[SplitIndices, str]:
    fields = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line:
            continue
        key, _, value = line.partition("\t")
        fields[key] = value
    missing = {"seed", "dataset_sha256", "train", "val", "test"} - fields.keys()
    if missing:
        raise ParseError(f"split manifest {path} lacks {sorted(missing)}")
    parts = {k: [int(x) for x in fields[k].split()] for k in ("train", "val", "test")}
    return SplitIndices(seed=int(fields["seed"]), **parts), fields["dataset_sha256"]


def pad_or_truncate(token_ids: Sequence[int], max_len: int, pad_id: int = PAD_ID, record_id=None):
    """Right-pad or cut to ``max_len``; returns (ids, true_length)."""
    if max_len < 1:
        raise DomainError("max_len must be >= 1")
    if len(token_ids) == 0:
        where = "" if record_id is None else f" (record {record_id})"
        raise DomainError(f"empty token sequence{where}")
    ids = list(token_ids[:max_len])
    length = len(ids)
    return ids + [pad_id] * (max_len - length), length


@dataclass
class EncodedData:
    """Fixed-width id matrix plus true lengths and labels for a set of records."""

    ids: np.ndarray      # (n, max_len) int64
    lengths: np.ndarray  # (n,) int64
    labels: np.ndarray   # (n,) int64
    record_ids: np.ndarray

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "EncodedData":
        idx = np.asarray(idx, dtype=np.int64)
        return EncodedData(self.ids[idx], self.lengths[idx], self.labels[idx], self.record_ids[idx])


def encode_records(records: Sequence[HeadlineRecord], vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN,
                   record_ids=None) -> EncodedData:
    if record_ids is None:
        record_ids = range(len(records))
    record_ids = list(record_ids)
    ids = np.zeros((len(records), max_len), dtype=np.int64)
    lengths = np.zeros(len(records), dtype=np.int64)
    for row, (rid, rec) in enumerate(zip(record_ids, records)):
        padded, n = pad_or_truncate(vocab.encode(tokenize(rec.headline)), max_len, record_id=rid)
        ids[row] = padded
        lengths[row] = n
    labels = np.array([r.label for r in records], dtype=np.int64)
    return EncodedData(ids, lengths, labels, np.array(record_ids, dtype=np.int64))


@dataclass
class DatasetStats:
    records: int
    sarcastic: int
    non_sarcastic: int
    vocab_size: int
    missing_embedding_pct: float | None = None

    def report(self) -> str:
        rows = [
            ("# Records", f"{self.records:,}"),
            ("# Sarcastic records", f"{self.sarcastic:,}"),
            ("# Non-sarcastic records", f"{self.non_sarcastic:,}"),
            ("# Vocabulary tokens", f"{self.vocab_size:,}"),
        ]
        if self.missing_embedding_pct is not None:
            rows.append(("% word embeddings not available", f"{self.missing_embedding_pct:.2f}"))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def dataset_stats(records: Sequence[HeadlineRecord], vocabulary: Vocabulary,
                  embedding_vocab=None) -> DatasetStats:
    sarcastic = sum(r.is_sarcastic for r in records)
    missing = None
    if embedding_vocab is not None:
        words = vocabulary.words
        missing = 100.0 * sum(w not in embedding_vocab for w in words) / len(words) if words else 100.0
    return DatasetStats(len(records), sarcastic, len(records) - sarcastic, len(vocabulary.words), missing)


def load_stopwords() -> frozenset[str]:
    text = resources.files("sarcnet").joinpath("resources/stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def class_word_frequencies(records: Sequence[HeadlineRecord], top_k: int, stopwords=None):
    """Top-k (token, count) lists for sarcastic and non-sarcastic headlines."""
    if top_k < 1:
        raise DomainError("top_k must be >= 1")
    if stopwords is None:
        stopwords = load_stopwords()
    counts = {True: Counter(), False: Counter()}
    for rec in records:
        counts[rec.is_sarcastic].update(t for t in tokenize(rec.headline) if t not in stopwords)

    def ranked(c):
        return sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]

    return ranked(counts[True]), ranked(counts[False])
