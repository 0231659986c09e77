"""Synthetic headline corpus used when the published dataset is not at hand.

Two kinds of records are mixed:

* lexical records, whose label follows from class-specific vocabulary that a
  bag of n-grams can pick up;
* incongruity records, which contain one upbeat phrase and one grim phrase
  separated by filler. They are sarcastic when the upbeat phrase comes first.
  Both orders use identical words and identical local contexts, so only a
  model that sees ordering across the gap can separate them.

A fraction of labels is flipped to keep the task noisy.
"""
from __future__ import annotations

import json

import numpy as np

from .data import HeadlineRecord

UPBEAT = ["excited for", "proudly unveils", "celebrates", "thrilled about", "warmly welcomes",
          "cheerfully announces", "can't wait for", "applauds", "honors", "eagerly awaits"]
GRIM = ["oppressing other people", "mass layoffs", "crumbling infrastructure", "record drought",
        "tax fraud scandal", "hostile takeover", "rising rent", "failed harvest", "toxic spill",
        "budget cuts"]
SUBJECTS = ["nation", "local man", "area woman", "congress", "city council", "report", "ceo",
            "family", "study", "senator", "neighborhood", "school board", "mayor", "company"]
FILLER = ["during", "amid", "after", "following", "despite", "ahead of", "in wake of", "throughout",
          "over", "weeks of", "another round of", "this year's", "new", "latest", "annual", "local"]
SARCASTIC_LEXICON = ["area", "just", "totally", "somehow", "still", "nation's", "finally", "really"]
SINCERE_LEXICON = ["reports", "announces", "officials", "says", "update", "according", "analysis", "week"]


def _phrase(rng, words):
    return words[rng.integers(len(words))]


def _filler(rng, lo=2, hi=4):
    return " ".join(_phrase(rng, FILLER) for _ in range(rng.integers(lo, hi + 1)))


def generate_corpus(n: int, seed: int = 0, incongruity_share: float = 0.5,
                    noise: float = 0.05) -> list[HeadlineRecord]:
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        label = bool(rng.integers(2))
        subject = _phrase(rng, SUBJECTS)
        if rng.random() < incongruity_share:
            up, grim = _phrase(rng, UPBEAT), _phrase(rng, GRIM)
            first, second = (up, grim) if label else (grim, up)
            # every phrase is surrounded by filler from one distribution so that
            # no local window reveals which phrase came first
            tail = f" {_filler(rng, 1, 2)}" if rng.random() < 0.5 else ""
            text = f"{subject} {_filler(rng, 1, 2)} {first} {_filler(rng)} {second}{tail}"
        else:
            lexicon = SARCASTIC_LEXICON if label else SINCERE_LEXICON
            cue = _phrase(rng, lexicon)
            words = [subject, cue, _filler(rng, 1, 3), _phrase(rng, UPBEAT + GRIM)]
            text = " ".join(words)
        if rng.random() < noise:
            label = not label
        records.append(HeadlineRecord(text, label, f"synthetic://{i}"))
    return records


def write_corpus(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps({"article_link": r.article_link, "headline": r.headline,
                                 "is_sarcastic": int(r.is_sarcastic)}) + "\n")
