"""Synthetic verse-keyed corpora for desk-scale runs.

Each verse is a random sentence over a small content lexicon. Every style
rewrites a fixed subset of the lexicon into style-specific variants and
adds its own function word, which gives the adversary something lexical to
latch on to while keeping the styles parallel.
"""
from __future__ import annotations

from typing import List, Sequence

import numpy as np

from .textdata import VerseRecord

NOUNS = ["king", "land", "city", "house", "son", "people", "water", "gold", "lord", "man",
         "stone", "fire", "day", "field", "sheep", "bread", "tree", "sea", "mountain", "gate"]
VERBS = ["made", "took", "gave", "saw", "went", "said", "built", "kept", "sent", "found"]
ADJS = ["great", "holy", "strong", "young", "old", "dry", "good", "wide"]
STYLE_NAMES = ["BBE", "KJV", "YLT", "DBY", "ASV"]


def _sentence(rng: np.random.Generator) -> List[str]:
    n_clauses = 1 + int(rng.random() < 0.4)
    words: List[str] = []
    for c in range(n_clauses):
        if c:
            words.append("and")
        words += ["the"]
        if rng.random() < 0.5:
            words.append(str(rng.choice(ADJS)))
        words += [str(rng.choice(NOUNS)), str(rng.choice(VERBS)), "the", str(rng.choice(NOUNS))]
    words.append(".")
    return words


def _rewrite(tokens: Sequence[str], style_index: int, name: str) -> List[str]:
    out = []
    for t in tokens:
        h = sum(map(ord, t)) + 7 * style_index
        out.append(f"{t}{name.lower()}" if t.isalpha() and t != "the" and h % 3 == 0 else t)
    return [name.lower() + "ly"] + out if style_index % 2 else out


def parallel_corpus(n_verses: int, n_styles: int = 3, seed: int = 0) -> List[VerseRecord]:
    if not 2 <= n_styles <= len(STYLE_NAMES):
        raise ValueError(f"n_styles must be in [2, {len(STYLE_NAMES)}]")
    rng = np.random.default_rng(seed)
    records = []
    for v in range(n_verses):
        base = _sentence(rng)
        key = f"Gen {v // 20 + 1}:{v % 20 + 1}"
        for s, name in enumerate(STYLE_NAMES[:n_styles]):
            records.append(VerseRecord(key, name, tuple(_rewrite(base, s, name))))
    return records


def marker_corpus(n_sentences: int, n_styles: int = 2, seed: int = 0,
                  length=(4, 7), lexicon: int = 30) -> List[VerseRecord]:
    """Non-parallel corpus where the only style signal is one marker token per sentence.

    Content tokens are drawn independently of style; the marker (``<m0>``,
    ``<m1>``...) sits at a random position.
    """
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(lexicon)]
    records = []
    for i in range(n_sentences):
        s = i % n_styles
        n = int(rng.integers(length[0], length[1] + 1))
        toks = [str(w) for w in rng.choice(words, size=n)]
        toks.insert(int(rng.integers(0, n + 1)), f"<m{s}>")
        records.append(VerseRecord(f"s{i}", f"style{s}", tuple(toks)))
    return records
