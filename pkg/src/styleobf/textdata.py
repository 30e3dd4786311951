"""Corpus ingestion: tokenization, vocabularies, verse-keyed pairing and splits.

The corpus format is a UTF-8 TSV with one record per line::

    verse_key<TAB>style_name<TAB>text

Records sharing a verse key are translations of the same verse in different
styles. Sequence-to-sequence pairs are every ordered combination of two
distinct styles under one key; autoencoder examples map a record onto itself.
"""
from __future__ import annotations

import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

log = logging.getLogger(__name__)

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
RESERVED = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = range(4)

PUNCT = ".,;:!?'\"()—"
_TOKEN_RE = re.compile(r"[^\s{p}]+|[{p}]".format(p=re.escape(PUNCT)))
_NO_SPACE_BEFORE = set(".,;:!?)")
_NO_SPACE_AFTER = set("(")


class IngestionError(ValueError):
    """Malformed corpus input."""


def tokenize(text: str) -> List[str]:
    """Whitespace split with punctuation detached into separate tokens.

    >>> tokenize("For the strong town is without men,")
    ['For', 'the', 'strong', 'town', 'is', 'without', 'men', ',']
    """
    return _TOKEN_RE.findall(text)


def detokenize(tokens: Sequence[str]) -> str:
    out = []
    for tok in tokens:
        if out and (tok in _NO_SPACE_BEFORE or out[-1] in _NO_SPACE_AFTER):
            out[-1] += tok
        else:
            out.append(tok)
    return " ".join(out)


def style_token(style: str) -> str:
    return f"<2{style}>"


@dataclass(frozen=True)
class StyleId:
    name: str
    index: int


class StyleInventory:
    """Ordered set of style names with dense indices."""

    def __init__(self, names: Iterable[str]):
        self.names: List[str] = []
        for n in names:
            if n in self.names:
                raise ValueError(f"duplicate style name {n!r}")
            self.names.append(n)

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown style {name!r}") from None

    def __getitem__(self, name: str) -> StyleId:
        return StyleId(name, self.index(name))


@dataclass(frozen=True)
class VerseRecord:
    key: str
    style: str
    tokens: Tuple[str, ...]

    def __post_init__(self):
        if not self.key:
            raise IngestionError("empty verse key")
        if not self.tokens:
            raise IngestionError(f"empty token sequence for verse {self.key!r}")


@dataclass(frozen=True)
class PairExample:
    key: str
    source: Tuple[str, ...]
    target: Tuple[str, ...]
    source_style: str
    target_style: str


class Vocab:
    """Token/index bijection with reserved symbols at the lowest indices.

    Layout: PAD, UNK, BOS, EOS, one ``<2style>`` token per style, then corpus
    tokens by descending frequency (ties broken alphabetically).
    """

    def __init__(self, tokens: Sequence[str], styles: Sequence[str]):
        self.itos: List[str] = list(tokens)
        self.stoi: Dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("vocabulary contains duplicate tokens")
        if tuple(self.itos[:4]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.styles = list(styles)
        for i, s in enumerate(self.styles):
            if self.itos[4 + i] != style_token(s):
                raise ValueError(f"style token for {s!r} missing from reserved block")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, tok):
        return tok in self.stoi

    @property
    def num_reserved(self) -> int:
        return 4 + len(self.styles)

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int], strip: bool = True) -> List[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip and i == EOS_ID:
                break
            if strip and i in (PAD_ID, BOS_ID):
                continue
            out.append(self.itos[i])
        return out

    def style_token_id(self, style: str) -> int:
        return self.stoi[style_token(style)]

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        tokens = Path(path).read_text(encoding="utf-8").split("\n")[:-1]
        styles = []
        for t in tokens[4:]:
            m = re.fullmatch(r"<2(.+)>", t)
            if not m:
                break
            styles.append(m.group(1))
        return cls(tokens, styles)


def build_vocab(records: Iterable[VerseRecord], min_count: int = 1,
                styles: Sequence[str] | None = None) -> Vocab:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter = Counter()
    seen_styles: List[str] = []
    for r in records:
        counts.update(r.tokens)
        if r.style not in seen_styles:
            seen_styles.append(r.style)
    if not counts:
        log.warning("building vocabulary from an empty corpus")
    styles = list(styles) if styles is not None else seen_styles
    reserved = list(RESERVED) + [style_token(s) for s in styles]
    taken = set(reserved)
    kept = sorted((t for t, c in counts.items() if c >= min_count and t not in taken),
                  key=lambda t: (-counts[t], t))
    return Vocab(reserved + kept, styles)


def read_corpus(path, pretokenized: bool = False) -> List[VerseRecord]:
    """Read the TSV corpus format; raises :class:`IngestionError` with a line number."""
    records = []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise IngestionError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            key, style, text = parts
            toks = tuple(text.split(" ") if pretokenized else tokenize(text))
            toks = tuple(t for t in toks if t)
            if not key or not style:
                raise IngestionError(f"{path}:{lineno}: empty verse key or style")
            if not toks:
                raise IngestionError(f"{path}:{lineno}: no tokens in text")
            records.append(VerseRecord(key, style, toks))
    return records


def write_corpus(path, records: Iterable[VerseRecord], extra: Iterable[str] | None = None) -> None:
    """Write records as TSV; ``extra`` appends one more column per line."""
    extra = list(extra) if extra is not None else None
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, r in enumerate(records):
            row = [r.key, r.style, " ".join(r.tokens)]
            if extra is not None:
                row.append(extra[i])
            fh.write("\t".join(row) + "\n")


def group_by_key(records: Iterable[VerseRecord]) -> Dict[str, Dict[str, VerseRecord]]:
    groups: Dict[str, Dict[str, VerseRecord]] = {}
    for r in records:
        g = groups.setdefault(r.key, {})
        if r.style in g:
            raise IngestionError(f"verse key {r.key!r} has more than one record for style {r.style!r}")
        g[r.style] = r
    return groups


def make_pairs(records: Iterable[VerseRecord] | Dict[str, Dict[str, VerseRecord]]) -> List[PairExample]:
    """All ordered (source, target) pairs of distinct styles within each verse key."""
    groups = records if isinstance(records, dict) else group_by_key(records)
    pairs = []
    for key, g in groups.items():
        for s in g:
            for t in g:
                if s != t:
                    pairs.append(PairExample(key, g[s].tokens, g[t].tokens, s, t))
    return pairs


def make_ae_examples(records: Iterable[VerseRecord]) -> List[PairExample]:
    return [PairExample(r.key, r.tokens, r.tokens, r.style, r.style) for r in records]


@dataclass
class DataSplit:
    train: list
    dev: list
    test: list
    fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    keys: Dict[str, List[str]] = field(default_factory=dict)

    def partitions(self):
        return {"train": self.train, "dev": self.dev, "test": self.test}


def split_keys(keys: Iterable[str], fractions=(0.8, 0.1, 0.1), seed: int = 0) -> Dict[str, List[str]]:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    uniq = sorted(set(keys))
    n = len(uniq)
    if n < 3:
        raise ValueError(f"need at least 3 verse keys to split, got {n}")
    counts = [int(np.floor(f * n + 1e-9)) for f in fractions]
    counts[0] += n - sum(counts)
    for i in (1, 2):
        while counts[i] < 1:
            j = int(np.argmax(counts))
            counts[j] -= 1
            counts[i] += 1
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [uniq[i] for i in order]
    a, b = counts[0], counts[0] + counts[1]
    return {"train": sorted(shuffled[:a]), "dev": sorted(shuffled[a:b]), "test": sorted(shuffled[b:])}


def split(examples: Sequence, fractions=(0.8, 0.1, 0.1), seed: int = 0,
          keys: Dict[str, List[str]] | None = None) -> DataSplit:
    """Partition examples by verse key so no key crosses partitions."""
    keys = keys or split_keys((e.key for e in examples), fractions, seed)
    where = {k: part for part, ks in keys.items() for k in ks}
    parts = defaultdict(list)
    for e in examples:
        parts[where[e.key]].append(e)
    ds = DataSplit(parts["train"], parts["dev"], parts["test"], tuple(fractions), keys)
    check_disjoint(ds)
    return ds


def check_disjoint(ds: DataSplit) -> None:
    sets = {name: {e.key for e in part} for name, part in ds.partitions().items()}
    for a, b in (("train", "dev"), ("train", "test"), ("dev", "test")):
        both = sets[a] & sets[b]
        if both:
            raise AssertionError(f"verse keys shared between {a} and {b}: {sorted(both)[:5]}")
