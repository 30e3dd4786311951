"""fastText-style linear style classifier used as the external adversary.

A sentence is represented by the mean of its unigram vectors and hashed
bigram vectors; a linear layer and softmax give the style distribution.
Training is plain SGD on softmax cross-entropy with the learning rate
decayed linearly to zero over all updates, as fastText does.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import container

KIND = "adversary"
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


@dataclass
class AdversaryConfig:
    dim: int = 100
    ngrams: Tuple[int, ...] = (1, 2)
    buckets: int = 1_000_000
    lr: float = 0.01
    epochs: int = 20
    seed: int = 0
    linear_decay: bool = True

    def __post_init__(self):
        self.ngrams = tuple(self.ngrams)
        if self.buckets < 1:
            raise ValueError("bucket count must be >= 1")
        if not self.ngrams or any(n not in (1, 2) for n in self.ngrams):
            raise ValueError("n-gram orders must be a non-empty subset of {1, 2}")
        if self.dim < 1 or self.epochs < 1 or self.lr <= 0:
            raise ValueError("dim, epochs and lr must be positive")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class Features:
    unigrams: np.ndarray
    buckets: np.ndarray

    def __len__(self):
        return len(self.unigrams) + len(self.buckets)


def featurize(tokens: Sequence[str], word_index: Dict[str, int], cfg: AdversaryConfig) -> Features:
    """Unigram ids (known words only) and bigram hash buckets for one sentence."""
    uni = [word_index[t] for t in tokens if t in word_index] if 1 in cfg.ngrams else []
    bi = []
    if 2 in cfg.ngrams:
        bi = [fnv1a_64(f"{a} {b}".encode("utf-8")) % cfg.buckets for a, b in zip(tokens, tokens[1:])]
    return Features(np.array(uni, dtype=np.int64), np.array(bi, dtype=np.int64))


class AdversaryModel:
    def __init__(self, cfg: AdversaryConfig, words: Sequence[str], classes: Sequence[str]):
        self.cfg = cfg
        self.words = list(words)
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.classes = list(classes)
        rng = np.random.default_rng(cfg.seed)
        bound = 1.0 / cfg.dim
        self.unigram = rng.uniform(-bound, bound, (len(self.words), cfg.dim)).astype(np.float32)
        self.bucket = rng.uniform(-bound, bound, (cfg.buckets if 2 in cfg.ngrams else 0, cfg.dim)).astype(np.float32)
        self.output = np.zeros((cfg.dim, len(self.classes)), dtype=np.float32)

    def features(self, tokens) -> Features:
        return featurize(tokens, self.word_index, self.cfg)

    def hidden(self, f: Features) -> np.ndarray:
        n = len(f)
        if n == 0:
            return np.zeros(self.cfg.dim, dtype=np.float32)
        return (self.unigram[f.unigrams].sum(0) + self.bucket[f.buckets].sum(0)) / n

    def predict_proba(self, tokens) -> np.ndarray:
        z = self.hidden(self.features(tokens)) @ self.output
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def predict(self, sentences: Sequence[Sequence[str]]) -> List[str]:
        return [self.classes[int(np.argmax(self.predict_proba(s)))] for s in sentences]

    def save(self, path) -> None:
        meta = {"config": asdict(self.cfg), "words": self.words, "classes": self.classes}
        container.save(path, meta, {"unigram": self.unigram, "bucket": self.bucket,
                                    "output": self.output}, KIND)

    @classmethod
    def load(cls, path) -> "AdversaryModel":
        meta, arrays = container.load(path, KIND)
        cfg = AdversaryConfig.from_dict(meta["config"])
        m = cls.__new__(cls)
        m.cfg, m.words, m.classes = cfg, meta["words"], meta["classes"]
        m.word_index = {w: i for i, w in enumerate(m.words)}
        m.unigram, m.bucket, m.output = arrays["unigram"], arrays["bucket"], arrays["output"]
        return m


def train_adversary(sentences: Sequence[Sequence[str]], labels: Sequence[str],
                    cfg: AdversaryConfig) -> AdversaryModel:
    if len(sentences) != len(labels):
        raise ValueError("sentences and labels differ in length")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("adversary training needs at least two classes")
    words = sorted({t for s in sentences for t in s})
    model = AdversaryModel(cfg, words, classes)
    cls_index = {c: i for i, c in enumerate(classes)}
    feats = [model.features(s) for s in sentences]
    y = np.array([cls_index[l] for l in labels])
    rng = np.random.default_rng(cfg.seed)
    total = cfg.epochs * len(feats)
    step = 0
    for _ in range(cfg.epochs):
        for i in rng.permutation(len(feats)):
            lr = cfg.lr * (1.0 - step / total) if cfg.linear_decay else cfg.lr
            step += 1
            f = feats[i]
            n = len(f)
            if n == 0:
                continue
            h = model.hidden(f)
            z = h @ model.output
            p = np.exp(z - z.max())
            p /= p.sum()
            p[y[i]] -= 1.0
            grad_h = model.output @ p
            model.output -= lr * np.outer(h, p).astype(np.float32)
            # each input row receives the hidden gradient divided by the bag size
            g = (lr / n) * grad_h
            np.subtract.at(model.unigram, f.unigrams, g)
            np.subtract.at(model.bucket, f.buckets, g)
    return model


def accuracy(model: AdversaryModel, sentences: Sequence[Sequence[str]], labels: Sequence[str]) -> float:
    if not sentences:
        raise ValueError("accuracy needs a non-empty evaluation set")
    preds = model.predict(sentences)
    return float(np.mean([p == l for p, l in zip(preds, labels)]))
