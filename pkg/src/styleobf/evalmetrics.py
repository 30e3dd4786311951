"""Automatic evaluation: corpus BLEU-4, METEOR-lite, Word Mover's Distance, delta accuracy."""
from __future__ import annotations

import json
import math
from collections import Counter, deque
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from nltk.stem.porter import PorterStemmer

Tokens = Sequence[str]


class UndefinedDistance(ValueError):
    """Raised when a sentence has no token covered by the embedding store."""


# -- BLEU -------------------------------------------------------------------
def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(candidate: Tokens, reference: Tokens, n: int) -> Fraction:
    """Clipped n-gram precision of one candidate against one reference."""
    cand = _ngrams(candidate, n)
    total = sum(cand.values())
    if total == 0:
        return Fraction(0)
    ref = _ngrams(reference, n)
    return Fraction(sum(min(c, ref[g]) for g, c in cand.items()), total)


def bleu4(candidates: Sequence[Tokens], references: Sequence[Tokens], smooth: bool = False) -> float:
    """Corpus BLEU-4 (single reference per segment) on a 0-100 scale.

    With ``smooth`` the 2..4-gram counts get add-one smoothing; otherwise any
    zero precision makes the score 0.
    """
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise ValueError("BLEU of an empty corpus is undefined")
    hits = [0] * 4
    totals = [0] * 4
    c_len = r_len = 0
    for cand, ref in zip(candidates, references):
        c_len += len(cand)
        r_len += len(ref)
        for n in range(1, 5):
            cg, rg = _ngrams(cand, n), _ngrams(ref, n)
            hits[n - 1] += sum(min(c, rg[g]) for g, c in cg.items())
            totals[n - 1] += sum(cg.values())
    if c_len == 0:
        return 0.0
    log_p = 0.0
    for n in range(4):
        h, t = hits[n], totals[n]
        if smooth and n > 0:
            h, t = h + 1, t + 1
        if h == 0 or t == 0:
            return 0.0
        log_p += math.log(h / t) / 4
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return 100.0 * bp * math.exp(log_p)


# -- METEOR-lite ------------------------------------------------------------
_stemmer = PorterStemmer()


def _stem(token: str) -> str:
    return _stemmer.stem(token.lower())


def align(candidate: Tokens, reference: Tokens) -> List[Tuple[int, int]]:
    """Exact-then-stem unigram alignment as sorted (cand_pos, ref_pos) pairs.

    Each stage matches as many unaligned tokens as possible; among equal
    keys it prefers the reference position that extends the previous
    candidate token's chunk, then the earliest one.
    """
    pairs: Dict[int, int] = {}
    used: set = set()
    for key in (lambda t: t, _stem):
        ref_keys = [key(t) for t in reference]
        for i, tok in enumerate(candidate):
            if i in pairs:
                continue
            k = key(tok)
            free = [j for j, rk in enumerate(ref_keys) if rk == k and j not in used]
            if not free:
                continue
            want = pairs.get(i - 1, -2) + 1
            j = want if want in free else free[0]
            pairs[i] = j
            used.add(j)
    return sorted(pairs.items())


def count_chunks(alignment: Sequence[Tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in alignment:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_lite(candidate: Tokens, reference: Tokens) -> float:
    """METEOR with exact and Porter-stem stages, classic parameters, 0-100 scale."""
    alignment = align(candidate, reference)
    m = len(alignment)
    if m == 0:
        return 0.0
    p, r = m / len(candidate), m / len(reference)
    f = 10 * p * r / (r * 9 + p)
    penalty = 0.5 * (count_chunks(alignment) / m) ** 3
    return 100.0 * f * (1 - penalty)


# -- embeddings and WMD -----------------------------------------------------
class EmbeddingStore:
    """Token to vector map; tokens not in the store are skipped by callers."""

    def __init__(self, vectors: Dict[str, np.ndarray]):
        dims = {np.asarray(v).shape for v in vectors.values()}
        if len(dims) > 1:
            raise ValueError(f"embedding vectors disagree on shape: {sorted(dims)}")
        self.vectors = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
        self.dim = dims.pop()[0] if dims else 0

    def __contains__(self, token) -> bool:
        return token in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def __getitem__(self, token) -> np.ndarray:
        return self.vectors[token]

    @classmethod
    def load(cls, path) -> "EmbeddingStore":
        """Read word2vec text format, with or without the ``count dim`` header."""
        vectors = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").split(" ")
                if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                    continue
                if len(parts) < 2:
                    continue
                try:
                    vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: bad vector: {exc}") from None
        return cls(vectors)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self)} {self.dim}\n")
            for tok, vec in self.vectors.items():
                fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")

    @classmethod
    def random(cls, tokens, dim: int = 16, seed: int = 0) -> "EmbeddingStore":
        rng = np.random.default_rng(seed)
        return cls({t: rng.standard_normal(dim) for t in sorted(set(tokens))})


@dataclass
class TransportPlan:
    flow: np.ndarray
    source: np.ndarray
    target: np.ndarray
    cost: float


def nbow(tokens: Tokens, store: EmbeddingStore):
    """Unique embeddable tokens, their normalised counts, and their vectors."""
    counts = Counter(t for t in tokens if t in store)
    if not counts:
        raise UndefinedDistance("no token of the sentence is in the embedding store")
    words = sorted(counts)
    w = np.array([counts[t] for t in words], dtype=np.float64)
    return words, w / w.sum(), np.stack([store[t] for t in words])


def _northwest(a: np.ndarray, b: np.ndarray):
    m, n = len(a), len(b)
    flow = np.zeros((m, n))
    basis = []
    a, b = a.copy(), b.copy()
    i = j = 0
    while i < m and j < n:
        q = min(a[i], b[j])
        flow[i, j] = q
        basis.append((i, j))
        a[i] -= q
        b[j] -= q
        # advance exactly one index so the basis stays a spanning tree of m+n-1 cells
        if (a[i] <= b[j] and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1
    return flow, basis


def transport(a: np.ndarray, b: np.ndarray, cost: np.ndarray, tol: float = 1e-12,
              max_iter: int | None = None) -> TransportPlan:
    """Exact balanced transportation problem by the transportation simplex (MODI).

    Starts from the northwest-corner basis and pivots on the most negative
    reduced cost until none is below ``-tol``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    m, n = cost.shape
    if a.shape != (m,) or b.shape != (n,):
        raise ValueError("marginals do not match the cost matrix")
    if abs(a.sum() - b.sum()) > 1e-9:
        raise ValueError("transportation problem is unbalanced")
    flow, basis = _northwest(a, b)
    max_iter = max_iter or 100 * (m + n) ** 2
    for _ in range(max_iter):
        # potentials from the basis tree: u_i + v_j = C_ij on basic cells
        adj: List[List[Tuple[int, int]]] = [[] for _ in range(m + n)]
        for i, j in basis:
            adj[i].append((m + j, 0))
            adj[m + j].append((i, 0))
        pot = np.full(m + n, np.nan)
        pot[0] = 0.0
        queue = deque([0])
        while queue:
            x = queue.popleft()
            for y, _ in adj[x]:
                if np.isnan(pot[y]):
                    i, j = (x, y - m) if x < m else (y, x - m)
                    pot[y] = cost[i, j] - pot[x]
                    queue.append(y)
        reduced = cost - pot[:m, None] - pot[None, m:]
        ei, ej = np.unravel_index(int(np.argmin(reduced)), reduced.shape)
        if reduced[ei, ej] >= -tol:
            break
        # path in the tree from column node ej back to row node ei
        parent = {m + ej: None}
        queue = deque([m + ej])
        while queue and ei not in parent:
            x = queue.popleft()
            for y, _ in adj[x]:
                if y not in parent:
                    parent[y] = x
                    queue.append(y)
        path = []
        x = ei
        while parent[x] is not None:
            y = parent[x]
            path.append((x, y - m) if x < m else (y, x - m))
            x = y
        # path runs row ei -> ... -> column ej; signs alternate starting with '-'
        minus = path[0::2]
        plus = path[1::2]
        theta_cell = min(minus, key=lambda c: (flow[c], c))
        theta = flow[theta_cell]
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[ei, ej] += theta
        basis.remove(theta_cell)
        basis.append((int(ei), int(ej)))
        flow[theta_cell] = 0.0
    else:
        raise RuntimeError("transportation simplex did not converge")
    flow = np.maximum(flow, 0.0)
    return TransportPlan(flow, a, b, float((flow * cost).sum()))


def wmd_plan(a: Tokens, b: Tokens, store: EmbeddingStore) -> TransportPlan:
    _, wa, xa = nbow(a, store)
    _, wb, xb = nbow(b, store)
    cost = np.linalg.norm(xa[:, None, :] - xb[None, :, :], axis=-1)
    plan = transport(wa, wb, cost)
    if not (np.allclose(plan.flow.sum(1), wa, atol=1e-9) and np.allclose(plan.flow.sum(0), wb, atol=1e-9)):
        raise AssertionError("transport plan violates its marginals")
    centroid = float(np.linalg.norm(wa @ xa - wb @ xb))
    if plan.cost < centroid - 1e-9:
        raise AssertionError(f"WMD {plan.cost} below centroid bound {centroid}")
    return plan


def wmd(a: Tokens, b: Tokens, store: EmbeddingStore) -> float:
    return wmd_plan(a, b, store).cost


# -- adversary accuracy -------------------------------------------------------
def delta_accuracy(accuracy: float, p: float) -> float:
    if not (0 <= accuracy <= 1 and 0 <= p <= 1):
        raise ValueError("accuracy and chance baseline must lie in [0, 1]")
    return accuracy - p


def majority_baseline(labels: Sequence[str]) -> float:
    if not labels:
        raise ValueError("no labels")
    return Counter(labels).most_common(1)[0][1] / len(labels)


@dataclass
class EvalReport:
    bleu_src: float
    meteor_src: float
    bleu_tgt: Optional[float] = None
    meteor_tgt: Optional[float] = None
    wmd: Optional[float] = None
    wmd_pairs: int = 0
    wmd_excluded: int = 0
    oov_rate: Optional[float] = None
    adversary_acc: Optional[float] = None
    chance: Optional[float] = None
    delta_acc: Optional[float] = None
    ppl: Optional[float] = None
    sentences: List[dict] = field(default_factory=list)

    COLUMNS = ("BLEU<-", "MTR<-", "BLEU->", "MTR->", "WMD", "dACC", "PPL")

    def row(self) -> List[Optional[float]]:
        d = None if self.delta_acc is None else 100 * self.delta_acc
        return [self.bleu_src, self.meteor_src, self.bleu_tgt, self.meteor_tgt, self.wmd, d, self.ppl]

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("sentences")
        return d

    def to_json(self, per_sentence: bool = True) -> str:
        d = asdict(self) if per_sentence else self.summary()
        return json.dumps(d, sort_keys=True, indent=1)


def format_table(rows: Sequence[Tuple[str, EvalReport]], sep: str = " | ") -> str:
    """Table with one line per system in BLEU/METEOR/WMD/dACC layout; '-' marks absent fields."""
    def cell(x, w):
        return "-".rjust(w) if x is None else f"{x:.2f}".rjust(w)
    name_w = max([len("system")] + [len(n) for n, _ in rows])
    head = sep.join(["system".ljust(name_w)] + [c.rjust(7) for c in EvalReport.COLUMNS])
    lines = [head, "-" * len(head)]
    for name, rep in rows:
        lines.append(sep.join([name.ljust(name_w)] + [cell(x, 7) for x in rep.row()]))
    return "\n".join(lines)


def evaluate(outputs: Sequence[Tokens], sources: Sequence[Tokens], targets: Sequence[Tokens] | None = None,
             adversary=None, labels: Sequence[str] | None = None, store: EmbeddingStore | None = None,
             chance: float | None = None, ppl: float | None = None) -> EvalReport:
    """Score system outputs against sources (and targets when given).

    ``labels`` are the source styles the adversary tries to recover from the
    outputs; ``chance`` defaults to their majority baseline.
    """
    n = len(outputs)
    if len(sources) != n or (targets is not None and len(targets) != n) or (
            labels is not None and len(labels) != n):
        raise ValueError("outputs, sources, targets and labels must be aligned")
    if n == 0:
        raise ValueError("nothing to evaluate")
    outputs = [list(o) for o in outputs]
    sent = [{"meteor_src": meteor_lite(o, s) if o else 0.0} for o, s in zip(outputs, sources)]
    rep = EvalReport(bleu_src=bleu4(outputs, sources),
                     meteor_src=float(np.mean([d["meteor_src"] for d in sent])), ppl=ppl)
    if targets is not None:
        rep.bleu_tgt = bleu4(outputs, targets)
        for d, o, t in zip(sent, outputs, targets):
            d["meteor_tgt"] = meteor_lite(o, t) if o else 0.0
        rep.meteor_tgt = float(np.mean([d["meteor_tgt"] for d in sent]))
    if store is not None:
        dists = []
        seen = oov = 0
        for d, o, s in zip(sent, outputs, sources):
            seen += len(o) + len(s)
            oov += sum(t not in store for t in o) + sum(t not in store for t in s)
            try:
                d["wmd"] = wmd(o, s, store)
                dists.append(d["wmd"])
            except UndefinedDistance:
                d["wmd"] = None
        rep.wmd = float(np.mean(dists)) if dists else None
        rep.wmd_pairs, rep.wmd_excluded = len(dists), n - len(dists)
        rep.oov_rate = oov / seen if seen else 0.0
    if adversary is not None:
        if labels is None:
            raise ValueError("adversary accuracy needs source style labels")
        preds = adversary.predict(outputs)
        for d, p in zip(sent, preds):
            d["adversary"] = p
        rep.adversary_acc = float(np.mean([p == l for p, l in zip(preds, labels)]))
        rep.chance = majority_baseline(labels) if chance is None else chance
        rep.delta_acc = delta_accuracy(rep.adversary_acc, rep.chance)
    rep.sentences = sent
    return rep
