"""Generation: beam search, greedy decoding and context-vector noise."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .autodiff import Tensor, log_softmax, no_grad
from .seqmodel import ConfigError, EncoderOutput, Seq2Seq, source_ids
from .textdata import BOS_ID, EOS_ID, PAD_ID, detokenize


@dataclass
class BeamHypothesis:
    tokens: tuple
    logprob: float
    finished: bool = False

    def score(self, normalize: bool = True) -> float:
        if normalize and self.tokens:
            return self.logprob / len(self.tokens)
        return self.logprob


@dataclass
class SearchResult:
    tokens: List[int]     # emitted ids, including the final EOS when finished
    logprob: float
    score: float
    truncated: bool

    @property
    def content(self) -> List[int]:
        return self.tokens[:-1] if self.tokens and not self.truncated else list(self.tokens)


class ModelStepper:
    """Adapts a :class:`Seq2Seq` decoder to the stepping interface beam search uses.

    The state is the decoder LSTM state with one row per live hypothesis.
    """

    def __init__(self, model: Seq2Seq, enc: EncoderOutput, context: Optional[np.ndarray] = None,
                 style_id: Optional[int] = None):
        self.model = model
        self.enc = enc
        self.context = context if context is not None else (
            None if enc.context is None else enc.context.data)
        self.style = None if style_id is None else int(style_id)
        self.keys = model.attention_keys(enc)

    def initial(self):
        return self.model.initial_state(1)

    def step(self, state, prev_ids):
        n = len(prev_ids)
        enc = self.enc
        if enc.states.shape[0] != 1:
            raise ValueError("ModelStepper expects a single encoded source")
        tiled = EncoderOutput(states=Tensor(np.repeat(enc.states.data, n, axis=0)),
                              mask=np.repeat(enc.mask, n, axis=0), embeddings=enc.embeddings)
        keys = None if self.keys is None else Tensor(np.repeat(self.keys.data, n, axis=0))
        ctx = None if self.context is None else Tensor(np.repeat(self.context.reshape(1, -1), n, axis=0))
        style = None if self.style is None else self.model.style_vectors(np.full(n, self.style))
        logits, new_state, _ = self.model.decoder_step(state, prev_ids, tiled, ctx, style, keys)
        return log_softmax(logits, axis=-1).data, new_state

    def select(self, state, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return [(Tensor(h.data[idx]), Tensor(c.data[idx])) for h, c in state]


def beam_search(stepper, beam: int = 5, max_len: int = 50, bos: int = BOS_ID, eos: int = EOS_ID,
                banned: Sequence[int] = (PAD_ID, BOS_ID), normalize: bool = True) -> SearchResult:
    """Beam search over ``stepper``.

    Every expansion of the live hypotheses competes for ``beam`` slots; a
    chosen expansion ending in ``eos`` retires to the finished pool, the rest
    stay live. Search runs until nothing is live or ``max_len`` tokens have
    been emitted. The result is the best finished hypothesis under
    length-normalised log-probability (length counts the EOS), or the best
    live one flagged as truncated when nothing finished.
    """
    if beam < 1 or max_len < 1:
        raise ValueError("beam and max_len must be >= 1")
    with no_grad():
        state = stepper.initial()
        alive = [BeamHypothesis((), 0.0)]
        prev = np.array([bos], dtype=np.int64)
        finished: List[BeamHypothesis] = []
        for _ in range(max_len):
            logp, state = stepper.step(state, prev)
            logp = np.array(logp, dtype=np.float64)
            logp[:, list(banned)] = -np.inf
            cand = np.array([h.logprob for h in alive])[:, None] + logp
            V = cand.shape[1]
            flat = cand.ravel()
            order = np.argsort(-flat, kind="stable")[:beam]
            keep_rows, keep_toks, next_alive = [], [], []
            for j in order:
                if not np.isfinite(flat[j]):
                    break
                k, tok = divmod(int(j), V)
                hyp = BeamHypothesis(alive[k].tokens + (tok,), float(flat[j]), tok == eos)
                if hyp.finished:
                    finished.append(hyp)
                else:
                    next_alive.append(hyp)
                    keep_rows.append(k)
                    keep_toks.append(tok)
            if not next_alive:
                break
            alive = next_alive
            state = stepper.select(state, keep_rows)
            prev = np.array(keep_toks, dtype=np.int64)
    pool, truncated = (finished, False) if finished else (alive, True)
    best = max(pool, key=lambda h: h.score(normalize))
    return SearchResult(list(best.tokens), best.logprob, best.score(normalize), truncated)


def greedy_decode(stepper, max_len: int = 50, bos: int = BOS_ID, eos: int = EOS_ID,
                  banned: Sequence[int] = (PAD_ID, BOS_ID), normalize: bool = True) -> SearchResult:
    with no_grad():
        state = stepper.initial()
        prev = np.array([bos], dtype=np.int64)
        toks, lp = [], 0.0
        for _ in range(max_len):
            logp, state = stepper.step(state, prev)
            row = np.array(logp[0], dtype=np.float64)
            row[list(banned)] = -np.inf
            tok = int(np.argmax(row))
            toks.append(tok)
            lp += float(row[tok])
            if tok == eos:
                break
            prev = np.array([tok], dtype=np.int64)
    truncated = toks[-1] != eos
    score = lp / len(toks) if normalize else lp
    return SearchResult(toks, lp, score, truncated)


# -- noise --------------------------------------------------------------
@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian mask added to the context vector at generation time.

    ``mu`` is the standard deviation unless ``as_variance`` is set.
    """
    mu: float = 0.0
    seed: int = 0
    as_variance: bool = False

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"noise mu must be non-negative, got {self.mu}")

    @property
    def std(self) -> float:
        return float(np.sqrt(self.mu)) if self.as_variance else float(self.mu)


def apply_noise(c: np.ndarray, spec: NoiseSpec, index: int = 0) -> np.ndarray:
    """Return ``c + eps`` with ``eps ~ N(0, std^2)`` drawn from a per-sentence stream.

    The stream depends only on ``(spec.seed, index)``, so sweeping ``mu``
    rescales the same draw.
    """
    c = np.asarray(c, dtype=np.float64)
    if spec.mu == 0:
        return c.copy()
    eps = np.random.default_rng([spec.seed, index]).standard_normal(c.shape)
    return c + spec.std * eps


# -- obfuscation ----------------------------------------------------------
@dataclass
class Obfuscation:
    tokens: List[str]
    text: str
    truncated: bool
    score: float


def default_max_len(n_source: int) -> int:
    return 2 * n_source + 5


def obfuscate(model: Seq2Seq, source: Sequence[str], beam: int = 5, noise: NoiseSpec | None = None,
              target_style: str | None = None, max_len: int | None = None, index: int = 0,
              normalize: bool = True) -> Obfuscation:
    """Encode, optionally perturb the context, and beam-decode one sentence.

    ``target_style`` selects the ``<2style>`` token for token-transfer
    models and the decoder style embedding for conditional models; other
    models take no style.
    """
    cfg = model.config
    if target_style is not None and not (cfg.token_transfer or cfg.conditional):
        raise ConfigError("this model takes no target style")
    if target_style is None and (cfg.token_transfer or cfg.conditional):
        raise ConfigError(f"{cfg.label} model needs a target style")
    if noise is not None and noise.mu > 0 and cfg.token_transfer:
        raise ConfigError("token-transfer models have no context vector to perturb")
    if not source:
        raise ValueError("cannot obfuscate an empty sentence")
    vocab = model.vocab
    ids = source_ids(vocab, source, cfg, target_style if cfg.token_transfer else None)
    with no_grad():
        enc = model.encode(np.array([ids]))
    context = None
    if enc.context is not None:
        context = enc.context.data[0]
        if noise is not None:
            context = apply_noise(context, noise, index)
    style_id = vocab.styles.index(target_style) if cfg.conditional else None
    stepper = ModelStepper(model, enc, context, style_id)
    res = beam_search(stepper, beam=beam, max_len=max_len or default_max_len(len(source)),
                      normalize=normalize)
    toks = vocab.decode(res.content, strip=True)
    return Obfuscation(toks, detokenize(toks), res.truncated, res.score)


def obfuscate_many(model: Seq2Seq, sources: Sequence[Sequence[str]], styles: Sequence[str | None],
                   beam: int = 5, noise: NoiseSpec | None = None) -> List[Obfuscation]:
    return [obfuscate(model, src, beam, noise, sty, index=i)
            for i, (src, sty) in enumerate(zip(sources, styles))]
