"""Encoder-decoder models with a feature-wise attention bottleneck.

The encoder embeds tokens, runs a bidirectional LSTM and pools the states
into a single context vector ``c`` with per-feature softmax weights over
time. The decoder is an LSTM whose input at every step is the previous
word embedding concatenated with ``c`` (and a style embedding in
conditional mode). Optional pieces:

* a style classifier on ``c`` behind a gradient reversal layer (``grl``),
* a learned style embedding fed to the decoder (``conditional``),
* token transfer (``token_transfer``): the source is prefixed with a
  ``<2style>`` token and the decoder attends over all encoder states
  with additive attention instead of reading ``c``.
"""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import container
from .autodiff import (AdamState, GrlSpec, ShapeError, Tensor, concat, cross_entropy, dropout,
                       embedding, grl, leaky_relu, matmul, sigmoid, softmax, stack, take_along_axis, tanh)
from .textdata import BOS_ID, EOS_ID, PAD_ID, PairExample, Vocab

CHECKPOINT_KIND = "seq2seq"
MASK_NEG = -1e9


class ConfigError(ValueError):
    """Invalid or inconsistent model configuration."""


@dataclass
class ModelConfig:
    vocab_size: int
    num_styles: int
    mode: str = "AE"
    grl: bool = False
    conditional: bool = False
    token_transfer: bool = False
    emb_dim: int = 300
    # total bi-LSTM output width; each direction gets half
    enc_hidden: int = 1000
    dec_hidden: int = 1000
    num_layers: int = 1
    dropout: float = 0.25
    grl_lambda: float = 1.0
    style_emb_dim: int = 50
    attn_dim: int = 0
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in ("AE", "S2S"):
            raise ConfigError(f"mode must be 'AE' or 'S2S', got {self.mode!r}")
        if self.token_transfer and self.grl:
            raise ConfigError("token transfer cannot be combined with the gradient reversal layer")
        if self.token_transfer and self.mode != "S2S":
            raise ConfigError("token transfer requires S2S mode")
        dims = ("vocab_size", "emb_dim", "enc_hidden", "dec_hidden", "num_layers")
        for name in dims:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.enc_hidden % 2:
            raise ConfigError("enc_hidden must be even (split across two directions)")
        if (self.grl or self.conditional) and self.num_styles < 2:
            raise ConfigError("style head and conditional decoder need at least two styles")
        if self.conditional and self.style_emb_dim <= 0:
            raise ConfigError("style_emb_dim must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.grl_lambda < 0:
            raise ConfigError("grl_lambda must be non-negative")

    @property
    def label(self) -> str:
        parts = [self.mode.lower() if self.mode == "S2S" else "AE"]
        parts += [flag for flag, on in (("C", self.conditional), ("GRL", self.grl),
                                        ("TT", self.token_transfer)) if on]
        return "+".join(parts)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class EncoderOutput:
    states: Tensor                 # (B, T, H)
    mask: np.ndarray               # (B, T), 1 for real tokens
    embeddings: Tensor             # (B, T, D), the w_t fed to the first layer
    context: Optional[Tensor] = None   # (B, H)
    weights: Optional[Tensor] = None   # (B, T, H), per-feature attention


@dataclass
class Batch:
    src: np.ndarray
    src_mask: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_mask: np.ndarray
    src_style: np.ndarray
    tgt_style: np.ndarray

    @property
    def size(self) -> int:
        return self.src.shape[0]


def _pad(seqs: Sequence[Sequence[int]], length: int | None = None):
    n = max(len(s) for s in seqs) if length is None else length
    arr = np.full((len(seqs), n), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), n))
    for i, s in enumerate(seqs):
        arr[i, :len(s)] = s
        mask[i, :len(s)] = 1.0
    return arr, mask


def source_ids(vocab: Vocab, tokens: Sequence[str], config: ModelConfig,
               target_style: str | None = None) -> List[int]:
    ids = vocab.encode(tokens)
    if config.token_transfer:
        if target_style is None:
            raise ConfigError("token-transfer models need a target style")
        ids = [vocab.style_token_id(target_style)] + ids
    return ids


def make_batch(examples: Sequence[PairExample], vocab: Vocab, config: ModelConfig,
               extra_pad: int = 0) -> Batch:
    """Pad a list of examples. BOS/EOS framing: decoder reads BOS+y, predicts y+EOS."""
    styles = {s: i for i, s in enumerate(vocab.styles)}
    src = [source_ids(vocab, e.source, config, e.target_style) for e in examples]
    tgt = [vocab.encode(e.target) for e in examples]
    s_arr, s_mask = _pad(src, max(len(s) for s in src) + extra_pad)
    tlen = max(len(t) for t in tgt) + 1 + extra_pad
    ti, _ = _pad([[BOS_ID] + t for t in tgt], tlen)
    to, t_mask = _pad([t + [EOS_ID] for t in tgt], tlen)
    return Batch(s_arr, s_mask, ti, to, t_mask,
                 np.array([styles[e.source_style] for e in examples], dtype=np.int64),
                 np.array([styles[e.target_style] for e in examples], dtype=np.int64))


def _init(seed: int, name: str, shape, scale: float) -> np.ndarray:
    # per-name stream: adding or removing a module never shifts the others
    rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
    return rng.uniform(-scale, scale, size=shape)


def lstm_step(x: Tensor, h: Tensor, c: Tensor, W: Tensor, b: Tensor, mask=None):
    """One LSTM step; rows with ``mask == 0`` keep their previous state."""
    n = h.shape[-1]
    gates = matmul(concat([x, h], axis=-1), W) + b
    i = sigmoid(gates[:, :n])
    f = sigmoid(gates[:, n:2 * n])
    g = tanh(gates[:, 2 * n:3 * n])
    o = sigmoid(gates[:, 3 * n:])
    c_new = f * c + i * g
    h_new = o * tanh(c_new)
    if mask is not None:
        m = mask[:, None]
        h_new = h + m * (h_new - h)
        c_new = c + m * (c_new - c)
    return h_new, c_new


def inner_attention(states: Tensor, embeddings: Tensor, W: Tensor, mask=None):
    """Feature-wise inner attention.

    Scores for feature ``i`` at step ``t`` are ``[W^T z_t]_i`` with
    ``z_t = [w_t; h_t]``; each feature gets its own softmax over time and
    the context is ``c_i = sum_t a_i^t h_i^t``. Returns ``(c, a)``.
    """
    if states.ndim != 3 or embeddings.ndim != 3:
        raise ShapeError("inner_attention: expected (B, T, H) states and (B, T, D) embeddings")
    B, T, H = states.shape
    D = embeddings.shape[-1]
    if embeddings.shape[:2] != (B, T):
        raise ShapeError(f"inner_attention: states {states.shape} vs embeddings {embeddings.shape}")
    if W.shape != (D + H, H):
        raise ShapeError(f"inner_attention: W must be ({D + H}, {H}), got {W.shape}")
    scores = matmul(concat([embeddings, states], axis=-1), W)
    if mask is not None:
        scores = scores + np.where(np.asarray(mask) > 0, 0.0, MASK_NEG)[:, :, None]
    a = softmax(scores, axis=1)
    c = (a * states).sum(axis=1)
    return c, a


def bahdanau_attention(s: Tensor, states: Tensor, Ws: Tensor, Wh: Tensor, v: Tensor,
                       mask=None, keys: Tensor | None = None):
    """Additive attention ``e_t = v^T tanh(W_s s + W_h h_t)``; returns ``(context, alpha)``."""
    B, T, H = states.shape
    if keys is None:
        keys = matmul(states, Wh)
    q = matmul(s, Ws)
    e = matmul(tanh(keys + q.reshape(B, 1, q.shape[-1])), v).reshape(B, T)
    if mask is not None:
        e = e + np.where(np.asarray(mask) > 0, 0.0, MASK_NEG)
    alpha = softmax(e, axis=1)
    ctx = (alpha.reshape(B, T, 1) * states).sum(axis=1)
    return ctx, alpha


def _reverse_index(mask: np.ndarray, width: int) -> np.ndarray:
    """Index that reverses each row within its true length, leaving padding in place."""
    B, T = mask.shape
    lengths = mask.sum(axis=1).astype(np.int64)
    t = np.arange(T)[None, :]
    idx = np.where(t < lengths[:, None], lengths[:, None] - 1 - t, t)
    return np.broadcast_to(idx[:, :, None], (B, T, width)).copy()


@dataclass
class LossBreakdown:
    objective: Tensor
    reconstruction: Tensor
    style: Optional[Tensor] = None
    style_logits: Optional[Tensor] = None
    logits: Optional[Tensor] = None
    encoder: Optional[EncoderOutput] = None

    @property
    def total(self) -> float:
        return float(self.objective.data)


class Seq2Seq:
    """Encoder-decoder over a fixed vocabulary; parameters live in ``self.params``."""

    def __init__(self, config: ModelConfig, vocab: Vocab):
        config.validate()
        if config.vocab_size != len(vocab):
            raise ConfigError(f"config vocab_size {config.vocab_size} != vocabulary size {len(vocab)}")
        if config.num_styles != len(vocab.styles):
            raise ConfigError(f"config num_styles {config.num_styles} != {len(vocab.styles)} vocabulary styles")
        self.config = config
        self.vocab = vocab
        self.params: Dict[str, Tensor] = {}
        self._build()

    # -- parameters ---------------------------------------------------------
    def _param(self, name, shape, scale=None, fill=None):
        data = np.full(shape, fill, dtype=np.float64) if fill is not None else \
            _init(self.config.seed, name, shape, self.config.init_scale if scale is None else scale)
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def _lstm_params(self, prefix, n_in, n_hidden):
        self._param(prefix + ".W", (n_in + n_hidden, 4 * n_hidden))
        b = np.zeros(4 * n_hidden)
        b[n_hidden:2 * n_hidden] = 1.0  # forget-gate bias
        self.params[prefix + ".b"] = Tensor(b, requires_grad=True, name=prefix + ".b")

    def _build(self):
        cfg = self.config
        V, D, H, Hd = cfg.vocab_size, cfg.emb_dim, cfg.enc_hidden, cfg.dec_hidden
        self._param("embed", (V, D))
        n_in = D
        for layer in range(cfg.num_layers):
            for d in ("fw", "bw"):
                self._lstm_params(f"enc.l{layer}.{d}", n_in, H // 2)
            n_in = H
        if not cfg.token_transfer:
            self._param("enc.attn.W", (D + H, H))
        if self.has_style_head:
            self._param("head.W1", (H, H))
            self._param("head.b1", (H,), fill=0.0)
            self._param("head.W2", (H, cfg.num_styles))
            self._param("head.b2", (cfg.num_styles,), fill=0.0)
        dec_in = D + H
        if cfg.conditional:
            self._param("dec.style", (cfg.num_styles, cfg.style_emb_dim))
            dec_in += cfg.style_emb_dim
        if cfg.token_transfer:
            A = cfg.attn_dim or Hd
            self._param("dec.attn.Ws", (Hd, A))
            self._param("dec.attn.Wh", (H, A))
            self._param("dec.attn.v", (A, 1))
        for layer in range(cfg.num_layers):
            self._lstm_params(f"dec.l{layer}", dec_in if layer == 0 else Hd, Hd)
        self._param("out.W", (Hd, V))
        self._param("out.b", (V,), fill=0.0)

    @property
    def has_style_head(self) -> bool:
        return self.config.grl

    def head_param_names(self) -> List[str]:
        return [n for n in self.params if n.startswith("head.")]

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, t in self.params.items():
            if arrays[k].shape != t.shape:
                raise ShapeError(f"parameter {k!r}: stored {arrays[k].shape} vs model {t.shape}")
            t.data = np.array(arrays[k], dtype=np.float64, copy=True)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    # -- encoder ------------------------------------------------------------
    def encode(self, src: np.ndarray, mask: np.ndarray | None = None, training: bool = False,
               rng: np.random.Generator | None = None) -> EncoderOutput:
        src = np.atleast_2d(np.asarray(src, dtype=np.int64))
        if src.shape[1] == 0:
            raise ValueError("cannot encode an empty sequence")
        mask = np.ones(src.shape) if mask is None else np.asarray(mask, dtype=np.float64)
        if np.any(mask.sum(axis=1) == 0):
            raise ValueError("cannot encode an empty sequence")
        cfg, P = self.config, self.params
        B, T = src.shape
        w = embedding(P["embed"], src)
        layer_in = w
        for layer in range(cfg.num_layers):
            x = dropout(layer_in, cfg.dropout, training, rng)
            outs = []
            for d in ("fw", "bw"):
                W, b = P[f"enc.l{layer}.{d}.W"], P[f"enc.l{layer}.{d}.b"]
                n = W.shape[1] // 4
                xs = x if d == "fw" else take_along_axis(x, _reverse_index(mask, x.shape[-1]), axis=1)
                h = Tensor(np.zeros((B, n)))
                c = Tensor(np.zeros((B, n)))
                hs = []
                for t in range(T):
                    h, c = lstm_step(xs[:, t, :], h, c, W, b, mask[:, t])
                    hs.append(h)
                seq = stack(hs, axis=1)
                if d == "bw":
                    seq = take_along_axis(seq, _reverse_index(mask, n), axis=1)
                outs.append(seq)
            layer_in = concat(outs, axis=-1)
        out = EncoderOutput(states=layer_in, mask=mask, embeddings=w)
        if not cfg.token_transfer:
            out.context, out.weights = inner_attention(layer_in, w, P["enc.attn.W"], mask)
        return out

    def classify_style(self, context: Tensor, scale: float | None = None, reverse: bool = True) -> Tensor:
        """Style logits from the context vector, behind a gradient reversal layer."""
        if not self.has_style_head:
            raise ConfigError("model has no style head (GRL flag off)")
        P = self.params
        x = grl(context, GrlSpec(self.config.grl_lambda if scale is None else scale)) if reverse else context
        hidden = leaky_relu(matmul(x, P["head.W1"]) + P["head.b1"])
        return matmul(hidden, P["head.W2"]) + P["head.b2"]

    # -- decoder --------------------------------------------------------------
    def initial_state(self, batch_size: int):
        Hd = self.config.dec_hidden
        return [(Tensor(np.zeros((batch_size, Hd))), Tensor(np.zeros((batch_size, Hd))))
                for _ in range(self.config.num_layers)]

    def _check_style(self, style_ids):
        if style_ids is not None and not self.config.conditional:
            raise ConfigError("a decoder style was given but the model is not conditional")
        if style_ids is None and self.config.conditional:
            raise ConfigError("conditional decoder needs a style id")

    def style_vectors(self, style_ids) -> Optional[Tensor]:
        self._check_style(style_ids)
        if style_ids is None:
            return None
        ids = np.atleast_1d(np.asarray(style_ids, dtype=np.int64))
        if ids.min() < 0 or ids.max() >= self.config.num_styles:
            raise ConfigError(f"style id out of range: {ids}")
        return embedding(self.params["dec.style"], ids)

    def attention_keys(self, enc: EncoderOutput) -> Optional[Tensor]:
        if not self.config.token_transfer:
            return None
        return matmul(enc.states, self.params["dec.attn.Wh"])

    def decoder_step(self, state, prev_ids, enc: EncoderOutput, context: Tensor | None,
                     style_vec: Tensor | None = None, keys: Tensor | None = None,
                     training: bool = False, rng=None):
        """Advance the decoder one token; returns ``(logits, new_state, alpha)``."""
        cfg, P = self.config, self.params
        parts = [embedding(P["embed"], np.asarray(prev_ids, dtype=np.int64))]
        alpha = None
        if cfg.token_transfer:
            s_prev = state[-1][0]
            context, alpha = bahdanau_attention(s_prev, enc.states, P["dec.attn.Ws"], P["dec.attn.Wh"],
                                                P["dec.attn.v"], enc.mask, keys)
        parts.append(context)
        if style_vec is not None:
            parts.append(style_vec)
        x = concat(parts, axis=-1)
        new_state = []
        for layer, (h, c) in enumerate(state):
            x = dropout(x, cfg.dropout, training, rng)
            h, c = lstm_step(x, h, c, P[f"dec.l{layer}.W"], P[f"dec.l{layer}.b"])
            new_state.append((h, c))
            x = h
        logits = matmul(x, P["out.W"]) + P["out.b"]
        return logits, new_state, alpha

    def decode_train(self, enc: EncoderOutput, tgt_in, tgt_out, tgt_mask=None, style_ids=None,
                     context: Tensor | None = None, training: bool = False, rng=None):
        """Teacher-forced decoding; returns ``(logits (B, T, V), mean token cross-entropy)``."""
        tgt_in = np.atleast_2d(np.asarray(tgt_in, dtype=np.int64))
        tgt_out = np.atleast_2d(np.asarray(tgt_out, dtype=np.int64))
        if tgt_in.shape[1] == 0:
            raise ValueError("empty target sequence")
        style_vec = self.style_vectors(style_ids)
        if context is None:
            context = enc.context
        B, T = tgt_in.shape
        state = self.initial_state(B)
        keys = self.attention_keys(enc)
        steps = []
        for t in range(T):
            logits, state, _ = self.decoder_step(state, tgt_in[:, t], enc, context, style_vec, keys,
                                                 training, rng)
            steps.append(logits)
        logits = stack(steps, axis=1)
        return logits, cross_entropy(logits, tgt_out, tgt_mask)

    def decoder_style(self, batch: Batch):
        return batch.tgt_style if self.config.conditional else None

    def compute_loss(self, batch: Batch, training: bool = False, rng=None,
                     adv_weight: float = 1.0) -> LossBreakdown:
        """Reconstruction loss plus, with a style head, the adversarial term.

        The head always learns from its own full cross-entropy; the encoder
        receives that gradient reversed and scaled by ``grl_lambda * adv_weight``.
        """
        enc = self.encode(batch.src, batch.src_mask, training, rng)
        logits, rec = self.decode_train(enc, batch.tgt_in, batch.tgt_out, batch.tgt_mask,
                                        self.decoder_style(batch), training=training, rng=rng)
        out = LossBreakdown(objective=rec, reconstruction=rec, logits=logits, encoder=enc)
        if self.has_style_head:
            sl = self.classify_style(enc.context, scale=self.config.grl_lambda * adv_weight)
            out.style_logits = sl
            out.style = cross_entropy(sl, batch.src_style)
            out.objective = rec + out.style
        return out


# -- checkpoints ----------------------------------------------------------
@dataclass
class Checkpoint:
    model: Seq2Seq
    optimizer: Optional[AdamState] = None
    epoch: int = 0
    rng_state: Optional[dict] = None
    meta: dict = field(default_factory=dict)


def save_checkpoint(path, model: Seq2Seq, optimizer: AdamState | None = None, epoch: int = 0,
                    rng_state: dict | None = None, extra: dict | None = None) -> None:
    arrays = {f"param/{k}": v.data for k, v in model.params.items()}
    meta = {"config": model.config.to_dict(), "vocab": model.vocab.itos,
            "styles": model.vocab.styles, "epoch": epoch, "rng_state": rng_state,
            "extra": extra or {}}
    if optimizer is not None:
        meta["adam"] = {"lr": optimizer.lr, "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                        "eps": optimizer.eps, "t": optimizer.t}
        for k in optimizer.m:
            arrays[f"adam.m/{k}"] = optimizer.m[k]
            arrays[f"adam.v/{k}"] = optimizer.v[k]
    container.save(path, _jsonable(meta), arrays, CHECKPOINT_KIND)


def load_checkpoint(path) -> Checkpoint:
    meta, arrays = container.load(path, CHECKPOINT_KIND)
    vocab = Vocab(meta["vocab"], meta["styles"])
    model = Seq2Seq(ModelConfig.from_dict(meta["config"]), vocab)
    model.load_arrays({k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")})
    opt = None
    if "adam" in meta:
        a = meta["adam"]
        opt = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], t=a["t"])
        for k, v in arrays.items():
            if k.startswith("adam.m/"):
                opt.m[k[7:]] = v.copy()
            elif k.startswith("adam.v/"):
                opt.v[k[7:]] = v.copy()
    return Checkpoint(model, opt, meta.get("epoch", 0), meta.get("rng_state"), meta.get("extra", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj
