"""Mini-batch training with Adam, per-epoch decay and early stopping on dev loss."""
from __future__ import annotations

import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from .autodiff import AdamState, adam_step, backward, clip_grad_norm, decay_lr, no_grad
from .seqmodel import Batch, Seq2Seq, make_batch
from .textdata import DataSplit, PairExample

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Non-finite loss; the model has been restored to the best epoch so far."""

    def __init__(self, msg, model=None, log=None):
        super().__init__(msg)
        self.model = model
        self.log = log


@dataclass
class TrainConfig:
    batch_size: int = 50
    lr: float = 1e-3
    lr_decay: float = 0.75
    patience: int = 3
    max_epochs: int = 30
    seed: int = 0
    adv_weight: float = 1.0
    clip_norm: Optional[float] = 5.0
    head_lr_scale: float = 1.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_loss: float
    dev_ppl: float
    style_acc: Optional[float]
    lr: float


@dataclass
class TrainLog:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def dev_losses(self) -> List[float]:
        return [e.dev_loss for e in self.epochs]

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.epochs:
                fh.write(json.dumps(asdict(e), sort_keys=True) + "\n")


def batches(pairs: Sequence, size: int, seed: int | None = None, epoch: int = 0) -> Iterator[list]:
    """Yield consecutive chunks of ``pairs``, shuffled per (seed, epoch) when seeded."""
    if size < 1:
        raise ValueError("batch size must be >= 1")
    order = np.arange(len(pairs))
    if seed is not None:
        order = np.random.default_rng([seed, epoch]).permutation(len(pairs))
    for i in range(0, len(order), size):
        yield [pairs[j] for j in order[i:i + size]]


def early_stop_point(dev_losses: Sequence[float], patience: int):
    """Return ``(stop_epoch, best_epoch)`` (1-based) or ``(None, best)`` if still running."""
    best, best_ep, since = math.inf, 0, 0
    for ep, loss in enumerate(dev_losses, 1):
        if loss < best:
            best, best_ep, since = loss, ep, 0
        else:
            since += 1
            if since >= patience:
                return ep, best_ep
    return None, best_ep


def evaluate_loss(model: Seq2Seq, pairs: Sequence[PairExample], batch_size: int = 50):
    """Token-weighted dev reconstruction loss, style-head accuracy and token accuracy."""
    nll = ntok = correct = 0.0
    style_hits = style_n = 0
    with no_grad():
        for chunk in batches(pairs, batch_size):
            b = make_batch(chunk, model.vocab, model.config)
            out = model.compute_loss(b)
            n = b.tgt_mask.sum()
            nll += float(out.reconstruction.data) * n
            ntok += n
            pred = out.logits.data.argmax(axis=-1)
            correct += float(((pred == b.tgt_out) * b.tgt_mask).sum())
            if out.style_logits is not None:
                style_hits += int((out.style_logits.data.argmax(axis=-1) == b.src_style).sum())
                style_n += b.size
    loss = nll / ntok
    return {"loss": loss, "ppl": math.exp(loss), "token_acc": correct / ntok,
            "style_acc": style_hits / style_n if style_n else None}


def perplexity(model: Seq2Seq, pairs: Sequence[PairExample], batch_size: int = 50) -> float:
    if not pairs:
        raise ValueError("perplexity needs at least one pair")
    return evaluate_loss(model, pairs, batch_size)["ppl"]


def token_accuracy(model: Seq2Seq, pairs: Sequence[PairExample], batch_size: int = 50) -> float:
    return evaluate_loss(model, pairs, batch_size)["token_acc"]


def _clip(grads: Dict[str, np.ndarray], head: set, max_norm: float) -> None:
    # the style head is clipped on its own so it cannot rescale the encoder-decoder step
    main = {k: g for k, g in grads.items() if k not in head}
    side = {k: g for k, g in grads.items() if k in head}
    clip_grad_norm(main, max_norm)
    clip_grad_norm(side, max_norm)
    grads.update(main)
    grads.update(side)


def train_step(model: Seq2Seq, batch: Batch, opt: AdamState, cfg: TrainConfig,
               rng: np.random.Generator) -> float:
    out = model.compute_loss(batch, training=True, rng=rng, adv_weight=cfg.adv_weight)
    total = float(out.reconstruction.data)
    if out.style is not None:
        total += cfg.adv_weight * float(out.style.data)
    if not math.isfinite(total):
        raise FloatingPointError(f"non-finite training loss {total}")
    model.zero_grad()
    backward(out.objective)
    grads = {k: p.grad for k, p in model.params.items() if p.grad is not None}
    if cfg.clip_norm is not None:
        _clip(grads, set(model.head_param_names()), cfg.clip_norm)
    adam_step(model.params, grads, opt)
    return total


def train(model: Seq2Seq, data: DataSplit, cfg: TrainConfig, log_path=None,
          progress=sys.stderr, opt: AdamState | None = None, start_epoch: int = 0,
          on_epoch=None):
    """Train until ``max_epochs`` or dev loss fails to improve for ``patience`` epochs.

    ``on_epoch(epoch, model, opt)`` may return True to stop after that epoch.
    The model is left holding the parameters of the best dev epoch. Dev loss
    is the reconstruction term only (the adversarial term is adversarial by
    construction and says nothing about convergence).
    """
    if not data.train or not data.dev:
        raise ValueError("train and dev partitions must be non-empty")
    if opt is None:
        opt = AdamState(lr=cfg.lr)
        if cfg.head_lr_scale != 1.0:
            opt.lr_scale = {k: cfg.head_lr_scale for k in model.head_param_names()}
    tlog = TrainLog()
    best_loss, best_state, since = math.inf, model.state_arrays(), 0
    for epoch in range(start_epoch, cfg.max_epochs):
        rng = np.random.default_rng([cfg.seed, epoch, 1])
        losses, sizes = [], []
        try:
            for chunk in batches(data.train, cfg.batch_size, cfg.seed, epoch):
                b = make_batch(chunk, model.vocab, model.config)
                losses.append(train_step(model, b, opt, cfg, rng))
                sizes.append(b.size)
        except FloatingPointError as exc:
            model.load_arrays(best_state)
            raise TrainingDiverged(f"epoch {epoch + 1}: {exc}", model, tlog) from exc
        dev = evaluate_loss(model, data.dev, cfg.batch_size)
        rec = EpochRecord(epoch + 1, float(np.average(losses, weights=sizes)), dev["loss"],
                          dev["ppl"], dev["style_acc"], opt.lr)
        tlog.epochs.append(rec)
        if progress is not None:
            acc = "" if rec.style_acc is None else f" style_acc={rec.style_acc:.3f}"
            print(f"epoch {rec.epoch}: train={rec.train_loss:.4f} dev={rec.dev_loss:.4f} "
                  f"ppl={rec.dev_ppl:.3f}{acc} lr={rec.lr:.6g}", file=progress)
        stop = on_epoch is not None and on_epoch(epoch + 1, model, opt)
        decay_lr(opt, cfg.lr_decay)
        if dev["loss"] < best_loss:
            best_loss, best_state, since = dev["loss"], model.state_arrays(), 0
            tlog.best_epoch = epoch + 1
        if stop:
            break
        if tlog.best_epoch != epoch + 1:
            since += 1
            if since >= cfg.patience:
                tlog.stopped_early = True
                break
    model.load_arrays(best_state)
    if log_path is not None:
        tlog.write_jsonl(log_path)
    return model, tlog
