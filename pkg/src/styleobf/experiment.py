"""Experiment runner: presets, the system matrix, per-cell artifacts and reports.

Everything a run writes lives under ``RunConfig.out``::

    data/       corpus.tsv, vocab.txt, pairs_{train,dev,test}.tsv, manifest.json
    adversary/  adversary.bin, adversary.json
    cells/<system>/  model.ckpt, train_log.jsonl, done.json,
                     outputs_mu<mu>.tsv, report_mu<mu>.json
    matrix.txt, matrix.json, noise_sweep.tsv, figures/

Every artifact carries the hash of the configuration that produced it, and
a step whose recorded hash matches the current one is skipped.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import textdata as td
from .adversary import AdversaryConfig, AdversaryModel, accuracy, train_adversary
from .decode import NoiseSpec, obfuscate
from .evalmetrics import EmbeddingStore, EvalReport, evaluate, format_table, majority_baseline
from .seqmodel import ConfigError, ModelConfig, Seq2Seq, load_checkpoint, save_checkpoint
from .toycorpus import parallel_corpus
from .trainer import TrainConfig, perplexity, train

log = logging.getLogger(__name__)

SYSTEMS = ("s2s", "s2s+GRL", "s2s+TT", "AE", "AE+GRL", "AE+C+GRL")
SOURCE_ROW = "source"
NOISE_GRID = (0.0, 0.01, 0.05, 0.10, 0.15, 0.20)
NOISE_SYSTEMS = ("AE", "AE+GRL", "AE+C+GRL")

PRESETS = {
    "toy": {
        "model": {"emb_dim": 32, "enc_hidden": 64, "dec_hidden": 64, "dropout": 0.1,
                  "style_emb_dim": 8},
        "train": {"batch_size": 10, "lr": 0.01, "lr_decay": 0.99, "patience": 6,
                  "max_epochs": 60, "head_lr_scale": 10.0},
        "adversary": {"dim": 32, "buckets": 16384, "lr": 0.1, "epochs": 20},
        "beam": 5,
    },
    "paper": {
        "model": {"emb_dim": 300, "enc_hidden": 1000, "dec_hidden": 1000, "dropout": 0.25},
        "train": {"batch_size": 50, "lr": 0.001, "lr_decay": 0.75, "patience": 3,
                  "max_epochs": 100, "head_lr_scale": 1.0},
        "adversary": {"dim": 100, "buckets": 1_000_000, "lr": 0.01, "epochs": 20},
        "beam": 5,
    },
}


class MissingArtifact(RuntimeError):
    def __init__(self, path, command: str):
        super().__init__(f"missing {path}; produce it with `styleobf {command}`")
        self.path = path
        self.command = command


def parse_system(label: str) -> dict:
    """``"AE+C+GRL"`` -> ModelConfig flag overrides."""
    head, *mods = label.split("+")
    mode = {"s2s": "S2S", "S2S": "S2S", "AE": "AE"}.get(head)
    if mode is None:
        raise ConfigError(f"unknown system {label!r}: must start with 's2s' or 'AE'")
    flags = {"mode": mode, "grl": False, "conditional": False, "token_transfer": False}
    names = {"GRL": "grl", "C": "conditional", "TT": "token_transfer"}
    for m in mods:
        if m.upper() not in names:
            raise ConfigError(f"unknown module {m!r} in system {label!r}")
        flags[names[m.upper()]] = True
    return flags


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def _write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


@dataclass
class RunConfig:
    preset: str = "toy"
    out: str = "runs/toy"
    corpus: Optional[str] = None
    embeddings: Optional[str] = None
    seed: int = 0
    toy_verses: int = 166
    toy_styles: int = 3
    fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    min_count: int = 1
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    adversary: dict = field(default_factory=dict)
    beam: int = 5
    systems: Tuple[str, ...] = SYSTEMS
    noise_grid: Tuple[float, ...] = NOISE_GRID
    noise_systems: Tuple[str, ...] = NOISE_SYSTEMS
    # target style for conditional AE decoding: "rotate" (next style) or "source"
    cond_style: str = "rotate"
    store_dim: int = 16
    workers: int = 1
    figures: bool = True

    @classmethod
    def build(cls, preset: str = "toy", overrides: dict | None = None) -> "RunConfig":
        """Preset defaults, then ``overrides`` (config file, then flags) on top."""
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base = copy.deepcopy(PRESETS[preset])
        overrides = dict(overrides or {})
        for section in ("model", "train", "adversary"):
            base[section].update(overrides.pop(section, None) or {})
        base.update(overrides)
        base["preset"] = preset
        names = {f.name for f in fields(cls)}
        unknown = set(base) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for k in ("fractions", "systems", "noise_grid", "noise_systems"):
            if k in base:
                base[k] = tuple(base[k])
        return cls(**base)

    def validate(self) -> None:
        """Reject bad paths and excluded flag combinations before any compute."""
        if self.corpus is not None and not Path(self.corpus).is_file():
            raise ConfigError(f"corpus file not found: {self.corpus}")
        if self.embeddings is not None and not Path(self.embeddings).is_file():
            raise ConfigError(f"embedding file not found: {self.embeddings}")
        if self.preset == "paper" and self.corpus is None:
            raise ConfigError("the 'paper' preset needs a corpus file")
        if self.cond_style not in ("rotate", "source"):
            raise ConfigError("cond_style must be 'rotate' or 'source'")
        if not 2 <= self.toy_styles <= 5:
            raise ConfigError("toy_styles must be in [2, 5]")
        if self.beam < 1:
            raise ConfigError("beam must be >= 1")
        if any(mu < 0 for mu in self.noise_grid):
            raise ConfigError("noise levels must be non-negative")
        for s in set(self.systems) | set(self.noise_systems):
            self.model_config(s, vocab_size=10, num_styles=max(2, self.toy_styles))
        for s in self.noise_systems:
            if parse_system(s)["token_transfer"]:
                raise ConfigError(f"{s} has no context vector; it cannot be in the noise sweep")
        try:
            self.train_config()
            self.adversary_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def model_config(self, system: str, vocab_size: int, num_styles: int) -> ModelConfig:
        try:
            return ModelConfig(vocab_size=vocab_size, num_styles=num_styles, seed=self.seed,
                               **{**self.model, **parse_system(system)})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{**self.train, "seed": self.seed})

    def adversary_config(self) -> AdversaryConfig:
        return AdversaryConfig(**{**self.adversary, "seed": self.seed})

    def to_dict(self) -> dict:
        return asdict(self)

    # paths
    @property
    def root(self) -> Path:
        return Path(self.out)

    @property
    def data_dir(self) -> Path:
        return self.root / "data"

    def cell_dir(self, system: str) -> Path:
        return self.root / "cells" / system


def pinned_hyperparameters(preset: str = "paper") -> str:
    p = PRESETS[preset]
    m, t, a = p["model"], p["train"], p["adversary"]
    lines = [
        f"embedding dim D      {m['emb_dim']}",
        f"hidden size H        {m['enc_hidden']}",
        f"batch size           {t['batch_size']}",
        f"learning rate        {t['lr']}",
        f"lr decay per epoch   {t['lr_decay']}",
        f"dropout              {m['dropout']}",
        f"patience             {t['patience']}",
        f"beam                 {p['beam']}",
        f"adversary dim        {a['dim']}",
        f"adversary epochs     {a['epochs']}",
        f"adversary buckets    {a['buckets']}",
        f"adversary lr         {a['lr']}",
    ]
    return "\n".join(lines)


# -- data preparation ---------------------------------------------------------
@dataclass
class Prepared:
    vocab: td.Vocab
    records: Dict[str, List[td.VerseRecord]]
    pairs: Dict[str, List[td.PairExample]]
    manifest: dict

    def ae_split(self) -> td.DataSplit:
        parts = {k: td.make_ae_examples(v) for k, v in self.records.items()}
        return td.DataSplit(parts["train"], parts["dev"], parts["test"])

    def s2s_split(self) -> td.DataSplit:
        return td.DataSplit(self.pairs["train"], self.pairs["dev"], self.pairs["test"])


def _write_pairs(path: Path, pairs: Sequence[td.PairExample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in pairs:
            fh.write("\t".join([p.key, p.source_style, p.target_style,
                                " ".join(p.source), " ".join(p.target)]) + "\n")


def _read_pairs(path: Path) -> List[td.PairExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            key, ss, ts, src, tgt = line.rstrip("\n").split("\t")
            out.append(td.PairExample(key, tuple(src.split(" ")), tuple(tgt.split(" ")), ss, ts))
    return out


def load_records(cfg: RunConfig) -> List[td.VerseRecord]:
    if cfg.corpus is not None:
        return td.read_corpus(cfg.corpus)
    return parallel_corpus(cfg.toy_verses, cfg.toy_styles, seed=cfg.seed)


def prepare(cfg: RunConfig, records: List[td.VerseRecord] | None = None) -> dict:
    """Split by verse key, build the vocabulary on the training side and write shards."""
    records = load_records(cfg) if records is None else records
    groups = td.group_by_key(records)
    keys = td.split_keys(groups, cfg.fractions, cfg.seed)
    d = cfg.data_dir
    d.mkdir(parents=True, exist_ok=True)
    where = {k: part for part, ks in keys.items() for k in ks}
    by_part = {p: [r for r in records if where[r.key] == p] for p in keys}
    styles = sorted({r.style for r in records})
    vocab = td.build_vocab(by_part["train"], cfg.min_count, styles)
    td.write_corpus(d / "corpus.tsv", records, extra=[where[r.key] for r in records])
    vocab.save(d / "vocab.txt")
    counts = {}
    for part in keys:
        pairs = td.make_pairs({k: groups[k] for k in keys[part]})
        _write_pairs(d / f"pairs_{part}.tsv", pairs)
        counts[part] = {"pairs": len(pairs), "records": len(by_part[part]), "keys": len(keys[part])}
    corpus_hash = hashlib.sha256((d / "corpus.tsv").read_bytes()).hexdigest()[:16]
    manifest = {"seed": cfg.seed, "fractions": list(cfg.fractions), "styles": styles,
                "vocab_size": len(vocab), "counts": counts, "corpus_sha": corpus_hash,
                "total_pairs": sum(c["pairs"] for c in counts.values()),
                "min_count": cfg.min_count}
    manifest["hash"] = _hash(manifest)
    _write_json(d / "manifest.json", manifest)
    return manifest


def load_prepared(cfg: RunConfig) -> Prepared:
    d = cfg.data_dir
    mpath = d / "manifest.json"
    if not mpath.is_file():
        raise MissingArtifact(mpath, "prepare")
    manifest = _read_json(mpath)
    vocab = td.Vocab.load(d / "vocab.txt")
    records: Dict[str, List[td.VerseRecord]] = {"train": [], "dev": [], "test": []}
    with open(d / "corpus.tsv", encoding="utf-8") as fh:
        for line in fh:
            key, style, text, part = line.rstrip("\n").split("\t")
            records[part].append(td.VerseRecord(key, style, tuple(text.split(" "))))
    pairs = {p: _read_pairs(d / f"pairs_{p}.tsv") for p in records}
    return Prepared(vocab, records, pairs, manifest)


def ensure_prepared(cfg: RunConfig) -> Prepared:
    mpath = cfg.data_dir / "manifest.json"
    if mpath.is_file():
        m = _read_json(mpath)
        if m.get("seed") == cfg.seed and m.get("fractions") == list(cfg.fractions):
            return load_prepared(cfg)
    prepare(cfg)
    return load_prepared(cfg)


# -- training ---------------------------------------------------------------
def cell_hash(cfg: RunConfig, system: str, data: Prepared) -> str:
    mc = cfg.model_config(system, len(data.vocab), len(data.vocab.styles))
    return _hash({"system": system, "model": mc.to_dict(), "train": asdict(cfg.train_config()),
                  "data": data.manifest["hash"], "seed": cfg.seed})


def train_cell(cfg: RunConfig, system: str, data: Prepared | None = None, progress=None) -> dict:
    data = data or load_prepared(cfg)
    h = cell_hash(cfg, system, data)
    cdir = cfg.cell_dir(system)
    done = cdir / "done.json"
    if done.is_file() and _read_json(done).get("config_hash") == h:
        log.info("%s: up to date (%s)", system, h)
        return _read_json(done)
    cdir.mkdir(parents=True, exist_ok=True)
    mc = cfg.model_config(system, len(data.vocab), len(data.vocab.styles))
    split = data.s2s_split() if mc.mode == "S2S" else data.ae_split()
    model = Seq2Seq(mc, data.vocab)
    model, tlog = train(model, split, cfg.train_config(), log_path=cdir / "train_log.jsonl",
                        progress=progress)
    ppl = perplexity(model, split.dev)
    save_checkpoint(cdir / "model.ckpt", model, epoch=tlog.best_epoch,
                    extra={"config_hash": h, "seed": cfg.seed, "system": system})
    info = {"config_hash": h, "seed": cfg.seed, "system": system, "best_epoch": tlog.best_epoch,
            "epochs_run": len(tlog.epochs), "dev_ppl": ppl}
    _write_json(done, info)
    return info


def _train_cell_worker(args):
    cfg_dict, system = args
    cfg = RunConfig(**cfg_dict)
    return train_cell(cfg, system)


def load_cell(cfg: RunConfig, system: str) -> Seq2Seq:
    path = cfg.cell_dir(system) / "model.ckpt"
    if not path.is_file():
        raise MissingArtifact(path, f"train --system {system}")
    return load_checkpoint(path).model


def adversary_path(cfg: RunConfig) -> Path:
    return cfg.root / "adversary" / "adversary.bin"


def train_adversary_cell(cfg: RunConfig, data: Prepared | None = None) -> dict:
    """Train the adversary on the source side of the training split."""
    data = data or load_prepared(cfg)
    acfg = cfg.adversary_config()
    h = _hash({"adversary": asdict(acfg), "data": data.manifest["hash"]})
    meta_path = cfg.root / "adversary" / "adversary.json"
    if meta_path.is_file() and _read_json(meta_path).get("config_hash") == h:
        return _read_json(meta_path)
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    tr = data.records["train"]
    model = train_adversary([r.tokens for r in tr], [r.style for r in tr], acfg)
    model.save(adversary_path(cfg))
    te = data.records["test"]
    info = {"config_hash": h, "seed": cfg.seed,
            "train_acc": accuracy(model, [r.tokens for r in tr], [r.style for r in tr]),
            "test_acc": accuracy(model, [r.tokens for r in te], [r.style for r in te]),
            "chance": majority_baseline([r.style for r in te])}
    _write_json(meta_path, info)
    return info


def load_adversary(cfg: RunConfig) -> AdversaryModel:
    path = adversary_path(cfg)
    if not path.is_file():
        raise MissingArtifact(path, "train-adversary")
    return AdversaryModel.load(path)


def load_store(cfg: RunConfig, data: Prepared) -> EmbeddingStore:
    if cfg.embeddings is not None:
        return EmbeddingStore.load(cfg.embeddings)
    toks = data.vocab.itos[data.vocab.num_reserved:]
    return EmbeddingStore.random(toks, cfg.store_dim, cfg.seed)


# -- generation and evaluation ----------------------------------------------
@dataclass
class TestItem:
    source: Tuple[str, ...]
    target: Optional[Tuple[str, ...]]
    label: str
    out_style: Optional[str]


def test_items(cfg: RunConfig, system: str, data: Prepared) -> List[TestItem]:
    flags = parse_system(system) if system != SOURCE_ROW else {"mode": "S2S"}
    styles = data.vocab.styles
    if flags["mode"] == "S2S":
        return [TestItem(p.source, p.target, p.source_style,
                         p.target_style if flags.get("token_transfer") else None)
                for p in data.pairs["test"]]
    items = []
    for r in data.records["test"]:
        style = None
        if flags["conditional"]:
            style = r.style if cfg.cond_style == "source" else \
                styles[(styles.index(r.style) + 1) % len(styles)]
        items.append(TestItem(r.tokens, None, r.style, style))
    return items


def _mu_tag(mu: float) -> str:
    return f"{mu:.2f}"


def generate(cfg: RunConfig, system: str, mu: float = 0.0, data: Prepared | None = None,
             model: Seq2Seq | None = None) -> List[List[str]]:
    """Obfuscate the test side for one system and noise level; cached on disk."""
    data = data or load_prepared(cfg)
    if system == SOURCE_ROW:
        return [list(it.source) for it in test_items(cfg, system, data)]
    done = cfg.cell_dir(system) / "done.json"
    if not done.is_file():
        raise MissingArtifact(done, f"train --system {system}")
    h = _read_json(done)["config_hash"]
    key = _hash({"cell": h, "mu": mu, "beam": cfg.beam, "cond_style": cfg.cond_style})
    path = cfg.cell_dir(system) / f"outputs_mu{_mu_tag(mu)}.tsv"
    if path.is_file():
        lines = path.read_text(encoding="utf-8").split("\n")
        if lines and lines[0] == f"# config_hash={key} seed={cfg.seed}":
            return [ln.split("\t")[1].split(" ") if ln.split("\t")[1] else [] for ln in lines[1:] if ln]
    model = model or load_cell(cfg, system)
    noise = NoiseSpec(mu, seed=cfg.seed) if mu > 0 else None
    outs = []
    for i, it in enumerate(test_items(cfg, system, data)):
        outs.append(obfuscate(model, it.source, beam=cfg.beam, noise=noise,
                              target_style=it.out_style, index=i).tokens)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash={key} seed={cfg.seed}\n")
        for i, o in enumerate(outs):
            fh.write(f"{i}\t{' '.join(o)}\n")
    return outs


def evaluate_cell(cfg: RunConfig, system: str, mu: float = 0.0, data: Prepared | None = None,
                  adversary: AdversaryModel | None = None,
                  store: EmbeddingStore | None = None) -> EvalReport:
    data = data or load_prepared(cfg)
    adversary = adversary or load_adversary(cfg)
    store = store or load_store(cfg, data)
    items = test_items(cfg, system, data)
    outputs = generate(cfg, system, mu, data)
    is_s2s = system == SOURCE_ROW or parse_system(system)["mode"] == "S2S"
    ppl = None
    if system != SOURCE_ROW:
        ppl = _read_json(cfg.cell_dir(system) / "done.json")["dev_ppl"]
    rep = evaluate(outputs, [it.source for it in items],
                   [it.target for it in items] if is_s2s else None,
                   adversary=adversary, labels=[it.label for it in items], store=store, ppl=ppl)
    if system != SOURCE_ROW:
        rec = json.loads(rep.to_json())
        rec.update({"system": system, "mu": mu, "seed": cfg.seed,
                    "config_hash": _read_json(cfg.cell_dir(system) / "done.json")["config_hash"]})
        _write_json(cfg.cell_dir(system) / f"report_mu{_mu_tag(mu)}.json", rec)
    return rep


def noise_sweep(cfg: RunConfig, systems: Sequence[str] | None = None, data: Prepared | None = None,
                adversary=None, store=None) -> List[dict]:
    data = data or load_prepared(cfg)
    adversary = adversary or load_adversary(cfg)
    store = store or load_store(cfg, data)
    rows = []
    for system in systems or cfg.noise_systems:
        for mu in cfg.noise_grid:
            rep = evaluate_cell(cfg, system, mu, data, adversary, store)
            rows.append({"system": system, "mu": mu, "bleu_src": rep.bleu_src,
                         "meteor_src": rep.meteor_src, "delta_acc": rep.delta_acc})
    return rows


def format_noise_table(rows: Sequence[dict], sep: str = " | ") -> str:
    """Wide layout: one line per mu, (BLEU<-, MTR<-, dACC) per system."""
    systems = list(dict.fromkeys(r["system"] for r in rows))
    mus = sorted({r["mu"] for r in rows})
    at = {(r["system"], r["mu"]): r for r in rows}
    head = ["mu".rjust(5)] + [f"{s} {c}".rjust(max(7, len(s) + 6))
                              for s in systems for c in ("BLEU<-", "MTR<-", "dACC")]
    lines = [sep.join(head), "-" * len(sep.join(head))]
    for mu in mus:
        cells = [f"{mu:.2f}".rjust(5)]
        for s in systems:
            r = at.get((s, mu))
            vals = (None, None, None) if r is None else (
                r["bleu_src"], r["meteor_src"],
                None if r["delta_acc"] is None else 100 * r["delta_acc"])
            w = max(7, len(s) + 6)
            cells += ["-".rjust(w) if v is None else f"{v:.2f}".rjust(w) for v in vals]
        lines.append(sep.join(cells))
    return "\n".join(lines)


def write_noise_tsv(path: Path, rows: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("system\tmu\tbleu_src\tmeteor_src\tdelta_acc\n")
        for r in rows:
            fh.write(f"{r['system']}\t{r['mu']:.2f}\t{r['bleu_src']:.4f}\t{r['meteor_src']:.4f}\t"
                     f"{'' if r['delta_acc'] is None else format(r['delta_acc'], '.4f')}\n")


@dataclass
class MatrixResult:
    rows: List[Tuple[str, EvalReport]]
    noise: List[dict]
    table: str
    noise_table: str
    figures: List[str] = field(default_factory=list)


def run_matrix(cfg: RunConfig, progress=None) -> MatrixResult:
    """Prepare, train every cell and the adversary, then evaluate and report."""
    cfg.validate()
    data = ensure_prepared(cfg)
    systems = list(dict.fromkeys(list(cfg.systems) + list(cfg.noise_systems)))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            list(ex.map(_train_cell_worker, [(cfg.to_dict(), s) for s in systems]))
    else:
        for s in systems:
            train_cell(cfg, s, data, progress)
    train_adversary_cell(cfg, data)
    adversary = load_adversary(cfg)
    store = load_store(cfg, data)
    rows = [(s, evaluate_cell(cfg, s, 0.0, data, adversary, store)) for s in cfg.systems]
    rows.append((SOURCE_ROW, evaluate_cell(cfg, SOURCE_ROW, 0.0, data, adversary, store)))
    noise = noise_sweep(cfg, data=data, adversary=adversary, store=store)
    table = format_table(rows)
    noise_table = format_noise_table(noise)
    root = cfg.root
    (root / "matrix.txt").write_text(table + "\n\n" + noise_table + "\n", encoding="utf-8")
    _write_json(root / "matrix.json", {
        "seed": cfg.seed, "data": data.manifest["hash"],
        "rows": [{"system": n, **r.summary()} for n, r in rows]})
    write_noise_tsv(root / "noise_sweep.tsv", noise)
    figs = []
    if cfg.figures:
        from . import plotting
        logs = {}
        for s in systems:
            p = cfg.cell_dir(s) / "train_log.jsonl"
            if p.is_file():
                logs[s] = [json.loads(ln) for ln in p.read_text().splitlines() if ln]
        figs.append(str(plotting.training_curves(logs, root / "figures" / "training_curves.png")))
        for s in cfg.noise_systems:
            figs.append(str(plotting.noise_sweep([r for r in noise if r["system"] == s],
                                                 root / "figures" / f"noise_{s}.png")))
        figs.append(str(plotting.system_bars([{"system": n, "delta_acc": r.delta_acc} for n, r in rows],
                                             root / "figures" / "delta_acc.png")))
    return MatrixResult(rows, noise, table, noise_table, figs)
