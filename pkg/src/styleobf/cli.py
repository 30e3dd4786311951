"""Command-line entry point: ``styleobf <command> [--config PATH] [--preset toy|paper] ...``.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import experiment as ex
from .evalmetrics import format_table
from .seqmodel import ConfigError
from .textdata import IngestionError, detokenize, tokenize

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--preset", choices=sorted(ex.PRESETS), default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="run directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="styleobf", description=__doc__.split("\n")[0])
    parser.add_argument("--show-preset", choices=sorted(ex.PRESETS),
                        help="print a preset's pinned hyperparameters and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("prepare", help="split a verse corpus and write vocabulary and pair shards")
    _common(p)
    p.add_argument("--corpus", type=Path, help="TSV corpus (key, style, text); toy corpus if omitted")

    p = sub.add_parser("train", help="train one system cell")
    _common(p)
    p.add_argument("--system", required=True, help="e.g. AE, AE+GRL, AE+C+GRL, s2s+TT")

    p = sub.add_parser("train-adversary", help="train the style adversary on the training sources")
    _common(p)

    p = sub.add_parser("obfuscate", help="rewrite sentences with a trained system")
    _common(p)
    p.add_argument("--system", required=True)
    p.add_argument("--mu", type=float, default=0.0, help="noise level on the context vector")
    p.add_argument("--style", help="target style (TT and conditional systems)")
    p.add_argument("--input", type=Path, help="one sentence per line; the test split if omitted")

    p = sub.add_parser("evaluate", help="score a system's test-set output")
    _common(p)
    p.add_argument("--system", required=True, help="system label or 'source'")
    p.add_argument("--mu", type=float, default=0.0)

    p = sub.add_parser("noise-sweep", help="metrics across the noise grid for AE systems")
    _common(p)
    p.add_argument("--systems", nargs="+")

    p = sub.add_parser("matrix", help="run every system, the adversary and the noise sweep")
    _common(p)
    p.add_argument("--workers", type=int)
    p.add_argument("--no-figures", action="store_true")
    return parser


def load_config(args) -> ex.RunConfig:
    overrides = {}
    preset = None
    if getattr(args, "config", None) is not None:
        try:
            overrides = json.loads(args.config.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON: {exc}") from None
        if not isinstance(overrides, dict):
            raise ConfigError(f"{args.config}: top level must be an object")
        preset = overrides.pop("preset", None)
    preset = args.preset or preset or "toy"
    # flags win over the file
    for flag, key in (("seed", "seed"), ("out", "out"), ("corpus", "corpus"), ("workers", "workers")):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[key] = str(val) if isinstance(val, Path) else val
    if getattr(args, "no_figures", False):
        overrides["figures"] = False
    cfg = ex.RunConfig.build(preset, overrides)
    cfg.validate()
    system = getattr(args, "system", None)
    if system is not None and system != ex.SOURCE_ROW:
        cfg.model_config(system, vocab_size=10, num_styles=2)
    for s in getattr(args, "systems", None) or ():
        if ex.parse_system(s)["token_transfer"]:
            raise ConfigError(f"{s} has no context vector; it cannot be in the noise sweep")
    return cfg


def cmd_prepare(cfg, args) -> int:
    m = ex.prepare(cfg)
    c = m["counts"]
    print(f"styles: {' '.join(m['styles'])}  vocab: {m['vocab_size']}")
    for part in ("train", "dev", "test"):
        print(f"{part:5s}  keys={c[part]['keys']}  records={c[part]['records']}  pairs={c[part]['pairs']}")
    print(f"total pairs: {m['total_pairs']}  manifest: {cfg.data_dir / 'manifest.json'}")
    return EXIT_OK


def cmd_train(cfg, args) -> int:
    data = ex.load_prepared(cfg)
    info = ex.train_cell(cfg, args.system, data, progress=sys.stderr)
    print(f"{args.system}: best_epoch={info['best_epoch']} dev_ppl={info['dev_ppl']:.4f} "
          f"config_hash={info['config_hash']}")
    return EXIT_OK


def cmd_train_adversary(cfg, args) -> int:
    info = ex.train_adversary_cell(cfg)
    print(f"adversary: train_acc={info['train_acc']:.4f} test_acc={info['test_acc']:.4f} "
          f"chance={info['chance']:.4f}")
    return EXIT_OK


def cmd_obfuscate(cfg, args) -> int:
    if args.input is None:
        outs = ex.generate(cfg, args.system, args.mu)
        for o in outs:
            print(detokenize(o))
        return EXIT_OK
    from .decode import NoiseSpec, obfuscate
    model = ex.load_cell(cfg, args.system)
    noise = NoiseSpec(args.mu, seed=cfg.seed) if args.mu > 0 else None
    with open(args.input, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            toks = tokenize(line)
            if not toks:
                print("")
                continue
            print(obfuscate(model, toks, beam=cfg.beam, noise=noise, target_style=args.style,
                            index=i).text)
    return EXIT_OK


def cmd_evaluate(cfg, args) -> int:
    rep = ex.evaluate_cell(cfg, args.system, args.mu)
    print(format_table([(args.system, rep)]))
    print(f"adversary_acc={rep.adversary_acc:.4f} chance={rep.chance:.4f}")
    return EXIT_OK


def cmd_noise_sweep(cfg, args) -> int:
    rows = ex.noise_sweep(cfg, args.systems)
    print(ex.format_noise_table(rows))
    ex.write_noise_tsv(cfg.root / "noise_sweep.tsv", rows)
    if cfg.figures:
        from . import plotting
        for s in dict.fromkeys(r["system"] for r in rows):
            plotting.noise_sweep([r for r in rows if r["system"] == s],
                                 cfg.root / "figures" / f"noise_{s}.png")
    return EXIT_OK


def cmd_matrix(cfg, args) -> int:
    t0 = time.time()
    res = ex.run_matrix(cfg, progress=sys.stderr if args.verbose else None)
    print(res.table)
    print()
    print(res.noise_table)
    for f in res.figures:
        print(f"figure: {f}")
    print(f"matrix finished in {time.time() - t0:.1f}s", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "train-adversary": cmd_train_adversary,
            "obfuscate": cmd_obfuscate, "evaluate": cmd_evaluate, "noise-sweep": cmd_noise_sweep,
            "matrix": cmd_matrix}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.show_preset:
        print(ex.pinned_hyperparameters(args.show_preset))
        return EXIT_OK
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "preset", None) == "paper":
        print(ex.pinned_hyperparameters("paper"))
    try:
        cfg = load_config(args)
    except (ConfigError, IngestionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, IngestionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ex.MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any failure mid-run is a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
