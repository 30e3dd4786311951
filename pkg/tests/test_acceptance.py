"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are repeated in the "acceptance criteria" section of the pytest
terminal summary. Tolerances are the contract's; nothing here is tuned to pass.
"""
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from styleobf import autodiff as ad
from styleobf import evalmetrics as em
from styleobf import experiment as ex
from styleobf.autodiff import Tensor
from styleobf.decode import NoiseSpec, beam_search, greedy_decode, obfuscate
from styleobf.seqmodel import Seq2Seq, inner_attention, make_batch
from styleobf.textdata import (DataSplit, VerseRecord, build_vocab, check_disjoint,
                               make_ae_examples, make_pairs, split)
from styleobf.toycorpus import marker_corpus, parallel_corpus
from styleobf.trainer import perplexity, token_accuracy, train

from conftest import five_token_model, model_gradient_error, rel_err, stepper_for, toy_graph
from oracles import brute_force_best, transport_lp


# -- 1. gradient correctness --------------------------------------------------
def fd_error(fn, arrays, eps=1e-5, weight=1.0):
    xs = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = fn(*xs)
    R = np.random.default_rng(0).standard_normal(out.shape)

    def loss():
        with ad.no_grad():
            return float((fn(*xs).data * R).sum())

    ad.backward(ad.tsum(ad.mul(out, Tensor(R))))
    return max(rel_err(x.grad, weight * ad.numerical_grad(loss, x.data, eps)) for x in xs)


def op_cases():
    rng = np.random.default_rng(3)
    u = lambda *s: rng.uniform(-1, 1, s)
    pos = lambda *s: rng.uniform(0.5, 2.0, s)
    kinked = u(3, 4)
    kinked[np.abs(kinked) < 0.05] = 0.3
    ids = np.array([[0, 2, 2], [1, 0, 3]])
    tgt = np.array([[1, 0, 3], [2, 2, 0]])
    mask = np.array([[1, 1, 0], [1, 0, 0]], dtype=float)
    return {
        "add": (ad.add, [u(3, 4), u(4)]), "sub": (ad.sub, [u(3, 1), u(3, 4)]),
        "mul": (ad.mul, [u(2, 3, 4), u(3, 1)]), "div": (ad.div, [u(3, 4), pos(3, 4)]),
        "power": (lambda a: ad.power(a, -1.5), [pos(3, 4)]), "exp": (ad.exp, [u(3, 4)]),
        "log": (ad.log, [pos(3, 4)]), "tanh": (ad.tanh, [u(3, 4)]),
        "sigmoid": (ad.sigmoid, [u(3, 4)]), "relu": (ad.relu, [kinked]),
        "leaky_relu": (ad.leaky_relu, [kinked]), "matmul": (ad.matmul, [u(2, 3, 4), u(4, 5)]),
        "sum": (lambda a: ad.tsum(a, axis=1, keepdims=True), [u(3, 4)]),
        "mean": (lambda a: ad.mean(a, axis=0), [u(3, 4)]),
        "reshape": (lambda a: ad.reshape(a, (6, 2)), [u(3, 4)]),
        "transpose": (lambda a: ad.transpose(a, (1, 0, 2)), [u(2, 3, 4)]),
        "concat": (lambda a, b: ad.concat([a, b], axis=-1), [u(2, 3), u(2, 2)]),
        "stack": (lambda a, b: ad.stack([a, b], axis=1), [u(2, 3), u(2, 3)]),
        "getitem": (lambda a: ad.getitem(a, (slice(None), [0, 2, 2])), [u(3, 4)]),
        "embedding": (lambda w: ad.embedding(w, ids), [u(4, 3)]),
        "take_along_axis": (lambda a: ad.take_along_axis(a, tgt[..., None], -1), [u(2, 3, 4)]),
        "softmax": (lambda a: ad.softmax(a, axis=-1), [u(3, 4)]),
        "log_softmax": (lambda a: ad.log_softmax(a, axis=0), [u(3, 4)]),
        "cross_entropy": (lambda z: ad.reshape(ad.cross_entropy(z, tgt, mask), (1,)), [u(2, 3, 4)]),
        "dropout": (lambda a: ad.dropout(a, 0.3, True, np.random.default_rng(5)), [u(3, 4)]),
    }


def test_criterion_1_gradient_correctness(criterion):
    t0 = time.time()
    errors = {name: fd_error(fn, arrs) for name, (fn, arrs) in op_cases().items()}
    # the reversal layer is checked against its defined pseudo-gradient
    errors["grl"] = fd_error(lambda a: ad.grl(a, 0.7), [np.random.default_rng(1).uniform(-1, 1, (3, 4))],
                             weight=-0.7)
    model, batch = toy_graph(grl_lambda=1.0)
    errors["toy graph AE+GRL+C"], where = model_gradient_error(model, batch, per_tensor=10)
    elapsed = time.time() - t0
    worst = max(errors, key=errors.get)
    ok = errors[worst] < 1e-4 and elapsed < 60
    criterion(1, ok, f"{len(errors)} checks, worst rel err {errors[worst]:.2e} ({worst}), {elapsed:.1f}s")
    assert ok, errors


# -- 2. GRL semantics ------------------------------------------------------------
def test_criterion_2_grl_semantics(criterion):
    model, batch = toy_graph()
    names = [k for k in model.params if k.startswith(("enc.", "embed"))]
    worst, same_loss = 0.0, True
    for lam in (0.0, 0.5, 1.0):
        res = {}
        for reverse in (True, False):
            enc = model.encode(batch.src, batch.src_mask)
            loss = ad.cross_entropy(model.classify_style(enc.context, scale=lam, reverse=reverse),
                                    batch.src_style)
            res[reverse] = (loss.item(), ad.grad(loss, [model.params[k] for k in names]))
        same_loss &= res[True][0] == res[False][0]
        for g_rev, g_id in zip(res[True][1], res[False][1]):
            worst = max(worst, float(np.max(np.abs(g_rev - (-lam) * g_id))))
    ok = worst <= 1e-12 and same_loss
    criterion(2, ok, f"max |g_rev + lambda g_id| = {worst:.1e} over {len(names)} encoder tensors, "
                     f"forward losses identical: {same_loss}")
    assert ok


# -- 3. inner attention -------------------------------------------------------------
def test_criterion_3_inner_attention(criterion):
    rng = np.random.default_rng(11)
    B, T, D, H = 4, 6, 5, 7
    states = Tensor(rng.standard_normal((B, T, H)))
    emb = Tensor(rng.standard_normal((B, T, D)))
    mask = np.ones((B, T))
    mask[2, 4:] = 0
    W = Tensor(rng.standard_normal((D + H, H)))
    c, a = inner_attention(states, emb, W, mask)
    sum_err = float(np.max(np.abs(a.data.sum(axis=1) - 1.0)))
    z = np.concatenate([emb.data, states.data], -1)
    s = z @ W.data + np.where(mask > 0, 0, -np.inf)[:, :, None]
    ref = np.exp(s - s.max(1, keepdims=True))
    ref /= ref.sum(1, keepdims=True)
    c_err = float(np.max(np.abs(c.data - (ref * states.data).sum(1))))
    _, a0 = inner_attention(states, emb, Tensor(np.zeros((D + H, H))))
    u_err = float(np.max(np.abs(a0.data - 1.0 / T)))
    ok = sum_err <= 1e-6 and c_err <= 1e-6 and u_err <= 1e-6
    criterion(3, ok, f"weight sums {sum_err:.1e}, uniform at W=0 {u_err:.1e}, c recompute {c_err:.1e}")
    assert ok


# -- 4. beam search oracle ----------------------------------------------------------
def test_criterion_4_beam_oracle(criterion):
    t0 = time.time()
    exact = greedy_ok = 0
    for seed in range(20):
        model = five_token_model(seed)
        st = stepper_for(model)
        res = beam_search(st, beam=625, max_len=4)
        score, seq, _ = brute_force_best(st, len(model.vocab), 4)
        exact += res.tokens == seq and abs(res.score - score) <= 1e-9
        b1, g = beam_search(st, beam=1, max_len=4), greedy_decode(st, max_len=4)
        greedy_ok += b1.tokens == g.tokens and abs(b1.logprob - g.logprob) <= 1e-12
    elapsed = time.time() - t0
    ok = exact == 20 and greedy_ok == 20 and elapsed < 60
    criterion(4, ok, f"beam 625 = brute force on {exact}/20, beam 1 = greedy on {greedy_ok}/20, "
                     f"{elapsed:.1f}s")
    assert ok


# -- 5. WMD oracle ---------------------------------------------------------------------
def test_criterion_5_wmd_oracle(criterion):
    rng = np.random.default_rng(2024)
    words = [f"t{i}" for i in range(10)]
    store = em.EmbeddingStore({w: rng.standard_normal(3) for w in words})
    worst = sym = 0.0
    bound_ok = True
    for _ in range(50):
        sides = []
        for _ in range(2):
            uniq = rng.choice(words, size=int(rng.integers(1, 6)), replace=False)
            sides.append([str(w) for w in rng.choice(uniq, size=int(rng.integers(len(uniq), 9)))
                          ] + [str(w) for w in uniq])
        a, b = sides
        plan = em.wmd_plan(a, b, store)
        _, wa, xa = em.nbow(a, store)
        _, wb, xb = em.nbow(b, store)
        cost = np.linalg.norm(xa[:, None] - xb[None], axis=-1)
        worst = max(worst, abs(plan.cost - transport_lp(wa, wb, cost)))
        sym = max(sym, abs(plan.cost - em.wmd(b, a, store)))
        bound_ok &= plan.cost >= np.linalg.norm(wa @ xa - wb @ xb) - 1e-9
    ok = worst <= 1e-6 and sym <= 1e-6 and bound_ok
    criterion(5, ok, f"50 pairs: max |simplex - LP| {worst:.1e}, asymmetry {sym:.1e}, "
                     f"centroid bound holds: {bound_ok}")
    assert ok


# -- 6. metric spot values ---------------------------------------------------------------
def test_criterion_6_metric_spot_values(criterion):
    corpus = [["in", "the", "beginning"], ["and", "the", "earth", "was", "void"]]
    checks = {
        "BLEU identical": (em.bleu4(corpus, corpus), 100.0, 1e-9),
        "clipped p1": (float(em.modified_precision("the the the the the the the".split(),
                                                   "the cat is on the mat".split(), 1)), 2 / 7, 0),
        "METEOR-lite identical": (em.meteor_lite(list("abcd"), list("abcd")), 99.21875, 1e-9),
        "dACC source row": (em.delta_accuracy(0.866, 0.20), 0.666, 1e-12),
        "dACC s2s+TT": (em.delta_accuracy(0.08, 0.20), -0.12, 1e-12),
    }
    bad = {k: v[0] for k, v in checks.items() if abs(v[0] - v[1]) > v[2]}
    ok = not bad
    criterion(6, ok, "; ".join(f"{k}={v[0]:.6g}" for k, v in checks.items()))
    assert ok, bad


# -- 7 and 9. toy overfit and noise monotonicity --------------------------------------------
@pytest.fixture(scope="module")
def overfit_ae():
    recs = parallel_corpus(17, 3, seed=0)[:50]
    vocab = build_vocab(recs)
    exs = make_ae_examples(recs)
    cfg = ex.RunConfig.build("toy", {"train": {"max_epochs": 200, "patience": 200}})
    model = Seq2Seq(cfg.model_config("AE", len(vocab), len(vocab.styles)), vocab)
    done = {}

    def reached(epoch, m, opt):
        if token_accuracy(m, exs) >= 0.99 and perplexity(m, exs) < 1.2:
            done.setdefault("epoch", epoch)
            return True
        return False

    t0 = time.time()
    train(model, DataSplit(exs, exs, []), cfg.train_config(), progress=None, on_epoch=reached)
    return model, exs, done.get("epoch"), time.time() - t0


def test_criterion_7_toy_overfit(overfit_ae, criterion):
    model, exs, epoch, elapsed = overfit_ae
    acc, ppl = token_accuracy(model, exs), perplexity(model, exs)
    ok = acc >= 0.99 and ppl < 1.2 and epoch is not None and elapsed < 300
    criterion(7, ok, f"{len(exs)} sentences: token acc {acc:.4f}, PPL {ppl:.4f}, "
                     f"epochs {epoch}, {elapsed:.1f}s")
    assert ok


def test_criterion_9_noise_monotonicity(overfit_ae, criterion):
    model, exs, _, _ = overfit_ae
    sources = [list(e.source) for e in exs]
    scores = []
    for mu in ex.NOISE_GRID:
        noise = NoiseSpec(mu, seed=0) if mu > 0 else None
        outs = [obfuscate(model, s, beam=5, noise=noise, index=i).tokens for i, s in enumerate(sources)]
        scores.append(em.bleu4(outs, sources))
    rises = [b - a for a, b in zip(scores, scores[1:]) if b > a]
    ok = len(rises) <= 1 and all(r <= 1.0 for r in rises)
    criterion(9, ok, "BLEU<- by mu: " + ", ".join(f"{m:.2f}:{s:.2f}" for m, s in zip(ex.NOISE_GRID, scores)))
    assert ok


# -- 8. invariance trend ----------------------------------------------------------------------
def probe_accuracy(model, exs):
    from sklearn.linear_model import LogisticRegression
    from sklearn.model_selection import cross_val_score
    b = make_batch(exs, model.vocab, model.config)
    with ad.no_grad():
        X = model.encode(b.src, b.src_mask).context.data
    return float(cross_val_score(LogisticRegression(max_iter=2000), X, b.src_style, cv=5).mean())


def test_criterion_8_invariance_trend(criterion):
    recs = marker_corpus(500, 2, seed=3, lexicon=12, length=(3, 6))
    vocab = build_vocab(recs)
    exs = make_ae_examples(recs)
    data = split(exs, (0.8, 0.1, 0.1), seed=0)
    cfg = ex.RunConfig.build("toy")
    acc = {}
    for system in ("AE", "AE+GRL"):
        model = Seq2Seq(cfg.model_config(system, len(vocab), len(vocab.styles)), vocab)
        train(model, data, cfg.train_config(), progress=None)
        acc[system] = probe_accuracy(model, exs)
    ok = acc["AE"] >= 0.95 and acc["AE+GRL"] <= 0.65
    criterion(8, ok, f"probe on context vectors: plain AE {acc['AE']:.3f} (needs >= 0.90, "
                     f"separable >= 0.95), AE+GRL {acc['AE+GRL']:.3f} (needs <= 0.65)")
    assert ok


# -- 10. pipeline structure -----------------------------------------------------------------------
def test_criterion_10_pipeline_structure(tmp_path, criterion):
    group = [VerseRecord("gen1:1", s, ("in", "the", "beginning", s.lower()))
             for s in ("BBE", "KJV", "YLT", "WEB", "DBY")]
    n_pairs = len(make_pairs(group))
    recs = parallel_corpus(40, 5, seed=1)
    ds = split(make_pairs(recs), seed=1)
    try:
        check_disjoint(ds)
        disjoint = True
    except ValueError:
        disjoint = False
    t0 = time.time()
    proc = subprocess.run([sys.executable, "-m", "styleobf.cli", "matrix", "--preset", "toy",
                           "--out", str(tmp_path / "toy")], capture_output=True, text=True)
    elapsed = time.time() - t0
    rows = []
    if proc.returncode == 0:
        rows = [r["system"] for r in json.loads((tmp_path / "toy" / "matrix.json").read_text())["rows"]]
    figures = sorted(p.name for p in (tmp_path / "toy" / "figures").glob("*.png"))
    ok = (n_pairs == 20 and disjoint and proc.returncode == 0 and len(rows) == 7
          and elapsed < 1800 and figures)
    criterion(10, ok, f"{n_pairs} pairs from a 5-style group, disjoint splits: {disjoint}, "
                      f"toy matrix exit {proc.returncode} with {len(rows)} rows and "
                      f"{len(figures)} figures in {elapsed / 60:.1f} min")
    assert ok, proc.stderr[-2000:]


# -- 11. determinism ----------------------------------------------------------------------------------
def test_criterion_11_determinism(tmp_path, criterion):
    config = {"toy_verses": 20, "store_dim": 4,
              "model": {"emb_dim": 8, "enc_hidden": 12, "dec_hidden": 12, "style_emb_dim": 4},
              "train": {"max_epochs": 3}, "adversary": {"dim": 8, "buckets": 256, "epochs": 5},
              "systems": ["s2s+TT", "AE+C+GRL"], "noise_systems": ["AE+C+GRL"],
              "noise_grid": [0.0, 0.1]}
    cfgfile = tmp_path / "cfg.json"
    cfgfile.write_text(json.dumps(config), encoding="utf-8")
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        base = ["--config", str(cfgfile), "--out", str(out), "--seed", "7"]
        stdout = []
        for cmd in (["prepare"], ["train", "--system", "AE+C+GRL"], ["train-adversary"],
                    ["evaluate", "--system", "AE+C+GRL", "--mu", "0.1"], ["matrix", "--no-figures"]):
            proc = subprocess.run([sys.executable, "-m", "styleobf.cli", *cmd, *base],
                                  capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            stdout.append(proc.stdout.replace(str(out), "<out>"))
        files = {p.relative_to(out).as_posix(): p.read_bytes() for p in out.rglob("*")
                 if p.suffix in (".json", ".tsv", ".txt")}
        outputs.append((stdout, files))
    (sa, fa), (sb, fb) = outputs
    reports = [k for k in fa if "report_" in k or k in ("matrix.json", "noise_sweep.tsv")]
    same = sa == sb and fa == fb
    ok = same and len(reports) >= 4
    criterion(11, ok, f"two runs, {len(fa)} artifacts incl. {len(reports)} metric reports, "
                      f"byte-identical: {same}")
    assert ok
