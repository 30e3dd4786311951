import numpy as np
import pytest

from styleobf.seqmodel import ModelConfig, Seq2Seq, make_batch
from styleobf.textdata import VerseRecord, build_vocab, make_ae_examples, make_pairs


def tiny_records(n_keys=4, styles=("A", "B", "C"), n_words=13, seed=0):
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(n_words)]
    recs = []
    for k in range(n_keys):
        for s in styles:
            n = int(rng.integers(1, 5))
            recs.append(VerseRecord(f"k{k}", s, tuple(str(w) for w in rng.choice(words, size=n))))
    return recs


def tiny_model(mode="AE", grl=False, conditional=False, token_transfer=False, seed=0,
               records=None, **kw):
    recs = records or tiny_records()
    vocab = build_vocab(recs)
    opts = dict(emb_dim=8, enc_hidden=12, dec_hidden=10, dropout=0.0, init_scale=0.5)
    opts.update(kw)
    cfg = ModelConfig(len(vocab), len(vocab.styles), mode=mode, grl=grl, conditional=conditional,
                      token_transfer=token_transfer, seed=seed, **opts)
    model = Seq2Seq(cfg, vocab)
    ex = make_pairs(recs) if mode == "S2S" else make_ae_examples(recs)
    return model, make_batch(ex[:6], vocab, cfg)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


GRAPH_WORDS = [f"w{i}" for i in range(13)]


def toy_graph_records():
    """4 verses x 3 styles covering 13 words: vocabulary of exactly 20 ids."""
    recs = []
    for i in range(12):
        toks = [GRAPH_WORDS[(2 * i + j) % 13] for j in range(1 + i % 4)]
        recs.append(VerseRecord(f"k{i // 3}", "ABC"[i % 3], tuple(toks)))
    return recs


def toy_graph(grl_lambda=1.0, **kw):
    """The AE+GRL+C toy graph: D=8, H=12, vocab 20, 3 styles, dropout off."""
    recs = toy_graph_records()
    vocab = build_vocab(recs)
    assert len(vocab) == 20
    opts = dict(mode="AE", grl=True, conditional=True, emb_dim=8, enc_hidden=12, dec_hidden=12,
                style_emb_dim=4, dropout=0.0, init_scale=0.5, grl_lambda=grl_lambda)
    opts.update(kw)
    cfg = ModelConfig(len(vocab), 3, **opts)
    model = Seq2Seq(cfg, vocab)
    return model, make_batch(make_ae_examples(recs)[:6], vocab, cfg)


def model_gradient_error(model, batch, per_tensor=12, eps=1e-5, seed=0):
    """Worst per-tensor relative error between backward() and central differences.

    With a style head the reference is the GRL pseudo-gradient: non-head
    parameters get d(rec) - lambda * d(style), head parameters d(style).
    """
    from styleobf import autodiff as ad
    rng = np.random.default_rng(seed)
    lam = model.config.grl_lambda

    def losses():
        with ad.no_grad():
            out = model.compute_loss(batch)
        return out.reconstruction.item(), (out.style.item() if out.style is not None else 0.0)

    model.zero_grad()
    ad.backward(model.compute_loss(batch).objective)
    worst, where = 0.0, None
    for name, p in model.params.items():
        flat = p.data.reshape(-1)
        idx = rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False)
        analytic = p.grad.reshape(-1)[idx] if p.grad is not None else np.zeros(len(idx))
        w = 1.0 if name.startswith("head.") else -lam
        num = []
        for i in idx:
            old = flat[i]
            flat[i] = old + eps
            rp, sp = losses()
            flat[i] = old - eps
            rm, sm = losses()
            flat[i] = old
            num.append((rp - rm) / (2 * eps) + w * (sp - sm) / (2 * eps))
        err = rel_err(analytic, num)
        if err > worst:
            worst, where = err, name
    return worst, where


def five_token_model(seed):
    """Random AE over 7 ids, 5 of them emittable (PAD and BOS are banned)."""
    recs = [VerseRecord("k0", "A", ("w0", "w1")), VerseRecord("k1", "A", ("w1",))]
    vocab = build_vocab(recs)
    assert len(vocab) == 7
    cfg = ModelConfig(len(vocab), 1, emb_dim=6, enc_hidden=8, dec_hidden=8, dropout=0.0,
                      init_scale=1.5, seed=seed)
    return Seq2Seq(cfg, vocab)


def stepper_for(model, tokens=("w0", "w1")):
    from styleobf.autodiff import no_grad
    from styleobf.decode import ModelStepper
    with no_grad():
        enc = model.encode(np.array([model.vocab.encode(tokens)]))
    return ModelStepper(model, enc)


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test still asserts on its own."""
    def record(number, ok, detail):
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
