import json

import numpy as np
import pytest

from styleobf import trainer as tr
from styleobf.seqmodel import Seq2Seq
from styleobf.textdata import DataSplit, make_ae_examples, split
from styleobf.trainer import TrainConfig

from conftest import tiny_model, tiny_records


def small_split(n_keys=9):
    recs = tiny_records(n_keys=n_keys)
    return split(make_ae_examples(recs), (0.6, 0.2, 0.2), seed=0)


def test_batches_cover_every_example_once():
    items = list(range(23))
    got = [x for b in tr.batches(items, 5, seed=1, epoch=2) for x in b]
    assert sorted(got) == items
    assert got == [x for b in tr.batches(items, 5, seed=1, epoch=2) for x in b]
    assert got != [x for b in tr.batches(items, 5, seed=1, epoch=3) for x in b]
    assert [len(b) for b in tr.batches(items, 5)] == [5, 5, 5, 5, 3]
    with pytest.raises(ValueError):
        list(tr.batches(items, 0))


@pytest.mark.parametrize("losses,patience,expected", [
    ([5, 4, 3, 3.5, 3.6, 3.7], 3, (6, 3)),
    ([5, 4, 3, 2], 3, (None, 4)),
    ([1, 2], 1, (2, 1)),
    ([3, 3, 3, 3], 3, (4, 1)),
])
def test_early_stop_point(losses, patience, expected):
    assert tr.early_stop_point(losses, patience) == expected


def test_train_config_validation():
    for bad in (dict(batch_size=0), dict(patience=0), dict(max_epochs=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_training_lowers_dev_loss_and_logs(tmp_path):
    model, _ = tiny_model(dropout=0.1, init_scale=0.1)
    ds = small_split()
    before = tr.evaluate_loss(model, ds.dev)["loss"]
    model, log = tr.train(model, ds, TrainConfig(batch_size=4, lr=0.01, max_epochs=8, patience=8),
                          log_path=tmp_path / "log.jsonl", progress=None)
    assert min(log.dev_losses()) < before
    assert log.best_epoch == int(np.argmin(log.dev_losses())) + 1
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert len(lines) == len(log.epochs)
    assert json.loads(lines[0])["epoch"] == 1
    lrs = [e.lr for e in log.epochs]
    assert np.allclose(np.array(lrs[1:]) / np.array(lrs[:-1]), 0.75)


def test_best_epoch_parameters_are_restored():
    model, _ = tiny_model(init_scale=0.1)
    ds = small_split()
    snapshots = {}
    model, log = tr.train(model, ds, TrainConfig(batch_size=4, lr=0.05, lr_decay=1.0, max_epochs=6,
                                                 patience=6),
                          progress=None, on_epoch=lambda ep, m, o: snapshots.__setitem__(ep, m.state_arrays()))
    best = snapshots[log.best_epoch]
    for k, p in model.params.items():
        assert np.array_equal(p.data, best[k])
    assert tr.evaluate_loss(model, ds.dev)["loss"] == pytest.approx(min(log.dev_losses()), rel=1e-12)


def test_patience_stops_training():
    model, _ = tiny_model(init_scale=0.1)
    ds = small_split()
    # a huge rate makes dev loss bounce, patience 1 must stop early
    model, log = tr.train(model, ds, TrainConfig(batch_size=2, lr=0.5, lr_decay=1.0, max_epochs=30,
                                                 patience=1, clip_norm=None), progress=None)
    assert log.stopped_early and len(log.epochs) < 30
    assert len(log.epochs) - log.best_epoch == 1


def test_training_is_deterministic_under_seed():
    runs = []
    for _ in range(2):
        model, _ = tiny_model(dropout=0.2, grl=True, seed=1)
        model, log = tr.train(model, small_split(), TrainConfig(batch_size=3, lr=0.01, max_epochs=3,
                                                                seed=7), progress=None)
        runs.append((log.dev_losses(), model.state_arrays()))
    assert runs[0][0] == runs[1][0]
    for k in runs[0][1]:
        assert np.array_equal(runs[0][1][k], runs[1][1][k])


def test_zero_adversarial_weight_matches_plain_model():
    ds = small_split()
    cfg = TrainConfig(batch_size=3, lr=0.01, max_epochs=3, adv_weight=0.0)
    plain, _ = tiny_model(dropout=0.2, seed=2)
    head, _ = tiny_model(dropout=0.2, seed=2, grl=True)
    plain, lp = tr.train(plain, ds, cfg, progress=None)
    head, lh = tr.train(head, ds, cfg, progress=None)
    assert lp.dev_losses() == lh.dev_losses()
    for k, p in plain.params.items():
        assert np.array_equal(p.data, head.params[k].data), k


def test_head_learns_with_zero_adversarial_weight():
    model, _ = tiny_model(grl=True, seed=2)
    before = model.params["head.W2"].data.copy()
    tr.train(model, small_split(), TrainConfig(batch_size=3, max_epochs=1, adv_weight=0.0), progress=None)
    assert not np.array_equal(before, model.params["head.W2"].data)


def test_divergence_restores_best(monkeypatch):
    model, _ = tiny_model()
    ds = small_split()
    start = model.state_arrays()
    real = Seq2Seq.compute_loss
    calls = {"n": 0}

    def flaky(self, batch, training=False, rng=None, adv_weight=1.0):
        out = real(self, batch, training, rng, adv_weight)
        if training:
            calls["n"] += 1
            if calls["n"] > 5:
                out.reconstruction.data = np.array(np.nan)
        return out

    monkeypatch.setattr(Seq2Seq, "compute_loss", flaky)
    with pytest.raises(tr.TrainingDiverged) as info:
        tr.train(model, ds, TrainConfig(batch_size=2, max_epochs=5), progress=None)
    assert info.value.model is model
    # diverged inside the first epoch, so the best state is the initial one
    assert not info.value.log.epochs
    for k, p in model.params.items():
        assert np.array_equal(p.data, start[k])


def test_perplexity_and_token_accuracy_ranges():
    model, _ = tiny_model()
    ds = small_split()
    assert tr.perplexity(model, ds.dev) > 1.0
    assert 0.0 <= tr.token_accuracy(model, ds.dev) <= 1.0
    with pytest.raises(ValueError):
        tr.perplexity(model, [])
    with pytest.raises(ValueError):
        tr.train(model, DataSplit([], [], []), TrainConfig(), progress=None)
