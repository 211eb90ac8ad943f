"""Optimizer arithmetic, determinism, NaN abort, checkpoints, CV."""

import numpy as np
import pytest

from adaslstm import data, training
from adaslstm.config import ModelConfig, TrainConfig
from adaslstm.embedding import Vocab
from adaslstm.errors import NumericalError
from adaslstm.model import AdaptiveClassifier
from adaslstm.tensor import Tensor
from adaslstm.training import Adam, clip_global_norm


def tiny_config(**kw):
    base = dict(max_layers=2, hidden_size=8, word_dim=8, char_dim=4,
                char_embed_dim=4, depth_embed_dim=4, precision="float64",
                embed_dropout=0.0, hidden_dropout=0.0, selection="hard")
    base.update(kw)
    return ModelConfig(**base)


def tiny_model(ds, **kw):
    vocab = Vocab.from_corpus(ds.sentences())
    return AdaptiveClassifier(tiny_config(**kw), vocab, ds.labels, seed=3)


class TestClipping:
    def test_at_boundary_unchanged(self):
        grads = {"p": np.array([3.0, 4.0])}
        out, norm = clip_global_norm(grads, 5.0)
        assert norm == 5.0
        assert out["p"] is grads["p"]

    def test_scales_to_max_norm(self):
        out, norm = clip_global_norm({"p": np.array([6.0, 8.0])}, 5.0)
        assert norm == 10.0
        np.testing.assert_allclose(out["p"], [3.0, 4.0])

    def test_post_clip_norm_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            grads = {f"p{i}": rng.standard_normal(rng.integers(1, 20)) * 10
                     for i in range(3)}
            out, _ = clip_global_norm(grads, 5.0)
            total = np.sqrt(sum(float(np.sum(g * g)) for g in out.values()))
            assert total <= 5.0 + 1e-9


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        opt = Adam({"p": p}, lr=0.1)
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, 2.0])

    def test_constant_gradient_update_approaches_lr(self):
        """With a steady gradient, Adam's step size converges to lr."""
        p = Tensor(np.array([0.0]), requires_grad=True)
        opt = Adam({"p": p}, lr=0.01, clip_norm=1e9, lr_decay=1.0)
        prev = p.data.copy()
        for _ in range(200):
            p.grad = np.array([3.7])
            opt.step()
            delta = abs(float(p.data[0] - prev[0]))
            prev = p.data.copy()
        assert abs(delta - 0.01) / 0.01 < 0.05

    def test_step_counter_increments(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        opt = Adam({"p": p})
        for expected in range(1, 4):
            p.grad = np.ones(2)
            opt.step()
            assert opt.step_count == expected

    def test_decay_reaches_factor_after_one_epoch(self):
        p = Tensor(np.zeros(1), requires_grad=True)
        opt = Adam({"p": p}, lr=0.001, lr_decay=0.97, steps_per_epoch=10)
        assert opt.current_lr == 0.001
        for _ in range(10):
            p.grad = np.ones(1)
            opt.step()
        np.testing.assert_allclose(opt.current_lr, 0.001 * 0.97, rtol=1e-12)

    def test_skips_frozen_params(self):
        frozen = Tensor(np.ones(2), requires_grad=False)
        live = Tensor(np.ones(2), requires_grad=True)
        opt = Adam({"f": frozen, "l": live})
        live.grad = np.ones(2)
        opt.step()
        np.testing.assert_array_equal(frozen.data, [1.0, 1.0])
        assert not np.array_equal(live.data, [1.0, 1.0])

    def test_grads_cleared_after_step(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        opt = Adam({"p": p})
        p.grad = np.ones(2)
        opt.step()
        assert p.grad is None


def run_fit(ds, seed, selection="hard", epochs=3):
    model = tiny_model(ds, selection=selection)
    tc = TrainConfig(epochs=epochs, batch_size=8, seed=seed, dev_fraction=0.0,
                     patience=0, lr_decay=1.0)
    hist = training.fit(model, ds, tc)
    return model, hist


class TestTrainingLoop:
    def test_identical_seeds_identical_losses(self):
        ds = data.make_memorization_corpus(seed=2, n=16)
        _, h1 = run_fit(ds, seed=7)
        _, h2 = run_fit(ds, seed=7)
        assert [r["train_loss"] for r in h1["epochs"]] == \
               [r["train_loss"] for r in h2["epochs"]]

    def test_gumbel_shared_stream_deterministic(self):
        ds = data.make_memorization_corpus(seed=2, n=16)
        _, h1 = run_fit(ds, seed=7, selection="gumbel")
        _, h2 = run_fit(ds, seed=7, selection="gumbel")
        assert [r["train_loss"] for r in h1["epochs"]] == \
               [r["train_loss"] for r in h2["epochs"]]

    def test_loss_decreases(self):
        ds = data.make_memorization_corpus(seed=2, n=16)
        _, hist = run_fit(ds, seed=7, epochs=12)
        rows = hist["epochs"]
        assert rows[-1]["train_loss"] < rows[0]["train_loss"]

    def test_eval_repeat_bitwise_stable(self):
        ds = data.make_memorization_corpus(seed=2, n=16)
        model, _ = run_fit(ds, seed=7, selection="gumbel")
        batches = data.make_batches(ds, model.vocab, 8, model.config.max_word_len)
        r1 = [model.forward(b, training=False,
                            rng=np.random.default_rng(0)).probs for b in batches]
        r2 = [model.forward(b, training=False,
                            rng=np.random.default_rng(0)).probs for b in batches]
        for a, b in zip(r1, r2):
            assert np.array_equal(a, b)

    def test_nan_loss_aborts_with_diagnostics(self):
        ds = data.make_memorization_corpus(seed=2, n=16)
        model = tiny_model(ds)
        model.head_params.w.data[:] = np.nan
        tc = TrainConfig(epochs=1, batch_size=8, seed=1, dev_fraction=0.0, patience=0)
        with pytest.raises(NumericalError, match="batch 0"):
            training.fit(model, ds, tc)

    def test_frozen_word_rows_survive_training(self):
        ds = data.make_memorization_corpus(seed=2, n=16)
        vocab = Vocab.from_corpus(ds.sentences())
        config = tiny_config()
        table = Tensor(np.random.default_rng(0).standard_normal(
            (len(vocab), config.word_dim)), requires_grad=False)
        before = table.data.copy()
        model = AdaptiveClassifier(config, vocab, ds.labels, seed=3, word_table=table)
        tc = TrainConfig(epochs=2, batch_size=8, seed=1, dev_fraction=0.0, patience=0)
        training.fit(model, ds, tc)
        assert np.array_equal(model.word_table.data, before)

    def test_early_stopping_and_best_restore(self):
        ds = data.make_memorization_corpus(seed=2, n=30)
        model = tiny_model(ds)
        tc = TrainConfig(epochs=30, batch_size=8, seed=1, dev_fraction=0.2, patience=2)
        hist = training.fit(model, ds, tc)
        rows = [r for r in hist["epochs"] if "dev_accuracy" in r]
        assert hist["best_dev_accuracy"] == max(r["dev_accuracy"] for r in rows)


class TestCheckpoint:
    def test_round_trip_bitwise_predictions(self, tmp_path):
        ds = data.make_memorization_corpus(seed=2, n=16)
        model, _ = run_fit(ds, seed=7)
        path = str(tmp_path / "model.npz")
        training.save_checkpoint(model, path)
        clone = training.load_checkpoint(path)
        batches = data.make_batches(ds, model.vocab, 8, model.config.max_word_len)
        for b in batches:
            a = model.forward(b, training=False)
            z = clone.forward(b, training=False)
            assert np.array_equal(a.probs, z.probs)
            assert np.array_equal(a.predictions, z.predictions)

    def test_metadata_restored(self, tmp_path):
        ds = data.make_memorization_corpus(seed=2, n=16)
        model, _ = run_fit(ds, seed=7)
        path = str(tmp_path / "model.npz")
        training.save_checkpoint(model, path)
        clone = training.load_checkpoint(path)
        assert clone.labels == model.labels
        assert clone.vocab.id_to_token == model.vocab.id_to_token
        assert clone.config == model.config

    def test_frozen_flag_round_trips(self, tmp_path):
        ds = data.make_memorization_corpus(seed=2, n=16)
        vocab = Vocab.from_corpus(ds.sentences())
        config = tiny_config()
        table = Tensor(np.zeros((len(vocab), config.word_dim)), requires_grad=False)
        model = AdaptiveClassifier(config, vocab, ds.labels, seed=3, word_table=table)
        path = str(tmp_path / "model.npz")
        training.save_checkpoint(model, path)
        clone = training.load_checkpoint(path)
        assert clone.word_table.requires_grad is False


class TestCrossValidation:
    def test_fold_accuracies_and_mean(self):
        ds = data.make_trigger_corpus(seed=4, n_train=40, n_test=2)[0]
        mc = tiny_config()
        tc = TrainConfig(epochs=2, batch_size=8, seed=1, dev_fraction=0.0, patience=0)
        out = training.cross_validate(ds, mc, tc, k=4)
        assert len(out["fold_accuracies"]) == 4
        np.testing.assert_allclose(out["mean_accuracy"],
                                   np.mean(out["fold_accuracies"]), atol=1e-12)

    def test_too_few_records(self):
        ds = data.make_memorization_corpus(seed=2, n=3)
        with pytest.raises(ValueError):
            training.cross_validate(ds, tiny_config(),
                                    TrainConfig(epochs=1, dev_fraction=0.0), k=5)
