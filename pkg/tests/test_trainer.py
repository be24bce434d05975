import csv
import json
import math

import numpy as np
import pytest

from zipfagree import grammar, model, trainer
from zipfagree.trainer import AdamW, NonFiniteGradient, TrainConfig, train_run

TINY_MODEL = model.ModelConfig(vocab_size=166, n_layers=1, n_heads=2,
                               d_model=16)


def scalar_adamw_reference(w, gs, lr, b1, b2, eps, wd):
    """Independent scalar implementation of the update rule."""
    m = v = 0.0
    out = []
    for t, g in enumerate(gs, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        w = w - lr * (mhat / (math.sqrt(vhat) + eps) + wd * w)
        out.append(w)
    return out


class TestAdamW:
    def test_five_step_scalar_oracle(self):
        cfg = TrainConfig(learning_rate=0.1, beta1=0.9, beta2=0.95,
                          weight_decay=0.04, eps=1e-8)
        params = {"w": np.array([[1.0]], dtype=np.float64)}
        opt = AdamW(params, cfg)
        gs = [1.0, -0.5, 0.25, 2.0, -1.0]
        expected = scalar_adamw_reference(1.0, gs, 0.1, 0.9, 0.95, 1e-8,
                                          0.04)
        for g, want in zip(gs, expected):
            opt.step(params, {"w": np.array([[g]])})
            assert params["w"][0, 0] == pytest.approx(want, abs=1e-10)

    def test_first_step_value(self):
        cfg = TrainConfig(learning_rate=0.1, beta1=0.9, beta2=0.95,
                          weight_decay=0.0)
        params = {"w": np.array([[1.0]], dtype=np.float64)}
        opt = AdamW(params, cfg)
        opt.step(params, {"w": np.array([[1.0]])})
        assert params["w"][0, 0] == pytest.approx(0.9, abs=1e-7)

    def test_no_decay_on_vectors(self):
        cfg = TrainConfig(learning_rate=0.0006, weight_decay=0.1)
        params = {"mat": np.full((2, 2), 3.0), "vec": np.full(2, 3.0)}
        opt = AdamW(params, cfg)
        zero = {k: np.zeros_like(v) for k, v in params.items()}
        opt.step(params, zero)
        assert params["mat"][0, 0] == pytest.approx(3.0 * (1 - 0.0006 * 0.1),
                                                    rel=1e-9)
        assert params["vec"][0] == 3.0

    def test_nonfinite_gradient_reports_step(self):
        cfg = TrainConfig()
        params = {"w": np.ones(3, dtype=np.float32)}
        opt = AdamW(params, cfg)
        opt.step(params, {"w": np.ones(3, dtype=np.float32)})
        with pytest.raises(NonFiniteGradient, match="step 2"):
            opt.step(params, {"w": np.array([1.0, np.nan, 0.0],
                                            dtype=np.float32)})


class TestClipGradients:
    def test_caps_global_norm(self):
        grads = {"a": np.array([3.0, 0.0]), "b": np.array([[4.0]])}
        pre = trainer.clip_gradients(grads, 1.0)
        assert pre == pytest.approx(5.0)
        total = np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
        assert total == pytest.approx(1.0)
        assert grads["a"][0] == pytest.approx(0.6)

    def test_no_rescale_below_cap(self):
        grads = {"a": np.array([0.3, 0.4])}
        trainer.clip_gradients(grads, 1.0)
        assert np.allclose(grads["a"], [0.3, 0.4])

    def test_disabled_when_nonpositive(self):
        grads = {"a": np.array([30.0, 40.0])}
        trainer.clip_gradients(grads, 0.0)
        assert np.allclose(grads["a"], [30.0, 40.0])


@pytest.fixture(scope="module")
def small_dataset():
    return grammar.generate_dataset(1.0, seed=5, n_sentences=400)


@pytest.fixture(scope="module")
def quick_config():
    return TrainConfig(batch_size=16, batches_per_epoch=20, epochs=2,
                       validate_every=20, seed=11)


@pytest.fixture(scope="module")
def quick_run(small_dataset, quick_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    record = train_run(small_dataset, TINY_MODEL, quick_config, out_dir=out)
    return record, out


class TestTrainRun:
    def test_loss_decreases(self, quick_run):
        record, _ = quick_run
        assert record.train_loss[-1] < record.train_loss[0]
        assert len(record.train_loss) == 40

    def test_validation_schedule(self, quick_run):
        record, _ = quick_run
        assert record.val_steps == [20, 40]
        assert record.best_step in record.val_steps
        assert record.best_val_loss == min(record.val_loss)

    def test_deterministic_traces(self, small_dataset, quick_config,
                                  quick_run):
        record, _ = quick_run
        again = train_run(small_dataset, TINY_MODEL, quick_config)
        assert again.train_loss == record.train_loss
        assert again.val_loss == record.val_loss

    def test_checkpoint_reproduces_best_val_loss(self, quick_run,
                                                 small_dataset, lexicon,
                                                 vocab):
        record, out = quick_run
        params, config, extra = model.load_checkpoint(out / "checkpoint.npz")
        batches = trainer._make_batches(vocab, small_dataset.splits["valid"],
                                        lexicon, 256)
        vloss = trainer._validation_loss(params, config, batches)
        assert vloss == pytest.approx(record.best_val_loss, abs=1e-6)
        assert extra["best_step"] == record.best_step

    def test_loss_csv_schema(self, quick_run):
        _, out = quick_run
        with open(out / "loss.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 40
        assert rows[0]["step"] == "1"
        assert rows[19]["val_loss"] != ""
        assert rows[0]["val_loss"] == ""

    def test_run_json_records_settings(self, quick_run):
        _, out = quick_run
        with open(out / "run.json") as f:
            meta = json.load(f)
        assert meta["train_config"]["learning_rate"] == 0.0006
        assert meta["weight_decay_rule"] == "tensors with ndim >= 2"
        assert meta["best_step"] == meta["val_steps"][
            int(np.argmin(meta["val_loss"]))]


class TestEpochOrder:
    def test_exact_pass_when_divisible(self, rng):
        order = trainer._epoch_order(rng, 96, 96)
        assert sorted(order) == list(range(96))

    def test_cycles_when_needed(self, rng):
        order = trainer._epoch_order(rng, 10, 25)
        counts = np.bincount(order, minlength=10)
        assert counts.min() >= 2 and counts.max() <= 3
