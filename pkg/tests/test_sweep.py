import csv
import math

import numpy as np
import pytest

from zipfagree import model, sweep, trainer
from zipfagree.sweep import (
    SweepConfig, cell_seed, cell_tag, parse_alpha_spec, run_cell, run_sweep,
    summarize_ledger,
)

TINY = SweepConfig(
    alphas=(0.0, 1.5),
    n_runs=2,
    base_seed=3,
    pairs_per_condition=20,
    n_sentences=300,
    model_config=model.ModelConfig(vocab_size=166, n_layers=1, n_heads=2,
                                   d_model=16),
    train_config=trainer.TrainConfig(batch_size=8, batches_per_epoch=10,
                                     epochs=1, validate_every=10),
)


class TestSeeding:
    def test_cell_seed_stable(self):
        assert cell_seed(0, 1, 2) == cell_seed(0, 1, 2)
        seeds = {cell_seed(0, a, r) for a in range(4) for r in range(10)}
        assert len(seeds) == 40

    def test_cell_tag_content_addressed(self):
        t1 = cell_tag(1.4, 0, 99, TINY.model_config, TINY.train_config)
        t2 = cell_tag(1.4, 0, 99, TINY.model_config, TINY.train_config)
        assert t1 == t2
        other = cell_tag(1.4, 0, 100, TINY.model_config, TINY.train_config)
        assert other != t1
        assert t1.startswith("a1.4_r0_")


@pytest.fixture(scope="module")
def done(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    result = run_sweep(TINY, out)
    return result, out


class TestRunSweep:
    def test_all_cells_populated(self, done):
        result, _ = done
        assert len(result.cells) == 2 * 4  # alphas x conditions
        for accs in result.cells.values():
            assert len(accs) == 2  # runs
        assert not result.failures

    def test_ledger_schema(self, done):
        _, out = done
        with open(out / "results.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 2 * 2 * 4
        assert set(rows[0]) == set(sweep.LEDGER_COLUMNS)
        assert {r["alpha"] for r in rows} == {"0.0", "1.5"}

    def test_aggregates_match_rows(self, done):
        from zipfagree.grammar import parse_alpha
        result, out = done
        recomputed = summarize_ledger(out / "results.csv")
        for (alpha_s, cond), accs in result.cells.items():
            assert np.allclose(sorted(recomputed.cells[(alpha_s, cond)]),
                               sorted(accs))
            assert result.mean(parse_alpha(alpha_s), cond) == \
                pytest.approx(float(np.mean(accs)), abs=1e-12)

    def test_resume_skips_completed(self, done, monkeypatch):
        _, out = done
        calls = []
        monkeypatch.setattr(sweep, "run_cell",
                            lambda *a, **k: calls.append(a) or [])
        run_sweep(TINY, out)
        assert calls == []

    def test_cell_independent_of_sweep(self, done):
        result, _ = done
        rows = run_cell(1.5, 1, TINY)
        for row in rows:
            key = (row["alpha"], row["condition"])
            assert float(row["accuracy"]) in result.cells[key]

    def test_artifacts_layout(self, done):
        _, out = done
        run_dirs = sorted((out / "runs").iterdir())
        assert len(run_dirs) == 4
        for d in run_dirs:
            assert (d / "checkpoint.npz").exists()
            assert (d / "loss.csv").exists()
            assert (d / "data" / "manifest.json").exists()
            assert len(list((d / "suites").glob("*.tsv"))) == 4

    def test_failures_recorded_without_abort(self, tmp_path, monkeypatch):
        real = sweep.run_cell

        def flaky(alpha, run_index, config, out_dir=None):
            if run_index == 1:
                raise RuntimeError("boom")
            return real(alpha, run_index, config, out_dir)

        monkeypatch.setattr(sweep, "run_cell", flaky)
        monkeypatch.setattr(sweep, "_cell_job",
                            lambda args: flaky(args[0], args[1], args[2],
                                               args[3]))
        from dataclasses import replace
        cfg = replace(TINY, alphas=(0.0,), n_runs=2)
        result = run_sweep(cfg, tmp_path)
        assert len(result.failures) == 1
        assert result.failures[0]["run"] == 1
        assert (tmp_path / "failures.csv").exists()
        assert len(result.cells) == 4


def test_parse_alpha_spec():
    alphas = parse_alpha_spec("0:3:0.1,inf")
    assert len(alphas) == 32
    assert alphas[14] == pytest.approx(1.4)
    assert math.isinf(alphas[-1])
    assert parse_alpha_spec("0,1.4,3.0,inf") == \
        (0.0, 1.4, 3.0, math.inf)
