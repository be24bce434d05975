"""Acceptance suite: one test per criterion, each printing PASS/FAIL.

Criteria 1-3 train real models (a 13-run reduced grid); expect roughly
30-60 minutes total on a small CPU box.  Set ZIPFAGREE_ACCEPT_DIR to a
persistent directory to make the training portion resumable across
invocations (completed cells are skipped).  Criterion 7 needs an external
pairs file and is skipped unless ZIPFAGREE_PAIRS_TSV points at one.
"""

import math
import os
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from zipfagree import evaluator, grammar, model, sweep, trainer, zipffit
from zipfagree.lexicon import load_lexicon
from zipfagree.tokenizer import TokenVocab

ACCEPT_ALPHAS = (0.0, 1.4, 3.0, math.inf)
N_RUNS = 3
WORKERS = int(os.environ.get("ZIPFAGREE_ACCEPT_WORKERS", "2"))


def report(criterion: str, passed: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} "
          f"({detail})")


@pytest.fixture(scope="session")
def accept_dir(tmp_path_factory):
    env = os.environ.get("ZIPFAGREE_ACCEPT_DIR")
    if env:
        Path(env).mkdir(parents=True, exist_ok=True)
        return Path(env)
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def reduced_sweep(accept_dir):
    config = sweep.SweepConfig(alphas=ACCEPT_ALPHAS, n_runs=N_RUNS,
                               base_seed=0, pairs_per_condition=1000,
                               workers=WORKERS)
    result = sweep.run_sweep(config, accept_dir / "sweep")
    assert not result.failures, f"sweep cells failed: {result.failures}"
    return result


@pytest.fixture(scope="session")
def alpha15_run(accept_dir):
    """One standard run at alpha=1.5 for the loss-gap criterion."""
    run_dir = accept_dir / "alpha15"
    trace_path = run_dir / "loss.csv"
    if not trace_path.exists():
        dataset = grammar.generate_dataset(1.5, seed=1500)
        lexicon = load_lexicon()
        mcfg = model.ModelConfig(vocab_size=len(TokenVocab(lexicon)))
        trainer.train_run(dataset, mcfg, trainer.TrainConfig(seed=1501),
                          out_dir=run_dir, lexicon=lexicon)
    import csv
    with open(trace_path, newline="") as f:
        rows = list(csv.DictReader(f))
    train_loss = [float(r["train_loss"]) for r in rows]
    val_loss = [float(r["val_loss"]) for r in rows if r["val_loss"]]
    return train_loss, val_loss


class TestCriterion1SweetSpot:
    def test_unseen_mismatch_peak_at_1p4(self, reduced_sweep):
        um = "unseen-mismatch"
        at_14 = reduced_sweep.mean(1.4, um)
        at_0 = reduced_sweep.mean(0.0, um)
        at_inf = reduced_sweep.mean(math.inf, um)
        ok = (at_14 >= 0.90 and at_14 - at_0 >= 0.15
              and at_14 - at_inf >= 0.15)
        report("1 (variability sweet spot)", ok,
               f"unseen-mismatch mean: alpha=1.4 {at_14:.3f}, "
               f"alpha=0 {at_0:.3f}, alpha=inf {at_inf:.3f}")
        assert at_14 >= 0.90
        assert at_14 - at_0 >= 0.15
        assert at_14 - at_inf >= 0.15


class TestCriterion2ConditionMonotonicity:
    def test_seen_match_ceiling_everywhere(self, reduced_sweep):
        means = {a: reduced_sweep.mean(a, "seen-match")
                 for a in ACCEPT_ALPHAS}
        ok = all(m >= 0.99 for m in means.values())
        report("2a (seen-match >= 0.99 at all alpha)", ok,
               " ".join(f"{grammar.format_alpha(a)}:{m:.3f}"
                        for a, m in means.items()))
        for a, m in means.items():
            assert m >= 0.99, f"seen-match at alpha={a}: {m:.3f}"

    def test_seen_mismatch_rises_with_alpha(self, reduced_sweep):
        at_3 = reduced_sweep.mean(3.0, "seen-mismatch")
        at_0 = reduced_sweep.mean(0.0, "seen-mismatch")
        ok = at_3 >= at_0 + 0.10
        report("2b (seen-mismatch: alpha 3.0 vs 0.0)", ok,
               f"{at_3:.3f} vs {at_0:.3f}")
        assert at_3 >= at_0 + 0.10

    def test_unseen_match_falls_with_alpha(self, reduced_sweep):
        at_0 = reduced_sweep.mean(0.0, "unseen-match")
        at_inf = reduced_sweep.mean(math.inf, "unseen-match")
        ok = at_0 >= at_inf + 0.10
        report("2c (unseen-match: alpha 0.0 vs inf)", ok,
               f"{at_0:.3f} vs {at_inf:.3f}")
        assert at_0 >= at_inf + 0.10


class TestCriterion3NoOverfitting:
    def test_loss_gap_small_at_1p5(self, alpha15_run):
        train_loss, val_loss = alpha15_run
        initial = train_loss[0]
        final_train = float(np.mean(train_loss[-50:]))
        final_val = val_loss[-1]
        gap = abs(final_train - final_val)
        drop = initial - final_train
        ok = gap <= 0.20 * drop
        report("3 (no overfitting at alpha=1.5)", ok,
               f"|train-val| {gap:.4f} <= 20% of drop {drop:.3f}")
        assert drop > 0
        assert gap <= 0.20 * drop


class TestCriterion4GradientCheck:
    def test_finite_difference_agreement(self):
        cfg = model.ModelConfig(vocab_size=12, n_layers=1, n_heads=1,
                                d_model=8, context_length=6)
        params = model.init_params(cfg, seed=3, dtype=np.float64)
        rng = np.random.default_rng(12345)
        ids = rng.integers(0, 12, (4, 6))
        targets = rng.integers(0, 12, (4, 6))
        mask = np.ones((4, 6), bool)
        mask[3, 4:] = False
        _, grads = model.backward(params, cfg, ids, targets, mask)

        def loss_now():
            return model.loss(model.forward(params, cfg, ids), targets, mask)

        h = 1e-4
        worst = 0.0
        for name, p in params.items():
            fd = np.zeros_like(p)
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                i = it.multi_index
                orig = p[i]
                p[i] = orig + h
                up = loss_now()
                p[i] = orig - h
                down = loss_now()
                p[i] = orig
                fd[i] = (up - down) / (2 * h)
            denom = np.maximum(np.maximum(np.abs(fd), np.abs(grads[name])),
                               1e-6)
            rel = float((np.abs(fd - grads[name]) / denom).max())
            worst = max(worst, rel)
            assert rel < 1e-4, f"{name}: rel err {rel:.3e}"
        report("4 (gradient correctness)", worst < 1e-4,
               f"max relative error {worst:.2e} over all groups")


class TestCriterion5SamplerFidelity:
    @pytest.mark.parametrize("alpha", [0.0, 0.5, 1.4, 3.0])
    def test_chi_square_and_withheld_zeros(self, alpha, lexicon):
        params = grammar.ZipfParams(alpha)
        rng = np.random.default_rng(2024)
        sampler = grammar._SubjectSampler(params)
        counts = np.zeros(40)
        n = 100_000
        for _ in range(n):
            s = grammar.sample_sentence(rng, params, lexicon,
                                        _sampler=sampler)
            counts[(s.subject_stem - s.verb_stem) % 40] += 1
        assert counts[30:].sum() == 0, "withheld offsets were sampled"
        expected = grammar.offset_distribution(params) * n
        chi2, p = stats.chisquare(counts[:30], expected)
        report(f"5 (sampler fidelity, alpha={alpha})", p > 0.001,
               f"chi2={chi2:.1f} p={p:.4f}, withheld counts all zero")
        assert p > 0.001


class TestCriterion6ZipfFitOracle:
    def test_exact_profile_recovery(self):
        errs = {}
        for alpha in (0.0, 0.77, 1.43, 2.5):
            fit = zipffit.fit_alpha(zipffit.theoretical_profile(alpha, 60))
            errs[alpha] = abs(fit.alpha_hat - alpha)
        ok = all(e <= 0.01 for e in errs.values())
        report("6a (fit on exact profiles)", ok,
               " ".join(f"{a}:{e:.3f}" for a, e in errs.items()))
        for alpha, e in errs.items():
            assert e <= 0.01, f"alpha={alpha} missed by {e}"

    def test_sampled_corpus_recovery(self):
        rng = np.random.default_rng(77)
        errs = {}
        for alpha in (0.0, 0.77, 1.43, 2.5):
            probs = zipffit.theoretical_profile(alpha, 50)
            counts = {
                f"v{k}": Counter({
                    f"s{j:02d}": int(c) for j, c in
                    enumerate(rng.multinomial(100_000, probs)) if c})
                for k in range(100)
            }
            prof = zipffit.profile_from_counts(counts, sorted(counts))
            fit = zipffit.fit_alpha(prof)
            errs[alpha] = abs(fit.alpha_hat - alpha)
        ok = all(e <= 0.05 for e in errs.values())
        report("6b (fit on sampled corpora)", ok,
               " ".join(f"{a}:{e:.3f}" for a, e in errs.items()))
        for alpha, e in errs.items():
            assert e <= 0.05, f"alpha={alpha} missed by {e}"


PAIRS_ENV = "ZIPFAGREE_PAIRS_TSV"
TABLE3_ALPHA = [1.46, 1.40, 1.44, 1.38, 1.37, 1.28, 1.23, 1.25]


@pytest.mark.skipif(PAIRS_ENV not in os.environ,
                    reason=f"set {PAIRS_ENV} to a subject-verb pairs TSV "
                           "to run the corpus-reproduction check")
class TestCriterion7CorpusReproduction:
    def test_overall_and_age_stratified_fits(self):
        corpus = zipffit.load_pairs(os.environ[PAIRS_ENV])
        verbs = zipffit.top_verbs(corpus.records)
        profile = zipffit.empirical_rank_frequencies(corpus.records, verbs)
        overall = zipffit.fit_alpha(profile)
        bins = zipffit.fit_by_age(corpus.records)
        fits = [b.fit.alpha_hat for b in bins if b.fit]
        ok_overall = abs(overall.alpha_hat - 1.43) <= 0.02
        ok_bins = (len(fits) == 8
                   and all(abs(f - t) <= 0.03
                           for f, t in zip(fits, TABLE3_ALPHA))
                   and fits[0] > fits[-1])
        report("7 (corpus reproduction)", ok_overall and ok_bins,
               f"overall {overall.alpha_hat:.2f}, bins "
               + " ".join(f"{f:.2f}" for f in fits))
        assert ok_overall
        assert ok_bins


class TestCriterion8ParamCount:
    def test_default_config_in_band(self, vocab):
        n = model.param_count(model.ModelConfig(vocab_size=len(vocab)))
        ok = 1.52e6 <= n <= 1.68e6
        report("8 (parameter count)", ok, f"{n:,} parameters")
        assert ok


class TestCriterion9UntrainedChance:
    def test_random_model_near_chance(self, lexicon, vocab):
        dataset = grammar.generate_dataset(1.4, seed=909, n_sentences=600)
        pairs = evaluator.generate_pairs(
            evaluator.EvalCondition("unseen", "mismatch"), dataset.manifest,
            n=1000, seed=910, lexicon=lexicon)
        cfg = model.ModelConfig(vocab_size=len(vocab))
        params = model.init_params(cfg, seed=911)
        acc = evaluator.accuracy(params, cfg, vocab, pairs, lexicon)
        ok = 0.40 <= acc <= 0.60
        report("9 (untrained model near chance)", ok, f"accuracy {acc:.3f}")
        assert 0.40 <= acc <= 0.60
