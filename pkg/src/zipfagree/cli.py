"""Command-line interface.

Subcommands: gen-data, gen-pairs, train, eval, sweep, zipf-fit, report,
bench.  Each one reads/writes the plain-text artifacts described in the
README so stages can be run and inspected independently.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import evaluator, grammar, model, report, sweep, trainer, zipffit
from .grammar import format_alpha, parse_alpha
from .lexicon import load_lexicon
from .tokenizer import TokenVocab


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zipfagree",
        description=("Synthetic-grammar generation, small-LM training, "
                     "minimal-pair evaluation and rank-frequency fitting"))
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("gen-data", help="generate a training dataset")
    p.add_argument("--alpha", required=True,
                   help="Zipf parameter (float or 'inf')")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, default=grammar.DEFAULT_N_SENTENCES)
    p.add_argument("--lexicon", type=Path, default=None)
    p.add_argument("--attempt-factor", type=int,
                   default=grammar.DEFAULT_ATTEMPT_FACTOR)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gen-pairs", help="generate minimal-pair suites")
    p.add_argument("--data", type=Path, required=True,
                   help="dataset directory (reads its manifest.json)")
    p.add_argument("--condition", default="all",
                   help="seen-match, unseen-match, seen-mismatch, "
                        "unseen-mismatch, or 'all'")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True,
                   help="output file for one condition, directory for all")
    p.add_argument("--lexicon", type=Path, default=None)
    p.set_defaults(func=cmd_gen_pairs)

    p = sub.add_parser("train", help="train one model on a dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--lexicon", type=Path, default=None)
    for name in ("lr", "beta2", "weight-decay"):
        p.add_argument(f"--{name}", type=float, default=None)
    for name in ("batch-size", "batches-per-epoch", "epochs",
                 "validate-every"):
        p.add_argument(f"--{name}", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a minimal-pair suite")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--suite", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--lexicon", type=Path, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run the alpha x seed experiment grid")
    p.add_argument("--alphas", default="0:3:0.1,inf",
                   help="e.g. '0:3:0.1,inf' or '0,1.4,3,inf'")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--pairs-n", type=int, default=1000)
    p.add_argument("--n-sentences", type=int,
                   default=grammar.DEFAULT_N_SENTENCES)
    p.add_argument("--drop-checkpoints", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("zipf-fit", help="fit alpha to subject-verb pairs")
    p.add_argument("--pairs", type=Path, required=True,
                   help="TSV with subject_lemma, verb_lemma[, age_months]")
    p.add_argument("--by-age", action="store_true")
    p.add_argument("--top-verbs", type=int, default=zipffit.DEFAULT_TOP_VERBS)
    p.add_argument("--grid", default="0:3:0.01")
    p.add_argument("--max-rank", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--profile-out", type=Path, default=None)
    p.set_defaults(func=cmd_zipf_fit)

    p = sub.add_parser("report", help="render a figure (SVG + CSV)")
    p.add_argument("--kind", required=True, choices=report.KINDS)
    p.add_argument("--in", dest="inputs", nargs="*", default=[],
                   help="name=path input files (e.g. ledger=results.csv)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--alphas", default=None,
                   help="comma list for noun-distribution")
    p.add_argument("--ref-optimal", type=float, default=None)
    p.add_argument("--ref-overall", type=float, default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("bench", help="compare kernel backends")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def cmd_gen_data(args) -> int:
    lexicon = load_lexicon(args.lexicon)
    alpha = parse_alpha(args.alpha)
    dataset = grammar.generate_dataset(
        alpha, seed=args.seed, lexicon=lexicon, n_sentences=args.n,
        attempt_factor=args.attempt_factor)
    grammar.write_dataset(dataset, args.out, lexicon)
    sizes = dataset.manifest["split_sizes"]
    print(f"wrote {args.out} (train={sizes['train']} valid={sizes['valid']} "
          f"test={sizes['test']})")
    return 0


def cmd_gen_pairs(args) -> int:
    lexicon = load_lexicon(args.lexicon)
    dataset_dir = args.data
    with open(dataset_dir / "manifest.json", encoding="utf-8") as f:
        manifest = json.load(f)
    if args.condition == "all":
        args.out.mkdir(parents=True, exist_ok=True)
        for i, condition in enumerate(evaluator.CONDITIONS):
            pairs = evaluator.generate_pairs(condition, manifest, args.n,
                                             args.seed + i, lexicon)
            path = evaluator.write_suite(
                args.out / f"{condition.label}.tsv", pairs, lexicon)
            print(f"wrote {path} ({len(pairs)} pairs)")
    else:
        condition = evaluator.EvalCondition.from_label(args.condition)
        pairs = evaluator.generate_pairs(condition, manifest, args.n,
                                         args.seed, lexicon)
        path = evaluator.write_suite(args.out, pairs, lexicon)
        print(f"wrote {path} ({len(pairs)} pairs)")
    return 0


def cmd_train(args) -> int:
    lexicon = load_lexicon(args.lexicon)
    dataset = grammar.load_dataset(args.data, lexicon)
    vocab = TokenVocab(lexicon)
    model_config = model.ModelConfig(vocab_size=len(vocab))
    train_config = trainer.TrainConfig(seed=args.seed)
    overrides = {
        "learning_rate": args.lr,
        "beta2": args.beta2,
        "weight_decay": args.weight_decay,
        "batch_size": args.batch_size,
        "batches_per_epoch": args.batches_per_epoch,
        "epochs": args.epochs,
        "validate_every": args.validate_every,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        train_config = replace(train_config, **overrides)
    record = trainer.train_run(dataset, model_config, train_config,
                               out_dir=args.out, lexicon=lexicon)
    print(f"best val loss {record.best_val_loss:.4f} at step "
          f"{record.best_step}; artifacts in {args.out}")
    return 0


def cmd_eval(args) -> int:
    lexicon = load_lexicon(args.lexicon)
    vocab = TokenVocab(lexicon)
    params, config, _ = model.load_checkpoint(args.checkpoint)
    pairs = evaluator.load_suite(args.suite, lexicon)
    results = evaluator.score_suite(params, config, vocab, pairs, lexicon)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["condition", "n", "n_correct", "accuracy"])
        for label, r in results.items():
            w.writerow([label, r["n"], r["n_correct"],
                        f"{r['accuracy']:.6f}"])
            print(f"{label}: {r['accuracy']:.3f} ({r['n_correct']}/{r['n']})")
    return 0


def cmd_sweep(args) -> int:
    config = sweep.SweepConfig(
        alphas=sweep.parse_alpha_spec(args.alphas),
        n_runs=args.runs,
        base_seed=args.base_seed,
        pairs_per_condition=args.pairs_n,
        n_sentences=args.n_sentences,
        workers=args.workers,
        keep_checkpoints=not args.drop_checkpoints,
    )

    def progress(alpha, run, rows):
        accs = " ".join(f"{r['condition']}={float(r['accuracy']):.3f}"
                        for r in rows)
        print(f"[alpha={format_alpha(alpha)} run={run}] {accs}", flush=True)

    result = sweep.run_sweep(config, args.out, progress=progress)
    for failure in result.failures:
        print(f"FAILED alpha={failure['alpha']} run={failure['run']}: "
              f"{failure['error']}", file=sys.stderr)
    print(f"ledger: {args.out / 'results.csv'}")
    return 1 if result.failures else 0


def cmd_zipf_fit(args) -> int:
    corpus = zipffit.load_pairs(args.pairs)
    grid = _parse_grid(args.grid)
    if args.by_age:
        bins = zipffit.fit_by_age(corpus.records, top_k=args.top_verbs,
                                  grid=grid, max_rank=args.max_rank)
        zipffit.write_fit_csv(args.out, bins)
        for b in bins:
            tag = f"alpha={b.fit.alpha_hat:.2f} mse={b.fit.mse:.2e}" \
                if b.fit else b.status
            print(f"{b.label}: pairs={b.n_pairs} verbs={b.n_unique_verbs} "
                  f"subjects={b.n_unique_subjects} {tag}")
    else:
        verbs = zipffit.top_verbs(corpus.records, args.top_verbs)
        profile = zipffit.empirical_rank_frequencies(corpus.records, verbs)
        fit = zipffit.fit_alpha(profile, grid, args.max_rank)
        n_verbs = len({r.verb for r in corpus.records})
        n_subjects = len({r.subject for r in corpus.records})
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin", "n_pairs", "n_unique_verbs",
                        "n_unique_subjects", "alpha_hat", "mse", "status"])
            w.writerow(["all", len(corpus.records), n_verbs, n_subjects,
                        f"{fit.alpha_hat:.2f}", f"{fit.mse:.6e}", "ok"])
        if args.profile_out:
            zipffit.write_profile_csv(args.profile_out, profile, fit)
        print(f"alpha_hat={fit.alpha_hat:.2f} mse={fit.mse:.3e} "
              f"ranks={fit.n_ranks}")
    if corpus.rejects.get("age") or corpus.rejects.get("non_ascii_verb"):
        print(f"dropped rows: {corpus.rejects}")
    return 0


def cmd_report(args) -> int:
    inputs = {}
    for item in args.inputs:
        if "=" not in item:
            raise SystemExit(f"--in expects name=path, got {item!r}")
        name, path = item.split("=", 1)
        inputs[name] = Path(path)
    options = {}
    if args.alphas:
        options["alphas"] = [parse_alpha(a) for a in args.alphas.split(",")]
    if args.ref_optimal is not None:
        options["ref_optimal"] = args.ref_optimal
    if args.ref_overall is not None:
        options["ref_overall"] = args.ref_overall
    spec = report.FigureSpec(kind=args.kind, inputs=inputs, out=args.out,
                             options=options)
    svg, companion = report.render(spec)
    print(f"wrote {svg} and {companion}")
    return 0


def cmd_bench(args) -> int:
    from . import bench
    rows = bench.run_benchmarks(n_steps=args.steps)
    bench.print_table(rows)
    if args.out:
        bench.write_csv(args.out, rows)
        print(f"wrote {args.out}")
    return 0


def _parse_grid(spec: str) -> tuple[float, float, float]:
    lo, hi, step = (float(x) for x in spec.split(":"))
    return lo, hi, step


if __name__ == "__main__":
    sys.exit(main())
