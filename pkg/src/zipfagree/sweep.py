"""Experiment grid orchestration: alpha values x runs, resumable.

Each cell (alpha, run index) draws its own seed from a stable hash, so any
cell can be reproduced in isolation and results are identical whether a
cell runs alone or inside the sweep.  Completed cells are skipped on
restart by consulting the append-only ledger CSV; failures are recorded in
failures.csv without aborting the rest of the grid.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import evaluator, grammar, model, trainer
from .grammar import format_alpha, parse_alpha
from .lexicon import load_lexicon
from .tokenizer import TokenVocab

LEDGER_COLUMNS = ("alpha", "run", "condition", "accuracy", "best_val_loss",
                  "seed")
DEFAULT_ALPHAS = tuple(round(0.1 * i, 1) for i in range(31)) + (math.inf,)


def cell_seed(base_seed: int, alpha_index: int, run_index: int) -> int:
    """Stable 32-bit seed for one grid cell."""
    key = f"{base_seed}:{alpha_index}:{run_index}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "little")


def cell_tag(alpha: float, run_index: int, seed: int,
             model_config: model.ModelConfig,
             train_config: trainer.TrainConfig) -> str:
    """Content-derived directory name for a cell's artifacts."""
    payload = json.dumps({
        "alpha": format_alpha(alpha), "run": run_index, "seed": seed,
        "model": asdict(model_config), "train": asdict(train_config),
    }, sort_keys=True).encode()
    digest = hashlib.sha256(payload).hexdigest()[:12]
    return f"a{format_alpha(alpha)}_r{run_index}_{digest}"


@dataclass
class SweepConfig:
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    n_runs: int = 10
    base_seed: int = 0
    pairs_per_condition: int = 1000
    n_sentences: int = grammar.DEFAULT_N_SENTENCES
    workers: int = 1
    keep_checkpoints: bool = True
    model_config: model.ModelConfig | None = None
    train_config: trainer.TrainConfig = field(
        default_factory=trainer.TrainConfig)


@dataclass
class SweepResult:
    """Aggregated accuracies; per-cell rows remain in the ledger CSV."""

    cells: dict[tuple[str, str], list[float]]   # (alpha, condition) -> accs
    failures: list[dict]

    def mean(self, alpha: float, condition: str) -> float:
        return float(np.mean(self.cells[(format_alpha(alpha), condition)]))

    def sd(self, alpha: float, condition: str) -> float:
        accs = self.cells[(format_alpha(alpha), condition)]
        return float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0

    def n_runs(self, alpha: float, condition: str) -> int:
        return len(self.cells.get((format_alpha(alpha), condition), []))


def _default_model_config() -> model.ModelConfig:
    return model.ModelConfig(vocab_size=len(TokenVocab(load_lexicon())))


def run_cell(alpha: float, run_index: int, config: SweepConfig,
             out_dir: Path | None = None) -> list[dict]:
    """Dataset -> train -> four suites -> accuracy rows for one cell."""
    model_config = config.model_config or _default_model_config()
    seed = cell_seed(config.base_seed, _alpha_index(config.alphas, alpha),
                     run_index)
    sub_seeds = np.random.SeedSequence(seed).generate_state(3)
    lexicon = load_lexicon()
    vocab = TokenVocab(lexicon)

    dataset = grammar.generate_dataset(alpha, seed=int(sub_seeds[0]),
                                       lexicon=lexicon,
                                       n_sentences=config.n_sentences)
    train_config = replace(config.train_config, seed=int(sub_seeds[1]))

    run_dir = None
    if out_dir is not None:
        run_dir = Path(out_dir) / "runs" / cell_tag(
            alpha, run_index, seed, model_config, train_config)
        run_dir.mkdir(parents=True, exist_ok=True)
        grammar.write_dataset(dataset, run_dir / "data", lexicon)

    record = trainer.train_run(dataset, model_config, train_config,
                               out_dir=run_dir, lexicon=lexicon)

    rows = []
    for i, condition in enumerate(evaluator.CONDITIONS):
        pairs = evaluator.generate_pairs(
            condition, dataset.manifest, n=config.pairs_per_condition,
            seed=int(sub_seeds[2]) + i, lexicon=lexicon)
        if run_dir is not None:
            evaluator.write_suite(
                run_dir / "suites" / f"{condition.label}.tsv", pairs, lexicon)
        acc = evaluator.accuracy(record.best_params, model_config, vocab,
                                 pairs, lexicon)
        rows.append({
            "alpha": format_alpha(alpha),
            "run": run_index,
            "condition": condition.label,
            "accuracy": f"{acc:.6f}",
            "best_val_loss": f"{record.best_val_loss:.6f}",
            "seed": seed,
        })
    if run_dir is not None and not config.keep_checkpoints:
        (run_dir / "checkpoint.npz").unlink(missing_ok=True)
    return rows


def _alpha_index(alphas: tuple[float, ...], alpha: float) -> int:
    for i, a in enumerate(alphas):
        if format_alpha(a) == format_alpha(alpha):
            return i
    raise ValueError(f"alpha {alpha} not in sweep grid")


def _completed_cells(ledger_path: Path) -> set[tuple[str, int]]:
    if not ledger_path.exists():
        return set()
    counts: dict[tuple[str, int], int] = {}
    with open(ledger_path, newline="") as f:
        for row in csv.DictReader(f):
            key = (row["alpha"], int(row["run"]))
            counts[key] = counts.get(key, 0) + 1
    return {key for key, n in counts.items()
            if n >= len(evaluator.CONDITIONS)}


def _append_rows(ledger_path: Path, rows: list[dict]) -> None:
    new_file = not ledger_path.exists()
    with open(ledger_path, "a", newline="") as f:
        w = csv.DictWriter(f, fieldnames=LEDGER_COLUMNS)
        if new_file:
            w.writeheader()
        w.writerows(rows)


def _cell_job(args):
    alpha, run_index, config, out_dir = args
    return run_cell(alpha, run_index, config, out_dir)


def run_sweep(config: SweepConfig, out_dir: str | Path,
              progress=None) -> SweepResult:
    """Execute all missing cells; returns aggregates over the full ledger."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ledger_path = out_dir / "results.csv"
    done = _completed_cells(ledger_path)

    todo = [(alpha, run)
            for alpha in config.alphas
            for run in range(config.n_runs)
            if (format_alpha(alpha), run) not in done]

    failures = []
    if config.workers <= 1:
        for alpha, run in todo:
            try:
                rows = run_cell(alpha, run, config, out_dir)
            except Exception as exc:
                failures.append(_note_failure(out_dir, alpha, run, exc))
                continue
            _append_rows(ledger_path, rows)
            if progress:
                progress(alpha, run, rows)
    else:
        jobs = {(alpha, run): (alpha, run, config, out_dir)
                for alpha, run in todo}
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {pool.submit(_cell_job, job): key
                       for key, job in jobs.items()}
            for fut in as_completed(futures):
                alpha, run = futures[fut]
                try:
                    rows = fut.result()
                except Exception as exc:
                    failures.append(_note_failure(out_dir, alpha, run, exc))
                    continue
                _append_rows(ledger_path, rows)
                if progress:
                    progress(alpha, run, rows)

    result = summarize_ledger(ledger_path)
    result.failures.extend(failures)
    return result


def _note_failure(out_dir: Path, alpha: float, run: int,
                  exc: Exception) -> dict:
    entry = {"alpha": format_alpha(alpha), "run": run,
             "error": f"{type(exc).__name__}: {exc}"}
    with open(out_dir / "failures.csv", "a", newline="") as f:
        w = csv.writer(f)
        w.writerow([entry["alpha"], entry["run"], entry["error"],
                    traceback.format_exc(limit=3).replace("\n", " | ")])
    return entry


def summarize_ledger(ledger_path: str | Path) -> SweepResult:
    cells: dict[tuple[str, str], list[float]] = {}
    with open(ledger_path, newline="") as f:
        for row in csv.DictReader(f):
            key = (row["alpha"], row["condition"])
            cells.setdefault(key, []).append(float(row["accuracy"]))
    return SweepResult(cells, [])


def parse_alpha_spec(spec: str) -> tuple[float, ...]:
    """Parse CLI grids like ``0:3:0.1,inf`` or ``0,1.4,3.0,inf``."""
    alphas: list[float] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            lo_s, hi_s, step_s = part.split(":")
            lo, hi, step = float(lo_s), float(hi_s), float(step_s)
            n = int(round((hi - lo) / step))
            alphas.extend(round(lo + i * step, 10) for i in range(n + 1))
        else:
            alphas.append(parse_alpha(part))
    return tuple(alphas)
