"""Training loop: AdamW at a fixed learning rate with periodic validation.

One run is 300 batches/epoch x 4 epochs = 1,200 steps at batch size 32,
which at the standard 9,600-sentence training split is exactly one full
pass per epoch under reshuffling.  Validation loss is computed every 300
steps over the whole validation split and the best-validation parameter
snapshot is kept.

Weight decay is decoupled and applied only to matrix-shaped tensors
(embeddings and projections); biases and norm parameters do not decay.
That choice, like the beta2/weight_decay defaults, is recorded in run.json.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, model
from .grammar import Dataset, format_alpha
from .lexicon import Lexicon, load_lexicon
from .tokenizer import TokenVocab


class NonFiniteGradient(RuntimeError):
    pass


class NonFiniteLoss(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 6e-4
    batch_size: int = 32
    batches_per_epoch: int = 300
    epochs: int = 4
    validate_every: int = 300
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.1
    eps: float = 1e-8
    grad_clip: float = 1.0   # global-norm cap; 0 disables
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "batches_per_epoch",
                     "epochs", "validate_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def total_steps(self) -> int:
        return self.batches_per_epoch * self.epochs


@dataclass
class RunRecord:
    alpha: float
    seed: int
    train_loss: list[float] = field(default_factory=list)
    val_steps: list[int] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_val_loss: float = math.inf
    best_step: int = -1
    checkpoint_path: str | None = None
    best_params: dict | None = None


class AdamW:
    """Decoupled-weight-decay Adam over a named parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], config: TrainConfig):
        self.config = config
        self.step_count = 0
        self.moments = {
            name: (np.zeros_like(p), np.zeros_like(p))
            for name, p in params.items()
        }

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        cfg = self.config
        self.step_count += 1
        for name, p in params.items():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(
                    f"non-finite gradient for {name} at step {self.step_count}")
            m, v = self.moments[name]
            wd = cfg.weight_decay if p.ndim >= 2 else 0.0
            kernels.adamw_step(p, g, m, v, self.step_count,
                               cfg.learning_rate, cfg.beta1, cfg.beta2,
                               cfg.eps, wd)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm.  No-op when max_norm <= 0.
    """
    total = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def adamw_step(params, grads, optimizer: AdamW) -> None:
    """Single optimizer update; state lives in ``optimizer``."""
    optimizer.step(params, grads)


def _epoch_order(rng: np.random.Generator, n: int, needed: int) -> np.ndarray:
    """Shuffled indices covering ``needed`` draws, reshuffling per pass."""
    reps = []
    while sum(len(r) for r in reps) < needed:
        reps.append(rng.permutation(n))
    return np.concatenate(reps)[:needed]


def _validation_loss(params, config, batches: list[np.ndarray]) -> float:
    total, count = 0.0, 0
    for ids in batches:
        targets = ids[:, 1:]
        n = int((targets != 0).sum())
        total += model.batch_loss(params, config, ids) * n
        count += n
    return total / count


def train_run(dataset: Dataset, model_config: model.ModelConfig,
              train_config: TrainConfig,
              out_dir: str | Path | None = None,
              lexicon: Lexicon | None = None) -> RunRecord:
    """Train one model on one dataset; returns the record with best params.

    Deterministic given the dataset and the seeds in ``train_config``.  When
    ``out_dir`` is given, writes checkpoint.npz, loss.csv and run.json.
    """
    lexicon = lexicon or load_lexicon()
    vocab = TokenVocab(lexicon)
    if len(vocab) != model_config.vocab_size:
        raise ValueError(
            f"model vocab {model_config.vocab_size} != tokenizer {len(vocab)}")

    train_ids = [vocab.encode(s.tokens(lexicon))
                 for s in dataset.splits["train"]]
    val_batches = _make_batches(vocab, dataset.splits["valid"], lexicon, 256)

    seeds = np.random.SeedSequence(train_config.seed).spawn(2)
    init_rng_seed = seeds[0].generate_state(1)[0]
    shuffle_rng = np.random.default_rng(seeds[1])

    params = model.init_params(model_config, seed=int(init_rng_seed))
    optimizer = AdamW(params, train_config)
    record = RunRecord(alpha=dataset.params.alpha, seed=train_config.seed)

    n_train = len(train_ids)
    bs = train_config.batch_size
    step = 0
    for _epoch in range(train_config.epochs):
        order = _epoch_order(shuffle_rng, n_train,
                             train_config.batches_per_epoch * bs)
        for b in range(train_config.batches_per_epoch):
            idx = order[b * bs:(b + 1) * bs]
            ids = _pad([train_ids[i] for i in idx])
            inputs, targets = ids[:, :-1], ids[:, 1:]
            mask = targets != 0
            loss_val, grads = model.backward(params, model_config, inputs,
                                             targets, mask)
            if not math.isfinite(loss_val):
                raise NonFiniteLoss(f"training loss {loss_val} at step {step}")
            clip_gradients(grads, train_config.grad_clip)
            optimizer.step(params, grads)
            step += 1
            record.train_loss.append(loss_val)
            if step % train_config.validate_every == 0:
                vloss = _validation_loss(params, model_config, val_batches)
                if not math.isfinite(vloss):
                    raise NonFiniteLoss(f"validation loss {vloss} at step {step}")
                record.val_steps.append(step)
                record.val_loss.append(vloss)
                if vloss < record.best_val_loss:
                    record.best_val_loss = vloss
                    record.best_step = step
                    record.best_params = {k: v.copy()
                                          for k, v in params.items()}

    if record.best_params is None:  # validate_every > total_steps
        record.best_params = {k: v.copy() for k, v in params.items()}
        record.best_step = step

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        record.checkpoint_path = str(_write_artifacts(
            out_dir, record, model_config, train_config))
    return record


def _pad(encoded: list[list[int]]) -> np.ndarray:
    max_len = max(len(e) for e in encoded)
    out = np.zeros((len(encoded), max_len), dtype=np.int64)
    for row, ids in zip(out, encoded):
        row[:len(ids)] = ids
    return out


def _make_batches(vocab: TokenVocab, sentences, lexicon: Lexicon,
                  batch_size: int) -> list[np.ndarray]:
    toks = [s.tokens(lexicon) for s in sentences]
    return [vocab.encode_batch(toks[i:i + batch_size])
            for i in range(0, len(toks), batch_size)]


def _write_artifacts(out_dir: Path, record: RunRecord,
                     model_config: model.ModelConfig,
                     train_config: TrainConfig) -> Path:
    ckpt = out_dir / "checkpoint.npz"
    model.save_checkpoint(ckpt, record.best_params, model_config, extra={
        "alpha": format_alpha(record.alpha),
        "seed": record.seed,
        "best_val_loss": record.best_val_loss,
        "best_step": record.best_step,
    })
    with open(out_dir / "loss.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "train_loss", "val_loss"])
        val_at = dict(zip(record.val_steps, record.val_loss))
        for i, tl in enumerate(record.train_loss, start=1):
            w.writerow([i, f"{tl:.6f}",
                        f"{val_at[i]:.6f}" if i in val_at else ""])
    with open(out_dir / "run.json", "w") as f:
        json.dump({
            "alpha": format_alpha(record.alpha),
            "seed": record.seed,
            "model_config": asdict(model_config),
            "train_config": asdict(train_config),
            "weight_decay_rule": "tensors with ndim >= 2",
            "kernel_backend": kernels.BACKEND,
            "best_val_loss": record.best_val_loss,
            "best_step": record.best_step,
            "final_train_loss": record.train_loss[-1],
            "val_steps": record.val_steps,
            "val_loss": record.val_loss,
        }, f, indent=2, sort_keys=True)
        f.write("\n")
    return ckpt
