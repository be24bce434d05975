"""Benchmark the kernel backends against each other.

Times each fused kernel on training-shaped inputs and a full
forward+backward+update step of the standard model, for every available
backend.  Matrix products are BLAS in both backends, so the deltas isolate
the fused elementwise/reduction ops.
"""

from __future__ import annotations

import csv
import time
from pathlib import Path

import numpy as np

from . import kernels, model
from .lexicon import load_lexicon
from .tokenizer import TokenVocab

_B, _T, _C, _H = 32, 10, 256, 4


def _kernel_cases(backend, rng):
    C4 = 4 * _C
    x = rng.standard_normal((_B * _T, _C)).astype(np.float32)
    g = np.ones(_C, dtype=np.float32)
    b = np.zeros(_C, dtype=np.float32)
    dy = rng.standard_normal((_B * _T, _C)).astype(np.float32)
    up = rng.standard_normal((_B * _T, C4)).astype(np.float32)
    dup = rng.standard_normal((_B * _T, C4)).astype(np.float32)
    scores = rng.standard_normal((_B * _H, _T, _T)).astype(np.float32)
    dprobs = rng.standard_normal((_B * _H, _T, _T)).astype(np.float32)
    logits = rng.standard_normal((_B * _T, 166)).astype(np.float32)
    targets = rng.integers(0, 166, _B * _T)
    valid = np.ones(_B * _T, dtype=bool)
    p = rng.standard_normal(_C * C4).astype(np.float32)
    grad = rng.standard_normal(_C * C4).astype(np.float32)
    m = np.zeros_like(p)
    v = np.zeros_like(p)

    _, mean, rstd = backend.layernorm_fwd(x, g, b)
    probs = backend.causal_softmax_fwd(scores)
    return {
        "layernorm_fwd": lambda: backend.layernorm_fwd(x, g, b),
        "layernorm_bwd": lambda: backend.layernorm_bwd(dy, x, g, mean, rstd),
        "gelu_fwd": lambda: backend.gelu_fwd(up),
        "gelu_bwd": lambda: backend.gelu_bwd(up, dup),
        "causal_softmax_fwd": lambda: backend.causal_softmax_fwd(scores),
        "causal_softmax_bwd": lambda: backend.causal_softmax_bwd(probs,
                                                                 dprobs),
        "softmax_xent": lambda: backend.softmax_xent(logits, targets, valid),
        "adamw_step": lambda: backend.adamw_step(p, grad, m, v, 1, 6e-4,
                                                 0.9, 0.999, 1e-8, 0.01),
    }


def _time(fn, repeats: int) -> float:
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(repeats: int = 50) -> list[dict]:
    rows = []
    rng = np.random.default_rng(0)
    for name in kernels.available_backends():
        backend = kernels.get_backend(name)
        for op, fn in _kernel_cases(backend, rng).items():
            rows.append({"scope": "kernel", "op": op, "backend": name,
                         "seconds": _time(fn, repeats)})
    return rows


def bench_train_step(n_steps: int = 20) -> list[dict]:
    """Full forward+backward+update timing per backend on the real model."""
    import importlib

    from . import kernels as kernel_pkg

    lexicon = load_lexicon()
    vocab = TokenVocab(lexicon)
    config = model.ModelConfig(vocab_size=len(vocab))
    rng = np.random.default_rng(0)
    ids = rng.integers(3, len(vocab), size=(_B, 11))
    ids[:, 0] = vocab.BOS
    inputs, targets = ids[:, :-1], ids[:, 1:]
    mask = np.ones_like(targets, dtype=bool)

    rows = []
    original = kernel_pkg.get_backend(kernel_pkg.BACKEND)
    try:
        for name in kernel_pkg.available_backends():
            backend = kernel_pkg.get_backend(name)
            _swap_backend(kernel_pkg, backend)
            params = model.init_params(config, seed=0)
            mom = {k: (np.zeros_like(p), np.zeros_like(p))
                   for k, p in params.items()}

            def step():
                _, grads = model.backward(params, config, inputs, targets,
                                          mask)
                for k, p in params.items():
                    kernel_pkg.adamw_step(p, grads[k], *mom[k], 1, 6e-4,
                                          0.9, 0.999, 1e-8, 0.0)

            rows.append({"scope": "train", "op": "train_step",
                         "backend": name, "seconds": _time(step, n_steps)})
    finally:
        _swap_backend(kernel_pkg, original)
    return rows


def _swap_backend(kernel_pkg, backend) -> None:
    for fn in ("layernorm_fwd", "layernorm_bwd", "gelu_fwd", "gelu_bwd",
               "causal_softmax_fwd", "causal_softmax_bwd", "softmax_xent",
               "adamw_step"):
        setattr(kernel_pkg, fn, getattr(backend, fn))


def run_benchmarks(n_steps: int = 20) -> list[dict]:
    return bench_kernels() + bench_train_step(n_steps)


def print_table(rows: list[dict]) -> None:
    by_op: dict[str, dict[str, float]] = {}
    for r in rows:
        by_op.setdefault(r["op"], {})[r["backend"]] = r["seconds"]
    backends = sorted({r["backend"] for r in rows})
    header = f"{'op':22s}" + "".join(f"{b:>14s}" for b in backends)
    print(header + ("       speedup" if len(backends) > 1 else ""))
    print("-" * len(header))
    for op, times in by_op.items():
        line = f"{op:22s}"
        for b in backends:
            t = times.get(b)
            line += f"{t * 1e6:12.1f}us" if t is not None else f"{'-':>14s}"
        if "python" in times and "cython" in times:
            line += f"{times['python'] / times['cython']:12.2f}x"
        print(line)


def write_csv(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["scope", "op", "backend",
                                          "seconds"])
        w.writeheader()
        w.writerows(rows)
