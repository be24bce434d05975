"""Pure-numpy implementations of the training hot spots.

These are the reference kernels; the compiled backend in ``_ckernels.pyx``
implements the same signatures.  Matrix products are not here — they go
through BLAS either way — only the memory-bound fused ops: layer norm,
GELU, causal softmax, the softmax/cross-entropy head, and the AdamW update.

All kernels preserve the input dtype (float32 or float64) and are
deterministic.
"""

from __future__ import annotations

import numpy as np

NAME = "python"

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def layernorm_fwd(x, g, b, eps=1e-5):
    """x: (N, C) -> (y, mean, rstd); y = (x - mean) * rstd * g + b."""
    mean = x.mean(axis=1)
    var = x.var(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[:, None]) * rstd[:, None]
    return xhat * g + b, mean, rstd


def layernorm_bwd(dy, x, g, mean, rstd):
    xhat = (x - mean[:, None]) * rstd[:, None]
    dxhat = dy * g
    dx = rstd[:, None] * (
        dxhat
        - dxhat.mean(axis=1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    return dx, dg, db


def gelu_fwd(x):
    """tanh-approximated GELU."""
    inner = _GELU_C * (x + _GELU_A * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_bwd(x, dy):
    inner = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(inner)
    dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)


def causal_softmax_fwd(scores):
    """scores: (M, T, T) -> row-wise softmax over columns <= row index.

    Masked (future) positions get exactly zero probability.
    """
    _, T, _ = scores.shape
    mask = np.tril(np.ones((T, T), dtype=bool))
    s = np.where(mask, scores, -np.inf)
    m = s.max(axis=2, keepdims=True)
    e = np.exp(s - m)
    e[:, ~mask] = 0.0
    return e / e.sum(axis=2, keepdims=True)


def causal_softmax_bwd(probs, dprobs):
    dot = (probs * dprobs).sum(axis=2, keepdims=True)
    return probs * (dprobs - dot)


def softmax_xent(logits, targets, valid, want_grad=True):
    """Per-row NLL of ``targets`` under softmax(logits), plus d(sum NLL)/dlogits.

    logits: (N, V); targets: (N,) int; valid: (N,) bool.  Invalid rows get
    zero loss and zero gradient.  The gradient is for the *sum* of the valid
    rows' NLL; callers divide by the row count they care about.
    """
    n = logits.shape[0]
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    z = e.sum(axis=1)
    logp_t = (logits[np.arange(n), targets] - m[:, 0]) - np.log(z)
    nll = np.where(valid, -logp_t, 0.0).astype(logits.dtype)
    if not want_grad:
        return nll, None
    dlogits = e / z[:, None]
    dlogits[np.arange(n), targets] -= 1.0
    dlogits[~valid] = 0.0
    return nll, dlogits


def adamw_step(p, g, m, v, step, lr, beta1, beta2, eps, weight_decay):
    """One decoupled-weight-decay Adam update, in place on p, m, v.

    ``step`` is 1-based.  Weight decay is applied directly to the incoming
    parameter value, scaled by the learning rate.
    """
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1 ** step)
    vhat = v / (1.0 - beta2 ** step)
    p -= lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * p)
