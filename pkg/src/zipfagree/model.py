"""Decoder-only transformer language model with hand-written gradients.

Pre-norm residual blocks, learned positional embeddings, GELU MLP with 4x
expansion, input/output embeddings tied.  The default configuration (2
layers, 4 heads, width 256) lands at ~1.63M trainable parameters.

Parameters live in a flat ``{name: ndarray}`` dict so the optimizer and
checkpoint code can treat them uniformly.  ``backward`` returns gradients of
the mean masked next-token NLL for every parameter tensor; correctness is
pinned by finite-difference tests on a downsized configuration.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import kernels

CHECKPOINT_VERSION = 1
LN_EPS = 1e-5


class SequenceTooLong(ValueError):
    pass


class EmptyMask(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 256
    context_length: int = 24
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.dropout != 0.0:
            raise ValueError("only dropout=0 is supported")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    C, V, L = config.d_model, config.vocab_size, config.context_length
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (V, C),
        "pos_emb": (L, C),
    }
    for i in range(config.n_layers):
        p = f"l{i}."
        shapes[p + "ln1.g"] = (C,)
        shapes[p + "ln1.b"] = (C,)
        shapes[p + "attn.w_qkv"] = (C, 3 * C)
        shapes[p + "attn.b_qkv"] = (3 * C,)
        shapes[p + "attn.w_o"] = (C, C)
        shapes[p + "attn.b_o"] = (C,)
        shapes[p + "ln2.g"] = (C,)
        shapes[p + "ln2.b"] = (C,)
        shapes[p + "mlp.w_up"] = (C, 4 * C)
        shapes[p + "mlp.b_up"] = (4 * C,)
        shapes[p + "mlp.w_down"] = (4 * C, C)
        shapes[p + "mlp.b_down"] = (C,)
    shapes["lnf.g"] = (C,)
    shapes["lnf.b"] = (C,)
    return shapes


def param_count(config: ModelConfig) -> int:
    """Exact trainable-parameter total (output projection is tied, so free)."""
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


def init_params(config: ModelConfig, seed: int,
                dtype=np.float32) -> dict[str, np.ndarray]:
    """normal(0, 0.02) weights; zero biases/offsets; unit norm scales."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith((".b", ".b_qkv", ".b_o", ".b_up", ".b_down")):
            arr = np.zeros(shape)
        elif name.endswith(".g"):
            arr = np.ones(shape)
        else:
            arr = rng.normal(0.0, 0.02, size=shape)
        params[name] = arr.astype(dtype)
    return params


def _check_ids(config: ModelConfig, ids: np.ndarray) -> None:
    if ids.ndim != 2:
        raise ValueError(f"ids must be (batch, time), got shape {ids.shape}")
    if ids.shape[1] > config.context_length:
        raise SequenceTooLong(
            f"sequence length {ids.shape[1]} exceeds context "
            f"{config.context_length}")
    if ids.max(initial=0) >= config.vocab_size or ids.min(initial=0) < 0:
        raise ValueError("token id out of range")


def _forward(params, config: ModelConfig, ids: np.ndarray, keep_cache: bool):
    """Return (logits (B,T,V), cache).  Cache holds what backward needs."""
    _check_ids(config, ids)
    B, T = ids.shape
    C, H = config.d_model, config.n_heads
    hd = config.head_dim
    scale = 1.0 / math.sqrt(hd)

    x = params["tok_emb"][ids.reshape(-1)].reshape(B, T, C) \
        + params["pos_emb"][:T]
    layer_caches = []
    for i in range(config.n_layers):
        p = f"l{i}."
        a2d = x.reshape(B * T, C)
        ah, mu1, rstd1 = kernels.layernorm_fwd(
            a2d, params[p + "ln1.g"], params[p + "ln1.b"], LN_EPS)
        qkv = ah @ params[p + "attn.w_qkv"] + params[p + "attn.b_qkv"]
        qkv4 = qkv.reshape(B, T, 3, H, hd).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv4[0], qkv4[1], qkv4[2]          # each (B,H,T,hd)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale
        probs = kernels.causal_softmax_fwd(
            scores.reshape(B * H, T, T)).reshape(B, H, T, T)
        ctx = probs @ v                               # (B,H,T,hd)
        ctx2d = np.ascontiguousarray(ctx.transpose(0, 2, 1, 3)).reshape(B * T, C)
        attn_out = ctx2d @ params[p + "attn.w_o"] + params[p + "attn.b_o"]
        x_mid = x + attn_out.reshape(B, T, C)

        m2d = x_mid.reshape(B * T, C)
        mh, mu2, rstd2 = kernels.layernorm_fwd(
            m2d, params[p + "ln2.g"], params[p + "ln2.b"], LN_EPS)
        up = mh @ params[p + "mlp.w_up"] + params[p + "mlp.b_up"]
        act = kernels.gelu_fwd(up)
        down = act @ params[p + "mlp.w_down"] + params[p + "mlp.b_down"]
        x_out = x_mid + down.reshape(B, T, C)

        if keep_cache:
            layer_caches.append(dict(
                a2d=a2d, ah=ah, mu1=mu1, rstd1=rstd1, q=q, k=k, v=v,
                probs=probs, ctx2d=ctx2d, m2d=m2d, mh=mh, mu2=mu2,
                rstd2=rstd2, up=up, act=act))
        x = x_out

    f2d = x.reshape(B * T, C)
    fh, muf, rstdf = kernels.layernorm_fwd(
        f2d, params["lnf.g"], params["lnf.b"], LN_EPS)
    logits = (fh @ params["tok_emb"].T).reshape(B, T, config.vocab_size)
    cache = None
    if keep_cache:
        cache = dict(ids=ids, layers=layer_caches, f2d=f2d, fh=fh,
                     muf=muf, rstdf=rstdf, shape=(B, T))
    return logits, cache


def forward(params, config: ModelConfig, ids: np.ndarray) -> np.ndarray:
    """Per-position next-token log-probabilities, shape (B, T, vocab)."""
    logits, _ = _forward(params, config, ids, keep_cache=False)
    m = logits.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(logits - m).sum(axis=-1, keepdims=True))
    return logits - lse


def loss(logprobs: np.ndarray, targets: np.ndarray,
         mask: np.ndarray) -> float:
    """Mean negative log-probability of targets over unmasked positions."""
    if not mask.any():
        raise EmptyMask("no unmasked positions")
    B, T = targets.shape
    picked = logprobs.reshape(B * T, -1)[np.arange(B * T), targets.reshape(-1)]
    picked = picked.reshape(B, T)
    return float(-(picked * mask).sum() / mask.sum())


def backward(params, config: ModelConfig, ids: np.ndarray,
             targets: np.ndarray, mask: np.ndarray):
    """Mean masked NLL and its gradient for every parameter tensor."""
    if not mask.any():
        raise EmptyMask("no unmasked positions")
    logits, cache = _forward(params, config, ids, keep_cache=True)
    B, T = cache["shape"]
    C, H = config.d_model, config.n_heads
    hd = config.head_dim
    scale = 1.0 / math.sqrt(hd)
    V = config.vocab_size
    n_valid = int(mask.sum())

    nll, dlogits = kernels.softmax_xent(
        logits.reshape(B * T, V), targets.reshape(-1).astype(np.int64),
        np.ascontiguousarray(mask.reshape(-1), dtype=bool))
    total_loss = float(nll.sum() / n_valid)
    dlogits /= n_valid

    grads: dict[str, np.ndarray] = {
        "tok_emb": np.zeros_like(params["tok_emb"]),
        "pos_emb": np.zeros_like(params["pos_emb"]),
    }

    # tied head: logits = fh @ tok_emb.T
    dfh = dlogits @ params["tok_emb"]
    grads["tok_emb"] += dlogits.T @ cache["fh"]
    df2d, grads["lnf.g"], grads["lnf.b"] = kernels.layernorm_bwd(
        dfh, cache["f2d"], params["lnf.g"], cache["muf"], cache["rstdf"])
    dx = df2d.reshape(B, T, C)

    for i in reversed(range(config.n_layers)):
        p = f"l{i}."
        c = cache["layers"][i]
        # MLP block: x_out = x_mid + down
        ddown = dx.reshape(B * T, C)
        grads[p + "mlp.w_down"] = c["act"].T @ ddown
        grads[p + "mlp.b_down"] = ddown.sum(axis=0)
        dact = ddown @ params[p + "mlp.w_down"].T
        dup = kernels.gelu_bwd(c["up"], dact)
        grads[p + "mlp.w_up"] = c["mh"].T @ dup
        grads[p + "mlp.b_up"] = dup.sum(axis=0)
        dmh = dup @ params[p + "mlp.w_up"].T
        dm2d, grads[p + "ln2.g"], grads[p + "ln2.b"] = kernels.layernorm_bwd(
            dmh, c["m2d"], params[p + "ln2.g"], c["mu2"], c["rstd2"])
        dx = dx + dm2d.reshape(B, T, C)

        # attention block: x_mid = x + attn_out
        dattn = dx.reshape(B * T, C)
        grads[p + "attn.w_o"] = c["ctx2d"].T @ dattn
        grads[p + "attn.b_o"] = dattn.sum(axis=0)
        dctx2d = dattn @ params[p + "attn.w_o"].T
        dctx = dctx2d.reshape(B, T, H, hd).transpose(0, 2, 1, 3)
        dprobs = dctx @ c["v"].transpose(0, 1, 3, 2)
        dv = c["probs"].transpose(0, 1, 3, 2) @ dctx
        dscores = kernels.causal_softmax_bwd(
            c["probs"].reshape(B * H, T, T),
            np.ascontiguousarray(dprobs.reshape(B * H, T, T))
        ).reshape(B, H, T, T)
        dq = (dscores @ c["k"]) * scale
        dk = (dscores.transpose(0, 1, 3, 2) @ c["q"]) * scale
        dqkv4 = np.stack([dq, dk, dv])                # (3,B,H,T,hd)
        dqkv = np.ascontiguousarray(
            dqkv4.transpose(1, 3, 0, 2, 4)).reshape(B * T, 3 * C)
        grads[p + "attn.w_qkv"] = c["ah"].T @ dqkv
        grads[p + "attn.b_qkv"] = dqkv.sum(axis=0)
        dah = dqkv @ params[p + "attn.w_qkv"].T
        da2d, grads[p + "ln1.g"], grads[p + "ln1.b"] = kernels.layernorm_bwd(
            dah, c["a2d"], params[p + "ln1.g"], c["mu1"], c["rstd1"])
        dx = dx + da2d.reshape(B, T, C)

    grads["pos_emb"][:T] = dx.sum(axis=0)
    np.add.at(grads["tok_emb"], ids.reshape(-1), dx.reshape(B * T, C))
    return total_loss, grads


def batch_loss(params, config: ModelConfig, ids: np.ndarray) -> float:
    """Mean next-token NLL over a padded id batch (no gradients)."""
    inputs, targets = ids[:, :-1], ids[:, 1:]
    valid = targets != 0
    if not valid.any():
        raise EmptyMask("batch is all padding")
    logits, _ = _forward(params, config, inputs, keep_cache=False)
    B, T, V = logits.shape
    nll, _ = kernels.softmax_xent(
        logits.reshape(B * T, V), targets.reshape(-1).astype(np.int64),
        np.ascontiguousarray(valid.reshape(-1)), want_grad=False)
    return float(nll.sum() / valid.sum())


def sequence_logprobs(params, config: ModelConfig, ids: np.ndarray) -> np.ndarray:
    """Total log-probability of each padded id row (BOS..EOS), shape (B,).

    Each row's score sums log P(next|prefix) over its own non-pad targets,
    so scores are independent of what else shares the batch.
    """
    inputs, targets = ids[:, :-1], ids[:, 1:]
    valid = targets != 0
    logits, _ = _forward(params, config, inputs, keep_cache=False)
    B, T, V = logits.shape
    nll, _ = kernels.softmax_xent(
        logits.reshape(B * T, V), targets.reshape(-1).astype(np.int64),
        np.ascontiguousarray(valid.reshape(-1)), want_grad=False)
    return -nll.reshape(B, T).sum(axis=1)


def sentence_logprob(params, config: ModelConfig, vocab,
                     tokens) -> float:
    """Log-probability of one sentence given as surface tokens."""
    ids = np.asarray([vocab.encode(tokens)], dtype=np.int64)
    return float(sequence_logprobs(params, config, ids)[0])


def save_checkpoint(path: str | Path, params, config: ModelConfig,
                    extra: dict | None = None) -> Path:
    """Versioned npz container: float32 tensors + a JSON metadata entry."""
    path = Path(path)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "param_names": sorted(params),
        "extra": extra or {},
    }
    arrays = {name: np.ascontiguousarray(p, dtype=np.float32)
              for name, p in params.items()}
    with open(path, "wb") as f:
        np.savez(f, __meta__=np.asarray(json.dumps(meta, sort_keys=True)),
                 **arrays)
    return path


def load_checkpoint(path: str | Path):
    """Return (params, config, extra) from a checkpoint file."""
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["__meta__"]))
        if meta["format_version"] != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {meta['format_version']}")
        params = {name: npz[name] for name in meta["param_names"]}
    config = ModelConfig(**meta["config"])
    return params, config, meta.get("extra", {})
