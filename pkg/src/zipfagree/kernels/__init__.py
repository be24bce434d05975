"""Kernel backend selection.

The compiled Cython backend is used when importable; otherwise the numpy
fallback.  Set ZIPFAGREE_KERNELS=python or =cython to force one (forcing
cython raises if the extension is missing).  Both backends expose the same
functions with matching numerics to float tolerance; per-backend results
are bit-deterministic.
"""

from __future__ import annotations

import os

from . import _pykernels

_choice = os.environ.get("ZIPFAGREE_KERNELS", "auto").lower()
if _choice not in ("auto", "python", "cython"):
    raise ValueError(
        f"ZIPFAGREE_KERNELS must be auto, python or cython, got {_choice!r}")

if _choice == "python":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "cython":
            raise
        _impl = _pykernels

BACKEND = _impl.NAME

layernorm_fwd = _impl.layernorm_fwd
layernorm_bwd = _impl.layernorm_bwd
gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
causal_softmax_fwd = _impl.causal_softmax_fwd
causal_softmax_bwd = _impl.causal_softmax_bwd
softmax_xent = _impl.softmax_xent
adamw_step = _impl.adamw_step


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Return a backend module by name (for benchmarks and tests)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
