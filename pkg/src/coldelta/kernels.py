"""Backend selection for the column-sparse delta kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. Set ``COLDELTA_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels


def _select() -> str:
    forced = os.environ.get("COLDELTA_BACKEND", "").strip().lower()
    if forced:
        if forced not in BACKENDS:
            raise ImportError(f"COLDELTA_BACKEND={forced!r} unavailable; have {sorted(BACKENDS)}")
        return forced
    return "cython" if "cython" in BACKENDS else "python"


BACKEND = _select()
_impl = BACKENDS[BACKEND]


def get_backend(name: str | None = None) -> ModuleType:
    """Kernel module for ``name`` (default: the active backend)."""
    if name is None:
        return _impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}") from None


def delta_attn(q, k, v, indices, counts, o_base, o_scale, backend: str | None = None):
    return get_backend(backend).delta_attn(q, k, v, indices, counts, o_base, float(o_scale))


def delta_mlp(x, w1, b1, w2, indices, counts, a_cache, m_cache, backend: str | None = None):
    return get_backend(backend).delta_mlp(x, w1, b1, w2, indices, counts, a_cache, m_cache)
