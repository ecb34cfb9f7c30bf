"""Backend selection: the compiled extension when built, numpy otherwise.

Set TDCNN_BACKEND=numpy or TDCNN_BACKEND=compiled before import to force a
choice (forcing "compiled" raises if the extension is missing).
"""
import os

from . import numpy_backend


def _try_compiled():
    try:
        from . import compiled_backend
    except ImportError:
        return None
    return compiled_backend


_forced = os.environ.get("TDCNN_BACKEND", "").strip().lower()
if _forced == "numpy":
    active = numpy_backend
elif _forced == "compiled":
    from . import compiled_backend as active
elif _forced:
    raise ValueError(f"unknown TDCNN_BACKEND value: {_forced!r}")
else:
    active = _try_compiled() or numpy_backend


def backend_name() -> str:
    return active.name


def available_backends() -> dict:
    """Name -> backend module for every backend importable right now."""
    out = {"numpy": numpy_backend}
    compiled = _try_compiled()
    if compiled is not None:
        out["compiled"] = compiled
    return out
