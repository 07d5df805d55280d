"""Backend selection for the trajectory kernel.

The compiled extension is used when importable. Set
``MONITORED_CHAIN_BACKEND=python`` to force the numpy fallback, or
``=compiled`` to fail loudly if the extension is missing.
"""
import os

import numpy as np

from . import _kernel_py

_requested = os.environ.get("MONITORED_CHAIN_BACKEND", "auto").lower()

_compiled = None
if _requested != "python":
    try:
        from . import _kernel as _compiled
    except ImportError:
        if _requested == "compiled":
            raise
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def get_advance(backend=None):
    """Return the ``advance`` implementation for ``backend`` (default: active)."""
    backend = backend or BACKEND
    if backend == "python":
        return _kernel_py.advance
    if backend == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernel not built; run `pip install -e .`")
        return _compiled.advance
    raise ValueError(f"unknown backend {backend!r}")


def advance(states, U, k, eta, dt, dW, backend=None):
    """Run ``dW.shape[1]`` Kraus steps on every state in ``states`` in place.

    Returns the per-trajectory status array (``-1`` on success, else the
    failing step index).
    """
    states_c = np.ascontiguousarray(states, dtype=np.complex128)
    U = np.array(U, dtype=np.complex128, order="C")
    dW = np.asarray(dW, dtype=np.float64)
    status = get_advance(backend)(states_c, U, float(k), float(eta), float(dt), dW)
    if states_c is not states:
        states[...] = states_c
    return np.asarray(status)
