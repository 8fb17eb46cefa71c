"""Backend selection for the inner loops.

The compiled module is used when importable; set ``RELAY_SIM_PURE=1`` to force
the pure-Python loops.  Both backends are deterministic functions of their
array inputs, so results never depend on which one ran.
"""

import os

from . import _pykernels

if os.environ.get("RELAY_SIM_PURE", "") not in {"", "0"}:
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pykernels
        BACKEND = "python"

chain_argmax = _impl.chain_argmax
batch_chain_argmax = _impl.batch_chain_argmax
hull_parents = _impl.hull_parents
range_targets = _impl.range_targets
batch_range_chain = _impl.batch_range_chain
batch_general_first = _impl.batch_general_first


def backends():
    """Available backends as ``{name: module}``."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:  # pragma: no cover
        pass
    return out
