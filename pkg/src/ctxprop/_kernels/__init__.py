"""Hot loops with a compiled core and a pure-Python fallback.

The compiled extension is used when it imports; setting
``CTXPROP_PURE_PYTHON=1`` forces the fallback. Both backends consume the
same pre-drawn random numbers, so they produce identical results.
"""

import os

from . import _fallback

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

BACKENDS = {"python": _fallback}
if _core is not None:
    BACKENDS["cython"] = _core

if _core is not None and not os.environ.get("CTXPROP_PURE_PYTHON"):
    BACKEND = "cython"
else:
    BACKEND = "python"

_impl = BACKENDS[BACKEND]
gibbs_sweeps = _impl.gibbs_sweeps
greedy_match = _impl.greedy_match
overlaps_any = _impl.overlaps_any


def get_backend(name):
    """Kernel module by name ('cython' or 'python')."""
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available; have {sorted(BACKENDS)}") from None
