"""Kernel backend selection.

The compiled extension ``apub._core`` is used when it was built; otherwise
the numpy fallback is loaded. Set ``APUB_PURE_PYTHON=1`` to force the
fallback.
"""

import os

from apub import _fallback

_impl = None
if os.environ.get("APUB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from apub import _core as _impl
    except ImportError:  # extension not built
        _impl = None

if _impl is None:
    _impl = _fallback
    BACKEND = "python"
else:
    BACKEND = "compiled"

fill_uint64 = _impl.fill_uint64
bootstrap_counts = _impl.bootstrap_counts
bootstrap_means = _impl.bootstrap_means
simplex = _impl.simplex
simplex_batch = _impl.simplex_batch

OPTIMAL, INFEASIBLE, UNBOUNDED, BREAKDOWN, ITERATION_LIMIT = range(5)
