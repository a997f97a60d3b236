"""Hot-loop kernels with a compiled core and a pure-Python twin.

The solvers spend essentially all their time in three inner loops: label
setting / tree loading for shortest paths, the bounded-hop log-sum-exp value
iteration behind smoothed path costs, and the event loop of the exchange-chain
simulator.  Both backends implement the same functions with identical
operation order, so results are bitwise reproducible regardless of which one
is active.

Selection happens at import time: the Cython extension is preferred when it
built, the pure twin otherwise.  Set ``TRAFEQ_BACKEND=pure`` to force the
fallback or ``TRAFEQ_BACKEND=cython`` to insist on the extension (raises if
it is missing).  ``benchmarks/bench_kernels.py`` compares the two.
"""

import os as _os

_requested = _os.environ.get("TRAFEQ_BACKEND", "").strip().lower()

if _requested in ("pure", "python"):
    from . import _pure as _impl

    BACKEND = "pure"
elif _requested in ("cython", "compiled", "core"):
    from . import _core as _impl  # type: ignore[attr-defined]

    BACKEND = "cython"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _pure as _impl

        BACKEND = "pure"

dijkstra = _impl.dijkstra
load_tree = _impl.load_tree
walk_weight_tables = _impl.walk_weight_tables
walk_suffix_tables = _impl.walk_suffix_tables
edge_usage_logs = _impl.edge_usage_logs
exchange_chain_run = _impl.exchange_chain_run

__all__ = [
    "BACKEND",
    "dijkstra",
    "load_tree",
    "walk_weight_tables",
    "walk_suffix_tables",
    "edge_usage_logs",
    "exchange_chain_run",
]
