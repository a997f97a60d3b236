"""trafeq: traffic equilibrium toolkit.

Building blocks: a mode-tagged network with deterministic routing
(:mod:`trafeq.network`), link cost families with closed-form conjugates
(:mod:`trafeq.costs`), gravity/entropy trip distribution
(:mod:`trafeq.demand`), a generic entropy-program solver and the exchange
chain validating it (:mod:`trafeq.elp`), Beckmann user equilibrium
(:mod:`trafeq.beckmann`), capacitated stable-dynamics equilibrium with mode
split, tolls and an LP cross-check (:mod:`trafeq.stable_dynamics`), the
combined distribution + split + assignment solver and its smooth variant
(:mod:`trafeq.three_stage`), and a scenario CLI (:mod:`trafeq.cli`).
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
