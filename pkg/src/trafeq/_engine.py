"""Staged dual-averaging maximizer over a box, with primal recovery.

The concave objectives here (capacitated equilibrium duals) are piecewise
linear in the time vector: the supergradient at t is (loaded flows at t)
minus a constant capacity-like coefficient.  The engine runs simple dual
averaging inside stages —

    t_{k+1} = clip( prox + R * sum(g_1..g_k) / sqrt(sum ||g_i||^2) )

— and recovers the primal as the uniform average of the per-iteration
oracle flows, the standard certificate of averaged subgradient schemes.
Between stages the trust radius R doubles while the averaged iterate keeps
escaping it (finding the distance to the solution) and halves once it stops
(refinement); stage windows grow geometrically so late averages are long.

Convergence is certified, not assumed: a caller-supplied check evaluates
feasibility / complementarity / gap residuals of the averaged pair and the
engine returns as soon as they pass.  The same check reports the signature
of an infeasible instance (averaged flows stuck above capacity while the
time sits on its upper box bound); enough consecutive sightings raise
:class:`InfeasibleProblemError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class InfeasibleProblemError(RuntimeError):
    """No feasible flow pattern exists under the capacity vector."""


@dataclass
class EngineOptions:
    max_iter: int = 400_000
    stage_iters: int = 100
    stage_growth: float = 1.35
    radius0: Optional[float] = None
    radius_min: float = 1e-12
    check_every: int = 25
    infeas_patience: int = 40


@dataclass
class EngineResult:
    t: np.ndarray
    flows: np.ndarray
    value: float
    residuals: dict
    converged: bool
    iterations: int
    stages: int
    history: list = field(default_factory=list)


def maximize(
    oracle: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]],
    check: Callable[[np.ndarray, np.ndarray], tuple[bool, dict, bool]],
    lo: np.ndarray,
    hi: np.ndarray,
    t0: np.ndarray,
    opts: EngineOptions,
) -> EngineResult:
    """Run staged dual averaging until the residual check passes.

    ``oracle(t)`` returns (value, supergradient, flow payload); ``check``
    maps an averaged (t, flows) pair to (converged, residuals,
    infeasibility signal).  Raises :class:`InfeasibleProblemError` after
    ``infeas_patience`` consecutive infeasibility sightings; otherwise
    returns the best averaged pair seen, flagged by ``converged``.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    t = np.clip(np.asarray(t0, dtype=np.float64), lo, hi)
    radius = opts.radius0
    if radius is None:
        scale = float(np.mean(np.abs(lo))) or 1.0
        radius = 0.25 * max(scale, 1e-9)
    stage_len = max(1, opts.stage_iters)

    total = 0
    stages = 0
    strikes = 0
    strike_feas = math.inf
    best: Optional[EngineResult] = None
    history: list = []

    def score(res: dict) -> float:
        return res["feas"] + res["comp"] + res["gap"]

    while total < opts.max_iter:
        stages += 1
        prox = t.copy()
        gsum = np.zeros_like(t)
        sumsq = 0.0
        acc_t = np.zeros_like(t)
        acc_f = None
        count = 0
        t_avg = prox
        f_avg = None
        budget = min(stage_len, opts.max_iter - total)
        for _ in range(budget):
            value, g, flows = oracle(t)
            acc_t += t
            if acc_f is None:
                acc_f = np.array(flows, dtype=np.float64)
            else:
                acc_f += flows
            count += 1
            total += 1
            gsum += g
            sumsq += float(g @ g)
            if sumsq > 0.0:
                t = np.clip(prox + radius * gsum / math.sqrt(sumsq), lo, hi)
            do_check = (
                sumsq == 0.0 or count % opts.check_every == 0 or total >= opts.max_iter
            )
            if do_check:
                t_avg = acc_t / count
                f_avg = acc_f / count
                converged, residuals, infeas_sig = check(t_avg, f_avg)
                result = EngineResult(
                    t=t_avg,
                    flows=f_avg,
                    value=residuals.get("value", value),
                    residuals=residuals,
                    converged=converged,
                    iterations=total,
                    stages=stages,
                    history=history,
                )
                if best is None or score(residuals) < score(best.residuals):
                    best = result
                if converged:
                    return result
                # infeasibility bookkeeping: consecutive sightings count only
                # while the violation level is not improving (feasible runs
                # shrink it; infeasible ones have a positive floor)
                if infeas_sig:
                    if strikes == 0:
                        strike_feas = residuals["feas"]
                    strikes += 1
                    if residuals["feas"] < 0.8 * strike_feas:
                        strikes = 0
                else:
                    strikes = max(0, strikes - 1)
                if strikes >= opts.infeas_patience:
                    raise InfeasibleProblemError(
                        "averaged flows stay above capacity while times sit on "
                        f"their upper bound (residuals {residuals})"
                    )
                if sumsq == 0.0:
                    # zero supergradient but residuals failed: flows cannot be
                    # improved by moving t, treat as converged-as-is
                    return result
        t_avg = acc_t / count
        f_avg = acc_f / count if acc_f is not None else np.zeros(0)
        history.append(
            {"stage": stages, "radius": radius, "iters": count, "move": float(np.linalg.norm(t_avg - prox))}
        )
        movement = float(np.linalg.norm(t_avg - prox))
        if movement >= 0.5 * radius:
            radius *= 2.0
        else:
            radius = max(radius * 0.5, opts.radius_min)
        t = t_avg.copy()
        stage_len = int(math.ceil(stage_len * opts.stage_growth))
    assert best is not None
    return best
