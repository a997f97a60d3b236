"""Trip-distribution machinery: doubly constrained gravity model, entropy
objective, the mean-cost stopping criterion and deterrence calibration.

Marginals are kept normalized (departures ``l`` and arrivals ``w`` each sum
to one); the caller rescales by total trips when physical counts are needed.
The balancing iteration alternates the two closed-form scaling updates
(row factors then column factors) until the marginals of the reconstructed
matrix match; the fixed point maximizes entropy minus beta times mean cost
over the transportation polytope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class BalancingError(RuntimeError):
    """Balancing failed: infeasible support or iteration budget exhausted."""


class CalibrationError(RuntimeError):
    """Deterrence calibration failed (stall, bracket escape, or budget)."""


@dataclass(frozen=True)
class Zones:
    """Zone marginals plus the mapping of zones onto network nodes.

    ``l[i]`` / ``w[i]`` are normalized departure / arrival shares.  ``nodes``
    maps each zone to its source node; ``sink_nodes`` (defaults to
    ``nodes``) allows a distinct destination-side node per zone.
    """

    l: np.ndarray
    w: np.ndarray
    nodes: tuple
    sink_nodes: Optional[tuple] = None

    def __post_init__(self) -> None:
        l = np.asarray(self.l, dtype=np.float64)
        w = np.asarray(self.w, dtype=np.float64)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "w", w)
        n = len(self.nodes)
        if l.shape != (n,) or w.shape != (n,):
            raise ValueError("l, w must have one entry per zone")
        if np.any(l < 0) or np.any(w < 0):
            raise ValueError("zone marginals must be nonnegative")
        if abs(l.sum() - 1.0) > 1e-12 or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(
                f"normalized marginals must sum to 1 (got {l.sum()}, {w.sum()})"
            )
        if self.sink_nodes is not None and len(self.sink_nodes) != n:
            raise ValueError("sink_nodes must have one entry per zone")

    @property
    def n(self) -> int:
        return len(self.nodes)

    def sink(self, j: int):
        return (self.sink_nodes or self.nodes)[j]


def exp_deterrence(beta: float) -> Callable[[np.ndarray], np.ndarray]:
    """The standard negative-exponential deterrence exp(-beta * C)."""

    def f(c: np.ndarray) -> np.ndarray:
        out = np.zeros_like(c)
        finite = np.isfinite(c)
        out[finite] = np.exp(-beta * c[finite])
        return out

    return f


def gravity_balance(
    l: np.ndarray,
    w: np.ndarray,
    cost: np.ndarray,
    beta: float = 1.0,
    deterrence: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    tol: float = 1e-12,
    max_iter: int = 10_000,
):
    """Doubly constrained gravity model via alternating scaling.

    Returns ``(A, B, d)`` with ``d[i, j] = A[i] l[i] B[j] w[j] F[i, j]``,
    row sums ``l`` and column sums ``w`` within ``tol`` in 1-norm.  The
    factor pair is gauge-fixed by A[0] = 1 (only 2n-1 of the 2n factors are
    independent).  Infinite costs force zero cells through F = 0.
    """
    l = np.asarray(l, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    n_rows, n_cols = cost.shape
    F = (deterrence or exp_deterrence(beta))(cost)
    if np.any(F < 0):
        raise BalancingError("deterrence values must be nonnegative")
    if np.any((F.sum(axis=1) == 0) & (l > 0)):
        bad = int(np.argmax((F.sum(axis=1) == 0) & (l > 0)))
        raise BalancingError(f"zone row {bad} has positive departures but zero support")
    if np.any((F.sum(axis=0) == 0) & (w > 0)):
        bad = int(np.argmax((F.sum(axis=0) == 0) & (w > 0)))
        raise BalancingError(f"zone col {bad} has positive arrivals but zero support")

    A = np.ones(n_rows)
    B = np.ones(n_cols)
    resid = math.inf
    for _ in range(max_iter):
        denom_a = F @ (B * w)
        A = np.where(denom_a > 0, 1.0 / np.where(denom_a > 0, denom_a, 1.0), 1.0)
        denom_b = F.T @ (A * l)
        B = np.where(denom_b > 0, 1.0 / np.where(denom_b > 0, denom_b, 1.0), 1.0)
        d = (A * l)[:, None] * F * (B * w)[None, :]
        resid = np.abs(d.sum(axis=1) - l).sum() + np.abs(d.sum(axis=0) - w).sum()
        if resid <= tol:
            scale = A[0] if A[0] > 0 else 1.0
            return A / scale, B * scale, d
    raise BalancingError(
        f"balancing did not reach tol={tol} within {max_iter} iterations "
        f"(last residual {resid:.3e})"
    )


def entropy_objective(d: np.ndarray, cost: np.ndarray, beta: float) -> float:
    """Entropy minus beta * linear cost, with the 0*ln(0) = 0 convention."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("correspondence entries must be nonnegative")
    pos = d > 0
    ent = -float(np.sum(d[pos] * np.log(d[pos])))
    return ent - beta * float(np.sum(d[pos] * np.asarray(cost)[pos]))


def mean_cost(d: np.ndarray, cost: np.ndarray) -> float:
    """Demand-weighted total cost (mean cost per trip for normalized d)."""
    d = np.asarray(d, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    pos = d > 0
    return float(np.sum(d[pos] * cost[pos]))


def ko_check(
    r_observed: np.ndarray, d_model: np.ndarray, cost: np.ndarray, tol: float
) -> bool:
    """Mean-cost matching criterion between observed and modeled matrices.

    True iff the demand-weighted costs agree within ``tol`` (closed
    comparison).  This is the maximum-likelihood stationarity condition for
    the deterrence parameter, so it doubles as the feedback-loop stop rule.
    """
    return abs(mean_cost(r_observed, cost) - mean_cost(d_model, cost)) <= tol


@dataclass
class CalibrationTrace:
    betas: list[float] = field(default_factory=list)
    costs: list[float] = field(default_factory=list)


def hyman_calibrate(
    model: Callable[[float], float],
    c_star: float,
    tol: float = 1e-6,
    max_iter: int = 50,
    beta_bracket: tuple[float, float] = (1e-12, 1e12),
    trace: Optional[CalibrationTrace] = None,
) -> float:
    """Calibrate the deterrence parameter to a target mean cost.

    ``model`` maps beta to the modeled mean cost (assumed monotone
    decreasing in beta).  Starts at beta = 1/c_star, takes one proportional
    step, then iterates the secant update until |C(beta) - c_star| <= tol.
    """
    if c_star <= 0:
        raise ValueError(f"target mean cost must be > 0, got {c_star}")

    def record(b: float, c: float) -> None:
        if trace is not None:
            trace.betas.append(b)
            trace.costs.append(c)

    def guard(b: float) -> float:
        if not (beta_bracket[0] <= b <= beta_bracket[1]):
            raise CalibrationError(
                f"beta iterate {b} escaped bracket {beta_bracket}"
            )
        return b

    beta_prev = guard(1.0 / c_star)
    c_prev = model(beta_prev)
    record(beta_prev, c_prev)
    if abs(c_prev - c_star) <= tol:
        return beta_prev

    beta_cur = guard(beta_prev * c_prev / c_star)
    c_cur = model(beta_cur)
    record(beta_cur, c_cur)
    for _ in range(max_iter):
        if abs(c_cur - c_star) <= tol:
            return beta_cur
        if c_cur == c_prev:
            raise CalibrationError(
                f"secant stalled: C({beta_prev}) == C({beta_cur}) == {c_cur}"
            )
        beta_next = guard(
            ((c_star - c_prev) * beta_cur + (c_cur - c_star) * beta_prev)
            / (c_cur - c_prev)
        )
        beta_prev, c_prev = beta_cur, c_cur
        beta_cur = beta_next
        c_cur = model(beta_cur)
        record(beta_cur, c_cur)
    raise CalibrationError(
        f"calibration did not converge in {max_iter} iterations "
        f"(last C={c_cur}, target {c_star})"
    )
