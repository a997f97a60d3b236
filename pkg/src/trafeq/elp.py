"""Entropy minimization over the simplex under affine constraints, and the
agent-exchange Markov chain whose stationary law concentrates on that
optimizer.

The solver works on the dual: for f(x) = sum x ln x + <c, x> over the unit
simplex with Ax = b, the dual objective is phi(lambda) = <b, lambda> +
ln sum exp(-c - A^T lambda), smooth and convex, with x(lambda) the softmax of
the exponent.  An l2 regularization delta/2 ||lambda||^2 makes it strongly
convex for the accelerated gradient loop; delta is halved on restarts until
the primal certificates

    ||A x - b||_2 <= eps_feas      and      <lambda, b - A x> <= eps_f

hold (the second bounds f(x) - f_min because f(x(lambda)) + phi(lambda) =
<lambda, b - A x(lambda)> exactly).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels


class ELPInfeasibleError(RuntimeError):
    """Residual floor above tolerance: constraint set looks empty."""


@dataclass(frozen=True)
class ELPProblem:
    """min sum_i x_i ln x_i + <cost, x>  over  simplex(m) intersect {Ax = b}.

    ``cost`` defaults to zero, recovering the plain maximum-entropy problem.
    """

    a_mat: np.ndarray
    b: np.ndarray
    cost: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.asarray(self.a_mat, dtype=np.float64))
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"A has {a.shape[0]} rows but b has {b.shape[0]}")
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "b", b)
        if self.cost is not None:
            c = np.asarray(self.cost, dtype=np.float64).reshape(-1)
            if c.shape[0] != a.shape[1]:
                raise ValueError("cost length must match variable count")
            object.__setattr__(self, "cost", c)

    @property
    def m(self) -> int:
        return self.a_mat.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.a_mat.shape[0]


def _softmax(z: np.ndarray) -> np.ndarray:
    zmax = z.max()
    e = np.exp(z - zmax)
    return e / e.sum()


def elp_dual_objective(problem: ELPProblem, lam: np.ndarray):
    """Dual value, gradient and primal recovery at ``lam``.

    Returns ``(value, gradient, x)`` with value = <lam, b> + lse(-c - A^T lam),
    gradient = b - A x, and x the softmax primal point (exactly on the
    simplex).  Minimizing this value over lam solves the dual.
    """
    lam = np.asarray(lam, dtype=np.float64).reshape(-1)
    a = problem.a_mat
    z = -(a.T @ lam)
    if problem.cost is not None:
        z = z - problem.cost
    zmax = z.max() if z.size else 0.0
    lse = zmax + math.log(np.exp(z - zmax).sum())
    x = np.exp(z - zmax)
    x /= x.sum()
    value = float(problem.b @ lam + lse)
    grad = problem.b - a @ x
    return value, grad, x


@dataclass
class ELPReport:
    iterations: int = 0
    restarts: int = 0
    feas_residual: float = math.nan
    value_gap_bound: float = math.nan
    lam_norm: float = math.nan
    history: list = field(default_factory=list)


def elp_solve(
    problem: ELPProblem,
    eps_f: float = 1e-8,
    eps_feas: float = 1e-10,
    max_iter: int = 200_000,
    perturb_b: float = 0.0,
):
    """Solve the entropy problem to certified accuracy.

    Returns ``(x, lam, report)`` with f(x) - f_min <= eps_f and
    ||Ax - b||_2 <= eps_feas.  ``perturb_b`` optionally shifts b toward the
    constraint image of the uniform point by that amount, which bounds the
    dual solution when the original problem sits on the boundary.  Raises
    :class:`ELPInfeasibleError` when the residual stalls above tolerance
    with a vanishing regularized gradient.
    """
    a = problem.a_mat
    b = problem.b.copy()
    m = problem.m
    if problem.n_constraints == 0 or m == 0:
        x = np.full(m, 1.0 / max(m, 1))
        return x, np.zeros(0), ELPReport(feas_residual=0.0, value_gap_bound=0.0)
    if perturb_b > 0.0:
        x0 = np.full(m, 1.0 / m)
        target = a @ x0
        gap = target - b
        nrm = np.linalg.norm(gap)
        if nrm > 0:
            b = b + gap * min(1.0, perturb_b / nrm)
        problem = ELPProblem(a, b, problem.cost)

    col_norm2 = float((a * a).sum(axis=0).max())
    report = ELPReport()
    lam = np.zeros(problem.n_constraints)
    delta = 1.0
    best = None
    prev_resid = math.inf
    while report.iterations < max_iter:
        L = col_norm2 + delta
        q = delta / L
        momentum = (1.0 - math.sqrt(q)) / (1.0 + math.sqrt(q))
        y = lam.copy()
        lam_prev = lam.copy()
        inner_target = max(eps_feas * 0.25, delta * (1.0 + np.linalg.norm(lam)) * 1e-3)
        for _ in range(max_iter - report.iterations):
            value, grad, x = elp_dual_objective(problem, y)
            grad_reg = grad + delta * y
            lam_new = y - grad_reg / L
            y = lam_new + momentum * (lam_new - lam)
            lam = lam_new
            report.iterations += 1
            gn = float(np.linalg.norm(grad_reg))
            if gn <= inner_target or report.iterations >= max_iter:
                break
        value, grad, x = elp_dual_objective(problem, lam)
        resid = float(np.linalg.norm(grad))
        fgap = float(abs(lam @ grad))
        report.history.append((delta, resid, fgap))
        if best is None or resid < best[0]:
            best = (resid, x.copy(), lam.copy(), fgap)
        if resid <= eps_feas and fgap <= eps_f:
            report.feas_residual = resid
            report.value_gap_bound = fgap
            report.lam_norm = float(np.linalg.norm(lam))
            return x, lam, report
        # residual stalling across restarts while delta keeps shrinking means
        # the dual is running off to infinity: Ax = b is unreachable.
        if report.restarts >= 10 and resid > eps_feas and resid >= 0.99 * prev_resid:
            raise ELPInfeasibleError(
                f"feasibility residual stalled at {resid:.3e} > {eps_feas:.1e} "
                f"after {report.restarts} restarts; constraints likely infeasible"
            )
        prev_resid = resid
        delta *= 0.5
        report.restarts += 1
    raise ELPInfeasibleError(
        f"iteration budget {max_iter} exhausted (residual {best[0]:.3e}); "
        "problem may be infeasible or tolerances too tight"
    )


def transportation_problem(
    l: np.ndarray, w: np.ndarray, cost_matrix: Optional[np.ndarray] = None,
    beta: float = 1.0,
) -> ELPProblem:
    """Encode the doubly constrained distribution problem as an ELPProblem.

    Variables are the row-major cells of the n x n matrix; constraints fix
    row sums to ``l`` and column sums to ``w``; the linear cost is
    beta * cost_matrix.  One column constraint is dropped (it is implied),
    which keeps the constraint matrix full rank.
    """
    l = np.asarray(l, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n_rows, n_cols = l.shape[0], w.shape[0]
    m = n_rows * n_cols
    rows = []
    rhs = []
    for i in range(n_rows):
        row = np.zeros(m)
        row[i * n_cols : (i + 1) * n_cols] = 1.0
        rows.append(row)
        rhs.append(l[i])
    for j in range(n_cols - 1):
        col = np.zeros(m)
        col[j::n_cols] = 1.0
        rows.append(col)
        rhs.append(w[j])
    cost = None
    if cost_matrix is not None:
        cost = beta * np.asarray(cost_matrix, dtype=np.float64).reshape(-1)
    return ELPProblem(np.array(rows), np.array(rhs), cost)


# ---------------------------------------------------------------------------
# Exchange-chain simulator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExchangeChainConfig:
    """Pairwise-exchange chain over an integer correspondence matrix.

    ``n`` zones, ``n_agents`` agents total; a pair living in cells (k, m) and
    (p, q) swaps home zones with intensity
    (rate / n_agents) * exp(beta/2 * [(T_km + T_pq) - (T_pm + T_kq)]),
    which conserves both row and column sums of the matrix.  ``horizon``
    defaults to ceil(10 * N ln N) events, a practical stand-in for the
    (non-constructive) mixing-time constant.
    """

    n: int
    n_agents: int
    cost_matrix: np.ndarray
    beta: float = 1.0
    rate: float = 1.0
    horizon: Optional[int] = None
    seed: int = 0
    initial: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        t = np.asarray(self.cost_matrix, dtype=np.float64)
        if t.shape != (self.n, self.n):
            raise ValueError(f"cost matrix must be {self.n}x{self.n}")
        object.__setattr__(self, "cost_matrix", t)
        if self.n_agents < self.n:
            raise ValueError("need at least one agent per zone")
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.initial is not None:
            d0 = np.asarray(self.initial, dtype=np.int64)
            if d0.shape != (self.n, self.n) or np.any(d0 < 0):
                raise ValueError("initial state must be a nonnegative n x n matrix")
            if d0.sum() != self.n_agents:
                raise ValueError(
                    f"initial state holds {d0.sum()} agents, expected {self.n_agents}"
                )
            object.__setattr__(self, "initial", d0)

    def default_horizon(self) -> int:
        if self.horizon is not None:
            return int(self.horizon)
        n_val = max(self.n_agents, 2)
        return int(math.ceil(10.0 * n_val * math.log(n_val)))

    def initial_state(self) -> np.ndarray:
        if self.initial is not None:
            return self.initial.copy()
        base, extra = divmod(self.n_agents, self.n * self.n)
        d0 = np.full((self.n, self.n), base, dtype=np.int64)
        flat = d0.reshape(-1)
        flat[:extra] += 1
        return d0


def _move_table(config: ExchangeChainConfig):
    """All unordered cell pairs {(k,m),(p,q)} with k != p, m != q.

    A swap turns one agent each of (k,m) and (p,q) into (p,m) and (k,q);
    same-row or same-column pairs leave the matrix unchanged and are
    omitted.  Returns index arrays and the per-pair intensity constants.
    """
    n = config.n
    t = config.cost_matrix
    mk, mm, mp, mq, lam = [], [], [], [], []
    prefactor = config.rate / config.n_agents
    half_beta = 0.5 * config.beta
    cells = [(k, m) for k in range(n) for m in range(n)]
    for idx_a in range(len(cells)):
        k, m = cells[idx_a]
        for idx_b in range(idx_a + 1, len(cells)):
            p, q = cells[idx_b]
            if k == p or m == q:
                continue
            mk.append(k)
            mm.append(m)
            mp.append(p)
            mq.append(q)
            lam.append(
                prefactor
                * math.exp(half_beta * ((t[k, m] + t[p, q]) - (t[p, m] + t[k, q])))
            )
    return (
        np.array(mk, dtype=np.int32),
        np.array(mm, dtype=np.int32),
        np.array(mp, dtype=np.int32),
        np.array(mq, dtype=np.int32),
        np.array(lam, dtype=np.float64),
    )


@dataclass
class ChainResult:
    snapshots: np.ndarray  # (S, n, n) integer states, every `stride` events
    mean: np.ndarray  # holding-time weighted mean after burn-in
    events: int
    initial: np.ndarray
    final: np.ndarray


def exchange_chain_simulate(
    config: ExchangeChainConfig,
    burn_fraction: float = 0.5,
    max_snapshots: int = 256,
) -> ChainResult:
    """Run the exchange chain and return trajectory snapshots and the
    post-burn-in time-weighted mean state.

    Both row and column sums are conserved by every move, so the trajectory
    stays on the polytope fixed by the initial state.  Seeded and
    reproducible: all randomness comes from one PCG64 stream.
    """
    d0 = config.initial_state()
    d = d0.reshape(-1).copy()
    mk, mm, mp, mq, lam = _move_table(config)
    horizon = config.default_horizon()
    burn = int(burn_fraction * horizon)
    stride = max(1, horizon // max_snapshots)
    n_snaps = horizon // stride
    snaps = np.zeros((n_snaps, config.n * config.n), dtype=np.int64)
    acc = np.zeros(config.n * config.n, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    if len(lam) == 0:
        return ChainResult(
            snapshots=d0[None, :, :].copy(),
            mean=d0.astype(np.float64),
            events=0,
            initial=d0,
            final=d0.copy(),
        )
    uniforms = rng.random(2 * horizon)
    events, wsum = _kernels.exchange_chain_run(
        d, mk, mm, mp, mq, lam, config.n, horizon, burn, uniforms, acc, snaps, stride
    )
    if wsum > 0:
        mean = (acc / wsum).reshape(config.n, config.n)
    else:
        mean = d.astype(np.float64).reshape(config.n, config.n)
    used = min(n_snaps, max(0, events // stride))
    return ChainResult(
        snapshots=snaps[:used].reshape(used, config.n, config.n).copy(),
        mean=mean,
        events=int(events),
        initial=d0,
        final=d.reshape(config.n, config.n).copy(),
    )


def detailed_balance_check(
    config: ExchangeChainConfig, state: np.ndarray, move: tuple[int, int, int, int]
) -> float:
    """Relative residual of the reversibility identity at one move.

    ``move`` = (k, m, p, q) names the swap producing (p,m), (k,q) out of
    (k,m), (p,q).  Both sides couple the unnormalized product-Poisson weight
    pi(d) = prod exp(-beta*T_ij*d_ij)/d_ij! with the forward and reverse
    intensities; the state must support the reverse move (d_pm, d_kq >= 1).
    """
    k, m, p, q = move
    if k == p or m == q:
        raise ValueError("move must change the matrix: need k != p and m != q")
    d = np.asarray(state, dtype=np.int64)
    if d[p, m] < 1 or d[k, q] < 1:
        raise ValueError("state does not support the reverse move")
    t = config.cost_matrix
    beta = config.beta
    prefactor = config.rate / config.n_agents

    def log_pi(mat: np.ndarray) -> float:
        total = 0.0
        for i in range(config.n):
            for j in range(config.n):
                total += -beta * t[i, j] * mat[i, j] - math.lgamma(mat[i, j] + 1.0)
        return total

    d_plus = d.copy()
    d_plus[k, m] += 1
    d_plus[p, q] += 1
    d_plus[p, m] -= 1
    d_plus[k, q] -= 1

    log_rate_fwd = math.log(prefactor) + 0.5 * beta * (
        (t[k, m] + t[p, q]) - (t[p, m] + t[k, q])
    )
    log_rate_rev = math.log(prefactor) + 0.5 * beta * (
        (t[p, m] + t[k, q]) - (t[k, m] + t[p, q])
    )
    log_lhs = (
        math.log(d[k, m] + 1.0)
        + math.log(d[p, q] + 1.0)
        + log_pi(d_plus)
        + log_rate_fwd
    )
    log_rhs = math.log(float(d[p, m])) + math.log(float(d[k, q])) + log_pi(d) + log_rate_rev
    return abs(math.expm1(log_lhs - log_rhs))
