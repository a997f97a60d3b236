"""Capacitated (hard-cap) equilibrium assignment via its concave dual.

The model gives every edge a free-flow time ``t_free`` and a hard capacity
``cap``; in equilibrium flows respect capacities, times exceed free-flow
only on saturated edges (queues), and demand rides shortest paths under the
realized times.  Those three conditions are exactly the optimality system of

    maximize_{t >= t_free}  sum_w d_w T_w(t) - <cap, t - t_free>

where T_w is the shortest-path cost of OD pair w.  The solver ascends this
concave function with staged dual averaging; equilibrium flows are recovered
as the running average of the all-or-nothing loadings (the dual multipliers
of the box constraint, up to sign), and every returned solution carries
explicitly checked feasibility / complementarity / Wardrop residuals.

Mode split: with ``mode_split=True`` each OD pair is loaded wholly on the
cheaper of its modal shortest paths (car wins ties), which is the dual of
the two-network equilibrium.  The mixed variant keeps hard caps on car
edges but gives transit edges a smooth hyperbolic congestion law; its dual
replaces the linear capacity term on transit edges by the conjugate of that
family, making the transit block differentiable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from ._engine import EngineOptions, EngineResult, InfeasibleProblemError, maximize
from .costs import CostFamily, inv_flow, sigma_star
from .network import (
    Mode,
    ModeScope,
    Network,
    ODPair,
    UnreachableODError,
    aon_assign,
)

__all__ = [
    "SDProblem",
    "SDSolution",
    "SolveOptions",
    "InfeasibleProblemError",
    "NonConvergenceWarning",
    "default_t_max",
    "sd_objective",
    "sd_supergradient",
    "sd_solve",
    "sd_solve_stochastic",
    "sd_modesplit_solve",
    "sd_mixed_solve",
    "lp_oracle",
    "compute_tolls",
    "PathLimitError",
]


class NonConvergenceWarning(UserWarning):
    pass


class PathLimitError(RuntimeError):
    """Path enumeration exceeded the configured limit."""


def default_t_max(
    net: Network, k_box: float = 100.0, jam_density: float = 150.0
) -> np.ndarray:
    """Upper box bound for edge times.

    Where geometry is known the bound is physical: free-flow time plus the
    time to drain a bumper-to-bumper queue filling the whole edge
    (length * lanes * jam_density vehicles served at rate cap).  Otherwise
    t_free * k_box.
    """
    out = net.t_free * k_box
    for e in net.edges:
        if e.length is not None and e.lanes is not None:
            out[e.id] = e.t_free + e.length * e.lanes * jam_density / e.cap
    return out


@dataclass(frozen=True)
class SDProblem:
    network: Network
    demands: tuple
    t_max: Optional[np.ndarray] = None
    mode_split: bool = False
    transit_mu: Optional[float] = None  # set -> mixed model (smooth transit)

    def __post_init__(self) -> None:
        dems = []
        for od, dw in self.demands:
            if not isinstance(od, ODPair):
                raise TypeError(f"expected ODPair, got {od!r}")
            if dw < 0:
                raise ValueError(f"negative demand {dw} for {od}")
            dems.append((od, float(dw)))
        object.__setattr__(self, "demands", tuple(dems))
        if self.t_max is not None:
            tm = np.asarray(self.t_max, dtype=np.float64)
            if tm.shape != (self.network.n_edges,):
                raise ValueError("t_max length must equal edge count")
            if np.any(tm < self.network.t_free):
                raise ValueError("t_max must dominate t_free componentwise")
            object.__setattr__(self, "t_max", tm)
        if self.transit_mu is not None and self.transit_mu <= 0:
            raise ValueError("transit_mu must be positive")

    def resolved_t_max(self) -> np.ndarray:
        return self.t_max if self.t_max is not None else default_t_max(self.network)


@dataclass
class SolveOptions:
    max_iter: int = 600_000
    feas_tol: Optional[float] = None
    comp_tol: Optional[float] = None
    gap_tol: Optional[float] = None
    stage_iters: int = 100
    stage_growth: float = 1.35
    radius0: Optional[float] = None
    check_every: int = 25
    infeas_patience: int = 40
    seed: Optional[int] = None
    warm_start_t: Optional[np.ndarray] = None

    def resolve_tolerances(self, net: Network, total_demand: float):
        flow_scale = max(1.0, float(net.cap.max()), total_demand)
        time_scale = max(1.0, float(net.t_free.mean()))
        feas = self.feas_tol if self.feas_tol is not None else 1e-5 * flow_scale
        comp = (
            self.comp_tol
            if self.comp_tol is not None
            else 1e-5 * flow_scale * time_scale
        )
        gap = self.gap_tol if self.gap_tol is not None else 1e-5 * flow_scale * time_scale
        return feas, comp, gap


@dataclass
class SDSolution:
    t_star: np.ndarray
    f_star: np.ndarray
    s_star: np.ndarray
    objective: float
    residuals: dict
    converged: bool
    iterations: int
    stages: int
    t_free: np.ndarray
    cap: np.ndarray
    mode_split: bool = False
    transit_mu: Optional[float] = None


class _Router:
    """Grouped shortest-path routing of a fixed demand list.

    One label-setting pass per (origin, scope) pair per evaluation; with
    ``mode_split`` every OD compares its admissible single-mode trees and
    rides the cheaper one (car wins ties).  Reduction order is fixed by
    (origin index, scope value, destination order), so loaded flows are
    deterministic.
    """

    _SCOPE_ORDER = {
        ModeScope.CAR_ONLY: 0,
        ModeScope.TRANSIT_ONLY: 1,
        ModeScope.EITHER: 2,
    }

    def __init__(self, net: Network, demands, mode_split: bool):
        self.net = net
        self.mode_split = mode_split
        self.total_demand = 0.0
        static: dict[tuple[int, ModeScope], list] = {}
        choice: dict[int, list] = {}
        names: dict[int, object] = {}
        for od, dw in demands:
            if dw == 0.0:
                continue
            self.total_demand += dw
            o = net.node_index(od.origin)
            d = net.node_index(od.destination)
            names[d] = od.destination
            names[o] = od.origin
            if mode_split and od.scope is ModeScope.EITHER:
                choice.setdefault(o, []).append((d, dw))
            else:
                static.setdefault((o, od.scope), []).append((d, dw))
        # per-origin plan: which trees to build, static loads, choice loads
        origins: dict[int, dict] = {}
        for (o, scope), entries in static.items():
            plan = origins.setdefault(o, {"static": {}, "choice": None})
            plan["static"][scope] = (
                np.array([d for d, _ in entries], dtype=np.int32),
                np.array([w for _, w in entries], dtype=np.float64),
            )
        for o, entries in choice.items():
            plan = origins.setdefault(o, {"static": {}, "choice": None})
            plan["choice"] = (
                np.array([d for d, _ in entries], dtype=np.int32),
                np.array([w for _, w in entries], dtype=np.float64),
            )
        self._names = names
        self.plans = []
        for o in sorted(origins):
            plan = origins[o]
            scopes = set(plan["static"])
            if plan["choice"] is not None:
                scopes.add(ModeScope.CAR_ONLY)
                scopes.add(ModeScope.TRANSIT_ONLY)
            self.plans.append(
                (o, sorted(scopes, key=self._SCOPE_ORDER.get), plan["static"], plan["choice"])
            )
        self.groups = self.plans  # legacy alias

    def route(self, t: np.ndarray):
        """Return (sum_w d_w * C_w(t), loaded flow vector)."""
        net = self.net
        flow = np.zeros(net.n_edges, dtype=np.float64)
        total_cost = 0.0
        for origin_idx, scopes, static, choice in self.plans:
            trees = {}
            for scope in scopes:
                sub = net.scope(scope)
                labels, pred = _kernels.dijkstra(
                    sub.indptr,
                    sub.nbr_heads,
                    sub.nbr_epos,
                    t[sub.eids],
                    origin_idx,
                    net.n_nodes,
                )
                trees[scope] = (sub, labels, pred)
            loads = {scope: [] for scope in scopes}
            for scope, (dests, dems) in sorted(
                static.items(), key=lambda kv: self._SCOPE_ORDER[kv[0]]
            ):
                costs = trees[scope][1][dests]
                if not np.all(np.isfinite(costs)):
                    bad = dests[int(np.argmax(~np.isfinite(costs)))]
                    raise UnreachableODError(
                        f"no {scope.value} path from "
                        f"{self._names[origin_idx]} to {self._names[bad]}"
                    )
                total_cost += float(costs @ dems)
                loads[scope].append((dests, dems))
            if choice is not None:
                dests, dems = choice
                car_costs = trees[ModeScope.CAR_ONLY][1][dests]
                tr_costs = trees[ModeScope.TRANSIT_ONLY][1][dests]
                best = np.minimum(car_costs, tr_costs)
                if not np.all(np.isfinite(best)):
                    bad = dests[int(np.argmax(~np.isfinite(best)))]
                    raise UnreachableODError(
                        f"no modal path from "
                        f"{self._names[origin_idx]} to {self._names[bad]}"
                    )
                total_cost += float(best @ dems)
                on_car = car_costs <= tr_costs  # tie goes to car
                if on_car.any():
                    loads[ModeScope.CAR_ONLY].append((dests[on_car], dems[on_car]))
                if (~on_car).any():
                    loads[ModeScope.TRANSIT_ONLY].append(
                        (dests[~on_car], dems[~on_car])
                    )
            for scope in scopes:
                if not loads[scope]:
                    continue
                sub, labels, pred = trees[scope]
                if len(loads[scope]) == 1:
                    dests, dems = loads[scope][0]
                else:
                    dests = np.concatenate([d for d, _ in loads[scope]])
                    dems = np.concatenate([w for _, w in loads[scope]])
                scoped = np.zeros(sub.n_edges, dtype=np.float64)
                _kernels.load_tree(pred, sub.etails, dests, dems, scoped)
                flow[sub.eids] += scoped
        return total_cost, flow

    def min_costs(self, t: np.ndarray) -> float:
        return self.route(t)[0]


def sd_objective(net: Network, demands, t: np.ndarray) -> float:
    """Dual objective sum_w d_w T_w(t) - <cap, t - t_free> at time vector t."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < net.t_free - 1e-12):
        raise ValueError("t must dominate t_free componentwise")
    router = _Router(net, demands, mode_split=False)
    cost, _ = router.route(t)
    return cost - float(net.cap @ (t - net.t_free))


def sd_supergradient(net: Network, demands, t: np.ndarray) -> np.ndarray:
    """A supergradient of :func:`sd_objective`: AON flows at t minus caps."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < net.t_free - 1e-12):
        raise ValueError("t must dominate t_free componentwise")
    return aon_assign(net, t, demands) - net.cap


def _transit_edge_ids(net: Network) -> np.ndarray:
    return np.array(
        [e.id for e in net.edges if e.mode is Mode.TRANSIT], dtype=np.int64
    )


def _solve_core(
    problem: SDProblem,
    opts: SolveOptions,
    oracle_flows,
) -> SDSolution:
    """Shared engine wiring for the deterministic and sampled oracles.

    ``oracle_flows(router, t)`` returns the (possibly sampled) flow payload
    and cost estimate of one iteration.
    """
    net = problem.network
    router = _Router(net, problem.demands, problem.mode_split)
    if not router.groups:
        t0 = net.t_free.copy()
        zeros = np.zeros(net.n_edges)
        return SDSolution(
            t_star=t0,
            f_star=zeros,
            s_star=net.cap.copy(),
            objective=0.0,
            residuals={"feas": 0.0, "comp": 0.0, "gap": 0.0, "value": 0.0},
            converged=True,
            iterations=0,
            stages=0,
            t_free=net.t_free.copy(),
            cap=net.cap.copy(),
            mode_split=problem.mode_split,
            transit_mu=problem.transit_mu,
        )
    lo = net.t_free.copy()
    hi = problem.resolved_t_max()
    feas_tol, comp_tol, gap_tol = opts.resolve_tolerances(net, router.total_demand)

    mu = problem.transit_mu
    transit_ids = _transit_edge_ids(net) if mu is not None else np.zeros(0, dtype=np.int64)
    hard_mask = np.ones(net.n_edges, dtype=bool)
    hard_mask[transit_ids] = False
    fam = CostFamily.hyperbolic(mu) if mu is not None else None

    def linear_coef(t: np.ndarray) -> np.ndarray:
        coef = net.cap.copy()
        if mu is not None:
            for e in transit_ids:
                coef[e] = inv_flow(fam, net.t_free[e], net.cap[e], t[e])
        return coef

    def barrier_value(t: np.ndarray) -> float:
        # replaces <cap, t - t_free> on transit edges in the mixed model
        if mu is None:
            return float(net.cap @ (t - net.t_free))
        total = float(net.cap[hard_mask] @ (t[hard_mask] - net.t_free[hard_mask]))
        for e in transit_ids:
            total += sigma_star(fam, net.t_free[e], net.cap[e], t[e])
        return total

    def oracle(t: np.ndarray):
        cost, flows = oracle_flows(router, t)
        g = flows - linear_coef(t)
        value = cost - barrier_value(t)
        return value, g, flows

    def check(t_avg: np.ndarray, f_avg: np.ndarray):
        cost, _ = router.route(t_avg)
        value = cost - barrier_value(t_avg)
        over = f_avg - net.cap
        feas = float(max(0.0, over[hard_mask].max())) if hard_mask.any() else 0.0
        dt = t_avg - net.t_free
        comp_abs = float(np.sum(dt[hard_mask] * np.abs(net.cap - f_avg)[hard_mask]))
        comp = float(np.sum(dt[hard_mask] * (net.cap - f_avg)[hard_mask]))
        gap = float(f_avg @ t_avg) - cost
        stat = 0.0
        if mu is not None and len(transit_ids):
            stat = float(
                np.max(np.abs(f_avg[transit_ids] - linear_coef(t_avg)[transit_ids]))
            )
        residuals = {
            "feas": feas,
            "comp": comp_abs,
            "comp_signed": comp,
            "gap": max(gap, 0.0),
            "transit_stat": stat,
            "value": value,
        }
        converged = (
            feas <= feas_tol
            and comp_abs <= comp_tol
            and gap <= gap_tol
            and stat <= feas_tol * 10.0
        )
        band = np.maximum(0.05 * (hi - lo), 1e-9 * (1.0 + hi))
        pinned = t_avg >= hi - band
        infeas_sig = bool(np.any(hard_mask & pinned & (over > 10.0 * feas_tol)))
        return converged, residuals, infeas_sig

    eng_opts = EngineOptions(
        max_iter=opts.max_iter,
        stage_iters=opts.stage_iters,
        stage_growth=opts.stage_growth,
        radius0=opts.radius0
        if opts.radius0 is not None
        else 0.25 * float(np.mean(net.t_free)),
        check_every=opts.check_every,
        infeas_patience=opts.infeas_patience,
    )
    t0 = (
        np.clip(np.asarray(opts.warm_start_t, dtype=np.float64), lo, hi)
        if opts.warm_start_t is not None
        else lo.copy()
    )
    result = maximize(oracle, check, lo, hi, t0, eng_opts)
    if result.converged:
        t_min = _polish_min_times(result.t, result.flows, lo, check)
        ok, residuals, _ = check(t_min, result.flows)
        if ok:
            result.t = t_min
            result.residuals = residuals
            result.value = residuals["value"]
    f_star = result.flows.copy()
    if mu is not None:
        for e in transit_ids:
            f_star[e] = inv_flow(fam, net.t_free[e], net.cap[e], result.t[e])
    s_star = np.where(hard_mask, np.maximum(net.cap - f_star, 0.0), 0.0)
    return SDSolution(
        t_star=result.t,
        f_star=f_star,
        s_star=s_star,
        objective=result.value,
        residuals=result.residuals,
        converged=result.converged,
        iterations=result.iterations,
        stages=result.stages,
        t_free=net.t_free.copy(),
        cap=net.cap.copy(),
        mode_split=problem.mode_split,
        transit_mu=problem.transit_mu,
    )


def _polish_min_times(t_hat, f_hat, lo, check) -> np.ndarray:
    """Select the minimal equilibrium time vector on the certified face.

    When every edge of a cut saturates exactly, the queue delays are only
    determined up to a common inflation; the reference solution is the one
    where queues are no larger than needed.  Starting from the converged
    iterate this descends edge times (a joint step over the inflated set,
    then single coordinates), keeping any candidate only if the full
    residual check still passes with the recovered flows.
    """
    t = np.asarray(t_hat, dtype=np.float64).copy()
    slack = t - lo
    if not np.any(slack > 0):
        return t
    for _ in range(4):
        moved = False
        raised = t > lo + 1e-15
        if raised.any():
            step = float(np.max(t[raised] - lo[raised]))
            direction = raised.astype(np.float64)
            while step > 1e-12:
                cand = np.maximum(t - step * direction, lo)
                ok, _, _ = check(cand, f_hat)
                if ok and np.any(cand < t):
                    t = cand
                    moved = True
                else:
                    step *= 0.5
        for e in np.flatnonzero(t > lo + 1e-15):
            step = t[e] - lo[e]
            while step > 1e-12:
                cand = t.copy()
                cand[e] = max(cand[e] - step, lo[e])
                ok, _, _ = check(cand, f_hat)
                if ok and cand[e] < t[e]:
                    t = cand
                    moved = True
                else:
                    step *= 0.5
        if not moved:
            break
    return t


def _deterministic_flows(router: _Router, t: np.ndarray):
    cost, flows = router.route(t)
    return cost, flows


def sd_solve(problem: SDProblem, opts: Optional[SolveOptions] = None) -> SDSolution:
    """Equilibrium times and flows for the capacitated model.

    Returns an :class:`SDSolution` whose residuals certify t >= t_free,
    f <= cap (+feas tol), per-edge complementarity and the aggregate
    shortest-path (Wardrop) gap.  Raises
    :class:`InfeasibleProblemError` when demand exceeds every routing of the
    capacities; non-convergence within the budget is reported via
    ``converged=False``, never silently.
    """
    return _solve_core(problem, opts or SolveOptions(), _deterministic_flows)


def sd_modesplit_solve(
    problem: SDProblem, opts: Optional[SolveOptions] = None
) -> SDSolution:
    """Two-mode equilibrium: each OD rides the cheaper modal shortest path."""
    if not problem.mode_split:
        problem = replace(problem, mode_split=True)
    return _solve_core(problem, opts or SolveOptions(), _deterministic_flows)


def sd_mixed_solve(
    problem: SDProblem, opts: Optional[SolveOptions] = None
) -> SDSolution:
    """Mode-split equilibrium with smooth (hyperbolic) transit congestion.

    Car edges keep hard capacities; transit edge times follow the barrier
    family with parameter ``problem.transit_mu`` and their flows are
    recovered through its stationarity map at the returned times.
    """
    if problem.transit_mu is None:
        raise ValueError("sd_mixed_solve needs problem.transit_mu")
    if not problem.mode_split:
        problem = replace(problem, mode_split=True)
    return _solve_core(problem, opts or SolveOptions(), _deterministic_flows)


def sd_solve_stochastic(
    problem: SDProblem, opts: Optional[SolveOptions] = None
) -> SDSolution:
    """Sampled-OD variant of :func:`sd_solve`.

    Each iteration draws one OD pair (destination first, then origin within
    the destination, proportional to demand) and uses its scaled
    all-or-nothing loading as an unbiased supergradient estimate, costing a
    single shortest-path tree.  Seeded via ``opts.seed``; convergence checks
    remain exact.
    """
    opts = opts or SolveOptions()
    net = problem.network
    demands = [(od, dw) for od, dw in problem.demands if dw > 0]
    if not demands:
        return _solve_core(problem, opts, _deterministic_flows)
    rng = np.random.default_rng(opts.seed)
    sampler = ODSampler(demands, rng)
    total = sampler.total

    def sampled_flows(router: _Router, t: np.ndarray):
        od = sampler.draw()
        single = _Router(net, [(od, 1.0)], problem.mode_split)
        cost, flows = single.route(t)
        return total * cost, total * flows

    base = SolveOptions(**{**opts.__dict__})
    if opts.check_every < 50:
        base.check_every = 50
    return _solve_core(problem, base, sampled_flows)


class ODSampler:
    """Two-stage demand-proportional OD sampling (destination, then origin)."""

    def __init__(self, demands, rng: np.random.Generator):
        by_dest: dict = {}
        for od, dw in demands:
            by_dest.setdefault(od.destination, []).append((od, dw))
        self.dest_keys = sorted(by_dest, key=str)
        self.dest_weights = np.array(
            [sum(dw for _, dw in by_dest[k]) for k in self.dest_keys]
        )
        self.total = float(self.dest_weights.sum())
        self.dest_probs = self.dest_weights / self.total
        self.by_dest = {
            k: (
                [od for od, _ in by_dest[k]],
                np.array([dw for _, dw in by_dest[k]])
                / sum(dw for _, dw in by_dest[k]),
            )
            for k in self.dest_keys
        }
        self.rng = rng

    def draw(self) -> ODPair:
        j = self.rng.choice(len(self.dest_keys), p=self.dest_probs)
        ods, probs = self.by_dest[self.dest_keys[j]]
        i = self.rng.choice(len(ods), p=probs)
        return ods[i]


def _simple_paths(net: Network, od: ODPair, limit: int, counter: list) -> list:
    """DFS enumeration of simple paths (edge-id lists) within the OD scope."""
    sub = net.scope(od.scope)
    o = net.node_index(od.origin)
    d = net.node_index(od.destination)
    out: list = []
    stack_nodes = [o]
    visited = {o}
    path: list = []

    def dfs(u: int) -> None:
        if u == d:
            out.append(list(path))
            counter[0] += 1
            if counter[0] > limit:
                raise PathLimitError(
                    f"simple path count exceeded path_limit={limit}"
                )
            return
        for a in range(sub.indptr[u], sub.indptr[u + 1]):
            v = int(sub.nbr_heads[a])
            pos = int(sub.nbr_epos[a])
            if v in visited:
                continue
            visited.add(v)
            path.append(int(sub.eids[pos]))
            dfs(v)
            path.pop()
            visited.remove(v)

    dfs(o)
    return out


def lp_oracle(net: Network, demands, path_limit: int = 10_000):
    """Exact minimum free-flow travel time over capacity-feasible flows.

    Enumerates simple paths per OD pair, then solves the capacitated
    path-flow linear program  min <t_free, f>  s.t. path flows >= 0 meet
    each demand and edge flows respect capacities.  Independent of the
    iterative solvers; used to cross-check them.  Returns
    ``(edge_flows, objective)``.
    """
    from scipy.optimize import linprog

    demands = [(od, float(dw)) for od, dw in demands if dw > 0]
    counter = [0]
    all_paths: list = []
    od_slices: list = []
    for od, dw in demands:
        paths = _simple_paths(net, od, path_limit, counter)
        if not paths:
            raise UnreachableODError(
                f"no path for {od.origin}->{od.destination} (scope {od.scope.value})"
            )
        od_slices.append((len(all_paths), len(all_paths) + len(paths), dw))
        all_paths.extend(paths)
    n_paths = len(all_paths)
    theta = np.zeros((net.n_edges, n_paths))
    for p, edges in enumerate(all_paths):
        for e in edges:
            theta[e, p] += 1.0
    c = net.t_free @ theta
    a_eq = np.zeros((len(demands), n_paths))
    b_eq = np.zeros(len(demands))
    for row, (lo_idx, hi_idx, dw) in enumerate(od_slices):
        a_eq[row, lo_idx:hi_idx] = 1.0
        b_eq[row] = dw
    res = linprog(
        c,
        A_ub=theta,
        b_ub=net.cap,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
    )
    if res.status == 2:
        raise InfeasibleProblemError("capacitated flow LP is infeasible")
    if not res.success:
        raise RuntimeError(f"LP solver failed: {res.message}")
    flows = theta @ res.x
    return flows, float(res.fun)


def compute_tolls(solution: SDSolution, zero_tol: float = 0.0) -> np.ndarray:
    """Congestion tolls: queueing delay t* - t_free per edge.

    Charging these makes free-flow routing an equilibrium carrying the same
    flows.  Positive entries appear only on saturated edges (up to solver
    tolerance); ``zero_tol`` optionally snaps near-zero values.
    """
    eta = solution.t_star - solution.t_free
    eta = np.maximum(eta, 0.0)
    if zero_tol > 0.0:
        eta = np.where(eta <= zero_tol, 0.0, eta)
    return eta
