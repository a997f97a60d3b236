"""Directed multigraph with mode-tagged edges and routing primitives.

The solvers only ever need four things from the graph: deterministic
shortest-path trees under a given time vector, all-or-nothing loading of
origin-destination demands onto those trees, a smoothed (log-sum-exp over
bounded-hop walks) variant of the shortest-path cost with its gradient, and
a capacity estimate helper.  Costs and flows are plain float64 arrays indexed
by edge id; edge ids must be dense 0..E-1 so arrays and ids coincide.

Tie-breaking is part of the contract: among equal-cost shortest paths the
tree picks the predecessor edge with the smallest id, which makes every
solver built on top reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels


class NetworkError(ValueError):
    """Invalid graph construction input."""


class UnreachableODError(ValueError):
    """An OD pair with positive demand has no connecting path in scope."""


class Mode(str, Enum):
    CAR = "car"
    TRANSIT = "transit"


class ModeScope(str, Enum):
    CAR_ONLY = "car"
    TRANSIT_ONLY = "transit"
    EITHER = "either"

    def admits(self, mode: Mode) -> bool:
        if self is ModeScope.EITHER:
            return True
        return self.value == mode.value


@dataclass(frozen=True)
class Edge:
    id: int
    tail: object
    head: object
    mode: Mode = Mode.CAR
    t_free: float = 1.0
    cap: float = 1.0
    length: Optional[float] = None
    lanes: Optional[int] = None

    def validate(self) -> None:
        if self.t_free <= 0:
            raise NetworkError(f"edge {self.id}: t_free must be > 0, got {self.t_free}")
        if self.cap <= 0:
            raise NetworkError(f"edge {self.id}: cap must be > 0, got {self.cap}")
        if self.tail == self.head:
            raise NetworkError(f"edge {self.id}: self-loop {self.tail}->{self.head}")
        if self.length is not None and self.length < 0:
            raise NetworkError(f"edge {self.id}: negative length")
        if self.lanes is not None and self.lanes <= 0:
            raise NetworkError(f"edge {self.id}: lanes must be positive")


@dataclass(frozen=True)
class ODPair:
    origin: object
    destination: object
    scope: ModeScope = ModeScope.EITHER

    def __post_init__(self) -> None:
        if self.origin == self.destination:
            raise NetworkError(f"OD pair with origin == destination: {self.origin}")


class _Subgraph:
    """CSR views of the edges admitted by one mode scope.

    Kernel-facing arrays use *scoped positions* (0..len(eids)-1, ordered by
    global edge id); ``eids`` maps positions back to global edge ids.
    """

    def __init__(self, n_nodes: int, eids, etails, eheads):
        self.eids = np.asarray(eids, dtype=np.int32)
        self.etails = np.asarray(etails, dtype=np.int32)
        self.eheads = np.asarray(eheads, dtype=np.int32)
        self.n_nodes = n_nodes
        m = len(self.eids)
        order = np.argsort(self.etails, kind="stable")
        counts = np.bincount(self.etails, minlength=n_nodes)
        self.indptr = np.zeros(n_nodes + 1, dtype=np.int32)
        self.indptr[1:] = np.cumsum(counts)
        self.nbr_heads = self.eheads[order].astype(np.int32)
        self.nbr_epos = order.astype(np.int32)
        rorder = np.argsort(self.eheads, kind="stable")
        rcounts = np.bincount(self.eheads, minlength=n_nodes)
        self.rev_indptr = np.zeros(n_nodes + 1, dtype=np.int32)
        self.rev_indptr[1:] = np.cumsum(rcounts)
        self.rev_srcs = self.etails[rorder].astype(np.int32)
        self.rev_epos = rorder.astype(np.int32)
        self.n_edges = m


class Network:
    """Validated directed multigraph; construct via :func:`build_network`."""

    def __init__(self, edges: Sequence[Edge], extra_nodes: Iterable = ()):
        edges = sorted(edges, key=lambda e: e.id)
        if not edges:
            raise NetworkError("network needs at least one edge")
        ids = [e.id for e in edges]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise NetworkError(f"duplicate edge ids: {dup}")
        if ids != list(range(len(ids))):
            raise NetworkError(
                f"edge ids must be dense 0..{len(ids) - 1}, got {ids[:8]}..."
            )
        for e in edges:
            e.validate()
        self.edges: tuple[Edge, ...] = tuple(edges)
        node_set = {e.tail for e in edges} | {e.head for e in edges} | set(extra_nodes)
        self.nodes = tuple(sorted(node_set, key=lambda v: (isinstance(v, str), str(v))))
        self._node_index = {v: i for i, v in enumerate(self.nodes)}
        self.t_free = np.array([e.t_free for e in edges], dtype=np.float64)
        self.cap = np.array([e.cap for e in edges], dtype=np.float64)

        self._scopes: dict[ModeScope, _Subgraph] = {}
        for scope in ModeScope:
            sel = [e for e in edges if scope.admits(e.mode)]
            self._scopes[scope] = _Subgraph(
                len(self.nodes),
                [e.id for e in sel],
                [self._node_index[e.tail] for e in sel],
                [self._node_index[e.head] for e in sel],
            )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def node_index(self, node) -> int:
        try:
            return self._node_index[node]
        except KeyError:
            raise NetworkError(f"unknown node {node!r}") from None

    def has_node(self, node) -> bool:
        return node in self._node_index

    def scope(self, scope: ModeScope) -> _Subgraph:
        return self._scopes[scope]

    def check_costs(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if t.shape != (self.n_edges,):
            raise NetworkError(
                f"cost vector length {t.shape} != edge count {self.n_edges}"
            )
        if not np.all(np.isfinite(t)):
            raise NetworkError("cost vector has non-finite entries")
        if np.any(t < 0):
            raise NetworkError("cost vector has negative entries")
        return t


def build_network(records: Iterable, extra_nodes: Iterable = ()) -> Network:
    """Build a validated Network from Edge objects or equivalent mappings."""
    edges = []
    for rec in records:
        if isinstance(rec, Edge):
            edges.append(rec)
        elif isinstance(rec, Mapping):
            kwargs = dict(rec)
            kwargs["mode"] = Mode(kwargs.get("mode", "car"))
            edges.append(Edge(**kwargs))
        else:
            raise NetworkError(f"cannot interpret edge record {rec!r}")
    return Network(edges, extra_nodes=extra_nodes)


def shortest_paths(
    net: Network, t: np.ndarray, origin, scope: ModeScope = ModeScope.EITHER
):
    """Shortest-path labels and predecessor edges from ``origin``.

    Returns ``(labels, pred)`` indexed by node position in ``net.nodes``:
    labels are path costs (inf where unreachable), ``pred[v]`` is the global
    id of the tree edge into v (-1 at the origin / unreachable nodes).
    """
    t = net.check_costs(t)
    sub = net.scope(scope)
    o = net.node_index(origin)
    labels, pred_pos = _kernels.dijkstra(
        sub.indptr, sub.nbr_heads, sub.nbr_epos, t[sub.eids], o, net.n_nodes
    )
    pred = np.where(pred_pos >= 0, sub.eids[np.clip(pred_pos, 0, None)], -1).astype(
        np.int32
    )
    return labels, pred


def min_cost(net: Network, t: np.ndarray, od: ODPair) -> float:
    """Cost of the cheapest in-scope path for ``od`` (inf if none exists)."""
    labels, _ = shortest_paths(net, t, od.origin, od.scope)
    return float(labels[net.node_index(od.destination)])


def aon_assign(net: Network, t: np.ndarray, demands) -> np.ndarray:
    """All-or-nothing loading: each demand rides its tie-broken shortest path.

    ``demands`` is a sequence of ``(ODPair, flow)``.  Zero-flow entries are
    skipped; positive flow to an unreachable destination raises
    :class:`UnreachableODError`.
    """
    t = net.check_costs(t)
    flow = np.zeros(net.n_edges, dtype=np.float64)
    groups: dict[tuple[int, ModeScope], list[tuple[int, float, ODPair]]] = {}
    for od, dw in demands:
        if dw < 0:
            raise ValueError(f"negative demand {dw} for {od}")
        if dw == 0:
            continue
        key = (net.node_index(od.origin), od.scope)
        groups.setdefault(key, []).append(
            (net.node_index(od.destination), float(dw), od)
        )
    for (o, scope) in sorted(groups, key=lambda k: (k[0], k[1].value)):
        sub = net.scope(scope)
        labels, pred_pos = _kernels.dijkstra(
            sub.indptr, sub.nbr_heads, sub.nbr_epos, t[sub.eids], o, net.n_nodes
        )
        entries = groups[(o, scope)]
        for dest, _, od in entries:
            if not math.isfinite(labels[dest]):
                raise UnreachableODError(
                    f"no {scope.value} path for {od.origin}->{od.destination}"
                )
        scoped_flow = np.zeros(sub.n_edges, dtype=np.float64)
        dests = np.array([d for d, _, _ in entries], dtype=np.int32)
        dems = np.array([w for _, w, _ in entries], dtype=np.float64)
        _kernels.load_tree(pred_pos, sub.etails, dests, dems, scoped_flow)
        np.add.at(flow, sub.eids, scoped_flow)
    return flow


def _hop_bound(net: Network, hop_bound: Optional[int]) -> int:
    if hop_bound is None:
        return max(1, net.n_nodes - 1)
    if hop_bound < 1:
        raise ValueError(f"hop bound must be >= 1, got {hop_bound}")
    return hop_bound


def smoothed_cost(
    net: Network,
    t: np.ndarray,
    od: ODPair,
    temperature: float,
    hop_bound: Optional[int] = None,
) -> float:
    """Tempered soft-min path cost T * ln sum exp(-cost(p)/T).

    The sum runs over walks of at most ``hop_bound`` edges (default
    |V| - 1), evaluated by log-domain value iteration rather than path
    enumeration; as T -> 0 it approaches minus :func:`min_cost`.  Returns
    -inf when no bounded-hop walk connects the pair.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    t = net.check_costs(t)
    K = _hop_bound(net, hop_bound)
    sub = net.scope(od.scope)
    theta = -t[sub.eids] / temperature
    logw = _kernels.walk_weight_tables(
        sub.rev_indptr, sub.rev_srcs, sub.rev_epos, theta,
        net.node_index(od.origin), K, net.n_nodes,
    )
    dest = net.node_index(od.destination)
    lpsi = _logsumexp(logw[1:, dest])
    return temperature * lpsi


def smoothed_grad(
    net: Network,
    t: np.ndarray,
    od: ODPair,
    temperature: float,
    hop_bound: Optional[int] = None,
) -> np.ndarray:
    """Gradient of :func:`smoothed_cost` with respect to ``t``.

    Entry e is minus the expected multiplicity of edge e under the Gibbs
    measure over bounded-hop walks; on cycle-free path sets entries lie in
    [-1, 0] and the entries leaving the origin sum to -1.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    t = net.check_costs(t)
    K = _hop_bound(net, hop_bound)
    sub = net.scope(od.scope)
    theta = -t[sub.eids] / temperature
    o = net.node_index(od.origin)
    dest = net.node_index(od.destination)
    logw = _kernels.walk_weight_tables(
        sub.rev_indptr, sub.rev_srcs, sub.rev_epos, theta, o, K, net.n_nodes
    )
    lw_total = _logsumexp(logw[1:, dest])
    grad = np.zeros(net.n_edges, dtype=np.float64)
    if lw_total == -math.inf:
        return grad
    logb = _kernels.walk_suffix_tables(
        sub.indptr, sub.nbr_heads, sub.nbr_epos, theta, dest, K, net.n_nodes
    )
    logcumb = np.logaddexp.accumulate(logb, axis=0)
    logu = _kernels.edge_usage_logs(
        sub.etails, sub.eheads, theta, logw, logcumb, K
    )
    grad[sub.eids] = -np.exp(logu - lw_total)
    return grad


def _logsumexp(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=np.float64)
    m = values.max() if values.size else -math.inf
    if not np.isfinite(m):
        return float(m) if values.size else -math.inf
    return float(m + np.log(np.exp(values - m).sum()))


def estimate_capacity(q_max: float, phases: Sequence[tuple[float, float]]) -> float:
    """Signalized-link capacity: sum over green phases of share * lanes * q_max.

    ``phases`` lists (time share, effective lanes) per phase serving the
    link; a single-phase link is just ``[(share, lanes)]``.
    """
    if q_max <= 0:
        raise ValueError(f"q_max must be > 0, got {q_max}")
    total_share = 0.0
    cap = 0.0
    for chi, r in phases:
        if not 0.0 <= chi <= 1.0:
            raise ValueError(f"phase share {chi} outside [0, 1]")
        if r < 0:
            raise ValueError(f"negative effective lanes {r}")
        total_share += chi
        cap += chi * r * q_max
    if total_share > 1.0 + 1e-12:
        raise ValueError(f"phase shares sum to {total_share} > 1")
    return cap
