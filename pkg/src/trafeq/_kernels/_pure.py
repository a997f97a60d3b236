"""Pure-Python twin of the compiled kernel core.

Each function mirrors its Cython counterpart in ``_core.pyx`` statement by
statement (same traversal order, same accumulation order), which keeps the
two backends bitwise interchangeable.  Keep the twins in sync when editing.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

INF = math.inf


def dijkstra(indptr, nbr_heads, nbr_epos, cost, origin, n_nodes):
    """Label-setting shortest paths over a CSR adjacency.

    ``indptr``/``nbr_heads``/``nbr_epos`` describe outgoing edges per node;
    ``nbr_epos`` indexes into ``cost``.  Returns (labels, pred) where ``pred``
    holds the incoming edge position of the shortest-path tree (-1 for the
    origin and unreachable nodes).  Among equal-cost predecessors the smallest
    edge position wins, provided the predecessor label is strictly smaller
    (which keeps the tree acyclic even with zero-cost edges).
    """
    indptr_l = indptr.tolist()
    heads_l = nbr_heads.tolist()
    epos_l = nbr_epos.tolist()
    cost_l = cost.tolist()

    labels = [INF] * n_nodes
    pred = [-1] * n_nodes
    settled = [False] * n_nodes
    labels[origin] = 0.0
    heap = [(0.0, origin)]
    while heap:
        lab_u, u = heapq.heappop(heap)
        if settled[u]:
            continue
        settled[u] = True
        for a in range(indptr_l[u], indptr_l[u + 1]):
            v = heads_l[a]
            e = epos_l[a]
            cand = lab_u + cost_l[e]
            if cand < labels[v]:
                labels[v] = cand
                pred[v] = e
                heapq.heappush(heap, (cand, v))
            elif cand == labels[v] and lab_u < labels[v]:
                if pred[v] < 0 or e < pred[v]:
                    pred[v] = e
    return (
        np.asarray(labels, dtype=np.float64),
        np.asarray(pred, dtype=np.int32),
    )


def load_tree(pred, edge_tails, dests, demands, out_flow):
    """Add each demand along its tree path (dest back to the root)."""
    pred_l = pred.tolist()
    tails_l = edge_tails.tolist()
    dests_l = dests.tolist()
    dem_l = demands.tolist()
    for i in range(len(dests_l)):
        v = dests_l[i]
        dem = dem_l[i]
        while pred_l[v] >= 0:
            e = pred_l[v]
            out_flow[e] += dem
            v = tails_l[e]


def _lse_pass(values):
    """Two-pass log-sum-exp over a python list (deterministic order)."""
    m = -INF
    for x in values:
        if x > m:
            m = x
    if m == -INF:
        return -INF
    s = 0.0
    for x in values:
        s += math.exp(x - m)
    return m + math.log(s)


def walk_weight_tables(rev_indptr, rev_srcs, rev_epos, theta, origin, hops, n_nodes):
    """Log weights of bounded-hop walks out of ``origin``.

    Returns ``logw`` of shape (hops+1, n_nodes): logw[k][v] is the log total
    weight (sum over walks of exactly k edges from origin to v of
    exp(sum theta_e)).  The reverse CSR gives incoming edges per node.
    """
    rp = rev_indptr.tolist()
    srcs = rev_srcs.tolist()
    epos = rev_epos.tolist()
    th = theta.tolist()

    logw = np.full((hops + 1, n_nodes), -INF, dtype=np.float64)
    logw[0, origin] = 0.0
    prev = logw[0].tolist()
    for k in range(1, hops + 1):
        cur = [-INF] * n_nodes
        for v in range(n_nodes):
            m = -INF
            for a in range(rp[v], rp[v + 1]):
                x = prev[srcs[a]] + th[epos[a]]
                if x > m:
                    m = x
            if m > -INF:
                s = 0.0
                for a in range(rp[v], rp[v + 1]):
                    s += math.exp(prev[srcs[a]] + th[epos[a]] - m)
                cur[v] = m + math.log(s)
        logw[k] = cur
        prev = cur
    return logw


def walk_suffix_tables(indptr, nbr_heads, nbr_epos, theta, dest, hops, n_nodes):
    """Log weights of bounded-hop walk suffixes into ``dest``.

    logb[k][v] is the log total weight of walks of exactly k edges from v to
    dest.  Uses the forward CSR (outgoing edges per node).
    """
    ip = indptr.tolist()
    heads = nbr_heads.tolist()
    epos = nbr_epos.tolist()
    th = theta.tolist()

    logb = np.full((hops + 1, n_nodes), -INF, dtype=np.float64)
    logb[0, dest] = 0.0
    prev = logb[0].tolist()
    for k in range(1, hops + 1):
        cur = [-INF] * n_nodes
        for v in range(n_nodes):
            m = -INF
            for a in range(ip[v], ip[v + 1]):
                x = prev[heads[a]] + th[epos[a]]
                if x > m:
                    m = x
            if m > -INF:
                s = 0.0
                for a in range(ip[v], ip[v + 1]):
                    s += math.exp(prev[heads[a]] + th[epos[a]] - m)
                cur[v] = m + math.log(s)
        logb[k] = cur
        prev = cur
    return logb


def edge_usage_logs(etails, eheads, theta, logw, logcumb, hops):
    """Per-edge log expected-multiplicity numerators.

    For edge j at position a of a walk, the weight through it is
    w_a[tail] * exp(theta_j) * (suffixes of length <= hops-1-a from head);
    ``logcumb[m][v]`` must hold the log cumulative suffix weight for lengths
    0..m.  Result is the log of the sum over a; subtracting the log total
    walk weight gives the log usage.
    """
    tails = etails.tolist()
    heads = eheads.tolist()
    th = theta.tolist()
    n_edges = len(tails)
    out = np.full(n_edges, -INF, dtype=np.float64)
    lw = logw.tolist()
    lcb = logcumb.tolist()
    for j in range(n_edges):
        tl = tails[j]
        hd = heads[j]
        m = -INF
        for a in range(0, hops):
            x = lw[a][tl] + lcb[hops - 1 - a][hd]
            if x > m:
                m = x
        if m == -INF:
            continue
        s = 0.0
        for a in range(0, hops):
            s += math.exp(lw[a][tl] + lcb[hops - 1 - a][hd] - m)
        out[j] = m + math.log(s) + th[j]
    return out


def exchange_chain_run(
    d,
    move_k,
    move_m,
    move_p,
    move_q,
    lam,
    n,
    n_events,
    burn_events,
    uniforms,
    acc,
    snaps,
    stride,
):
    """Event loop of the pairwise-exchange Markov chain.

    ``d`` is the flattened n*n integer state (modified in place); a move j
    swaps one agent from cell (k,m) with one from cell (p,q), producing
    (p,m) and (k,q).  ``uniforms`` supplies 2 draws per event (holding time,
    move selection).  From ``burn_events`` on, ``acc`` accumulates the
    holding-time-weighted state; every ``stride`` events a snapshot row of
    ``snaps`` is filled.  Returns (events_done, accumulated_time).
    """
    d_l = d.tolist()
    mk = move_k.tolist()
    mm = move_m.tolist()
    mp = move_p.tolist()
    mq = move_q.tolist()
    lam_l = lam.tolist()
    u = uniforms.tolist()
    n_moves = len(lam_l)
    cum = [0.0] * n_moves
    acc_l = acc.tolist()
    wsum = 0.0
    snap_row = 0
    events = 0
    cells = n * n
    for ev in range(n_events):
        tot = 0.0
        for j in range(n_moves):
            r = lam_l[j] * d_l[mk[j] * n + mm[j]] * d_l[mp[j] * n + mq[j]]
            tot += r
            cum[j] = tot
        if tot <= 0.0:
            break
        u1 = u[2 * ev]
        if u1 <= 0.0:
            u1 = 5e-324
        dt = -math.log(u1) / tot
        if ev >= burn_events:
            for c in range(cells):
                acc_l[c] += d_l[c] * dt
            wsum += dt
        target = u[2 * ev + 1] * tot
        j = 0
        while j < n_moves - 1 and cum[j] <= target:
            j += 1
        d_l[mk[j] * n + mm[j]] -= 1
        d_l[mp[j] * n + mq[j]] -= 1
        d_l[mp[j] * n + mm[j]] += 1
        d_l[mk[j] * n + mq[j]] += 1
        events += 1
        if stride > 0 and events % stride == 0 and snap_row < snaps.shape[0]:
            for c in range(cells):
                snaps[snap_row, c] = d_l[c]
            snap_row += 1
    for c in range(cells):
        d[c] = d_l[c]
        acc[c] = acc_l[c]
    return events, wsum
