# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel core.

Statement-level twin of ``_pure.py``: same traversal and accumulation order,
so the two backends produce bitwise-identical results.  Keep in sync.
"""

from libc.math cimport exp, log, INFINITY
from libc.stdlib cimport malloc, free

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef struct Heap:
    double *cost
    int *node
    int size
    int cap


cdef inline void heap_push(Heap *h, double c, int v) noexcept nogil:
    cdef int i = h.size
    cdef int parent
    h.cost[i] = c
    h.node[i] = v
    h.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        if h.cost[parent] > h.cost[i] or (
            h.cost[parent] == h.cost[i] and h.node[parent] > h.node[i]
        ):
            h.cost[parent], h.cost[i] = h.cost[i], h.cost[parent]
            h.node[parent], h.node[i] = h.node[i], h.node[parent]
            i = parent
        else:
            break


cdef inline void heap_pop(Heap *h, double *c_out, int *v_out) noexcept nogil:
    cdef int i = 0
    cdef int child
    c_out[0] = h.cost[0]
    v_out[0] = h.node[0]
    h.size -= 1
    h.cost[0] = h.cost[h.size]
    h.node[0] = h.node[h.size]
    while True:
        child = 2 * i + 1
        if child >= h.size:
            break
        if child + 1 < h.size and (
            h.cost[child + 1] < h.cost[child]
            or (h.cost[child + 1] == h.cost[child] and h.node[child + 1] < h.node[child])
        ):
            child += 1
        if h.cost[child] < h.cost[i] or (
            h.cost[child] == h.cost[i] and h.node[child] < h.node[i]
        ):
            h.cost[child], h.cost[i] = h.cost[i], h.cost[child]
            h.node[child], h.node[i] = h.node[i], h.node[child]
            i = child
        else:
            break


def dijkstra(indptr, nbr_heads, nbr_epos, cost, origin, n_nodes):
    """See ``_pure.dijkstra``."""
    cdef cnp.int32_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int32)
    cdef cnp.int32_t[::1] heads = np.ascontiguousarray(nbr_heads, dtype=np.int32)
    cdef cnp.int32_t[::1] epos = np.ascontiguousarray(nbr_epos, dtype=np.int32)
    cdef cnp.float64_t[::1] c = np.ascontiguousarray(cost, dtype=np.float64)
    cdef int n = n_nodes
    cdef int src = origin

    labels_arr = np.full(n, np.inf, dtype=np.float64)
    pred_arr = np.full(n, -1, dtype=np.int32)
    cdef cnp.float64_t[::1] labels = labels_arr
    cdef cnp.int32_t[::1] pred = pred_arr
    cdef char *settled = <char *> malloc(n * sizeof(char))
    cdef Heap h
    # every relaxation pushes at most once per adjacency entry, plus the origin
    cdef int heap_cap = heads.shape[0] + 1 if heads.shape[0] > 0 else 1
    h.cost = <double *> malloc(heap_cap * sizeof(double))
    h.node = <int *> malloc(heap_cap * sizeof(int))
    h.size = 0
    h.cap = heap_cap

    cdef int i, u, v, a, e
    cdef double lab_u, cand
    for i in range(n):
        settled[i] = 0
    labels[src] = 0.0
    heap_push(&h, 0.0, src)
    while h.size > 0:
        heap_pop(&h, &lab_u, &u)
        if settled[u]:
            continue
        settled[u] = 1
        for a in range(ip[u], ip[u + 1]):
            v = heads[a]
            e = epos[a]
            cand = lab_u + c[e]
            if cand < labels[v]:
                labels[v] = cand
                pred[v] = e
                heap_push(&h, cand, v)
            elif cand == labels[v] and lab_u < labels[v]:
                if pred[v] < 0 or e < pred[v]:
                    pred[v] = e
    free(settled)
    free(h.cost)
    free(h.node)
    return labels_arr, pred_arr


def load_tree(pred, edge_tails, dests, demands, out_flow):
    """See ``_pure.load_tree``."""
    cdef cnp.int32_t[::1] p = np.ascontiguousarray(pred, dtype=np.int32)
    cdef cnp.int32_t[::1] tails = np.ascontiguousarray(edge_tails, dtype=np.int32)
    cdef cnp.int32_t[::1] dd = np.ascontiguousarray(dests, dtype=np.int32)
    cdef cnp.float64_t[::1] dem = np.ascontiguousarray(demands, dtype=np.float64)
    cdef cnp.float64_t[::1] out = out_flow
    cdef int i, v, e
    cdef double w
    for i in range(dd.shape[0]):
        v = dd[i]
        w = dem[i]
        while p[v] >= 0:
            e = p[v]
            out[e] += w
            v = tails[e]


def walk_weight_tables(rev_indptr, rev_srcs, rev_epos, theta, origin, hops, n_nodes):
    """See ``_pure.walk_weight_tables``."""
    cdef cnp.int32_t[::1] rp = np.ascontiguousarray(rev_indptr, dtype=np.int32)
    cdef cnp.int32_t[::1] srcs = np.ascontiguousarray(rev_srcs, dtype=np.int32)
    cdef cnp.int32_t[::1] epos = np.ascontiguousarray(rev_epos, dtype=np.int32)
    cdef cnp.float64_t[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef int K = hops
    cdef int n = n_nodes

    logw_arr = np.full((K + 1, n), -np.inf, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] logw = logw_arr
    logw[0, origin] = 0.0
    cdef int k, v, a
    cdef double m, s, x
    for k in range(1, K + 1):
        for v in range(n):
            m = -INFINITY
            for a in range(rp[v], rp[v + 1]):
                x = logw[k - 1, srcs[a]] + th[epos[a]]
                if x > m:
                    m = x
            if m > -INFINITY:
                s = 0.0
                for a in range(rp[v], rp[v + 1]):
                    s += exp(logw[k - 1, srcs[a]] + th[epos[a]] - m)
                logw[k, v] = m + log(s)
    return logw_arr


def walk_suffix_tables(indptr, nbr_heads, nbr_epos, theta, dest, hops, n_nodes):
    """See ``_pure.walk_suffix_tables``."""
    cdef cnp.int32_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int32)
    cdef cnp.int32_t[::1] heads = np.ascontiguousarray(nbr_heads, dtype=np.int32)
    cdef cnp.int32_t[::1] epos = np.ascontiguousarray(nbr_epos, dtype=np.int32)
    cdef cnp.float64_t[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef int K = hops
    cdef int n = n_nodes

    logb_arr = np.full((K + 1, n), -np.inf, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] logb = logb_arr
    logb[0, dest] = 0.0
    cdef int k, v, a
    cdef double m, s, x
    for k in range(1, K + 1):
        for v in range(n):
            m = -INFINITY
            for a in range(ip[v], ip[v + 1]):
                x = logb[k - 1, heads[a]] + th[epos[a]]
                if x > m:
                    m = x
            if m > -INFINITY:
                s = 0.0
                for a in range(ip[v], ip[v + 1]):
                    s += exp(logb[k - 1, heads[a]] + th[epos[a]] - m)
                logb[k, v] = m + log(s)
    return logb_arr


def edge_usage_logs(etails, eheads, theta, logw, logcumb, hops):
    """See ``_pure.edge_usage_logs``."""
    cdef cnp.int32_t[::1] tails = np.ascontiguousarray(etails, dtype=np.int32)
    cdef cnp.int32_t[::1] heads = np.ascontiguousarray(eheads, dtype=np.int32)
    cdef cnp.float64_t[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] lw = np.ascontiguousarray(logw, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] lcb = np.ascontiguousarray(logcumb, dtype=np.float64)
    cdef int K = hops
    cdef int n_edges = tails.shape[0]

    out_arr = np.full(n_edges, -np.inf, dtype=np.float64)
    cdef cnp.float64_t[::1] out = out_arr
    cdef int j, a, tl, hd
    cdef double m, s, x
    for j in range(n_edges):
        tl = tails[j]
        hd = heads[j]
        m = -INFINITY
        for a in range(0, K):
            x = lw[a, tl] + lcb[K - 1 - a, hd]
            if x > m:
                m = x
        if m == -INFINITY:
            continue
        s = 0.0
        for a in range(0, K):
            s += exp(lw[a, tl] + lcb[K - 1 - a, hd] - m)
        out[j] = m + log(s) + th[j]
    return out_arr


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
    """See ``_pure.exchange_chain_run``."""
    cdef cnp.int64_t[::1] dd = d
    cdef cnp.int32_t[::1] mk = np.ascontiguousarray(move_k, dtype=np.int32)
    cdef cnp.int32_t[::1] mm = np.ascontiguousarray(move_m, dtype=np.int32)
    cdef cnp.int32_t[::1] mp = np.ascontiguousarray(move_p, dtype=np.int32)
    cdef cnp.int32_t[::1] mq = np.ascontiguousarray(move_q, dtype=np.int32)
    cdef cnp.float64_t[::1] lam_v = np.ascontiguousarray(lam, dtype=np.float64)
    cdef cnp.float64_t[::1] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef cnp.float64_t[::1] acc_v = acc
    cdef cnp.int64_t[:, ::1] snaps_v = snaps
    cdef int nn = n
    cdef int n_moves = lam_v.shape[0]
    cdef long long total_events = n_events
    cdef long long burn = burn_events
    cdef int stride_i = stride

    cdef double *cum = <double *> malloc(n_moves * sizeof(double))
    cdef double tot, r, u1, dt, target, wsum
    cdef long long ev, events
    cdef int j, c, snap_row
    cdef int cells = nn * nn
    wsum = 0.0
    events = 0
    snap_row = 0
    for ev in range(total_events):
        tot = 0.0
        for j in range(n_moves):
            r = lam_v[j] * dd[mk[j] * nn + mm[j]] * dd[mp[j] * nn + mq[j]]
            tot += r
            cum[j] = tot
        if tot <= 0.0:
            break
        u1 = u[2 * ev]
        if u1 <= 0.0:
            u1 = 5e-324
        dt = -log(u1) / tot
        if ev >= burn:
            for c in range(cells):
                acc_v[c] += dd[c] * dt
            wsum += dt
        target = u[2 * ev + 1] * tot
        j = 0
        while j < n_moves - 1 and cum[j] <= target:
            j += 1
        dd[mk[j] * nn + mm[j]] -= 1
        dd[mp[j] * nn + mq[j]] -= 1
        dd[mp[j] * nn + mm[j]] += 1
        dd[mk[j] * nn + mq[j]] += 1
        events += 1
        if stride_i > 0 and events % stride_i == 0 and snap_row < snaps_v.shape[0]:
            for c in range(cells):
                snaps_v[snap_row, c] = dd[c]
            snap_row += 1
    free(cum)
    return events, wsum
