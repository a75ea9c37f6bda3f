"""Compiled inner loops: union-find enumeration and heat-bath dynamics."""

import numpy as np
from numba import njit


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def labels_single(n, eu, ev, state):
    """Component root of every vertex for one configuration."""
    parent = np.arange(n)
    for e in range(eu.shape[0]):
        if state[e]:
            a = _find(parent, eu[e])
            b = _find(parent, ev[e])
            if a != b:
                if a < b:
                    parent[b] = a
                else:
                    parent[a] = b
    out = np.empty(n, np.int64)
    for v in range(n):
        out[v] = _find(parent, v)
    return out


@njit(cache=True)
def batch_labels(n, eu, ev, states):
    out = np.empty((states.shape[0], n), np.int64)
    for s in range(states.shape[0]):
        out[s] = labels_single(n, eu, ev, states[s])
    return out


@njit(cache=True)
def enumerate_counts(n, eu, ev, start, stop):
    """Number of components for every configuration index in [start, stop).

    Bit e of the index is the state of edge e.
    """
    m = eu.shape[0]
    out = np.empty(stop - start, np.int32)
    parent = np.empty(n, np.int64)
    for idx in range(start, stop):
        for v in range(n):
            parent[v] = v
        k = n
        for e in range(m):
            if (idx >> e) & 1:
                a = _find(parent, eu[e])
                b = _find(parent, ev[e])
                if a != b:
                    parent[b] = a
                    k -= 1
        out[idx - start] = k
    return out


@njit(cache=True)
def enumerate_marked(n, eu, ev, marked, start, stop):
    """Canonical connection pattern of the marked vertices per configuration.

    Row entries are block numbers in order of first appearance.
    """
    m = eu.shape[0]
    km = marked.shape[0]
    out = np.empty((stop - start, km), np.int8)
    parent = np.empty(n, np.int64)
    roots = np.empty(km, np.int64)
    for idx in range(start, stop):
        for v in range(n):
            parent[v] = v
        for e in range(m):
            if (idx >> e) & 1:
                a = _find(parent, eu[e])
                b = _find(parent, ev[e])
                if a != b:
                    parent[b] = a
        for i in range(km):
            roots[i] = _find(parent, marked[i])
        nb = 0
        for i in range(km):
            lab = -1
            for j in range(i):
                if roots[j] == roots[i]:
                    lab = out[idx - start, j]
                    break
            if lab < 0:
                lab = nb
                nb += 1
            out[idx - start, i] = lab
    return out


@njit(cache=True)
def canonical_patterns(labels, marked):
    """Canonicalise root labels of marked vertices (rows of ``labels``)."""
    km = marked.shape[0]
    out = np.empty((labels.shape[0], km), np.int8)
    for s in range(labels.shape[0]):
        nb = 0
        for i in range(km):
            lab = -1
            for j in range(i):
                if labels[s, marked[j]] == labels[s, marked[i]]:
                    lab = out[s, j]
                    break
            if lab < 0:
                lab = nb
                nb += 1
            out[s, i] = lab
    return out


@njit(cache=True)
def _connected_off(u, v, skip, ptr, nbr, eid, state, mark, gen, qa, qb):
    """Alternating BFS from u and v over open edges, ignoring edge ``skip``.

    Edges with eid < 0 are permanently open (boundary wiring).
    """
    if u == v:
        return True
    ta = 2 * gen
    tb = 2 * gen + 1
    mark[u] = ta
    mark[v] = tb
    qa[0] = u
    qb[0] = v
    ha = 0
    la = 1
    hb = 0
    lb = 1
    while ha < la and hb < lb:
        x = qa[ha]
        ha += 1
        for k in range(ptr[x], ptr[x + 1]):
            e = eid[k]
            if e == skip:
                continue
            if e >= 0 and state[e] == 0:
                continue
            y = nbr[k]
            if mark[y] == tb:
                return True
            if mark[y] != ta:
                mark[y] = ta
                qa[la] = y
                la += 1
        x = qb[hb]
        hb += 1
        for k in range(ptr[x], ptr[x + 1]):
            e = eid[k]
            if e == skip:
                continue
            if e >= 0 and state[e] == 0:
                continue
            y = nbr[k]
            if mark[y] == ta:
                return True
            if mark[y] != tb:
                mark[y] = tb
                qb[lb] = y
                lb += 1
    return False


@njit(cache=True)
def heat_bath_sweeps(state, order, uniforms, p_conn, p_disc, eu, ev,
                     ptr, nbr, eid, mark, gen, qa, qb):
    """Run ``uniforms.shape[0]`` sweeps in place; returns the updated gen."""
    for s in range(uniforms.shape[0]):
        for k in range(order.shape[0]):
            e = order[k]
            gen += 1
            if _connected_off(eu[e], ev[e], e, ptr, nbr, eid, state, mark, gen, qa, qb):
                p = p_conn[e]
            else:
                p = p_disc[e]
            state[e] = 1 if uniforms[s, k] < p else 0
    return gen


@njit(cache=True)
def heat_bath_record(state, order, uniforms, thin, p_conn, p_disc, eu, ev,
                     ptr, nbr, eid, mark, gen, qa, qb, out):
    """Record a copy of the state after every ``thin`` sweeps into ``out``."""
    ns = out.shape[0]
    for i in range(ns):
        gen = heat_bath_sweeps(state, order, uniforms[i * thin:(i + 1) * thin],
                               p_conn, p_disc, eu, ev, ptr, nbr, eid, mark, gen, qa, qb)
        for e in range(state.shape[0]):
            out[i, e] = state[e]
    return gen


@njit(cache=True)
def cluster_max(src, values, n_real, ptr, nbr, eid, state, mark, gen, qa):
    """Maximum of ``values`` over the open cluster of ``src`` (real vertices)."""
    mark[src] = gen
    qa[0] = src
    h = 0
    ln = 1
    best = values[src]
    while h < ln:
        x = qa[h]
        h += 1
        for k in range(ptr[x], ptr[x + 1]):
            e = eid[k]
            if e >= 0 and state[e] == 0:
                continue
            y = nbr[k]
            if mark[y] != gen:
                mark[y] = gen
                qa[ln] = y
                ln += 1
                if y < n_real and values[y] > best:
                    best = values[y]
    return best


@njit(cache=True)
def batch_connects(n, eu, ev, states, a, b):
    """For each state row: does some open cluster meet both vertex sets?"""
    out = np.zeros(states.shape[0], np.bool_)
    seen = np.zeros(n, np.int64)
    for s in range(states.shape[0]):
        lab = labels_single(n, eu, ev, states[s])
        for v in a:
            seen[lab[v]] = s + 1
        for v in b:
            if seen[lab[v]] == s + 1:
                out[s] = True
                break
    return out
