"""Maximum-cardinality matching for general graphs (Edmonds' blossom algorithm)."""
import numpy as np
from numba import njit


@njit(cache=True)
def _lca(a, b, base, match, parent, n):
    seen = np.zeros(n, np.bool_)
    while True:
        a = base[a]
        seen[a] = True
        if match[a] == -1:
            break
        a = parent[match[a]]
    while True:
        b = base[b]
        if seen[b]:
            return b
        b = parent[match[b]]


@njit(cache=True)
def _mark_path(v, b, child, base, match, parent, inblossom):
    while base[v] != b:
        inblossom[base[v]] = True
        inblossom[base[match[v]]] = True
        parent[v] = child
        child = match[v]
        v = parent[match[v]]


@njit(cache=True)
def _find_path(root, n, indptr, indices, match, parent, base, used, queue):
    for i in range(n):
        used[i] = False
        parent[i] = -1
        base[i] = i
    used[root] = True
    head = 0
    tail = 0
    queue[tail] = root
    tail += 1
    inblossom = np.zeros(n, np.bool_)
    while head < tail:
        v = queue[head]
        head += 1
        for k in range(indptr[v], indptr[v + 1]):
            to = indices[k]
            if to == v or base[v] == base[to] or match[v] == to:
                continue
            if to == root or (match[to] != -1 and parent[match[to]] != -1):
                cur = _lca(v, to, base, match, parent, n)
                inblossom[:] = False
                _mark_path(v, cur, to, base, match, parent, inblossom)
                _mark_path(to, cur, v, base, match, parent, inblossom)
                for i in range(n):
                    if inblossom[base[i]]:
                        base[i] = cur
                        if not used[i]:
                            used[i] = True
                            queue[tail] = i
                            tail += 1
            elif parent[to] == -1:
                parent[to] = v
                if match[to] == -1:
                    return to
                used[match[to]] = True
                queue[tail] = match[to]
                tail += 1
    return -1


@njit(cache=True)
def blossom_matching(n, indptr, indices):
    """Mate array of a maximum matching (-1 for unmatched vertices)."""
    match = -np.ones(n, np.int64)
    # greedy start
    for v in range(n):
        if match[v] != -1:
            continue
        for k in range(indptr[v], indptr[v + 1]):
            w = indices[k]
            if w != v and match[w] == -1:
                match[v] = w
                match[w] = v
                break
    parent = np.empty(n, np.int64)
    base = np.empty(n, np.int64)
    used = np.empty(n, np.bool_)
    queue = np.empty(n + 1, np.int64)
    for v in range(n):
        if match[v] != -1:
            continue
        u = _find_path(v, n, indptr, indices, match, parent, base, used, queue)
        while u != -1:
            pv = parent[u]
            ppv = match[pv]
            match[u] = pv
            match[pv] = u
            u = ppv
    return match


@njit(cache=True)
def two_coloring(n, indptr, indices):
    """Side (0/1) of each vertex, or an empty array if the graph is not bipartite."""
    color = -np.ones(n, np.int64)
    stack = np.empty(n, np.int64)
    for s in range(n):
        if color[s] != -1:
            continue
        color[s] = 0
        top = 0
        stack[top] = s
        top += 1
        while top > 0:
            top -= 1
            v = stack[top]
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if color[w] == -1:
                    color[w] = 1 - color[v]
                    stack[top] = w
                    top += 1
                elif color[w] == color[v]:
                    return np.empty(0, np.int64)
    return color
