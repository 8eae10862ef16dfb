"""Compiled Karp-Sipser stripping kernel shared by the plain and label-aware matchers."""
import numpy as np
from numba import njit

from .fluid import _badness

STEP_THIN = 0
STEP_EDGE = 1
STEP_LOOP = 2


@njit(cache=True)
def _pool_add(pool, pos, size, v):
    pos[v] = size
    pool[size] = v
    return size + 1


@njit(cache=True)
def _pool_remove(pool, pos, size, v):
    k = pos[v]
    last = pool[size - 1]
    pool[k] = last
    pos[last] = k
    pos[v] = -1
    return size - 1


@njit(cache=True)
def _strip(n, q, labels, indptr, indices, eu, ev, seed, label_aware, max_steps,
           log_steps, trace):
    np.random.seed(seed)
    m = eu.size
    deg = np.empty(n, np.int64)
    for v in range(n):
        deg[v] = indptr[v + 1] - indptr[v]
    alive = np.ones(n, np.bool_)
    E = np.zeros((q, q), np.int64)
    T = np.zeros(q, np.int64)
    F = np.zeros(q, np.int64)
    for k in range(m):
        a = labels[eu[k]]
        b = labels[ev[k]]
        E[a, b] += 1
        E[b, a] += 1
    pool = np.empty(n, np.int64)
    pos = -np.ones(n, np.int64)
    psize = 0
    iso_initial = 0
    for v in range(n):
        if deg[v] == 1:
            T[labels[v]] += 1
            psize = _pool_add(pool, pos, psize, v)
        elif deg[v] >= 2:
            F[labels[v]] += 1
        else:
            iso_initial += 1
    half = 0
    for i in range(q):
        for j in range(q):
            half += E[i, j]

    # edge buckets: one for plain KS, one per unordered class pair otherwise
    nb = q * q if label_aware else 1
    bcount = np.zeros(nb + 1, np.int64)
    for k in range(m):
        p = 0
        if label_aware:
            a = labels[eu[k]]
            b = labels[ev[k]]
            if a > b:
                a, b = b, a
            p = a * q + b
        bcount[p + 1] += 1
    bstart = np.cumsum(bcount)
    blen = bcount[1:].copy()
    bitems = np.empty(m, np.int64)
    fill = bstart[:-1].copy()
    for k in range(m):
        p = 0
        if label_aware:
            a = labels[eu[k]]
            b = labels[ev[k]]
            if a > b:
                a, b = b, a
            p = a * q + b
        bitems[fill[p]] = k
        fill[p] += 1

    pairs = np.empty((n // 2 + 1, 2), np.int64)
    npairs = 0
    steps_cap = n + 1 if log_steps else 1
    log = np.empty((steps_cap, 3), np.int64)
    tw = q * q + 2 * q
    tcap = n + 2 if trace else 1
    tuples = np.empty((tcap, tw), np.int64)
    ntup = 0
    if trace:
        tuples[0, :q * q] = E.ravel()
        tuples[0, q * q:q * q + q] = T
        tuples[0, q * q + q:] = F
        ntup = 1
    phase1 = True
    s1 = 0
    s2 = 0
    iso = np.zeros(2, np.int64)
    cand = np.empty(q * q, np.int64)
    nsteps = 0
    while half > 0 and nsteps < max_steps:
        if phase1 and psize == 0:
            phase1 = False
        ph = 0 if phase1 else 1
        kind = STEP_THIN
        if psize > 0:
            x = pool[np.random.randint(psize)]
            y = -1
            for k in range(indptr[x], indptr[x + 1]):
                w = indices[k]
                if alive[w] and w != x:
                    y = w
                    break
        else:
            # uniform live edge, from one bucket or from the best class pair
            p = 0
            if label_aware:
                bad = _badness(E.astype(np.float64), T.astype(np.float64), F.astype(np.float64))
                best = np.inf
                nc = 0
                for a in range(q):
                    for b in range(a, q):
                        live = E[a, b] if a != b else E[a, a] // 2
                        if live <= 0:
                            continue
                        s = bad[a] + bad[b]
                        tol = 1e-12 * max(1.0, abs(s))
                        if nc == 0 or s < best - tol:
                            best = s
                            nc = 0
                            cand[nc] = a * q + b
                            nc += 1
                        elif s <= best + tol:
                            cand[nc] = a * q + b
                            nc += 1
                p = cand[np.random.randint(nc)]
            while True:
                r = np.random.randint(blen[p])
                e = bitems[bstart[p] + r]
                if alive[eu[e]] and alive[ev[e]]:
                    break
                blen[p] -= 1
                bitems[bstart[p] + r] = bitems[bstart[p] + blen[p]]
                bitems[bstart[p] + blen[p]] = e
            x = eu[e]
            y = ev[e]
            kind = STEP_EDGE
            if x == y:
                kind = STEP_LOOP
                y = -1
        if kind != STEP_LOOP:
            pairs[npairs, 0] = x
            pairs[npairs, 1] = y
            npairs += 1
        if log_steps:
            log[nsteps, 0] = kind
            log[nsteps, 1] = x
            log[nsteps, 2] = y
        # delete x, then y
        for z in (x, y):
            if z < 0:
                continue
            cz = labels[z]
            if deg[z] == 1:
                T[cz] -= 1
                psize = _pool_remove(pool, pos, psize, z)
            elif deg[z] >= 2:
                F[cz] -= 1
            alive[z] = False
            for k in range(indptr[z], indptr[z + 1]):
                w = indices[k]
                if w == z:
                    E[cz, cz] -= 1
                    half -= 1
                    continue
                if not alive[w]:
                    continue
                cw = labels[w]
                if w == y and z == x:
                    # the partner leaves with x; its degree class is settled when it is deleted
                    E[cz, cw] -= 1
                    E[cw, cz] -= 1
                    half -= 2
                    continue
                E[cz, cw] -= 1
                E[cw, cz] -= 1
                half -= 2
                d = deg[w]
                deg[w] = d - 1
                if d == 2:
                    F[cw] -= 1
                    T[cw] += 1
                    psize = _pool_add(pool, pos, psize, w)
                elif d == 1:
                    T[cw] -= 1
                    psize = _pool_remove(pool, pos, psize, w)
                    iso[ph] += 1
            deg[z] = 0
        if kind == STEP_LOOP:
            iso[ph] += 1
        if ph == 0:
            s1 += 1
        else:
            s2 += 1
        nsteps += 1
        if trace:
            tuples[ntup, :q * q] = E.ravel()
            tuples[ntup, q * q:q * q + q] = T
            tuples[ntup, q * q + q:] = F
            ntup += 1
    return (pairs[:npairs], s1, s2, iso_initial, iso[0], iso[1], log[:nsteps if log_steps else 0],
            tuples[:ntup], E, T, F, alive)
