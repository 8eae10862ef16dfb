import math
from collections import Counter, defaultdict

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chi2_contingency

from oracles import brute_matching_number, mp_solve_lambda
from sbmatch.matcher import (STEP_EDGE, STEP_LOOP, STEP_THIN, OracleSizeError, badness,
                             exact_matching_number, karp_sipser, label_aware_karp_sipser,
                             maximum_matching)
from sbmatch.model import (BlockModel, Graph, Multigraph, StateTuple, extract_tuple,
                           sample_blocked_configuration, sample_sbm)


def _graph(n, edges, labels=None):
    return Graph(n, np.zeros(n) if labels is None else np.asarray(labels), np.asarray(edges).reshape(-1, 2))


def _random_graph(rs, n_max=60):
    n = int(rs.integers(6, n_max + 1))
    q = int(rs.integers(1, 4))
    a = rs.uniform(0.2, 4.0, (q, q))
    model = BlockModel(np.full(q, 1.0 / q), (a + a.T) / 2)
    return sample_sbm(model, n, int(rs.integers(2**31))), model


def _check_result(g, r):
    m = r.matching
    assert m.shape[1] == 2
    flat = m.ravel()
    assert np.unique(flat).size == flat.size
    es = {tuple(sorted(e)) for e in g.edges.tolist()}
    assert all(tuple(sorted(e)) in es for e in m.tolist())
    assert r.final_unmatched == g.n - 2 * r.size
    assert r.isolated_initial + r.isolated_in_phase1 + r.isolated_in_phase2 == r.final_unmatched
    assert r.complete and r.final_tuple.E.sum() == 0


# ---------------------------------------------------------------- small cases

def test_two_vertex_path():
    r = karp_sipser(_graph(2, [[0, 1]]), 0)
    assert r.size == 1 and r.phase1_steps == 1 and r.phase2_steps == 0


def test_triangle_is_all_phase2():
    r = karp_sipser(_graph(3, [[0, 1], [1, 2], [0, 2]]), 0)
    assert r.size == 1 and r.phase1_steps == 0 and r.phase2_steps == 1
    assert r.isolated_in_phase2 == 1


def test_star_is_all_phase1():
    r = karp_sipser(_graph(5, [[0, 1], [0, 2], [0, 3], [0, 4]]), 3)
    assert r.size == 1 and r.phase1_steps == 1 and r.phase2_steps == 0
    assert r.isolated_in_phase1 == 3


def test_self_loop_is_not_matched():
    mg = Multigraph(1, np.zeros(1), [[0, 0]])
    r = karp_sipser(mg, 0, record=True)
    assert r.size == 0 and r.steps[0, 0] == STEP_LOOP and r.final_unmatched == 1


def test_same_seed_same_result():
    g = sample_sbm(BlockModel.erdos_renyi(3.0), 5000, 1)
    a = karp_sipser(g, 9)
    b = karp_sipser(g, 9)
    assert np.array_equal(a.matching, b.matching)


def test_max_steps_marks_incomplete():
    g = sample_sbm(BlockModel.erdos_renyi(3.0), 2000, 1)
    r = karp_sipser(g, 0, max_steps=5)
    assert not r.complete and r.phase1_steps + r.phase2_steps == 5


# ---------------------------------------------------------------- badness

def test_badness_all_thin_is_zero():
    t = StateTuple(np.array([[4]]), np.array([4]), np.array([0]))
    assert badness(t, 0) == 0.0


def test_badness_single_class_oracle():
    E, T, F = 3000.0, 30.0, 900.0
    lam = mp_solve_lambda((E - T) / F)
    a = (E - T) / E
    want = (a * lam / (1 - math.exp(-lam))) * (a * lam / math.expm1(lam))
    got = badness(StateTuple(np.array([[3000]]), np.array([30]), np.array([900])), 0)
    assert abs(got - want) < 1e-10


def test_badness_without_cross_edges():
    t = StateTuple(np.array([[300, 0], [0, 50]]), np.array([10, 0]), np.array([100, 25]))
    only_own = StateTuple(np.array([[300]]), np.array([10]), np.array([100]))
    assert abs(badness(t, 0) - badness(only_own, 0)) < 1e-15


# ---------------------------------------------------------------- label-aware

def test_label_aware_equals_plain_on_forests():
    rs = np.random.default_rng(4)
    for _ in range(50):
        n = int(rs.integers(2, 200))
        parent = [int(rs.integers(v)) for v in range(1, n)]
        keep = rs.random(n - 1) < 0.9
        edges = [[p, v + 1] for v, (p, k) in enumerate(zip(parent, keep)) if k]
        labels = rs.integers(0, 2, n)
        g = _graph(n, edges if edges else np.empty((0, 2)), labels)
        s = int(rs.integers(2**31))
        a = karp_sipser(g, s)
        b = label_aware_karp_sipser(g, None, s)
        assert a.phase2_steps == 0 and b.phase2_steps == 0
        assert np.array_equal(a.matching, b.matching)


def test_label_aware_rejects_inconsistent_labels():
    g = _graph(2, [[0, 1]], [0, 3])
    with pytest.raises(ValueError):
        label_aware_karp_sipser(g, BlockModel.erdos_renyi(1.0), 0)


# ---------------------------------------------------------------- exact oracle

def test_exact_small_cases():
    for k in (2, 3, 10):
        assert exact_matching_number(_graph(2 * k, [[i, (i + 1) % (2 * k)] for i in range(2 * k)])) == k
    assert exact_matching_number(_graph(5, [[0, 1], [0, 2], [0, 3], [0, 4]])) == 1
    assert exact_matching_number(_graph(5, [[0, 1], [1, 2], [2, 3], [3, 4], [4, 0]])) == 2


def test_exact_bipartite_against_brute_force():
    rs = np.random.default_rng(1)
    for _ in range(100):
        a, b = int(rs.integers(1, 9)), int(rs.integers(1, 9))
        p = rs.uniform(0.1, 0.6)
        edges = [[i, a + j] for i in range(a) for j in range(b) if rs.random() < p]
        g = _graph(a + b, edges if edges else np.empty((0, 2)), [0] * a + [1] * b)
        assert exact_matching_number(g) == brute_matching_number(a + b, edges)


def test_exact_general_against_brute_force_and_networkx():
    rs = np.random.default_rng(2)
    for trial in range(300):
        n = int(rs.integers(2, 17 if trial < 150 else 61))
        p = rs.uniform(0.02, 0.4)
        edges = [[u, v] for u in range(n) for v in range(u + 1, n) if rs.random() < p]
        g = _graph(n, edges if edges else np.empty((0, 2)))
        got = exact_matching_number(g)
        G = nx.Graph()
        G.add_nodes_from(range(n))
        G.add_edges_from(edges)
        assert got == len(nx.max_weight_matching(G, maxcardinality=True))
        if n <= 16:
            assert got == brute_matching_number(n, edges)
        mate = maximum_matching(g)
        assert all(mate[mate[v]] == v for v in range(n) if mate[v] >= 0)


def test_exact_cap():
    g = _graph(5, [[0, 1], [1, 2], [2, 0], [3, 4]])
    with pytest.raises(OracleSizeError):
        exact_matching_number(g, cap=4)


# ---------------------------------------------------------------- properties

def _induced(g, alive):
    idx = np.flatnonzero(alive)
    pos = np.full(g.n, -1)
    pos[idx] = np.arange(idx.size)
    e = g.edges
    keep = alive[e[:, 0]] & alive[e[:, 1]]
    return Multigraph(idx.size, np.zeros(idx.size, np.int64), pos[e[keep]])


def test_phase1_moves_are_safe():
    rs = np.random.default_rng(3)
    checked = 0
    for _ in range(500):
        g, _m = _random_graph(rs)
        r = karp_sipser(g, int(rs.integers(2**31)), record=True)
        alive = np.ones(g.n, bool)
        for kind, x, y in r.steps:
            if kind == STEP_THIN:
                before = exact_matching_number(_induced(g, alive))
                alive2 = alive.copy()
                alive2[[x, y]] = False
                after = exact_matching_number(_induced(g, alive2))
                assert before == 1 + after
                checked += 1
            alive[x] = False
            if kind != STEP_LOOP:
                alive[y] = False
        assert r.size <= exact_matching_number(g)
    assert checked > 1000


@given(st.integers(0, 2**31 - 1), st.integers(1, 3), st.integers(6, 400), st.booleans())
def test_match_result_invariants(seed, q, n, aware):
    rs = np.random.default_rng(seed)
    a = rs.uniform(0.0, 5.0, (q, q))
    model = BlockModel(np.full(q, 1.0 / q), (a + a.T) / 2)
    g = sample_sbm(model, n, seed)
    r = (label_aware_karp_sipser(g, model, seed, record=True) if aware
         else karp_sipser(g, seed, record=True))
    _check_result(g, r)
    assert r.phase1_steps + r.phase2_steps == len(r.steps)
    assert r.isolated_initial == np.count_nonzero(g.degrees() == 0)
    kinds = r.steps[:, 0]
    assert np.all(kinds[:r.phase1_steps] == STEP_THIN)
    if r.phase2_steps:
        assert kinds[r.phase1_steps] in (STEP_EDGE, STEP_LOOP)
    for k in range(r.tuples.shape[0]):
        r.tuple_at(k).check()
    first = r.tuple_at(0)
    t0 = extract_tuple(g)
    assert np.array_equal(first.E, t0.E) and np.array_equal(first.T, t0.T)
    if n <= 120:
        assert r.size <= exact_matching_number(g)


@given(st.integers(0, 2**31 - 1))
def test_multigraph_runs_keep_invariants(seed):
    rs = np.random.default_rng(seed)
    labels = np.repeat([0, 1], [int(rs.integers(1, 30)), int(rs.integers(1, 30))])
    m = rs.integers(0, 15, (2, 2))
    m = np.triu(m) + np.triu(m, 1).T
    mg = sample_blocked_configuration(labels, m, seed)
    r = karp_sipser(mg, seed, record=True)
    assert r.isolated_initial + r.isolated_in_phase1 + r.isolated_in_phase2 == r.final_unmatched
    for k in range(r.tuples.shape[0]):
        r.tuple_at(k).check()


def test_tuple_process_is_markov():
    labels = np.repeat([0, 1], 6)
    m = np.array([[1, 2], [2, 1]])
    seeds = 100_000
    nxt = defaultdict(Counter)
    for s in range(seeds):
        mg = sample_blocked_configuration(labels, m, s)
        r = karp_sipser(mg, s + 10**7, max_steps=3, record=True)
        rows = r.tuples
        if rows.shape[0] < 3:
            continue
        key2 = tuple(rows[2].tolist())
        # Markov implies Y3 is independent of Y1 given Y2, so Y1 alone labels the history
        hist = tuple(rows[1].tolist())
        y3 = tuple(rows[3].tolist()) if rows.shape[0] > 3 else "end"
        nxt[key2][(hist, y3)] += 1
    # the step-2 tuple with the best-populated second history and a random next step
    best = None
    for key2, cnt in nxt.items():
        per_hist = Counter()
        per_out = Counter()
        for (hist, y3), c in cnt.items():
            per_hist[hist] += c
            per_out[y3] += c
        top = per_hist.most_common(2)
        spread = sum(1 for c in per_out.values() if c >= 100)
        if len(top) == 2 and top[1][1] >= 500 and spread >= 2:
            if best is None or top[1][1] > best[2]:
                best = (key2, [h for h, _ in top], top[1][1])
    assert best is not None
    key2, (h1, h2), _ = best
    outcomes = sorted({y for (h, y) in nxt[key2] if h in (h1, h2)}, key=str)
    table = np.array([[nxt[key2].get((h, y), 0) for y in outcomes] for h in (h1, h2)], float)
    # pool sparse outcome columns so every expected count is at least 5
    expected = table.sum(axis=0)[None, :] * table.sum(axis=1)[:, None] / table.sum()
    rare = expected.min(axis=0) < 5
    if rare.any():
        table = np.column_stack([table[:, ~rare], table[:, rare].sum(axis=1)])
    table = table[:, table.sum(axis=0) > 0]
    assert table.shape[1] >= 2
    p = chi2_contingency(table)[1]
    assert p > 0.001
