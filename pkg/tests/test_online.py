import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import exact_policy_value, mp_mastin_jaillet, mp_online_ratio, reference_simulate
from sbmatch.experiments import (EQUITABLE_ONLINE_RATES, FIG3_RATES, FIG4_RATES, FIG5_RATES,
                                 enumerate_policy_value)
from sbmatch.io import cached_dp, load_dp, save_dp
from sbmatch.model import BlockModel, numba_seed
from sbmatch.online import (DEGREEDY, GREEDY, SHORTSIGHTED, DPMemoryError, OnlineInstance,
                            average_degrees, brute, build_dp, degreedy_choose,
                            equitable_online_ratio, greedy_choose, greedy_fluid, mastin_jaillet,
                            min_equitable_online_ratio, paired_baseline, parse_policy,
                            shortsighted_boundary, shortsighted_fluid, shortsighted_objective,
                            simulate, simulate_many, switch)


def _fig5(n):
    return OnlineInstance.from_fractions(FIG5_RATES, [0.5, 0.5], n)


# ---------------------------------------------------------------- instances and policies

def test_instance_validation():
    with pytest.raises(ValueError):
        OnlineInstance([[1.0, -1.0]], [2, 2], 10)
    with pytest.raises(ValueError):
        OnlineInstance([[1.0, 1.0]], [0, 0], 10)
    with pytest.raises(ValueError):
        OnlineInstance([[1.0]], [2, 2], 10)
    with pytest.raises(ValueError):
        OnlineInstance([[20.0]], [2], 10)


def test_from_model_uses_right_fractions_per_arrival():
    m = BlockModel.bipartite_model([0.25, 0.25], [0.5], [[2.0], [3.0]])
    inst = OnlineInstance.from_model(m, 1000)
    assert inst.right_sizes.tolist() == [1000] and inst.q_left == 2
    with pytest.raises(ValueError):
        OnlineInstance.from_model(BlockModel.erdos_renyi(1.0), 10)


def test_parse_policy():
    assert parse_policy("GREEDY") == GREEDY
    p = parse_policy("switch:0.88:0")
    assert (p.kind, p.T, p.first, p.second) == ("switch", 0.88, 0, 1)
    for bad in ("fast", "switch:2:0", "switch:0.5"):
        with pytest.raises(ValueError):
            parse_policy(bad)


def test_policy_class_out_of_range():
    with pytest.raises(ValueError):
        simulate(_fig5(100), switch(0.5, 0, 2), 0)


def test_brute_requires_matching_table():
    t = build_dp(_fig5(10))
    with pytest.raises(ValueError):
        simulate(_fig5(12), brute(t), 0)


# ---------------------------------------------------------------- choice rules

def test_greedy_choose_singleton():
    assert greedy_choose([0, 1, 0], np.random.default_rng(0)) == (1, 0)


def test_greedy_choose_is_uniform_over_vertices(rng):
    trials = 100_000
    hits = sum(greedy_choose([10, 30], rng)[0] == 1 for _ in range(trials))
    sd = math.sqrt(trials * 0.75 * 0.25)
    assert abs(hits - 0.75 * trials) < 5 * sd


def test_degreedy_preferences(rng):
    assert all(degreedy_choose(FIG3_RATES, [0, 1], rng) == 1 for _ in range(100))
    assert all(degreedy_choose(FIG4_RATES, [0, 1], rng) == 0 for _ in range(100))
    assert degreedy_choose(FIG3_RATES, [0], rng) == 0
    assert np.allclose(average_degrees(FIG4_RATES), [99.5, 100.0])


def test_degreedy_tie_is_fair(rng):
    trials = 100_000
    hits = sum(degreedy_choose([[2.0, 2.0]], [0, 1], rng) for _ in range(trials))
    assert abs(hits - trials / 2) < 5 * math.sqrt(trials) / 2


def test_shortsighted_objective_cases():
    inst = OnlineInstance(np.zeros((2, 2)), [5, 5], 10)
    assert shortsighted_objective(inst, [5, 5], 0) == 1.0
    sym = OnlineInstance([[2.0, 1.0], [1.0, 2.0]], [5, 5], 10)
    assert shortsighted_objective(sym, [4, 4], 0) == pytest.approx(shortsighted_objective(sym, [4, 4], 1),
                                                                   abs=1e-15)
    with pytest.raises(ValueError):
        shortsighted_objective(sym, [0, 3], 0)


def test_shortsighted_objective_against_sampling(rng):
    inst = OnlineInstance([[3.0, 1.0], [0.5, 2.0]], [20, 20], 20)
    u = np.array([12, 7])
    want = shortsighted_objective(inst, u, 1)
    after = u - np.array([0, 1])
    draws = 1_000_000
    a = rng.integers(0, 2, draws)
    hits = np.zeros(draws, bool)
    for j in range(2):
        hits |= rng.binomial(after[j], inst.probs[a, j]) > 0
    freq = 1 - hits.mean()
    assert abs(freq - want) < 5 * math.sqrt(want * (1 - want) / draws)


def test_fig5_objective_flips_at_threshold():
    n = 100_000
    inst = _fig5(n)
    x0 = 2 * math.log(2) / 5
    for x, zero in ((x0 + 0.01, True), (x0 - 0.01, False)):
        u = [round(x * n), round(0.3 * n)]
        prefer0 = shortsighted_objective(inst, u, 0) < shortsighted_objective(inst, u, 1)
        assert prefer0 == zero


# ---------------------------------------------------------------- boundary

def test_boundary_constant_cases():
    assert shortsighted_boundary([[1, 2], [0, 3]]).case == 1
    assert shortsighted_boundary([[2, 1], [3, 0]]).case == 2
    assert shortsighted_boundary([[1, 1], [2, 2]]).case == "indifferent"
    with pytest.raises(ValueError):
        shortsighted_boundary([[1, 2, 3], [1, 2, 3]])


def test_fig5_boundary_is_vertical():
    b = shortsighted_boundary(FIG5_RATES)
    assert b.case == 3 and b.vertical
    assert b.x_threshold == pytest.approx(2 * math.log(2) / 5, abs=1e-15)
    assert b.prefers_zero(0.3, 0.1) and not b.prefers_zero(0.2, 0.1)


@given(st.lists(st.floats(0.1, 10), min_size=4, max_size=4),
       st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_boundary_swap_flips_side(vals, x, y):
    c = np.array(vals).reshape(2, 2)
    b = shortsighted_boundary(c)
    s = shortsighted_boundary(c[::-1, ::-1])
    if b.case == "indifferent":
        assert s.case == "indifferent"
        return
    if b.case in (1, 2):
        assert s.case == 3 - b.case
        return
    if abs(b.signed(x, y)) < 1e-9:
        return
    assert s.prefers_zero(y, x) == (not b.prefers_zero(x, y))


@given(st.lists(st.floats(0.1, 10), min_size=4, max_size=4), st.floats(0.05, 0.5), st.floats(0.05, 0.5))
def test_boundary_matches_large_n_objective(vals, x, y):
    c = np.array(vals).reshape(2, 2)
    b = shortsighted_boundary(c)
    if b.case == "indifferent":
        return
    n = 10**7
    u = [round(x * n), round(y * n)]
    inst = OnlineInstance(c, u, n)
    d = shortsighted_objective(inst, u, 1) - shortsighted_objective(inst, u, 0)
    if b.case in (1, 2):
        assert (d >= -1e-12) if b.case == 1 else (d <= 1e-12)
        return
    if abs(b.signed(x, y)) < 1e-3:
        return
    assert (d > 0) == b.prefers_zero(x, y)


# ---------------------------------------------------------------- simulation

def test_zero_rates_match_nothing():
    inst = OnlineInstance(np.zeros((2, 2)), [50, 50], 100)
    for p in (GREEDY, DEGREEDY, SHORTSIGHTED, switch(0.5, 0)):
        assert simulate(inst, p, 3).matched == 0


def test_same_seed_same_run():
    inst = _fig5(5000)
    a = simulate(inst, SHORTSIGHTED, 4, record=True)
    b = simulate(inst, SHORTSIGHTED, 4, record=True)
    assert a.matched == b.matched and np.array_equal(a.trajectory, b.trajectory)
    assert np.array_equal(simulate_many(inst, GREEDY, [1, 2]),
                          [simulate(inst, GREEDY, 1).matched, simulate(inst, GREEDY, 2).matched])


@pytest.mark.parametrize("policy", ["shortsighted", "degreedy", ("switch", 0.88, 0, 1), "brute"])
def test_simulator_replays_reference(policy):
    inst = OnlineInstance([[5.0, 1.0], [0.5, 2.0]], [30, 40], 60)
    table = build_dp(inst)
    pol = {"shortsighted": SHORTSIGHTED, "degreedy": DEGREEDY, "brute": brute(table)}.get(policy)
    if pol is None:
        pol = switch(0.88, 0, 1)
    for seed in range(30):
        r = simulate(inst, pol, seed, record=True)
        matched, nonempty, traj = reference_simulate(inst.probs, inst.right_sizes, inst.n, policy,
                                                     numba_seed(seed), average_degrees(inst.rates),
                                                     table.values)
        assert matched == nonempty == r.matched
        assert np.array_equal(traj, r.trajectory)


def _replay_availability(inst, seed, traj):
    """Adjacent-class sets seen by each arrival along a recorded path."""
    rs = np.random.RandomState(numba_seed(seed))
    p = inst.probs
    qa, qb = p.shape
    out = []
    for t in range(inst.n):
        a = min(int(rs.random_sample() * qa), qa - 1)
        vs = [rs.random_sample() for _ in range(qb)]
        rs.random_sample()
        u = traj[t]
        out.append([j for j in range(qb) if u[j] > 0 and vs[j] >= (1 - p[a, j]) ** u[j]])
    return out


@given(st.integers(0, 2**31 - 1), st.sampled_from(["greedy", "degreedy", "shortsighted", "switch:0.5:1"]))
def test_every_policy_matches_when_possible(seed, name):
    rs = np.random.default_rng(seed)
    q = int(rs.integers(2, 4))
    inst = OnlineInstance(rs.uniform(0, 4, (2, q)), rs.integers(1, 40, q), int(rs.integers(5, 80)))
    r = simulate(inst, parse_policy(name), seed, record=True)
    avail = _replay_availability(inst, seed, r.trajectory)
    steps = r.trajectory[:-1] - r.trajectory[1:]
    for t, av in enumerate(avail):
        if av:
            assert steps[t].sum() == 1 and int(np.argmax(steps[t])) in av
        else:
            assert steps[t].sum() == 0
    assert r.matched == sum(1 for av in avail if av)


# ---------------------------------------------------------------- DP

def test_dp_single_arrival():
    inst = OnlineInstance([[0.3]], [1], 1)
    assert build_dp(inst).initial_value == pytest.approx(0.3, abs=1e-15)


def test_dp_counting_bound():
    t = build_dp(OnlineInstance([[3.0, 1.0], [0.5, 2.0]], [15, 15], 30))
    l = np.arange(31).reshape(-1, 1, 1)
    tot = np.add.outer(np.arange(16), np.arange(16))[None]
    assert np.all(t.values <= np.minimum(l, tot) + 1e-12)


def _check_dp_invariants(t):
    V = t.values
    assert np.all(V[0] == 0)
    assert np.all(np.diff(V, axis=0) >= -1e-12)
    for ax in range(1, V.ndim):
        assert np.all(np.diff(V, axis=ax) >= -1e-12)
    sizes = np.indices(V.shape[1:]).sum(axis=0)
    assert np.all(V <= np.minimum(np.arange(t.n + 1).reshape((-1,) + (1,) * (V.ndim - 1)), sizes) + 1e-12)


@given(st.integers(0, 2**31 - 1))
def test_dp_invariants_and_optimality(seed):
    rs = np.random.default_rng(seed)
    qa, qb = int(rs.integers(1, 3)), int(rs.integers(1, 4))
    n = int(rs.integers(1, 7))
    inst = OnlineInstance(rs.uniform(0, n, (qa, qb)), rs.integers(0, 4, qb) + np.eye(qb, dtype=int)[0], n)
    t = build_dp(inst)
    _check_dp_invariants(t)
    assert abs(t.initial_value - float(exact_policy_value(inst.probs, inst.right_sizes, n))) < 1e-12


def test_dp_fig5_small_against_enumeration(frozen):
    inst = _fig5(12)
    assert inst.right_sizes.tolist() == [6, 6]
    t = build_dp(inst)
    _check_dp_invariants(t)
    assert abs(t.initial_value - frozen["dp_fig5_n12_optimal"]) < 1e-12
    assert abs(t.initial_value - enumerate_policy_value(inst, t)) < 1e-12


def test_dp_feasible_mask():
    t = build_dp(OnlineInstance([[1.0, 2.0]], [3, 3], 4))
    m = t.feasible_mask(2)
    assert m[3, 3] and m[1, 3] and not m[0, 3]


def test_dp_memory_cap():
    with pytest.raises(DPMemoryError):
        build_dp(_fig5(300), memory_cap=1024)


def test_dp_dump_round_trip(tmp_path, monkeypatch):
    inst = _fig5(20)
    t = build_dp(inst)
    back = load_dp(save_dp(t, tmp_path / "t.bin"))
    assert back.matches(inst) and np.array_equal(back.values, t.values)
    monkeypatch.setenv("SBMATCH_CACHE", str(tmp_path / "cache"))
    a = cached_dp(inst)
    assert len(list((tmp_path / "cache").iterdir())) == 1
    b = cached_dp(inst)
    assert np.array_equal(a.values, b.values)


# ---------------------------------------------------------------- closed forms

def test_mastin_jaillet_values(frozen):
    for c, v in frozen["mastin_jaillet"].items():
        assert abs(mastin_jaillet(float(c)) - v) < 1e-14
        assert abs(mastin_jaillet(float(c)) - mp_mastin_jaillet(float(c))) < 1e-14
    assert mastin_jaillet(1e-8) < 1e-7
    assert mastin_jaillet(1e6) > 1 - 1e-6
    with pytest.raises(ValueError):
        mastin_jaillet(0.0)


@pytest.mark.parametrize("c", [0.3, 1.0, 2.0, 3.0, 5.0, 10.0])
def test_online_ratio_against_oracle(c):
    assert abs(equitable_online_ratio(c) - mp_online_ratio(c)) < 1e-10


def test_online_ratio_limits_and_minimum(frozen):
    assert equitable_online_ratio(1e-4) > 1 - 1e-3
    assert equitable_online_ratio(1e4) > 1 - 1e-3
    c, r = min_equitable_online_ratio()
    assert abs(r - 0.837) < 0.001
    assert abs(c - frozen["min_online_ratio"]["c"]) < 1e-4
    assert abs(r - frozen["min_online_ratio"]["ratio"]) < 1e-9


def test_paired_baseline_fig4(frozen):
    inst = OnlineInstance.from_fractions(FIG4_RATES, [0.5, 0.5], 1000)
    assert abs(paired_baseline(inst, [0, 1]) - frozen["fig4_baseline"]) < 1e-12


# ---------------------------------------------------------------- fluids

def test_greedy_fluid_equitable_is_mastin_jaillet():
    inst = OnlineInstance.from_fractions(EQUITABLE_ONLINE_RATES, [0.5, 0.5], 10_000)
    assert abs(greedy_fluid(inst).matched_fraction - mastin_jaillet(1.0)) < 1e-6
    square = OnlineInstance([[2.5]], [10_000], 10_000)
    assert abs(greedy_fluid(square).matched_fraction - mastin_jaillet(2.5)) < 1e-6


def test_greedy_fluid_zero_rates():
    inst = OnlineInstance(np.zeros((2, 2)), [30, 70], 100)
    g = greedy_fluid(inst)
    assert np.allclose(g.remaining, [0.3, 0.7]) and g.matched_fraction == 0.0


def test_greedy_fluid_against_simulation():
    inst = OnlineInstance.from_fractions(FIG3_RATES, [0.5, 0.5], 100_000)
    sim = simulate_many(inst, GREEDY, range(5)).mean() / inst.n
    assert abs(sim - greedy_fluid(inst).matched_fraction) < 0.005


def test_shortsighted_fluid_fig5():
    inst = _fig5(1000)
    assert abs(shortsighted_fluid(inst) - 0.574946) < 1e-4
    assert abs(shortsighted_fluid(inst, switch(0.88, 0)) - 0.575597) < 1e-4


def test_shortsighted_fluid_zero_and_constant_cases():
    assert shortsighted_fluid(OnlineInstance([[1.0, 2.0], [0.0, 3.0]], [50, 50], 100)) > 0
    with pytest.raises(ValueError):
        shortsighted_fluid(OnlineInstance(np.zeros((2, 2)), [50, 50], 100))
    z = OnlineInstance(np.zeros((2, 2)), [50, 50], 100)
    assert shortsighted_fluid(z, switch(0.5, 0)) == 0.0
    with pytest.raises(ValueError):
        shortsighted_fluid(_fig5(100), GREEDY)


def test_shortsighted_fluid_against_simulation():
    inst = _fig5(100_000)
    sim = simulate_many(inst, SHORTSIGHTED, range(5)).mean() / inst.n
    assert abs(sim - shortsighted_fluid(inst)) < 0.003


# ---------------------------------------------------------------- equitable structure

def _next_match_prob(c, u, n):
    p = np.asarray(c) / n
    return float(np.mean(1 - np.prod((1 - p) ** np.asarray(u)[None, :], axis=1)))


@pytest.mark.parametrize("c", [EQUITABLE_ONLINE_RATES, [[2.0, 1.0, 0.5], [0.5, 2.0, 1.0], [1.0, 0.5, 2.0]]])
def test_balanced_state_maximizes_next_match(c):
    q = len(c)
    n = 20
    for total in range(1, 13):
        best, arg = -1.0, None
        for u in itertools.product(range(total + 1), repeat=q):
            if sum(u) != total:
                continue
            v = _next_match_prob(c, u, n)
            if v > best + 1e-15:
                best, arg = v, u
        assert max(arg) - min(arg) <= 1


def test_equitable_policies_agree():
    inst = OnlineInstance.from_fractions(EQUITABLE_ONLINE_RATES, [0.5, 0.5], 20_000)
    means = [simulate_many(inst, p, range(10)).mean() / inst.n for p in (GREEDY, DEGREEDY, SHORTSIGHTED)]
    assert max(means) - min(means) < 0.01
