"""Acceptance gate: one PASS/FAIL line per criterion, listed in the terminal summary."""
import math
import time

import pytest

import test_criticality
import test_fluid
import test_matcher
import test_model
import test_online
from oracles import mp_equitable_pairs, mp_mastin_jaillet, mp_online_ratio
from sbmatch import fluid, online
from sbmatch.experiments import FIG5_RATES, run_suite


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.8g}"
    return str(x)


def _log(log, k, name, passed, value=None, target=None, tol=None, seconds=None):
    parts = [f"{'PASS' if passed else 'FAIL'}  [{k}] {name}"]
    if value is not None:
        parts.append(f"value={_fmt(value)}")
    if target is not None:
        parts.append(f"target={_fmt(target)}")
    if tol is not None:
        parts.append(f"tol={_fmt(tol)}")
    if seconds is not None:
        parts.append(f"time={seconds:.1f}s")
    log.append("  ".join(parts))
    print(log[-1])
    return passed


def _suite(log, k, name, **kwargs):
    report = run_suite(name, **kwargs)
    ok = True
    for c in report["criteria"]:
        value = report["timing"].get("measured_s") if c["name"] == "runtime_s" else c["value"]
        ok &= _log(log, k, f"{name}: {c['name']}", c["passed"], value, c["target"], c["tolerance"])
    return report, ok


def test_criterion_1_equitable_offline(acceptance_log, frozen):
    report, ok = _suite(acceptance_log, 1, "equitable")
    pred = fluid.equitable_prediction(3.0)
    want = mp_equitable_pairs(3.0)
    ok &= _log(acceptance_log, 1, "equitable_prediction(3) vs 50-digit oracle", abs(pred - want) < 1e-12,
               pred, want, 1e-12)
    assert ok


def test_criterion_2_subcriticality(acceptance_log):
    _, ok1 = _suite(acceptance_log, 2, "subcritical")
    _, ok2 = _suite(acceptance_log, 2, "critical-boundary")
    assert ok1 and ok2


def test_criterion_3_ks_failure(acceptance_log):
    _, ok = _suite(acceptance_log, 3, "failure")
    assert ok


def test_criterion_4_bipartite_er(acceptance_log):
    _, ok = _suite(acceptance_log, 4, "bipartite-er")
    assert ok


def test_criterion_5_online_equitable(acceptance_log, frozen):
    report, ok = _suite(acceptance_log, 5, "mj-ratio")
    mj = online.mastin_jaillet(1.0)
    ok &= _log(acceptance_log, 5, "1 - ln(2 - 1/e) vs 50-digit oracle", abs(mj - mp_mastin_jaillet(1.0)) < 1e-14,
               mj, mp_mastin_jaillet(1.0), 1e-14)
    c = report["argmin_c"]
    r = online.equitable_online_ratio(c)
    ok &= _log(acceptance_log, 5, "ratio at minimizer vs 50-digit oracle", abs(r - mp_online_ratio(c)) < 1e-10,
               r, mp_online_ratio(c), 1e-10)
    ok &= _log(acceptance_log, 5, "minimizer vs frozen oracle", abs(c - frozen["min_online_ratio"]["c"]) < 1e-4,
               c, frozen["min_online_ratio"]["c"], 1e-4)
    assert ok


def test_criterion_6_fig5(acceptance_log):
    _, ok = _suite(acceptance_log, 6, "fig5")
    b = online.shortsighted_boundary(FIG5_RATES)
    want = 2 * math.log(2) / 5
    ok &= _log(acceptance_log, 6, "threshold equals 2 ln2 / 5 to the last bit", b.x_threshold == want,
               b.x_threshold, want, 0.0)
    assert ok


def test_criterion_7_fig6(acceptance_log, frozen):
    report, ok = _suite(acceptance_log, 7, "fig6")
    t = online.build_dp(online.OnlineInstance.from_fractions(FIG5_RATES, [0.5, 0.5], 12))
    want = frozen["dp_fig5_n12_optimal"]
    ok &= _log(acceptance_log, 7, "DP value at n=12 vs frozen exact-fraction oracle",
               abs(t.initial_value - want) < 1e-12, t.initial_value, want, 1e-12)
    assert ok


def test_criterion_8_fig4(acceptance_log, frozen):
    report, ok = _suite(acceptance_log, 8, "fig4")
    want = frozen["fig4_baseline"]
    ok &= _log(acceptance_log, 8, "baseline vs frozen 50-digit evaluation", abs(report["baseline"] - want) < 1e-12,
               report["baseline"], want, 1e-12)
    assert ok


PROPERTY_SUITES = [
    ("Phase-1 safety vs exact oracle (500 graphs, n <= 60)", test_matcher.test_phase1_moves_are_safe, ()),
    ("phase-1 RHS vs single-step Monte Carlo (3 SE)", test_fluid.test_rhs_matches_single_step_monte_carlo, (1,)),
    ("phase-2 RHS vs single-step Monte Carlo (3 SE)", test_fluid.test_rhs_matches_single_step_monte_carlo, (2,)),
    ("RK4 error ratio under dt halving in (12, 20)", test_fluid.test_rk4_order_four, ()),
    ("lambda solver right inverse to 1e-9", test_fluid.test_lambda_is_right_inverse, ()),
    ("game parity N_2k = N_2k+1 to 1e-12", test_criticality.test_game_parity_and_normalization, ()),
    ("monotone iteration monotonicity", test_criticality.test_iterations_are_monotone, ()),
    ("DP table invariants and optimality", test_online.test_dp_invariants_and_optimality, ()),
    ("StateTuple invariants on sampled graphs", test_model.test_state_tuple_invariants_on_sampled_graphs, ()),
    ("StateTuple invariants along every matcher run", test_matcher.test_match_result_invariants, ()),
]


@pytest.mark.parametrize("name,fn,args", PROPERTY_SUITES, ids=[p[0] for p in PROPERTY_SUITES])
def test_criterion_9_property_suites(acceptance_log, name, fn, args):
    t0 = time.perf_counter()
    try:
        fn(*args)
    except BaseException:
        _log(acceptance_log, 9, name, False, seconds=time.perf_counter() - t0)
        raise
    _log(acceptance_log, 9, name, True, seconds=time.perf_counter() - t0)
