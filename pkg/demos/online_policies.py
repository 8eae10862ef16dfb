"""
Online matching policies on two-class bipartite models
======================================================

Compare GREEDY, DEGREEDY, SHORTSIGHTED and the optimal DP policy. The
instances are the ones where the simple policies part ways: a class with
a far higher degree, a pair of classes that ought to be kept apart, and
the instance where SHORTSIGHTED switches its preference halfway through.
"""
import numpy as np

from sbmatch import online
from sbmatch.experiments import FIG3_RATES, FIG4_RATES, FIG5_RATES

n = 100_000
seeds = range(10)


def mean_fraction(inst, policy):
    return online.simulate_many(inst, policy, seeds).mean() / inst.n


for name, rates in (("fig3", FIG3_RATES), ("fig4", FIG4_RATES), ("fig5", FIG5_RATES)):
    inst = online.OnlineInstance.from_fractions(rates, [0.5, 0.5], n)
    row = [mean_fraction(inst, p) for p in (online.GREEDY, online.DEGREEDY, online.SHORTSIGHTED)]
    print(f"{name}: greedy {row[0]:.4f}  degreedy {row[1]:.4f}  shortsighted {row[2]:.4f}"
          f"  greedy fluid {online.greedy_fluid(inst).matched_fraction:.4f}")

inst = online.OnlineInstance.from_fractions(FIG5_RATES, [0.5, 0.5], n)
b = online.shortsighted_boundary(FIG5_RATES)
print(f"\nshortsighted prefers R0 while u0/n >= {b.x_threshold:.6f}")
print(f"shortsighted fluid {online.shortsighted_fluid(inst):.6f}")
for T in (0.8, 0.85, 0.88, 0.9):
    print(f"switch T={T:.2f}    {online.shortsighted_fluid(inst, online.switch(T, 0)):.6f}")

# the optimal policy needs the full value table, so keep n small
small = online.OnlineInstance.from_fractions(FIG5_RATES, [0.5, 0.5], 300)
table = online.build_dp(small)
br = online.simulate_many(small, online.brute(table), range(2000)) / small.n
ss = online.simulate_many(small, online.SHORTSIGHTED, range(2000)) / small.n
d = br - ss
print(f"\nn=300: DP value {table.initial_value / small.n:.4f}, brute {br.mean():.4f}, "
      f"shortsighted {ss.mean():.4f}, paired z {d.mean() / (d.std(ddof=1) / np.sqrt(d.size)):.1f}")

c, r = online.min_equitable_online_ratio()
print(f"\nworst equitable online/offline ratio {r:.4f} at c = {c:.3f}")
