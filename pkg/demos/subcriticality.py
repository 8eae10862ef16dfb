"""
When is Phase 2 harmless?
=========================

The fixed-point system decides whether Karp-Sipser stays near-optimal. Scan
the scalar case through ``c = e``, then look at the two-class family where
every class has expected degree above ``e`` yet the model is subcritical,
and finally watch the finite-depth removal game converge to the same answer.
"""
import math

import numpy as np

from sbmatch import criticality
from sbmatch.experiments import SUBCRITICAL_C12
from sbmatch.model import BlockModel

print("  c     verdict         gap")
for c in (2.0, 2.6, math.e, 2.8, 3.5):
    rep = criticality.is_subcritical(np.array([[c]]), max_iter=200_000)
    print(f"{c:5.3f}  {rep.verdict:14s}  {rep.gap:.3e}")

print("\n c11    verdict")
for c11 in (5.6, 33.5, 33.55, 34.0):
    m = BlockModel([0.5, 0.5], [[c11, SUBCRITICAL_C12], [SUBCRITICAL_C12, 0.0]])
    print(f"{c11:5.2f}  {criticality.is_subcritical(m).verdict}")

# draw probability after d moves; it vanishes exactly when the fixed point is unique
print("\n  d    D_d(c=2.5)   D_d(c=3.2)")
for d in (10, 100, 200, 1000, 2000):
    a = criticality.game_probabilities(np.array([[2.5]]), d)[2][0]
    b = criticality.game_probabilities(np.array([[3.2]]), d)[2][0]
    print(f"{d:5d}  {a:.3e}    {b:.6f}")
