"""
Subcriticality of Karp-Sipser via fixed points of a monotone map.

For offspring means ``m[i, j] = c_ij S_j`` the local branching process has the
Poisson generating function ``G(x)_i = exp(-sum_j m_ij (1 - x_j))``. Phase 1
leaves an ``o(n)`` core exactly when

    K(x)_i = exp(-sum_j m_ij exp(-sum_k m_jk x_k))

has a single fixed point in ``[0, 1]^q``. ``K`` is monotone, so iterating it from
the all-zeros and the all-ones vectors converges to its least and greatest
fixed points; the model is subcritical when the two agree.

The two-move game map ``F(x) = 1 - G(1 - G(x))`` is conjugate to ``K``:
``K(x) = 1 - F(1 - x)``. Hence the least fixed point of ``F`` is one minus the
greatest fixed point of ``K`` and vice versa.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from .model import BlockModel

__all__ = [
    "FixedPointReport",
    "NonConvergence",
    "offspring_means",
    "evaluate_G",
    "ks_fixed_point_map",
    "game_map",
    "min_fixed_point",
    "max_fixed_point",
    "is_subcritical",
    "sufficient_condition",
    "game_probabilities",
    "VERDICT_TOL",
]

VERDICT_TOL = 1e-9
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10**6


class NonConvergence(RuntimeError):
    def __init__(self, message, x=None, iterations=0):
        super().__init__(message)
        self.x = x
        self.iterations = iterations


def offspring_means(model: BlockModel) -> np.ndarray:
    """``m[i, j] = c_ij S_j``."""
    return model.offspring_means()


def evaluate_G(m, x) -> np.ndarray:
    """Poisson offspring generating function ``exp(-m @ (1 - x))``."""
    m = np.asarray(m, float)
    return np.exp(-m @ (1.0 - np.asarray(x, float)))


def ks_fixed_point_map(m, x) -> np.ndarray:
    """``exp(-m @ exp(-m @ x))``."""
    m = np.asarray(m, float)
    return np.exp(-m @ np.exp(-m @ np.asarray(x, float)))


def game_map(G: Callable, x) -> np.ndarray:
    """``1 - G(1 - G(x))`` for a generating function ``G``."""
    return 1.0 - G(1.0 - G(np.asarray(x, float)))


@njit(cache=True)
def _iterate_ks(m, x0, tol, max_iter, increasing):
    """Monotone iteration of the Karp-Sipser map.

    Stops once the step is below ``tol`` and the geometric-tail estimate of the
    remaining distance, ``step * rho / (1 - rho)`` with ``rho`` the latest
    contraction ratio, is below ``tol`` too. Returns ``(x, iters, converged,
    monotone)``.
    """
    q = x0.size
    x = x0.copy()
    prev = np.inf
    monotone = True
    for it in range(1, max_iter + 1):
        y = np.empty(q)
        inner = np.empty(q)
        for j in range(q):
            s = 0.0
            for k in range(q):
                s += m[j, k] * x[k]
            inner[j] = math.exp(-s)
        step = 0.0
        for i in range(q):
            s = 0.0
            for j in range(q):
                s += m[i, j] * inner[j]
            y[i] = math.exp(-s)
            d = y[i] - x[i]
            if (increasing and d < -1e-15) or (not increasing and d > 1e-15):
                monotone = False
            step = max(step, abs(d))
        x = y
        if step < tol:
            rho = step / prev if prev > 0 else 0.0
            if step == 0.0 or (rho < 1.0 and step * rho / (1.0 - rho) < tol):
                return x, it, True, monotone
        prev = step
    return x, max_iter, False, monotone


def _iterate(f: Callable, x0: np.ndarray, tol: float, max_iter: int, increasing: bool):
    x = np.array(x0, float)
    prev = np.inf
    for it in range(1, max_iter + 1):
        y = np.asarray(f(x), float)
        d = y - x
        if (increasing and np.any(d < -1e-15)) or (not increasing and np.any(d > 1e-15)):
            raise AssertionError(f"map is not monotone along the iteration (step {it})")
        step = float(np.max(np.abs(d))) if d.size else 0.0
        x = y
        if step < tol:
            rho = step / prev if prev > 0 else 0.0
            if step == 0.0 or (rho < 1.0 and step * rho / (1.0 - rho) < tol):
                return x, it
        prev = step
    raise NonConvergence(f"no convergence in {max_iter} iterations", x, max_iter)


def min_fixed_point(f: Callable, q: int, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Least fixed point of a monotone self-map of ``[0, 1]^q``, iterated from zeros.

    Raises
    ------
    NonConvergence
        If ``max_iter`` iterations do not reach ``tol``.
    AssertionError
        If some iterate decreases, i.e. ``f`` is not monotone.
    """
    return _iterate(f, np.zeros(q), tol, max_iter, True)[0]


def max_fixed_point(f: Callable, q: int, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Greatest fixed point of a monotone self-map of ``[0, 1]^q``, iterated from ones."""
    return _iterate(f, np.ones(q), tol, max_iter, False)[0]


@dataclass(frozen=True)
class FixedPointReport:
    """Least and greatest fixed points of the Karp-Sipser map and the verdict.

    ``verdict`` is ``"subcritical"`` when the gap is at most ``VERDICT_TOL``,
    ``"supercritical"`` when it is larger, and ``"indeterminate"`` when either
    iteration hit ``max_iter``.
    """

    min_fp: np.ndarray
    max_fp: np.ndarray
    iterations: int
    verdict: str
    gap: float
    tol: float

    @property
    def subcritical(self) -> bool:
        return self.verdict == "subcritical"

    def to_dict(self) -> dict:
        return {"min_fp": self.min_fp.tolist(), "max_fp": self.max_fp.tolist(),
                "iterations": self.iterations, "verdict": self.verdict,
                "gap": self.gap, "tol": self.tol}


def is_subcritical(model: BlockModel | np.ndarray, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER) -> FixedPointReport:
    """Run both monotone iterations of the Karp-Sipser map.

    Parameters
    ----------
    model : BlockModel or ndarray
        A model, or offspring means directly.
    tol : float
        Iteration tolerance (sup norm).

    Examples
    --------
    >>> import numpy as np
    >>> is_subcritical(np.array([[2.5]])).verdict
    'subcritical'
    >>> is_subcritical(np.array([[3.2]])).verdict
    'supercritical'
    """
    m = offspring_means(model) if isinstance(model, BlockModel) else np.asarray(model, float)
    q = m.shape[0]
    lo, it_lo, ok_lo, mono_lo = _iterate_ks(m, np.zeros(q), tol, max_iter, True)
    hi, it_hi, ok_hi, mono_hi = _iterate_ks(m, np.ones(q), tol, max_iter, False)
    if not (mono_lo and mono_hi):
        raise AssertionError("monotone iteration went the wrong way")
    gap = float(np.max(hi - lo)) if q else 0.0
    if not (ok_lo and ok_hi):
        verdict = "indeterminate"
    else:
        verdict = "subcritical" if gap <= VERDICT_TOL else "supercritical"
    return FixedPointReport(lo, hi, int(it_lo + it_hi), verdict, gap, tol)


def sufficient_condition(model: BlockModel) -> bool:
    """True iff every class has expected degree below ``e``."""
    return bool(np.all(model.expected_degrees() < math.e))


def game_probabilities(m, d: int, history: bool = False, q: int | None = None):
    """Win, loss and draw probabilities of the depth-``d`` removal game.

    Parameters
    ----------
    m : ndarray or callable
        Offspring means (Poisson offspring) or a generating function ``G``.
    d : int
        Depth.
    history : bool
        Return arrays with one row per depth ``0..d`` instead of the last row.
    q : int, optional
        Type count; required when ``m`` is a generating function.

    Returns
    -------
    N, P, D : ndarray
        Per root type: the player to move wins, loses, or neither can force
        a result within ``d`` moves.
    """
    if d < 0:
        raise ValueError("depth must be nonnegative")
    if callable(m):
        if q is None:
            raise ValueError("q is required with a generating function")
        G = m
    else:
        mm = np.asarray(m, float)
        q = mm.shape[0]

        def G(x):
            return evaluate_G(mm, x)
    N = np.zeros(q)
    P = np.zeros(q)
    Ns, Ps = [N], [P]
    for _ in range(d):
        N, P = 1.0 - G(1.0 - P), G(N)
        if history:
            Ns.append(N)
            Ps.append(P)
    if history:
        Na, Pa = np.array(Ns), np.array(Ps)
        return Na, Pa, 1.0 - Na - Pa
    return N, P, 1.0 - N - P
