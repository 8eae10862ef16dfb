"""
Fluid-limit machinery for Karp-Sipser on block models.

States are normalized description tuples ``(E, T, F)``: half-edge densities
``E[i, j]``, thin (degree-one) vertex densities ``T[i]`` and fat (degree at
least two) vertex densities ``F[i]``, all per vertex of the graph. Time is the
number of algorithm steps divided by ``n``.

Every quantity here is invariant under a common rescaling of ``(E, T, F)``, so
the same routines evaluate raw integer tuples; :func:`sbmatch.matcher.badness`
relies on that.

Matching sizes are reported both as *pairs per vertex* (a matching of ``a n``
edges has pair fraction ``a``) and as *matched-vertex fractions*, which are
twice as large.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import optimize, special

from .model import BlockModel

__all__ = [
    "DomainError",
    "FluidState",
    "LocalQuantities",
    "Trajectory",
    "degree_ratio",
    "solve_lambda",
    "truncated_poisson_pmf",
    "local_quantities",
    "phase1_rhs",
    "phase2_rhs",
    "initial_state",
    "integrate_phase1",
    "smallest_fixed_point",
    "equitable_prediction",
    "bipartite_er_prediction",
]

EPS_STOP = 1e-9
STALL_RATE = -1e-12
STALL_MASS = 1e-6
DOMAIN_TOL = 1e-6  # ratios this far below 2 are treated as 2 along ODE paths
MIN_DT = 1e-14


class DomainError(ValueError):
    """Raised when a fat-vertex degree ratio falls below two."""

    def __init__(self, message, klass=None, state=None):
        super().__init__(message)
        self.klass = klass
        self.state = state


# ---------------------------------------------------------------- scalar core

@njit(cache=True)
def _one_minus_x_over_expm1(x):
    # 1 - x / (e^x - 1), accurate for small x
    if x < 1e-3:
        x2 = x * x
        return x / 2.0 - x2 / 12.0 + x2 * x2 / 720.0 - x2 * x2 * x2 / 30240.0
    return 1.0 - x / math.expm1(x)


@njit(cache=True)
def _ratio(lam):
    if lam <= 0.0:
        return 2.0
    return lam / _one_minus_x_over_expm1(lam)


@njit(cache=True)
def _solve_lambda(r):
    """Root of ``ratio(lam) = r``; returns -1 when ``r`` is below the domain."""
    if r < 2.0 - 1e-9:
        return -1.0
    if r <= 2.0 + 1e-12:
        return 0.0
    if r - 2.0 < 1e-6:
        # ratio = 1 / (1/2 - lam/12 + O(lam^3))
        return 12.0 * (0.5 - 1.0 / r)
    lo = 0.0
    hi = r  # ratio(lam) > lam
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _ratio(mid) < r:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


@njit(cache=True)
def _lam_over_one_minus_exp(lam):
    # lam / (1 - e^-lam), equals 1 at lam = 0
    if lam < 1e-8:
        return 1.0 + lam / 2.0
    return lam / -math.expm1(-lam)


@njit(cache=True)
def _lam_over_expm1(lam):
    # lam / (e^lam - 1), equals 1 at lam = 0
    if lam < 1e-8:
        return 1.0 - lam / 2.0
    if lam > 700.0:
        return 0.0
    return lam / math.expm1(lam)


@njit(cache=True)
def _local(E, T, F, domain_tol):
    """Local quantities. Returns ``(h, omega, delta, theta, lam, bad_class)``.

    ``bad_class`` is -1 on success, otherwise the first class whose ratio is
    below the domain.
    """
    q = T.size
    h = np.zeros(q)
    for i in range(q):
        s = 0.0
        for j in range(q):
            s += E[i, j]
        h[i] = s
    omega = np.zeros((q, q))
    delta = np.zeros((q, q))
    theta = np.zeros(q)
    lam = np.zeros(q)
    tsum = 0.0
    for i in range(q):
        if h[i] > 0.0 and T[i] > 0.0:
            tsum += T[i]
    bad = -1
    for i in range(q):
        if h[i] <= 0.0:
            continue
        if tsum > 0.0 and T[i] > 0.0:
            for j in range(q):
                omega[i, j] = (T[i] / tsum) * (E[i, j] / h[i])
        if F[i] <= 0.0:
            continue
        fat = h[i] - T[i]
        r = fat / F[i]
        if r < 2.0 - domain_tol:
            if bad < 0:
                bad = i
            continue
        li = _solve_lambda(max(r, 2.0))
        lam[i] = li
        frac = fat / h[i]
        if frac < 0.0:
            frac = 0.0
        a = frac * _lam_over_one_minus_exp(li)
        for j in range(q):
            delta[i, j] = a * (E[i, j] / h[i])
        theta[i] = frac * _lam_over_expm1(li)
    return h, omega, delta, theta, lam, bad


@njit(cache=True)
def _phase1(E, T, F, omega, delta, theta, h):
    q = T.size
    dE = np.zeros((q, q))
    dT = np.zeros(q)
    dF = np.zeros(q)
    # col[i] = sum_l omega_li: rate at which the neighbor of the stripped vertex is in class i
    col = np.zeros(q)
    row = np.zeros(q)
    for i in range(q):
        for l in range(q):
            col[i] += omega[l, i]
            row[i] += omega[i, l]
    # hit[i] = sum_j sum_l omega_jl delta_li: class-i half-edges lost at second-order neighbors
    hit = np.zeros(q)
    for i in range(q):
        for l in range(q):
            hit[i] += col[l] * delta[l, i]
    for i in range(q):
        for j in range(q):
            dE[i, j] = -omega[i, j] - omega[j, i] - col[i] * delta[i, j] - col[j] * delta[j, i]
    for i in range(q):
        if h[i] <= 0.0:
            continue
        dF[i] = -col[i] * (h[i] - T[i]) / h[i] - hit[i] * theta[i]
        dT[i] = -row[i] - col[i] * T[i] / h[i] - hit[i] * (T[i] / h[i] - theta[i])
    return dE, dT, dF


@njit(cache=True)
def _phase2(E, T, F, delta, theta, h):
    q = T.size
    H = 0.0
    for i in range(q):
        H += h[i]
    dE = np.zeros((q, q))
    dT = np.zeros(q)
    dF = np.zeros(q)
    for i in range(q):
        for j in range(q):
            dE[i, j] = -2.0 * E[i, j] / H - (2.0 * h[i] / H) * delta[i, j] - (2.0 * h[j] / H) * delta[j, i]
    for i in range(q):
        s = 0.0
        for l in range(q):
            s += (2.0 * h[l] / H) * delta[l, i]
        dF[i] = -2.0 * h[i] / H - s * theta[i]
        dT[i] = s * theta[i]
    return dE, dT, dF


@njit(cache=True)
def _badness(E, T, F):
    """``sum_j theta_j delta_ij`` per class, from an integer or real tuple."""
    q = T.size
    h, omega, delta, theta, lam, bad = _local(E, T, F, 1e-9)
    b = np.zeros(q)
    for i in range(q):
        for j in range(q):
            b[i] += theta[j] * delta[i, j]
    return b


# ---------------------------------------------------------------- public types

@dataclass(frozen=True)
class FluidState:
    """Normalized description tuple at time ``t``."""

    E: np.ndarray
    T: np.ndarray
    F: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "E", np.asarray(self.E, dtype=float))
        object.__setattr__(self, "T", np.asarray(self.T, dtype=float).ravel())
        object.__setattr__(self, "F", np.asarray(self.F, dtype=float).ravel())

    @property
    def q(self) -> int:
        return self.T.size

    @property
    def h(self) -> np.ndarray:
        return self.E.sum(axis=1)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.E.ravel(), self.T, self.F])

    @classmethod
    def from_vector(cls, y, q: int, t: float = 0.0) -> "FluidState":
        y = np.asarray(y, dtype=float)
        return cls(y[:q * q].reshape(q, q).copy(), y[q * q:q * q + q].copy(), y[q * q + q:].copy(), t)

    @classmethod
    def from_tuple(cls, tup, n: float = 1.0) -> "FluidState":
        """Rescale an integer :class:`~sbmatch.model.StateTuple` by ``n``."""
        return cls(tup.E / n, tup.T / n, tup.F / n)


@dataclass(frozen=True)
class LocalQuantities:
    h: np.ndarray
    omega: np.ndarray
    delta: np.ndarray
    theta: np.ndarray
    lam: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Sampled Phase-1 fluid path.

    Attributes
    ----------
    t : ndarray
        Strictly increasing sample times.
    states : ndarray
        One packed state vector ``(E.ravel(), T, F)`` per sample.
    tau : float
        Stop time.
    reason : str
        ``"thin-exhausted"``, ``"domain-exit"`` or ``"step-limit"``.
    matched_pairs : float
        Predicted matching size per vertex, assuming the post-Phase-1 core
        has a near-perfect matching.
    matched_vertex_fraction : float
        Twice ``matched_pairs``.
    isolated_fraction : float
        Predicted fraction of vertices left isolated and unmatched by Phase 1.
    """

    q: int
    t: np.ndarray
    states: np.ndarray
    tau: float
    reason: str
    matched_pairs: float
    matched_vertex_fraction: float
    isolated_fraction: float

    @property
    def final(self) -> FluidState:
        return FluidState.from_vector(self.states[-1], self.q, float(self.t[-1]))

    def state(self, k: int) -> FluidState:
        return FluidState.from_vector(self.states[k], self.q, float(self.t[k]))

    def column_names(self) -> list[str]:
        q = self.q
        names = ["t"]
        names += [f"Ebar_{i}{j}" if q < 10 else f"Ebar_{i}_{j}" for i in range(q) for j in range(q)]
        names += [f"Tbar_{i}" for i in range(q)]
        names += [f"Fbar_{i}" for i in range(q)]
        return names


# ---------------------------------------------------------------- public ops

def degree_ratio(lam: float) -> float:
    """``lam (e^lam - 1) / (e^lam - 1 - lam)``: mean degree of a fat vertex."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    return float(_ratio(float(lam)))


def solve_lambda(r: float) -> float:
    """Parameter of the fat-vertex degree law with mean degree ``r``.

    Parameters
    ----------
    r : float
        Ratio of fat half-edges to fat vertices; at least 2.

    Returns
    -------
    float
        The unique ``lam >= 0`` with ``degree_ratio(lam) == r``.

    Raises
    ------
    DomainError
        If ``r < 2 - 1e-9``.
    """
    lam = _solve_lambda(float(r))
    if lam < 0 or not np.isfinite(r):
        raise DomainError(f"degree ratio {r!r} is below 2")
    return float(lam)


def truncated_poisson_pmf(lam: float, k: int) -> float:
    """Degree law of the fat vertex at the end of a uniformly chosen fat half-edge.

    ``lam^(k-1) / ((k-1)! (e^lam - 1))`` for ``k >= 2``: the size-biased
    version of a Poisson(``lam``) degree conditioned to be at least 2. Its
    ``k = 2`` mass is the ``theta`` factor ``lam / (e^lam - 1)`` and its mean
    excess degree ``k - 1`` is the ``delta`` factor ``lam / (1 - e^-lam)``.
    At ``lam = 0`` this is the point mass on ``k = 2``.
    """
    if k < 2:
        raise ValueError("fat vertices have degree at least 2")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if lam == 0:
        return 1.0 if k == 2 else 0.0
    log_p = (k - 1) * math.log(lam) - special.gammaln(k) - (lam + math.log(-math.expm1(-lam)))
    return float(math.exp(log_p))


def local_quantities(s: FluidState, domain_tol: float = DOMAIN_TOL) -> LocalQuantities:
    """``h``, ``omega``, ``delta``, ``theta`` and ``lam`` at a state.

    Raises
    ------
    DomainError
        If some class has ``(h - T) / F < 2 - domain_tol``.
    """
    h, om, de, th, lam, bad = _local(s.E, s.T, s.F, domain_tol)
    if bad >= 0:
        r = (h[bad] - s.T[bad]) / s.F[bad]
        raise DomainError(f"class {bad}: fat degree ratio {r:.6g} below 2", bad, s)
    return LocalQuantities(h, om, de, th, lam)


def phase1_rhs(s: FluidState) -> FluidState:
    """Expected change per step while thin vertices remain (time derivative)."""
    if not np.any((s.T > 0) & (s.h > 0)):
        raise ValueError("phase-1 drift needs thin vertices")
    lq = local_quantities(s)
    dE, dT, dF = _phase1(s.E, s.T, s.F, lq.omega, lq.delta, lq.theta, lq.h)
    return FluidState(dE, dT, dF, 1.0)


def phase2_rhs(s: FluidState) -> FluidState:
    """Expected change per uniform-edge step (time derivative)."""
    if not np.any(s.h > 0):
        raise ValueError("phase-2 drift needs half-edges")
    lq = local_quantities(s)
    dE, dT, dF = _phase2(s.E, s.T, s.F, lq.delta, lq.theta, lq.h)
    return FluidState(dE, dT, dF, 1.0)


def initial_state(model: BlockModel) -> FluidState:
    """Poisson initial condition of a block model."""
    S = model.fractions
    c = model.rates
    d = c @ S
    E = c * np.outer(S, S)
    T = S * d * np.exp(-d)
    F = S * -np.expm1(-d) - T
    return FluidState(E, T, np.maximum(F, 0.0))


@njit(cache=True)
def _rhs_vec(y, q):
    E = y[:q * q].reshape((q, q))
    T = y[q * q:q * q + q]
    F = y[q * q + q:]
    h, om, de, th, lam, bad = _local(E, T, F, DOMAIN_TOL)
    out = np.empty_like(y)
    if bad >= 0:
        return out, bad
    dE, dT, dF = _phase1(E, T, F, om, de, th, h)
    out[:q * q] = dE.ravel()
    out[q * q:q * q + q] = dT
    out[q * q + q:] = dF
    return out, -1


@njit(cache=True)
def _thin_ok(y, q):
    s = 0.0
    for i in range(q):
        v = y[q * q + i]
        if v < 0.0:
            return False
        s += v
    return s > 0.0


@njit(cache=True)
def _rk4(y0, q, dt, eps_stop, max_steps, record_every):
    """Fixed-step RK4; steps that push some thin density negative are halved.

    Returns ``(ts, ys, count, reason, bad_class)`` with reason 0 thin-exhausted,
    1 domain-exit, 2 step-limit.
    """
    cap = max_steps // record_every + 3
    ts = np.empty(cap)
    ys = np.empty((cap, y0.size))
    ts[0] = 0.0
    ys[0] = y0
    count = 1
    y = y0.copy()
    t = 0.0
    reason = 2
    bad = -1
    tsl = slice(q * q, q * q + q)
    if np.max(y[tsl]) < eps_stop:
        return ts[:1], ys[:1], 1, 0, -1
    for step in range(max_steps):
        h = dt
        while True:
            k1, b = _rhs_vec(y, q)
            if b >= 0:
                bad = b
                break
            y2 = y + 0.5 * h * k1
            ok = _thin_ok(y2, q)
            if ok:
                k2, b = _rhs_vec(y2, q)
                ok = b < 0
            if ok:
                y3 = y + 0.5 * h * k2
                ok = _thin_ok(y3, q)
            if ok:
                k3, b = _rhs_vec(y3, q)
                ok = b < 0
            if ok:
                y4 = y + h * k3
                ok = _thin_ok(y4, q)
            if ok:
                k4, b = _rhs_vec(y4, q)
                ok = b < 0
            if ok:
                yn = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                ok = np.min(yn[tsl]) >= 0.0
            if ok:
                break
            h *= 0.5
            if h < MIN_DT:
                break
        if bad >= 0:
            reason = 1
            break
        if h < MIN_DT:
            # the thin mass cannot decrease further without going negative
            reason = 0
            break
        y = yn
        t += h
        done = np.max(y[tsl]) < eps_stop
        if not done:
            k, b = _rhs_vec(y, q)
            if b < 0:
                rate = np.sum(k[tsl])
                if rate >= STALL_RATE and np.sum(y[tsl]) < STALL_MASS:
                    done = True
        if done or (step + 1) % record_every == 0:
            ts[count] = t
            ys[count] = y
            count += 1
        if done:
            reason = 0
            break
    if ts[count - 1] < t:
        ts[count] = t
        ys[count] = y
        count += 1
    return ts[:count], ys[:count], count, reason, bad


def integrate_phase1(model: BlockModel | FluidState, dt: float = 1e-4, eps_stop: float = EPS_STOP,
                     max_steps: int = 10_000_000, record_every: int = 1) -> Trajectory:
    """Integrate the Phase-1 system with RK4 until the thin mass is exhausted.

    Parameters
    ----------
    model : BlockModel or FluidState
        Model (Poisson initial condition) or an explicit starting state.
    dt : float
        Step size in ``(0, 1e-2]``. Steps are halved near the stop time.
    eps_stop : float
        Stop once every thin density is below this value.
    max_steps : int
        Step limit; reaching it yields ``reason == "step-limit"``.
    record_every : int
        Keep every ``record_every``-th state (the last one is always kept).

    Returns
    -------
    Trajectory

    Raises
    ------
    DomainError
        If the path leaves the domain of the degree law.
    """
    if not 0 < dt <= 1e-2:
        raise ValueError("dt must lie in (0, 1e-2]")
    s0 = initial_state(model) if isinstance(model, BlockModel) else model
    q = s0.q
    y0 = s0.as_vector()
    ts, ys, _, code, bad = _rk4(y0, q, float(dt), float(eps_stop), int(max_steps), int(record_every))
    reason = ("thin-exhausted", "domain-exit", "step-limit")[code]
    if code == 1:
        st = FluidState.from_vector(ys[-1], q, float(ts[-1]))
        raise DomainError(f"class {bad} left the degree-law domain at t={ts[-1]:.6g}", bad, st)
    if code == 2:
        raise RuntimeError(f"step limit {max_steps} reached at t={ts[-1]:.6g}")
    tau = float(ts[-1])
    F = ys[-1, q * q + q:]
    fat = float(F.sum())
    return Trajectory(q, ts, ys, tau, reason,
                      matched_pairs=tau + fat / 2.0,
                      matched_vertex_fraction=2.0 * tau + fat,
                      isolated_fraction=1.0 - 2.0 * tau - fat)


def smallest_fixed_point(c: float, tol: float = 1e-13, max_iter: int = 10_000) -> float:
    """Smallest solution of ``x = c exp(-c exp(-x))``.

    Iterates the map from 0, which increases monotonically to the answer. When
    that is slow (``c`` near ``e``) the last iterate brackets the root with a
    point just below the solution of ``x = c exp(-x)`` and Brent's method
    finishes the job.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    x = 0.0
    for _ in range(max_iter):
        nx = c * math.exp(-c * math.exp(-x))
        if abs(nx - x) < tol:
            return nx
        x = nx
    w = float(special.lambertw(c).real)
    if c <= math.e:
        return w

    def g(z):
        return c * math.exp(-c * math.exp(-z)) - z

    hi = w * (1 - 1e-9)
    if g(x) > 0 > g(hi):
        return optimize.brentq(g, x, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    raise RuntimeError(f"fixed-point iteration did not converge for c={c}")


def equitable_prediction(c: float) -> float:
    """Karp-Sipser matching size, in pairs per vertex, for an equitable model of mean degree ``c``.

    Returns ``1 - (x + c e^-x + x c e^-x) / (2c)`` with ``x`` from
    :func:`smallest_fixed_point`. The matched-vertex fraction is twice this.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    x = smallest_fixed_point(c)
    ex = math.exp(-x)
    return 1.0 - (x + c * ex + x * c * ex) / (2.0 * c)


def bipartite_er_prediction(k: float, c: float, dt: float = 1e-4) -> float:
    """Karp-Sipser matching size on a bipartite random graph, in pairs per vertex.

    Parameters
    ----------
    k : float
        Left part size over right part size.
    c : float
        Mean degree of a left vertex.

    Returns
    -------
    float
        Phase-1 pairs plus ``min`` of the two sides' remaining fat densities,
        normalized by the total vertex count.
    """
    if k <= 0 or c <= 0:
        raise ValueError("k and c must be positive")
    model = BlockModel.bipartite_model([k / (k + 1)], [1 / (k + 1)], [[c * (k + 1)]])
    traj = integrate_phase1(model, dt=dt)
    F = traj.final.F
    return traj.tau + float(min(F[0], F[1]))
