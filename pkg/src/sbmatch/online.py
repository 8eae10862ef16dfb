"""
Online bipartite matching on block models.

``n`` left vertices arrive one at a time, each of a uniformly random left class.
An arriving class-``a`` vertex is adjacent to each still-unmatched right vertex
of class ``j`` independently with probability ``rates[a, j] / n``. A policy
then picks one adjacent right vertex (every policy here matches whenever it
can) or none when nothing is adjacent.

Only per-class counts matter, so the simulator keeps the vector ``u`` of
unmatched right vertices per class and draws, for each class, whether any of
its ``u_j`` vertices is adjacent (and, for GREEDY, how many are).

Simulations consume the same random numbers per arrival whatever the policy,
so runs of two policies with one seed are coupled: identical arrival classes,
and identical adjacency whenever the states agree.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .fluid import smallest_fixed_point
from .model import BlockModel, class_sizes, numba_seed

__all__ = [
    "OnlineInstance",
    "OnlineState",
    "Policy",
    "GREEDY",
    "DEGREEDY",
    "SHORTSIGHTED",
    "brute",
    "switch",
    "parse_policy",
    "SimulationResult",
    "simulate",
    "simulate_many",
    "greedy_choose",
    "degreedy_choose",
    "average_degrees",
    "shortsighted_objective",
    "Boundary",
    "shortsighted_boundary",
    "DPTable",
    "DPMemoryError",
    "build_dp",
    "mastin_jaillet",
    "equitable_online_ratio",
    "min_equitable_online_ratio",
    "GreedyFluid",
    "greedy_fluid",
    "shortsighted_fluid",
    "paired_baseline",
    "RecrossingError",
]

DP_MEMORY_CAP = 2 * 1024**3
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class OnlineInstance:
    """Online problem: left-class-by-right-class rates, right class sizes, arrival count.

    Parameters
    ----------
    rates : ndarray
        ``q_left x q_right`` nonnegative matrix; edge probability ``rates / n``.
    right_sizes : sequence of int
        Initial unmatched right vertices per class.
    n : int
        Number of arrivals.
    """

    rates: np.ndarray
    right_sizes: np.ndarray
    n: int

    def __post_init__(self):
        r = np.array(self.rates, dtype=float, ndmin=2)
        s = np.array(self.right_sizes, dtype=np.int64).ravel()
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "right_sizes", s)
        if r.shape[1] != s.size:
            raise ValueError("one right size per rate column required")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("rates must be finite and nonnegative")
        if np.any(s < 0) or s.sum() <= 0 or self.n <= 0:
            raise ValueError("right sizes and n must be positive")
        if np.any(r > self.n):
            raise ValueError(f"rate above n={self.n}; edge probability above 1")

    @property
    def q_left(self) -> int:
        return self.rates.shape[0]

    @property
    def q_right(self) -> int:
        return self.rates.shape[1]

    @property
    def probs(self) -> np.ndarray:
        return self.rates / self.n

    def with_n(self, n: int) -> "OnlineInstance":
        """Same rates, right sizes rescaled to ``n`` arrivals."""
        frac = self.right_sizes / self.n
        return OnlineInstance(self.rates, class_sizes(frac / frac.sum(), round(n * frac.sum())), n)

    @classmethod
    def from_fractions(cls, rates, right_fractions, n: int) -> "OnlineInstance":
        """Right class ``j`` has ``right_fractions[j] * n`` vertices (largest-remainder rounding)."""
        fr = np.asarray(right_fractions, float)
        total = int(round(fr.sum() * n))
        return cls(rates, class_sizes(fr / fr.sum(), total), n)

    @classmethod
    def from_model(cls, model: BlockModel, n: int) -> "OnlineInstance":
        """Online instance of a bipartite block model with ``n`` arrivals.

        Left classes arrive uniformly; right class sizes are ``n`` times the
        right fractions divided by the total left fraction, and the rates are
        taken as given.
        """
        if not model.bipartite:
            raise ValueError("online instances need a bipartite model")
        left, right = list(model.left), list(model.right)
        rates = model.rates[np.ix_(left, right)]
        lf = model.fractions[left].sum()
        return cls.from_fractions(rates, model.fractions[right] / lf, n)


@dataclass(frozen=True)
class OnlineState:
    """Unmatched right vertices per class and arrivals still to come."""

    u: tuple
    r: int


# ---------------------------------------------------------------- policies

@dataclass(frozen=True)
class Policy:
    """Policy selector.

    ``kind`` is one of ``greedy``, ``degreedy``, ``shortsighted``, ``brute``
    and ``switch``. A switch policy prefers ``first`` while more than a
    fraction ``T`` of the arrivals is still to come, then ``second``; when
    the preferred class is unavailable it takes the other one.
    """

    kind: str
    T: float = 0.0
    first: int = 0
    second: int = 1
    table: "DPTable | None" = field(default=None, repr=False, compare=False)

    @property
    def name(self) -> str:
        if self.kind == "switch":
            return f"switch:{self.T:g}:{self.first}"
        return self.kind


GREEDY = Policy("greedy")
DEGREEDY = Policy("degreedy")
SHORTSIGHTED = Policy("shortsighted")
_CODES = {"greedy": 0, "degreedy": 1, "shortsighted": 2, "brute": 3, "switch": 4}


def brute(table: "DPTable") -> Policy:
    return Policy("brute", table=table)


def switch(T: float, first: int, second: int | None = None) -> Policy:
    if not 0.0 <= T <= 1.0:
        raise ValueError("switch fraction must lie in [0, 1]")
    if second is None:
        if first not in (0, 1):
            raise ValueError("second class required unless there are two classes")
        second = 1 - first
    return Policy("switch", float(T), int(first), int(second))


def parse_policy(text: str) -> Policy:
    """Parse ``greedy``, ``degreedy``, ``shortsighted``, ``brute`` or ``switch:<T>:<class>``."""
    text = text.strip().lower()
    if text in ("greedy", "degreedy", "shortsighted", "brute"):
        return Policy(text)
    if text.startswith("switch:"):
        parts = text.split(":")
        if len(parts) not in (3, 4):
            raise ValueError("switch policy is switch:<T>:<class>[:<class>]")
        second = int(parts[3]) if len(parts) == 4 else None
        return switch(float(parts[1]), int(parts[2]), second)
    raise ValueError(f"unknown policy {text!r}")


def average_degrees(rates) -> np.ndarray:
    """Arrival-weighted expected degree of each right class, ``sum_i c_ij / q_left``."""
    rates = np.asarray(rates, float)
    return rates.sum(axis=0) / rates.shape[0]


def greedy_choose(available_counts, rng) -> tuple[int, int]:
    """Uniform vertex among the available ones.

    Returns ``(class, index within that class's available vertices)``.
    """
    counts = np.asarray(available_counts, np.int64)
    total = int(counts.sum())
    if total <= 0:
        raise ValueError("nothing available")
    k = int(rng.integers(total))
    j = int(np.searchsorted(np.cumsum(counts), k, side="right"))
    return j, k - int(counts[:j].sum())


def degreedy_choose(rates, available_classes, rng) -> int:
    """Available class of lowest average degree, ties uniform."""
    avail = np.asarray(available_classes, np.int64)
    if avail.size == 0:
        raise ValueError("nothing available")
    deg = average_degrees(rates)[avail]
    best = np.flatnonzero(deg <= deg.min() + TIE_RTOL * max(1.0, abs(deg.min())))
    return int(avail[best[rng.integers(best.size)]])


def shortsighted_objective(inst: OnlineInstance, u, l: int) -> float:
    """Probability that the next arrival sees no adjacent vertex, after matching into class ``l``.

    ``sum_i (1 / q_left) prod_j (1 - p_ij)^(u_j - [j == l])``.
    """
    u = np.asarray(u, np.int64)
    if u[l] < 1:
        raise ValueError(f"class {l} has no unmatched vertex")
    return float(_no_match_prob(inst.probs, u, l))


@njit(cache=True)
def _no_match_prob(p, u, l):
    qa, qb = p.shape
    total = 0.0
    for i in range(qa):
        s = 0.0
        zero = False
        for j in range(qb):
            e = u[j] - (1 if j == l else 0)
            if e == 0:
                continue
            if p[i, j] >= 1.0:
                zero = True
                break
            s += e * math.log1p(-p[i, j])
        if not zero:
            total += math.exp(s)
    return total / qa


@njit(cache=True)
def _binom_inv(u, p, v):
    """Binomial(u, p) quantile at ``v`` by summing the pmf from zero."""
    if u == 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return u
    if u * p > 500.0:
        return np.random.binomial(u, p)
    q = 1.0 - p
    pk = q ** u
    cdf = pk
    k = 0
    while v >= cdf and k < u:
        pk *= (u - k) / (k + 1) * p / q
        k += 1
        cdf += pk
        if pk == 0.0 and cdf < v:
            # numerical tail exhausted
            break
    return k


@njit(cache=True)
def _pick_uniform(cand, nc):
    return cand[np.random.randint(nc)] if nc > 1 else cand[0]


@njit(cache=True)
def _simulate(p, right, n, code, T, first, second, V, strides, seed, record, avgdeg):
    np.random.seed(seed)
    qa, qb = p.shape
    u = right.copy()
    log_q = np.empty((qa, qb))
    for i in range(qa):
        for j in range(qb):
            log_q[i, j] = math.log1p(-p[i, j]) if p[i, j] < 1.0 else -np.inf
    traj = np.empty((n + 1 if record else 1, qb), np.int64)
    if record:
        traj[0] = u
    avail = np.zeros(qb, np.int64)
    counts = np.zeros(qb, np.int64)
    cand = np.empty(qb, np.int64)
    score = np.empty(qb)
    vs = np.empty(qb)
    matched = 0
    switch_step = n - T * n  # arrivals before the switch
    for t in range(n):
        a = min(int(np.random.random() * qa), qa - 1)
        for j in range(qb):
            vs[j] = np.random.random()
        w = np.random.random()
        nav = 0
        for j in range(qb):
            avail[j] = 0
            counts[j] = 0
            if u[j] == 0:
                continue
            if log_q[a, j] == -np.inf:
                z = 0.0
            else:
                z = math.exp(u[j] * log_q[a, j])
            if vs[j] >= z:
                avail[j] = 1
                nav += 1
        if nav > 0:
            choice = -1
            if code == 0:
                tot = 0
                for j in range(qb):
                    if avail[j]:
                        # vs[j] lies above P(count = 0), so its quantile is at least one
                        counts[j] = max(_binom_inv(u[j], p[a, j], vs[j]), 1)
                        tot += counts[j]
                k = min(int(w * tot), tot - 1)
                for j in range(qb):
                    if k < counts[j]:
                        choice = j
                        break
                    k -= counts[j]
            else:
                nc = 0
                if code == 4:
                    pref = first if t < switch_step else second
                    if avail[pref]:
                        choice = pref
                    else:
                        for j in range(qb):
                            if avail[j]:
                                cand[nc] = j
                                nc += 1
                else:
                    for j in range(qb):
                        if not avail[j]:
                            continue
                        if code == 1:
                            score[j] = avgdeg[j]
                        elif code == 2:
                            score[j] = _no_match_prob(p, u, j)
                        else:
                            idx = 0
                            for l in range(qb):
                                idx += (u[l] - (1 if l == j else 0)) * strides[l]
                            # maximize the value, i.e. minimize its negative
                            score[j] = -V[n - t - 1, idx]
                    best = np.inf
                    for j in range(qb):
                        if avail[j] and score[j] < best:
                            best = score[j]
                    tol = TIE_RTOL * max(1.0, abs(best))
                    for j in range(qb):
                        if avail[j] and score[j] <= best + tol:
                            cand[nc] = j
                            nc += 1
                if choice < 0:
                    choice = cand[min(int(w * nc), nc - 1)]
            u[choice] -= 1
            matched += 1
        if record:
            traj[t + 1] = u
    return matched, traj


@dataclass(frozen=True)
class SimulationResult:
    policy: str
    n: int
    matched: int
    trajectory: np.ndarray | None = None

    @property
    def matched_fraction(self) -> float:
        return self.matched / self.n


def _policy_args(inst: OnlineInstance, policy: Policy):
    code = _CODES[policy.kind]
    V = np.zeros((1, 1))
    strides = np.zeros(inst.q_right, np.int64)
    if policy.kind == "switch":
        for c in (policy.first, policy.second):
            if not 0 <= c < inst.q_right:
                raise ValueError(f"policy class {c} outside [0, {inst.q_right})")
    if policy.kind == "brute":
        table = policy.table
        if table is None:
            raise ValueError("brute policy needs a DP table")
        if not table.matches(inst):
            raise ValueError("DP table was built for a different instance")
        V = table.values.reshape(table.values.shape[0], -1)
        strides = table.strides
    return code, V, strides


def simulate(inst: OnlineInstance, policy: Policy, seed, record: bool = False) -> SimulationResult:
    """Run one online matching.

    Parameters
    ----------
    inst : OnlineInstance
    policy : Policy
    seed : int, SeedSequence or Generator
    record : bool
        Keep ``u`` after every arrival (``(n + 1, q_right)`` array).
    """
    code, V, strides = _policy_args(inst, policy)
    matched, traj = _simulate(inst.probs, inst.right_sizes, inst.n, code, policy.T, policy.first,
                              policy.second, V, strides, numba_seed(seed), record,
                              average_degrees(inst.rates))
    return SimulationResult(policy.name, inst.n, int(matched), traj if record else None)


def simulate_many(inst: OnlineInstance, policy: Policy, seeds) -> np.ndarray:
    """Matched counts for each seed."""
    code, V, strides = _policy_args(inst, policy)
    avgdeg = average_degrees(inst.rates)
    out = np.empty(len(seeds), np.int64)
    for k, s in enumerate(seeds):
        out[k] = _simulate(inst.probs, inst.right_sizes, inst.n, code, policy.T, policy.first,
                           policy.second, V, strides, numba_seed(s), False, avgdeg)[0]
    return out


# ---------------------------------------------------------------- boundary

@dataclass(frozen=True)
class Boundary:
    """Where SHORTSIGHTED prefers right class 0 in the large-``n`` limit.

    ``case`` 1 and 2 mean a constant preference for class 0 and class 1.
    For cases 3 and 4, class 0 is preferred on the side
    ``alpha * x + beta * y <= gamma`` (``side == "le"``) or ``>= gamma``
    (``side == "ge"``), with ``x, y`` the unmatched counts of classes 0 and
    1 divided by ``n``. Case ``"indifferent"`` means every state is a tie.
    """

    case: int | str
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    side: str = ""

    @property
    def vertical(self) -> bool:
        return self.case in (3, 4) and self.beta == 0.0

    @property
    def x_threshold(self) -> float | None:
        """For a vertical boundary, the ``x`` where the preference flips."""
        return self.gamma / self.alpha if self.vertical and self.alpha != 0 else None

    @property
    def slope(self) -> float | None:
        if self.case not in (3, 4) or self.beta == 0.0:
            return None
        return -self.alpha / self.beta

    def prefers_zero(self, x: float, y: float) -> bool:
        if self.case == 1:
            return True
        if self.case == 2:
            return False
        if self.case == "indifferent":
            raise ValueError("no preference anywhere")
        v = self.alpha * x + self.beta * y
        return v <= self.gamma if self.side == "le" else v >= self.gamma

    def signed(self, x: float, y: float) -> float:
        """Positive where class 0 is preferred, negative where class 1 is."""
        v = self.alpha * x + self.beta * y - self.gamma
        return -v if self.side == "le" else v

    def to_dict(self) -> dict:
        return {"case": self.case, "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
                "side": self.side, "x_threshold": self.x_threshold}


def shortsighted_boundary(rates) -> Boundary:
    """Large-``n`` SHORTSIGHTED preference region for two left and two right classes.

    Examples
    --------
    >>> b = shortsighted_boundary([[5, 1], [0, 1]])
    >>> b.case, b.side, round(b.x_threshold, 6)
    (3, 'le', 0.277259)
    """
    c = np.asarray(rates, float)
    if c.shape != (2, 2):
        raise ValueError("boundary analysis needs a 2x2 rate matrix")
    d0 = c[0, 0] - c[0, 1]
    d1 = c[1, 1] - c[1, 0]
    if d0 == 0 and d1 == 0:
        return Boundary("indifferent")
    if d0 <= 0 and d1 >= 0:
        return Boundary(1)
    if d0 >= 0 and d1 <= 0:
        return Boundary(2)
    alpha = c[1, 0] - c[0, 0]
    beta = c[1, 1] - c[0, 1]
    gamma = math.log(d1) - math.log(d0) if d0 > 0 else math.log(-d1) - math.log(-d0)
    # class 0 preferred where (i-1) ln((1-p00)/(1-p10)) + (j-1) ln((1-p01)/(1-p11)) <= ln(d1/d0);
    # those logs are -alpha/n and -beta/n to first order
    if d0 > 0:
        return Boundary(3, alpha, beta, gamma, "le")
    return Boundary(4, alpha, beta, gamma, "ge")


# ---------------------------------------------------------------- DP

class DPMemoryError(MemoryError):
    pass


@dataclass(frozen=True, eq=False)
class DPTable:
    """Optimal expected future matches ``V[l][u]`` for ``l`` arrivals left and state ``u``.

    ``values`` has shape ``(n + 1, R_0 + 1, ..., R_{q-1} + 1)``.
    """

    rates: np.ndarray
    right_sizes: np.ndarray
    n: int
    values: np.ndarray

    @property
    def strides(self) -> np.ndarray:
        dims = self.right_sizes + 1
        s = np.ones(dims.size, np.int64)
        for j in range(dims.size - 2, -1, -1):
            s[j] = s[j + 1] * dims[j + 1]
        return s

    def matches(self, inst: OnlineInstance) -> bool:
        return (self.n == inst.n and np.array_equal(self.right_sizes, inst.right_sizes)
                and np.array_equal(self.rates, inst.rates))

    def value(self, l: int, u) -> float:
        return float(self.values[(l,) + tuple(int(x) for x in u)])

    @property
    def initial_value(self) -> float:
        return self.value(self.n, self.right_sizes)

    def feasible_mask(self, l: int) -> np.ndarray:
        """States reachable with ``l`` arrivals left: at most ``n - l`` matches so far."""
        grids = np.meshgrid(*[np.arange(s + 1) for s in self.right_sizes], indexing="ij")
        used = sum(self.right_sizes[j] - g for j, g in enumerate(grids))
        return used <= self.n - l

    def best_classes(self, l: int, u, available) -> list[int]:
        """Maximizing classes among ``available`` with ``l`` arrivals left (current one included)."""
        vals = {}
        for j in available:
            v = list(u)
            v[j] -= 1
            vals[j] = self.value(l - 1, v)
        top = max(vals.values())
        return [j for j, v in vals.items() if v >= top - TIE_RTOL * max(1.0, abs(top))]


def _subset_probs(inst: OnlineInstance, grids):
    """``P[S]`` over the state grid: probability that the adjacent classes are exactly ``S``."""
    p = inst.probs
    q = inst.q_right
    out = {}
    for S in itertools.product((0, 1), repeat=q):
        acc = 0.0
        for a in range(inst.q_left):
            term = 1.0
            for j in range(q):
                z = (1.0 - p[a, j]) ** grids[j]
                term = term * ((1.0 - z) if S[j] else z)
            acc = acc + term
        out[S] = acc / inst.q_left
    return out


def build_dp(inst: OnlineInstance, memory_cap: int = DP_MEMORY_CAP) -> DPTable:
    """Optimal-policy value table by backward induction over arrivals left.

    ``V[l][u] = E_a[ sum_S P_a(S | u) best(S) ]`` where ``S`` is the set of
    right classes with an adjacent unmatched vertex, ``best(empty) =
    V[l-1][u]`` and ``best(S) = 1 + max_{j in S} V[l-1][u - e_j]``.

    Raises
    ------
    DPMemoryError
        If the table would exceed ``memory_cap`` bytes.
    """
    dims = tuple(int(s) + 1 for s in inst.right_sizes)
    cells = (inst.n + 1) * int(np.prod(dims))
    if cells * 8 > memory_cap:
        raise DPMemoryError(f"DP table needs {cells * 8} bytes, cap is {memory_cap}")
    q = inst.q_right
    grids = np.meshgrid(*[np.arange(d, dtype=float) for d in dims], indexing="ij")
    probs = _subset_probs(inst, grids)
    empty = tuple([0] * q)
    V = np.zeros((inst.n + 1,) + dims)
    for l in range(1, inst.n + 1):
        prev = V[l - 1]
        shifted = []
        for j in range(q):
            w = np.full(dims, -np.inf)
            src = [slice(None)] * q
            dst = [slice(None)] * q
            src[j] = slice(0, dims[j] - 1)
            dst[j] = slice(1, dims[j])
            w[tuple(dst)] = prev[tuple(src)]
            shifted.append(w)
        cur = probs[empty] * prev
        for S, P in probs.items():
            if S == empty:
                continue
            best = None
            for j in range(q):
                if S[j]:
                    best = shifted[j] if best is None else np.maximum(best, shifted[j])
            # P is zero wherever some j in S has u_j = 0, where best may be -inf
            cur = cur + P * (1.0 + np.where(P > 0, best, 0.0))
        V[l] = cur
    return DPTable(inst.rates.copy(), inst.right_sizes.copy(), inst.n, V)


# ---------------------------------------------------------------- closed forms and fluids

def mastin_jaillet(c: float) -> float:
    """Optimal online matched fraction on a bipartite random graph of mean degree ``c``.

    ``1 - ln(2 - e^-c) / c``.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    return 1.0 - math.log(2.0 - math.exp(-c)) / c


def equitable_online_ratio(c: float) -> float:
    """Best online over expected offline matching size on an equitable model of mean degree ``c``.

    ``(c - ln(2 - e^-c)) / (2c - x - c e^-x - x c e^-x)`` with ``x`` the smallest
    solution of ``x = c exp(-c exp(-x))``.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    x = smallest_fixed_point(c)
    ex = math.exp(-x)
    return (c - math.log(2.0 - math.exp(-c))) / (2.0 * c - x - c * ex - x * c * ex)


def min_equitable_online_ratio(lo: float = 0.1, hi: float = 20.0) -> tuple[float, float]:
    """Minimizer and minimum of :func:`equitable_online_ratio` over ``[lo, hi]``."""
    from scipy import optimize

    grid = np.linspace(lo, hi, 2000)
    vals = np.array([equitable_online_ratio(c) for c in grid])
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = optimize.minimize_scalar(equitable_online_ratio, bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-10})
    return float(res.x), float(res.fun)


def _rk4_path(f, y0, t0, t1, dt):
    y = np.array(y0, float)
    t = t0
    while t < t1 - 1e-15:
        h = min(dt, t1 - t)
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


@dataclass(frozen=True)
class GreedyFluid:
    remaining: np.ndarray
    matched_fraction: float


def greedy_fluid(inst: OnlineInstance, dt: float = 1e-4) -> GreedyFluid:
    """Large-``n`` GREEDY path.

    With ``x_j`` the unmatched class-``j`` count over ``n``,
    ``x_j' = -sum_i (1/q_left) (1 - exp(-sum_l c_il x_l)) c_ij x_j / sum_l c_il x_l``,
    integrated over ``t in [0, 1]``.

    Returns
    -------
    GreedyFluid
        ``remaining`` is ``x(1)``; ``matched_fraction`` is matches per arrival.
    """
    c = inst.rates
    qa = inst.q_left

    def f(x):
        lam = c @ x
        frac = np.where(lam > 0, -np.expm1(-lam) / np.where(lam > 0, lam, 1.0), 0.0)
        return -(frac @ (c * x[None, :])) / qa

    x0 = inst.right_sizes / inst.n
    x1 = _rk4_path(f, x0, 0.0, 1.0, dt)
    return GreedyFluid(x1, float(x0.sum() - x1.sum()))


class RecrossingError(RuntimeError):
    """The fluid path crossed the SHORTSIGHTED boundary a second time."""


def _prefer_system(c, pref):
    other = 1 - pref
    qa = c.shape[0]

    def f(y):
        miss_p = np.exp(-c[:, pref] * y[pref])  # preferred class not adjacent
        miss_o = np.exp(-c[:, other] * y[other])
        d = np.empty(2)
        d[pref] = -np.sum(1.0 - miss_p) / qa
        d[other] = -np.sum(miss_p * (1.0 - miss_o)) / qa
        return d

    return f


def shortsighted_fluid(inst: OnlineInstance, policy: Policy = SHORTSIGHTED, dt: float = 1e-4) -> float:
    """Large-``n`` matched fraction of SHORTSIGHTED or a switch policy on a 2x2 instance.

    The path follows the "prefer class ``c``" system while in that class's
    preference region (or before the switch time ``1 - T``) and then the
    other one until ``t = 1``. Boundary crossings are located by bisection on
    the RK4 sub-step.

    Raises
    ------
    RecrossingError
        If a SHORTSIGHTED path re-enters the region it left.
    """
    c = inst.rates
    if c.shape != (2, 2):
        raise ValueError("needs two left and two right classes")
    y = inst.right_sizes / inst.n
    start = float(y.sum())
    if policy.kind == "switch":
        t_sw = 1.0 - policy.T
        y = _rk4_path(_prefer_system(c, policy.first), y, 0.0, t_sw, dt)
        y = _rk4_path(_prefer_system(c, policy.second), y, t_sw, 1.0, dt)
        return start - float(y.sum())
    if policy.kind != "shortsighted":
        raise ValueError("only shortsighted and switch policies have this fluid analysis")
    b = shortsighted_boundary(c)
    if b.case == "indifferent":
        raise ValueError("SHORTSIGHTED is indifferent everywhere on this instance")
    if b.case in (1, 2):
        return start - float(_rk4_path(_prefer_system(c, 0 if b.case == 1 else 1), y, 0.0, 1.0, dt).sum())

    def region(z):
        # ties go to class 0, matching the closed inequality
        return 0 if b.signed(z[0], z[1]) >= 0 else 1

    def step(f, z, h):
        k1 = f(z)
        k2 = f(z + 0.5 * h * k1)
        k3 = f(z + 0.5 * h * k2)
        k4 = f(z + h * k3)
        return z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    cur = region(y)
    switched = False
    t = 0.0
    f = _prefer_system(c, cur)
    while t < 1.0 - 1e-15:
        h = min(dt, 1.0 - t)
        nxt = step(f, y, h)
        if region(nxt) != cur:
            if switched:
                raise RecrossingError(f"path re-crossed the boundary at t={t:.6f}")
            lo, hi = 0.0, h
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if region(step(f, y, mid)) == cur:
                    lo = mid
                else:
                    hi = mid
            y = step(f, y, hi)
            t += hi
            cur = 1 - cur
            f = _prefer_system(c, cur)
            switched = True
            continue
        y = nxt
        t += h
    return start - float(y.sum())


def paired_baseline(inst: OnlineInstance, pairing) -> float:
    """Matched fraction when left class ``i`` only ever matches into right class ``pairing[i]``.

    Each pair is an independent square bipartite random graph with ``n / q_left``
    vertices per side, so it contributes ``mastin_jaillet(c_{i, pairing[i]} / q_left) / q_left``.
    """
    qa = inst.q_left
    total = 0.0
    for i, j in enumerate(pairing):
        cc = inst.rates[i, j] / qa
        total += mastin_jaillet(cc) / qa if cc > 0 else 0.0
    return total
