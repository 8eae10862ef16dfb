"""
Stochastic block models, blocked configuration models and the description tuple.

Vertices of a sampled graph are stored contiguously by class: class 0 occupies
ids ``0 .. n_0 - 1``, class 1 the next ``n_1`` ids, and so on. Edge rates are
dimensionless: an edge between a class-``i`` and a class-``j`` vertex is present
with probability ``rates[i, j] / n``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

__all__ = [
    "ModelError",
    "BlockModel",
    "Multigraph",
    "Graph",
    "StateTuple",
    "validate_model",
    "load_model",
    "dump_model",
    "class_sizes",
    "make_rng",
    "numba_seed",
    "sample_sbm",
    "sample_blocked_configuration",
    "is_simple",
    "extract_tuple",
    "edge_counts",
]

FRACTION_TOL = 1e-12


class ModelError(ValueError):
    """Raised for invalid model descriptions or infeasible sampling requests."""


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator for an integer seed, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def numba_seed(seed) -> int:
    """Derive the 31-bit seed handed to compiled kernels."""
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(0, 2**31 - 1))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return int(ss.generate_state(1, dtype=np.uint32)[0] & 0x7FFFFFFF)


@dataclass(frozen=True)
class BlockModel:
    """A stochastic block model.

    Parameters
    ----------
    fractions : ndarray
        Class-size fractions, positive and summing to one.
    rates : ndarray
        Symmetric nonnegative ``q x q`` matrix of edge rates.
    names : tuple of str
        Class names, used by the JSON format.
    left, right : tuple of int, optional
        Bipartite structure. When given, rates within each side are zero.
    """

    fractions: np.ndarray
    rates: np.ndarray
    names: tuple = ()
    left: tuple | None = None
    right: tuple | None = None

    def __post_init__(self):
        fr = np.array(self.fractions, dtype=float).ravel()
        rt = np.array(self.rates, dtype=float)
        object.__setattr__(self, "fractions", fr)
        object.__setattr__(self, "rates", rt)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"C{i}" for i in range(fr.size)))
        fr.setflags(write=False)
        rt.setflags(write=False)
        _check_model(self)

    @property
    def q(self) -> int:
        return self.fractions.size

    @property
    def bipartite(self) -> bool:
        return self.left is not None

    def expected_degrees(self) -> np.ndarray:
        """Expected degree of a vertex in each class, ``sum_j c_ij S_j``."""
        return self.rates @ self.fractions

    def offspring_means(self) -> np.ndarray:
        """``m_ij = c_ij S_j``, the Poisson means of the local branching process."""
        return self.rates * self.fractions[None, :]

    def is_equitable(self, tol: float = 1e-9) -> bool:
        d = self.expected_degrees()
        return bool(np.ptp(d) <= tol * max(1.0, abs(d).max()))

    @classmethod
    def erdos_renyi(cls, c: float) -> "BlockModel":
        return cls([1.0], [[c]])

    @classmethod
    def bipartite_model(cls, left_fractions, right_fractions, cross_rates, names=None):
        """Build a bipartite model from the left-by-right block of rates."""
        lf = np.asarray(left_fractions, float)
        rf = np.asarray(right_fractions, float)
        cr = np.asarray(cross_rates, float).reshape(lf.size, rf.size)
        ql, qr = lf.size, rf.size
        rates = np.zeros((ql + qr, ql + qr))
        rates[:ql, ql:] = cr
        rates[ql:, :ql] = cr.T
        if names is None:
            names = tuple(f"L{i}" for i in range(ql)) + tuple(f"R{j}" for j in range(qr))
        return cls(np.concatenate([lf, rf]), rates, tuple(names),
                   tuple(range(ql)), tuple(range(ql, ql + qr)))


def _check_model(m: BlockModel) -> None:
    fr, rt = m.fractions, m.rates
    q = fr.size
    if q == 0:
        raise ModelError("model needs at least one class")
    if rt.shape != (q, q):
        raise ModelError(f"rates must be {q}x{q}, got {rt.shape}")
    if not np.all(np.isfinite(rt)) or not np.all(np.isfinite(fr)):
        raise ModelError("non-finite entries")
    if np.any(fr <= 0):
        raise ModelError("class fractions must be positive")
    if abs(fr.sum() - 1.0) > FRACTION_TOL:
        raise ModelError(f"class fractions sum to {fr.sum()!r}, not 1")
    if np.any(rt < 0):
        raise ModelError("rates must be nonnegative")
    if not np.array_equal(rt, rt.T):
        raise ModelError("rates matrix is not symmetric")
    if len(m.names) != q:
        raise ModelError("one name per class required")
    if (m.left is None) != (m.right is None):
        raise ModelError("bipartite structure needs both sides")
    if m.left is not None:
        left, right = list(m.left), list(m.right)
        if sorted(left + right) != list(range(q)):
            raise ModelError("bipartite sides must partition the classes")
        for side in (left, right):
            if np.any(rt[np.ix_(side, side)] != 0):
                raise ModelError("bipartite model has nonzero rates within one side")


def validate_model(raw: dict) -> BlockModel:
    """Validate a parsed model description (the JSON format) into a BlockModel.

    The description looks like::

        {"classes": [{"name": "A", "fraction": 0.5}, ...],
         "rates": [[...], ...],
         "bipartite": {"left": ["A"], "right": ["B"]}}

    where ``bipartite`` is optional.
    """
    try:
        classes = raw["classes"]
        rates = raw["rates"]
    except (KeyError, TypeError) as exc:
        raise ModelError(f"missing field {exc}") from None
    names = tuple(str(c["name"]) for c in classes)
    if len(set(names)) != len(names):
        raise ModelError("duplicate class names")
    fractions = [float(c["fraction"]) for c in classes]
    left = right = None
    bip = raw.get("bipartite")
    if bip is not None:
        index = {nm: i for i, nm in enumerate(names)}
        try:
            left = tuple(index[nm] for nm in bip["left"])
            right = tuple(index[nm] for nm in bip["right"])
        except KeyError as exc:
            raise ModelError(f"unknown class {exc} in bipartite block") from None
    try:
        rt = np.array(rates, dtype=float)
    except ValueError:
        raise ModelError("rates must be a rectangular numeric matrix") from None
    return BlockModel(np.array(fractions), rt, names, left, right)


def load_model(path) -> BlockModel:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: {exc}") from None
    return validate_model(raw)


def dump_model(model: BlockModel, path=None) -> dict:
    raw = {
        "classes": [{"name": nm, "fraction": float(f)}
                    for nm, f in zip(model.names, model.fractions)],
        "rates": model.rates.tolist(),
    }
    if model.bipartite:
        raw["bipartite"] = {"left": [model.names[i] for i in model.left],
                             "right": [model.names[i] for i in model.right]}
    if path is not None:
        Path(path).write_text(json.dumps(raw, indent=2), encoding="utf-8")
    return raw


def class_sizes(fractions: Sequence[float], n: int) -> np.ndarray:
    """Round ``n * fractions`` to integers summing to ``n`` (largest remainder)."""
    fr = np.asarray(fractions, dtype=float)
    raw = fr * n
    sizes = np.floor(raw).astype(np.int64)
    short = int(n - sizes.sum())
    if short > 0:
        # stable sort keeps ties in class order
        order = np.argsort(-(raw - sizes), kind="stable")
        sizes[order[:short]] += 1
    return sizes


@njit(cache=True)
def _csr(n, eu, ev):
    deg = np.zeros(n, np.int64)
    for k in range(eu.size):
        deg[eu[k]] += 1
        deg[ev[k]] += 1
    indptr = np.zeros(n + 1, np.int64)
    for v in range(n):
        indptr[v + 1] = indptr[v] + deg[v]
    fill = indptr[:-1].copy()
    indices = np.empty(indptr[n], np.int32)
    for k in range(eu.size):
        a = eu[k]
        b = ev[k]
        indices[fill[a]] = b
        fill[a] += 1
        indices[fill[b]] = a
        fill[b] += 1
    return indptr, indices


@dataclass(frozen=True, eq=False)
class Multigraph:
    """Labeled multigraph; self-loops and parallel edges are allowed.

    A self-loop contributes two to the degree of its vertex and appears twice
    in that vertex's adjacency list.
    """

    n: int
    labels: np.ndarray
    edges: np.ndarray
    q: int = 0
    _adj: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        edges = np.ascontiguousarray(np.asarray(self.edges, dtype=np.int32).reshape(-1, 2))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "edges", edges)
        if labels.size != self.n:
            raise ModelError("one label per vertex required")
        if self.q == 0:
            object.__setattr__(self, "q", int(labels.max()) + 1 if self.n else 1)
        if self.n and (labels.min() < 0 or labels.max() >= self.q):
            raise ModelError("labels out of range")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise ModelError("edge endpoint out of range")

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    @property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR pair ``(indptr, indices)``; built lazily."""
        if self._adj is None:
            object.__setattr__(self, "_adj", _csr(self.n, self.edges[:, 0], self.edges[:, 1]))
        return self._adj

    def neighbors(self, v: int) -> np.ndarray:
        indptr, indices = self.adjacency
        return indices[indptr[v]:indptr[v + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency[0])

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.q)


class Graph(Multigraph):
    """Simple labeled graph. Use :meth:`from_edges` to validate arbitrary input."""

    @classmethod
    def from_edges(cls, n, labels, edges, q=0) -> "Graph":
        g = cls(n, labels, edges, q)
        if not is_simple(g):
            raise ModelError("graph has self-loops or parallel edges")
        return g


@dataclass(frozen=True)
class StateTuple:
    """Description tuple ``(E, T, F)`` of a (partially stripped) multigraph.

    ``E[i, j]`` counts ``j``-type half-edges at class-``i`` vertices, so the
    diagonal is twice the number of within-class edges. ``T`` and ``F`` count
    degree-one and degree-at-least-two vertices per class.
    """

    E: np.ndarray
    T: np.ndarray
    F: np.ndarray

    @property
    def q(self) -> int:
        return self.T.size

    @property
    def h(self) -> np.ndarray:
        return self.E.sum(axis=1)

    def check(self) -> None:
        E, T, F = self.E, self.T, self.F
        if np.any(E < 0) or np.any(T < 0) or np.any(F < 0):
            raise AssertionError("negative entry in state tuple")
        if not np.array_equal(E, E.T):
            raise AssertionError("E not symmetric")
        if np.any(E.sum(axis=1) < T + 2 * F):
            raise AssertionError("half-edges do not cover thin and fat vertices")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.E.ravel(), self.T, self.F])

    def key(self) -> tuple:
        return tuple(int(x) for x in self.as_vector())


def edge_counts(g: Multigraph) -> np.ndarray:
    """``m_ij``: number of edges between classes ``i`` and ``j`` (within-class on the diagonal)."""
    q = g.q
    a = g.labels[g.edges[:, 0]].astype(np.int64)
    b = g.labels[g.edges[:, 1]].astype(np.int64)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    m = np.bincount(lo * q + hi, minlength=q * q).reshape(q, q)
    return m + np.triu(m, 1).T


def extract_tuple(g: Multigraph) -> StateTuple:
    q = g.q
    deg = g.degrees()
    a = g.labels[g.edges[:, 0]].astype(np.int64)
    b = g.labels[g.edges[:, 1]].astype(np.int64)
    E = np.bincount(a * q + b, minlength=q * q) + np.bincount(b * q + a, minlength=q * q)
    E = E.reshape(q, q)
    T = np.bincount(g.labels[deg == 1], minlength=q)
    F = np.bincount(g.labels[deg >= 2], minlength=q)
    return StateTuple(E.astype(np.int64), T.astype(np.int64), F.astype(np.int64))


def is_simple(g: Multigraph) -> bool:
    e = g.edges
    if e.size == 0:
        return True
    if np.any(e[:, 0] == e[:, 1]):
        return False
    lo = np.minimum(e[:, 0], e[:, 1]).astype(np.int64)
    hi = np.maximum(e[:, 0], e[:, 1]).astype(np.int64)
    key = np.sort(lo * g.n + hi)
    return not np.any(key[1:] == key[:-1])


def _bernoulli_positions(rng, total: int, p: float) -> np.ndarray:
    """Indices in ``[0, total)`` kept independently with probability ``p``.

    Gaps between kept indices are geometric, so the cost is proportional to the
    number kept.
    """
    if total <= 0 or p <= 0:
        return np.empty(0, np.int64)
    if p >= 1:
        return np.arange(total, dtype=np.int64)
    mean = total * p
    chunk = int(mean + 6 * np.sqrt(mean) + 64)
    parts = []
    last = -1
    while True:
        pos = last + np.cumsum(rng.geometric(p, size=chunk))
        if pos[-1] >= total:
            parts.append(pos[pos < total])
            break
        parts.append(pos)
        last = int(pos[-1])
    return np.concatenate(parts)


def _triangle_pairs(k: np.ndarray):
    """Map a linear index into the pairs ``(a, b)`` with ``a > b``."""
    a = np.floor((1.0 + np.sqrt(1.0 + 8.0 * k.astype(np.float64))) / 2.0).astype(np.int64)
    # float rounding can be off by one either way
    a -= (a * (a - 1) // 2 > k)
    a += ((a + 1) * a // 2 <= k)
    b = k - a * (a - 1) // 2
    return a, b


def sample_sbm(model: BlockModel, n: int, seed) -> Graph:
    """Draw ``G ~ SBM(model, n)``.

    Every pair of vertices in classes ``i, j`` is joined independently with
    probability ``rates[i, j] / n``.

    Raises
    ------
    ModelError
        If some rate exceeds ``n``.
    """
    if np.any(model.rates > n):
        raise ModelError(f"rate {model.rates.max()} exceeds n={n}; edge probability above 1")
    rng = make_rng(seed)
    sizes = class_sizes(model.fractions, n)
    offs = np.concatenate([[0], np.cumsum(sizes)])
    labels = np.repeat(np.arange(model.q, dtype=np.int32), sizes)
    us, vs = [], []
    for i in range(model.q):
        for j in range(i, model.q):
            p = model.rates[i, j] / n
            if i == j:
                total = sizes[i] * (sizes[i] - 1) // 2
                k = _bernoulli_positions(rng, int(total), p)
                a, b = _triangle_pairs(k)
                us.append(offs[i] + a)
                vs.append(offs[i] + b)
            else:
                k = _bernoulli_positions(rng, int(sizes[i] * sizes[j]), p)
                us.append(offs[i] + k // sizes[j])
                vs.append(offs[j] + k % sizes[j])
    eu = np.concatenate(us).astype(np.int32) if us else np.empty(0, np.int32)
    ev = np.concatenate(vs).astype(np.int32) if vs else np.empty(0, np.int32)
    return Graph(n, labels, np.stack([eu, ev], axis=1), model.q)


def sample_blocked_configuration(labels, edge_counts_matrix, seed, q: int = 0) -> Multigraph:
    """Blocked configuration model with the given per-class-pair edge counts.

    For ``i != j``, ``m_ij`` half-edges are dropped uniformly on class ``i`` and
    ``m_ij`` on class ``j`` and paired by a uniform matching. For ``i == j``,
    ``2 m_ii`` half-edges are dropped on class ``i`` and paired uniformly among
    themselves.
    """
    rng = make_rng(seed)
    labels = np.asarray(labels, dtype=np.int32)
    m = np.asarray(edge_counts_matrix, dtype=np.int64)
    q = q or m.shape[0]
    if m.shape != (q, q) or not np.array_equal(m, m.T) or np.any(m < 0):
        raise ModelError("edge counts must be a symmetric nonnegative q x q matrix")
    members = [np.flatnonzero(labels == i) for i in range(q)]
    us, vs = [], []
    for i in range(q):
        for j in range(i, q):
            k = int(m[i, j])
            if k == 0:
                continue
            if members[i].size == 0 or members[j].size == 0:
                raise ModelError(f"class pair ({i}, {j}) carries edges but a class is empty")
            if i == j:
                ends = members[i][rng.integers(0, members[i].size, size=2 * k)]
                ends = rng.permutation(ends)
                assert ends.size % 2 == 0
                us.append(ends[0::2])
                vs.append(ends[1::2])
            else:
                a = members[i][rng.integers(0, members[i].size, size=k)]
                b = members[j][rng.integers(0, members[j].size, size=k)]
                us.append(a)
                vs.append(rng.permutation(b))
    if us:
        edges = np.stack([np.concatenate(us), np.concatenate(vs)], axis=1)
    else:
        edges = np.empty((0, 2), np.int32)
    return Multigraph(labels.size, labels, edges, q)
