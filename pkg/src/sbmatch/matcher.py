"""
Karp-Sipser matchers and an exact maximum-matching oracle.

Both heuristics strip a uniformly chosen degree-one vertex together with its
neighbor whenever one exists. Otherwise plain Karp-Sipser matches a uniformly
chosen live edge, while the label-aware variant first picks the class pair
``(i, j)`` minimizing ``badness(i) + badness(j)`` and then a uniform live edge
of that pair. Badness is recomputed from the live description tuple at every
such step.

Self-loops (multigraph inputs) are never matched: drawing one deletes its
vertex, which is then counted as isolated.

Examples
--------
>>> import numpy as np
>>> from sbmatch.model import Graph
>>> star = Graph(5, np.zeros(5), [[0, 1], [0, 2], [0, 3], [0, 4]])
>>> r = karp_sipser(star, seed=0)
>>> r.size, r.phase1_steps, r.final_unmatched
(1, 1, 3)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from . import _exact, _strip
from .fluid import _badness
from .model import BlockModel, Multigraph, StateTuple, numba_seed

__all__ = [
    "MatchResult",
    "karp_sipser",
    "label_aware_karp_sipser",
    "badness",
    "exact_matching_number",
    "maximum_matching",
    "OracleSizeError",
    "STEP_THIN",
    "STEP_EDGE",
    "STEP_LOOP",
]

STEP_THIN = _strip.STEP_THIN
STEP_EDGE = _strip.STEP_EDGE
STEP_LOOP = _strip.STEP_LOOP

BIPARTITE_CAP = 2_000_000
GENERAL_CAP = 20_000


class OracleSizeError(ValueError):
    """Raised when an exact-matching request exceeds the configured size cap."""


@dataclass(frozen=True, eq=False)
class MatchResult:
    """Outcome of a stripping run.

    Attributes
    ----------
    matching : ndarray
        ``(k, 2)`` array of matched vertex pairs in the order they were matched.
    phase1_steps, phase2_steps : int
        Steps taken before and after the degree-one pool first ran empty.
    isolated_initial : int
        Vertices of degree zero in the input.
    isolated_in_phase1, isolated_in_phase2 : int
        Vertices left isolated and unmatched during each phase.
    final_unmatched : int
        ``n - 2 * len(matching)``.
    steps : ndarray or None
        ``(kind, x, y)`` per step when requested; ``kind`` is one of
        ``STEP_THIN``, ``STEP_EDGE``, ``STEP_LOOP``.
    tuples : ndarray or None
        Packed description tuple before the first step and after every step,
        when requested.
    complete : bool
        False if ``max_steps`` stopped the run early.
    """

    n: int
    q: int
    matching: np.ndarray
    phase1_steps: int
    phase2_steps: int
    isolated_initial: int
    isolated_in_phase1: int
    isolated_in_phase2: int
    final_unmatched: int
    complete: bool = True
    steps: np.ndarray | None = None
    tuples: np.ndarray | None = None
    final_tuple: StateTuple | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return int(self.matching.shape[0])

    @property
    def pair_fraction(self) -> float:
        return self.size / self.n if self.n else 0.0

    @property
    def matched_fraction(self) -> float:
        """Fraction of vertices covered by the matching."""
        return 2 * self.size / self.n if self.n else 0.0

    def tuple_at(self, k: int) -> StateTuple:
        """Description tuple after ``k`` steps (needs ``record=True``)."""
        q = self.q
        row = self.tuples[k]
        return StateTuple(row[:q * q].reshape(q, q).copy(), row[q * q:q * q + q].copy(),
                          row[q * q + q:].copy())


def _run(g: Multigraph, seed, label_aware: bool, max_steps, record: bool) -> MatchResult:
    indptr, indices = g.adjacency
    limit = np.iinfo(np.int64).max if max_steps is None else int(max_steps)
    out = _strip._strip(g.n, g.q, g.labels, indptr, indices, g.edges[:, 0], g.edges[:, 1],
                        numba_seed(seed), label_aware, limit, record, record)
    pairs, s1, s2, iso0, iso1, iso2, log, tuples, E, T, F, _alive = out
    return MatchResult(
        n=g.n, q=g.q, matching=pairs, phase1_steps=int(s1), phase2_steps=int(s2),
        isolated_initial=int(iso0), isolated_in_phase1=int(iso1), isolated_in_phase2=int(iso2),
        final_unmatched=g.n - 2 * pairs.shape[0], complete=int(E.sum()) == 0,
        steps=log if record else None, tuples=tuples if record else None,
        final_tuple=StateTuple(E, T, F),
    )


def karp_sipser(g: Multigraph, seed, max_steps: int | None = None, record: bool = False) -> MatchResult:
    """Run Karp-Sipser on a graph or multigraph.

    Parameters
    ----------
    g : Graph or Multigraph
    seed : int, SeedSequence or Generator
    max_steps : int, optional
        Stop after this many steps (the result is then marked incomplete).
    record : bool
        Keep the per-step log and the tuple after every step.

    Returns
    -------
    MatchResult
    """
    return _run(g, seed, False, max_steps, record)


def label_aware_karp_sipser(g: Multigraph, model: BlockModel | None, seed,
                            max_steps: int | None = None, record: bool = False) -> MatchResult:
    """Karp-Sipser that chooses the class pair of each random edge by badness.

    ``model`` is only used to check that the labels are consistent with it;
    badness comes from the live tuple.
    """
    if model is not None and g.n and g.labels.max() >= model.q:
        raise ValueError("graph labels exceed the model's class count")
    return _run(g, seed, True, max_steps, record)


def badness(t: StateTuple, i: int) -> float:
    """Expected new degree-one vertices per class-``i`` endpoint of a random edge.

    ``sum_j theta_j delta_ij`` evaluated at the tuple; 0 when class ``i`` has no
    half-edges or no fat vertices.
    """
    b = _badness(np.asarray(t.E, float), np.asarray(t.T, float), np.asarray(t.F, float))
    return float(b[i])


def maximum_matching(g: Multigraph, cap: int | None = None) -> np.ndarray:
    """Mate array of a maximum-cardinality matching (``-1`` when unmatched).

    Bipartite inputs go to scipy's Hopcroft-Karp; others to a compiled blossom
    search, which is cubic in the worst case and capped at ``GENERAL_CAP``
    vertices unless ``cap`` says otherwise.
    """
    indptr, indices = g.adjacency
    color = _exact.two_coloring(g.n, indptr, indices)
    if color.size == g.n:
        if g.n > (cap or BIPARTITE_CAP):
            raise OracleSizeError(f"n={g.n} exceeds the bipartite oracle cap")
        left = np.flatnonzero(color == 0)
        right = np.flatnonzero(color == 1)
        lpos = np.full(g.n, -1, np.int64)
        lpos[left] = np.arange(left.size)
        rpos = np.full(g.n, -1, np.int64)
        rpos[right] = np.arange(right.size)
        e = g.edges
        a = np.where(color[e[:, 0]] == 0, e[:, 0], e[:, 1])
        b = np.where(color[e[:, 0]] == 0, e[:, 1], e[:, 0])
        bi = csr_matrix((np.ones(e.shape[0], np.int8), (lpos[a], rpos[b])),
                        shape=(left.size, right.size))
        bi.sum_duplicates()
        mate_l = maximum_bipartite_matching(bi, perm_type="column")
        mate = np.full(g.n, -1, np.int64)
        ok = mate_l >= 0
        mate[left[ok]] = right[mate_l[ok]]
        mate[right[mate_l[ok]]] = left[ok]
        return mate
    if g.n > (cap or GENERAL_CAP):
        raise OracleSizeError(f"n={g.n} exceeds the general-graph oracle cap")
    return _exact.blossom_matching(g.n, indptr, indices)


def exact_matching_number(g: Multigraph, cap: int | None = None) -> int:
    """Size of a maximum matching.

    Examples
    --------
    >>> import numpy as np
    >>> from sbmatch.model import Graph
    >>> cycle = Graph(6, np.zeros(6), [[k, (k + 1) % 6] for k in range(6)])
    >>> exact_matching_number(cycle)
    3
    """
    mate = maximum_matching(g, cap)
    return int(np.count_nonzero(mate >= 0) // 2)
