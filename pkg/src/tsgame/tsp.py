"""Exact and heuristic tours over coalitions, and the cached characteristic function."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import networkx as nx
import numpy as np
from numba import njit

from .instance import Instance, coalition_members

EXACT_LIMIT = 24
# Largest n for which the whole 2^n table of exact coalition costs is built in
# one Held-Karp pass (2^20 x 20 doubles is ~170 MB).
TABLE_LIMIT = 20

EXACT = "exact"
CHRISTOFIDES = "christofides"
SOLVERS = (EXACT, CHRISTOFIDES)


class SolverError(RuntimeError):
    pass


class CoalitionTooLarge(SolverError):
    pass


class Infeasible(SolverError):
    pass


@dataclass(frozen=True)
class Tour:
    order: tuple[int, ...]
    length: float

    @property
    def visits(self) -> tuple[int, ...]:
        return self.order[1:-1]


def tour_length(d: np.ndarray, order) -> float:
    total = 0.0
    for a, b in zip(order[:-1], order[1:]):
        total += d[a, b]
    return float(total)


# -- Held-Karp --------------------------------------------------------------

@njit(cache=True)
def held_karp_table(dist):
    """c(S, j) for a depot-first matrix: cheapest depot->j path through S.

    Rows are bitmasks over the non-depot nodes (node ``t`` is bit ``t - 1``),
    columns the end node ``j - 1``. Predecessors are scanned in increasing
    index order with a strict comparison, so ties resolve to the lowest index.
    """
    k = dist.shape[0] - 1
    full = 1 << k
    dp = np.full((full, k), np.inf)
    for j in range(k):
        dp[1 << j, j] = dist[0, j + 1]
    for mask in range(1, full):
        if mask & (mask - 1) == 0:
            continue
        for j in range(k):
            if not (mask >> j) & 1:
                continue
            prev = mask ^ (1 << j)
            best = np.inf
            for i in range(k):
                if (prev >> i) & 1:
                    v = dp[prev, i] + dist[i + 1, j + 1]
                    if v < best:
                        best = v
            dp[mask, j] = best
    return dp


@njit(cache=True)
def close_tours(dp, dist):
    """c(S) = min_j c(S, j) + d_j0 for every bitmask S (c(empty) = 0)."""
    full, k = dp.shape
    out = np.empty(full)
    out[0] = 0.0
    for mask in range(1, full):
        best = np.inf
        for j in range(k):
            if (mask >> j) & 1:
                v = dp[mask, j] + dist[j + 1, 0]
                if v < best:
                    best = v
        out[mask] = best
    return out


def _submatrix(inst: Instance, members: list[int]) -> np.ndarray:
    idx = np.array([0, *members])
    return np.ascontiguousarray(inst.distances[np.ix_(idx, idx)])


def _check_size(k: int, limit: int):
    if k > limit:
        raise CoalitionTooLarge(f"coalition of {k} locations exceeds the exact limit of {limit}")


def solve_exact(inst: Instance, coalition: int, limit: int = EXACT_LIMIT) -> Tour:
    """Minimum-length tour over ``coalition`` (a bitmask) and the depot."""
    members = coalition_members(coalition)
    k = len(members)
    if k == 0:
        return Tour((0, 0), 0.0)
    _check_size(k, limit)
    d = _submatrix(inst, members)
    if k == 1:
        length = d[0, 1] + d[1, 0]
        if not np.isfinite(length):
            raise Infeasible("no finite tour")
        return Tour((0, members[0], 0), float(length))
    dp = held_karp_table(d)
    full = (1 << k) - 1
    best, end = np.inf, -1
    for j in range(k):
        v = dp[full, j] + d[j + 1, 0]
        if v < best:
            best, end = v, j
    if not np.isfinite(best):
        raise Infeasible("every route through the coalition uses an infinite edge")
    # walk back through the table choosing the lowest-index predecessor that
    # reproduces each entry exactly
    path = [end]
    mask, j = full, end
    while mask & (mask - 1):
        prev = mask ^ (1 << j)
        for i in range(k):
            if (prev >> i) & 1 and dp[prev, i] + d[i + 1, j + 1] == dp[mask, j]:
                break
        path.append(i)
        mask, j = prev, i
    path.reverse()
    order = (0, *(members[t] for t in path), 0)
    return Tour(order, float(best))


def exact_cost_table(inst: Instance, limit: int = TABLE_LIMIT) -> np.ndarray:
    """Exact c(S) for all 2^n coalitions, indexed by bitmask, from one DP pass."""
    n = inst.n
    _check_size(n, limit)
    d = np.ascontiguousarray(inst.distances)
    return close_tours(held_karp_table(d), d)


# -- Christofides -----------------------------------------------------------

def minimum_spanning_tree(d: np.ndarray) -> list[tuple[int, int]]:
    """Prim's algorithm from node 0; ties go to the lowest index."""
    k = d.shape[0]
    in_tree = np.zeros(k, dtype=bool)
    in_tree[0] = True
    key = d[0].astype(np.float64).copy()
    parent = np.zeros(k, dtype=np.int64)
    edges = []
    for _ in range(k - 1):
        cand = np.where(in_tree, np.inf, key)
        v = int(np.argmin(cand))
        if not np.isfinite(cand[v]):
            raise Infeasible("spanning tree needs an infinite edge")
        in_tree[v] = True
        edges.append((int(parent[v]), v))
        better = (~in_tree) & (d[v] < key)
        key[better] = d[v][better]
        parent[better] = v
    return edges


def min_weight_perfect_matching(vertices, weights: np.ndarray) -> list[tuple[int, int]]:
    """Exact minimum-weight perfect matching on the complete graph over ``vertices``.

    ``weights`` is indexed by vertex label. Uses the blossom algorithm from
    networkx on the weights reflected as ``max + 1 - w`` with maximum
    cardinality, which turns max-weight into min-weight perfect matching.
    """
    vs = list(vertices)
    if len(vs) % 2:
        raise ValueError(f"perfect matching needs an even vertex count, got {len(vs)}")
    if not vs:
        return []
    if len(vs) == 2:
        return [(min(vs), max(vs))]
    sub = weights[np.ix_(vs, vs)]
    if not np.all(np.isfinite(sub)):
        raise Infeasible("matching needs an infinite edge")
    top = float(sub.max()) + 1.0
    g = nx.Graph()
    for a in range(len(vs)):
        for b in range(a + 1, len(vs)):
            g.add_edge(vs[a], vs[b], weight=top - float(weights[vs[a], vs[b]]))
    pairs = nx.max_weight_matching(g, maxcardinality=True)
    return sorted((min(u, v), max(u, v)) for u, v in pairs)


def eulerian_circuit(k: int, edges: list[tuple[int, int]], start: int = 0) -> list[int]:
    """Hierholzer on a multigraph; always leaves by the lowest-labelled free edge."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(k)]
    for eid, (u, v) in enumerate(edges):
        adj[u].append((v, eid))
        adj[v].append((u, eid))
    for lst in adj:
        lst.sort(reverse=True)
    used = [False] * len(edges)
    stack, circuit = [start], []
    while stack:
        v = stack[-1]
        while adj[v] and used[adj[v][-1][1]]:
            adj[v].pop()
        if adj[v]:
            w, eid = adj[v].pop()
            used[eid] = True
            stack.append(w)
        else:
            circuit.append(stack.pop())
    circuit.reverse()
    return circuit


def christofides_order(d: np.ndarray) -> list[int]:
    """Node order (starting and ending at 0) of the Christofides tour of ``d``."""
    k = d.shape[0]
    if k == 1:
        return [0, 0]
    tree = minimum_spanning_tree(d)
    deg = np.zeros(k, dtype=np.int64)
    for u, v in tree:
        deg[u] += 1
        deg[v] += 1
    odd = [v for v in range(k) if deg[v] % 2]
    multigraph = tree + min_weight_perfect_matching(odd, d)
    seen, order = set(), []
    for v in eulerian_circuit(k, multigraph, 0):
        if v not in seen:
            seen.add(v)
            order.append(v)
    order.append(0)
    return order


def solve_christofides(inst: Instance, coalition: int) -> Tour:
    members = coalition_members(coalition)
    if not members:
        return Tour((0, 0), 0.0)
    d = _submatrix(inst, members)
    if not np.array_equal(d, d.T):
        raise SolverError("Christofides needs a symmetric distance matrix")
    if not np.all(np.isfinite(d)):
        raise Infeasible("non-finite distance inside the coalition")
    local = christofides_order(d)
    labels = [0, *members]
    order = tuple(labels[v] for v in local)
    return Tour(order, tour_length(inst.distances, order))


# -- characteristic function --------------------------------------------------

class CharCache:
    """Coalition costs keyed by (bitmask, solver kind); values never change once set."""

    def __init__(self):
        self._values: dict[tuple[int, str], float] = {}
        self._tables: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def attach_table(self, solver: str, table: np.ndarray) -> None:
        self._tables[solver] = table

    def table(self, solver: str) -> np.ndarray | None:
        return self._tables.get(solver)

    def get(self, mask: int, solver: str) -> float | None:
        table = self._tables.get(solver)
        if table is not None:
            self.hits += 1
            return float(table[mask])
        v = self._values.get((mask, solver))
        if v is None:
            return None
        self.hits += 1
        return v

    def put(self, mask: int, solver: str, value: float) -> float:
        with self._lock:
            self.misses += 1
            return self._values.setdefault((mask, solver), value)

    def __len__(self):
        return len(self._values)


def _route_cost(inst: Instance, mask: int, solver: str) -> float:
    if mask & (mask - 1) == 0:
        i = mask.bit_length()
        return float(inst.distances[0, i] + inst.distances[i, 0])
    if solver == EXACT:
        return solve_exact(inst, mask).length
    if solver == CHRISTOFIDES:
        return solve_christofides(inst, mask).length
    raise ValueError(f"unknown solver {solver!r}")


def characteristic(inst: Instance, coalition: int, solver: str = EXACT,
                   cache: CharCache | None = None) -> float:
    """c(S), plus the fixed costs of S's members when the instance carries them."""
    if coalition == 0:
        return 0.0
    if cache is None:
        cost = _route_cost(inst, coalition, solver)
    else:
        cost = cache.get(coalition, solver)
        if cost is None:
            cost = cache.put(coalition, solver, _route_cost(inst, coalition, solver))
    if inst.fixed_costs is not None:
        cost += float(sum(inst.fixed_costs[i - 1] for i in coalition_members(coalition)))
    return cost


def prepare_cache(inst: Instance, solver: str, cache: CharCache | None = None,
                  table_limit: int = TABLE_LIMIT) -> CharCache:
    """A cache for ``inst``; exact caches for small n are pre-filled from one DP pass."""
    cache = cache if cache is not None else CharCache()
    if solver == EXACT and cache.table(EXACT) is None and inst.n <= table_limit:
        cache.attach_table(EXACT, exact_cost_table(inst, limit=table_limit))
    return cache


def route_oracle(inst: Instance, solver: str, cache: CharCache):
    """Fast ``mask -> c(S)`` callable over a cache (fixed costs included)."""
    fixed = None if inst.fixed_costs is None else [float(f) for f in inst.fixed_costs]
    table = cache.table(solver)

    def fixed_sum(mask):
        s, i = 0.0, 0
        while mask:
            if mask & 1:
                s += fixed[i]
            mask >>= 1
            i += 1
        return s

    if table is not None:
        def oracle(mask):
            c = float(table[mask])
            return c + fixed_sum(mask) if fixed else c
        return oracle

    def oracle(mask):
        if mask == 0:
            return 0.0
        c = cache.get(mask, solver)
        if c is None:
            c = cache.put(mask, solver, _route_cost(inst, mask, solver))
        return c + fixed_sum(mask) if fixed else c
    return oracle
