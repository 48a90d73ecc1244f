"""Moat packings, their nesting, and the moat cost allocation.

A moat is identified by the cut it induces on ``{0} U N``. We always store the
side of the cut that does *not* contain the depot, as a location bitmask
``D`` (so the depot's own moat is ``D = N``). An edge ``(i, j)`` crosses moat
``D`` when exactly one endpoint lies in ``D``; the depot lies in no ``D``.

The packing LP  max 2 sum_D w_D  s.t.  sum_{D crossed by ij} w_D <= d_ij,
w >= 0  has one variable per moat, so it is solved by column generation: the
edge duals of the restricted LP form a fractional subtour-LP point, and a
global minimum cut on that point either certifies optimality (every cut has
value >= 2) or yields the next moat to add.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import networkx as nx
import numpy as np

from .instance import Instance, coalition_members
from .shapley import Allocation, fractionalize
from .simplex import DenseSimplex, LPError

log = logging.getLogger(__name__)

CUT_TOL = 1e-7
FEAS_TOL = 1e-6
DROP_TOL = 1e-9
MAX_ELIMINATIONS = 10**6


class MoatError(RuntimeError):
    pass


@dataclass
class MoatPacking:
    n: int
    widths: dict[int, Fraction]
    lp_rounds: int = 0
    lp_pivots: int = 0
    eliminations: int = 0
    notes: list[str] = field(default_factory=list)

    @classmethod
    def from_sets(cls, n: int, entries) -> "MoatPacking":
        widths: dict[int, Fraction] = {}
        for members, w in entries:
            mask = 0
            for i in members:
                mask |= 1 << (i - 1)
            if mask == 0 or mask >> n:
                raise ValueError(f"moat {sorted(members)} is not a non-empty subset of 1..{n}")
            widths[mask] = widths.get(mask, Fraction(0)) + Fraction(w)
        return cls(n, {k: v for k, v in widths.items() if v > 0})

    @property
    def exact_objective(self) -> Fraction:
        return 2 * sum(self.widths.values(), Fraction(0))

    @property
    def objective(self) -> float:
        return float(self.exact_objective)

    @property
    def entries(self) -> list[tuple[list[int], float]]:
        return [(coalition_members(m), float(w)) for m, w in sorted(self.widths.items())]

    def to_dict(self) -> dict:
        return {"objective": self.objective,
                "moats": [{"set": s, "width": w} for s, w in self.entries]}


def write_packing(p: MoatPacking, path) -> None:
    Path(path).write_text(json.dumps(p.to_dict()) + "\n")


def _edges(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n + 1) for j in range(i + 1, n + 1)]


def _column(mask: int, edges) -> np.ndarray:
    col = np.zeros(len(edges))
    for e, (i, j) in enumerate(edges):
        a = i > 0 and (mask >> (i - 1)) & 1
        b = j > 0 and (mask >> (j - 1)) & 1
        if a != b:
            col[e] = 1.0
    return col


def edge_loads(p: MoatPacking) -> np.ndarray:
    """Total width crossed by each edge, as an ``(n+1) x (n+1)`` matrix."""
    size = p.n + 1
    inside = np.zeros((len(p.widths), size), dtype=bool)
    w = np.zeros(len(p.widths))
    for r, (mask, width) in enumerate(p.widths.items()):
        for i in coalition_members(mask):
            inside[r, i] = True
        w[r] = float(width)
    cross = inside[:, :, None] != inside[:, None, :]
    return np.tensordot(w, cross.astype(np.float64), axes=1)


def feasibility_gap(p: MoatPacking, inst: Instance) -> float:
    """Largest edge-load excess over d_ij (<= 0 means feasible)."""
    if not p.widths:
        return -math.inf
    over = edge_loads(p) - inst.distances
    np.fill_diagonal(over, -np.inf)
    return float(over.max())


def _check_feasible(p: MoatPacking, inst: Instance, when: str) -> None:
    scale = float(inst.distances.max())
    gap = feasibility_gap(p, inst)
    if gap > FEAS_TOL * max(scale, 1.0):
        raise MoatError(f"packing infeasible {when}: an edge is overloaded by {gap:.3g}")


def _violated_cuts(n: int, edges, x: np.ndarray) -> list[int]:
    g = nx.Graph()
    g.add_nodes_from(range(n + 1))
    for (i, j), v in zip(edges, x):
        if v > DROP_TOL:
            g.add_edge(i, j, weight=float(v))
    full = (1 << n) - 1

    def mask_of(nodes):
        m = 0
        for v in nodes:
            if v:
                m |= 1 << (v - 1)
        return m

    comps = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
    if len(comps) > 1:
        out = []
        for c in comps:
            m = mask_of(c) if 0 not in c else full & ~mask_of(c)
            if m and m not in out:
                out.append(m)
        return out
    value, (side_a, side_b) = nx.stoer_wagner(g)
    if value >= 2.0 - CUT_TOL:
        return []
    side = side_b if 0 in side_a else side_a
    return [mask_of(side)]


def solve_packing(inst: Instance, max_rounds: int = 10_000) -> MoatPacking:
    """Optimal moat packing (its value is the Held-Karp bound on metric inputs)."""
    d = inst.distances
    n = inst.n
    if not np.array_equal(d, d.T):
        raise MoatError("moat packing needs a symmetric distance matrix")
    if not np.all(np.isfinite(d)):
        raise MoatError("moat packing needs finite distances")
    edges = _edges(n)
    b = np.array([d[i, j] for i, j in edges])
    lp = DenseSimplex(b)
    masks: list[int] = []

    def add(new_masks):
        fresh = [m for m in new_masks if m not in seen]
        for m in fresh:
            seen.add(m)
            masks.append(m)
        if fresh:
            lp.add_columns(np.column_stack([_column(m, edges) for m in fresh]),
                           [2.0] * len(fresh))
        return fresh

    seen: set[int] = set()
    add([1 << (i - 1) for i in range(1, n + 1)] + [(1 << n) - 1])
    rounds = 0
    while True:
        rounds += 1
        if rounds > max_rounds:
            raise LPError(f"cutting-plane loop did not converge in {max_rounds} rounds", lp.trace[-20:])
        res = lp.solve()
        cuts = _violated_cuts(n, edges, res.duals)
        if not cuts:
            break
        if not add(cuts):
            raise LPError("separation returned a moat already in the LP", lp.trace[-20:])
    cutoff = DROP_TOL * float(b.max(initial=0.0))
    widths = {m: Fraction(float(w)) for m, w in zip(masks, res.x) if w > cutoff}
    p = MoatPacking(n, widths, lp_rounds=rounds, lp_pivots=res.pivots)
    log.debug("moat LP: %d rounds, %d pivots, %d moats, value %.6f",
              rounds, res.pivots, len(widths), p.objective)
    return p


def _crosses(a: int, b: int) -> bool:
    return bool(a & b) and bool(a & ~b) and bool(b & ~a)


def is_nested(p: MoatPacking) -> bool:
    """Every two positive-width moats are disjoint or one contains the other."""
    ms = [m for m, w in p.widths.items() if w > 0]
    return not any(_crosses(ms[i], ms[j]) for i in range(len(ms)) for j in range(i + 1, len(ms)))


def _first_crossing(widths: dict[int, Fraction]):
    ms = sorted(widths)
    for i, a in enumerate(ms):
        for b in ms[i + 1:]:
            if _crosses(a, b):
                return a, b
    return None


def nest(p: MoatPacking, inst: Instance | None = None,
         max_eliminations: int = MAX_ELIMINATIONS) -> MoatPacking:
    """Uncross a packing until it is nested, keeping the objective exactly.

    For crossing moats A = S u S' and B = S' u S'' the smaller width tau is
    moved off both and onto S = A - B and S'' = B - A. Arithmetic is exact
    (rational), so the objective is preserved to the last bit; when ``inst``
    is given, edge feasibility is re-checked after every step.
    """
    widths = dict(p.widths)
    steps = 0
    if inst is not None:
        _check_feasible(p, inst, "before nesting")
    while True:
        pair = _first_crossing(widths)
        if pair is None:
            break
        steps += 1
        if steps > max_eliminations:
            raise MoatError(f"nesting did not finish within {max_eliminations} eliminations")
        a, b = pair
        tau = min(widths[a], widths[b])
        for m, delta in ((a, -tau), (b, -tau), (a & ~b, tau), (b & ~a, tau)):
            v = widths.get(m, Fraction(0)) + delta
            if v > 0:
                widths[m] = v
            else:
                widths.pop(m, None)
        if inst is not None:
            _check_feasible(MoatPacking(p.n, widths), inst, f"after elimination {steps}")
    log.debug("nesting finished after %d eliminations", steps)
    out = MoatPacking(p.n, widths, lp_rounds=p.lp_rounds, lp_pivots=p.lp_pivots,
                      eliminations=p.eliminations + steps, notes=list(p.notes))
    if out.exact_objective != p.exact_objective:
        raise MoatError("nesting changed the objective")
    return out


def moat_charges(p: MoatPacking) -> list[Fraction]:
    """3 w_D shared evenly by the locations inside each moat D."""
    x = [Fraction(0)] * p.n
    for mask, w in p.widths.items():
        members = coalition_members(mask)
        share = 3 * w / len(members)
        for i in members:
            x[i - 1] += share
    return x


def moat_allocation(p: MoatPacking, inst: Instance) -> Allocation:
    if not is_nested(p):
        raise MoatError("moat allocation needs a nested packing")
    if p.n != inst.n:
        raise MoatError(f"packing is over {p.n} locations, instance has {inst.n}")
    charges = moat_charges(p)
    absolute = np.array([float(c) for c in charges])
    total = float(3 * sum(p.widths.values(), Fraction(0)))
    alloc = Allocation(method="moat", absolute=absolute, total_cost=total,
                       instance_id=inst.id,
                       extra={"packing_objective": p.objective, "moats": len(p.widths)})
    return fractionalize(alloc) if total > 0 else alloc
