"""Exact and sampled Shapley values of traveling salesperson games."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .instance import Instance
from .rng import Stream
from .tsp import EXACT, EXACT_LIMIT, CharCache, prepare_cache, route_oracle

EXACT_SHAPLEY_LIMIT = 15


class AllocationError(ValueError):
    pass


@dataclass(frozen=True)
class Allocation:
    """Per-location costs (depot excluded) and their normalized shares."""

    method: str
    absolute: np.ndarray | None
    fractional: np.ndarray | None = None
    total_cost: float | None = None
    seed: int | None = None
    iterations: int | None = None
    raw: np.ndarray | None = None
    warnings: tuple[str, ...] = ()
    instance_id: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        v = self.fractional if self.fractional is not None else self.absolute
        return len(v)

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "seed": self.seed,
            "iterations": self.iterations,
            "absolute": None if self.absolute is None else self.absolute.tolist(),
            "fractional": None if self.fractional is None else self.fractional.tolist(),
            "total_cost": self.total_cost,
        }
        if self.raw is not None:
            out["raw"] = self.raw.tolist()
        if self.warnings:
            out["warnings"] = list(self.warnings)
        if self.instance_id is not None:
            out["instance_id"] = self.instance_id
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Allocation":
        known = {"method", "seed", "iterations", "absolute", "fractional", "total_cost",
                 "raw", "warnings", "instance_id"}

        def arr(key):
            v = data.get(key)
            return None if v is None else np.asarray(v, dtype=np.float64)

        return cls(
            method=data["method"],
            absolute=arr("absolute"),
            fractional=arr("fractional"),
            total_cost=data.get("total_cost"),
            seed=data.get("seed"),
            iterations=data.get("iterations"),
            raw=arr("raw"),
            warnings=tuple(data.get("warnings", ())),
            instance_id=data.get("instance_id"),
            extra={k: v for k, v in data.items() if k not in known},
        )


def write_allocation(alloc: Allocation, path) -> None:
    Path(path).write_text(json.dumps(alloc.to_dict()) + "\n")


def read_allocation(path) -> Allocation:
    return Allocation.from_dict(json.loads(Path(path).read_text()))


def fractionalize(alloc: Allocation) -> Allocation:
    """Fill in shares x_i / sum_j x_j; the absolute vector is left alone."""
    if alloc.fractional is not None and alloc.absolute is None:
        return alloc
    x = np.asarray(alloc.absolute, dtype=np.float64)
    total = math.fsum(x)
    if total == 0 or not math.isfinite(total):
        raise AllocationError(f"cannot normalize an allocation with total {total}")
    return replace(alloc, fractional=x / total)


def check_efficiency(alloc: Allocation, rel: float = 1e-9) -> None:
    """Raise unless the absolute allocation sums to its recorded total cost."""
    if alloc.absolute is None or alloc.total_cost is None:
        raise AllocationError("allocation lacks absolute values or total cost")
    s = math.fsum(alloc.absolute)
    if abs(s - alloc.total_cost) > rel * max(1.0, abs(alloc.total_cost)):
        raise AllocationError(
            f"allocation sums to {s!r}, not the grand coalition cost {alloc.total_cost!r}")


def subset_weights(n: int) -> np.ndarray:
    """|S|!(n-|S|-1)!/n! for |S| = 0..n-1, i.e. 1 / (n * C(n-1, s)), correctly rounded."""
    return np.array([1.0 / (n * math.comb(n - 1, s)) for s in range(n)])


def _popcounts(n: int) -> np.ndarray:
    pc = np.zeros(1 << n, dtype=np.int64)
    for b in range(n):
        pc[1 << b:1 << (b + 1)] = pc[:1 << b] + 1
    return pc


def shapley_from_table(costs: np.ndarray, n: int) -> np.ndarray:
    """Shapley values from c(S) tabulated for every bitmask S over n players."""
    pc = _popcounts(n)
    w = subset_weights(n)
    masks = np.arange(1 << n)
    sv = np.empty(n)
    for i in range(n):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        margins = costs[without | bit] - costs[without]
        # group by coalition size before weighting so each weight multiplies once
        by_size = np.bincount(pc[without], weights=margins, minlength=n)
        sv[i] = math.fsum(w * by_size)
    return sv


def _fixed_table(inst: Instance) -> np.ndarray:
    n = inst.n
    f = np.zeros(1 << n)
    for b in range(n):
        f[1 << b:1 << (b + 1)] = f[:1 << b] + inst.fixed_costs[b]
    return f


def coalition_table(inst: Instance, solver: str = EXACT,
                    cache: CharCache | None = None) -> np.ndarray:
    """c(S) (fixed costs included) for every coalition bitmask."""
    cache = prepare_cache(inst, solver, cache, table_limit=max(inst.n, 1))
    table = cache.table(solver)
    if table is None:
        oracle = route_oracle(inst, solver, cache)
        return np.array([oracle(m) for m in range(1 << inst.n)])
    table = np.array(table, dtype=np.float64)
    if inst.fixed_costs is not None:
        table = table + _fixed_table(inst)
    return table


def exact_shapley(inst: Instance, solver: str = EXACT, limit: int = EXACT_SHAPLEY_LIMIT,
                  cache: CharCache | None = None) -> Allocation:
    """Shapley values by full subset enumeration over one Held-Karp table.

    The DP that solves the grand-coalition tour tabulates c(S, j) for every S;
    closing each prefix back to the depot gives c(S) for all coalitions at
    once, so every TSP is solved exactly once.
    """
    n = inst.n
    if n > limit:
        raise AllocationError(f"exact Shapley limited to n <= {limit}, got n = {n}")
    costs = coalition_table(inst, solver, cache)
    if not np.isfinite(costs[-1]):
        raise AllocationError("grand coalition has no finite tour")
    sv = shapley_from_table(costs, n)
    total = float(costs[-1])
    alloc = Allocation(method="exact" if solver == EXACT else f"exact-{solver}",
                       absolute=sv, total_cost=total, instance_id=inst.id)
    return fractionalize(alloc) if math.fsum(sv) > 0 else alloc


def _finish(inst, method, sums, m, grand, seed, raw_scale=1.0):
    total_value = math.fsum(sums)
    raw = sums * (raw_scale / m)
    if total_value == 0:
        absolute = np.zeros_like(sums)
    else:
        absolute = sums * (grand / total_value)
    alloc = Allocation(method=method, absolute=absolute, total_cost=grand, seed=seed,
                       iterations=m, raw=raw, instance_id=inst.id)
    return fractionalize(alloc) if grand > 0 else alloc


class PermutationSampler:
    """Uniform permutations of 1..n from the pinned stream."""

    def __init__(self, n: int, seed: int):
        self.n = n
        self.seed = seed
        self.stream = Stream(seed)
        self.iteration = 0

    def __iter__(self):
        return self

    def __next__(self) -> list[int]:
        self.iteration += 1
        return self.stream.permutation(range(1, self.n + 1))


def _check_exact_size(n: int, solver: str) -> None:
    # the estimate is rescaled by c(N), so fail before any sampling work
    if solver == EXACT and n > EXACT_LIMIT:
        raise ValueError(f"exact tours are limited to {EXACT_LIMIT} locations, got {n}")


def appro_shapley(inst: Instance, m: int, seed: int = 0, solver: str = EXACT,
                  cache: CharCache | None = None) -> Allocation:
    """Permutation-sampling Shapley estimate, rescaled so it sums to c(N).

    ``raw`` holds the plain average of sampled margins (unbiased); ``absolute``
    is that estimate rescaled by c(N) / sum of estimates.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    n = inst.n
    _check_exact_size(n, solver)
    cache = prepare_cache(inst, solver, cache)
    cost = route_oracle(inst, solver, cache)
    sums = np.zeros(n)
    sampler = PermutationSampler(n, seed)
    acc = [0.0] * n
    for _ in range(m):
        perm = next(sampler)
        s, before = 0, 0.0
        for loc in perm:
            s |= 1 << (loc - 1)
            after = cost(s)
            acc[loc - 1] += after - before
            before = after
    sums[:] = acc
    method = "appro" if solver == EXACT else f"appro-{solver}"
    return _finish(inst, method, sums, m, cost(inst.grand), seed)


def subset_shapley(inst: Instance, m: int, seed: int = 0, solver: str = EXACT,
                   cache: CharCache | None = None) -> Allocation:
    """Subset-sampling Shapley estimate, rescaled so it sums to c(N).

    Each iteration draws, for every location i, a uniform subset S of the other
    locations and adds the margin weighted by |S|!(n-|S|-1)!. The weight is
    applied as 1/C(n-1,|S|) (the same quantity divided by (n-1)!), which stays
    finite for any n; the common factor cancels in the final rescaling and is
    restored in ``raw``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    n = inst.n
    _check_exact_size(n, solver)
    cache = prepare_cache(inst, solver, cache)
    cost = route_oracle(inst, solver, cache)
    inv_binom = [1.0 / math.comb(n - 1, s) for s in range(n)]
    stream = Stream(seed)
    acc = [0.0] * n
    for _ in range(m):
        for i in range(n):
            bits = stream.bits(n - 1)
            low = bits & ((1 << i) - 1)
            s = low | ((bits >> i) << (i + 1))
            size = bin(s).count("1")
            acc[i] += inv_binom[size] * (cost(s | (1 << i)) - cost(s))
    sums = np.array(acc)
    # E[margin / C(n-1,|S|)] over uniform S equals SV_i * n / 2^(n-1)
    raw_scale = 2.0 ** (n - 1) / n
    method = "subset" if solver == EXACT else f"subset-{solver}"
    return _finish(inst, method, sums, m, cost(inst.grand), seed, raw_scale)
