"""Cheap stand-ins for the Shapley allocation.

Every proxy returns an :class:`~tsgame.shapley.Allocation` whose ``fractional``
vector sums to one. When a tour cost is passed in, ``absolute`` is that share
of the tour; otherwise it holds the proxy's own un-normalized terms.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .instance import Instance
from .moat import moat_allocation, nest, solve_packing
from .shapley import Allocation, appro_shapley
from .tsp import CHRISTOFIDES, EXACT, CharCache, Tour, characteristic, prepare_cache, solve_exact

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 0.6
DEFAULT_ITERATIONS = 4000
METHODS = ("depot", "shortcut", "reroute", "christofides", "moat", "blend")


@dataclass(frozen=True)
class BlendConfig:
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"blend weight must lie in [0, 1], got {self.lam}")


def _normalized(inst: Instance, method: str, terms: np.ndarray, tour_cost: float | None,
                **meta) -> Allocation:
    terms = np.asarray(terms, dtype=np.float64)
    total = math.fsum(terms)
    warnings: tuple[str, ...] = ()
    if total == 0 or not math.isfinite(total):
        msg = f"{method}: terms sum to {total}; falling back to a uniform allocation"
        log.warning(msg)
        warnings = (msg,)
        frac = np.full(inst.n, 1.0 / inst.n)
    else:
        frac = terms / total
    absolute = terms if tour_cost is None else frac * tour_cost
    return Allocation(method=method, absolute=absolute, fractional=frac,
                      total_cost=tour_cost, raw=terms, warnings=warnings,
                      instance_id=inst.id, **meta)


def depot_proxy(inst: Instance, tour_cost: float | None = None) -> Allocation:
    return _normalized(inst, "depot", inst.distances[1:, 0], tour_cost)


def shortcut_terms(inst: Instance, tour: Tour) -> np.ndarray:
    d = inst.distances
    order = tour.order
    if sorted(order[1:-1]) != list(range(1, inst.n + 1)):
        raise ValueError("shortcut proxy needs a tour over every location")
    terms = np.zeros(inst.n)
    for pos in range(1, len(order) - 1):
        a, i, b = order[pos - 1], order[pos], order[pos + 1]
        terms[i - 1] = d[a, i] + d[i, b] - d[a, b]
    return terms


def shortcut_proxy(inst: Instance, tour: Tour | None = None,
                   tour_cost: float | None = None) -> Allocation:
    """Savings from skipping each location on the (deterministic) optimal tour."""
    if tour is None:
        tour = solve_exact(inst, inst.grand)
    return _normalized(inst, "shortcut", shortcut_terms(inst, tour), tour_cost)


def reroute_proxy(inst: Instance, cache: CharCache | None = None,
                  tour_cost: float | None = None) -> Allocation:
    """c(N) - c(N \\ i) for every location."""
    cache = prepare_cache(inst, EXACT, cache)
    grand = inst.grand
    full = characteristic(inst.without_fixed_costs(), grand, EXACT, cache)
    terms = np.array([full - characteristic(inst.without_fixed_costs(), grand & ~(1 << (i - 1)),
                                            EXACT, cache)
                      for i in range(1, inst.n + 1)])
    return _normalized(inst, "reroute", terms, tour_cost)


def christofides_proxy(inst: Instance, m: int = DEFAULT_ITERATIONS, seed: int = 0,
                       cache: CharCache | None = None,
                       tour_cost: float | None = None) -> Allocation:
    """Permutation-sampled Shapley values of the Christofides-cost game."""
    sampled = appro_shapley(inst.without_fixed_costs(), m, seed, solver=CHRISTOFIDES, cache=cache)
    return _normalized(inst, "christofides", sampled.absolute, tour_cost, seed=seed, iterations=m)


def moat_proxy(inst: Instance, tour_cost: float | None = None) -> Allocation:
    packing = nest(solve_packing(inst), inst)
    alloc = moat_allocation(packing, inst)
    out = _normalized(inst, "moat", alloc.absolute, tour_cost)
    return replace(out, extra=dict(alloc.extra))


def blend_proxy(inst: Instance, cfg: BlendConfig = BlendConfig(),
                moat: Allocation | None = None, depot: Allocation | None = None,
                tour_cost: float | None = None) -> Allocation:
    """lam * moat + (1 - lam) * depot, on fractional vectors."""
    moat = moat if moat is not None else moat_proxy(inst)
    depot = depot if depot is not None else depot_proxy(inst)
    frac = cfg.lam * moat.fractional + (1.0 - cfg.lam) * depot.fractional
    return _normalized(inst, "blend", frac, tour_cost, extra={"lambda": cfg.lam})


def run_proxy(method: str, inst: Instance, *, lam: float = DEFAULT_LAMBDA,
              iterations: int = DEFAULT_ITERATIONS, seed: int = 0,
              tour_cost: float | None = None) -> Allocation:
    if method == "depot":
        return depot_proxy(inst, tour_cost)
    if method == "shortcut":
        return shortcut_proxy(inst, tour_cost=tour_cost)
    if method == "reroute":
        return reroute_proxy(inst, tour_cost=tour_cost)
    if method == "christofides":
        return christofides_proxy(inst, iterations, seed, tour_cost=tour_cost)
    if method == "moat":
        return moat_proxy(inst, tour_cost)
    if method == "blend":
        return blend_proxy(inst, BlendConfig(lam), tour_cost=tour_cost)
    raise ValueError(f"unknown proxy {method!r}; expected one of {', '.join(METHODS)}")
