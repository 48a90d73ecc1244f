"""Corpus generation and the baseline / proxy / evaluation pipeline."""

from __future__ import annotations

import logging
import statistics
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .evaluation import EvalReport, evaluate, percent_differences
from .instance import Instance, generate_euclidean
from .proxies import DEFAULT_ITERATIONS, DEFAULT_LAMBDA, METHODS, BlendConfig, blend_proxy, run_proxy
from .rng import derive_seed
from .shapley import EXACT_SHAPLEY_LIMIT, Allocation, appro_shapley, exact_shapley, subset_shapley
from .tsp import EXACT, EXACT_LIMIT, CharCache, characteristic, prepare_cache

log = logging.getLogger(__name__)


def instance_id(n: int, k: int) -> str:
    return f"n{n:02d}-{k:03d}"


def generate_corpus(ns, per_n: int, seed: int, square: float = 1000.0) -> list[Instance]:
    """``per_n`` uniform Euclidean games for every n, each on its own derived seed."""
    out = []
    for n in ns:
        for k in range(per_n):
            out.append(generate_euclidean(n, derive_seed(seed, n, k), square, id=instance_id(n, k)))
    return out


def baseline_allocation(inst: Instance, iterations: int = DEFAULT_ITERATIONS, seed: int = 0,
                        exact_limit: int = EXACT_SHAPLEY_LIMIT,
                        cache: CharCache | None = None) -> Allocation:
    """Exact Shapley when n <= exact_limit, otherwise permutation sampling on exact tours."""
    if inst.n <= exact_limit:
        alloc = exact_shapley(inst, cache=cache)
        chosen = "exact"
    else:
        alloc = appro_shapley(inst, iterations, seed, solver=EXACT, cache=cache)
        chosen = "appro"
    return replace(alloc, extra=dict(alloc.extra, baseline=chosen))


def grand_tour_cost(inst: Instance) -> float | None:
    if inst.n > EXACT_LIMIT:
        return None
    return characteristic(inst.without_fixed_costs(), inst.grand, EXACT)


def proxy_allocations(inst: Instance, methods=METHODS, lam: float = DEFAULT_LAMBDA,
                      iterations: int = DEFAULT_ITERATIONS, seed: int = 0) -> dict[str, Allocation]:
    methods = list(methods)
    tour = grand_tour_cost(inst) if any(m != "depot" for m in methods) else None
    out: dict[str, Allocation] = {}
    for m in methods:
        if m == "blend":
            continue
        out[m] = run_proxy(m, inst, lam=lam, iterations=iterations, seed=seed, tour_cost=tour)
    if "blend" in methods:
        moat = out.get("moat") or run_proxy("moat", inst)
        depot = out.get("depot") or run_proxy("depot", inst)
        out["blend"] = blend_proxy(inst, BlendConfig(lam), moat, depot, tour_cost=tour)
    return {m: out[m] for m in methods}


def _instance_job(args):
    inst, methods, lam, iterations, seed, baseline_iters = args
    base = baseline_allocation(inst, baseline_iters, seed)
    proxies = proxy_allocations(inst, methods, lam, iterations, seed)
    return base, proxies


def run_corpus(instances, methods=METHODS, lam: float = DEFAULT_LAMBDA,
               iterations: int = DEFAULT_ITERATIONS, seed: int = 0,
               baseline_iters: int = DEFAULT_ITERATIONS, threads: int = 1):
    """Baseline and proxies for every instance; results keep the input order."""
    jobs = [(inst, tuple(methods), lam, iterations, seed, baseline_iters) for inst in instances]
    if threads <= 1:
        results = [_instance_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_instance_job, jobs))
    baselines = [r[0] for r in results]
    proxies = [r[1] for r in results]
    return baselines, proxies


def evaluate_corpus(baselines, proxies) -> dict[str, list[EvalReport]]:
    reports: dict[str, list[EvalReport]] = {}
    for base, per in zip(baselines, proxies):
        for name, alloc in per.items():
            reports.setdefault(name, []).append(evaluate(base, alloc))
    return reports


def convergence(instances, ms, seed: int = 0) -> dict[str, np.ndarray]:
    """Mean per-location percent error against exact Shapley, per game and iteration count.

    Returns arrays of shape (games, len(ms)) for the permutation and the subset
    sampler. Both samplers reuse one exact coalition table per game.
    """
    ms = list(ms)
    appro = np.zeros((len(instances), len(ms)))
    subset = np.zeros_like(appro)
    for g, inst in enumerate(instances):
        cache = prepare_cache(inst, EXACT, None, table_limit=max(inst.n, 1))
        exact = exact_shapley(inst, cache=cache)
        for c, m in enumerate(ms):
            a = appro_shapley(inst, m, seed, cache=cache)
            s = subset_shapley(inst, m, seed, cache=cache)
            appro[g, c] = statistics.fmean(percent_differences(exact, a)[0])
            subset[g, c] = statistics.fmean(percent_differences(exact, s)[0])
    return {"appro": appro, "subset": subset}
