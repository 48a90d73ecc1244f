"""Command-line front end: ``tsgame gen|baseline|proxy|eval|sweep-blend|converge``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from contextlib import contextmanager
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import aggregate_corpus, evaluate, reports_csv, sweep_blend
from .experiments import baseline_allocation, convergence, generate_corpus, grand_tour_cost
from .instance import Instance, read_instance, write_instance
from .proxies import DEFAULT_ITERATIONS, DEFAULT_LAMBDA, METHODS, run_proxy
from .shapley import AllocationError, check_efficiency, read_allocation, write_allocation

log = logging.getLogger("tsgame")

MANIFEST = "manifest.json"


class CliError(Exception):
    pass


def parse_range(text: str) -> list[int]:
    """``4..35``, ``8,10,12`` or a single integer."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"bad location-count range {text!r}")
    return out


def parse_grid(text: str) -> list[float]:
    """``0:1:0.1`` (inclusive) or a comma list."""
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        k = int(round((hi - lo) / step))
        return [round(lo + i * step, 12) for i in range(k + 1)]
    return [float(x) for x in text.split(",") if x.strip()]


class Manifest:
    def __init__(self, command: str, params: dict):
        self.data = {"command": command, "params": params, "version": __version__,
                     "python": platform.python_version(), "phases": {}}

    @contextmanager
    def phase(self, name: str):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.data["phases"][name] = round(time.perf_counter() - t, 6)

    def write(self, out: Path) -> None:
        (out / MANIFEST).write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _instance_files(paths: list[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(f for f in p.iterdir()
                                if f.suffix in (".json", ".csv") and f.name != MANIFEST
                                and not f.name.endswith(".error.json")))
        elif p.exists():
            files.append(p)
        else:
            raise CliError(f"no such file or directory: {p}")
    if not files:
        raise CliError("no instance files found")
    return files


def _load_instances(paths: list[str]) -> list[Instance]:
    out = []
    for f in _instance_files(paths):
        inst = read_instance(f)
        if inst.id is None:
            inst = Instance(inst.distances, inst.coords, inst.fixed_costs, inst.seed, f.stem)
        out.append(inst)
    return out


def _load_allocations(path: str, check: bool) -> dict:
    allocs = {}
    for f in _instance_files([path]):
        a = read_allocation(f)
        key = a.instance_id or f.stem
        if check and a.total_cost is not None and a.absolute is not None:
            try:
                check_efficiency(a)
            except AllocationError as e:
                raise CliError(f"{f}: {e}") from e
        if key in allocs:
            raise CliError(f"duplicate allocation for instance {key!r} in {path}")
        allocs[key] = a
    return allocs


def _proxy_job(inst: Instance, method: str, lam: float, iters: int, seed: int):
    return run_proxy(method, inst, lam=lam, iterations=iters, seed=seed,
                     tour_cost=grand_tour_cost(inst))


def _guarded(fn, inst):
    try:
        return fn(inst), None
    except Exception as e:  # noqa: BLE001 - any module error becomes a marker
        return None, f"{type(e).__name__}: {e}"


def _for_each(instances, out: Path, fn, threads: int = 1) -> int:
    """Run ``fn`` per instance, writing an error marker instead of stopping on failure.

    ``fn`` must be picklable when ``threads > 1``; results are written in input order.
    """
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_guarded, [fn] * len(instances), instances))
    else:
        results = [_guarded(fn, inst) for inst in instances]
    failures = 0
    for inst, (alloc, err) in zip(instances, results):
        if err is None:
            alloc = replace(alloc, extra=dict(alloc.extra, manifest=MANIFEST))
            write_allocation(alloc, out / f"{inst.id}.json")
            continue
        failures += 1
        log.error("%s: %s", inst.id, err)
        (out / f"{inst.id}.error.json").write_text(
            json.dumps({"instance_id": inst.id, "error": err}) + "\n")
    return failures


def cmd_gen(args) -> int:
    out = _out_dir(args.out)
    m = Manifest("gen", {"n": args.n, "per_n": args.per_n, "seed": args.seed,
                         "square": args.square})
    with m.phase("generate"):
        corpus = generate_corpus(args.n, args.per_n, args.seed, args.square)
        for inst in corpus:
            write_instance(inst, out / f"{inst.id}.json")
    m.data["instances"] = len(corpus)
    m.write(out)
    print(f"wrote {len(corpus)} instances to {out}")
    return 0


def cmd_baseline(args) -> int:
    out = _out_dir(args.out)
    m = Manifest("baseline", {"instances": args.instances, "iters": args.iters,
                              "seed": args.seed, "exact_limit": args.exact_limit,
                              "threads": args.threads})
    insts = _load_instances(args.instances)
    with m.phase("baseline"):
        job = partial(baseline_allocation, iterations=args.iters, seed=args.seed,
                      exact_limit=args.exact_limit)
        failures = _for_each(insts, out, job, args.threads)
    m.data["failures"] = failures
    m.write(out)
    return 1 if failures else 0


def cmd_proxy(args) -> int:
    out = _out_dir(args.out)
    m = Manifest("proxy", {"instances": args.instances, "method": args.method,
                           "lambda": args.lam, "iters": args.iters, "seed": args.seed,
                           "threads": args.threads})
    insts = _load_instances(args.instances)
    with m.phase(args.method):
        job = partial(_proxy_job, method=args.method, lam=args.lam, iters=args.iters,
                      seed=args.seed)
        failures = _for_each(insts, out, job, args.threads)
    m.data["failures"] = failures
    m.write(out)
    return 1 if failures else 0


def cmd_eval(args) -> int:
    out = _out_dir(args.out)
    m = Manifest("eval", {"baseline": args.baseline, "proxy": args.proxy, "exact_p": args.exact_p})
    base = _load_allocations(args.baseline, check=True)
    reports = []
    with m.phase("evaluate"):
        for pdir in args.proxy:
            prox = _load_allocations(pdir, check=True)
            if set(prox) != set(base):
                missing = sorted(set(base) ^ set(prox))
                raise CliError(f"{pdir}: instance ids differ from the baseline: {missing[:5]}")
            for key in sorted(base):
                reports.append(evaluate(base[key], prox[key], exact_p=args.exact_p))
    (out / "reports.json").write_text(json.dumps([r.to_dict() for r in reports], indent=1) + "\n")
    (out / "reports.csv").write_text(reports_csv(reports))
    by_proxy: dict[str, list] = {}
    for r in reports:
        by_proxy.setdefault(r.proxy, []).append(r)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["proxy", "games", "rmse_mean", "rmse_std", "tau_mean", "tau_std",
                    "p_median", "p_max", "top1_fraction", "significant"])
        for name in sorted(by_proxy):
            s = aggregate_corpus(by_proxy[name])
            w.writerow([name, s.games, repr(s.rmse_mean), repr(s.rmse_std), repr(s.tau_mean),
                        repr(s.tau_std), repr(s.p_median), repr(s.p_max),
                        repr(s.top1_fraction), s.significant])
    m.data["p_value"] = ("normal approximation z = 3 tau sqrt(n(n-1)) / sqrt(2(2n+5)), two-tailed"
                         + ("; exact permutation enumeration for n < 8" if args.exact_p else ""))
    m.write(out)
    for r in reports:
        print(f"{r.instance_id} {r.proxy}: rmse {r.rmse:.6f} tau {r.rank.tau:.4f} top1 {r.top1}")
    return 0


def cmd_sweep(args) -> int:
    out = _out_dir(args.out)
    grid = parse_grid(args.grid)
    m = Manifest("sweep-blend", {"instances": args.instances, "baseline": args.baseline,
                                 "grid": grid})
    base = _load_allocations(args.baseline, check=True)
    insts = _load_instances(args.instances)
    missing = [i.id for i in insts if i.id not in base]
    if missing:
        raise CliError(f"no baseline for instances {missing[:5]}")
    with m.phase("proxies"):
        moats = [run_proxy("moat", i) for i in insts]
        depots = [run_proxy("depot", i) for i in insts]
    with m.phase("sweep"):
        rows = sweep_blend(moats, depots, [base[i.id] for i in insts], grid)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "mean_max_error", "mean_error", "rmse"])
        for r in rows:
            w.writerow([repr(r.lam), repr(r.max_error), repr(r.mean_error), repr(r.rmse)])
    m.write(out)
    for r in rows:
        print(f"lambda {r.lam:.2f}: max {r.max_error:.6f} mean {r.mean_error:.6f} rmse {r.rmse:.6f}")
    return 0


def cmd_converge(args) -> int:
    out = _out_dir(args.out)
    ms = parse_range(args.iters)
    m = Manifest("converge", {"n": args.n, "games": args.games, "seed": args.seed, "iters": ms})
    corpus = generate_corpus([args.n], args.games, args.seed)
    with m.phase("sample"):
        curves = convergence(corpus, ms, args.seed)
    with open(out / "converge.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id", "sampler", "iterations", "mean_pct_error"])
        for name in ("appro", "subset"):
            for g, inst in enumerate(corpus):
                for c, it in enumerate(ms):
                    w.writerow([inst.id, name, it, repr(float(curves[name][g, c]))])
    m.write(out)
    for c, it in enumerate(ms):
        print(f"m={it}: appro {np.mean(curves['appro'][:, c]):.3f}% "
              f"subset {np.mean(curves['subset'][:, c]):.3f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsgame", description=__doc__)
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes (1 = deterministic reference mode)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic Euclidean corpus")
    g.add_argument("--n", type=parse_range, required=True, help="e.g. 4..35 or 8,10,12")
    g.add_argument("--per-n", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--square", type=float, default=1000.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("baseline", help="Shapley baseline (exact for small n, sampled beyond)")
    b.add_argument("instances", nargs="+")
    b.add_argument("--iters", type=int, default=DEFAULT_ITERATIONS)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--exact-limit", type=int, default=15)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline)

    x = sub.add_parser("proxy", help="compute one proxy allocation per instance")
    x.add_argument("instances", nargs="+")
    x.add_argument("--method", choices=METHODS, required=True)
    x.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    x.add_argument("--iters", type=int, default=DEFAULT_ITERATIONS)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_proxy)

    e = sub.add_parser("eval", help="compare proxy allocations with a baseline")
    e.add_argument("--baseline", required=True)
    e.add_argument("--proxy", action="append", required=True)
    e.add_argument("--exact-p", action="store_true",
                   help="exact permutation p-values for fewer than 8 locations")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep-blend", help="blend error as a function of lambda")
    s.add_argument("instances", nargs="+")
    s.add_argument("--baseline", required=True)
    s.add_argument("--grid", default="0:1:0.1")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("converge", help="sampling error against iteration count")
    c.add_argument("--n", type=int, default=10)
    c.add_argument("--games", type=int, default=50)
    c.add_argument("--iters", default="10,100,1000,5000")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_converge)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, RuntimeError) as e:
        print(f"tsgame {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
