"""Error metrics, rank correlation and corpus summaries for proxy allocations."""

from __future__ import annotations

import csv
import io
import itertools
import math
import statistics
from dataclasses import asdict, dataclass, field

import numpy as np

from .shapley import Allocation

TIE_TOL = 1e-12
# beyond this many permutations the exact null distribution is not enumerated
EXACT_P_LIMIT = 8
CSV_FIELDS = ("instance_id", "n", "proxy", "rmse", "tau", "p", "top1")


def _vec(v) -> np.ndarray:
    if isinstance(v, Allocation):
        v = v.fractional
    return np.asarray(v, dtype=np.float64)


def _pair(a, b):
    a, b = _vec(a), _vec(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"vectors differ in shape: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("vectors must be non-empty")
    return a, b


def rmse(baseline, proxy) -> float:
    a, b = _pair(baseline, proxy)
    diff = np.abs(a - b)
    top = float(diff.max())
    if top == 0:
        return 0.0
    # scale first so tiny differences do not underflow when squared
    return top * math.sqrt(math.fsum((diff / top) ** 2) / a.size)


def population_std(values) -> float:
    """sqrt(sum |x - mean|^2 / n)."""
    return statistics.pstdev(float(v) for v in values)


@dataclass(frozen=True)
class RankCorrelation:
    tau: float
    concordant: int
    discordant: int
    ties_x: int
    ties_y: int
    p: float


def pair_counts(x, y, tol: float = TIE_TOL) -> tuple[int, int, int, int]:
    """Concordant, discordant, tied-only-in-x and tied-only-in-y pairs.

    Pairs tied in both vectors are counted in neither group.
    """
    x, y = _pair(x, y)
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    upper = np.triu(np.ones(dx.shape, dtype=bool), 1)
    tx = np.abs(dx) <= tol
    ty = np.abs(dy) <= tol
    s = np.sign(dx) * np.sign(dy)
    conc = int(np.sum(upper & ~tx & ~ty & (s > 0)))
    disc = int(np.sum(upper & ~tx & ~ty & (s < 0)))
    only_x = int(np.sum(upper & tx & ~ty))
    only_y = int(np.sum(upper & ty & ~tx))
    return conc, disc, only_x, only_y


def tau_b(conc: int, disc: int, tx: int, ty: int) -> float:
    denom = math.sqrt((conc + disc + tx) * (conc + disc + ty))
    return 0.0 if denom == 0 else (conc - disc) / denom


def tau_p_value(tau: float, n: int) -> float:
    """Two-tailed p under the normal approximation to Kendall's tau."""
    if n < 2:
        raise ValueError("need at least two items")
    if tau == 0:
        return 1.0
    z = 3.0 * abs(tau) * math.sqrt(n * (n - 1)) / math.sqrt(2.0 * (2 * n + 5))
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def exact_tau_p_value(tau: float, n: int) -> float:
    """Two-tailed p from the permutation distribution of tau (no ties), n < 8."""
    if not 2 <= n < EXACT_P_LIMIT:
        raise ValueError(f"exact enumeration supports 2 <= n < {EXACT_P_LIMIT}")
    base = list(range(n))
    hits = total = 0
    for perm in itertools.permutations(base):
        c, d, _, _ = pair_counts(base, perm)
        total += 1
        if abs(tau_b(c, d, 0, 0)) >= abs(tau) - 1e-12:
            hits += 1
    return hits / total


def kendall_tau(x, y, exact: bool = False) -> RankCorrelation:
    x, y = _pair(x, y)
    if x.size < 2:
        raise ValueError("Kendall's tau needs at least two items")
    c, d, tx, ty = pair_counts(x, y)
    tau = tau_b(c, d, tx, ty)
    if exact and x.size < EXACT_P_LIMIT:
        p = exact_tau_p_value(tau, x.size)
    else:
        p = tau_p_value(tau, x.size)
    return RankCorrelation(tau, c, d, tx, ty, p)


def top1_match(baseline, proxy) -> bool:
    # np.argmax returns the first maximum, i.e. the lowest index
    a, b = _pair(baseline, proxy)
    return int(np.argmax(a)) == int(np.argmax(b))


def percent_differences(baseline, proxy) -> tuple[np.ndarray, int]:
    """|proxy - base| / |base| * 100, dropping locations where the baseline is zero."""
    a, b = _pair(baseline, proxy)
    keep = a != 0
    return np.abs(b[keep] - a[keep]) / np.abs(a[keep]) * 100.0, int(np.sum(~keep))


@dataclass
class EvalReport:
    instance_id: str | None
    proxy: str
    n: int
    rmse: float
    stdev: float
    mean_pct: float
    max_pct: float
    dropped_pct: int
    rank: RankCorrelation
    top1: bool
    errors: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> dict:
        return {"instance_id": self.instance_id, "n": self.n, "proxy": self.proxy,
                "rmse": repr(self.rmse), "tau": repr(self.rank.tau), "p": repr(self.rank.p),
                "top1": int(self.top1)}


def evaluate(baseline: Allocation, proxy: Allocation, exact_p: bool = False) -> EvalReport:
    if (baseline.instance_id is not None and proxy.instance_id is not None
            and baseline.instance_id != proxy.instance_id):
        raise ValueError(f"instance ids differ: {baseline.instance_id!r} vs {proxy.instance_id!r}")
    a, b = _pair(baseline, proxy)
    errs = b - a
    pct, dropped = percent_differences(a, b)
    rank = kendall_tau(a, b, exact=exact_p) if a.size >= 2 else RankCorrelation(1.0, 0, 0, 0, 0, 1.0)
    return EvalReport(
        instance_id=baseline.instance_id, proxy=proxy.method, n=a.size,
        rmse=rmse(a, b), stdev=population_std(errs),
        mean_pct=float(pct.mean()) if pct.size else math.nan,
        max_pct=float(pct.max()) if pct.size else math.nan,
        dropped_pct=dropped, rank=rank, top1=top1_match(a, b), errors=errs.tolist())


@dataclass(frozen=True)
class CorpusSummary:
    proxy: str
    games: int
    rmse_mean: float
    rmse_std: float
    tau_mean: float
    tau_std: float
    p_median: float
    p_max: float
    top1_fraction: float
    significant: int


def aggregate_corpus(reports: list[EvalReport]) -> CorpusSummary:
    if not reports:
        raise ValueError("no reports to aggregate")
    r = [x.rmse for x in reports]
    t = [x.rank.tau for x in reports]
    p = [x.rank.p for x in reports]
    return CorpusSummary(
        proxy=reports[0].proxy if len({x.proxy for x in reports}) == 1 else "mixed",
        games=len(reports),
        rmse_mean=statistics.fmean(r), rmse_std=population_std(r),
        tau_mean=statistics.fmean(t), tau_std=population_std(t),
        p_median=statistics.median(p), p_max=max(p),
        top1_fraction=sum(x.top1 for x in reports) / len(reports),
        significant=sum(v < 0.05 for v in p))


@dataclass(frozen=True)
class SweepRow:
    lam: float
    max_error: float
    mean_error: float
    rmse: float


def sweep_blend(moats: list, depots: list, baselines: list, grid) -> list[SweepRow]:
    """Corpus means of worst, average and RMS per-location error for each blend weight.

    ``moats``, ``depots`` and ``baselines`` are aligned per instance (allocations
    or fractional vectors).
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty lambda grid")
    if not (len(moats) == len(depots) == len(baselines)) or not baselines:
        raise ValueError("moat, depot and baseline lists must be non-empty and aligned")
    rows = []
    for lam in grid:
        mx, mean, rm = [], [], []
        for m, d, base in zip(moats, depots, baselines):
            base = _vec(base)
            blend = lam * _vec(m) + (1.0 - lam) * _vec(d)
            err = np.abs(blend - base)
            mx.append(float(err.max()))
            mean.append(float(err.mean()))
            rm.append(rmse(base, blend))
        rows.append(SweepRow(float(lam), statistics.fmean(mx), statistics.fmean(mean),
                             statistics.fmean(rm)))
    return rows


def reports_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()
