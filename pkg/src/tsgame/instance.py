"""Traveling salesperson game instances.

An :class:`Instance` holds a depot (always index 0) plus ``n`` locations
(indices ``1..n``), a full ``(n+1) x (n+1)`` distance matrix and, optionally,
the planar coordinates the matrix was built from and per-location fixed costs.

Coalitions are plain ``int`` bitmasks: location ``i`` is bit ``i - 1``. The
depot is never a member; it is implicit in every tour.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rng import Stream

DEFAULT_SQUARE = 1000.0


class InstanceError(ValueError):
    """Malformed instance data."""


class InstanceFormatError(InstanceError):
    """An instance file could not be parsed."""


def coalition_mask(members: Iterable[int]) -> int:
    """Bitmask for a collection of location indices (1-based)."""
    mask = 0
    for i in members:
        if i < 1:
            raise ValueError(f"location index must be >= 1, got {i}")
        mask |= 1 << (i - 1)
    return mask


def coalition_members(mask: int) -> list[int]:
    """Sorted location indices in ``mask``."""
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def euclidean_matrix(coords: np.ndarray) -> np.ndarray:
    pts = np.asarray(coords, dtype=np.float64)
    dx = pts[:, 0][:, None] - pts[:, 0][None, :]
    dy = pts[:, 1][:, None] - pts[:, 1][None, :]
    return np.hypot(dx, dy)


def _frozen(a: np.ndarray | None) -> np.ndarray | None:
    if a is None:
        return None
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Instance:
    """Depot + locations with a distance matrix; immutable."""

    distances: np.ndarray
    coords: np.ndarray | None = None
    fixed_costs: np.ndarray | None = None
    seed: int | None = None
    id: str | None = None

    def __post_init__(self):
        d = _frozen(self.distances)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise InstanceError(f"distance matrix must be square, got shape {d.shape}")
        if np.any(np.isnan(d)):
            raise InstanceError("distance matrix contains NaN")
        if np.any(d < 0):
            i, j = np.argwhere(d < 0)[0]
            raise InstanceError(f"negative distance d[{i},{j}] = {d[i, j]}")
        if np.any(np.diag(d) != 0):
            raise InstanceError("diagonal of the distance matrix must be zero")
        object.__setattr__(self, "distances", d)
        if self.coords is not None:
            c = _frozen(self.coords)
            if c.shape != (d.shape[0], 2):
                raise InstanceError(
                    f"coords must have shape ({d.shape[0]}, 2), got {c.shape}")
            object.__setattr__(self, "coords", c)
        if self.fixed_costs is not None:
            f = _frozen(self.fixed_costs)
            if f.shape != (d.shape[0] - 1,):
                raise InstanceError(
                    f"expected {d.shape[0] - 1} fixed costs, got {f.size}")
            if np.any(f < 0) or not np.all(np.isfinite(f)):
                raise InstanceError("fixed costs must be finite and non-negative")
            object.__setattr__(self, "fixed_costs", f)

    @classmethod
    def from_coords(cls, coords, **kw) -> "Instance":
        coords = np.asarray(coords, dtype=np.float64)
        return cls(euclidean_matrix(coords), coords=coords, **kw)

    @property
    def n(self) -> int:
        return self.distances.shape[0] - 1

    @property
    def grand(self) -> int:
        """Bitmask of the grand coalition."""
        return (1 << self.n) - 1

    @property
    def degenerate(self) -> bool:
        """True when two distinct points are at distance zero."""
        d = self.distances
        off = ~np.eye(d.shape[0], dtype=bool)
        return bool(np.any(d[off] == 0))

    def with_fixed_costs(self, fixed_costs) -> "Instance":
        return Instance(self.distances, coords=self.coords, fixed_costs=fixed_costs,
                        seed=self.seed, id=self.id)

    def without_fixed_costs(self) -> "Instance":
        return Instance(self.distances, coords=self.coords, seed=self.seed, id=self.id)

    def relabel(self, perm: Sequence[int]) -> "Instance":
        """Instance whose location ``k+1`` is this instance's location ``perm[k]``."""
        order = np.array([0, *perm])
        if sorted(order[1:].tolist()) != list(range(1, self.n + 1)):
            raise ValueError("perm must be a permutation of 1..n")
        return Instance(
            self.distances[np.ix_(order, order)],
            coords=None if self.coords is None else self.coords[order],
            fixed_costs=None if self.fixed_costs is None else self.fixed_costs[order[1:] - 1],
            seed=self.seed, id=self.id)

    def scaled(self, k: float) -> "Instance":
        return Instance(self.distances * k,
                        coords=None if self.coords is None else self.coords * k,
                        fixed_costs=self.fixed_costs, seed=self.seed, id=self.id)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)

        return (same(self.distances, other.distances) and same(self.coords, other.coords)
                and same(self.fixed_costs, other.fixed_costs)
                and self.seed == other.seed and self.id == other.id)

    __hash__ = None


@dataclass(frozen=True)
class ValidationReport:
    symmetric: bool
    metric: bool
    finite: bool
    worst_violation: tuple[int, int, int] | None = None
    violation: float = 0.0
    degenerate: bool = False
    notes: list[str] = field(default_factory=list)


def generate_euclidean(n: int, seed: int, square: float = DEFAULT_SQUARE,
                       id: str | None = None) -> Instance:
    """Depot plus ``n`` locations uniform in ``[0, square]^2``.

    Coordinates are drawn as doubles, stored at single precision (the corpus
    recipe) and widened back to double for every distance computation.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    stream = Stream(seed)
    pts = np.empty((n + 1, 2), dtype=np.float64)
    for k in range(n + 1):
        for a in range(2):
            pts[k, a] = np.float64(np.float32(stream.uniform() * square))
    return Instance.from_coords(pts, seed=int(seed), id=id)


def symmetrize(inst: Instance) -> Instance:
    """Resolve asymmetry by taking the larger of the two directed distances."""
    d = np.maximum(inst.distances, inst.distances.T)
    return Instance(d, fixed_costs=inst.fixed_costs, seed=inst.seed, id=inst.id)


def validate(inst: Instance) -> ValidationReport:
    d = inst.distances
    finite = bool(np.all(np.isfinite(d)))
    symmetric = bool(np.array_equal(d, d.T))
    fin = d[np.isfinite(d)]
    scale = float(fin.max()) if fin.size else 0.0
    tol = 1e-9 * scale
    # via[i, j, k] = d_ij + d_jk - d_ik; a violation is a negative entry
    with np.errstate(invalid="ignore"):
        slack = d[:, :, None] + d[None, :, :] - d[:, None, :]
    slack = np.where(np.isnan(slack), np.inf, slack)
    idx = np.unravel_index(int(np.argmin(slack)), slack.shape)
    worst = float(slack[idx])
    metric = bool(worst >= -tol)
    notes = []
    if not finite:
        notes.append("non-finite distances present")
    return ValidationReport(
        symmetric=symmetric,
        metric=metric,
        finite=finite,
        worst_violation=None if metric else tuple(int(v) for v in idx),
        violation=0.0 if metric else -worst,
        degenerate=inst.degenerate,
        notes=notes,
    )


# -- file formats ---------------------------------------------------------

def instance_to_dict(inst: Instance) -> dict:
    out: dict = {"n": inst.n}
    if inst.coords is not None:
        out["coords"] = inst.coords.tolist()
    else:
        out["matrix"] = inst.distances.tolist()
    if inst.fixed_costs is not None:
        out["fixed_costs"] = inst.fixed_costs.tolist()
    if inst.seed is not None:
        out["seed"] = inst.seed
    if inst.id is not None:
        out["id"] = inst.id
    return out


def instance_from_dict(data: dict, source: str = "<dict>") -> Instance:
    if not isinstance(data, dict):
        raise InstanceFormatError(f"{source}: top level must be a JSON object")
    if "n" not in data:
        raise InstanceFormatError(f"{source}: missing field 'n'")
    n = data["n"]
    if not isinstance(n, int) or n < 1:
        raise InstanceFormatError(f"{source}: field 'n' must be a positive integer")
    has_c, has_m = "coords" in data, "matrix" in data
    if has_c == has_m:
        raise InstanceFormatError(f"{source}: exactly one of 'coords' or 'matrix' is required")
    try:
        if has_c:
            coords = np.asarray(data["coords"], dtype=np.float64)
            if coords.shape != (n + 1, 2):
                raise InstanceFormatError(
                    f"{source}: field 'coords' must hold n+1={n + 1} [x, y] pairs, "
                    f"got shape {coords.shape}")
            inst_kw = dict(coords=coords)
            matrix = euclidean_matrix(coords)
        else:
            matrix = np.asarray(data["matrix"], dtype=np.float64)
            if matrix.shape != (n + 1, n + 1):
                raise InstanceFormatError(
                    f"{source}: field 'matrix' must be {n + 1}x{n + 1}, got shape {matrix.shape}")
            inst_kw = {}
        fixed = data.get("fixed_costs")
        if fixed is not None and len(fixed) != n:
            raise InstanceFormatError(
                f"{source}: field 'fixed_costs' has {len(fixed)} entries, expected n={n}")
        return Instance(matrix, fixed_costs=fixed, seed=data.get("seed"),
                        id=data.get("id"), **inst_kw)
    except InstanceFormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"{source}: {exc}") from exc


def write_instance(inst: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst)) + "\n")


def read_instance(path) -> Instance:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv_coords(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return instance_from_dict(data, source=str(path))


def read_csv_coords(path) -> Instance:
    """``id,x,y`` rows with the depot first; a header row is optional."""
    path = Path(path)
    pts = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise InstanceFormatError(f"{path}: line {lineno}: expected 3 fields (id,x,y)")
            try:
                x, y = float(row[1]), float(row[2])
            except ValueError:
                if lineno == 1:
                    continue
                raise InstanceFormatError(
                    f"{path}: line {lineno}: x/y are not numbers: {row[1]!r}, {row[2]!r}") from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise InstanceFormatError(f"{path}: line {lineno}: non-finite coordinate")
            pts.append((x, y))
    if len(pts) < 2:
        raise InstanceFormatError(f"{path}: need a depot row and at least one location")
    return Instance.from_coords(np.array(pts), id=path.stem)
