"""Dense revised simplex for ``max c.x  s.t.  A x <= b, x >= 0`` with ``b >= 0``.

The all-slack basis is feasible, so no phase one is needed. Columns can be
appended between solves and the previous basis is reused as a warm start,
which is what column generation needs. Pivoting follows Bland's rule
(lowest-index improving column, lowest-index leaving variable among ratio
ties) so degenerate problems terminate and the optimum returned is a pure
function of the input order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPError(RuntimeError):
    def __init__(self, msg: str, trace: list[str] | None = None):
        super().__init__(msg)
        self.trace = trace or []


@dataclass
class LPResult:
    x: np.ndarray          # structural values
    duals: np.ndarray      # one per row, >= 0 at optimality
    objective: float
    pivots: int


class DenseSimplex:
    REFACTOR_EVERY = 64

    def __init__(self, b: np.ndarray, tol: float = 1e-9):
        b = np.asarray(b, dtype=np.float64)
        if np.any(b < 0):
            raise ValueError("right-hand side must be non-negative")
        self.b = b
        self.m = b.size
        self.tol = tol
        self.cols = np.zeros((self.m, 0))
        self.costs = np.zeros(0)
        # basis entries: j >= 0 is structural column j, -(e + 1) is the slack of row e
        self.basis = [-(e + 1) for e in range(self.m)]
        self.binv = np.eye(self.m)
        self.xb = b.copy()
        self.pivots = 0
        self.trace: list[str] = []

    @property
    def k(self) -> int:
        return self.costs.size

    def add_columns(self, cols: np.ndarray, costs) -> None:
        cols = np.asarray(cols, dtype=np.float64).reshape(self.m, -1)
        self.cols = np.hstack([self.cols, cols])
        self.costs = np.concatenate([self.costs, np.asarray(costs, dtype=np.float64)])

    def _basis_matrix(self) -> np.ndarray:
        B = np.zeros((self.m, self.m))
        for r, v in enumerate(self.basis):
            if v >= 0:
                B[:, r] = self.cols[:, v]
            else:
                B[-v - 1, r] = 1.0
        return B

    def _refactor(self) -> None:
        B = self._basis_matrix()
        self.binv = np.linalg.inv(B)
        self.xb = self.binv @ self.b
        self.xb[np.abs(self.xb) < self.tol * max(1.0, float(self.b.max(initial=0)))] = 0.0

    def _cb(self) -> np.ndarray:
        return np.array([self.costs[v] if v >= 0 else 0.0 for v in self.basis])

    @staticmethod
    def _order_key(v: int, k: int) -> int:
        # structural columns first (insertion order), then slacks
        return v if v >= 0 else k + (-v - 1)

    def solve(self, max_pivots: int = 200_000) -> LPResult:
        m, k = self.m, self.k
        scale = max(1.0, float(np.abs(self.costs).max(initial=0)))
        opt_tol = self.tol * scale
        while True:
            y = self._cb() @ self.binv
            red = self.costs - y @ self.cols
            entering = None
            cand = np.flatnonzero(red > opt_tol)
            if cand.size:
                entering = int(cand[0])
            else:
                slack = np.flatnonzero(-y > opt_tol)
                if slack.size:
                    entering = -(int(slack[0]) + 1)
            if entering is None:
                break
            a = self.cols[:, entering] if entering >= 0 else np.eye(m)[:, -entering - 1]
            u = self.binv @ a
            rows = np.flatnonzero(u > self.tol)
            if rows.size == 0:
                raise LPError("LP is unbounded", self.trace[-20:])
            ratios = self.xb[rows] / u[rows]
            best = ratios.min()
            ties = rows[ratios <= best + self.tol * max(1.0, abs(best))]
            leave = min(ties, key=lambda r: self._order_key(self.basis[r], k))
            piv = u[leave]
            self.binv[leave] /= piv
            self.xb[leave] /= piv
            others = np.arange(m) != leave
            self.binv[others] -= np.outer(u[others], self.binv[leave])
            self.xb[others] -= u[others] * self.xb[leave]
            np.maximum(self.xb, 0.0, out=self.xb)
            self.basis[leave] = entering
            self.pivots += 1
            if len(self.trace) < 10_000:
                self.trace.append(f"pivot {self.pivots}: in {entering} out row {leave} step {best:.6g}")
            if self.pivots % self.REFACTOR_EVERY == 0:
                self._refactor()
            if self.pivots > max_pivots:
                raise LPError(f"no optimum after {max_pivots} pivots", self.trace[-20:])
        self._refactor()
        x = np.zeros(k)
        for r, v in enumerate(self.basis):
            if v >= 0:
                x[v] = max(self.xb[r], 0.0)
        B = self._basis_matrix()
        duals = np.linalg.solve(B.T, self._cb())
        return LPResult(x=x, duals=duals, objective=float(self.costs @ x), pivots=self.pivots)
