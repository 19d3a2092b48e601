"""Socially optimal routing under complete information.

The number in system is an M/M/1 queue whatever the routing, so the long-run
cost rate is ``lam*(mu-lam)/mu`` times the expected cost of one busy cycle
started from ``(1, 0)``.  Writing that cost as ``d * area(Z) + (c - d) * area(X)``
shows that only ``area(X)`` depends on the routing: for ``c > d`` the problem is
the ``c = 1, d = 0`` one and the optimal policy does not depend on the costs.
With ``lam + mu = 1`` the value iteration is

    v_{n+1}(i, j) = i + mu*v_n(i-1, j) + lam*min(v_n(i+1, j), v_n(i, j+1)),  i >= 2
    v_{n+1}(1, j) = 1 + mu*v_n(j, 0)   + lam*min(v_n(2, j),   v_n(1, j+1))

from ``v_0 = 0`` with ``v(0, 0) = 0``.  An arrival joins the busy queue iff
``v(i+1, j) < v(i, j+1)``.

On the truncated grid the busy action is unavailable at ``i = i_max`` and the
idle action at ``j = j_max``; at the corner the arrival leaves the state
unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import (DecisionTable, GridExhausted, ModelParams, NotConverged, SwitchingCurve,
                    curve_from_table)
from .static import compare

DEFAULT_GRID = 64
DEFAULT_TOL = 1e-9
DEFAULT_WINDOW = 0.5


@dataclass(frozen=True, eq=False)
class ValueTable:
    """``v[i, j]`` on ``0..i_max`` x ``0..j_max`` (row 0 unused except ``v[0, 0] = 0``)."""

    v: np.ndarray
    busy: np.ndarray
    iterations: int
    residual: float
    window: tuple[int, int]
    increments: np.ndarray = field(repr=False)

    @property
    def i_max(self) -> int:
        return self.v.shape[0] - 1

    @property
    def j_max(self) -> int:
        return self.v.shape[1] - 1

    def __call__(self, i: int, j: int) -> float:
        return float(self.v[i, j])

    @property
    def policy(self) -> DecisionTable:
        return DecisionTable(self.busy)

    def to_csv(self, dest=None) -> str:
        lines = ["i,j,v,action"]
        for i in range(1, self.i_max + 1):
            for j in range(self.j_max + 1):
                lines.append(f"{i},{j},{float(self.v[i, j])!r},{'B' if self.busy[i - 1, j] else 'I'}")
        text = "\n".join(lines) + "\n"
        if dest is not None:
            with open(dest, "w") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True, eq=False)
class SocialResult:
    params: ModelParams
    value: ValueTable | None
    g: SwitchingCurve
    alpha: float
    linear_deviation: float
    monotone: bool
    note: str = ""

    def summary(self) -> dict:
        out = {
            "params": self.params.to_dict(),
            "alpha": self.alpha,
            "g": [int(t) for t in self.g.thresholds],
            "max_abs_g_minus_alpha_i": self.linear_deviation,
            "g_monotone": self.monotone,
            "note": self.note,
        }
        if self.value is not None:
            out.update(grid=[self.value.i_max, self.value.j_max], window=list(self.value.window),
                       iterations=self.value.iterations, residual=self.value.residual)
        return out


def alpha_coefficient(rho: float) -> float:
    """Slope of the conjectured linear switching curve ``g(i) = alpha * i``.

    Evaluated as ``(sqrt((1-rho)(1+3rho)) + 1 - rho) / (2(1-rho))``, the
    rationalised form of ``2 rho / (-1 + rho + sqrt((1-rho)(1+3rho)))``, which
    avoids cancellation for small ``rho``.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    s = math.sqrt((1.0 - rho) * (1.0 + 3.0 * rho))
    return (s + 1.0 - rho) / (2.0 * (1.0 - rho))


def _normalized_rates(params: ModelParams) -> tuple[float, float]:
    total = float(params.lam) + float(params.mu)
    return float(params.lam) / total, float(params.mu) / total


def _check_grid(i_max: int, j_max: int):
    if i_max < 2 or j_max < 1:
        raise ValueError("grid needs i_max >= 2 and j_max >= 1")
    if j_max > i_max:
        # v(1, j) looks up v(j, 0)
        raise GridExhausted(f"need i_max >= j_max so that v(j, 0) is on the grid, got {i_max} x {j_max}")


def _bellman(v: np.ndarray, lam: float, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """One Jacobi sweep of the optimality operator (c = 1, d = 0, lam + mu = 1)."""
    i_max, j_max = v.shape[0] - 1, v.shape[1] - 1
    up = np.full((i_max, j_max + 1), np.inf)
    up[:-1] = v[2:]
    side = np.full((i_max, j_max + 1), np.inf)
    side[:, :-1] = v[1:, 1:]
    corner_stuck = ~np.isfinite(up) & ~np.isfinite(side)
    side[corner_stuck] = v[1:][corner_stuck]
    busy = up < side
    arrival = np.where(busy, up, side)
    service = np.empty((i_max, j_max + 1))
    service[1:] = v[1:-1]
    service[0] = v[: j_max + 1, 0]
    new = np.zeros_like(v)
    new[1:] = np.arange(1, i_max + 1)[:, None] + mu * service + lam * arrival
    return new, busy


def value_iteration(params: ModelParams, i_max: int = DEFAULT_GRID, j_max: int = DEFAULT_GRID,
                    tol: float = DEFAULT_TOL, max_sweeps: int = 500_000,
                    window: float = DEFAULT_WINDOW, converge_on: str = "grid") -> ValueTable:
    """Value iteration for the normalised busy-cycle cost.

    ``v`` is reported in uniformised steps of the ``lam + mu = 1`` chain with
    unit holding cost in the busy queue.  Only the arrival/service ratio of
    ``params`` matters.
    """
    _check_grid(i_max, j_max)
    if tol <= 0:
        raise ValueError("tol must be positive")
    lam, mu = _normalized_rates(params)
    wi, wj = max(1, int(i_max * window)), max(0, int(j_max * window))
    ci, cj = (i_max, j_max) if converge_on == "grid" else (wi, wj)
    v = np.zeros((i_max + 1, j_max + 1))
    increments = []
    residual = np.inf
    for n in range(1, max_sweeps + 1):
        new, busy = _bellman(v, lam, mu)
        residual = float(np.max(np.abs(new[1: ci + 1, : cj + 1] - v[1: ci + 1, : cj + 1])))
        increments.append(residual)
        v = new
        if residual < tol:
            break
    else:
        raise NotConverged("value iteration", max_sweeps, residual)
    _, busy = _bellman(v, lam, mu)
    return ValueTable(v, busy, n, residual, (wi, wj), np.asarray(increments))


def bellman_residual(params: ModelParams, value: ValueTable) -> float:
    """Largest violation of the optimality equations on the reporting window."""
    lam, mu = _normalized_rates(params)
    new, _ = _bellman(value.v, lam, mu)
    wi, wj = value.window
    return float(np.max(np.abs(new[1: wi + 1, : wj + 1] - value.v[1: wi + 1, : wj + 1])))


def social_solve(params: ModelParams, i_max: int = DEFAULT_GRID, j_max: int = DEFAULT_GRID,
                 tol: float = DEFAULT_TOL, window: float = DEFAULT_WINDOW) -> SocialResult:
    """Socially optimal switching curve ``g`` on the window rows.

    ``c <= d`` needs no optimisation: every arrival joins the busy queue and
    ``g = -1`` (for ``c = d`` every policy is optimal and this one is returned).
    """
    rho = params.rho
    alpha = alpha_coefficient(rho)
    wi = max(1, int(i_max * window))
    if compare(params.c, params.d) <= 0:
        g = SwitchingCurve(np.full(wi, -1))
        note = "c = d: every policy is optimal" if compare(params.c, params.d) == 0 else "c < d"
        return SocialResult(params, None, g, alpha, _deviation(g, alpha), True, note)
    value = value_iteration(params.with_costs(1.0, 0.0), i_max, j_max, tol, window=window)
    # the top column is forced busy, so rows are read below it
    g = curve_from_table(DecisionTable(value.busy[:wi, :j_max]))
    return SocialResult(params, value, g, alpha, _deviation(g, alpha), g.is_monotone())


def _deviation(g: SwitchingCurve, alpha: float) -> float:
    i = np.arange(1, g.n + 1)
    return float(np.max(np.abs(g.thresholds - alpha * i)))


def busy_cycle_costs(params: ModelParams, policy: DecisionTable | SwitchingCurve,
                     grid: int = 128) -> np.ndarray:
    """Expected cost until the system empties, from every grid state, under a fixed policy.

    Returns ``w[i, j]`` in the original time and cost units, computed by a
    sparse direct solve of the policy's linear equations on the truncated grid
    (same boundary handling as the value iteration).
    """
    lam, mu = float(params.lam), float(params.mu)
    c, d = float(params.c), float(params.d)
    if isinstance(policy, SwitchingCurve):
        table = policy.to_table(grid, grid)
    else:
        table = policy
    n_i, n_j = grid, grid
    rate = lam + mu

    def idx(i, j):
        return (i - 1) * (n_j + 1) + j

    size = n_i * (n_j + 1)
    rows, cols, vals = [], [], []
    rhs = np.empty(size)
    for i in range(1, n_i + 1):
        for j in range(n_j + 1):
            k = idx(i, j)
            rows.append(k), cols.append(k), vals.append(1.0)
            rhs[k] = (c * i + d * j) / rate
            if i >= 2:
                nxt = (i - 1, j)
            elif j > 0:
                nxt = (j, 0)
            else:
                nxt = None
            if nxt is not None:
                rows.append(k), cols.append(idx(*nxt)), vals.append(-mu / rate)
            busy = table.joins_busy(i, j)
            if i == n_i and j == n_j:
                dest = (i, j)
            elif i == n_i:
                dest = (i, j + 1)
            elif j == n_j:
                dest = (i + 1, j)
            else:
                dest = (i + 1, j) if busy else (i, j + 1)
            rows.append(k), cols.append(idx(*dest)), vals.append(-lam / rate)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    sol = spla.spsolve(A, rhs)
    w = np.zeros((n_i + 1, n_j + 1))
    w[1:] = sol.reshape(n_i, n_j + 1)
    return w


def average_cost_of_policy(params: ModelParams, policy: DecisionTable | SwitchingCurve,
                           c: float | None = None, d: float | None = None,
                           grid: int = 128) -> float:
    """Long-run cost per unit time of a complete-information policy.

    Renewal-reward: the cost of a busy cycle started by one customer, divided
    by the mean cycle length ``mu / (lam (mu - lam))``.
    """
    if c is not None or d is not None:
        params = params.with_costs(params.c if c is None else c, params.d if d is None else d)
    w = busy_cycle_costs(params, policy, grid)
    lam, mu = float(params.lam), float(params.mu)
    return lam * (mu - lam) / mu * float(w[1, 0])
