"""Individually optimal (Nash) routing under complete information.

An arrival seeing ``(i, j)`` pays ``c*i/mu`` if it joins the busy queue and
``d*tau(i, j+1) + c*j/mu`` if it joins the idle queue, where ``tau`` is the
expected time until the busy queue empties *given how later arrivals route*.
The equilibrium is found by the finite-horizon recursion

    tau_0(i, j)     = i / mu
    delta_n(i, j)   = busy iff c*i/mu <= d*tau_n(i, j+1) + c*j/mu
    tau_{n+1}(i, j) = 1/(lam+mu) + mu/(lam+mu) * tau_n(i-1, j)
                      + lam/(lam+mu) * tau_n(delta_n(i, j))

with ``tau_n(0, j) = 0``.  ``tau_n`` increases to its limit, and the limiting
decisions form the equilibrium table ``f*``.

An arrival facing equal costs is indifferent.  By default it joins the busy
queue (``ties="busy"``), so that with ``d = 0`` the equilibrium is join the
shortest queue with ties to the busy queue, ``h(i) = i - 1``; ``ties="idle"``
sends it to the idle queue instead.

Computation is on the truncated grid ``0..i_max`` x ``0..j_max``.  Off-grid
values are closed by ``tau(i, j_max+1) = tau(i, j_max)`` and
``tau(i_max+1, j) = tau(i_max, j) + 1/(mu - lam)``; results are reported on
the lower-left window only.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import (Action, DecisionTable, GridExhausted, ModelParams, NotConverged,
                    State, SwitchingCurve, curve_from_table)

log = logging.getLogger(__name__)

DEFAULT_GRID = 64
DEFAULT_TOL = 1e-9
DEFAULT_WINDOW = 0.5
MONOTONE_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class TauTable:
    """``tau[i, j]`` for ``0 <= i <= i_max``, ``0 <= j <= j_max`` (row 0 is zero),
    plus the arrival decisions ``busy[i-1, j]`` computed from this ``tau``."""

    tau: np.ndarray
    busy: np.ndarray
    horizon: int
    ties: str = "busy"

    @property
    def i_max(self) -> int:
        return self.tau.shape[0] - 1

    @property
    def j_max(self) -> int:
        return self.tau.shape[1] - 1

    def __call__(self, i: int, j: int) -> float:
        return float(self.tau[i, j])

    def delta(self, i: int, j: int) -> State:
        """Successor state when an arrival finds ``(i, j)``."""
        if i < 1:
            raise ValueError("decisions are defined for i >= 1")
        return State(i + 1, j) if self.busy[i - 1, j] else State(i, j + 1)

    def decisions(self) -> DecisionTable:
        return DecisionTable(self.busy)

    def to_csv(self, dest=None) -> str:
        lines = ["i,j,tau"]
        for i in range(self.i_max + 1):
            for j in range(self.j_max + 1):
                lines.append(f"{i},{j},{float(self.tau[i, j])!r}")
        text = "\n".join(lines) + "\n"
        if dest is not None:
            with open(dest, "w") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    params: ModelParams
    f_star: DecisionTable
    tau: TauTable
    h: SwitchingCurve
    iterations: int
    residual: float
    window: tuple[int, int]
    increments: np.ndarray = field(repr=False)
    monotonicity_violations: dict | None = None

    def summary(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "grid": [self.tau.i_max, self.tau.j_max],
            "window": list(self.window),
            "iterations": self.iterations,
            "residual": self.residual,
            "h": [int(t) for t in self.h.thresholds],
            "monotonicity_violations": self.monotonicity_violations,
        }


def _closed(tau: np.ndarray, lam: float, mu: float) -> np.ndarray:
    """Pad ``tau`` with one extra row and column using the grid closures."""
    i_max, j_max = tau.shape[0] - 1, tau.shape[1] - 1
    ext = np.empty((i_max + 2, j_max + 2))
    ext[: i_max + 1, : j_max + 1] = tau
    ext[: i_max + 1, j_max + 1] = tau[:, j_max]
    ext[i_max + 1, :] = ext[i_max, :] + 1.0 / (mu - lam)
    return ext


def _check_ties(ties: str):
    if ties not in ("busy", "idle"):
        raise ValueError("ties must be 'busy' or 'idle'")


def _prefers_busy(busy_cost, idle_cost, ties: str):
    return busy_cost <= idle_cost if ties == "busy" else busy_cost < idle_cost


def _decide(params: ModelParams, tau: np.ndarray, ties: str = "busy") -> np.ndarray:
    """Arrival decisions from ``tau``."""
    lam, mu, c, d = (float(x) for x in (params.lam, params.mu, params.c, params.d))
    i_max, j_max = tau.shape[0] - 1, tau.shape[1] - 1
    ext = _closed(tau, lam, mu)
    i = np.arange(1, i_max + 1)[:, None]
    j = np.arange(j_max + 1)[None, :]
    return _prefers_busy(c * i / mu, d * ext[1: i_max + 1, 1: j_max + 2] + c * j / mu, ties)


def _advance(params: ModelParams, tau: np.ndarray, busy: np.ndarray) -> np.ndarray:
    lam, mu = float(params.lam), float(params.mu)
    i_max, j_max = tau.shape[0] - 1, tau.shape[1] - 1
    ext = _closed(tau, lam, mu)
    down = ext[0:i_max, 0: j_max + 1]
    up = ext[2: i_max + 2, 0: j_max + 1]
    side = ext[1: i_max + 1, 1: j_max + 2]
    out = np.zeros_like(tau)
    out[1:] = (1.0 + mu * down + lam * np.where(busy, up, side)) / (lam + mu)
    return out


def initial_tau(params: ModelParams, i_max: int = DEFAULT_GRID, j_max: int = DEFAULT_GRID,
                ties: str = "busy") -> TauTable:
    """Zero-horizon table: no more arrivals, so ``tau_0(i, j) = i / mu``."""
    if i_max < 1 or j_max < 0:
        raise ValueError("grid needs i_max >= 1 and j_max >= 0")
    _check_ties(ties)
    tau = np.repeat(np.arange(i_max + 1, dtype=float)[:, None] / float(params.mu), j_max + 1, axis=1)
    return TauTable(tau, _decide(params, tau, ties), 0, ties)


def tau_step(params: ModelParams, table: TauTable) -> TauTable:
    """One horizon step: ``tau_{n+1}`` from ``tau_n`` and ``delta_n``."""
    new = _advance(params, table.tau, table.busy)
    return TauTable(new, _decide(params, new, table.ties), table.horizon + 1, table.ties)


def window_bounds(i_max: int, j_max: int, ratio: float = DEFAULT_WINDOW) -> tuple[int, int]:
    return max(1, int(i_max * ratio)), max(0, int(j_max * ratio))


def monotonicity_violations(params: ModelParams, table: TauTable, previous: TauTable | None = None) -> dict:
    """Check the four monotonicity/boundedness relations of ``tau_n``.

    Returns ``{name: None}`` when a relation holds everywhere on the grid,
    otherwise ``{name: (i, j)}`` with the first offending point.
    """
    t = table.tau[1:]
    tol = MONOTONE_ATOL * np.maximum(1.0, np.abs(t))
    i = np.arange(1, table.i_max + 1)[:, None]
    checks = {
        "tau(i,j)<=tau(i,j+1)": t[:, :-1] <= t[:, 1:] + tol[:, :-1],
        "tau(i,j+1)<=tau(i+1,j)": t[:-1, 1:] <= t[1:, :-1] + tol[:-1, 1:],
        "tau(i,j)<=i/(mu-lam)": t <= i / (float(params.mu) - float(params.lam)) + tol,
    }
    if previous is not None:
        checks["tau_n<=tau_n+1"] = previous.tau[1:] <= t + tol
    out = {}
    for name, ok in checks.items():
        bad = np.argwhere(~ok)
        out[name] = None if bad.size == 0 else (int(bad[0][0]) + 1, int(bad[0][1]))
    return out


def solve_equilibrium(params: ModelParams, i_max: int = DEFAULT_GRID, j_max: int = DEFAULT_GRID,
                      tol: float = DEFAULT_TOL, max_iters: int = 200_000,
                      window: float = DEFAULT_WINDOW, check_monotone: bool = False,
                      converge_on: str = "grid", ties: str = "busy") -> EquilibriumResult:
    """Iterate the horizon recursion until the sup-norm increment drops below ``tol``.

    The increment is measured over the whole grid by default, or over the
    reporting window only with ``converge_on="window"``.  The window stopping
    rule leaves an error of roughly ten times ``tol`` because the remaining
    increments decay geometrically.

    With ``check_monotone`` every horizon is checked against the monotonicity
    relations and the first witness of each violated relation is kept.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if j_max < i_max:
        raise GridExhausted(f"need j_max >= i_max for the column closure, got {i_max} x {j_max}")
    if converge_on not in ("grid", "window"):
        raise ValueError("converge_on must be 'grid' or 'window'")
    wi, wj = window_bounds(i_max, j_max, window)
    ci, cj = (i_max, j_max) if converge_on == "grid" else (wi, wj)
    table = initial_tau(params, i_max, j_max, ties)
    violations = {} if check_monotone else None
    increments = []
    residual = np.inf
    for n in range(1, max_iters + 1):
        new = tau_step(params, table)
        if check_monotone:
            for name, witness in monotonicity_violations(params, new, table).items():
                if witness is not None and violations.get(name) is None:
                    violations[name] = (n, *witness)
                violations.setdefault(name, None)
        residual = float(np.max(np.abs(new.tau[1: ci + 1, : cj + 1] - table.tau[1: ci + 1, : cj + 1])))
        increments.append(residual)
        table = new
        if residual < tol:
            break
    else:
        raise NotConverged("equilibrium recursion", max_iters, residual)
    log.debug("equilibrium converged in %d steps, residual %.3e", table.horizon, residual)
    f_star = table.decisions()
    h = curve_from_table(f_star.window(wi, j_max))
    return EquilibriumResult(params, f_star, table, h, table.horizon, residual, (wi, wj),
                             np.asarray(increments), violations)


def tau_policy_eval(params: ModelParams, table: DecisionTable, i_max: int | None = None,
                    j_max: int | None = None, tol: float = 1e-12,
                    max_iters: int = 1_000_000) -> TauTable:
    """Expected time to empty the busy queue when every arrival follows ``table``.

    Successive substitution from zero on the same closed grid as
    :func:`solve_equilibrium`.
    """
    i_max = table.i_max if i_max is None else i_max
    j_max = table.j_max if j_max is None else j_max
    busy = np.array([[table.joins_busy(i, j) for j in range(j_max + 1)]
                     for i in range(1, i_max + 1)], dtype=bool)
    tau = np.zeros((i_max + 1, j_max + 1))
    residual = np.inf
    for n in range(1, max_iters + 1):
        new = _advance(params, tau, busy)
        residual = float(np.max(np.abs(new - tau)))
        tau = new
        if residual < tol:
            return TauTable(tau, busy, n)
    raise NotConverged("policy evaluation", max_iters, residual)


@dataclass(frozen=True)
class PropertyCheck:
    passed: bool
    counterexample: tuple | None = None


@dataclass(frozen=True)
class StructureReport:
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def __getitem__(self, name: str) -> PropertyCheck:
        return self.checks[name]

    def to_dict(self) -> dict:
        return {k: {"passed": v.passed, "counterexample": v.counterexample}
                for k, v in self.checks.items()}


def verify_structure(result: EquilibriumResult | DecisionTable, tau: TauTable | None = None,
                     window: tuple[int, int] | None = None, concavity_tol: float = 1e-9) -> StructureReport:
    """Check the equilibrium's structural properties on the reporting window.

    * ``busy_when_not_longer``: join busy whenever ``1 <= i <= j``;
    * ``monotone_in_j``: busy at ``(i, j)`` implies busy at ``(i, j+1)``;
    * ``monotone_in_i``: busy at ``(i, j)`` with ``i >= 2`` implies busy at ``(i-1, j)``;
    * ``concave_tau``: along each column, ``tau(k, j)`` is concave over the all-busy prefix.

    The concavity check needs ``tau`` and is skipped for a bare table.
    """
    if isinstance(result, EquilibriumResult):
        table, tau = result.f_star, result.tau
        window = result.window if window is None else window
    else:
        table = result
    wi, wj = window if window is not None else (table.i_max, table.j_max)
    wi, wj = min(wi, table.i_max), min(wj, table.j_max)
    b = table.busy[:wi, : wj + 1]

    def first(mask):
        bad = np.argwhere(mask)
        if bad.size == 0:
            return PropertyCheck(True)
        return PropertyCheck(False, (int(bad[0][0]) + 1, int(bad[0][1])))

    i = np.arange(1, wi + 1)[:, None]
    j = np.arange(wj + 1)[None, :]
    checks = {
        "busy_when_not_longer": first((i <= j) & ~b),
        "monotone_in_j": first(b[:, :-1] & ~b[:, 1:]),
        "monotone_in_i": _shift_check(b),
    }
    if tau is not None:
        checks["concave_tau"] = _concavity(b, tau, concavity_tol)
    return StructureReport(checks)


def _shift_check(b: np.ndarray) -> PropertyCheck:
    bad = np.argwhere(b[1:] & ~b[:-1])
    if bad.size == 0:
        return PropertyCheck(True)
    return PropertyCheck(False, (int(bad[0][0]) + 2, int(bad[0][1])))


def _concavity(b: np.ndarray, tau: TauTable, tol: float) -> PropertyCheck:
    for j in range(b.shape[1]):
        col = b[:, j]
        prefix = int(np.argmin(col)) if not col.all() else col.size
        if prefix < 3:
            continue
        second = np.diff(tau.tau[1: prefix + 1, j], 2)
        bad = np.nonzero(second > tol)[0]
        if bad.size:
            return PropertyCheck(False, (int(bad[0]) + 2, j))
    return PropertyCheck(True)


def fixed_point_mismatches(result: EquilibriumResult) -> list[tuple[int, int]]:
    """Window states where ``f*`` disagrees with the defining cost comparison."""
    p = result.params
    wi, wj = result.window
    ext = _closed(result.tau.tau, float(p.lam), float(p.mu))
    out = []
    for i in range(1, wi + 1):
        for j in range(wj + 1):
            busy = _prefers_busy(p.c * i / p.mu, p.d * ext[i, j + 1] + p.c * j / p.mu, result.tau.ties)
            if busy != bool(result.f_star.busy[i - 1, j]):
                out.append((i, j))
    return out


def single_smart_customer(params: ModelParams, p: float, i: int, j: int, ties: str = "busy") -> Action:
    """Best response of one customer when everyone else joins the busy queue
    with probability ``p`` regardless of the state.

    Waiting in the idle queue lasts ``i`` busy periods of a queue fed at rate
    ``lam * p``.
    """
    lam, mu, c, d = params.lam, params.mu, params.c, params.d
    _check_ties(ties)
    if _prefers_busy(c * i / mu, d * i / (mu - lam * p) + c * j / mu, ties):
        return Action.BUSY
    return Action.IDLE
