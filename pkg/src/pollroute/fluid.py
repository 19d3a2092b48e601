"""Optimal routing in the deterministic fluid version of the polling system.

Fluid arrives at rate ``lam`` and the server drains the busy queue at rate
``mu``; the total content ``z`` falls at rate ``mu - lam`` whatever the routing.
For ``c > d`` an optimal policy fills the idle queue first in each cycle, and
the per-cycle choice reduces to the scalar constrained LQR

    min sum_k (1 - rho) x_k^2 + rho u_k^2,   x_{k+1} = rho (x_k - u_k),   0 <= u_k <= x_k,

where ``x_k`` is the busy content at the ``k``-th switch and ``u_k`` the busy
content left when the idle queue stops being fed.  The optimal feedback is
linear, ``x_{k+1} = beta x_k``, and as a state-feedback rule it routes to the
idle queue exactly while ``y < alpha x``.

Trajectories are piecewise linear and are integrated exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .model import ModelError, ModelParams
from .social import alpha_coefficient
from .static import compare

TRUNCATE_REL = 1e-12


class NonTerminating(ModelError, RuntimeError):
    pass


@dataclass(frozen=True)
class FluidState:
    x: float
    y: float
    t: float = 0.0

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValueError("fluid levels must be non-negative")

    @property
    def z(self) -> float:
        return self.x + self.y


@dataclass(frozen=True)
class FluidCycle:
    k: int
    x: float
    u: float
    v: float
    t: float
    cycle_cost: float

    def __post_init__(self):
        if not -1e-15 <= self.u <= self.x * (1 + 1e-15):
            raise ValueError(f"cycle {self.k}: u={self.u} outside [0, x={self.x}]")


@dataclass(frozen=True)
class RiccatiSolution:
    p: float
    f: float
    a: float
    b: float
    q: float
    r: float

    @property
    def residual(self) -> float:
        return riccati_residual(self.p, self.a, self.b, self.q, self.r)


class OptimalCoefficients(NamedTuple):
    u_ratio: float
    beta: float
    alpha: float


def riccati_residual(p: float, a: float, b: float, q: float, r: float) -> float:
    return abs(p - q - a * (p - p * b * b * p / (r + b * p * b)) * a)


def solve_scalar_dare(a: float, b: float, q: float, r: float) -> RiccatiSolution:
    """Non-negative root of the scalar discrete algebraic Riccati equation.

    Clearing the denominator gives ``b^2 p^2 + (r - q b^2 - a^2 r) p - q r = 0``;
    the root is taken in whichever algebraic form avoids cancellation.
    """
    if q < 0 or r <= 0:
        raise ValueError("need q >= 0 and r > 0")
    A, B, C = b * b, r - q * b * b - a * a * r, -q * r
    if A == 0:
        p = -C / B
    else:
        disc = math.sqrt(B * B - 4 * A * C)
        p = 2 * -C / (B + disc) if B >= 0 else (-B + disc) / (2 * A)
    f = b * p * a / (r + b * p * b)
    return RiccatiSolution(p, f, a, b, q, r)


def riccati_solve(rho: float) -> RiccatiSolution:
    """Riccati data of the fluid LQR: ``a = rho, b = -rho, q = 1 - rho, r = rho``."""
    _check_rho(rho)
    return solve_scalar_dare(rho, -rho, 1.0 - rho, rho)


def _surd(rho: float) -> float:
    return math.sqrt((1.0 - rho) * (1.0 + 3.0 * rho))


def optimal_coefficients(rho: float) -> OptimalCoefficients:
    """``(u_k / x_k, x_{k+1} / x_k, alpha)`` in closed form."""
    _check_rho(rho)
    s = _surd(rho)
    u_ratio = (-(1.0 - rho) + s) / (1.0 + rho + s)
    beta = 2.0 * rho / (1.0 + rho + s)
    return OptimalCoefficients(u_ratio, beta, alpha_coefficient(rho))


def cycle_cost(x: float, v: float, params: ModelParams) -> float:
    """Cost of a cycle that starts with ``x`` in the busy queue and feeds the
    idle queue for the first ``v`` time units."""
    lam, mu, c, d = (float(t) for t in (params.lam, params.mu, params.c, params.d))
    rest = x - mu * v
    return (c * ((2 * x - mu * v) / 2 * v + rest ** 2 / (2 * (mu - lam)))
            + d * (lam * v ** 2 / 2 + lam * v * rest / (mu - lam)))


@dataclass(frozen=True, eq=False)
class LQRTrajectory:
    params: ModelParams
    cycles: list[FluidCycle]
    total_cost: float
    tail_cost: float
    drain_time: float
    coefficients: OptimalCoefficients | None

    def summary(self) -> dict:
        co = self.coefficients
        return {
            "params": self.params.to_dict(),
            "alpha": None if co is None else co.alpha,
            "beta": None if co is None else co.beta,
            "u_ratio": None if co is None else co.u_ratio,
            "total_cost": self.total_cost,
            "tail_cost": self.tail_cost,
            "drain_time": self.drain_time,
            "cycles": [{"k": cy.k, "x": cy.x, "u": cy.u, "v": cy.v, "t": cy.t,
                        "cycle_cost": cy.cycle_cost} for cy in self.cycles],
        }


def lqr_trajectory(x0: float, params: ModelParams, num_cycles: int = 64) -> LQRTrajectory:
    """Switch-by-switch optimal fluid trajectory from ``(x0, 0)``.

    For ``c <= d`` every drop goes to the busy queue and there is one cycle.
    Otherwise cycles are listed until ``num_cycles`` or until ``x_k`` falls
    below ``1e-12 * x0``; ``total_cost`` adds the geometric tail of the
    cycles not listed.
    """
    if x0 <= 0:
        raise ValueError("x0 must be positive")
    if num_cycles < 1:
        raise ValueError("num_cycles must be >= 1")
    lam, mu = float(params.lam), float(params.mu)
    drain = x0 / (mu - lam)
    if compare(params.c, params.d) <= 0:
        cost = cycle_cost(x0, 0.0, params)
        return LQRTrajectory(params, [FluidCycle(0, x0, x0, 0.0, 0.0, cost)], cost, 0.0, drain, None)
    co = optimal_coefficients(params.rho)
    cycles = []
    x, t = x0, 0.0
    for k in range(num_cycles):
        u = co.u_ratio * x
        v = (x - u) / mu
        cycles.append(FluidCycle(k, x, u, v, t, cycle_cost(x, v, params)))
        t += v + u / (mu - lam)
        x = co.beta * x
        if x < TRUNCATE_REL * x0:
            break
    listed = sum(cy.cycle_cost for cy in cycles)
    # cycle cost scales with x_k^2
    per_unit = cycles[0].cycle_cost / x0 ** 2
    tail = per_unit * x ** 2 / (1.0 - co.beta ** 2)
    return LQRTrajectory(params, cycles, listed + tail, tail, drain, co)


@dataclass(frozen=True)
class RateSchedule:
    """Piecewise-constant rate routed to the idle queue: ``(duration, rate)``
    segments from time 0; afterwards everything goes to the busy queue."""

    segments: tuple[tuple[float, float], ...]

    def __init__(self, segments: Sequence[tuple[float, float]]):
        object.__setattr__(self, "segments", tuple((float(a), float(b)) for a, b in segments))
        if any(dur < 0 for dur, _ in self.segments):
            raise ValueError("segment durations must be non-negative")

    def rate_at(self, t: float) -> tuple[float, float]:
        """Rate in force at ``t`` and the time at which it next changes."""
        start = 0.0
        for dur, rate in self.segments:
            if t < start + dur:
                return rate, start + dur
            start += dur
        return 0.0, math.inf


@dataclass(frozen=True, eq=False)
class FluidRun:
    points: np.ndarray = field(repr=False)  # rows (t, x, y)
    phases: list[str] = field(repr=False)
    switch_times: list[float]
    switch_levels: list[float]
    total_cost: float

    def to_csv(self, dest=None) -> str:
        lines = ["t,x,y,phase"]
        for (t, x, y), ph in zip(self.points, self.phases):
            lines.append(f"{float(t)!r},{float(x)!r},{float(y)!r},{ph}")
        text = "\n".join(lines) + "\n"
        if dest is not None:
            with open(dest, "w") as fh:
                fh.write(text)
        return text


def fluid_policy_simulate(x0: float, y0: float, params: ModelParams, policy,
                          max_switches: int | None = None, max_events: int = 1_000_000) -> FluidRun:
    """Exact event-driven integration of the fluid system under a routing policy.

    ``policy`` is either a slope ``a`` (feed the idle queue while ``y < a*x``;
    ``0`` sends everything to the busy queue, ``inf`` everything to the idle
    queue) or a :class:`RateSchedule`.  Runs until the system empties (content
    below ``1e-12`` of the initial amount) or after ``max_switches`` switches.
    ``phases[k]`` names the routing on the segment that ends at ``points[k]``.
    """
    lam, mu, c, d = (float(t) for t in (params.lam, params.mu, params.c, params.d))
    if x0 < 0 or y0 < 0 or x0 + y0 <= 0:
        raise ValueError("need x0, y0 >= 0 and a non-empty system")
    schedule = policy if isinstance(policy, RateSchedule) else None
    slope = None if schedule is not None else float(policy)
    if slope is not None and slope < 0:
        raise ValueError("slope must be non-negative")
    z0 = x0 + y0
    t, x, y = 0.0, float(x0), float(y0)
    points, phases = [(t, x, y)], ["start"]
    switches, levels = [], []
    cost = 0.0
    on_line = False
    for _ in range(max_events):
        if x <= 0.0:
            if y <= TRUNCATE_REL * z0 or (max_switches is not None and len(switches) >= max_switches):
                break
            x, y = y, 0.0
            switches.append(t)
            levels.append(x)
            on_line = False
            points.append((t, x, y))
            phases.append("switch")
            continue
        if schedule is not None:
            r, until = schedule.rate_at(t)
            r = min(max(r, 0.0), lam)
            dt = min(until - t, x / (mu - lam + r))
        elif not on_line and (math.isinf(slope) or y < slope * x):
            r = lam
            dt = x / mu
            if not math.isinf(slope):
                cross = (slope * x - y) / (lam + slope * mu)
                if cross < dt:
                    dt, on_line = cross, True
        else:
            r = 0.0
            dt = x / (mu - lam)
        x_new = x - (mu - lam + r) * dt
        y_new = y + r * dt
        if x_new < 1e-15 * z0:
            x_new = 0.0
        cost += dt * (c * (x + x_new) + d * (y + y_new)) / 2
        t += dt
        x, y = x_new, y_new
        points.append((t, x, y))
        phases.append("to_idle" if r > 0 else "to_busy")
        expected = z0 - (mu - lam) * t
        if abs((x + y) - expected) > 1e-9 * z0:
            raise NonTerminating(f"total content drifted from the mu - lam drain at t={t}")
    else:
        raise NonTerminating(f"no termination after {max_events} events")
    return FluidRun(np.array(points), phases, switches, levels, cost)


class VirtualStart(NamedTuple):
    x: float
    y: float
    tau: float


def normalize_initial_state(x0: float, y0: float, params: ModelParams) -> VirtualStart:
    """Earlier state ``(x, 0)`` at time ``tau <= 0`` from which the optimal line
    policy passes through ``(x0, y0)`` at time 0.

    If ``y0 <= alpha*x0`` the idle queue has been fed for ``y0/lam`` time
    units.  Otherwise feeding stopped when ``y = alpha*x``, i.e. at busy
    content ``y0/alpha``, and the busy queue has since drained to ``x0`` at rate
    ``mu - lam``.
    """
    if x0 < 0 or y0 < 0 or x0 + y0 == 0:
        raise ValueError("need x0, y0 >= 0, not both zero")
    lam, mu = float(params.lam), float(params.mu)
    if y0 == 0:
        return VirtualStart(float(x0), 0.0, 0.0)
    if x0 == 0:
        # an empty busy queue is left at once
        return VirtualStart(float(y0), 0.0, 0.0)
    alpha = alpha_coefficient(params.rho)
    tau2 = y0 / lam
    if y0 <= alpha * x0:
        return VirtualStart(x0 + mu * tau2, 0.0, -tau2)
    tau1 = (y0 - alpha * x0) / (alpha * (mu - lam))
    return VirtualStart(x0 + (mu - lam) * tau1 + mu * tau2, 0.0, -(tau1 + tau2))


def lqr_objective(x0: float, rho: float, u: Sequence[float]) -> float:
    """Truncated LQR objective ``sum_k (1-rho) x_k^2 + rho u_k^2`` over ``len(u)`` stages."""
    x, total = x0, 0.0
    for uk in u:
        total += (1 - rho) * x * x + rho * uk * uk
        x = rho * (x - uk)
    return total


def brute_force_lqr(x0: float, rho: float, horizon: int = 4,
                    resolution: float = 1e-3) -> tuple[np.ndarray, float]:
    """Grid-search minimiser of the ``horizon``-stage truncated LQR objective.

    Each control is searched on the grid ``u_k = s x_k`` with ``s`` in
    ``{0, resolution, ..., 1}``.  The objective is homogeneous of degree two in
    ``x``, so the minimum over all grid sequences is obtained stage by stage,
    backwards, as ``x^2`` times a cost coefficient; every grid value is
    enumerated at every stage.
    """
    _check_rho(rho)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    s = np.linspace(0.0, 1.0, int(round(1.0 / resolution)) + 1)
    coef = 0.0
    choice = []
    for _ in range(horizon):
        stage = (1 - rho) + rho * s ** 2 + rho ** 2 * (1 - s) ** 2 * coef
        k = int(np.argmin(stage))
        choice.append(s[k])
        coef = float(stage[k])
    choice.reverse()
    u, x = [], x0
    for sk in choice:
        u.append(sk * x)
        x = rho * (x - sk * x)
    u = np.array(u)
    return u, lqr_objective(x0, rho, u)


def _check_rho(rho: float):
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
