"""Regenerative discrete-event simulation of the two-queue polling system.

A cycle starts when a customer arrives to an empty system and ends at the
next such arrival.  Cycles are i.i.d. whatever the routing policy, so every
long-run average is a ratio of cycle sums and its standard error follows from
the regenerative (delta-method) variance estimator.

Randomness is split into blocks of cycles, each with its own
``SeedSequence(seed, spawn_key=(block,))`` and three independent streams
(inter-arrival times, service times, routing uniforms).  Every policy consumes
exactly one draw from each stream per arrival/service, and the number in
system does not depend on the routing, so runs with the same seed share their
arrival and service epochs (common random numbers).
"""
from __future__ import annotations

import concurrent.futures as cf
import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .model import DecisionTable, ModelError, ModelParams, SwitchingCurve
from .static import NoInfoMeans, PartialInfoMeans

MIN_CONDITION_CYCLES = 100
CHUNK = 4096


class InvalidPolicyForInfoLevel(ModelError, ValueError):
    pass


class SimulationOverflow(ModelError, RuntimeError):
    pass


@dataclass(frozen=True)
class NoInfoSplit:
    """Join queue 1 with probability ``p``, not knowing where the server is."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")


@dataclass(frozen=True)
class PartialSplit:
    """Join the busy queue with probability ``p``."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")


@dataclass(frozen=True)
class Table:
    table: DecisionTable


@dataclass(frozen=True)
class Curve:
    curve: SwitchingCurve


Policy = Union[NoInfoSplit, PartialSplit, Table, Curve]


def parse_policy(spec: str) -> Policy:
    """``noinfo:P``, ``partial:P``, ``line:SLOPE`` or ``curve:PATH`` / ``table:PATH`` (CSV)."""
    kind, _, arg = spec.partition(":")
    if kind == "noinfo":
        return NoInfoSplit(float(arg))
    if kind == "partial":
        return PartialSplit(float(arg))
    if kind == "line":
        return Curve(SwitchingCurve.from_line(float(arg), 1))
    if kind == "curve":
        return Curve(SwitchingCurve.from_csv(arg))
    if kind == "table":
        return Table(DecisionTable.from_csv(arg))
    raise ValueError(f"unknown policy {spec!r}")


def describe_policy(policy: Policy) -> str:
    if isinstance(policy, NoInfoSplit):
        return f"noinfo:{policy.p}"
    if isinstance(policy, PartialSplit):
        return f"partial:{policy.p}"
    if isinstance(policy, Table):
        return f"table[{policy.table.i_max}x{policy.table.j_max}]"
    slope = policy.curve.slope_hint
    return f"line:{slope}" if slope is not None and policy.curve.n == 1 else f"curve[{policy.curve.n}]"


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    policy: Policy
    num_cycles: int = 100_000
    seed: int = 0
    warmup_cycles: int = 1000
    block_size: int = 10_000
    workers: int = 1
    max_customers: int = 1_000_000
    trace: bool = False

    def __post_init__(self):
        if self.num_cycles < 1 or self.warmup_cycles < 0 or self.block_size < 1:
            raise ValueError("cycle counts must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.trace and self.workers != 1:
            raise ValueError("tracing needs a single worker")


# per-cycle statistic columns
LENGTH, BUSY_TIME, AREA_X, AREA_Y, COST = 0, 1, 2, 3, 4
Q1_AT1, Q2_AT1, TIME_AT1, Q1_AT2, Q2_AT2, TIME_AT2 = 5, 6, 7, 8, 9, 10
NSTAT = 11


class _Stream:
    """Buffered exponential or uniform variates from one generator."""

    def __init__(self, rng: np.random.Generator, scale: float | None):
        self.rng = rng
        self.scale = scale
        self.buf: list[float] = []
        self.pos = 0

    def __call__(self) -> float:
        if self.pos == len(self.buf):
            u = self.rng.random(CHUNK)
            if self.scale is not None:
                # inverse transform keeps draws aligned across runs
                u = -np.log1p(-u) * self.scale
            self.buf = u.tolist()
            self.pos = 0
        x = self.buf[self.pos]
        self.pos += 1
        return x


def _block_streams(seed: int, block: int, lam: float, mu: float):
    children = np.random.SeedSequence(seed, spawn_key=(block,)).spawn(3)
    return (_Stream(np.random.default_rng(children[0]), 1.0 / lam),
            _Stream(np.random.default_rng(children[1]), 1.0 / mu),
            _Stream(np.random.default_rng(children[2]), None))


def _router(policy: Policy):
    """``(kind, data)`` where kind 0 = no-info, 1 = partial, 2 = table, 3 = curve."""
    if isinstance(policy, NoInfoSplit):
        return 0, policy.p
    if isinstance(policy, PartialSplit):
        return 1, policy.p
    if isinstance(policy, Table):
        return 2, (policy.table.busy.tolist(), policy.table.i_max, policy.table.j_max)
    if isinstance(policy, Curve):
        cv = policy.curve
        return 3, (cv.thresholds.tolist(), cv.slope_hint)
    raise TypeError(f"unsupported policy {policy!r}")


def _run_block(lam: float, mu: float, c: float, d: float, policy: Policy, seed: int, block: int,
               n_cycles: int, max_customers: int, trace: list | None = None,
               t_offset: float = 0.0) -> np.ndarray:
    arr, svc, coin = _block_streams(seed, block, lam, mu)
    kind, data = _router(policy)
    if kind == 2:
        rows, t_imax, t_jmax = data
    elif kind == 3:
        thresholds, slope = data
        n_thr = len(thresholds)
    else:
        p = data
    out = np.empty((n_cycles, NSTAT))
    clock = t_offset
    for k in range(n_cycles):
        u = coin()
        server = 2 if kind == 0 and u >= p else 1
        i, j = 1, 0
        now = 0.0
        next_arr = arr()
        next_dep = svc()
        area_x = area_y = 0.0
        at1 = [0.0, 0.0, 0.0]
        at2 = [0.0, 0.0, 0.0]
        if trace is not None:
            trace.append((clock, i, j, server))
        while True:
            if next_arr < next_dep:
                dt = next_arr - now
                now = next_arr
            else:
                dt = next_dep - now
                now = next_dep
            area_x += i * dt
            area_y += j * dt
            if server == 1:
                at1[0] += i * dt
                at1[1] += j * dt
                at1[2] += dt
            else:
                at2[0] += j * dt
                at2[1] += i * dt
                at2[2] += dt
            if now == next_arr:
                u = coin()
                if kind == 0:
                    busy = (u < p) == (server == 1)
                elif kind == 1:
                    busy = u < p
                elif kind == 2:
                    busy = rows[(i if i <= t_imax else t_imax) - 1][j if j <= t_jmax else t_jmax]
                else:
                    if i <= n_thr:
                        thr = thresholds[i - 1]
                    elif slope is not None:
                        thr = max(-1, math.floor(slope * i))
                    else:
                        thr = thresholds[-1]
                    busy = j > thr
                if busy:
                    i += 1
                else:
                    j += 1
                if i + j > max_customers:
                    raise SimulationOverflow(f"more than {max_customers} customers in system")
                next_arr = now + arr()
            else:
                i -= 1
                if i == 0:
                    if j == 0:
                        break
                    i, j = j, 0
                    server = 3 - server
                next_dep = now + svc()
            if trace is not None:
                trace.append((clock + now, i, j, server))
        length = next_arr
        if trace is not None:
            trace.append((clock + now, 0, 0, server))
        clock += length
        row = out[k]
        row[LENGTH] = length
        row[BUSY_TIME] = now
        row[AREA_X] = area_x
        row[AREA_Y] = area_y
        row[COST] = c * area_x + d * area_y
        row[Q1_AT1], row[Q2_AT1], row[TIME_AT1] = at1
        row[Q1_AT2], row[Q2_AT2], row[TIME_AT2] = at2
    return out


def _ratio(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    """Regenerative ratio estimate ``sum(num)/sum(den)`` and its standard error."""
    n = num.size
    if n < 2 or den.sum() == 0:
        return math.nan, math.nan
    r = num.sum() / den.sum()
    resid = num - r * den
    se = math.sqrt(float(resid @ resid) / (n * (n - 1))) / den.mean()
    return float(r), float(se)


@dataclass(frozen=True, eq=False)
class Estimate:
    value: float
    se: float

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.value - target) <= k * self.se

    def to_dict(self) -> dict:
        return {"value": self.value, "se": self.se}

    def __eq__(self, other):
        if not isinstance(other, Estimate):
            return NotImplemented
        same = lambda a, b: a == b or (math.isnan(a) and math.isnan(b))
        return same(self.value, other.value) and same(self.se, other.se)


@dataclass(frozen=True, eq=False)
class SimReport:
    policy: str
    num_cycles: int
    seed: int
    cost_rate: Estimate
    mean_in_system: Estimate
    mean_cycle_length: Estimate
    L_B: Estimate
    L_I: Estimate
    L11: Estimate | None
    L12: Estimate | None
    L21: Estimate | None
    L22: Estimate | None
    condition_cycles: tuple[int, int]
    wall_time: float = field(compare=False)
    cycles: np.ndarray = field(repr=False)

    ESTIMATES = ("cost_rate", "mean_in_system", "mean_cycle_length", "L_B", "L_I",
                 "L11", "L12", "L21", "L22")

    def __eq__(self, other):
        if not isinstance(other, SimReport):
            return NotImplemented
        return (self.policy == other.policy and self.num_cycles == other.num_cycles
                and self.seed == other.seed and self.condition_cycles == other.condition_cycles
                and all(getattr(self, k) == getattr(other, k) for k in self.ESTIMATES)
                and np.array_equal(self.cycles, other.cycles))

    def no_info_means(self) -> NoInfoMeans:
        if self.L11 is None:
            raise InvalidPolicyForInfoLevel(
                f"queue-labelled means are only estimated for no-information policies, not {self.policy}")
        return NoInfoMeans(self.L11.value, self.L12.value, self.L21.value, self.L22.value)

    def partial_info_means(self) -> PartialInfoMeans:
        return PartialInfoMeans(self.L_B.value, self.L_I.value)

    def to_dict(self, timing: bool = True) -> dict:
        out = {"policy": self.policy, "num_cycles": self.num_cycles, "seed": self.seed,
               "condition_cycles": list(self.condition_cycles)}
        for k in self.ESTIMATES:
            e = getattr(self, k)
            out[k] = None if e is None else e.to_dict()
        if timing:
            out["wall_time"] = self.wall_time
        return out


def _report(config: SimConfig, data: np.ndarray, wall: float) -> SimReport:
    length = data[:, LENGTH]
    ratio = lambda col, den=length: Estimate(*_ratio(data[:, col], den))
    z = data[:, AREA_X] + data[:, AREA_Y]
    n = length.size
    cyc = Estimate(float(length.mean()), float(length.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan)
    labelled = [None] * 4
    counts = (int(np.count_nonzero(data[:, TIME_AT1])), int(np.count_nonzero(data[:, TIME_AT2])))
    if isinstance(config.policy, NoInfoSplit):
        def conditional(col, time_col, count):
            if count < MIN_CONDITION_CYCLES:
                return Estimate(math.nan, math.nan)
            return Estimate(*_ratio(data[:, col], data[:, time_col]))
        labelled = [conditional(Q1_AT1, TIME_AT1, counts[0]), conditional(Q1_AT2, TIME_AT2, counts[1]),
                    conditional(Q2_AT1, TIME_AT1, counts[0]), conditional(Q2_AT2, TIME_AT2, counts[1])]
    return SimReport(
        policy=describe_policy(config.policy), num_cycles=n, seed=config.seed,
        cost_rate=ratio(COST), mean_in_system=Estimate(*_ratio(z, length)),
        mean_cycle_length=cyc, L_B=ratio(AREA_X), L_I=ratio(AREA_Y),
        L11=labelled[0], L12=labelled[1], L21=labelled[2], L22=labelled[3],
        condition_cycles=counts, wall_time=wall, cycles=data)


def simulate(config: SimConfig) -> SimReport:
    """Run ``warmup_cycles + num_cycles`` regeneration cycles and estimate means.

    ``L11 .. L22`` (no-information policies only) are time averages
    conditional on the server working on the given queue; ``L_B``, ``L_I`` and
    the cost rate are unconditional time averages.  A conditional mean
    observed in fewer than 100 cycles is reported as NaN.
    """
    start = time.perf_counter()
    p = config.params
    lam, mu, c, d = (float(x) for x in (p.lam, p.mu, p.c, p.d))
    total = config.warmup_cycles + config.num_cycles
    sizes = [config.block_size] * (total // config.block_size)
    if total % config.block_size:
        sizes.append(total % config.block_size)
    jobs = [(lam, mu, c, d, config.policy, config.seed, b, n, config.max_customers)
            for b, n in enumerate(sizes)]
    trace = [] if config.trace else None
    if config.workers > 1 and len(jobs) > 1:
        with cf.ProcessPoolExecutor(config.workers) as pool:
            parts = list(pool.map(_run_block_args, jobs))
    else:
        parts, offset = [], 0.0
        for job in jobs:
            part = _run_block(*job, trace=trace, t_offset=offset)
            offset += float(part[:, LENGTH].sum())
            parts.append(part)
    data = np.concatenate(parts)[config.warmup_cycles:]
    report = _report(config, data, time.perf_counter() - start)
    if trace is not None:
        object.__setattr__(report, "trace", trace)
    return report


def _run_block_args(args):
    return _run_block(*args)


def trace_csv(report: SimReport, dest=None) -> str:
    """Event-by-event ``t,i,j,server`` dump of a traced run (warm-up included)."""
    events = getattr(report, "trace", None)
    if events is None:
        raise ValueError("run was not traced; set SimConfig(trace=True)")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "i", "j", "server"])
    for t, i, j, s in events:
        w.writerow([repr(t), i, j, s])
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w") as fh:
            fh.write(text)
    return text


@dataclass(frozen=True)
class PairDifference:
    first: str
    second: str
    difference: float
    se: float

    @property
    def z(self) -> float:
        return self.difference / self.se if self.se > 0 else math.inf if self.difference else 0.0

    @property
    def resolved(self) -> bool:
        return abs(self.difference) >= 2.0 * self.se and self.difference != 0.0

    def to_dict(self) -> dict:
        return {"first": self.first, "second": self.second, "difference": self.difference,
                "se": self.se, "resolved": self.resolved}


@dataclass(frozen=True, eq=False)
class PolicyComparison:
    ranking: list[tuple[str, Estimate]]
    differences: list[PairDifference]
    reports: dict[str, SimReport] = field(repr=False)

    def difference(self, a: str, b: str) -> PairDifference:
        for dif in self.differences:
            if (dif.first, dif.second) == (a, b):
                return dif
            if (dif.first, dif.second) == (b, a):
                return PairDifference(a, b, -dif.difference, dif.se)
        raise KeyError((a, b))

    def to_dict(self) -> dict:
        return {"ranking": [{"policy": k, **e.to_dict()} for k, e in self.ranking],
                "differences": [dif.to_dict() for dif in self.differences]}


def compare_policies(params: ModelParams, policies: dict[str, Policy] | list[Policy],
                     num_cycles: int = 100_000, seed: int = 0, warmup_cycles: int = 1000,
                     **kwargs) -> PolicyComparison:
    """Rank policies by simulated cost rate under common random numbers.

    Every run shares its cycle lengths, so pairwise differences use the
    per-cycle cost differences over the common cycle-length denominator.
    """
    if not isinstance(policies, dict):
        policies = {describe_policy(p): p for p in policies}
    reports = {name: simulate(SimConfig(params, pol, num_cycles, seed, warmup_cycles, **kwargs))
               for name, pol in policies.items()}
    ranking = sorted(((name, r.cost_rate) for name, r in reports.items()), key=lambda kv: kv[1].value)
    names = [name for name, _ in ranking]
    diffs = []
    for a_idx, a in enumerate(names):
        for b in names[a_idx + 1:]:
            ra, rb = reports[a].cycles, reports[b].cycles
            if not np.array_equal(ra[:, LENGTH], rb[:, LENGTH]):
                raise RuntimeError("common random numbers lost synchronisation")
            diff, se = _ratio(ra[:, COST] - rb[:, COST], ra[:, LENGTH])
            diffs.append(PairDifference(a, b, diff, se))
    return PolicyComparison(ranking, diffs, reports)
