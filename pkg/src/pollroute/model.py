"""Parameters, states and routing-policy containers for the two-queue polling model.

The server works exhaustively on one queue (the *busy* queue) and switches
instantly to the other (the *idle* queue) when it empties.  A state is the
pair ``(i, j)``: ``i`` customers in the busy queue, ``j`` in the idle queue.

Policies under complete information are stored as a :class:`DecisionTable`
on an explicit finite window ``1 <= i <= i_max``, ``0 <= j <= j_max``.
Monotone tables are summarised by a :class:`SwitchingCurve`, where
``threshold[i]`` is the largest ``j`` at which an arrival joins the idle queue
(``-1`` if it always joins the busy queue).
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np


class ModelError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ModelError, ValueError):
    pass


class NonPositiveRate(ParameterError):
    pass


class UnstableSystem(ParameterError):
    pass


class NegativeCost(ParameterError):
    pass


class InvalidState(ModelError, ValueError):
    pass


class NotThreshold(ModelError, ValueError):
    """A decision row is not upward-closed in ``j``."""

    def __init__(self, i: int, j: int):
        super().__init__(f"row i={i} is not a threshold row: Busy before Idle at j={j}")
        self.i = i
        self.j = j


class GridExhausted(ModelError, ValueError):
    pass


class NotConverged(ModelError, RuntimeError):
    def __init__(self, what: str, iterations: int, residual: float):
        super().__init__(f"{what} did not converge after {iterations} iterations "
                         f"(residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


def exact(x) -> Fraction:
    """Rational value of ``x``, reading floats by their shortest decimal repr.

    ``0.3`` becomes ``3/10`` rather than the binary expansion, so ties such as
    ``c * (1 - rho) == d`` are detected for decimal inputs.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class ModelParams:
    """Arrival rate, per-queue service rate and the busy/idle waiting-cost rates."""

    lam: float
    mu: float
    c: float
    d: float

    def __post_init__(self):
        for name in ("lam", "mu", "c", "d"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float, Fraction, np.floating, np.integer)):
                raise ParameterError(f"{name} must be a real number, got {v!r}")
            if not math.isfinite(float(v)):
                raise ParameterError(f"{name} must be finite, got {v!r}")
        if self.lam <= 0 or self.mu <= 0:
            raise NonPositiveRate(f"rates must be positive (lambda={self.lam}, mu={self.mu})")
        if self.c < 0 or self.d < 0:
            raise NegativeCost(f"cost rates must be non-negative (c={self.c}, d={self.d})")
        if self.lam >= self.mu:
            raise UnstableSystem(f"rho = lambda/mu = {self.lam / self.mu:.6g} must be < 1")

    @property
    def rho(self) -> float:
        return float(self.lam) / float(self.mu)

    @property
    def exact_rho(self) -> Fraction:
        return exact(self.lam) / exact(self.mu)

    def with_costs(self, c: float, d: float) -> "ModelParams":
        return ModelParams(self.lam, self.mu, c, d)

    def to_dict(self) -> dict:
        return {"lambda": float(self.lam), "mu": float(self.mu),
                "c": float(self.c), "d": float(self.d)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        return validate_params(data["lambda"], data["mu"], data["c"], data["d"])

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        return cls.from_dict(json.loads(text))


def validate_params(lam, mu, c, d) -> ModelParams:
    return ModelParams(lam, mu, c, d)


@dataclass(frozen=True)
class SplitProbability:
    """Static routing probability ``p`` (queue 1 under no information, the
    busy queue under partial information) together with the traffic split."""

    p: float
    rho: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"p must lie in [0, 1], got {self.p}")

    @classmethod
    def of(cls, params: ModelParams, p: float) -> "SplitProbability":
        return cls(p, params.rho)

    @property
    def rho1(self) -> float:
        return self.rho * self.p

    @property
    def rho2(self) -> float:
        return self.rho * (1.0 - self.p)


@dataclass(frozen=True, order=True)
class State:
    i: int
    j: int

    def __post_init__(self):
        if self.i < 0 or self.j < 0:
            raise InvalidState(f"negative queue length in {(self.i, self.j)}")
        if self.i == 0 and self.j > 0:
            raise InvalidState("an empty busy queue with a non-empty idle queue is not a stable "
                               "state: the server switches instantly")

    @property
    def total(self) -> int:
        return self.i + self.j


class Action(str, enum.Enum):
    BUSY = "B"
    IDLE = "I"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DecisionTable:
    """Join-busy indicator on the grid ``1..i_max`` x ``0..j_max``.

    ``busy[i - 1, j]`` is True when an arrival seeing ``(i, j)`` joins the busy
    queue.
    """

    busy: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.busy, dtype=bool)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError(f"decision grid must be a non-empty 2-d array, got shape {b.shape}")
        object.__setattr__(self, "busy", _frozen(b))

    @property
    def i_max(self) -> int:
        return self.busy.shape[0]

    @property
    def j_max(self) -> int:
        return self.busy.shape[1] - 1

    def action(self, i: int, j: int) -> Action:
        if not (1 <= i <= self.i_max and 0 <= j <= self.j_max):
            raise IndexError(f"({i}, {j}) outside grid 1..{self.i_max} x 0..{self.j_max}")
        return Action.BUSY if self.busy[i - 1, j] else Action.IDLE

    def joins_busy(self, i: int, j: int) -> bool:
        """Grid lookup clamped to the window; used by simulators that wander off-grid."""
        return bool(self.busy[min(i, self.i_max) - 1, min(j, self.j_max)])

    def __eq__(self, other):
        if not isinstance(other, DecisionTable):
            return NotImplemented
        return self.busy.shape == other.busy.shape and bool(np.array_equal(self.busy, other.busy))

    def __hash__(self):
        return hash((self.busy.shape, self.busy.tobytes()))

    @classmethod
    def constant(cls, i_max: int, j_max: int, action: Action) -> "DecisionTable":
        return cls(np.full((i_max, j_max + 1), action == Action.BUSY))

    @classmethod
    def from_function(cls, i_max: int, j_max: int, fn) -> "DecisionTable":
        busy = np.array([[fn(i, j) == Action.BUSY for j in range(j_max + 1)]
                         for i in range(1, i_max + 1)])
        return cls(busy)

    def window(self, i_max: int, j_max: int) -> "DecisionTable":
        return DecisionTable(self.busy[:i_max, : j_max + 1])

    def to_csv(self, dest=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "action"])
        for i in range(1, self.i_max + 1):
            for j in range(self.j_max + 1):
                w.writerow([i, j, "B" if self.busy[i - 1, j] else "I"])
        text = buf.getvalue()
        if dest is not None:
            Path(dest).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "DecisionTable":
        text = _read_text(source)
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty decision table")
        i_max = max(int(r["i"]) for r in rows)
        j_max = max(int(r["j"]) for r in rows)
        busy = np.zeros((i_max, j_max + 1), dtype=bool)
        seen = np.zeros_like(busy)
        for r in rows:
            i, j, a = int(r["i"]), int(r["j"]), r["action"].strip()
            if a not in ("B", "I"):
                raise ValueError(f"unknown action {a!r} at ({i}, {j})")
            busy[i - 1, j] = a == "B"
            seen[i - 1, j] = True
        if not seen.all():
            raise ValueError("decision table CSV does not cover its full grid")
        return cls(busy)


@dataclass(frozen=True, eq=False)
class SwitchingCurve:
    """Thresholds ``t(1..n)``: an arrival joins the busy queue iff ``j > t(i)``.

    ``slope_hint`` records the slope of a linear curve (``t(i) = floor(slope*i)``)
    and is used to extend the curve beyond its last tabulated ``i``.
    """

    thresholds: np.ndarray
    slope_hint: float | None = None

    def __post_init__(self):
        t = np.asarray(self.thresholds)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("thresholds must be a non-empty 1-d sequence")
        if not np.all(t == np.round(t)):
            raise ValueError("thresholds must be integers")
        t = t.astype(np.int64)
        if np.any(t < -1):
            raise ValueError("thresholds must be >= -1")
        object.__setattr__(self, "thresholds", _frozen(t))

    @property
    def n(self) -> int:
        return self.thresholds.size

    def __call__(self, i: int) -> int:
        return self.threshold(i)

    def threshold(self, i: int) -> int:
        if i < 1:
            raise IndexError("thresholds start at i = 1")
        if i <= self.n:
            return int(self.thresholds[i - 1])
        if self.slope_hint is not None:
            return _line_threshold(self.slope_hint, i)
        return int(self.thresholds[-1])

    def joins_busy(self, i: int, j: int) -> bool:
        return j > self.threshold(i)

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.thresholds) >= 0))

    def __eq__(self, other):
        if not isinstance(other, SwitchingCurve):
            return NotImplemented
        return bool(np.array_equal(self.thresholds, other.thresholds))

    def __hash__(self):
        return hash(self.thresholds.tobytes())

    @classmethod
    def from_line(cls, slope: float, n: int) -> "SwitchingCurve":
        return cls(np.array([_line_threshold(slope, i) for i in range(1, n + 1)]), slope_hint=slope)

    def to_table(self, j_max: int, i_max: int | None = None) -> DecisionTable:
        i_max = self.n if i_max is None else i_max
        t = np.array([self.threshold(i) for i in range(1, i_max + 1)])
        j = np.arange(j_max + 1)
        return DecisionTable(j[None, :] > t[:, None])

    def to_csv(self, dest=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "threshold"])
        for i, t in enumerate(self.thresholds, start=1):
            w.writerow([i, int(t)])
        text = buf.getvalue()
        if dest is not None:
            Path(dest).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "SwitchingCurve":
        rows = list(csv.DictReader(io.StringIO(_read_text(source))))
        rows.sort(key=lambda r: int(r["i"]))
        if [int(r["i"]) for r in rows] != list(range(1, len(rows) + 1)):
            raise ValueError("switching curve CSV must list i = 1..n exactly once")
        return cls(np.array([int(r["threshold"]) for r in rows]))


def _line_threshold(slope: float, i: int) -> int:
    if math.isinf(slope):
        raise ValueError("an infinite slope has no finite threshold")
    return max(-1, math.floor(slope * i))


def _read_text(source) -> str:
    if isinstance(source, Path):
        return source.read_text()
    if isinstance(source, str) and "\n" not in source and Path(source).exists():
        return Path(source).read_text()
    return source


def curve_from_table(table: DecisionTable) -> SwitchingCurve:
    """Collapse a table whose Busy set is upward-closed in ``j`` on every row."""
    busy = table.busy
    thresholds = np.empty(table.i_max, dtype=np.int64)
    for r, row in enumerate(busy):
        if row.any():
            first = int(np.argmax(row))
            if not row[first:].all():
                raise NotThreshold(r + 1, first + int(np.argmin(row[first:])))
            thresholds[r] = first - 1
        else:
            thresholds[r] = table.j_max
    return SwitchingCurve(thresholds)


def iter_states(i_max: int, j_max: int) -> Iterable[State]:
    for i in range(1, i_max + 1):
        for j in range(j_max + 1):
            yield State(i, j)
