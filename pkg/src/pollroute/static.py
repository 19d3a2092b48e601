"""Static routing under no information and partial information.

No information: every arrival joins queue 1 with probability ``p``.
Partial information: every arrival joins the busy queue with probability ``p``.
Both regimes have closed-form mean queue lengths, from which the per-customer
costs, the social optimum and the Nash equilibria follow by case analysis on
``c`` versus ``d`` and ``c(1 - rho)`` versus ``d``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .model import ModelParams, SplitProbability, exact

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class NoInfoMeans:
    """``Lkj`` is the mean number in queue ``k`` while the server works on queue ``j``."""

    L11: float
    L12: float
    L21: float
    L22: float


@dataclass(frozen=True)
class PartialInfoMeans:
    L_B: float
    L_I: float


@dataclass(frozen=True)
class NoInfoCost:
    C: float
    C1: float
    C2: float
    dC_dp1: float


@dataclass(frozen=True)
class PolicyClassification:
    """Outcome of a social-optimum or equilibrium case split.

    ``policies`` lists the optimal / equilibrium values of ``p``; when
    ``all_policies`` is set every ``p`` in [0, 1] qualifies and ``policies`` is
    empty.  Under partial information ``p = 0`` means "join the idle queue"
    and ``p = 1`` "join the busy queue".  ``socially_optimal`` is the subset of
    equilibria that are also socially optimal (``None`` for a social
    classification itself).
    """

    regime: str
    case: str
    policies: tuple[float, ...]
    all_policies: bool = False
    socially_optimal: tuple[float, ...] | None = None
    matches_social: bool | None = None
    label: str = ""

    def contains(self, p: float) -> bool:
        return self.all_policies or p in self.policies

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "case": self.case,
            "policies": "all" if self.all_policies else list(self.policies),
            "socially_optimal": None if self.socially_optimal is None else list(self.socially_optimal),
            "matches_social": self.matches_social,
            "label": self.label,
        }


def compare(a, b) -> int:
    """Three-way comparison, exact on rationals with a 1e-12 relative tie band."""
    fa, fb = exact(a), exact(b)
    if fa == fb:
        return 0
    if abs(float(fa) - float(fb)) <= TIE_RTOL * max(abs(float(fa)), abs(float(fb))):
        return 0
    return 1 if fa > fb else -1


def _nash_threshold(params: ModelParams) -> Fraction:
    return exact(params.c) * (1 - params.exact_rho)


def no_info_means(params: ModelParams, split: SplitProbability | float) -> NoInfoMeans:
    s = _split(params, split)
    rho, r1, r2 = params.rho, s.rho1, s.rho2
    den = (1 - rho) * (1 - rho + 2 * r1 * r2)
    return NoInfoMeans(
        L11=r1 * (1 - rho + r1 * r2 + r2 ** 2) / den + 1,
        L12=r1 * (r1 * r2 + (1 - r1) ** 2) / den,
        L21=r2 * (r1 * r2 + (1 - r2) ** 2) / den,
        L22=r2 * (1 - rho + r1 * r2 + r1 ** 2) / den + 1,
    )


def no_info_cost(params: ModelParams, split: SplitProbability | float) -> NoInfoCost:
    """Expected cost per customer and its derivative in the split probability."""
    s = _split(params, split)
    m = no_info_means(params, s)
    mu, c, d = params.mu, params.c, params.d
    rho, r1, r2 = params.rho, s.rho1, s.rho2
    # r2/(1-r2) and r1/(1-r1): expected busy periods started by the queue ahead
    C1 = (c * (r1 * m.L11 + r2 * m.L12) + d * r2 / (1 - r2) * m.L22 + c) / mu
    C2 = (c * (r1 * m.L21 + r2 * m.L22) + d * r1 / (1 - r1) * m.L11 + c) / mu
    C = s.p * C1 + (1 - s.p) * C2
    dC = ((c - d) / mu * rho * (rho ** 2 + 2 * (1 - rho)) * (2 * s.p - 1)
          / (1 - rho + 2 * r1 * r2) ** 2)
    return NoInfoCost(C, C1, C2, dC)


def no_info_cost_gap(params: ModelParams, split: SplitProbability | float) -> float:
    """``C1 - C2`` for a single deviating customer, in closed form."""
    s = _split(params, split)
    rho, mu = params.rho, params.mu
    return (rho * (1 - 2 * s.p) * (params.d - params.c * (1 - rho))
            / (mu * (1 - rho) * (1 - rho + 2 * s.rho1 * s.rho2)))


def classify_no_info_social(params: ModelParams) -> PolicyClassification:
    cmp = compare(params.c, params.d)
    if cmp > 0:
        return PolicyClassification("noinfo", "c>d", (0.5,), label="split evenly")
    if cmp == 0:
        return PolicyClassification("noinfo", "c=d", (), all_policies=True, label="any split")
    return PolicyClassification("noinfo", "c<d", (0.0, 1.0), label="everyone to one queue")


def classify_no_info_nash(params: ModelParams) -> PolicyClassification:
    social = classify_no_info_social(params)
    cmp = compare(_nash_threshold(params), exact(params.d))
    if cmp > 0:
        eq, every = (0.5,), False
        case = "c(1-rho)>d"
    elif cmp == 0:
        eq, every = (), True
        case = "c(1-rho)=d"
    else:
        eq, every = (0.0, 0.5, 1.0), False
        case = "c(1-rho)<d"
    if every:
        # c(1-rho) = d with rho > 0 forces c > d unless c = d = 0
        so = (0.0, 0.5, 1.0) if social.all_policies else social.policies
        matches = social.all_policies
    else:
        so = tuple(p for p in eq if social.contains(p))
        matches = so == eq
    return PolicyClassification("noinfo", case, eq, all_policies=every, socially_optimal=so,
                                matches_social=matches,
                                label="every split" if every else "")


def partial_info_means(params: ModelParams, split: SplitProbability | float) -> PartialInfoMeans:
    s = _split(params, split)
    rho, r1, r2 = params.rho, s.rho1, s.rho2
    den = (1 - r1) ** 2 - r2 ** 2
    return PartialInfoMeans(L_B=rho * (1 - r1) / den, L_I=rho * r2 / den)


def partial_info_costs(params: ModelParams, split: SplitProbability | float) -> tuple[float, float, float]:
    """``(C, C_B, C_I)``: mean cost per customer and the costs of joining busy / idle."""
    s = _split(params, split)
    m = partial_info_means(params, s)
    c, d, mu = params.c, params.d, params.mu
    CB = (c * m.L_B + c) / mu
    CI = (d * m.L_B / (1 - s.rho1) + c * m.L_I + c) / mu
    return s.p * CB + (1 - s.p) * CI, CB, CI


def partial_info_cost_diff(params: ModelParams, split: SplitProbability | float) -> float:
    """``C_B - C_I``; its sign is that of ``c(1 - rho) - d`` whatever ``p`` is."""
    s = _split(params, split)
    rho = params.rho
    return (rho / (params.mu * (1 - rho))
            * (params.c * (1 - rho) - params.d) / (1 - s.rho1 + s.rho2))


def classify_partial_social(params: ModelParams) -> PolicyClassification:
    cmp = compare(params.c, params.d)
    if cmp > 0:
        return PolicyClassification("partial", "c>d", (0.0,), label="join idle")
    if cmp == 0:
        return PolicyClassification("partial", "c=d", (), all_policies=True, label="any")
    return PolicyClassification("partial", "c<d", (1.0,), label="join busy")


def classify_partial_nash(params: ModelParams) -> PolicyClassification:
    """Equilibrium under partial information.

    At ``c(1 - rho) = d`` a deviating customer is indifferent; the
    equilibrium reported there is "join busy", as in the middle case.
    """
    social = classify_partial_social(params)
    if compare(_nash_threshold(params), exact(params.d)) > 0:
        return PolicyClassification("partial", "c(1-rho)>d", (0.0,), socially_optimal=(0.0,),
                                    matches_social=True, label="join idle")
    if compare(params.d, params.c) < 0:
        return PolicyClassification("partial", "c(1-rho)<=d<c", (1.0,), socially_optimal=(),
                                    matches_social=False, label="join busy")
    return PolicyClassification("partial", "c<=d", (1.0,), socially_optimal=(1.0,),
                                matches_social=social.contains(1.0), label="join busy")


def _split(params: ModelParams, split) -> SplitProbability:
    if isinstance(split, SplitProbability):
        return split
    return SplitProbability.of(params, float(split))
