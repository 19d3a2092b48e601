import math

import numpy as np
import pytest

from pollroute.model import DecisionTable, ModelParams, SwitchingCurve
from pollroute.simulator import (Curve, InvalidPolicyForInfoLevel, NoInfoSplit, PartialSplit,
                                 SimConfig, SimulationOverflow, Table, compare_policies,
                                 describe_policy, parse_policy, simulate, trace_csv)
from pollroute.static import no_info_means, partial_info_means

EX = ModelParams(0.3, 0.7, 6, 1)
CYCLE = 0.7 / (0.3 * 0.4)


def run(policy, n=20_000, seed=7, params=EX, **kw):
    return simulate(SimConfig(params, policy, n, seed, **kw))


def test_deterministic():
    a, b = run(NoInfoSplit(0.3)), run(NoInfoSplit(0.3))
    assert a == b
    assert a.to_dict(timing=False) == b.to_dict(timing=False)
    assert run(NoInfoSplit(0.3), seed=8) != a


def test_worker_count_invariant():
    cfg = dict(block_size=5000)
    assert run(PartialSplit(0.4), **cfg) == run(PartialSplit(0.4), workers=2, **cfg)


@pytest.mark.parametrize("lam, mu", [(0.3, 0.7), (0.3, 1.0), (0.8, 1.0)])
@pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
def test_no_info_means_within_three_se(lam, mu, p):
    params = ModelParams(lam, mu, 1, 0)
    r = run(NoInfoSplit(p), n=30_000, seed=11, params=params)
    m = no_info_means(params, p)
    for k in ("L11", "L12", "L21", "L22"):
        e = getattr(r, k)
        assert e.within(getattr(m, k), 3.5), (k, e, getattr(m, k))


@pytest.mark.parametrize("p", [0.0, 0.5, 1.0])
def test_partial_means_within_three_se(p):
    r = run(PartialSplit(p), n=30_000, seed=5)
    m = partial_info_means(EX, p)
    assert r.L_B.within(m.L_B, 3.5)
    if p < 1:
        assert r.L_I.within(m.L_I, 3.5)
    else:
        assert r.L_I.value == 0.0


@pytest.mark.parametrize("policy", [NoInfoSplit(0.5), PartialSplit(0.0),
                                    Curve(SwitchingCurve.from_line(1.5, 1)),
                                    Table(DecisionTable(np.ones((4, 4), dtype=bool)))])
def test_work_conservation(policy):
    r = run(policy)
    assert r.mean_in_system.within(0.75, 3.5)
    assert r.mean_cycle_length.within(CYCLE, 3.5)


def test_common_random_numbers_share_cycles():
    a, b = run(NoInfoSplit(0.5)), run(PartialSplit(0.0))
    assert np.array_equal(a.cycles[:, 0], b.cycles[:, 0])
    assert a.mean_in_system.value == pytest.approx(b.mean_in_system.value, rel=1e-12)


def test_labelled_means_need_no_info_policy():
    r = run(PartialSplit(0.5), n=1000)
    with pytest.raises(InvalidPolicyForInfoLevel):
        r.no_info_means()
    assert r.partial_info_means().L_B > 0


def test_rare_condition_reported_as_nan():
    r = run(NoInfoSplit(1.0), n=2000)
    assert math.isnan(r.L12.value) and math.isnan(r.L22.value)
    assert r.condition_cycles[1] < 100
    assert r.L11.within(1.75, 4)


def test_overflow_cap():
    with pytest.raises(SimulationOverflow):
        run(NoInfoSplit(0.5), n=1000, max_customers=3)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(EX, NoInfoSplit(0.5), 0)
    with pytest.raises(ValueError):
        SimConfig(EX, NoInfoSplit(0.5), 10, seed=-1)
    with pytest.raises(ValueError):
        NoInfoSplit(1.2)


def test_compare_ranks_and_resolves():
    cmp_ = compare_policies(EX, {"idle-first": PartialSplit(0.0), "busy-first": PartialSplit(1.0)},
                            num_cycles=20_000, seed=3)
    assert [name for name, _ in cmp_.ranking] == ["idle-first", "busy-first"]
    d = cmp_.difference("idle-first", "busy-first")
    assert d.difference < 0 and d.resolved
    assert cmp_.difference("busy-first", "idle-first").difference == -d.difference


def test_compare_single_policy():
    cmp_ = compare_policies(EX, [NoInfoSplit(0.5)], num_cycles=1000)
    assert len(cmp_.ranking) == 1 and cmp_.differences == []


def test_equal_costs_indistinguishable():
    params = ModelParams(0.3, 0.7, 1, 1)
    cmp_ = compare_policies(params, [NoInfoSplit(0.5), PartialSplit(0.0), PartialSplit(1.0)],
                            num_cycles=20_000, seed=1)
    for d in cmp_.differences:
        assert abs(d.difference) < 1e-9


def test_trace(tmp_path):
    r = run(PartialSplit(0.5), n=50, warmup_cycles=0, trace=True)
    text = trace_csv(r, tmp_path / "trace.csv")
    lines = text.splitlines()
    assert lines[0] == "t,i,j,server"
    t = np.array([float(line.split(",")[0]) for line in lines[1:]])
    assert np.all(np.diff(t) >= 0)
    with pytest.raises(ValueError):
        trace_csv(run(PartialSplit(0.5), n=10))


def test_parse_policy_round_trip(tmp_path):
    assert parse_policy("noinfo:0.25") == NoInfoSplit(0.25)
    assert parse_policy("partial:1") == PartialSplit(1.0)
    assert describe_policy(parse_policy("line:1.5")) == "line:1.5"
    path = tmp_path / "g.csv"
    SwitchingCurve(np.array([1, 2, 4])).to_csv(path)
    assert parse_policy(f"curve:{path}").curve.thresholds.tolist() == [1, 2, 4]
    with pytest.raises(ValueError):
        parse_policy("bogus:1")
