import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shsa.errors import MonitorSetupError
from shsa.knowledge_base import Itom, ItomRegistry, ItomStatus
from shsa.monitoring import (
    BranchStatus,
    Monitor,
    agreement_confidence,
    aggregate_trust,
    branch_values,
    classify_failed,
    majority_vote,
    monitor_step,
    monitor_trace,
    report_rows,
    setup_monitor,
)


def vals(**kw):
    return {k: np.atleast_1d(np.asarray(v, float)) for k, v in kw.items()}


def test_confidence_examples():
    c = agreement_confidence(vals(a=130.0, b=130.4, c=142.0), epsilon=2.0)
    assert c == {"a": 0.5, "b": 0.5, "c": 0.0}


def test_confidence_all_identical():
    c = agreement_confidence(vals(a=[1, 2], b=[1, 2], c=[1, 2], d=[1, 2]), 0.1)
    assert set(c.values()) == {1.0}


def test_confidence_two_disagreeing():
    assert agreement_confidence(vals(a=0, b=10), 2.0) == {"a": 0.0, "b": 0.0}


def test_confidence_uses_max_component_distance():
    c = agreement_confidence(vals(a=[0, 0, 0], b=[1.9, -1.9, 0], c=[0, 1.5, 0]), 2.0)
    assert c == {"a": 1.0, "b": 0.5, "c": 0.5}
    c = agreement_confidence(vals(a=[0, 0, 0], b=[1.9, -1.9, 0], c=[0, 4.0, 0]), 2.0)
    assert c["c"] == 0.0


def test_missing_value_scores_zero():
    c = agreement_confidence({"a": np.array([1.0]), "b": np.array([1.0]), "c": None}, 1.0)
    assert c == {"a": 0.5, "b": 0.5, "c": 0.0}


def test_classify_failed_examples():
    hist = {"a": [1, 0.1, 0.1, 0.1], "b": [0.1, 0.1, 1.0], "c": [0.0, 0.0]}
    assert classify_failed(hist, theta=0.3, hold=3) == {"a"}
    assert classify_failed(hist, theta=0.3, hold=2) == {"a", "c"}
    assert classify_failed({"a": [0.3, 0.3, 0.3]}, 0.3, 3) == set()  # theta itself is fine


def snapshot(reg):
    return {i.id: i.value for i in reg}


def _three_branch_registry():
    return ItomRegistry([
        Itom("radar", "pos", "radar", 10.0, [130.0, 0, 30]),
        Itom("gps", "pos", "gps", 10.0, [130.2, 0, 30]),
        Itom("radar_pre_prev", "pos_prev", "radar_pre", 9.0, [100.0, 0, 30]),
        Itom("clock_prev", "t_prev", "radar_pre", 9.0, [9.0]),
        Itom("clock", "t", "clock", 10.0, [10.0]),
    ])


def test_setup_monitor_builds_branches(highway):
    kb, _ = highway
    reg = _three_branch_registry()
    spec = setup_monitor(kb, reg, "pos")
    assert spec.branch_ids == ("gps", "radar", "r_int(radar_pre_prev,clock,clock_prev)")
    assert spec.branch("radar").direct
    assert spec.branch("r_int(radar_pre_prev,clock,clock_prev)").providers == ("clock", "radar_pre")
    v = branch_values(spec, snapshot(reg))
    assert v["r_int(radar_pre_prev,clock,clock_prev)"].tolist() == [130.0, 0.0, 30.0]


def test_setup_monitor_ignores_failed_and_filtered(highway):
    kb, _ = highway
    reg = _three_branch_registry()
    reg.set_status("gps", ItomStatus.FAILED)
    spec = setup_monitor(kb, reg, "pos")
    assert "gps" not in spec.branch_ids
    with pytest.raises(MonitorSetupError):
        setup_monitor(kb, reg, "pos", itom_filter=lambda i: i.provider != "radar_pre")


def test_single_itom_cannot_be_monitored(highway):
    kb, _ = highway
    reg = ItomRegistry([Itom("radar", "pos", "radar", 0.0, [1, 2, 3])])
    with pytest.raises(MonitorSetupError):
        setup_monitor(kb, reg, "pos")


def test_monitor_hold_logic(highway):
    kb, _ = highway
    reg = _three_branch_registry()
    mon = Monitor(setup_monitor(kb, reg, "pos", hold=3))
    snap = snapshot(reg)
    snap["radar"] = [150.0, 0, 30]
    statuses = [mon.step(snap, t).status["radar"] for t in range(4)]
    assert statuses == [BranchStatus.SUSPECTED, BranchStatus.SUSPECTED, BranchStatus.FAILED, BranchStatus.FAILED]
    assert mon.failed() == {"radar"}
    snap["radar"] = [130.0, 0, 30]
    assert mon.step(snap, 5).status["radar"] is BranchStatus.OK
    assert mon.failed() == set()


def test_monitor_step_does_not_mutate_history(highway):
    kb, _ = highway
    reg = _three_branch_registry()
    spec = setup_monitor(kb, reg, "pos")
    hist = {"radar": [0.0, 0.0]}
    snap = snapshot(reg)
    snap["radar"] = [0.0, 0, 0]
    r = monitor_step(spec, snap, 0.0, hist)
    assert r.status["radar"] is BranchStatus.FAILED
    assert hist == {"radar": [0.0, 0.0]}


def test_majority_vote_examples():
    assert majority_vote([[5], [5], [7]], 1.0).tolist() == [5.0]
    assert majority_vote([[1], [5], [9]], 1.0) is None
    assert majority_vote([[5.0], [5.2], [9.0]], 1.0).tolist() == pytest.approx([5.1])
    assert majority_vote([[1, 1]], 0.1).tolist() == [1.0, 1.0]
    assert majority_vote([[0], [1]], 2.0).tolist() == [0.5]
    assert majority_vote([[0], [5]], 2.0) is None
    with pytest.raises(ValueError):
        majority_vote([], 1.0)


def test_majority_vote_requires_pairwise_agreement():
    # 0~1.5 and 1.5~3 agree but 0 and 3 do not; best pair is only 2 of 3
    assert majority_vote([[0], [1.5], [3]], 2.0).tolist() == pytest.approx([0.75])
    assert majority_vote([[0], [1.5], [3], [10], [20]], 2.0) is None


@settings(max_examples=60)
@given(
    st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=6),
    st.floats(0.1, 10),
    st.randoms(use_true_random=False),
)
def test_confidence_permutation_invariant(xs, eps, rnd):
    ids = [f"b{k}" for k in range(len(xs))]
    base = agreement_confidence({i: np.array([x]) for i, x in zip(ids, xs)}, eps)
    order = list(range(len(xs)))
    rnd.shuffle(order)
    shuffled = agreement_confidence({ids[k]: np.array([xs[k]]) for k in order}, eps)
    assert shuffled == base
    for c in base.values():
        assert 0.0 <= c <= 1.0


@settings(max_examples=60)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=7), st.floats(0.1, 10))
def test_majority_vote_properties(xs, eps):
    out = majority_vote([[x] for x in xs], eps)
    if out is None:
        return
    near = [x for x in xs if abs(x - out[0]) <= eps + 1e-9]
    assert len(near) > len(xs) / 2
    for perm in itertools.islice(itertools.permutations(xs), 5):
        again = majority_vote([[x] for x in perm], eps)
        assert again is not None


@given(st.lists(st.floats(0, 1), max_size=10))
def test_aggregate_trust_is_mean(cs):
    got = aggregate_trust(cs)
    if not cs:
        assert got is None
    else:
        assert got == pytest.approx(sum(cs) / len(cs))
        assert min(cs) - 1e-12 <= got <= max(cs) + 1e-12


def test_monitor_trace_and_rows():
    rows = [
        (0.0, "a", [1.0]), (0.0, "b", [1.1]), (0.0, "c", [9.0]),
        (0.1, "a", [1.0]), (0.1, "b", [1.1]), (0.1, "c", [9.0]),
        (0.2, "a", [1.0]), (0.2, "b", [1.1]), (0.2, "c", [9.0]),
    ]
    reports = monitor_trace(rows, epsilon=2.0, theta=0.3, hold=3)
    assert [r.time for r in reports] == [0.0, 0.1, 0.2]
    assert reports[-1].failed() == {"c"}
    assert report_rows(reports[0]) == [
        "0,a,1,0.5,ok",
        "0,b,1.1,0.5,ok",
        "0,c,9,0,suspected",
    ]
    assert report_rows(reports[2])[2] == "0.2,c,9,0,failed"


def test_monitor_spec_validation(highway):
    kb, _ = highway
    with pytest.raises(ValueError):
        setup_monitor(kb, _three_branch_registry(), "pos", epsilon=0)
    with pytest.raises(ValueError):
        setup_monitor(kb, _three_branch_registry(), "pos", theta=1.5)
