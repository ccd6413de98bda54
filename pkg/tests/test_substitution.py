import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import oracle_cost, oracle_enumerate, oracle_sources, random_kb, structure_problems
from shsa.errors import KnowledgeBaseError, MalformedSubstitutionError, SubstitutionError
from shsa.knowledge_base import Itom, ItomRegistry, ItomStatus, provided_variables
from shsa.substitution import (
    SearchConfig,
    Substitution,
    best_substitution,
    enumerate_substitutions,
    format_report,
    instantiate_substitute,
    is_valid,
    structure_violations,
    substitution_cost,
)


def names(subs):
    return [str(s) for s in subs]


def test_fixture_enumeration_by_depth(highway):
    kb, _ = highway
    assert names(enumerate_substitutions(kb, "pos", 1)) == ["{pos}"]
    assert names(enumerate_substitutions(kb, "pos", 2)) == [
        "{pos}",
        "pos <- r_add(pos_behind, dist)",
        "pos <- r_int(pos_prev, t_prev, t)",
    ]
    deep = names(enumerate_substitutions(kb, "pos", 3))
    assert len(deep) == 4
    assert "pos <- r_add(pos_behind, dist <- r_dist(D))" in deep
    assert len(enumerate_substitutions(kb, "pos", 8)) == 4


def test_fixture_depths(highway):
    kb, _ = highway
    depths = {str(s): s.depth for s in enumerate_substitutions(kb, "pos", 8)}
    assert depths["{pos}"] == 1
    assert depths["pos <- r_int(pos_prev, t_prev, t)"] == 2
    assert depths["pos <- r_add(pos_behind, dist <- r_dist(D))"] == 3


def test_variable_without_producers_has_single_substitution(highway):
    kb, _ = highway
    assert names(enumerate_substitutions(kb, "D")) == ["{D}"]


def test_unknown_target(highway):
    kb, _ = highway
    with pytest.raises(KnowledgeBaseError):
        enumerate_substitutions(kb, "speed")


def test_is_valid_examples(highway):
    kb, _ = highway
    projected = Substitution.from_nodes(kb, "pos", ["pos", "r_int", "pos_prev", "t_prev", "t"])
    assert is_valid(projected, {"pos_prev", "t_prev", "t"})
    assert not is_valid(projected, {"pos_prev"})
    assert is_valid(Substitution.from_nodes(kb, "pos", ["pos"]), {"pos"})


def test_malformed_substitution_lists_properties(highway):
    kb, _ = highway
    missing_input = Substitution.from_nodes(kb, "pos", ["pos", "r_int", "pos_prev", "t"])
    with pytest.raises(MalformedSubstitutionError) as exc:
        is_valid(missing_input, {"pos_prev", "t"})
    assert any(v.startswith("(iii)") for v in exc.value.violations)
    extra_sink = Substitution.from_nodes(kb, "pos", ["pos", "D"])
    assert any(v.startswith("(i)") for v in structure_violations(extra_sink))
    two_producers = Substitution.from_nodes(
        kb, "pos", ["pos", "r_int", "r_add", "pos_prev", "t_prev", "t", "pos_behind", "dist"]
    )
    assert any(v.startswith("(ii)") for v in structure_violations(two_producers))


def test_enumeration_matches_oracle_on_fixture(highway):
    kb, _ = highway
    for d in (1, 2, 3, 8):
        assert {s.nodes for s in enumerate_substitutions(kb, "pos", d)} == oracle_enumerate(kb, "pos", d)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**9), st.integers(1, 4))
def test_enumeration_matches_oracle_random(seed, depth):
    kb = random_kb(random.Random(seed))
    target = kb.variables[seed % len(kb.variables)].id
    subs = enumerate_substitutions(kb, target, depth)
    assert len({s.nodes for s in subs}) == len(subs)
    assert {s.nodes for s in subs} == oracle_enumerate(kb, target, depth)
    for s in subs:
        assert structure_problems(s, kb) == []
        assert s.depth <= depth


def test_enumeration_order_is_deterministic(highway):
    kb, _ = highway
    a = enumerate_substitutions(kb, "pos")
    b = enumerate_substitutions(kb, "pos")
    assert names(a) == names(b)
    assert [len(s.relations) for s in a] == sorted(len(s.relations) for s in a)


def _radar_failed_registry(kb):
    """Radar on pos failed, only radar_pre data on pos_prev, clock on t and t_prev."""
    reg = ItomRegistry([
        Itom("radar", "pos", "radar", 10.0, [130, 3.5, 30], ItomStatus.FAILED),
        Itom("radar_pre_prev", "pos_prev", "radar_pre", 9.0, [100, 3.5, 30]),
        Itom("clock", "t", "clock", 10.0, [10.0]),
        Itom("clock_prev", "t_prev", "radar_pre", 9.0, [9.0]),
        Itom("gps_behind", "pos_behind", "gps_behind", 10.0, [90, 3.5, 29]),
        Itom("lidar", "D", "lidar", 10.0, [1, 40, 0, 0, 0, 0, 0, 0, 0]),
    ])
    return reg


def test_best_prefers_forward_projection(highway):
    kb, _ = highway
    reg = _radar_failed_registry(kb)
    provided = provided_variables(kb, reg)
    assert provided == {"pos_prev", "t", "t_prev", "pos_behind", "D"}
    best = best_substitution(kb, "pos", provided, reg)
    assert str(best) == "pos <- r_int(pos_prev, t_prev, t)"
    assert substitution_cost(best, reg) == 1.0
    alt = Substitution.from_nodes(kb, "pos", ["pos", "r_add", "pos_behind", "dist", "r_dist", "D"])
    assert substitution_cost(alt, reg) == 2.0


def test_best_uses_gps_when_available(highway):
    kb, reg = highway
    reg.set_status("radar", ItomStatus.FAILED)
    best = best_substitution(kb, "pos", provided_variables(kb, reg), reg)
    assert str(best) == "{pos}"
    assert substitution_cost(best, reg) == 0.0


def test_best_none_when_nothing_provided(highway):
    kb, _ = highway
    assert best_substitution(kb, "pos", set()) is None


def test_staleness_weight_changes_choice(highway):
    kb, _ = highway
    reg = ItomRegistry([
        Itom("prev", "pos_prev", "a", 0.0, [0, 0, 30]),
        Itom("tp", "t_prev", "a", 0.0, [0.0]),
        Itom("clock", "t", "clock", 10.0, [10.0]),
        Itom("behind", "pos_behind", "b", 10.0, [0, 0, 30]),
        Itom("d", "dist", "c", 10.0, [5, 0]),
    ])
    provided = provided_variables(kb, reg)
    flat = best_substitution(kb, "pos", provided, reg, SearchConfig(staleness_weight=0.0))
    assert str(flat) == "pos <- r_add(pos_behind, dist)"  # tie at cost 1, r_add < r_int
    cfg = SearchConfig(staleness_weight=0.1)
    assert str(best_substitution(kb, "pos", provided, reg, cfg)) == "pos <- r_add(pos_behind, dist)"
    reg["behind"].timestamp = 0.0
    reg["d"].timestamp = 0.0
    reg["prev"].timestamp = 9.0
    reg["tp"].timestamp = 9.0
    assert str(best_substitution(kb, "pos", provided, reg, cfg)) == "pos <- r_int(pos_prev, t_prev, t)"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**9))
def test_best_is_min_cost_member_of_enumeration(seed):
    rng = random.Random(seed)
    kb = random_kb(rng)
    target = kb.variables[0].id
    provided = {v.id for v in kb.variables if rng.random() < 0.5}
    best = best_substitution(kb, target, provided)
    valid = [n for n in oracle_enumerate(kb, target, 8) if oracle_sources(n, kb) <= provided]
    if not valid:
        assert best is None
        return
    assert best is not None
    low = min(oracle_cost(n, kb) for n in valid)
    assert oracle_cost(best.nodes, kb) == pytest.approx(low)
    assert best.nodes in set(valid)


def test_search_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(relation_weight=-1)
    with pytest.raises(ValueError):
        SearchConfig(max_depth=0)


def test_substitute_republishes_r_int(highway):
    kb, _ = highway
    reg = _radar_failed_registry(kb)
    sub = best_substitution(kb, "pos", provided_variables(kb, reg), reg)
    s = instantiate_substitute(sub, reg, period=0.1, output_itom="pos_sub")
    assert s.selected == {"pos_prev": "radar_pre_prev", "t": "clock", "t_prev": "clock_prev"}
    out = s.step(reg, 10.0)
    assert out.tolist() == [130.0, 3.5, 30.0]
    assert reg["pos_sub"].value.tolist() == [130.0, 3.5, 30.0]
    reg["clock"].update([11.0], 11.0)
    assert s.step(reg, 11.0).tolist() == [160.0, 3.5, 30.0]


def test_substitute_passthrough_and_period(highway):
    kb, reg = highway
    reg["gps"].update([5, 1, 2], 1.0)
    sub = Substitution.from_nodes(kb, "pos", ["pos"])
    s = instantiate_substitute(sub, reg, period=1.0)
    assert s.step(reg, 1.0).tolist() == [5.0, 1.0, 2.0]
    assert s.step(reg, 1.5) is None  # inside the publish period
    assert s.step(reg, 2.0) is not None


def test_substitute_goes_stale_when_source_fails(highway):
    kb, _ = highway
    reg = _radar_failed_registry(kb)
    sub = best_substitution(kb, "pos", provided_variables(kb, reg), reg)
    s = instantiate_substitute(sub, reg, 0.1, "pos_sub")
    s.step(reg, 10.0)
    reg.set_status("radar_pre_prev", ItomStatus.FAILED)
    assert s.step(reg, 10.1) is None
    assert s.needs_search
    assert s.status is ItomStatus.STALE
    assert reg["pos_sub"].status is ItomStatus.STALE
    assert reg["pos_sub"].value.tolist() == [130.0, 3.5, 30.0]


def test_instantiate_rejects_invalid(highway):
    kb, _ = highway
    sub = Substitution.from_nodes(kb, "pos", ["pos", "r_int", "pos_prev", "t_prev", "t"])
    with pytest.raises(SubstitutionError):
        instantiate_substitute(sub, ItomRegistry(), 0.1)


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=3), st.floats(0, 50))
def test_substitute_output_is_pure(prev, dt):
    from shsa.config import bundled, parse_kb_file

    kb, _ = parse_kb_file(bundled("highway.kb"))
    sub = Substitution.from_nodes(kb, "pos", ["pos", "r_int", "pos_prev", "t_prev", "t"])
    reg = ItomRegistry([
        Itom("p", "pos_prev", "a", 0.0, prev),
        Itom("tp", "t_prev", "a", 0.0, [0.0]),
        Itom("c", "t", "clock", dt, [dt]),
    ])
    a = instantiate_substitute(sub, reg, 0.1, "o1").compute({"pos_prev": prev, "t_prev": [0.0], "t": [dt]})
    b = instantiate_substitute(sub, reg, 0.1, "o2").compute({"pos_prev": prev, "t_prev": [0.0], "t": [dt]})
    assert np.array_equal(a, b)


def test_format_report(highway):
    kb, _ = highway
    sub = Substitution.from_nodes(kb, "pos", ["pos", "r_add", "pos_behind", "dist", "r_dist", "D"])
    text = format_report(sub, {"pos_behind": "gps_behind", "D": "lidar"}, 2.0)
    assert text == (
        "root: pos\n"
        "relations: r_dist r_add\n"
        "sources: D<-lidar pos_behind<-gps_behind\n"
        "cost: 2\n"
    )
