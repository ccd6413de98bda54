import pytest
from hypothesis import given, settings, strategies as st

from shsa.config import KbValidationError, bundled, parse_kb_file, serialize_kb
from shsa.errors import ConfigSyntaxError, FaultInjectionError, ScenarioError
from shsa.harness.scenario import (
    FaultInjection,
    FogSpec,
    RadarSpec,
    Scenario,
    ShsaParams,
    VehicleSpec,
    parse_scenario_file,
    serialize_scenario,
    validate_scenario,
)
from shsa.harness.simulation import run_scenario


def test_bundled_kb_counts(highway):
    kb, reg = highway
    assert (len(kb.variables), len(kb.relations), len(reg)) == (7, 3, 9)


def test_empty_kb_file():
    kb, reg = parse_kb_file("")
    assert kb.variables == () and kb.relations == () and len(reg) == 0
    kb, reg = parse_kb_file("# only a comment\n\n")
    assert kb.variables == ()


def test_undeclared_input_named_with_column():
    text = 'variable a\nvariable b\nrelation r out=b in=a expr="a + zz"\n'
    with pytest.raises(ConfigSyntaxError) as exc:
        parse_kb_file(text)
    assert "'zz'" in str(exc.value)
    assert exc.value.line == 3
    assert text.splitlines()[2][exc.value.column - 1:].startswith("zz")


@pytest.mark.parametrize(
    "text,line,col",
    [
        ("variable a dims=x\n", 1, 17),
        ("variable a\nfrobnicate b\n", 2, 1),
        ('variable a\nvariable b\nrelation r out=b in=a expr="a +"\n', 3, 32),
        ('variable a\nrelation r out=a in=a expr="a\n', 2, 28),
        ("variable a\nitom i var=nope provider=p\n", 2, 12),
    ],
)
def test_syntax_errors_located(text, line, col):
    with pytest.raises(ConfigSyntaxError) as exc:
        parse_kb_file(text)
    assert (exc.value.line, exc.value.column) == (line, col)
    assert f"line {line}" in str(exc.value)


def test_validation_errors_report_lines():
    text = 'variable a\nrelation r out=a in=a,ghost expr="a + ghost"\n'
    with pytest.raises(KbValidationError) as exc:
        parse_kb_file(text)
    assert "ghost" in str(exc.value)
    assert "line 2" in str(exc.value)


def test_kb_round_trip(highway):
    kb, reg = highway
    text = serialize_kb(kb, reg)
    kb2, reg2 = parse_kb_file(text)
    assert kb2 == kb
    assert [(i.id, i.variable, i.provider, i.status) for i in reg2] == [
        (i.id, i.variable, i.provider, i.status) for i in reg
    ]
    assert serialize_kb(kb2, reg2) == text


def test_bundled_scenario(reference_scenario):
    sc = reference_scenario
    assert (len(sc.radars), len(sc.fogs), len(sc.vehicles), len(sc.faults)) == (3, 2, 5, 1)
    assert sc.faults[0].kind == "stuck_at" and sc.faults[0].start == 100
    assert sc.faults[0].duration is None
    assert sc.road_length == 600.0
    assert sc.predecessor("radar1") == "radar3"
    assert sc.fog_of("radar2") == "fog1"
    validate_scenario(sc)


MINIMAL = """\
scenario duration=20
road segments=100
radar r1 fov=0,100
fog f1 radars=r1
vehicle v1 x=10
"""


def test_defaults_applied_and_echoed():
    sc = parse_scenario_file(MINIMAL)
    assert (sc.dt, sc.seed) == (0.1, 42)
    p = sc.params
    assert (p.epsilon, p.theta, p.hold, p.delta, p.gate) == (2.0, 0.3, 3, 0.2, 5.0)
    header = [ln for ln in run_scenario(sc).log_text().splitlines() if ln.startswith("#")]
    text = "\n".join(header)
    for token in ("dt=0.1", "seed=42", "epsilon=2", "theta=0.3", "hold=3", "delta=0.2", "gate=5"):
        assert token in text


@pytest.mark.parametrize(
    "extra,err",
    [
        ("fault f target=radar9 kind=fail_stop start=5\n", ScenarioError),
        ("fault f target=r1 kind=stuck_at start=5 duration=10 value=1\n"
         "fault g target=r1 kind=noise start=10 duration=3 sigma=1\n", FaultInjectionError),
        ("fault f target=r1 kind=melt start=5\n", ConfigSyntaxError),
        ("fault f target=r1 kind=stuck_at start=5\n", ConfigSyntaxError),
    ],
)
def test_scenario_fault_errors(extra, err):
    with pytest.raises(err):
        parse_scenario_file(MINIMAL + extra)


@pytest.mark.parametrize(
    "text",
    [
        MINIMAL.replace("fov=0,100", "fov=0,90"),               # gap
        MINIMAL.replace("fog f1 radars=r1", "fog f1 radars=r2"),  # unknown radar
        MINIMAL.replace("duration=20", "duration=0"),
        MINIMAL + "vehicle v1 x=3\n",                             # duplicate id
        MINIMAL + "params theta=2\n",
    ],
)
def test_scenario_validation_errors(text):
    with pytest.raises((ScenarioError, ValueError)):
        parse_scenario_file(text)


def test_scenario_syntax_error_located():
    with pytest.raises(ConfigSyntaxError) as exc:
        parse_scenario_file(MINIMAL + "vehicle v2 x=abc\n")
    assert exc.value.line == 6


def test_scenario_round_trip(reference_scenario):
    text = serialize_scenario(reference_scenario)
    assert parse_scenario_file(text) == reference_scenario
    assert serialize_scenario(parse_scenario_file(text)) == text


finite = dict(allow_nan=False, allow_infinity=False)


@st.composite
def scenarios(draw):
    n = draw(st.integers(1, 4))
    segs = draw(st.lists(st.floats(10, 500, **finite).map(lambda x: round(x, 3)), min_size=n, max_size=n))
    radars, lo = [], 0.0
    for k, s in enumerate(segs):
        hi = lo + s
        radars.append(RadarSpec(f"r{k}", (lo, hi), draw(st.floats(0.01, 2, **finite))))
        lo = hi
    cut = draw(st.integers(1, n))
    ids = [r.id for r in radars]
    fogs = [FogSpec("fa", tuple(ids[:cut]))] + ([FogSpec("fb", tuple(ids[cut:]))] if cut < n else [])
    vehicles = tuple(
        VehicleSpec(f"v{k}", draw(st.floats(0, 1000, **finite)), draw(st.floats(-5, 5, **finite)),
                    draw(st.floats(0, 40, **finite)), draw(st.booleans()), draw(st.booleans()))
        for k in range(draw(st.integers(1, 4)))
    )
    faults = []
    if draw(st.booleans()):
        dur = draw(st.one_of(st.none(), st.integers(1, 50)))
        faults.append(FaultInjection("r0", draw(st.integers(0, 100)), "noise", dur,
                                     {"sigma": draw(st.floats(0.1, 9, **finite))}, "f1"))
    if len(fogs) == 2 and draw(st.booleans()):
        faults.append(FaultInjection(ids[-1], 3, "spoof", 4, {"values": {"fa": 1.5, "fb": -2.0}}, "f2"))
    params = ShsaParams(epsilon=draw(st.floats(0.1, 10, **finite)), hold=draw(st.integers(1, 6)))
    return Scenario(draw(st.integers(1, 5000)), tuple(segs), tuple(radars), tuple(fogs), vehicles,
                    tuple(faults), dt=draw(st.sampled_from([0.05, 0.1, 0.2])),
                    seed=draw(st.integers(0, 2**31)), params=params)


@settings(max_examples=60, deadline=None)
@given(scenarios())
def test_scenario_round_trip_generated(sc):
    validate_scenario(sc)
    again = parse_scenario_file(serialize_scenario(sc))
    assert again == sc


def test_bundled_files_are_packaged():
    assert "relation r_int" in bundled("highway.kb")
    assert "fault f1" in bundled("highway.scn")
