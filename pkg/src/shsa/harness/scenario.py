"""Scenario description for the highway sensor-field simulation.

The road is a ring of ``sum(segments)`` metres. Positions are reported in a
lap-unwrapped coordinate (``x`` keeps growing as a vehicle goes round), so a
forward projection of an old observation stays valid across laps. Each radar
watches one interval of the ring; radars are ordered by interval start and
the radar before a given one on the ring is its predecessor.

Scenario file layout (one record per line, ``#`` starts a comment)::

    scenario duration=2000 dt=0.1 seed=42 placement=fog
    params epsilon=2 theta=0.3 hold=3 delta=0.2 gate=5
    road segments=200,200,200
    radar radar1 fov=0,200 sigma=0.2
    fog fog1 radars=radar1,radar2
    vehicle v1 x=20 y=0 v=30 gps=yes distance=no
    fault f1 target=radar2 kind=stuck_at start=100 duration=permanent value=130
    sensors gps_sigma=0.2 distance_sigma=0.1 distance_range=100
    tracker q=0.01 coast_after=1 drop_after=10 adaptive_r=no r_max=10
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from ..config import Line, tokenize_lines
from ..errors import ConfigSyntaxError, FaultInjectionError, ScenarioError

__all__ = [
    "FAULT_KINDS",
    "ShsaParams",
    "SensorParams",
    "TrackerParams",
    "RadarSpec",
    "FogSpec",
    "VehicleSpec",
    "FaultInjection",
    "Scenario",
    "validate_scenario",
    "parse_scenario_file",
    "serialize_scenario",
]

FAULT_KINDS = ("fail_stop", "fail_silent", "stuck_at", "noise", "delay", "spoof", "drift")

_FAULT_PARAMS = {
    "fail_stop": (),
    "fail_silent": (),
    "stuck_at": ("value",),
    "noise": ("sigma",),
    "delay": ("ticks",),
    "spoof": ("values",),
    "drift": ("rate",),
}


@dataclass(frozen=True)
class ShsaParams:
    epsilon: float = 2.0
    theta: float = 0.3
    hold: int = 3
    delta: float = 0.2
    gate: float = 5.0
    relation_weight: float = 1.0
    staleness_weight: float = 0.1
    max_depth: int = 8
    # ticks of monitor history handed to fault localization; 0 means ``hold``
    sfl_window: int = 0
    formula: str = "ochiai"

    @property
    def window(self) -> int:
        return self.sfl_window or self.hold


@dataclass(frozen=True)
class SensorParams:
    gps_sigma: float = 0.2
    distance_sigma: float = 0.1
    distance_range: float = 100.0


@dataclass(frozen=True)
class TrackerParams:
    q: float = 0.01
    coast_after: int = 1
    drop_after: int = 10
    adaptive_r: bool = False
    r_max: float = 10.0
    akf_window: int = 10
    # oldest predecessor track (s) still usable for forward projection
    prev_max_age: float = 10.0
    # speed noise (m/s) assumed for substitute outputs; a relation may copy
    # the speed of another vehicle, so it is not trusted like a radar reading
    substitute_speed_sigma: float = 2.0


@dataclass(frozen=True)
class RadarSpec:
    id: str
    fov: tuple[float, float]
    sigma: float = 0.2
    position: float | None = None


@dataclass(frozen=True)
class FogSpec:
    id: str
    radars: tuple[str, ...]


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    x: float
    y: float = 0.0
    v: float = 30.0
    gps: bool = False
    distance: bool = False


@dataclass(frozen=True)
class FaultInjection:
    """A fault program for one component.

    ``duration`` is in ticks; ``None`` means permanent. ``params`` holds the
    kind-specific settings: ``value`` (stuck_at), ``sigma`` (noise),
    ``ticks`` (delay), ``values`` as subscriber -> value (spoof) and ``rate``
    in units per second (drift).
    """

    target: str
    start: int
    kind: str
    duration: int | None = None
    params: dict = field(default_factory=dict, hash=False, compare=True)
    id: str = ""

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise FaultInjectionError(f"unknown fault kind {self.kind!r}")
        if self.start < 0:
            raise FaultInjectionError(f"fault on {self.target}: start must be >= 0")
        if self.duration is not None and self.duration < 1:
            raise FaultInjectionError(f"fault on {self.target}: duration must be >= 1 tick")
        for key in _FAULT_PARAMS[self.kind]:
            if key not in self.params:
                raise FaultInjectionError(f"{self.kind} fault on {self.target} needs {key!r}")
        if self.kind == "spoof" and len(self.params["values"]) < 2:
            raise FaultInjectionError("spoof needs values for at least two subscribers")
        if self.kind == "delay" and int(self.params["ticks"]) < 1:
            raise FaultInjectionError("delay needs ticks >= 1")

    @property
    def end(self) -> float:
        """First tick after the fault window (``inf`` when permanent)."""
        if self.kind == "fail_stop" or self.duration is None:
            return float("inf")
        return self.start + self.duration

    def active(self, tick: int) -> bool:
        return self.start <= tick < self.end

    def overlaps(self, other: "FaultInjection") -> bool:
        return self.target == other.target and self.start < other.end and other.start < self.end

    def describe(self) -> str:
        dur = "permanent" if self.duration is None else str(self.duration)
        parts = [f"kind={self.kind}", f"start={self.start}", f"duration={dur}"]
        for k, v in sorted(self.params.items()):
            if isinstance(v, dict):
                v = ",".join(f"{s}:{x:g}" for s, x in sorted(v.items()))
            elif isinstance(v, float):
                v = f"{v:g}"
            parts.append(f"{k}={v}")
        return " ".join(parts)


@dataclass(frozen=True)
class Scenario:
    duration: int
    segments: tuple[float, ...]
    radars: tuple[RadarSpec, ...]
    fogs: tuple[FogSpec, ...]
    vehicles: tuple[VehicleSpec, ...]
    faults: tuple[FaultInjection, ...] = ()
    dt: float = 0.1
    seed: int = 42
    placement: str = "fog"
    params: ShsaParams = ShsaParams()
    sensors: SensorParams = SensorParams()
    tracker: TrackerParams = TrackerParams()

    @property
    def road_length(self) -> float:
        return float(sum(self.segments))

    def radar(self, radar_id: str) -> RadarSpec:
        for r in self.radars:
            if r.id == radar_id:
                return r
        raise KeyError(radar_id)

    def ordered_radars(self) -> list[RadarSpec]:
        return sorted(self.radars, key=lambda r: (r.fov[0], r.id))

    def predecessor(self, radar_id: str) -> str | None:
        order = [r.id for r in self.ordered_radars()]
        k = order.index(radar_id)
        pred = order[k - 1]
        return None if pred == radar_id else pred

    def fog_of(self, radar_id: str) -> str:
        for f in self.fogs:
            if radar_id in f.radars:
                return f.id
        raise KeyError(radar_id)

    def components(self) -> list[str]:
        out = [r.id for r in self.radars]
        for v in self.vehicles:
            if v.gps:
                out.append(f"{v.id}.gps")
            if v.distance:
                out.append(f"{v.id}.distance")
        return out

    def without_faults(self) -> "Scenario":
        return replace(self, faults=())

    def with_params(self, **overrides) -> "Scenario":
        seed = overrides.pop("seed", None)
        sc = replace(self, params=replace(self.params, **overrides)) if overrides else self
        return replace(sc, seed=seed) if seed is not None else sc


def validate_scenario(sc: Scenario) -> None:
    """Raise ``ScenarioError`` describing the first problem found."""
    if not sc.dt > 0:
        raise ScenarioError("dt must be > 0")
    if sc.duration < 1:
        raise ScenarioError("duration must be >= 1 tick")
    if not sc.segments or any(s <= 0 for s in sc.segments):
        raise ScenarioError("road segments must be positive lengths")
    p = sc.params
    if not p.epsilon > 0 or not 0 < p.theta <= 1 or p.hold < 1:
        raise ScenarioError("need epsilon > 0, 0 < theta <= 1, hold >= 1")
    if not 0 <= p.delta < 1:
        raise ScenarioError("delta must lie in [0, 1)")
    if not p.gate > 0:
        raise ScenarioError("gate must be > 0")
    if p.formula not in ("ochiai", "tarantula"):
        raise ScenarioError(f"unknown SFL formula {p.formula!r}")
    ids = [r.id for r in sc.radars] + [f.id for f in sc.fogs] + [v.id for v in sc.vehicles]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise ScenarioError(f"duplicate ids {dup}")
    if not sc.radars:
        raise ScenarioError("scenario has no radars")
    length = sc.road_length
    cursor = 0.0
    for r in sc.ordered_radars():
        lo, hi = r.fov
        if not lo < hi:
            raise ScenarioError(f"radar {r.id}: empty field of view {r.fov}")
        if r.sigma < 0:
            raise ScenarioError(f"radar {r.id}: negative sigma")
        if lo > cursor + 1e-9:
            raise ScenarioError(f"road interval [{cursor:g}, {lo:g}) is not covered by any radar")
        if lo < cursor - 1e-9:
            raise ScenarioError(f"radar {r.id} overlaps the previous field of view")
        cursor = hi
    if abs(cursor - length) > 1e-9:
        raise ScenarioError(f"radar coverage ends at {cursor:g}, road length is {length:g}")
    radar_ids = {r.id for r in sc.radars}
    assigned: dict[str, str] = {}
    for f in sc.fogs:
        for r in f.radars:
            if r not in radar_ids:
                raise ScenarioError(f"fog {f.id}: unknown radar {r!r}")
            if r in assigned:
                raise ScenarioError(f"radar {r} assigned to both {assigned[r]} and {f.id}")
            assigned[r] = f.id
    missing = sorted(radar_ids - set(assigned))
    if missing:
        raise ScenarioError(f"radars without fog node: {missing}")
    comps = set(sc.components())
    fog_ids = {f.id for f in sc.fogs}
    for f in sc.faults:
        if f.target not in comps:
            raise ScenarioError(f"fault {f.id or f.kind}: unknown component {f.target!r}")
        if f.kind == "spoof":
            unknown = sorted(set(f.params["values"]) - fog_ids)
            if unknown:
                raise ScenarioError(f"spoof on {f.target}: unknown subscribers {unknown}")
    for a_idx, a in enumerate(sc.faults):
        for b in sc.faults[a_idx + 1 :]:
            if a.overlaps(b):
                raise FaultInjectionError(
                    f"overlapping faults on {a.target}: {a.describe()} / {b.describe()}"
                )


# -- text format -------------------------------------------------------------

def _as_bool(line: Line, key: str, default: bool) -> bool:
    raw = line.fields.get(key)
    if raw is None:
        return default
    if raw.lower() in ("yes", "true", "1", "on"):
        return True
    if raw.lower() in ("no", "false", "0", "off"):
        return False
    raise line.fail(f"{key}={raw!r} is not a yes/no value", key)


def _as(line: Line, key: str, cast, default=None, required=False):
    if key not in line.fields:
        if required:
            raise line.fail(f"{line.keyword}: missing field {key!r}")
        return default
    try:
        return cast(line.fields[key])
    except ValueError:
        raise line.fail(f"{key}={line.fields[key]!r} is not a valid {cast.__name__}", key) from None


def _pair(line: Line, key: str) -> tuple[float, float]:
    raw = line.fields.get(key)
    if raw is None:
        raise line.fail(f"{line.keyword} {line.name}: missing field {key!r}")
    try:
        lo, hi = (float(x) for x in raw.split(","))
    except ValueError:
        raise line.fail(f"{key} must be 'lo,hi'", key) from None
    return lo, hi


def _dataclass_fields(line: Line, cls, base):
    kw = {}
    for f in fields(cls):
        if f.name not in line.fields:
            continue
        default = getattr(base, f.name)
        if isinstance(default, bool):
            kw[f.name] = _as_bool(line, f.name, default)
        elif isinstance(default, int):
            kw[f.name] = _as(line, f.name, int)
        elif isinstance(default, float):
            kw[f.name] = _as(line, f.name, float)
        else:
            kw[f.name] = line.fields[f.name]
    unknown = sorted(set(line.fields) - {f.name for f in fields(cls)})
    if unknown:
        raise line.fail(f"{line.keyword}: unknown field {unknown[0]!r}", unknown[0])
    return replace(base, **kw)


def _fault(line: Line) -> FaultInjection:
    kind = line.fields.get("kind")
    if kind not in FAULT_KINDS:
        raise line.fail(f"unknown fault kind {kind!r}", "kind")
    target = line.fields.get("target")
    if not target:
        raise line.fail("fault: missing field 'target'")
    start = _as(line, "start", int, 0)
    raw_dur = line.fields.get("duration", "permanent")
    if raw_dur == "permanent":
        duration = None
    else:
        duration = _as(line, "duration", int)
    params: dict = {}
    for key in _FAULT_PARAMS[kind]:
        if key not in line.fields:
            raise line.fail(f"{kind} fault needs field {key!r}")
        if key == "values":
            vals = {}
            for part in line.fields[key].split(","):
                try:
                    sub, val = part.split(":")
                    vals[sub] = float(val)
                except ValueError:
                    raise line.fail("values must be 'subscriber:value,...'", key) from None
            params[key] = vals
        elif key == "ticks":
            params[key] = _as(line, key, int)
        else:
            params[key] = _as(line, key, float)
    allowed = {"kind", "target", "start", "duration", *_FAULT_PARAMS[kind]}
    extra = sorted(set(line.fields) - allowed)
    if extra:
        raise line.fail(f"fault: unexpected field {extra[0]!r} for kind {kind}", extra[0])
    try:
        return FaultInjection(target, start, kind, duration, params, line.name or "")
    except FaultInjectionError as exc:
        raise ConfigSyntaxError(str(exc), line.number, 1) from None


def parse_scenario_file(text: str, validate: bool = True) -> Scenario:
    """Parse a scenario file; missing optional fields take their defaults."""
    head: dict = {}
    params, sensors, tracker = ShsaParams(), SensorParams(), TrackerParams()
    segments: tuple[float, ...] = ()
    radars, fogs, vehicles, faults = [], [], [], []
    for line in tokenize_lines(text):
        kw = line.keyword
        if kw == "scenario":
            head["duration"] = _as(line, "duration", int, required=True)
            head["dt"] = _as(line, "dt", float, 0.1)
            head["seed"] = _as(line, "seed", int, 42)
            head["placement"] = line.fields.get("placement", "fog")
        elif kw == "params":
            params = _dataclass_fields(line, ShsaParams, params)
        elif kw == "sensors":
            sensors = _dataclass_fields(line, SensorParams, sensors)
        elif kw == "tracker":
            tracker = _dataclass_fields(line, TrackerParams, tracker)
        elif kw == "road":
            raw = line.fields.get("segments", "")
            try:
                segments = tuple(float(s) for s in raw.split(","))
            except ValueError:
                raise line.fail("segments must be comma-separated lengths", "segments") from None
        elif kw == "radar":
            radars.append(
                RadarSpec(line.name, _pair(line, "fov"), _as(line, "sigma", float, 0.2),
                          _as(line, "position", float))
            )
        elif kw == "fog":
            fogs.append(FogSpec(line.name, tuple(p for p in line.fields.get("radars", "").split(",") if p)))
        elif kw == "vehicle":
            vehicles.append(
                VehicleSpec(
                    line.name,
                    _as(line, "x", float, required=True),
                    _as(line, "y", float, 0.0),
                    _as(line, "v", float, 30.0),
                    _as_bool(line, "gps", False),
                    _as_bool(line, "distance", False),
                )
            )
        elif kw == "fault":
            faults.append(_fault(line))
        else:
            raise ConfigSyntaxError(f"unknown keyword {kw!r}", line.number, 1)
        if kw in ("radar", "fog", "vehicle") and not line.name:
            raise line.fail(f"{kw}: missing id")
    if "duration" not in head:
        raise ConfigSyntaxError("missing 'scenario duration=...' line")
    sc = Scenario(
        duration=head["duration"],
        segments=segments,
        radars=tuple(radars),
        fogs=tuple(fogs),
        vehicles=tuple(vehicles),
        faults=tuple(faults),
        dt=head["dt"],
        seed=head["seed"],
        placement=head["placement"],
        params=params,
        sensors=sensors,
        tracker=tracker,
    )
    if validate:
        validate_scenario(sc)
    return sc


def _num(x: float) -> str:
    """Shortest text that reads back as the same float."""
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def _kv(obj) -> str:
    parts = []
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, bool):
            v = "yes" if v else "no"
        elif isinstance(v, float):
            v = _num(v)
        parts.append(f"{f.name}={v}")
    return " ".join(parts)


def serialize_scenario(sc: Scenario) -> str:
    """Write ``sc`` back in the scenario file format, defaults included."""
    g = _num
    out = [
        f"scenario duration={sc.duration} dt={g(sc.dt)} seed={sc.seed} placement={sc.placement}",
        "params " + _kv(sc.params),
        "sensors " + _kv(sc.sensors),
        "tracker " + _kv(sc.tracker),
        "road segments=" + ",".join(g(s) for s in sc.segments),
    ]
    for r in sc.radars:
        line = f"radar {r.id} fov={g(r.fov[0])},{g(r.fov[1])} sigma={g(r.sigma)}"
        if r.position is not None:
            line += f" position={g(r.position)}"
        out.append(line)
    for f in sc.fogs:
        out.append(f"fog {f.id} radars={','.join(f.radars)}")
    for v in sc.vehicles:
        out.append(
            f"vehicle {v.id} x={g(v.x)} y={g(v.y)} v={g(v.v)} "
            f"gps={'yes' if v.gps else 'no'} distance={'yes' if v.distance else 'no'}"
        )
    for k, f in enumerate(sc.faults):
        dur = "permanent" if f.duration is None else str(f.duration)
        line = f"fault {f.id or f'f{k + 1}'} target={f.target} kind={f.kind} start={f.start} duration={dur}"
        for key, val in sorted(f.params.items()):
            if isinstance(val, dict):
                val = ",".join(f"{s}:{g(x)}" for s, x in sorted(val.items()))
            elif isinstance(val, float):
                val = g(val)
            line += f" {key}={val}"
        out.append(line)
    return "\n".join(out) + "\n"
