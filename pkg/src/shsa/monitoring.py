"""Plausibility monitors over redundant itoms.

A monitor watches one variable. Each *branch* brings some itoms into the
monitored variable's domain, either directly (an itom of the variable itself)
or through a short relation chain. At every step the branch values are
compared pairwise; a branch's confidence is the fraction of the other
branches that agree with it within ``epsilon`` (Chebyshev distance). A branch
is classified failed once its confidence stayed below ``theta`` for ``hold``
consecutive steps.
"""

from __future__ import annotations

import enum
import itertools
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ExpressionError, MonitorSetupError
from .knowledge_base import Itom, ItomRegistry, KnowledgeBase, provided_variables
from .substitution import Substitution, enumerate_substitutions

__all__ = [
    "BranchStatus",
    "Branch",
    "MonitorSpec",
    "ConfidenceReport",
    "Monitor",
    "setup_monitor",
    "branch_values",
    "agreement_confidence",
    "monitor_step",
    "classify_failed",
    "aggregate_trust",
    "majority_vote",
    "report_rows",
    "monitor_trace",
]

MONITOR_DEPTH = 2


class BranchStatus(str, enum.Enum):
    OK = "ok"
    SUSPECTED = "suspected"
    FAILED = "failed"


@dataclass(frozen=True)
class Branch:
    id: str
    substitution: Substitution
    # (source variable, itom id) pairs, sorted by variable
    itoms: tuple[tuple[str, str], ...]
    providers: tuple[str, ...] = ()

    @property
    def direct(self) -> bool:
        return not self.substitution.relations

    @property
    def itom_ids(self) -> tuple[str, ...]:
        return tuple(i for _, i in self.itoms)

    def value(self, snapshot: Mapping[str, Sequence[float]]) -> np.ndarray:
        env = {}
        for var, itom_id in self.itoms:
            if itom_id not in snapshot or snapshot[itom_id] is None:
                raise KeyError(itom_id)
            env[var] = np.asarray(snapshot[itom_id], dtype=float).reshape(-1)
        for rel in self.substitution.topological_relations():
            env[rel.output] = rel.expression.evaluate(env)
        return env[self.substitution.root]


@dataclass(frozen=True)
class MonitorSpec:
    variable: str
    branches: tuple[Branch, ...]
    epsilon: float = 2.0
    theta: float = 0.3
    hold: int = 3

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if len(self.branches) < 2:
            raise MonitorSetupError(
                f"monitor on {self.variable!r} needs >= 2 branches, got {len(self.branches)}"
            )
        if len({b.id for b in self.branches}) != len(self.branches):
            raise MonitorSetupError("duplicate branch ids")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.hold < 1:
            raise ValueError("hold must be >= 1")

    @property
    def branch_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.branches)

    def branch(self, branch_id: str) -> Branch:
        for b in self.branches:
            if b.id == branch_id:
                return b
        raise KeyError(branch_id)


@dataclass
class ConfidenceReport:
    time: float
    values: dict[str, np.ndarray | None]
    confidence: dict[str, float]
    status: dict[str, BranchStatus]

    def failed(self) -> set[str]:
        return {b for b, s in self.status.items() if s is BranchStatus.FAILED}


def _branch_id(sub: Substitution, itoms: Sequence[tuple[str, str]]) -> str:
    if not sub.relations:
        return itoms[0][1]
    rels = "+".join(r.id for r in sub.topological_relations())
    return f"{rels}({','.join(i for _, i in itoms)})"


def setup_monitor(
    kb: KnowledgeBase,
    reg: ItomRegistry,
    variable: str,
    epsilon: float = 2.0,
    theta: float = 0.3,
    hold: int = 3,
    itom_filter: Callable[[Itom], bool] | None = None,
) -> MonitorSpec:
    """Build a monitor for ``variable`` from the itoms currently available.

    Branches are every available itom of the variable plus one branch per
    valid substitution of depth <= 2, each bound to the freshest available
    itom of its sources. ``itom_filter`` can hide itoms (for instance the
    outputs of running substitutes, which would echo their own sources).
    """
    if itom_filter is not None:
        view = ItomRegistry(i for i in reg if itom_filter(i))
    else:
        view = reg
    provided = provided_variables(kb, view)
    branches = []
    for sub in enumerate_substitutions(kb, variable, MONITOR_DEPTH):
        if not sub.sources <= provided:
            continue
        if not sub.relations:
            for it in view.for_variable(variable, available_only=True):
                pairs = ((variable, it.id),)
                branches.append(Branch(it.id, sub, pairs, (it.provider,)))
            continue
        pairs = tuple((v, view.freshest(v).id) for v in sorted(sub.sources))
        providers = tuple(sorted({view[i].provider for _, i in pairs}))
        branches.append(Branch(_branch_id(sub, pairs), sub, pairs, providers))
    if len(branches) < 2:
        raise MonitorSetupError(
            f"cannot monitor {variable!r}: only {len(branches)} derivable branch(es)"
        )
    return MonitorSpec(variable, tuple(branches), epsilon, theta, hold)


def branch_values(spec: MonitorSpec, snapshot: Mapping[str, Sequence[float]]) -> dict[str, np.ndarray | None]:
    """Common-domain value of each branch; ``None`` where evaluation failed."""
    out: dict[str, np.ndarray | None] = {}
    for b in spec.branches:
        try:
            out[b.id] = b.value(snapshot)
        except (KeyError, ExpressionError, ValueError):
            out[b.id] = None
    return out


def agreement_confidence(values: Mapping[str, np.ndarray | None], epsilon: float) -> dict[str, float]:
    """Fraction of the other branches within ``epsilon`` (max-component distance)."""
    ids = list(values)
    n = len(ids)
    conf = {}
    for a in ids:
        va = values[a]
        if va is None or n < 2:
            conf[a] = 0.0
            continue
        agree = 0
        for b in ids:
            vb = values[b]
            if b == a or vb is None or vb.shape != va.shape:
                continue
            if np.max(np.abs(va - vb)) <= epsilon:
                agree += 1
        conf[a] = agree / (n - 1)
    return conf


def _status(streak: int, conf: float, theta: float, hold: int) -> BranchStatus:
    if conf >= theta:
        return BranchStatus.OK
    return BranchStatus.FAILED if streak >= hold else BranchStatus.SUSPECTED


def monitor_step(
    spec: MonitorSpec,
    snapshot: Mapping[str, Sequence[float]],
    time: float = 0.0,
    history: Mapping[str, Sequence[float]] | None = None,
) -> ConfidenceReport:
    """One plausibility check over ``snapshot`` (itom id -> value).

    ``history`` holds each branch's earlier confidences (oldest first) and is
    only used for the hold logic; it is not modified.
    """
    values = branch_values(spec, snapshot)
    conf = agreement_confidence(values, spec.epsilon)
    status = {}
    for bid, c in conf.items():
        past = list(history.get(bid, ())) if history else []
        series = past + [c]
        status[bid] = _status(_low_streak(series, spec.theta), c, spec.theta, spec.hold)
    return ConfidenceReport(time, values, conf, status)


def _low_streak(series: Sequence[float], theta: float) -> int:
    n = 0
    for c in reversed(series):
        if c >= theta:
            break
        n += 1
    return n


def classify_failed(history: Mapping[str, Sequence[float]], theta: float, hold: int) -> set[str]:
    """Branches whose last ``hold`` confidences are all below ``theta``."""
    out = set()
    for bid, series in history.items():
        series = list(series)
        if len(series) >= hold and all(c < theta for c in series[-hold:]):
            out.add(bid)
    return out


def aggregate_trust(confidences: Iterable[float]) -> float | None:
    """Unweighted mean of per-vehicle confidences; ``None`` when there are none."""
    vals = [float(c) for c in confidences]
    if not vals:
        return None
    return sum(vals) / len(vals)


class Monitor:
    """A monitor spec plus its confidence history.

    Re-setting the spec (when availability changes) keeps the history of
    branches that survive and drops the rest.
    """

    def __init__(self, spec: MonitorSpec, window: int | None = None):
        self.spec = spec
        self.window = window or max(spec.hold, 1) * 4
        self.history: dict[str, deque] = {b: deque(maxlen=self.window) for b in spec.branch_ids}

    def reset_spec(self, spec: MonitorSpec) -> None:
        old = self.history
        self.spec = spec
        self.history = {b: old.get(b, deque(maxlen=self.window)) for b in spec.branch_ids}

    def step(self, snapshot: Mapping[str, Sequence[float]], time: float = 0.0) -> ConfidenceReport:
        report = monitor_step(self.spec, snapshot, time, self.history)
        for bid, c in report.confidence.items():
            self.history[bid].append(c)
        return report

    def failed(self) -> set[str]:
        return classify_failed(self.history, self.spec.theta, self.spec.hold)


def majority_vote(values: Sequence[Sequence[float]], epsilon: float) -> np.ndarray | None:
    """Centroid of the largest group of mutually agreeing values.

    Values agree when their Chebyshev distance is <= ``epsilon``; a group
    needs pairwise agreement, so the centroid is within ``epsilon`` of every
    member. Returns ``None`` unless the group is a strict majority.
    """
    vecs = [np.asarray(v, dtype=float).reshape(-1) for v in values]
    n = len(vecs)
    if n == 0:
        raise ValueError("majority_vote needs at least one value")
    need = n // 2 + 1
    close = [[np.max(np.abs(vecs[i] - vecs[j])) <= epsilon for j in range(n)] for i in range(n)]
    if n <= 16:
        for size in range(n, need - 1, -1):
            for group in itertools.combinations(range(n), size):
                if all(close[a][b] for a, b in itertools.combinations(group, 2)):
                    return np.mean([vecs[i] for i in group], axis=0)
        return None
    # large inputs: star groups of radius epsilon/2 are pairwise within epsilon
    best: list[int] = []
    for i in range(n):
        group = [j for j in range(n) if np.max(np.abs(vecs[i] - vecs[j])) <= epsilon / 2]
        if len(group) > len(best):
            best = group
    if len(best) >= need:
        return np.mean([vecs[i] for i in best], axis=0)
    return None


def _fmt_vec(v) -> str:
    if v is None:
        return "nan"
    return ";".join(f"{x:.6g}" for x in np.asarray(v).reshape(-1))


def report_rows(report: ConfidenceReport) -> list[str]:
    """CSV records ``time,branch,value,confidence,status`` (vector parts joined by ';')."""
    return [
        f"{report.time:.6g},{bid},{_fmt_vec(report.values[bid])},"
        f"{report.confidence[bid]:.6g},{report.status[bid].value}"
        for bid in report.confidence
    ]


def monitor_trace(
    rows: Iterable[tuple[float, str, Sequence[float]]],
    epsilon: float = 2.0,
    theta: float = 0.3,
    hold: int = 3,
) -> list[ConfidenceReport]:
    """Offline plausibility check over already-transformed branch values.

    ``rows`` are ``(time, branch id, value)`` triples; rows sharing a time
    form one step. Branch values are taken as given (already in the common
    domain).
    """
    steps: dict[float, dict[str, np.ndarray]] = {}
    for t, bid, val in rows:
        steps.setdefault(float(t), {})[bid] = np.asarray(val, dtype=float).reshape(-1)
    history: dict[str, list[float]] = {}
    reports = []
    for t in sorted(steps):
        values = dict(sorted(steps[t].items()))
        conf = agreement_confidence(values, epsilon)
        status = {}
        for bid, c in conf.items():
            series = history.setdefault(bid, [])
            series.append(c)
            status[bid] = _status(_low_streak(series, theta), c, theta, hold)
        reports.append(ConfidenceReport(t, values, conf, status))
    return reports
