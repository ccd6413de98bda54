"""Fault localization from monitor verdicts and channel traffic checks."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigSyntaxError, DiagnosisError, NoFailingRunsError
from .monitoring import ConfidenceReport

__all__ = [
    "Spectrum",
    "Ranking",
    "ChannelStats",
    "ChannelClass",
    "build_spectrum",
    "ochiai",
    "tarantula",
    "sfl_rank",
    "parse_spectrum",
    "comm_behavior_classify",
]


@dataclass(frozen=True)
class Spectrum:
    components: tuple[str, ...]
    # (involvement bits, failed)
    runs: tuple[tuple[tuple[bool, ...], bool], ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        runs = tuple((tuple(bool(b) for b in bits), bool(f)) for bits, f in self.runs)
        object.__setattr__(self, "runs", runs)
        if len(set(self.components)) != len(self.components):
            raise DiagnosisError("duplicate component ids in spectrum")
        for bits, _ in runs:
            if len(bits) != len(self.components):
                raise DiagnosisError(
                    f"run has {len(bits)} bits for {len(self.components)} components"
                )

    @property
    def n_failed(self) -> int:
        return sum(1 for _, f in self.runs if f)

    def counts(self) -> dict[str, tuple[int, int, int, int]]:
        """Component -> (e_f, e_p, n_f, n_p)."""
        m = np.array([bits for bits, _ in self.runs], dtype=bool).reshape(len(self.runs), len(self.components))
        failed = np.array([f for _, f in self.runs], dtype=bool)
        ef = (m & failed[:, None]).sum(axis=0)
        ep = (m & ~failed[:, None]).sum(axis=0)
        nf = failed.sum() - ef
        np_ = (~failed).sum() - ep
        return {
            c: (int(ef[k]), int(ep[k]), int(nf[k]), int(np_[k]))
            for k, c in enumerate(self.components)
        }

    def to_text(self) -> str:
        lines = [" ".join(self.components)]
        for bits, failed in self.runs:
            lines.append("".join("1" if b else "0" for b in bits) + (" fail" if failed else " pass"))
        return "\n".join(lines) + "\n"


def parse_spectrum(text: str) -> Spectrum:
    """Read the spectrum text format: component ids, then ``<bits> pass|fail`` lines."""
    lines = [(n, ln.strip()) for n, ln in enumerate(text.splitlines(), 1)]
    lines = [(n, ln) for n, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ConfigSyntaxError("empty spectrum file")
    components = tuple(lines[0][1].split())
    runs = []
    for n, ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2 or parts[1] not in ("pass", "fail"):
            raise ConfigSyntaxError("expected '<bits> pass|fail'", n, 1)
        bits = parts[0]
        bad = next((k for k, ch in enumerate(bits) if ch not in "01"), None)
        if bad is not None:
            raise ConfigSyntaxError(f"invalid bit {bits[bad]!r}", n, bad + 1)
        if len(bits) != len(components):
            raise ConfigSyntaxError(f"{len(bits)} bits for {len(components)} components", n, 1)
        runs.append((tuple(ch == "1" for ch in bits), parts[1] == "fail"))
    return Spectrum(components, tuple(runs))


def build_spectrum(
    trace: Sequence[ConfidenceReport],
    branch_components: Mapping[str, Iterable[str]],
    epsilon: float,
) -> Spectrum:
    """Turn monitor steps into a spectrum.

    Every pairwise comparison inside a step is one run. The run involves the
    components behind both branches and fails when the two values disagree
    by more than ``epsilon`` (or one of them could not be evaluated).
    """
    if not trace:
        raise DiagnosisError("empty monitor trace")
    comps = {b: tuple(sorted(set(c))) for b, c in branch_components.items()}
    components = sorted({c for cs in comps.values() for c in cs})
    index = {c: k for k, c in enumerate(components)}
    runs = []
    for report in trace:
        ids = list(report.values)
        for b in ids:
            if b not in comps:
                raise DiagnosisError(f"branch {b!r} has no component mapping")
        for a, b in itertools.combinations(ids, 2):
            bits = [False] * len(components)
            for c in comps[a] + comps[b]:
                bits[index[c]] = True
            va, vb = report.values[a], report.values[b]
            failed = (
                va is None
                or vb is None
                or va.shape != vb.shape
                or float(np.max(np.abs(va - vb))) > epsilon
            )
            runs.append((tuple(bits), failed))
    if not runs:
        raise DiagnosisError("trace contains no branch pairs to compare")
    return Spectrum(tuple(components), tuple(runs))


def ochiai(ef: int, ep: int, nf: int, np_: int = 0) -> float:
    denom = math.sqrt((ef + nf) * (ef + ep))
    return ef / denom if denom else 0.0


def tarantula(ef: int, ep: int, nf: int, np_: int) -> float:
    total_f = ef + nf
    total_p = ep + np_
    fail_ratio = ef / total_f if total_f else 0.0
    pass_ratio = ep / total_p if total_p else 0.0
    denom = fail_ratio + pass_ratio
    return fail_ratio / denom if denom else 0.0


FORMULAS = {"ochiai": ochiai, "tarantula": tarantula}


@dataclass(frozen=True)
class Ranking:
    entries: tuple[tuple[str, float], ...]

    @property
    def top(self) -> str:
        return self.entries[0][0]

    def score(self, component: str) -> float:
        return dict(self.entries)[component]

    def position(self, component: str) -> int:
        return [c for c, _ in self.entries].index(component)

    def format(self) -> str:
        return "".join(f"{c}:{s:.6g}\n" for c, s in self.entries)


def sfl_rank(spectrum: Spectrum, formula: str = "ochiai") -> Ranking:
    """Rank components by suspiciousness (highest first, ties by id)."""
    if formula not in FORMULAS:
        raise ValueError(f"unknown formula {formula!r}; choose from {sorted(FORMULAS)}")
    if spectrum.n_failed == 0:
        raise NoFailingRunsError("spectrum has no failing runs; nothing to localize")
    fn = FORMULAS[formula]
    scores = [(c, fn(*cnt)) for c, cnt in spectrum.counts().items()]
    return Ranking(tuple(sorted(scores, key=lambda e: (-e[1], e[0]))))


@dataclass(frozen=True)
class ChannelStats:
    channel: str
    window: int
    packets_in: int
    packets_out: int

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.packets_in < 0 or self.packets_out < 0:
            raise ValueError("packet counts must be >= 0")


class ChannelClass(str, enum.Enum):
    NORMAL = "normal"
    DOS_LIKE = "dos_like"
    FLOODING_LIKE = "flooding_like"
    INDETERMINATE = "indeterminate"


def comm_behavior_classify(stats: ChannelStats, delta: float = 0.2) -> ChannelClass:
    """Classify a channel by its output/input packet ratio.

    A ratio below ``1 - delta`` means packets are being lost (dos_like), one
    above ``1 + delta`` means extra traffic is being injected (flooding_like).
    A channel without input traffic is ``INDETERMINATE``.
    """
    if stats.packets_in == 0:
        return ChannelClass.INDETERMINATE
    r = stats.packets_out / stats.packets_in
    if r < 1 - delta:
        return ChannelClass.DOS_LIKE
    if r > 1 + delta:
        return ChannelClass.FLOODING_LIKE
    return ChannelClass.NORMAL
