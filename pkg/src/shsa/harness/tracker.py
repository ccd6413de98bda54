"""Constant-velocity Kalman tracker with nearest-neighbour data association.

State is ``(x, y, v)`` with ``x`` along the road, ``y`` the lane offset and
``v`` the longitudinal speed; measurements observe the full state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..errors import NumericalGuardError

__all__ = [
    "TrackStatus",
    "TrackState",
    "Assignment",
    "transition",
    "process_noise",
    "check_covariance",
    "predict",
    "kf_step",
    "adapt_measurement_covariance",
    "associate_measurements",
    "MultiTracker",
]

_I3 = np.eye(3)


class TrackStatus(str, enum.Enum):
    ACTIVE = "active"
    COASTING = "coasting"
    DROPPED = "dropped"


@dataclass
class TrackState:
    id: str
    vehicle: str | None
    x: np.ndarray
    P: np.ndarray
    last_update: int = 0
    status: TrackStatus = TrackStatus.ACTIVE
    misses: int = 0
    hits: int = 1
    innovation: np.ndarray | None = None
    S: np.ndarray | None = None
    # recent (innovation, innovation covariance) pairs for covariance adaptation
    history: tuple = ()
    r_scale: float = 1.0
    min_eig: float = float("inf")  # smallest covariance eigenvalue seen at an update


@dataclass
class Assignment:
    pairs: dict[str, int] = field(default_factory=dict)  # track id -> measurement index
    unassigned_tracks: list[str] = field(default_factory=list)
    unassigned_measurements: list[int] = field(default_factory=list)


def transition(dt: float) -> np.ndarray:
    return np.array([[1.0, 0.0, dt], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def process_noise(dt: float, q: float) -> np.ndarray:
    """White-acceleration noise on (x, v) plus a random walk on the lane offset."""
    return q * np.array(
        [[dt**3 / 3, 0.0, dt**2 / 2], [0.0, dt, 0.0], [dt**2 / 2, 0.0, dt]]
    )


def check_covariance(P: np.ndarray, what: str = "covariance", tol: float = 1e-9) -> float:
    """Raise ``NumericalGuardError`` unless ``P`` is symmetric PSD; returns its smallest eigenvalue."""
    scale = max(1.0, float(np.max(np.abs(P))))
    if not np.all(np.isfinite(P)):
        raise NumericalGuardError(f"{what} has non-finite entries")
    if np.max(np.abs(P - P.T)) > tol * scale:
        raise NumericalGuardError(f"{what} is not symmetric")
    low = float(np.linalg.eigvalsh(P)[0])
    if low < -tol * scale:
        raise NumericalGuardError(f"{what} is not positive semi-definite")
    return low


def predict(track: TrackState, dt: float, q: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    F = transition(dt)
    return F @ track.x, F @ track.P @ F.T + process_noise(dt, q)


def kf_step(
    track: TrackState,
    z: Sequence[float] | None,
    dt: float,
    R: np.ndarray,
    q: float = 0.0,
    tick: int | None = None,
    coast_after: int = 1,
    window: int = 10,
    check_input: bool = True,
) -> TrackState:
    """Predict by ``dt``; update with ``z`` when given, otherwise coast.

    Raises ``NumericalGuardError`` if the input or the updated covariance is
    not symmetric PSD. ``check_input=False`` skips the input check for
    covariances that already passed it as the output of an earlier step.
    """
    if check_input:
        check_covariance(track.P, f"track {track.id} covariance")
    x, P = predict(track, dt, q)
    if z is None:
        misses = track.misses + 1
        status = TrackStatus.COASTING if misses >= coast_after else track.status
        return replace(track, x=x, P=P, misses=misses, status=status)
    R = np.asarray(R, dtype=float) * track.r_scale
    z = np.asarray(z, dtype=float).reshape(3)
    y = z - x
    S = P + R
    K = np.linalg.solve(S.T, P.T).T  # P S^-1
    x = x + K @ y
    A = _I3 - K
    P = A @ P @ A.T + K @ R @ K.T  # Joseph form
    P = 0.5 * (P + P.T)
    low = check_covariance(P, f"track {track.id} covariance")
    hist = (track.history + ((y, S),))[-window:]
    return replace(
        track,
        x=x,
        P=P,
        last_update=track.last_update if tick is None else tick,
        status=TrackStatus.ACTIVE,
        misses=0,
        hits=track.hits + 1,
        innovation=y,
        S=S,
        history=hist,
        min_eig=min(track.min_eig, low),
    )


def adapt_measurement_covariance(
    track: TrackState,
    innovations: Sequence[tuple[np.ndarray, np.ndarray]] | None,
    R: np.ndarray,
    r_max: float = 10.0,
) -> np.ndarray:
    """Scale ``R`` by observed over expected innovation spread.

    The ratio is the mean normalized innovation squared per dimension, so a
    consistent filter gives 1. It is clamped to ``[1, r_max]``; the scale is
    also stored on the track.
    """
    if innovations is None:
        innovations = track.history
    if not innovations:
        raise ValueError("innovation window is empty")
    nis = [float(y @ np.linalg.solve(S, y)) / len(y) for y, S in innovations]
    scale = float(np.clip(np.mean(nis), 1.0, r_max))
    track.r_scale = scale
    return np.asarray(R, dtype=float) * scale


def associate_measurements(
    tracks: Sequence[TrackState],
    measurements: Sequence[Sequence[float]],
    gate: float,
    positions: Sequence[np.ndarray] | None = None,
) -> Assignment:
    """Greedy nearest neighbour on (x, y) within ``gate``.

    Candidate pairs are taken in order of (distance, track id, measurement
    index), so ties resolve deterministically. ``positions`` overrides the
    track states used for the distance (e.g. predicted states).
    """
    if not gate > 0:
        raise ValueError("gate must be > 0")
    pos = [np.asarray(p)[:2] for p in positions] if positions is not None else [t.x[:2] for t in tracks]
    meas = [np.asarray(m, dtype=float).reshape(-1)[:2] for m in measurements]
    cands = []
    for ti, t in enumerate(tracks):
        for mi, m in enumerate(meas):
            d = float(np.hypot(*(pos[ti] - m)))
            if d <= gate:
                cands.append((d, t.id, mi))
    cands.sort()
    out = Assignment()
    used_t, used_m = set(), set()
    for _, tid, mi in cands:
        if tid in used_t or mi in used_m:
            continue
        out.pairs[tid] = mi
        used_t.add(tid)
        used_m.add(mi)
    out.unassigned_tracks = sorted(t.id for t in tracks if t.id not in used_t)
    out.unassigned_measurements = [k for k in range(len(meas)) if k not in used_m]
    return out


@dataclass
class Measurement:
    label: str  # vehicle id from the topic
    source: str  # radar whose data (or substitute) produced it
    z: np.ndarray
    R: np.ndarray
    substituted: bool = False


class MultiTracker:
    """Track set of one fog node.

    Unassigned measurements spawn new tracks; a track coasts after
    ``coast_after`` missed ticks and is dropped after ``drop_after``.
    """

    def __init__(
        self,
        name: str,
        dt: float,
        gate: float = 5.0,
        q: float = 0.01,
        coast_after: int = 1,
        drop_after: int = 10,
        adaptive: bool = False,
        r_max: float = 10.0,
        window: int = 10,
    ):
        self.name = name
        self.dt = dt
        self.gate = gate
        self.q = q
        self.coast_after = coast_after
        self.drop_after = drop_after
        self.adaptive = adaptive
        self.r_max = r_max
        self.window = window
        self.tracks: dict[str, TrackState] = {}
        self._next = 1
        self.updates: list[tuple[int, str, np.ndarray]] = []  # (tick, track id, innovation)
        self.min_eig = float("inf")

    def step(self, tick: int, measurements: Sequence[Measurement]) -> dict[str, Measurement]:
        """Advance every track one tick; returns track id -> measurement used."""
        order = sorted(self.tracks)
        tracks = [self.tracks[t] for t in order]
        predicted = [predict(t, self.dt, self.q)[0] for t in tracks]
        assign = associate_measurements(tracks, [m.z for m in measurements], self.gate, predicted)
        used = {}
        for t in tracks:
            mi = assign.pairs.get(t.id)
            if mi is None:
                new = kf_step(t, None, self.dt, t.P, self.q, coast_after=self.coast_after, check_input=False)
            else:
                m = measurements[mi]
                new = kf_step(t, m.z, self.dt, m.R, self.q, tick, self.coast_after, self.window, False)
                new.vehicle = m.label
                if self.adaptive and len(new.history) >= self.window:
                    adapt_measurement_covariance(new, None, m.R, self.r_max)
                used[t.id] = m
                self.updates.append((tick, t.id, new.innovation))
            self.min_eig = min(self.min_eig, new.min_eig)
            if new.misses > self.drop_after:
                del self.tracks[t.id]
            else:
                self.tracks[t.id] = new
        for mi in assign.unassigned_measurements:
            m = measurements[mi]
            tid = f"{self.name}#{self._next}"
            self._next += 1
            P = np.array(m.R, dtype=float)
            low = check_covariance(P, f"track {tid} covariance")
            self.min_eig = min(self.min_eig, low)
            self.tracks[tid] = TrackState(tid, m.label, np.array(m.z, dtype=float), P, tick, min_eig=low)
            used[tid] = m
        return used

    def estimate(self, vehicle: str) -> TrackState | None:
        """The track labelled ``vehicle`` with the most updates (ties: older id)."""
        best = None
        for tid in sorted(self.tracks, key=lambda s: int(s.rsplit("#", 1)[1])):
            t = self.tracks[tid]
            if t.vehicle == vehicle and (best is None or t.hits > best.hits):
                best = t
        return best
