"""Rule-based detection of seven sports gestures from joint trajectories.

Gesture classes and the joints each involves:

    Sprinting      Hip, Knee, Ankle
    Jumping        Hip, Knee, Ankle       (reports jump height)
    OneHandWave    Hand, Wrist, Elbow, Shoulder
    TwoHandsWave   Hand, Wrist, Elbow, Shoulder
    Throwing       Shoulder, Elbow, Wrist
    Heading        Head, Shoulder
    Kicking        Hip, Knee, Ankle

Signals are normalized by skeleton height (HipCenter-Spine-ShoulderCenter-Head
chain length at the first frame) and expressed relative to HipCenter, so every
threshold in :class:`DetectorConfig` is a ratio of that height (or heights per
second) and detection is invariant to translation and uniform scale. The body
forward direction is taken from the first frame's shoulder line.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .errors import TooShort
from .skeleton import JOINT_INDEX as J
from .skeleton import Frame

GESTURE_CLASSES = (
    "Sprinting",
    "Jumping",
    "OneHandWave",
    "TwoHandsWave",
    "Throwing",
    "Heading",
    "Kicking",
)

_LEGS = ("Hip", "Knee", "Ankle")
_ARM4 = ("Hand", "Wrist", "Elbow", "Shoulder")
_ARM3 = ("Shoulder", "Elbow", "Wrist")


def event_joints(cls: str, side: str) -> list[str]:
    """Joint list for a gesture class on a side (Left/Right/Both/NA)."""
    if cls == "Heading":
        return ["Head", "ShoulderCenter"]
    parts = {"Sprinting": _LEGS, "Jumping": _LEGS, "Kicking": _LEGS,
             "OneHandWave": _ARM4, "TwoHandsWave": _ARM4, "Throwing": _ARM3}[cls]
    sides = ("Left", "Right") if side == "Both" else (side,)
    return [p + s for s in sides for p in parts]


@dataclass
class GestureEvent:
    cls: str
    start_t: float
    end_t: float
    side: str = "NA"
    joints: list[str] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.cls not in GESTURE_CLASSES:
            raise ValueError(f"unknown gesture class {self.cls!r}")
        if not self.joints:
            self.joints = event_joints(self.cls, self.side)

    def overlaps(self, other: "GestureEvent") -> bool:
        return self.start_t <= other.end_t and other.start_t <= self.end_t


@dataclass(frozen=True)
class DetectorConfig:
    window_s: float = 1.0
    wave_min_reversals: int = 2
    jump_min_rise_ratio: float = 0.08
    speed_peak_ratio: float = 1.5
    sprint_min_speed_ratio: float = 0.6
    heading_min_forward_ratio: float = 0.05
    # lateral wrist travel that counts as one wave stroke
    wave_min_travel_ratio: float = 0.05
    # how far behind / in front of the shoulder the wrist must be for a throw
    plane_margin_ratio: float = 0.05
    knee_min_oscillation_ratio: float = 0.02
    # sprint knees must correlate at or below minus this value
    knee_antiphase_ratio: float = 0.3
    kick_min_extension_deg: float = 20.0
    support_tolerance_ratio: float = 0.05

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not v > 0:
                raise ValueError(f"{f.name} must be positive, got {v}")
            if f.name.endswith("_ratio") and not v < 10:
                raise ValueError(f"{f.name} must be below 10, got {v}")


@dataclass
class NormalizedSignals:
    t: np.ndarray          # (m,) uniform sample times
    dt: float
    rel: np.ndarray        # (m, 20, 3) positions minus HipCenter, in skeleton heights
    hip: np.ndarray        # (m, 3) HipCenter world track, meters
    height: float          # meters
    forward: np.ndarray    # unit, horizontal, body facing direction
    lateral: np.ndarray    # unit, horizontal, toward the performer's left


def normalize_trajectories(frames: Sequence[Frame]) -> NormalizedSignals:
    if len(frames) < 2:
        raise TooShort(len(frames))
    t_raw = np.array([f.t for f in frames])
    pos = np.stack([f.positions for f in frames])
    first = pos[0]
    height = sum(
        float(np.linalg.norm(first[J[b]] - first[J[a]]))
        for a, b in (("HipCenter", "Spine"), ("Spine", "ShoulderCenter"), ("ShoulderCenter", "Head"))
    )

    dt = float(np.median(np.diff(t_raw)))
    m = int(np.floor((t_raw[-1] - t_raw[0]) / dt + 1e-9)) + 1
    t = t_raw[0] + dt * np.arange(m)
    flat = pos.reshape(len(frames), -1)
    res = np.column_stack([np.interp(t, t_raw, flat[:, k]) for k in range(flat.shape[1])])
    res = res.reshape(m, -1, 3)

    hip = res[:, J["HipCenter"]].copy()
    rel = (res - hip[:, None, :]) / height

    up = np.array([0.0, 1.0, 0.0])
    lateral = first[J["ShoulderLeft"]] - first[J["ShoulderRight"]]
    lateral[1] = 0.0
    lateral /= np.linalg.norm(lateral)
    forward = np.cross(up, lateral)
    return NormalizedSignals(t, dt, rel, hip, height, forward, lateral)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive index ranges of consecutive True values."""
    padded = np.concatenate(([False], mask, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.nonzero(edges == 1)[0]
    ends = np.nonzero(edges == -1)[0] - 1
    return list(zip(starts.tolist(), ends.tolist()))


def _expand(signal: np.ndarray, i0: int, i1: int, level: float) -> tuple[int, int]:
    """Grow a run outward while ``signal`` stays above ``level``."""
    while i0 > 0 and signal[i0 - 1] > level:
        i0 -= 1
    while i1 < len(signal) - 1 and signal[i1 + 1] > level:
        i1 += 1
    return i0, i1


def _span(sig: NormalizedSignals, i0: int, i1: int) -> tuple[float, float]:
    if i0 == i1:
        i0, i1 = max(i0 - 1, 0), min(i1 + 1, len(sig.t) - 1)
    return float(sig.t[i0]), float(sig.t[i1])


def _speed(track: np.ndarray, dt: float) -> np.ndarray:
    return np.linalg.norm(np.gradient(track, dt, axis=0), axis=1)


def _hip_horizontal_speed(sig: NormalizedSignals) -> np.ndarray:
    v = np.gradient(sig.hip / sig.height, sig.dt, axis=0)
    return np.hypot(v[:, 0], v[:, 2])


def _reversal_indices(x: np.ndarray, min_travel: float) -> list[int]:
    """Turning points of ``x`` with hysteresis: a turn counts once travel back reaches ``min_travel``."""
    out: list[int] = []
    direction = 0
    pivot = extreme = x[0]
    extreme_i = 0
    for i in range(1, len(x)):
        v = x[i]
        if direction == 0:
            if abs(v - pivot) >= min_travel:
                direction = 1 if v > pivot else -1
                extreme, extreme_i = v, i
        elif (v - extreme) * direction > 0:
            extreme, extreme_i = v, i
        elif (extreme - v) * direction >= min_travel:
            out.append(extreme_i)
            direction = -direction
            extreme, extreme_i = v, i
    return out


def _detect_sprint(sig: NormalizedSignals, cfg: DetectorConfig) -> list[GestureEvent]:
    speed = _hip_horizontal_speed(sig)
    events = []
    for i0, i1 in _runs(speed >= cfg.sprint_min_speed_ratio):
        if sig.t[i1] - sig.t[i0] < cfg.window_s:
            continue
        kl = sig.rel[i0:i1 + 1, J["KneeLeft"], 1]
        kr = sig.rel[i0:i1 + 1, J["KneeRight"], 1]
        if min(kl.std(), kr.std()) < cfg.knee_min_oscillation_ratio:
            continue
        if np.corrcoef(kl, kr)[0, 1] > -cfg.knee_antiphase_ratio:
            continue
        start, end = _span(sig, i0, i1)
        events.append(GestureEvent("Sprinting", start, end, "Both",
                                   metrics={"mean_speed_mps": float(speed[i0:i1 + 1].mean() * sig.height)}))
    return events


def _detect_jump(sig: NormalizedSignals, cfg: DetectorConfig) -> list[GestureEvent]:
    rise = sig.hip[:, 1] - np.median(sig.hip[:, 1])
    level = cfg.jump_min_rise_ratio * sig.height
    events = []
    for i0, i1 in _runs(rise >= level):
        if i1 == len(rise) - 1:
            continue  # never came back down
        peak = float(rise[i0:i1 + 1].max())
        i0, i1 = _expand(rise, i0, i1, 0.5 * level)
        start, end = _span(sig, i0, i1)
        events.append(GestureEvent("Jumping", start, end, "Both", metrics={"jump_height_m": peak}))
    return events


def _wave_runs(sig: NormalizedSignals, cfg: DetectorConfig, side: str) -> list[tuple[int, int]]:
    wrist = sig.rel[:, J["Wrist" + side]]
    elbow = sig.rel[:, J["Elbow" + side]]
    lateral = wrist @ sig.lateral
    found = []
    for i0, i1 in _runs(wrist[:, 1] > elbow[:, 1]):
        turns = sig.t[i0 + np.array(_reversal_indices(lateral[i0:i1 + 1], cfg.wave_min_travel_ratio), dtype=int)]
        n = cfg.wave_min_reversals
        if len(turns) >= n and np.any(turns[n - 1:] - turns[:len(turns) - n + 1] <= cfg.window_s):
            found.append((i0, i1))
    return found


def _detect_waves(sig: NormalizedSignals, cfg: DetectorConfig) -> list[GestureEvent]:
    left = _wave_runs(sig, cfg, "Left")
    right = _wave_runs(sig, cfg, "Right")
    used_l: set[int] = set()
    used_r: set[int] = set()
    events = []
    for a, (l0, l1) in enumerate(left):
        for b, (r0, r1) in enumerate(right):
            if l0 <= r1 and r0 <= l1:
                used_l.add(a)
                used_r.add(b)
                start, end = _span(sig, min(l0, r0), max(l1, r1))
                events.append(GestureEvent("TwoHandsWave", start, end, "Both"))
    for side, runs, used in (("Left", left, used_l), ("Right", right, used_r)):
        for k, (i0, i1) in enumerate(runs):
            if k not in used:
                start, end = _span(sig, i0, i1)
                events.append(GestureEvent("OneHandWave", start, end, side))
    return events


def _detect_throw(sig: NormalizedSignals, cfg: DetectorConfig) -> list[GestureEvent]:
    events = []
    margin = cfg.plane_margin_ratio
    for side in ("Left", "Right"):
        wrist = sig.rel[:, J["Wrist" + side]]
        ahead = (wrist - sig.rel[:, J["Shoulder" + side]]) @ sig.forward
        speed = _speed(wrist, sig.dt)
        for i0, i1 in _runs(speed >= cfg.speed_peak_ratio):
            seg = ahead[i0:i1 + 1]
            behind = np.nonzero(seg <= -margin)[0]
            if behind.size == 0 or not np.any(seg[behind[0]:] >= margin):
                continue
            start, end = _span(sig, i0, i1)
            events.append(GestureEvent("Throwing", start, end, side,
                                       metrics={"peak_wrist_speed_mps": float(speed[i0:i1 + 1].max() * sig.height)}))
    return events


def _detect_heading(sig: NormalizedSignals, cfg: DetectorConfig) -> list[GestureEvent]:
    head = sig.rel[:, J["Head"]] @ sig.forward
    shoulders = sig.rel[:, J["ShoulderCenter"]] @ sig.forward
    exc = head - np.median(head)
    drift = np.abs(shoulders - np.median(shoulders))
    level = cfg.heading_min_forward_ratio
    events = []
    for i0, i1 in _runs(exc >= level):
        if i1 == len(exc) - 1:
            continue
        peak = float(exc[i0:i1 + 1].max())
        i0, i1 = _expand(exc, i0, i1, 0.5 * level)
        if drift[i0:i1 + 1].max() > 0.5 * peak:
            continue
        start, end = _span(sig, i0, i1)
        events.append(GestureEvent("Heading", start, end, "NA",
                                   metrics={"head_excursion_m": peak * sig.height}))
    return events


def _knee_flexion_deg(sig: NormalizedSignals, side: str) -> np.ndarray:
    thigh = sig.rel[:, J["Knee" + side]] - sig.rel[:, J["Hip" + side]]
    shank = sig.rel[:, J["Ankle" + side]] - sig.rel[:, J["Knee" + side]]
    cos = np.einsum("ij,ij->i", thigh, shank) / (
        np.linalg.norm(thigh, axis=1) * np.linalg.norm(shank, axis=1)
    )
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def _detect_kick(sig: NormalizedSignals, cfg: DetectorConfig) -> list[GestureEvent]:
    hip_speed = _hip_horizontal_speed(sig)
    hip_height = sig.hip[:, 1] / sig.height
    events = []
    for side, other in (("Left", "Right"), ("Right", "Left")):
        speed = _speed(sig.rel[:, J["Ankle" + side]], sig.dt)
        flex = _knee_flexion_deg(sig, side)
        support = hip_height + sig.rel[:, J["Ankle" + other], 1]
        support = np.abs(support - np.median(support))
        for i0, i1 in _runs(speed >= cfg.speed_peak_ratio):
            peak = i0 + int(np.argmax(speed[i0:i1 + 1]))
            if hip_speed[peak] >= cfg.sprint_min_speed_ratio:
                continue  # running stride, not a standing kick
            if flex[i0] - flex[i1] < cfg.kick_min_extension_deg:
                continue
            if support[i0:i1 + 1].max() > cfg.support_tolerance_ratio:
                continue
            start, end = _span(sig, i0, i1)
            events.append(GestureEvent("Kicking", start, end, side,
                                       metrics={"peak_ankle_speed_mps": float(speed[peak] * sig.height)}))
    return events


def _merge_overlaps(events: list[GestureEvent]) -> list[GestureEvent]:
    """Same-class events that overlap in time collapse into one spanning both."""
    merged: list[GestureEvent] = []
    for ev in sorted(events, key=lambda e: (e.cls, e.start_t, e.end_t)):
        last = merged[-1] if merged else None
        if last is not None and last.cls == ev.cls and last.overlaps(ev):
            side = last.side if last.side == ev.side else "Both"
            metrics = {k: max(last.metrics.get(k, v), v) for k, v in ev.metrics.items()}
            merged[-1] = GestureEvent(last.cls, last.start_t, max(last.end_t, ev.end_t), side,
                                      metrics={**last.metrics, **metrics})
        else:
            merged.append(ev)
    return merged


def detect(frames: Sequence[Frame], config: DetectorConfig = DetectorConfig()) -> list[GestureEvent]:
    """All gesture events in a clip, sorted by start time."""
    sig = normalize_trajectories(frames)
    events: list[GestureEvent] = []
    for rule in (_detect_sprint, _detect_jump, _detect_waves, _detect_throw, _detect_heading, _detect_kick):
        events.extend(rule(sig, config))
    events = _merge_overlaps(events)
    return sorted(events, key=lambda e: (e.start_t, GESTURE_CLASSES.index(e.cls), e.side))
