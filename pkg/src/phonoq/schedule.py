"""Timed pulse segments: the contract between the compiler and the dynamics.

All phases are referenced to each subsystem's own rotating frame (the
transmon follows the target mode during interactions), so idle segments are
pure decay and carry no deterministic phase. Rotation axes live in the
equatorial plane at ``phase`` radians from x unless an explicit 3-vector is
given.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

KINDS = (
    "resonant_swap",
    "offres_interaction",
    "rotation",
    "virtual_z",
    "idle",
    "detuned_idle",
    "measure",
    "reset_swap",
)


@dataclass(frozen=True)
class GateSegment:
    """One piecewise-constant slice of the pulse schedule.

    Fields not used by a given kind stay at their defaults. ``target_mode``
    is a device mode label (interactions, reset) or None (transmon-only).
    """

    kind: str
    duration: float = 0.0
    target_mode: int | None = None
    detuning: float = 0.0  # rad/s, transmon minus mode, interaction kinds
    axis: tuple[float, float, float] | None = None  # rotations
    angle: float = 0.0  # rotations / virtual_z
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.duration < 0:
            raise ValueError("segment duration must be >= 0")
        if self.axis is not None:
            object.__setattr__(self, "axis", tuple(float(a) for a in self.axis))


def rotation(axis, angle: float, duration: float = 0.0, label: str = "") -> GateSegment:
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm == 0:
        raise ValueError("rotation axis must be nonzero")
    return GateSegment(
        "rotation", duration=duration, axis=tuple(axis / norm), angle=float(angle), label=label
    )


def xy_rotation(phase: float, angle: float, duration: float = 0.0, label: str = "") -> GateSegment:
    """Rotation about the equatorial axis at ``phase`` radians from x."""
    return rotation((np.cos(phase), np.sin(phase), 0.0), angle, duration, label)


def virtual_z(angle: float, label: str = "") -> GateSegment:
    """Instantaneous frame rotation, diag(1, e^{-i angle}) on the transmon."""
    return GateSegment("virtual_z", angle=float(angle), label=label)


def idle(duration: float, label: str = "") -> GateSegment:
    return GateSegment("idle", duration=duration, label=label)


def detuned_idle(mode: int, detuning: float, duration: float, label: str = "") -> GateSegment:
    """Free precession of one mode at ``detuning`` rad/s (rest-frame view)."""
    return GateSegment(
        "detuned_idle", duration=duration, target_mode=mode, detuning=detuning, label=label
    )


def resonant_swap(mode: int, duration: float, label: str = "") -> GateSegment:
    return GateSegment("resonant_swap", duration=duration, target_mode=mode, label=label)


def offres_interaction(
    mode: int, detuning: float, duration: float, label: str = ""
) -> GateSegment:
    return GateSegment(
        "offres_interaction",
        duration=duration,
        target_mode=mode,
        detuning=detuning,
        label=label,
    )


def measure(label: str = "") -> GateSegment:
    """Projective z measurement of the transmon."""
    return GateSegment("measure", label=label)


def reset_swap(mode: int, duration: float, label: str = "") -> GateSegment:
    return GateSegment("reset_swap", duration=duration, target_mode=mode, label=label)


def schedule_to_json(segments, path=None) -> str:
    payload = {"version": 1, "segments": [asdict(s) for s in segments]}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as f:
            f.write(text + "\n")
    return text


def schedule_from_json(source) -> list[GateSegment]:
    if isinstance(source, str) and source.lstrip().startswith("{"):
        payload = json.loads(source)
    else:
        with open(source) as f:
            payload = json.load(f)
    out = []
    for d in payload["segments"]:
        axis = d.pop("axis")
        seg = GateSegment(axis=tuple(axis) if axis is not None else None, **d)
        out.append(seg)
    return out


def total_duration(segments) -> float:
    return float(sum(s.duration for s in segments))
