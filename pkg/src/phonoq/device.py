"""Device parameters and Hamiltonian/collapse-operator builders.

Configuration files quote frequencies in Hz; everything handed to the
dynamics layer is angular (rad/s). The global rotating frame sits at the
transmon rest-point frequency with the ground state at zero energy, so a
detuned transmon appears as ``delta_q * |e><e|`` and each mode as
``delta_i * a^dag a``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .linalg import (
    SIGMA_MINUS,
    SIGMA_Z,
    SpaceLayout,
    destroy,
    embed_operator,
    number_op,
)

TWO_PI = 2.0 * np.pi


class PhysicalityError(ValueError):
    """Device parameters violate a physical constraint (e.g. T2 > 2 T1)."""


class CalibrationError(ValueError):
    """A calibration routine cannot produce a valid result."""


@dataclass(frozen=True)
class ModeSpec:
    """One phonon mode used as a memory qubit."""

    label: int
    frequency_hz: float
    t1_s: float
    t2_s: float
    truncation: int = 3

    def __post_init__(self):
        if self.truncation < 3:
            raise PhysicalityError("mode truncation must be >= 3 for two-excitation dynamics")
        _check_coherence(self.t1_s, self.t2_s, f"mode {self.label}")


@dataclass(frozen=True)
class DeviceParams:
    """Physical device description; single source of truth for simulations.

    ``rotation_duration_s`` and ``stark_ramp_s`` are model constants for the
    unpublished pulse envelopes: the finite length of a transmon rotation
    pulse and the settling time of a frequency move. Both default to values
    calibrated against the benchmarking data.
    """

    g_hz: float
    rest_frequency_hz: float
    modes: tuple[ModeSpec, ...]
    transmon_t1_s: float
    transmon_t2_s: float
    fsr_hz: float = 12.6e6
    measure_idle_s: float = 7e-6
    rotation_duration_s: float = 0.35e-6
    stark_ramp_s: float = 0.35e-6

    def __post_init__(self):
        if self.g_hz <= 0:
            raise PhysicalityError("coupling must be positive")
        _check_coherence(self.transmon_t1_s, self.transmon_t2_s, "transmon")
        object.__setattr__(self, "modes", tuple(self.modes))
        for m in self.modes:
            if m.frequency_hz <= self.rest_frequency_hz:
                raise PhysicalityError(
                    f"mode {m.label} at {m.frequency_hz} Hz is not above the rest point"
                )

    @property
    def g_angular(self) -> float:
        return TWO_PI * self.g_hz

    def mode(self, label: int) -> ModeSpec:
        for m in self.modes:
            if m.label == label:
                return m
        raise KeyError(f"unknown mode label {label}")

    def mode_detuning_angular(self, label: int) -> float:
        """Mode frequency relative to the rest point, rad/s (positive)."""
        return TWO_PI * (self.mode(label).frequency_hz - self.rest_frequency_hz)

    def layout(self, mode_labels) -> SpaceLayout:
        """Transmon plus the requested modes, in the order given."""
        return SpaceLayout((2,) + tuple(self.mode(l).truncation for l in mode_labels))

    def with_ancilla_mode(self, label: int = 0) -> "DeviceParams":
        """Add a scratch mode one free spectral range above the best mode.

        Used when an algorithm needs an extra storage slot beyond the
        characterized modes; coherence is copied from the longest-lived mode.
        """
        best = max(self.modes, key=lambda m: m.t2_s)
        top = max(m.frequency_hz for m in self.modes)
        anc = ModeSpec(label, top + self.fsr_hz, best.t1_s, best.t2_s, best.truncation)
        return replace(self, modes=self.modes + (anc,))

    def to_dict(self) -> dict:
        return {
            "g_hz": self.g_hz,
            "rest_frequency_hz": self.rest_frequency_hz,
            "fsr_hz": self.fsr_hz,
            "transmon": {"t1_s": self.transmon_t1_s, "t2_s": self.transmon_t2_s},
            "measure_idle_s": self.measure_idle_s,
            "rotation_duration_s": self.rotation_duration_s,
            "stark_ramp_s": self.stark_ramp_s,
            "modes": [
                {
                    "label": m.label,
                    "frequency_hz": m.frequency_hz,
                    "t1_s": m.t1_s,
                    "t2_s": m.t2_s,
                    "truncation": m.truncation,
                }
                for m in self.modes
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceParams":
        return cls(
            g_hz=d["g_hz"],
            rest_frequency_hz=d["rest_frequency_hz"],
            fsr_hz=d.get("fsr_hz", 12.6e6),
            transmon_t1_s=d["transmon"]["t1_s"],
            transmon_t2_s=d["transmon"]["t2_s"],
            measure_idle_s=d.get("measure_idle_s", 7e-6),
            rotation_duration_s=d.get("rotation_duration_s", 0.35e-6),
            stark_ramp_s=d.get("stark_ramp_s", 0.35e-6),
            modes=tuple(
                ModeSpec(
                    label=m["label"],
                    frequency_hz=m["frequency_hz"],
                    t1_s=m["t1_s"],
                    t2_s=m["t2_s"],
                    truncation=m.get("truncation", 3),
                )
                for m in d["modes"]
            ),
        )

    @classmethod
    def from_json(cls, path) -> "DeviceParams":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


def _check_coherence(t1: float, t2: float, name: str) -> None:
    if t1 <= 0 or t2 <= 0:
        raise PhysicalityError(f"{name}: T1 and T2 must be positive")
    if t2 > 2 * t1 * (1 + 1e-12):
        raise PhysicalityError(f"{name}: T2 = {t2} exceeds 2*T1 = {2 * t1}")


def default_device() -> DeviceParams:
    """Bundled parameter set of the characterized device."""
    text = resources.files("phonoq.data").joinpath("default_device.json").read_text()
    return DeviceParams.from_dict(json.loads(text))


@dataclass(frozen=True)
class FrameHamiltonian:
    """Drift Hamiltonian in the rest-point rotating frame (rad/s)."""

    layout: SpaceLayout
    drift: np.ndarray
    detuning_map: dict = field(default_factory=dict)  # mode label -> w_q - w_i


def build_jc_hamiltonian(
    params: DeviceParams,
    active_modes,
    transmon_frequency_hz: float,
) -> FrameHamiltonian:
    """Excitation-exchange drift for the transmon and the active modes.

    The frame rotates at the rest point for every subsystem; the transmon
    detuning enters as a diagonal term so frequency moves never change the
    frame. Couplings are included for the active modes only.
    """
    active = tuple(active_modes)
    if not active:
        raise ValueError("need at least one active mode")
    labels = [m.label for m in params.modes]
    for l in active:
        if l not in labels:
            raise KeyError(f"unknown mode label {l}")
    layout = params.layout(labels)
    g = params.g_angular
    delta_q = TWO_PI * (transmon_frequency_hz - params.rest_frequency_hz)

    h = delta_q * embed_operator(np.diag([0.0, 1.0]).astype(complex), layout, (0,))
    detunings = {}
    for pos, m in enumerate(params.modes, start=1):
        delta_m = TWO_PI * (m.frequency_hz - params.rest_frequency_hz)
        h += delta_m * embed_operator(number_op(m.truncation), layout, (pos,))
        detunings[m.label] = delta_q - delta_m
        if m.label in active:
            a = destroy(m.truncation)
            pair = np.kron(SIGMA_MINUS.conj().T, a) + np.kron(SIGMA_MINUS, a.conj().T)
            h += g * embed_operator(pair, layout, (0, pos))
    return FrameHamiltonian(layout, h, detunings)


def interaction_drift(delta: float, g: float, truncation: int) -> np.ndarray:
    """Transmon-mode pair drift in the mode's frame, ground at zero energy.

    ``delta`` = w_q - w_mode (rad/s). Matrix exponentials of this generator
    reproduce the closed-form interaction unitary exactly.
    """
    layout = SpaceLayout((2, truncation))
    h = delta * embed_operator(np.diag([0.0, 1.0]).astype(complex), layout, (0,))
    a = destroy(truncation)
    h += g * (np.kron(SIGMA_MINUS.conj().T, a) + np.kron(SIGMA_MINUS, a.conj().T))
    return h


def jc_block(n: int, delta: float, g: float) -> np.ndarray:
    """Traceless excitation-block Hamiltonian on (|e, n-1>, |g, n>)."""
    if n < 1:
        raise ValueError("block index must be >= 1")
    return np.array(
        [[delta / 2.0, g * np.sqrt(n)], [g * np.sqrt(n), -delta / 2.0]], dtype=complex
    )


def pure_dephasing_rate(t1_s: float, t2_s: float) -> float:
    """1/T_phi = 1/T2 - 1/(2 T1); zero for a lifetime-limited subsystem."""
    rate = 1.0 / t2_s - 1.0 / (2.0 * t1_s)
    return max(rate, 0.0)


def transmon_collapse_ops(params: DeviceParams) -> list[np.ndarray]:
    """Amplitude damping and pure dephasing on the bare transmon (prescaled)."""
    ops = [np.sqrt(1.0 / params.transmon_t1_s) * SIGMA_MINUS]
    gphi = pure_dephasing_rate(params.transmon_t1_s, params.transmon_t2_s)
    if gphi > 0:
        ops.append(np.sqrt(gphi / 2.0) * SIGMA_Z)
    return ops


def mode_collapse_ops(mode: ModeSpec) -> list[np.ndarray]:
    """Damping and dephasing for one phonon mode (prescaled).

    The dephasing operator is chosen so the 0-1 coherence decays with the
    quoted T2 once the damping contribution is added.
    """
    a = destroy(mode.truncation)
    ops = [np.sqrt(1.0 / mode.t1_s) * a]
    gphi = pure_dephasing_rate(mode.t1_s, mode.t2_s)
    if gphi > 0:
        ops.append(np.sqrt(2.0 * gphi) * number_op(mode.truncation))
    return ops


def collapse_operators(
    params: DeviceParams,
    mode_labels,
    *,
    include_transmon: bool = True,
    include_phonons: bool = True,
) -> list[tuple[np.ndarray, tuple[int, ...]]]:
    """Prescaled collapse operators with the layout factors they act on.

    ``mode_labels`` gives the mode ordering of the layout (factor i + 1
    holds mode_labels[i]). The include flags implement the
    infinite-coherence error-budget cases.
    """
    out = []
    if include_transmon:
        for op in transmon_collapse_ops(params):
            out.append((op, (0,)))
    if include_phonons:
        for pos, label in enumerate(mode_labels, start=1):
            for op in mode_collapse_ops(params.mode(label)):
                out.append((op, (pos,)))
    return out


def dispersive_detuning(measured: float, g: float) -> float:
    """Invert the dressed splitting sqrt(delta^2 + 4 g^2) seen in spectroscopy.

    Returns the bare detuning with the sign of the measured value; below the
    dispersive minimum 2g there is no real solution.
    """
    if abs(measured) < 2.0 * g:
        raise CalibrationError(
            f"measured splitting {measured} below the dispersive minimum {2 * g}"
        )
    return np.sign(measured) * np.sqrt(measured**2 - 4.0 * g**2)
