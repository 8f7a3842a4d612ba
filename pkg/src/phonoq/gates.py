"""Closed-form controlled-phase synthesis, primitive gate segments, and the
calibration sweeps that pin gate parameters in context.

Conventions: a stored qubit's frame offset ``alpha`` means the simulated
amplitudes equal ``diag(1, e^{-i alpha})`` times the logical ones; applying a
logical equatorial rotation therefore requires the physical pulse axis at
``logical phase + alpha``. Every swap adds pi/2 to the transferred qubit;
a controlled-phase block adds ``-phi1`` to the transmon-resident qubit and
``-phi2`` to the stored one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .device import CalibrationError, DeviceParams
from .dynamics import ScheduleEngine, SimOptions
from .linalg import SpaceLayout, ket, projector
from .schedule import (
    GateSegment,
    idle,
    detuned_idle,
    offres_interaction,
    resonant_swap,
    rotation,
    virtual_z,
    xy_rotation,
)

SWAP_PHASE = np.pi / 2.0  # frame offset a transferred qubit picks up per swap


def wrap_angle(a: float) -> float:
    """Map an angle to [0, 2*pi)."""
    return float(np.mod(a, 2.0 * np.pi))


class GateDomainError(ValueError):
    """Requested gate parameters have no solution."""


@dataclass(frozen=True)
class CPhiParams:
    """Solved parameters of a controlled-phase gate.

    ``phi1`` and ``phi2`` are the single-qubit phases the sequence imprints
    on the transmon-resident and stored qubit; downstream pulses absorb them
    through the frame ledger.
    """

    phi: float
    delta: float  # rad/s
    t_int: float  # s
    theta: float  # rad, mid-sequence z rotation
    phi1: float
    phi2: float


def solve_cphi(phi: float, g: float) -> CPhiParams:
    """Detuning, interaction time and z-phase for a target controlled phase.

    ``g`` is the angular coupling. Valid for phi in (-2*pi, 0) or (0, 2*pi);
    the detuning diverges as phi -> 0 and the sign of the detuning is always
    opposite to the sign of phi.
    """
    if not (0.0 < abs(phi) < 2.0 * np.pi):
        raise GateDomainError(f"target phase {phi} outside (-2*pi, 0) u (0, 2*pi)")
    u = phi / (2.0 * np.pi) - np.sign(phi)
    delta = np.sign(u) * 2.0 * np.sqrt(2.0) * g * abs(u) / np.sqrt(1.0 - u * u)
    omega2 = np.sqrt(delta**2 + 8.0 * g**2)
    t_int = 2.0 * np.pi / omega2
    omega1 = np.sqrt(delta**2 + 4.0 * g**2)
    half = omega1 * t_int / 2.0
    x1 = np.cos(half) - 1j * (delta / omega1) * np.sin(half)
    theta = wrap_angle(np.pi + 2.0 * np.angle(x1))
    phi1 = wrap_angle(np.pi - delta * t_int)
    phi2 = wrap_angle(np.pi - delta * t_int - theta)
    return CPhiParams(phi, float(delta), float(t_int), theta, phi1, phi2)


def cphi_ideal_unitary(params: CPhiParams) -> np.ndarray:
    """Computational-block target, basis (g0, g1, e0, e1), transmon-major."""
    p1, p2, phi = params.phi1, params.phi2, params.phi
    return np.diag(
        [1.0, np.exp(1j * p2), np.exp(1j * p1), np.exp(1j * (p1 + p2 + phi))]
    ).astype(complex)


def swap_duration(g: float) -> float:
    """Full population exchange time of the resonant interaction."""
    return np.pi / (2.0 * g)


def swap_segment(mode: int, g: float, label: str = "swap") -> GateSegment:
    return resonant_swap(mode, swap_duration(g), label=label)


def rotation_segment(axis, angle: float, duration: float = 0.0, label: str = "") -> GateSegment:
    return rotation(axis, angle, duration, label)


def hadamard_segments(
    reference_phase: float = 0.0, duration: float = 0.0
) -> list[GateSegment]:
    """Hadamard as a pi pulse followed by a -pi/2 pulse a quarter turn later.

    ``reference_phase`` orients both pulses; sweeping it is how the gate is
    calibrated in context.
    """
    return [
        xy_rotation(reference_phase, np.pi, duration, label="had-pi"),
        xy_rotation(reference_phase + np.pi / 2.0, -np.pi / 2.0, duration, label="had-pi2"),
    ]


def z_rotation_segments(
    theta: float, *, physical: bool, duration: float = 0.0, reference_phase: float = 0.0
) -> list[GateSegment]:
    """diag(1, e^{-i theta}) either as a bare frame z or as two pi pulses."""
    if not physical:
        return [virtual_z(theta, label="z")]
    return [
        xy_rotation(reference_phase + theta / 2.0, np.pi, duration, label="z-pi-a"),
        xy_rotation(reference_phase, np.pi, duration, label="z-pi-b"),
    ]


def cphi_segments(
    params: CPhiParams,
    mode: int,
    device: DeviceParams,
    *,
    physical_z: bool = True,
    ramp: bool = True,
) -> tuple[list[GateSegment], float, float]:
    """Pulse segments of one controlled-phase block plus its ledger deltas.

    Returns (segments, d_alpha_transmon, d_alpha_mode): the frame offsets the
    block adds to the transmon-resident and the stored qubit.
    """
    z_dur = device.rotation_duration_s if physical_z else 0.0
    segs: list[GateSegment] = []
    if ramp and device.stark_ramp_s > 0:
        segs.append(idle(device.stark_ramp_s, label="ramp"))
    segs.append(offres_interaction(mode, params.delta, params.t_int, label="cphi-a"))
    segs.extend(
        z_rotation_segments(params.theta, physical=physical_z, duration=z_dur)
    )
    segs.append(offres_interaction(mode, params.delta, params.t_int, label="cphi-b"))
    if ramp and device.stark_ramp_s > 0:
        segs.append(idle(device.stark_ramp_s, label="ramp"))
    return segs, -params.phi1, -params.phi2


def cnot_sequence(
    device: DeviceParams,
    control_mode: int,
    *,
    second_pulse_offset: float = 0.0,
    physical_z: bool = True,
    pulse_duration: float | None = None,
    transmon_alpha: float = 0.0,
) -> tuple[list[GateSegment], float]:
    """CNOT with the transmon as target and a stored mode as control.

    Built from pi/2 rotations around a controlled-pi block; the second
    pulse's phase tracks the frame offset the block leaves on the transmon,
    with ``second_pulse_offset`` as the experimental trim. Returns the
    segments and the ledger delta for the control qubit.
    """
    dur = device.rotation_duration_s if pulse_duration is None else pulse_duration
    cp = solve_cphi(np.pi, device.g_angular)
    mid, d_t, d_m = cphi_segments(cp, control_mode, device, physical_z=physical_z)
    alpha = transmon_alpha
    segs = [xy_rotation(np.pi / 2.0 - alpha, np.pi / 2.0, dur, label="cnot-pre")]
    segs.extend(mid)
    alpha += d_t
    segs.append(
        xy_rotation(
            np.pi / 2.0 - alpha + second_pulse_offset, -np.pi / 2.0, dur, label="cnot-post"
        )
    )
    return segs, d_m


def calibrate_theta(
    device: DeviceParams,
    mode: int,
    phi: float,
    *,
    decoherence: bool = False,
    n_points: int = 721,
) -> float:
    """Sweep the mid-sequence z phase and return the argmax of the excited
    population for the transmon-excited initial state.

    A quadratic refinement around the best grid point gets the ideal result
    within 1e-3 rad of the closed form.
    """
    params = solve_cphi(phi, device.g_angular)
    opts = SimOptions(decoherence="full" if decoherence else "none")
    engine = ScheduleEngine(device, (mode,), opts)
    layout = engine.layout
    rho0 = projector(ket(layout, (1, 0)))
    pe_op = np.zeros((layout.total_dim,) * 2, complex)
    for f in range(layout.factors[1]):
        i = layout.basis_index((1, f))
        pe_op[i, i] = 1.0

    thetas = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    pops = np.empty_like(thetas)
    for k, th in enumerate(thetas):
        segs = [
            offres_interaction(mode, params.delta, params.t_int),
            virtual_z(th),
            offres_interaction(mode, params.delta, params.t_int),
        ]
        rho = engine.run(segs, rho0).final_state
        pops[k] = np.real(np.trace(pe_op @ rho))
    best = int(np.argmax(pops))
    # quadratic peak interpolation on the periodic grid
    step = thetas[1] - thetas[0]
    ym, y0, yp = pops[best - 1], pops[best], pops[(best + 1) % n_points]
    denom = ym - 2.0 * y0 + yp
    shift = 0.0 if abs(denom) < 1e-15 else 0.5 * (ym - yp) / denom
    return wrap_angle(thetas[best] + shift * step)


def theta_sweep_curve(device: DeviceParams, mode: int, phi: float, thetas) -> np.ndarray:
    """Excited-state population vs mid-sequence z phase (for export)."""
    params = solve_cphi(phi, device.g_angular)
    engine = ScheduleEngine(device, (mode,), SimOptions(decoherence="none"))
    layout = engine.layout
    rho0 = projector(ket(layout, (1, 0)))
    out = np.empty(len(thetas))
    for k, th in enumerate(thetas):
        segs = [
            offres_interaction(mode, params.delta, params.t_int),
            virtual_z(th),
            offres_interaction(mode, params.delta, params.t_int),
        ]
        rho = engine.run(segs, rho0).final_state
        out[k] = sum(
            np.real(rho[layout.basis_index((1, f)), layout.basis_index((1, f))])
            for f in range(layout.factors[1])
        )
    return out


def ramsey_phonon_frequency(
    device: DeviceParams,
    mode: int,
    wait_times,
    *,
    detuning_hz: float | None = None,
) -> float:
    """Recover a mode's frequency offset from the rest point by interference.

    pi/2 - swap - wait - swap - pi/2, transmon population vs wait time; the
    fit frequency equals the mode detuning. ``detuning_hz`` overrides the
    device value (test hook for degenerate configurations).
    """
    wait_times = np.asarray(wait_times, dtype=float)
    f_true = (
        device.mode_detuning_angular(mode) / (2.0 * np.pi)
        if detuning_hz is None
        else detuning_hz
    )
    engine = ScheduleEngine(device, (mode,), SimOptions(decoherence="none"))
    layout = engine.layout
    g = device.g_angular
    pe_op = np.zeros((layout.total_dim,) * 2, complex)
    for f in range(layout.factors[1]):
        i = layout.basis_index((1, f))
        pe_op[i, i] = 1.0

    pops = np.empty_like(wait_times)
    for k, t in enumerate(wait_times):
        segs = [
            xy_rotation(np.pi / 2.0, np.pi / 2.0, label="ramsey-a"),
            swap_segment(mode, g),
            detuned_idle(mode, 2.0 * np.pi * f_true, t),
            swap_segment(mode, g),
            xy_rotation(np.pi / 2.0, np.pi / 2.0, label="ramsey-b"),
        ]
        rho = engine.run(segs).final_state
        pops[k] = np.real(np.trace(pe_op @ rho))

    if np.ptp(pops) < 1e-6:
        raise CalibrationError("flat signal: no population oscillation to fit")

    # FFT seed, then refine
    dt = np.median(np.diff(np.sort(wait_times)))
    spec = np.abs(np.fft.rfft(pops - pops.mean()))
    freqs = np.fft.rfftfreq(len(pops), d=dt)
    f0 = freqs[int(np.argmax(spec[1:])) + 1] if len(spec) > 1 else 0.0

    def model(t, a, f, ph, c):
        return a * np.cos(2.0 * np.pi * f * t + ph) + c

    try:
        popt, _ = curve_fit(
            model,
            wait_times,
            pops,
            p0=[0.5 * np.ptp(pops), f0, 0.0, pops.mean()],
            maxfev=20000,
        )
    except RuntimeError as exc:
        raise CalibrationError(f"frequency fit did not converge: {exc}") from exc
    return float(abs(popt[1]))
