"""Experiment pipelines: controlled-phase process tomography and repetition
fits, Fourier-transform tomography with the error-budget cases, period
finding with classification, and the calibration sweeps.

State preparation and measurement can each be real (pulses, swaps, readout
idles) or ideal (states injected directly, instantaneous projective
readout); the decoherence flags drop the corresponding collapse channels.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .compiler import (
    CompiledSchedule,
    ControlledPhase,
    Hadamard,
    LogicalCircuit,
    Measure,
    Oracle,
    Prep,
    build_qft,
    build_qpf,
    compile_circuit,
    computational_indices,
    oracle_truth_table,
    qft_target_unitary,
    with_final_measurements,
)
from .device import DeviceParams
from .dynamics import ScheduleEngine, SimOptions
from .gates import (
    cnot_sequence,
    cphi_segments,
    solve_cphi,
    swap_segment,
    wrap_angle,
)
from .linalg import SpaceLayout, kron_all
from .schedule import idle, measure as measure_segment, xy_rotation
from .tomography import (
    MisassignmentModel,
    ProcessEstimate,
    apply_misassignment,
    axis_settings,
    correct_misassignment,
    estimate_process,
    measurement_probabilities,
    sample_distribution,
    state_tomography,
    tomography_input_states,
)

ERROR_BUDGET_CASES = {
    # case -> (real_prep, real_measure, decoherence mode)
    "ideal": (False, False, "none"),
    "no-spam": (False, False, "full"),
    "prep-only": (True, False, "full"),
    "measure-only": (False, True, "full"),
    "full-spam": (True, True, "full"),
    "infinite-phonon": (True, True, "no-phonon"),
    "infinite-qubit": (True, True, "no-qubit"),
}


def _resolve_case(case) -> tuple[bool, bool, str]:
    return ERROR_BUDGET_CASES[case] if isinstance(case, str) else tuple(case)

_QUBIT_STATES = {
    "0": np.array([[1.0, 0.0], [0.0, 0.0]], complex),
    "1": np.array([[0.0, 0.0], [0.0, 1.0]], complex),
    "+": np.array([[0.5, 0.5], [0.5, 0.5]], complex),
    "i": np.array([[0.5, -0.5j], [0.5j, 0.5]], complex),
}


def stored_product_state(layout: SpaceLayout, factor_states: dict) -> np.ndarray:
    """Full-space density matrix with the listed factors in qubit states and
    everything else in the ground state."""
    mats = []
    for f, dim in enumerate(layout.factors):
        m = np.zeros((dim, dim), complex)
        if f in factor_states:
            m[:2, :2] = _QUBIT_STATES[factor_states[f]]
        else:
            m[0, 0] = 1.0
        mats.append(m)
    return kron_all(*mats)


def _distribution_from_branches(result, measured_qubits, qubit_order) -> np.ndarray:
    """Joint outcome array indexed by qubit, from measurement-order tuples."""
    n = len(qubit_order)
    pos = {q: measured_qubits.index(q) for q in qubit_order}
    p = np.zeros((2,) * n)
    for outcomes, w in result.joint_distribution().items():
        idx = tuple(outcomes[pos[q]] for q in qubit_order)
        p[idx] += w
    return p


def _maybe_shots(p, shots, rng, misassignment):
    if misassignment is not None:
        p = apply_misassignment(p, misassignment)
    if shots is not None:
        p = sample_distribution(p, shots, rng)
    if misassignment is not None:
        p = correct_misassignment(p, misassignment)
    return p


# ----------------------------------------------------------------------
# controlled-phase tomography


@dataclass
class PairTomographyResult:
    phi: float
    n_reps: int
    estimate: ProcessEstimate
    case: object


def _cphi_block(device, phi, mode, n_reps, physical_z=True):
    params = solve_cphi(phi, device.g_angular)
    segs = []
    d_t = d_m = 0.0
    for _ in range(n_reps):
        s, a, b = cphi_segments(params, mode, device, physical_z=physical_z)
        segs.extend(s)
        d_t += a
        d_m += b
    return segs, d_t, d_m


def cphi_target(phi: float, n_reps: int) -> np.ndarray:
    """Bare controlled-phase target; local by-product phases are left to the
    compensation stage."""
    return np.diag([1.0, 1.0, 1.0, np.exp(1j * phi * n_reps)]).astype(complex)


def run_cphi_tomography(
    device: DeviceParams,
    phi: float,
    mode: int = 1,
    *,
    n_reps: int = 1,
    case: str = "full-spam",
    shots: int | None = None,
    seed: int = 7,
    misassignment: MisassignmentModel | None = None,
) -> PairTomographyResult:
    """Two-qubit process tomography of repeated controlled-phase gates
    between the transmon (qubit 1) and a stored mode (qubit 0)."""
    real_prep, real_measure, dec = _resolve_case(case)
    engine = ScheduleEngine(device, (mode,), SimOptions(decoherence=dec))
    layout = engine.layout
    rng = np.random.default_rng(seed)
    gate_segs, d_t, d_m = _cphi_block(device, phi, mode, n_reps)
    dur = device.rotation_duration_s
    ramp = device.stark_ramp_s

    outputs = {}
    for labels in tomography_input_states(2):
        l_mode, l_transmon = labels
        setting_probs = {}
        prep_segs = []
        alpha_m = 0.0
        if real_prep:
            pulse = PREP_SINGLE_PULSES.get(l_mode)
            if pulse is not None:
                prep_segs.append(xy_rotation(pulse[0], pulse[1], dur, label="prep-m"))
            if ramp > 0:
                prep_segs.append(idle(ramp))
            prep_segs.append(swap_segment(mode, device.g_angular, label="prep-store"))
            if ramp > 0:
                prep_segs.append(idle(ramp))
            alpha_m += np.pi / 2.0
            pulse = PREP_SINGLE_PULSES.get(l_transmon)
            if pulse is not None:
                prep_segs.append(xy_rotation(pulse[0], pulse[1], dur, label="prep-t"))
            rho0 = engine.ground_state()
        else:
            rho0 = stored_product_state(layout, {0: l_transmon, 1: l_mode})

        alpha_t = d_t
        alpha_m += d_m

        for axes in axis_settings(2):
            a_mode, a_transmon = axes
            segs = list(prep_segs) + list(gate_segs)
            if real_measure:
                pre = _AXIS_PREROT[a_transmon]
                if pre is not None:
                    segs.append(xy_rotation(pre[0] - alpha_t, pre[1], dur))
                segs.append(measure_segment())
                if device.measure_idle_s > 0:
                    segs.append(idle(device.measure_idle_s, label="readout-idle"))
                if ramp > 0:
                    segs.append(idle(ramp))
                segs.append(swap_segment(mode, device.g_angular, label="readout-swap"))
                if ramp > 0:
                    segs.append(idle(ramp))
                am = alpha_m + np.pi / 2.0
                pre = _AXIS_PREROT[a_mode]
                if pre is not None:
                    segs.append(xy_rotation(pre[0] - am, pre[1], dur))
                segs.append(measure_segment())
                res = engine.run(segs, rho0)
                p = _distribution_from_branches(res, [1, 0], [0, 1])
            else:
                res = engine.run(segs, rho0)
                rho = res.mixture()
                # undo the frame offsets by measuring along rotated axes
                p = _ledger_adjusted_probabilities(
                    rho, layout, {0: 1, 1: 0}, axes, {0: alpha_m, 1: alpha_t}
                )
            setting_probs[axes] = _maybe_shots(p, shots, rng, misassignment)
        outputs[labels] = state_tomography(setting_probs, 2)

    est = estimate_process(outputs, cphi_target(phi, n_reps), 2)
    return PairTomographyResult(phi, n_reps, est, case)


_AXIS_PREROT = {"x": (np.pi / 2.0, -np.pi / 2.0), "y": (0.0, np.pi / 2.0), "z": None}

PREP_SINGLE_PULSES = {
    "0": None,
    "1": (0.0, np.pi),
    "+": (np.pi / 2.0, np.pi / 2.0),
    "i": (0.0, -np.pi / 2.0),
}


def _ledger_adjusted_probabilities(rho, layout, qubit_factors, axes, alphas):
    """Ideal measurement along each qubit's logical axes: the frame offset
    rotates the equatorial measurement axes the same way it rotates pulses."""
    from .linalg import SIGMA_X, SIGMA_Y, SIGMA_Z, embed_operator

    out = np.zeros((2,) * len(qubit_factors))
    paulis = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}
    for outcome in itertools.product((0, 1), repeat=len(qubit_factors)):
        op = np.eye(layout.total_dim, dtype=complex)
        for q, f in qubit_factors.items():
            dim = layout.factors[f]
            a = alphas.get(q, 0.0)
            ax = axes[q]
            if ax == "z":
                sig = paulis["z"]
            else:
                base = 0.0 if ax == "x" else np.pi / 2.0
                phase = base - a
                sig = np.cos(phase) * paulis["x"] + np.sin(phase) * paulis["y"]
            proj2 = (np.eye(2) + (1 - 2 * outcome[q]) * sig) / 2.0
            proj = np.zeros((dim, dim), complex)
            proj[:2, :2] = proj2
            op = op @ embed_operator(proj, layout, (f,))
        out[outcome] = max(float(np.real(np.trace(op @ rho))), 0.0)
    return out


@dataclass
class RepetitionFitResult:
    reps: np.ndarray
    fidelities: np.ndarray
    gate_fidelity: float
    amplitude: float
    offset: float
    gate_fidelity_err: float


def cphi_repetition_experiment(
    device: DeviceParams,
    phi: float,
    mode: int = 1,
    *,
    reps=tuple(range(0, 20)),
    case: str = "full-spam",
    seed: int = 7,
) -> RepetitionFitResult:
    """Process fidelity versus gate repetitions, fit to A * F^N + B to
    separate the per-gate fidelity from preparation and readout errors."""
    fids = []
    for n in reps:
        est = run_cphi_tomography(device, phi, mode, n_reps=n, case=case, seed=seed)
        fids.append(est.estimate.fidelity)
    fit = analysis.exp_fit(np.asarray(reps, float), np.asarray(fids))
    return RepetitionFitResult(
        np.asarray(reps, float),
        np.asarray(fids),
        fit.base,
        fit.amplitude,
        fit.offset,
        fit.base_err,
    )


def cphi_infidelity_curve(device: DeviceParams, phis, mode: int = 1) -> np.ndarray:
    """No-SPAM controlled-phase infidelities over a grid of target phases."""
    out = []
    for phi in phis:
        est = run_cphi_tomography(device, phi, mode, n_reps=1, case="no-spam")
        out.append(1.0 - est.estimate.fidelity)
    return np.asarray(out)


# ----------------------------------------------------------------------
# Fourier-transform tomography


@dataclass
class QftTomographyResult:
    n: int
    case: object
    fidelity: float
    estimate: ProcessEstimate
    hadamard_phases: dict[int, float] = field(default_factory=dict)


def _qft_circuit(n, input_labels, axes, real_prep) -> LogicalCircuit:
    circ = LogicalCircuit(n)
    if real_prep:
        for q in range(n):
            circ.append(Prep(q, input_labels[q]))
    for g in build_qft(n).gates:
        circ.append(g)
    return with_final_measurements(circ, {q: axes[q] for q in range(n)})


def run_qft_tomography(
    device: DeviceParams,
    n: int = 3,
    case: str = "no-spam",
    *,
    calibrate_hadamards: bool | None = None,
    shots: int | None = None,
    seed: int = 11,
    misassignment: MisassignmentModel | None = None,
) -> QftTomographyResult:
    """Process tomography of the compiled Fourier network under one of the
    error-budget cases."""
    real_prep, real_measure, dec = _resolve_case(case)
    engine = ScheduleEngine(device, tuple(range(1, n + 1)), SimOptions(decoherence=dec))
    layout = engine.layout
    rng = np.random.default_rng(seed)
    assignment = {q: q + 1 for q in range(n)}

    if calibrate_hadamards is None:
        calibrate_hadamards = dec != "none"
    overrides = (
        calibrate_hadamard_phases(
            device, n=n, decoherence=dec, measure_idle=real_measure, engine=engine
        )
        if calibrate_hadamards
        else {}
    )

    outputs = {}
    for labels in tomography_input_states(n):
        setting_probs = {}
        rho0 = (
            None
            if real_prep
            else stored_product_state(layout, {q + 1: labels[q] for q in range(n)})
        )
        for axes in axis_settings(n):
            circ = _qft_circuit(n, labels, axes, real_prep)
            compiled = compile_circuit(
                circ,
                device,
                assignment,
                fresh_qubits=set(range(n)) if real_prep else (),
                hadamard_overrides=overrides,
                measure_idle=real_measure,
            )
            res = engine.run(compiled.segments, rho0)
            p = _distribution_from_branches(
                res, compiled.measured_qubits, list(range(n))
            )
            setting_probs[axes] = _maybe_shots(p, shots, rng, misassignment)
        outputs[labels] = state_tomography(setting_probs, n)

    est = estimate_process(outputs, qft_target_unitary(n), n)
    return QftTomographyResult(n, case, est.fidelity, est, overrides)


def error_budget(device: DeviceParams, n: int = 3, cases=None, **kw) -> dict[str, float]:
    """Simulated process fidelities for the standard error-budget cases."""
    cases = cases or ["no-spam", "prep-only", "measure-only", "full-spam",
                      "infinite-phonon", "infinite-qubit"]
    return {c: run_qft_tomography(device, n, c, **kw).fidelity for c in cases}


def calibrate_hadamard_phases(
    device: DeviceParams,
    *,
    n: int = 3,
    decoherence: str = "none",
    measure_idle: bool = True,
    n_points: int = 73,
    engine: ScheduleEngine | None = None,
) -> dict[int, float]:
    """Sequentially sweep each Hadamard's reference phase on the all-plus
    input and keep the argmin of the transmon excited population at the
    checkpoint right after the gate."""
    if engine is None:
        engine = ScheduleEngine(
            device, tuple(range(1, n + 1)), SimOptions(decoherence=decoherence)
        )
    layout = engine.layout
    assignment = {q: q + 1 for q in range(n)}
    rho0 = stored_product_state(layout, {q + 1: "+" for q in range(n)})
    from .linalg import embed_operator

    excited = embed_operator(np.diag([0.0, 1.0]).astype(complex), layout, (0,))

    circ = _qft_circuit(n, tuple("+" for _ in range(n)), tuple("z" for _ in range(n)), False)
    base = compile_circuit(circ, device, assignment, measure_idle=measure_idle)
    overrides: dict[int, float] = {}
    for rec in base.hadamards:
        grid = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
        pops = np.empty_like(grid)
        for k, c in enumerate(grid):
            trial = dict(overrides)
            trial[rec.gate_index] = c
            compiled = compile_circuit(
                circ, device, assignment, hadamard_overrides=trial, measure_idle=measure_idle
            )
            stop = next(
                r.seg_end for r in compiled.hadamards if r.gate_index == rec.gate_index
            )
            res = engine.run(compiled.segments[:stop], rho0)
            pops[k] = float(np.real(np.trace(excited @ res.mixture())))
        best = int(np.argmin(pops))
        step = grid[1] - grid[0]
        ym, y0, yp = pops[best - 1], pops[best], pops[(best + 1) % n_points]
        denom = ym - 2.0 * y0 + yp
        shift = 0.0 if abs(denom) < 1e-15 else 0.5 * (ym - yp) / denom
        overrides[rec.gate_index] = wrap_angle(grid[best] + shift * step)
    return overrides


# ----------------------------------------------------------------------
# period finding


@dataclass
class QpfResult:
    r_true: int
    populations: np.ndarray
    classification: analysis.PeakClassification | None
    period: int | None


def run_qpf(
    device: DeviceParams,
    r: int,
    *,
    decoherence: str = "full",
    shots: int | None = None,
    seed: int = 3,
    classify: bool = True,
) -> QpfResult:
    """Run the period-finding circuit and classify the output populations.

    The output register decodes with reversed bit significance: the qubit
    measured last carries the most significant bit.
    """
    dev = device.with_ancilla_mode(0)
    circ = build_qpf(r)
    assignment = {0: 1, 1: 2, 2: 3, 3: 0}
    compiled = compile_circuit(
        circ, dev, assignment, fresh_qubits={0, 1, 2, 3},
        measure_idle=decoherence != "none",
    )
    engine = ScheduleEngine(dev, (1, 2, 3, 0), SimOptions(decoherence=decoherence))
    res = engine.run(compiled.segments)
    rng = np.random.default_rng(seed)

    pos = {q: compiled.measured_qubits.index(q) for q in range(3)}
    pops = np.zeros(8)
    for outcomes, w in res.joint_distribution().items():
        y = 4 * outcomes[pos[0]] + 2 * outcomes[pos[1]] + outcomes[pos[2]]
        pops[y] += w
    if shots is not None:
        pops = sample_distribution(pops, shots, rng).reshape(-1)

    if not classify:
        return QpfResult(r, pops, None, None)
    cls = analysis.classify_and_extract_period(pops)
    return QpfResult(r, pops, cls, cls.period)


def qpf_expected_distribution(r: int) -> np.ndarray:
    return analysis.qpf_theoretical_distribution(oracle_truth_table(r))


# ----------------------------------------------------------------------
# CNOT pulse-phase calibration


def cnot_phase_sweep(device: DeviceParams, control_mode: int = 1, offsets=None):
    """Transmon ground population after the CNOT block on the all-ground
    state, versus the trim phase of the closing pulse."""
    offsets = np.linspace(-np.pi, np.pi, 61) if offsets is None else np.asarray(offsets)
    engine = ScheduleEngine(device, (control_mode,), SimOptions(decoherence="none"))
    from .linalg import embed_operator

    ground = embed_operator(np.diag([1.0, 0.0]).astype(complex), engine.layout, (0,))
    pops = np.empty_like(offsets)
    for k, off in enumerate(offsets):
        segs, _ = cnot_sequence(device, control_mode, second_pulse_offset=float(off))
        rho = engine.run(segs).final_state
        pops[k] = float(np.real(np.trace(ground @ rho)))
    return offsets, pops


# ----------------------------------------------------------------------
# randomized benchmarking wrapper


@dataclass
class RBExperimentResult:
    transmon_fidelity: float
    mode_fidelities: dict[int, float]
    per_swap_infidelity: float
    curves: dict


def run_rb_experiment(device: DeviceParams, *, lengths=None, n_seeds=None, seed=2024):
    from . import benchmarking as rb

    kw = {}
    if lengths is not None:
        kw["lengths"] = lengths
    if n_seeds is not None:
        kw["n_seeds"] = n_seeds
    transmon = rb.run_rb(device, None, seed=seed, **kw)
    modes = {m.label: rb.run_rb(device, m.label, seed=seed, **kw) for m in device.modes}
    per_swap = rb.swap_infidelity(transmon, list(modes.values()))
    return RBExperimentResult(
        transmon.average_fidelity,
        {l: r.average_fidelity for l, r in modes.items()},
        per_swap,
        {"transmon": transmon, **{f"mode{l}": r for l, r in modes.items()}},
    )
