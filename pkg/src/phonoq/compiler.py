"""Logical circuits on stored qubits, compiled into transmon pulse schedules.

Every gate block on a qubit is bracketed by swap-in/swap-out against its
assigned mode; consecutive gates on the same qubit share one bracket. The
compiler keeps a per-qubit frame ledger (swap phases and controlled-phase
by-products) and bakes the resulting reference phases into the emitted
pulses, mirroring how the hardware calibrates pulse phases in context.

Mid-circuit measurements replace the closing swap: the transmon is measured
directly, idles for the readout window, and is then reset by swapping the
projected state into the measured qubit's retired mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .device import DeviceParams
from .gates import (
    SWAP_PHASE,
    cphi_segments,
    hadamard_segments,
    solve_cphi,
    swap_duration,
    wrap_angle,
)
from .schedule import (
    GateSegment,
    idle,
    measure as measure_segment,
    reset_swap,
    resonant_swap,
    rotation,
    virtual_z,
    xy_rotation,
)


class CompilationError(ValueError):
    pass


# ----------------------------------------------------------------------
# logical gates


@dataclass(frozen=True)
class Single:
    qubit: int
    axis: tuple[float, float, float]
    angle: float


@dataclass(frozen=True)
class Hadamard:
    qubit: int


@dataclass(frozen=True)
class ControlledPhase:
    control: int
    target: int
    phi: float


@dataclass(frozen=True)
class Measure:
    qubit: int
    axis: str = "z"


@dataclass(frozen=True)
class Prep:
    """Load one of the states {0, 1, +, i} into a fresh qubit.

    Compiles to a transmon pulse plus the storing swap; the qubit must not
    have been touched before.
    """

    qubit: int
    label: str


@dataclass(frozen=True)
class Oracle:
    tag: str


def single(qubit: int, axis, angle: float) -> Single:
    ax = np.asarray(axis, dtype=float)
    n = np.linalg.norm(ax)
    if n == 0:
        raise CompilationError("zero rotation axis")
    return Single(qubit, tuple(ax / n), float(angle))


def ry(qubit: int, angle: float) -> Single:
    return single(qubit, (0.0, 1.0, 0.0), angle)


def rx(qubit: int, angle: float) -> Single:
    return single(qubit, (1.0, 0.0, 0.0), angle)


@dataclass
class LogicalCircuit:
    n_qubits: int
    gates: list = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, g):
        idx = []
        if isinstance(g, Single):
            idx = [g.qubit]
        elif isinstance(g, Hadamard):
            idx = [g.qubit]
        elif isinstance(g, ControlledPhase):
            idx = [g.control, g.target]
            if g.control == g.target:
                raise CompilationError("controlled phase needs two distinct qubits")
        elif isinstance(g, Measure):
            idx = [g.qubit]
        elif isinstance(g, Prep):
            idx = [g.qubit]
            if g.label not in PREP_PULSES:
                raise CompilationError(f"unknown preparation label {g.label!r}")
        elif isinstance(g, Oracle):
            if g.tag not in PERIODIC_ORACLES:
                raise CompilationError(f"unknown oracle tag {g.tag!r}")
        else:
            raise CompilationError(f"unknown gate {g!r}")
        for q in idx:
            if not 0 <= q < self.n_qubits:
                raise CompilationError(f"qubit index {q} out of range")

    def append(self, gate):
        self._check(gate)
        self.gates.append(gate)
        return self


# measurement pre-rotations mapping an axis onto z (verified against the
# Born rule in the tests)
_PREROTATION = {"x": (np.pi / 2.0, -np.pi / 2.0), "y": (0.0, np.pi / 2.0), "z": None}

# transmon pulses preparing the tomography input alphabet from |0>
PREP_PULSES = {
    "0": None,
    "1": (0.0, np.pi),
    "+": (np.pi / 2.0, np.pi / 2.0),
    "i": (0.0, -np.pi / 2.0),
}


@dataclass(frozen=True)
class HadamardRecord:
    gate_index: int
    qubit: int
    reference: float
    seg_start: int
    seg_end: int


@dataclass
class CompiledSchedule:
    segments: list[GateSegment]
    mode_assignment: dict[int, int]
    frame_phases: dict[int, float]
    measured_qubits: list[int]
    hadamards: list[HadamardRecord]
    swap_count: int

    def mode_labels(self) -> tuple[int, ...]:
        return tuple(self.mode_assignment[q] for q in sorted(self.mode_assignment))


def default_assignment(circuit: LogicalCircuit, device: DeviceParams) -> dict[int, int]:
    labels = sorted(m.label for m in device.modes)
    if circuit.n_qubits > len(labels):
        raise CompilationError(
            f"{circuit.n_qubits} qubits but only {len(labels)} storage modes"
        )
    return {q: labels[q] for q in range(circuit.n_qubits)}


class _Compiler:
    def __init__(self, circuit, device, assignment, fresh, overrides, measure_idle,
                 physical_z, pulse_duration, ramp):
        self.device = device
        self.assignment = assignment
        self.fresh = set(fresh)
        self.overrides = overrides or {}
        self.measure_idle = measure_idle
        self.physical_z = physical_z
        self.dur = device.rotation_duration_s if pulse_duration is None else pulse_duration
        self.ramp_s = device.stark_ramp_s if ramp is None else ramp
        self.alpha = {q: 0.0 for q in range(circuit.n_qubits)}
        self.in_transmon: int | None = None
        self.touched: set[int] = set()
        self.dead: set[int] = set()
        self.segments: list[GateSegment] = []
        self.measured: list[int] = []
        self.hadamards: list[HadamardRecord] = []
        self.swap_count = 0
        self.circuit = circuit

    # -- plumbing ------------------------------------------------------
    def _emit_ramp(self):
        if self.ramp_s > 0:
            self.segments.append(idle(self.ramp_s, label="ramp"))

    def _swap(self, q, kind="swap"):
        mode = self.assignment[q]
        self._emit_ramp()
        self.segments.append(
            resonant_swap(mode, swap_duration(self.device.g_angular), label=kind)
        )
        self._emit_ramp()
        self.alpha[q] += SWAP_PHASE
        self.swap_count += 1

    def _open(self, q):
        if q in self.dead:
            raise CompilationError(f"qubit {q} was already measured")
        if self.in_transmon == q:
            return
        if self.in_transmon is not None:
            self._close(self.in_transmon)
        if q in self.fresh and q not in self.touched:
            pass  # state |0> already sits in the empty transmon
        else:
            self._swap(q, kind="swap-in")
        self.touched.add(q)
        self.in_transmon = q

    def _close(self, q):
        self._swap(q, kind="swap-out")
        self.in_transmon = None

    # -- gates ---------------------------------------------------------
    def _pulse_phase(self, qubit: int, logical_phase: float) -> float:
        # a frame offset alpha advances |1> as e^{-i alpha}; the matching
        # physical pulse axis sits at the logical phase minus alpha
        return logical_phase - self.alpha[qubit]

    def gate_single(self, g: Single):
        self._open(g.qubit)
        ax = np.asarray(g.axis)
        if abs(ax[0]) < 1e-14 and abs(ax[1]) < 1e-14:
            # pure z: frame rotation, ledger-independent
            self.segments.append(virtual_z(np.sign(ax[2]) * g.angle, label="rz"))
            return
        a = -self.alpha[g.qubit]
        c, s = np.cos(a), np.sin(a)
        axis = (ax[0] * c - ax[1] * s, ax[0] * s + ax[1] * c, ax[2])
        self.segments.append(rotation(axis, g.angle, self.dur, label="rot"))

    def gate_hadamard(self, g: Hadamard, gate_index: int):
        self._open(g.qubit)
        ref = self.overrides.get(gate_index, self._pulse_phase(g.qubit, 0.0))
        start = len(self.segments)
        self.segments.extend(hadamard_segments(ref, self.dur))
        self.hadamards.append(
            HadamardRecord(gate_index, g.qubit, wrap_angle(ref), start, len(self.segments))
        )

    def gate_cphi(self, g: ControlledPhase):
        if self.in_transmon == g.control:
            resident, stored = g.control, g.target
        elif self.in_transmon == g.target:
            resident, stored = g.target, g.control
        elif self.in_transmon is None:
            self._open(g.control)
            resident, stored = g.control, g.target
        else:
            raise CompilationError(
                f"controlled phase between stored qubits {g.control},{g.target} "
                f"while the transmon holds qubit {self.in_transmon}"
            )
        if stored in self.dead:
            raise CompilationError(f"qubit {stored} was already measured")
        if stored == self.in_transmon:
            raise CompilationError("controlled phase needs one stored qubit")
        self.touched.add(stored)
        params = solve_cphi(g.phi, self.device.g_angular)
        segs, d_res, d_sto = cphi_segments(
            params,
            self.assignment[stored],
            self.device,
            physical_z=self.physical_z,
            ramp=self.ramp_s > 0,
        )
        self.segments.extend(segs)
        self.alpha[resident] += d_res
        self.alpha[stored] += d_sto

    def gate_prep(self, g: Prep):
        if g.qubit in self.touched:
            raise CompilationError(f"qubit {g.qubit} already in use; cannot prepare")
        self.fresh.add(g.qubit)
        self._open(g.qubit)
        pulse = PREP_PULSES[g.label]
        if pulse is not None:
            phase, angle = pulse
            self.segments.append(
                xy_rotation(self._pulse_phase(g.qubit, phase), angle, self.dur, label="prep")
            )

    def gate_measure(self, g: Measure, more_gates_follow: bool):
        if g.axis not in _PREROTATION:
            raise CompilationError(f"invalid measurement axis {g.axis!r}")
        self._open(g.qubit)
        pre = _PREROTATION[g.axis]
        if pre is not None:
            phase, angle = pre
            self.segments.append(
                xy_rotation(self._pulse_phase(g.qubit, phase), angle, self.dur, label="meas-pre")
            )
        self.segments.append(measure_segment(label=f"meas-q{g.qubit}"))
        self.measured.append(g.qubit)
        if self.measure_idle and self.device.measure_idle_s > 0:
            self.segments.append(idle(self.device.measure_idle_s, label="readout-idle"))
        self.dead.add(g.qubit)
        self.in_transmon = None
        if more_gates_follow:
            mode = self.assignment[g.qubit]
            self._emit_ramp()
            self.segments.append(
                reset_swap(mode, swap_duration(self.device.g_angular), label="reset")
            )
            self._emit_ramp()
            self.swap_count += 1

    # -- driver --------------------------------------------------------
    def run(self) -> CompiledSchedule:
        gates = _expand_oracles(self.circuit).gates
        for i, g in enumerate(gates):
            if isinstance(g, Single):
                self.gate_single(g)
            elif isinstance(g, Hadamard):
                self.gate_hadamard(g, i)
            elif isinstance(g, ControlledPhase):
                self.gate_cphi(g)
            elif isinstance(g, Prep):
                self.gate_prep(g)
            elif isinstance(g, Measure):
                self.gate_measure(g, more_gates_follow=i + 1 < len(gates))
            else:  # pragma: no cover - validated at construction
                raise CompilationError(f"cannot compile {g!r}")
        if self.in_transmon is not None:
            self._close(self.in_transmon)
        return CompiledSchedule(
            segments=self.segments,
            mode_assignment=dict(self.assignment),
            frame_phases={q: wrap_angle(a) for q, a in self.alpha.items()},
            measured_qubits=self.measured,
            hadamards=self.hadamards,
            swap_count=self.swap_count,
        )


def compile_circuit(
    circuit: LogicalCircuit,
    device: DeviceParams,
    assignment: dict[int, int] | None = None,
    *,
    fresh_qubits=(),
    hadamard_overrides: dict[int, float] | None = None,
    measure_idle: bool = True,
    physical_z: bool = True,
    pulse_duration: float | None = None,
    ramp: float | None = None,
) -> CompiledSchedule:
    """Lower a logical circuit to a pulse schedule.

    ``fresh_qubits`` may list qubits known to start in |0>; their first block
    skips the loading swap because the empty transmon already encodes that
    state. ``hadamard_overrides`` maps gate index -> absolute reference phase
    (calibration results); everything else reads the frame ledger.
    """
    if assignment is None:
        assignment = default_assignment(circuit, device)
    else:
        vals = list(assignment.values())
        if len(set(vals)) != len(vals):
            raise CompilationError("mode assignment must be injective")
    return _Compiler(
        circuit, device, assignment, fresh_qubits, hadamard_overrides,
        measure_idle, physical_z, pulse_duration, ramp,
    ).run()


# ----------------------------------------------------------------------
# circuit constructors


def build_qft(n: int) -> LogicalCircuit:
    """Fourier-transform network: Hadamard on the top qubit, then controlled
    phases pi/2, pi/4, ... toward the lower qubits.

    Output bits come out in reversed significance order; no terminal swaps
    are emitted, callers account for the reversal when decoding.
    """
    if n not in (1, 2, 3):
        raise CompilationError("supported register sizes are 1..3")
    circ = LogicalCircuit(n)
    for j in range(n - 1, -1, -1):
        circ.append(Hadamard(j))
        for k in range(j - 1, -1, -1):
            circ.append(ControlledPhase(j, k, np.pi / 2.0 ** (j - k)))
    return circ


def qft_matrix(n: int) -> np.ndarray:
    """Discrete Fourier transform on the register, U[y, x] = e^{2 pi i xy/N}/sqrt(N)."""
    dim = 2**n
    x = np.arange(dim)
    return np.exp(2j * np.pi * np.outer(x, x) / dim) / np.sqrt(dim)


def bit_reversal_permutation(n: int) -> np.ndarray:
    dim = 2**n
    perm = np.zeros((dim, dim))
    for x in range(dim):
        rev = int(format(x, f"0{n}b")[::-1], 2)
        perm[rev, x] = 1.0
    return perm


def qft_target_unitary(n: int) -> np.ndarray:
    """Unitary the compiled network implements: DFT with reversed output bits."""
    return bit_reversal_permutation(n) @ qft_matrix(n)


# r-periodic binary functions implemented by the oracles
PERIODIC_ORACLES = {
    "period-1": None,  # constant zero, no gate
    "period-2": 0,  # CNOT controlled by data qubit 0 (f = x mod 2)
    "period-4": 1,  # CNOT controlled by data qubit 1 (f = second bit)
}


def oracle_truth_table(r: int, n: int = 3) -> np.ndarray:
    if r == 1:
        return np.zeros(2**n, dtype=int)
    if r == 2:
        return np.array([x & 1 for x in range(2**n)])
    if r == 4:
        return np.array([(x >> 1) & 1 for x in range(2**n)])
    raise CompilationError(f"no oracle for period {r}")


def _expand_oracles(circuit: LogicalCircuit) -> LogicalCircuit:
    if not any(isinstance(g, Oracle) for g in circuit.gates):
        return circuit
    out = LogicalCircuit(circuit.n_qubits)
    output_q = circuit.n_qubits - 1
    for g in circuit.gates:
        if not isinstance(g, Oracle):
            out.append(g)
            continue
        control = PERIODIC_ORACLES[g.tag]
        if control is None:
            continue
        out.append(ry(output_q, np.pi / 2.0))
        out.append(ControlledPhase(output_q, control, np.pi))
        out.append(ry(output_q, -np.pi / 2.0))
    return out


def build_qpf(r: int) -> LogicalCircuit:
    """Period-finding circuit: uniform data register, r-periodic oracle onto
    the output qubit, then the Fourier network and z measurements.

    Qubit 3 is the output/ancilla; the oracle leaves it entangled in its
    storage mode while the data register is transformed, which traces it out
    of the interference.
    """
    if r not in (1, 2, 4):
        raise CompilationError(f"unsupported oracle period {r}")
    circ = LogicalCircuit(4)
    for q in range(3):
        circ.append(Prep(q, "+"))
    circ.append(Oracle(f"period-{r}"))
    qft = build_qft(3)
    for g in qft.gates:
        circ.append(g)
    return with_final_measurements(circ, {q: "z" for q in range(3)})


def with_final_measurements(circuit: LogicalCircuit, axes: dict[int, str]) -> LogicalCircuit:
    """Insert a measurement for each listed qubit right after its last gate,
    so measured qubits never swap back out."""
    last: dict[int, int] = {}
    for i, g in enumerate(circuit.gates):
        for q in _touched(g, circuit.n_qubits):
            if q in axes:
                last[q] = i
    missing = [q for q in axes if q not in last]
    if missing:
        raise CompilationError(f"qubits {missing} have no gates to anchor a measurement")
    out = LogicalCircuit(circuit.n_qubits)
    for i, g in enumerate(circuit.gates):
        out.append(g)
        # measure the transmon-resident qubit first when several end here
        enders = [q for q, j in last.items() if j == i]
        enders.sort(key=lambda q: 0 if _resident_after(g, q) else 1)
        for q in enders:
            out.append(Measure(q, axes[q]))
    return out


def _touched(gate, n):
    if isinstance(gate, (Single, Hadamard, Measure, Prep)):
        return (gate.qubit,)
    if isinstance(gate, ControlledPhase):
        return (gate.control, gate.target)
    if isinstance(gate, Oracle):
        return tuple(range(n))
    return ()


def _resident_after(gate, q) -> bool:
    if isinstance(gate, (Single, Hadamard, Prep)):
        return gate.qubit == q
    if isinstance(gate, ControlledPhase):
        return gate.control == q
    return False


# ----------------------------------------------------------------------
# verification helpers


def ideal_logical_unitary(circuit: LogicalCircuit) -> np.ndarray:
    """Exact unitary of the logical gate list (measurements not allowed).

    Basis index x carries qubit q at bit 2^q.
    """
    from .linalg import SIGMA_X, SIGMA_Y, SIGMA_Z, kron_all

    circuit = _expand_oracles(circuit)
    n = circuit.n_qubits
    dim = 2**n
    u = np.eye(dim, dtype=complex)

    def embed_1q(m, q):
        mats = [np.eye(2, dtype=complex)] * n
        mats[n - 1 - q] = m  # bit 2^q sits at tensor slot n-1-q
        return kron_all(*mats)

    for g in circuit.gates:
        if isinstance(g, Single):
            ax = np.asarray(g.axis)
            gen = 0.5 * g.angle * (ax[0] * SIGMA_X + ax[1] * SIGMA_Y + ax[2] * SIGMA_Z)
            evals, vecs = np.linalg.eigh(gen)
            m = (vecs * np.exp(-1j * evals)) @ vecs.conj().T
            u = embed_1q(m, g.qubit) @ u
        elif isinstance(g, Hadamard):
            h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
            u = embed_1q(h, g.qubit) @ u
        elif isinstance(g, ControlledPhase):
            d = np.ones(dim, complex)
            for x in range(dim):
                if (x >> g.control) & 1 and (x >> g.target) & 1:
                    d[x] = np.exp(1j * g.phi)
            u = np.diag(d) @ u
        elif isinstance(g, Measure):
            raise CompilationError("cannot build a unitary for a measured circuit")
    return u


def schedule_unitary(engine, segments) -> np.ndarray:
    """Full-space unitary of a measurement-free schedule under ideal dynamics."""
    from .linalg import embed_operator

    dim = engine.layout.total_dim
    u = np.eye(dim, dtype=complex)
    for seg in segments:
        if seg.kind == "measure":
            raise CompilationError("schedule contains a measurement")
        if seg.kind == "idle":
            continue
        factors = engine._segment_factors(seg)
        if seg.kind == "virtual_z" or (seg.kind == "rotation" and seg.duration == 0.0):
            u_sub = engine._instant_unitary(seg)
        else:
            h = engine._segment_generator(seg, factors)
            evals, vecs = np.linalg.eigh(h)
            u_sub = (vecs * np.exp(-1j * evals * seg.duration)) @ vecs.conj().T
        u = embed_operator(u_sub, engine.layout, factors) @ u
    return u


def computational_indices(layout, factor_of_qubit: dict[int, int]) -> np.ndarray:
    """Flat basis indices of the stored computational subspace.

    Qubit q contributes bit 2^q; the transmon and unlisted modes stay in
    their ground states.
    """
    n = len(factor_of_qubit)
    idx = []
    for x in range(2**n):
        digits = [0] * layout.n_factors
        for q, f in factor_of_qubit.items():
            digits[f] = (x >> q) & 1
        idx.append(layout.basis_index(tuple(digits)))
    return np.array(idx)


def stored_block(u_full: np.ndarray, layout, factor_of_qubit) -> np.ndarray:
    idx = computational_indices(layout, factor_of_qubit)
    return u_full[np.ix_(idx, idx)]
