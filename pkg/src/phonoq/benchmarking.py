"""Randomized benchmarking with the 24-element single-qubit Clifford set in
axis-angle form, for the bare transmon and for phonon-stored qubits.

Stored-qubit sequences insert a swap pair between consecutive gates and
rotate every pulse axis by the frame phase the swaps accumulate, so ideal
sequences return exactly to the ground state.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .analysis import ExpFitResult, exp_fit
from .device import DeviceParams
from .dynamics import ScheduleEngine, SimOptions
from .gates import SWAP_PHASE, swap_segment
from .linalg import SIGMA_X, SIGMA_Y, SIGMA_Z, embed_operator
from .schedule import idle, rotation

PHASE_TOL = 1e-9


@dataclass(frozen=True)
class CliffordGate:
    axis: tuple[float, float, float]
    angle: float
    matrix: np.ndarray


def _axis_angle_unitary(axis, angle) -> np.ndarray:
    ax = np.asarray(axis, dtype=float)
    n = np.linalg.norm(ax)
    if n == 0:
        return np.eye(2, dtype=complex)
    ax = ax / n
    gen = 0.5 * angle * (ax[0] * SIGMA_X + ax[1] * SIGMA_Y + ax[2] * SIGMA_Z)
    evals, vecs = np.linalg.eigh(gen)
    return (vecs * np.exp(-1j * evals)) @ vecs.conj().T


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = PHASE_TOL) -> bool:
    inner = np.trace(a.conj().T @ b)
    if abs(inner) < 1e-12:
        return False
    phase = inner / abs(inner)
    return bool(np.max(np.abs(a * phase - b)) <= tol)


_AXIS_ANGLE_TABLE = (
    [((0.0, 0.0, 1.0), 0.0)]  # identity
    + [((1, 0, 0), np.pi), ((0, 1, 0), np.pi), ((0, 0, 1), np.pi)]
    + [((s, 0, 0), np.pi / 2) for s in (1, -1)]
    + [((0, s, 0), np.pi / 2) for s in (1, -1)]
    + [((0, 0, s), np.pi / 2) for s in (1, -1)]
    + [((s, 0, 1), np.pi) for s in (1, -1)]
    + [((0, s, 1), np.pi) for s in (1, -1)]
    + [((1, s, 0), np.pi) for s in (1, -1)]
    + [((s, 1, 1), 2 * np.pi / 3) for s in (1, -1)]
    + [((s, -1, 1), 2 * np.pi / 3) for s in (1, -1)]
    + [((s, 1, 1), -2 * np.pi / 3) for s in (1, -1)]
    + [((s, -1, 1), -2 * np.pi / 3) for s in (1, -1)]
)


@lru_cache(maxsize=1)
def _make_gates() -> tuple[CliffordGate, ...]:
    gates = []
    for axis, angle in _AXIS_ANGLE_TABLE:
        ax = np.asarray(axis, dtype=float)
        norm = np.linalg.norm(ax)
        ax = ax / norm if norm else ax
        gates.append(CliffordGate(tuple(ax), float(angle), _axis_angle_unitary(ax, angle)))
    if len(gates) != 24:
        raise RuntimeError(f"built {len(gates)} gates, expected 24")
    return tuple(gates)


def clifford_table() -> tuple[CliffordGate, ...]:
    """The 24 gates, axes normalized; group closure is verified on first use."""
    gates = _make_gates()
    _build_group()  # raises if any product leaves the set
    return gates


@lru_cache(maxsize=1)
def _build_group():
    """(multiplication table, inverse table) with products matched up to phase."""
    gates = _make_gates()
    n = len(gates)
    mult = np.full((n, n), -1, dtype=int)
    for i in range(n):
        for j in range(n):
            prod = gates[i].matrix @ gates[j].matrix
            for k in range(n):
                if equal_up_to_phase(prod, gates[k].matrix):
                    mult[i, j] = k
                    break
            if mult[i, j] < 0:
                raise RuntimeError(f"product {i}*{j} left the gate set")
    inv = np.full(n, -1, dtype=int)
    for i in range(n):
        for k in range(n):
            if mult[i, k] == 0:
                inv[i] = k
                break
    return mult, inv


def multiplication_table() -> np.ndarray:
    return _build_group()[0]


def inverse_table() -> np.ndarray:
    return _build_group()[1]


@dataclass(frozen=True)
class RBSequence:
    """n-gate sequence: n-1 uniform draws plus the inverting recovery gate."""

    length: int
    gate_indices: tuple[int, ...]
    recovery_index: int

    def all_indices(self) -> tuple[int, ...]:
        return self.gate_indices + (self.recovery_index,)


def sample_rb_sequence(n: int, seed) -> RBSequence:
    if n < 1:
        raise ValueError("sequence length must be >= 1")
    rng = np.random.default_rng(seed)
    mult, inv = _build_group()
    draws = tuple(int(rng.integers(0, 24)) for _ in range(n - 1))
    running = 0  # identity
    for g in draws:
        running = int(mult[g, running])  # g applied after the running product
    recovery = int(inv[running])
    return RBSequence(n, draws, recovery)


DEFAULT_LENGTHS = (1, 2, 3, 5, 7, 10, 15, 20, 30, 40)
DEFAULT_SEEDS = 30


def _axis_in_frame(axis, alpha):
    # physical pulse axis: logical axis rotated by -alpha about z
    x, y, z = axis
    c, s = np.cos(-alpha), np.sin(-alpha)
    return (x * c - y * s, x * s + y * c, z)


def _sequence_segments(seq: RBSequence, device: DeviceParams, target, gates):
    """Pulse segments of one sequence; ``target`` is None (transmon) or a
    mode label. Stored variant: gate, then a swap pair, except after the
    recovery gate which is measured directly."""
    dur = device.rotation_duration_s
    ramp = device.stark_ramp_s
    segs = []
    alpha = 0.0
    indices = seq.all_indices()
    for pos, gi in enumerate(indices):
        g = gates[gi]
        if g.angle != 0.0:
            segs.append(rotation(_axis_in_frame(g.axis, alpha), g.angle, dur))
        if target is not None and pos + 1 < len(indices):
            for _ in range(2):  # store and reload
                if ramp > 0:
                    segs.append(idle(ramp))
                segs.append(swap_segment(target, device.g_angular))
                if ramp > 0:
                    segs.append(idle(ramp))
                alpha += SWAP_PHASE
    return segs


@dataclass
class RBResult:
    target: int | None
    lengths: np.ndarray
    survival: np.ndarray
    stderr: np.ndarray
    fit: ExpFitResult
    average_fidelity: float


def fit_rb(lengths, survival) -> tuple[ExpFitResult, float]:
    """Fit P(n) = A p^n + c; average gate fidelity is (p + 1) / 2."""
    res = exp_fit(lengths, survival)
    return res, (res.base + 1.0) / 2.0


def run_rb(
    device: DeviceParams,
    target: int | None,
    *,
    lengths=DEFAULT_LENGTHS,
    n_seeds: int = DEFAULT_SEEDS,
    decoherence: bool = True,
    seed: int = 2024,
) -> RBResult:
    """Ground-state survival versus sequence length, averaged over seeds.

    ``target`` is a mode label for stored-qubit benchmarking or None for the
    bare transmon.
    """
    gates = clifford_table()
    opts = SimOptions(decoherence="full" if decoherence else "none")
    engine = ScheduleEngine(device, () if target is None else (target,), opts)
    layout = engine.layout
    ground = embed_operator(np.diag([1.0, 0.0]).astype(complex), layout, (0,))

    means, errs = [], []
    for li, n in enumerate(lengths):
        vals = []
        for s in range(n_seeds):
            seq = sample_rb_sequence(n, np.random.SeedSequence((seed, li, s)))
            segs = _sequence_segments(seq, device, target, gates)
            rho = engine.run(segs).final_state
            vals.append(float(np.real(np.trace(ground @ rho))))
        vals = np.asarray(vals)
        means.append(vals.mean())
        errs.append(vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0)

    lengths = np.asarray(lengths, dtype=float)
    survival = np.asarray(means)
    if decoherence:
        fit, favg = fit_rb(lengths, survival)
    else:
        fit, favg = ExpFitResult(0.0, 1.0, 1.0, 0.0), 1.0
    return RBResult(target, lengths, survival, np.asarray(errs), fit, favg)


def swap_infidelity(transmon_rb: RBResult, phonon_rbs) -> float:
    """Per-swap infidelity from the per-gate gap between stored-qubit and
    bare-transmon benchmarking, halved for the two swaps per gate."""
    gaps = [transmon_rb.average_fidelity - rb.average_fidelity for rb in phonon_rbs]
    return float(np.mean(gaps) / 2.0)
