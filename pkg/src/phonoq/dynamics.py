"""Time evolution: closed-form interaction unitaries, piecewise-constant
unitary and Lindblad propagation, projective measurement, and the schedule
execution engine.

The engine works in per-subsystem rotating frames: interaction segments use
the pair generator ``delta |e><e| + g (sigma+ a + sigma- a^dag)`` whose
matrix exponential equals the closed-form unitary, idles are pure decay.
Measurements fork the evolution into outcome branches so joint outcome
statistics of mid-circuit readout stay faithful.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .device import DeviceParams, collapse_operators, interaction_drift
from .linalg import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    SpaceLayout,
    apply_local_superop,
    embed_operator,
    is_hermitian,
    number_op,
)
from .schedule import GateSegment

STEP_GUARD_FRACTION = 0.01


class StepSizeError(ValueError):
    """Integration step too coarse for the fastest frequency present."""


@dataclass(frozen=True)
class AnalyticBlockUnitary:
    """Closed-form 2x2 propagator of one excitation block (|e,n-1>, |g,n>)."""

    n: int
    delta: float
    g: float
    t: float
    entries: np.ndarray

    @property
    def block_frequency(self) -> float:
        return np.sqrt(self.delta**2 + 4.0 * self.g**2 * self.n)


def analytic_block(n: int, delta: float, g: float, t: float) -> AnalyticBlockUnitary:
    """Off-resonant interaction block, including the global phase prefactor.

    The prefactor places the uncoupled ground state at zero energy, so the
    assembled full-space unitary has a phase-free |g,0> entry.
    """
    if n < 1:
        raise ValueError("block index must be >= 1")
    if t < 0:
        raise ValueError("negative duration")
    wn = np.sqrt(delta**2 + 4.0 * g**2 * n)
    c, s = np.cos(wn * t / 2.0), np.sin(wn * t / 2.0)
    x = c - 1j * (delta / wn) * s
    y = -2j * (g * np.sqrt(n) / wn) * s
    u = np.exp(-1j * delta * t / 2.0) * np.array([[x, y], [y, np.conj(x)]])
    return AnalyticBlockUnitary(n, delta, g, t, u)


def assemble_offres_unitary(delta: float, g: float, t: float, truncation: int) -> np.ndarray:
    """Full transmon-mode pair unitary of an off-resonant interaction.

    Basis ordering is transmon-major: index = transmon * truncation + fock.
    The top transmon-excited state has no partner inside the truncated space
    and only accumulates its diagonal phase.
    """
    if truncation < 2:
        raise ValueError("truncation too small to host an interaction block")
    d = 2 * truncation
    u = np.zeros((d, d), complex)
    u[0, 0] = 1.0
    for n in range(1, truncation):
        blk = analytic_block(n, delta, g, t).entries
        ie, ig = truncation + n - 1, n
        u[ie, ie] = blk[0, 0]
        u[ie, ig] = blk[0, 1]
        u[ig, ie] = blk[1, 0]
        u[ig, ig] = blk[1, 1]
    u[d - 1, d - 1] = np.exp(-1j * delta * t)
    return u


@dataclass
class PropagationResult:
    final_state: np.ndarray
    times: np.ndarray | None = None
    records: dict = field(default_factory=dict)


def _expectations(rho, record_ops):
    return {k: np.real(np.trace(op @ rho)) for k, op in record_ops.items()}


def evolve_unitary(segments, rho0, *, record_ops=None, dt=None) -> PropagationResult:
    """Propagate rho through piecewise-constant Hermitian generators.

    ``segments`` is a list of (H, duration) with H in rad/s. Each segment is
    integrated exactly through its eigendecomposition; ``dt`` only controls
    how densely expectation values are sampled.
    """
    rho = np.array(rho0, dtype=complex)
    times = [0.0]
    records = {k: [v] for k, v in _expectations(rho, record_ops or {}).items()}
    t_now = 0.0
    for h, duration in segments:
        if not is_hermitian(h, tol=1e-9):
            raise ValueError("non-Hermitian generator")
        evals, vecs = np.linalg.eigh(h)

        def u_of(tau):
            return (vecs * np.exp(-1j * evals * tau)) @ vecs.conj().T

        if record_ops and dt:
            n_steps = max(1, int(np.ceil(duration / dt)))
            step = duration / n_steps
            u_step = u_of(step)
            for _ in range(n_steps):
                rho = u_step @ rho @ u_step.conj().T
                t_now += step
                times.append(t_now)
                for k, v in _expectations(rho, record_ops).items():
                    records[k].append(v)
        else:
            u = u_of(duration)
            rho = u @ rho @ u.conj().T
            t_now += duration
            times.append(t_now)
            for k, v in _expectations(rho, record_ops or {}).items():
                records[k].append(v)
    return PropagationResult(rho, np.array(times), {k: np.array(v) for k, v in records.items()})


def lindblad_rhs(h: np.ndarray, rho: np.ndarray, cops) -> np.ndarray:
    out = -1j * (h @ rho - rho @ h)
    for c in cops:
        cd = c.conj().T
        cdc = cd @ c
        out += c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)
    return out


def _spectral_spread(h: np.ndarray) -> float:
    evals = np.linalg.eigvalsh(h)
    return float(evals[-1] - evals[0])


def evolve_lindblad(
    segments,
    collapse_ops,
    rho0,
    dt: float,
    *,
    record_ops=None,
    enforce_guard: bool = True,
) -> PropagationResult:
    """Fixed-step RK4 integration of the master equation.

    ``segments`` is a list of (H, duration); ``collapse_ops`` are prescaled
    full-space operators. The step guard rejects dt coarser than 1% of the
    fastest coherent period in any segment.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rho = np.array(rho0, dtype=complex)
    times = [0.0]
    records = {k: [v] for k, v in _expectations(rho, record_ops or {}).items()}
    t_now = 0.0
    for h, duration in segments:
        if not is_hermitian(h, tol=1e-9):
            raise ValueError("non-Hermitian generator")
        spread = _spectral_spread(h)
        if enforce_guard and spread > 0 and dt > STEP_GUARD_FRACTION * 2.0 * np.pi / spread:
            raise StepSizeError(
                f"dt = {dt} exceeds {STEP_GUARD_FRACTION} of the fastest period "
                f"{2 * np.pi / spread}"
            )
        n_steps = max(1, int(np.ceil(duration / dt)))
        step = duration / n_steps
        for _ in range(n_steps):
            k1 = lindblad_rhs(h, rho, collapse_ops)
            k2 = lindblad_rhs(h, rho + 0.5 * step * k1, collapse_ops)
            k3 = lindblad_rhs(h, rho + 0.5 * step * k2, collapse_ops)
            k4 = lindblad_rhs(h, rho + step * k3, collapse_ops)
            rho = rho + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t_now += step
            if record_ops:
                times.append(t_now)
                for k, v in _expectations(rho, record_ops).items():
                    records[k].append(v)
        if not record_ops:
            times.append(t_now)
    return PropagationResult(rho, np.array(times), {k: np.array(v) for k, v in records.items()})


def lindblad_generator(h: np.ndarray, cops) -> np.ndarray:
    """Column-stacking superoperator generator of the master equation."""
    d = h.shape[0]
    eye = np.eye(d)
    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for c in cops:
        cdc = c.conj().T @ c
        gen += np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
    return gen


def segment_superoperator(h: np.ndarray, cops, t: float) -> np.ndarray:
    """Exact channel of a constant-generator segment, expm of the Lindbladian."""
    return expm(lindblad_generator(h, cops) * t)


_AXES = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


def projective_measure(rho: np.ndarray, layout: SpaceLayout, subsystem: int, axis: str):
    """Projective measurement of a two-level subsystem along x, y or z.

    Returns (probabilities, post_states) for outcomes 0 (+1 eigenvalue) and
    1 (-1 eigenvalue); post states are renormalized, or None at zero weight.
    """
    if axis not in _AXES:
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    if layout.factors[subsystem] != 2:
        raise ValueError("measured subsystem must be two-level")
    sig = _AXES[axis]
    probs, posts = [], []
    for sign in (+1.0, -1.0):
        proj = embed_operator((np.eye(2) + sign * sig) / 2.0, layout, (subsystem,))
        p = float(np.real(np.trace(proj @ rho)))
        p = min(max(p, 0.0), 1.0)
        probs.append(p)
        posts.append((proj @ rho @ proj) / p if p > 1e-14 else None)
    return tuple(probs), tuple(posts)


@dataclass
class Branch:
    """One measurement-outcome branch of a schedule run."""

    weight: float
    state: np.ndarray
    outcomes: tuple[int, ...] = ()


@dataclass
class ScheduleResult:
    layout: SpaceLayout
    branches: list[Branch]

    def joint_distribution(self) -> dict[tuple[int, ...], float]:
        out: dict[tuple[int, ...], float] = {}
        for b in self.branches:
            out[b.outcomes] = out.get(b.outcomes, 0.0) + b.weight
        return out

    def mixture(self) -> np.ndarray:
        """Outcome-averaged state."""
        return sum(b.weight * b.state for b in self.branches)

    @property
    def final_state(self) -> np.ndarray:
        if len(self.branches) != 1:
            raise ValueError("schedule has measurement branches; use mixture()")
        return self.branches[0].state


@dataclass(frozen=True)
class SimOptions:
    """Execution options for the schedule engine.

    decoherence: "none", "full", "no-phonon" (infinite phonon coherence) or
    "no-qubit" (infinite transmon coherence).
    backend: "superop" (exact per-segment channels) or "rk4".
    """

    decoherence: str = "full"
    backend: str = "superop"
    rk4_dt: float = 4e-9

    def __post_init__(self):
        if self.decoherence not in ("none", "full", "no-phonon", "no-qubit"):
            raise ValueError(f"unknown decoherence mode {self.decoherence!r}")
        if self.backend not in ("superop", "rk4"):
            raise ValueError(f"unknown backend {self.backend!r}")


class ScheduleEngine:
    """Executes pulse schedules on a fixed transmon-plus-modes layout.

    Per-segment channels are cached, so sweeps and tomography settings that
    share segments cost one matrix exponential each.
    """

    def __init__(self, device: DeviceParams, mode_labels, options: SimOptions | None = None):
        self.device = device
        self.mode_labels = tuple(mode_labels)
        self.options = options or SimOptions()
        self.layout = device.layout(self.mode_labels)
        self.factor_of = {label: i + 1 for i, label in enumerate(self.mode_labels)}
        self._cache: dict = {}
        dec = self.options.decoherence
        self._cops = (
            []
            if dec == "none"
            else collapse_operators(
                device,
                self.mode_labels,
                include_transmon=dec != "no-qubit",
                include_phonons=dec != "no-phonon",
            )
        )

    # ------------------------------------------------------------------
    def ground_state(self) -> np.ndarray:
        rho = np.zeros((self.layout.total_dim,) * 2, complex)
        rho[0, 0] = 1.0
        return rho

    def _factor_cops(self, factors):
        """Prescaled collapse operators living on the given factor subset."""
        sub = SpaceLayout(tuple(self.layout.factors[f] for f in factors))
        out = []
        for op, (f,) in self._cops:
            if f in factors:
                out.append(embed_operator(op, sub, (factors.index(f),)))
        return out

    def _segment_generator(self, seg: GateSegment, factors):
        """Hermitian generator of a segment on its factor subset, rad/s."""
        g = self.device.g_angular
        if seg.kind in ("resonant_swap", "reset_swap"):
            trunc = self.layout.factors[factors[1]]
            return interaction_drift(0.0, g, trunc)
        if seg.kind == "offres_interaction":
            trunc = self.layout.factors[factors[1]]
            return interaction_drift(seg.detuning, g, trunc)
        if seg.kind == "rotation":
            ax = np.asarray(seg.axis)
            omega = seg.angle / seg.duration if seg.duration > 0 else 0.0
            return 0.5 * omega * (ax[0] * SIGMA_X + ax[1] * SIGMA_Y + ax[2] * SIGMA_Z)
        if seg.kind == "detuned_idle":
            trunc = self.layout.factors[factors[0]]
            return seg.detuning * number_op(trunc)
        if seg.kind == "idle":
            d = int(np.prod([self.layout.factors[f] for f in factors]))
            return np.zeros((d, d), complex)
        raise ValueError(f"no generator for segment kind {seg.kind}")

    def _segment_factors(self, seg: GateSegment):
        if seg.kind in ("resonant_swap", "reset_swap", "offres_interaction"):
            return (0, self.factor_of[seg.target_mode])
        if seg.kind in ("rotation", "virtual_z", "measure"):
            return (0,)
        if seg.kind == "detuned_idle":
            return (self.factor_of[seg.target_mode],)
        if seg.kind == "idle":
            return tuple(range(self.layout.n_factors))
        raise ValueError(seg.kind)

    def _instant_unitary(self, seg: GateSegment) -> np.ndarray:
        if seg.kind == "virtual_z":
            return np.diag([1.0, np.exp(-1j * seg.angle)]).astype(complex)
        ax = np.asarray(seg.axis)
        gen = 0.5 * seg.angle * (ax[0] * SIGMA_X + ax[1] * SIGMA_Y + ax[2] * SIGMA_Z)
        evals, vecs = np.linalg.eigh(gen)
        return (vecs * np.exp(-1j * evals)) @ vecs.conj().T

    def _channel(self, seg: GateSegment, factors):
        """(kind, payload) where kind is 'unitary' or 'superop'."""
        key = (
            seg.kind,
            factors,
            seg.duration,
            seg.detuning,
            seg.axis,
            seg.angle,
        )
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if seg.kind == "virtual_z" or (seg.kind == "rotation" and seg.duration == 0.0):
            out = ("unitary", self._instant_unitary(seg))
        else:
            h = self._segment_generator(seg, factors)
            cops = self._factor_cops(factors) if self.options.decoherence != "none" else []
            if not cops:
                evals, vecs = np.linalg.eigh(h)
                out = ("unitary", (vecs * np.exp(-1j * evals * seg.duration)) @ vecs.conj().T)
            else:
                out = ("superop", segment_superoperator(h, cops, seg.duration))
        self._cache[key] = out
        return out

    def _apply(self, seg: GateSegment, rho: np.ndarray) -> np.ndarray:
        factors = self._segment_factors(seg)
        if seg.kind == "idle":
            if self.options.decoherence == "none" or seg.duration == 0.0:
                return rho
            # factorized decay: apply each subsystem channel locally
            for f in factors:
                sub = GateSegment("detuned_idle", duration=seg.duration, target_mode=None)
                key = ("idle-factor", f, seg.duration)
                hit = self._cache.get(key)
                if hit is None:
                    dim = self.layout.factors[f]
                    cops = self._factor_cops((f,))
                    if not cops:
                        continue
                    hit = segment_superoperator(np.zeros((dim, dim), complex), cops, seg.duration)
                    self._cache[key] = hit
                rho = apply_local_superop(hit, rho, self.layout, (f,))
            return rho
        kind, payload = self._channel(seg, factors)
        if kind == "unitary":
            u = embed_operator(payload, self.layout, factors)
            return u @ rho @ u.conj().T
        return apply_local_superop(payload, rho, self.layout, factors)

    def run(self, segments, rho0: np.ndarray | None = None) -> ScheduleResult:
        if self.options.backend == "rk4":
            return self._run_rk4(segments, rho0)
        rho = self.ground_state() if rho0 is None else np.array(rho0, dtype=complex)
        branches = [Branch(1.0, rho)]
        for seg in segments:
            if seg.kind == "measure":
                branches = self._measure(branches)
            else:
                for b in branches:
                    b.state = self._apply(seg, b.state)
        return ScheduleResult(self.layout, branches)

    def _measure(self, branches):
        out = []
        for b in branches:
            (p0, p1), (r0, r1) = projective_measure(b.state, self.layout, 0, "z")
            for bit, p, r in ((0, p0, r0), (1, p1, r1)):
                if p > 1e-12:
                    out.append(Branch(b.weight * p, r, b.outcomes + (bit,)))
        return out

    # ------------------------------------------------------------------
    def _full_generator(self, seg: GateSegment):
        factors = self._segment_factors(seg)
        if seg.kind == "idle":
            d = self.layout.total_dim
            return np.zeros((d, d), complex)
        h = self._segment_generator(seg, factors)
        return embed_operator(h, self.layout, factors)

    def _run_rk4(self, segments, rho0) -> ScheduleResult:
        cops = [embed_operator(op, self.layout, f) for op, f in self._cops]
        rho = self.ground_state() if rho0 is None else np.array(rho0, dtype=complex)
        branches = [Branch(1.0, rho)]
        for seg in segments:
            if seg.kind == "measure":
                branches = self._measure(branches)
                continue
            if seg.kind == "virtual_z" or (seg.kind == "rotation" and seg.duration == 0.0):
                u = embed_operator(self._instant_unitary(seg), self.layout, (0,))
                for b in branches:
                    b.state = u @ b.state @ u.conj().T
                continue
            h = self._full_generator(seg)
            for b in branches:
                res = evolve_lindblad([(h, seg.duration)], cops, b.state, self.options.rk4_dt)
                b.state = res.final_state
        return ScheduleResult(self.layout, branches)


def excitation_number(layout: SpaceLayout) -> np.ndarray:
    """Total excitation operator, conserved by the exchange coupling."""
    n = embed_operator(np.diag([0.0, 1.0]).astype(complex), layout, (0,))
    for f in range(1, layout.n_factors):
        n += embed_operator(number_op(layout.factors[f]), layout, (f,))
    return n
