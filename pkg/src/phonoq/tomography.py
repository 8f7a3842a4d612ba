"""State and process reconstruction, channel representations, fidelities,
and readout misassignment correction.

Outcome distributions are arrays of shape (2,)*n indexed by qubit: entry
[o_0, ..., o_{n-1}] is the probability of outcome bit o_q on qubit q, where
bit 0 is the +1 eigenvalue of the measured axis. Linear inversion is used
throughout; no positivity repair unless explicitly requested.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from .linalg import PAULIS, kron_all, vectorize

AXES = ("x", "y", "z")
PAULI_LABELS = ("I", "X", "Y", "Z")


class TomographyError(ValueError):
    pass


def pauli_strings(n: int):
    """All length-n Pauli labels, rightmost factor fastest (index base 4)."""
    return ["".join(s) for s in itertools.product(PAULI_LABELS, repeat=n)]


@lru_cache(maxsize=8)
def pauli_basis(n: int) -> tuple:
    return tuple(kron_all(*(PAULIS[c] for c in s)) for s in pauli_strings(n))


def axis_settings(n: int):
    return list(itertools.product(AXES, repeat=n))


def state_tomography(setting_probs: dict, n: int) -> np.ndarray:
    """Linear-inversion state estimate from per-setting outcome distributions.

    ``setting_probs`` maps each of the 3^n axis tuples to its outcome array.
    Identity components are read from the marginals of every compatible
    setting and averaged; the result is Hermitized but not projected onto
    the positive cone.
    """
    needed = set(axis_settings(n))
    missing = needed - set(setting_probs)
    if missing:
        raise TomographyError(f"missing axis settings, e.g. {sorted(missing)[:3]}")
    dim = 2**n
    rho = np.zeros((dim, dim), complex)
    basis = pauli_basis(n)
    for k, label in enumerate(pauli_strings(n)):
        # character at position j of the label belongs to qubit n-1-j
        per_qubit = {n - 1 - j: c for j, c in enumerate(label)}
        compatible = [
            ax
            for ax in needed
            if all(c == "I" or ax[q] == c.lower() for q, c in per_qubit.items())
        ]
        val = 0.0
        for ax in compatible:
            p = np.asarray(setting_probs[ax])
            signs = np.ones((2,) * n)
            for q, c in per_qubit.items():
                if c != "I":
                    shape = [1] * n
                    shape[q] = 2
                    signs = signs * np.array([1.0, -1.0]).reshape(shape)
            val += float(np.sum(signs * p))
        val /= len(compatible)
        rho += val * basis[k]
    rho /= dim
    return 0.5 * (rho + rho.conj().T)


def measurement_probabilities(rho: np.ndarray, layout, qubit_factors: dict, axes) -> np.ndarray:
    """Exact outcome distribution of simultaneous qubit measurements.

    ``qubit_factors`` maps qubit index -> layout factor. Measurement
    operators project the factor's {0, 1} levels along the axis; population
    leaked above the qubit subspace is assigned to no outcome, so the
    distribution may sum to less than one.
    """
    from .linalg import SIGMA_X, SIGMA_Y, SIGMA_Z, embed_operator

    sig = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}
    n = len(qubit_factors)
    out = np.zeros((2,) * n)
    for outcome in itertools.product((0, 1), repeat=n):
        op = np.eye(layout.total_dim, dtype=complex)
        for q, f in qubit_factors.items():
            dim = layout.factors[f]
            proj2 = (np.eye(2) + (1 - 2 * outcome[q]) * sig[axes[q]]) / 2.0
            proj = np.zeros((dim, dim), complex)
            proj[:2, :2] = proj2
            op = op @ embed_operator(proj, layout, (f,))
        out[outcome] = max(float(np.real(np.trace(op @ rho))), 0.0)
    return out


def process_tomography(input_states, output_states) -> np.ndarray:
    """Superoperator from matched input/output state pairs, E = out @ in^{-1}."""
    lam_in = np.column_stack([vectorize(np.asarray(r, dtype=complex)) for r in input_states])
    lam_out = np.column_stack([vectorize(np.asarray(r, dtype=complex)) for r in output_states])
    cond = np.linalg.cond(lam_in)
    if cond > 1e8:
        raise TomographyError(f"input states are not informationally complete (cond {cond:.1e})")
    return lam_out @ np.linalg.inv(lam_in)


def tomography_input_states(n: int) -> list[tuple[str, ...]]:
    """The 4^n product input labels over {0, 1, +, i}."""
    return list(itertools.product("01+i", repeat=n))


_SINGLE_INPUTS = {
    "0": np.array([1.0, 0.0], complex),
    "1": np.array([0.0, 1.0], complex),
    "+": np.array([1.0, 1.0], complex) / np.sqrt(2.0),
    "i": np.array([1.0, 1.0j], complex) / np.sqrt(2.0),
}


def ideal_input_state(labels) -> np.ndarray:
    """Density matrix of a product input; label q belongs to qubit q, which
    carries bit 2^q of the basis index."""
    kets = [_SINGLE_INPUTS[l] for l in labels]
    v = np.array([1.0], complex)
    for k in reversed(kets):  # highest qubit ends up most significant
        v = np.kron(v, k)
    return np.outer(v, v.conj())


@lru_cache(maxsize=8)
def _chi_matrix_m(n: int) -> tuple[np.ndarray, np.ndarray]:
    basis = pauli_basis(n)
    dim4 = len(basis)
    m = np.empty((dim4 * dim4, dim4 * dim4), complex)
    for j in range(dim4):
        for i in range(dim4):
            m[:, dim4 * j + i] = vectorize(np.kron(basis[j].conj(), basis[i]))
    return m, np.linalg.inv(m)


def superop_to_chi(e: np.ndarray, n: int) -> np.ndarray:
    """Channel matrix in the Pauli operator basis, vec(E) = M vec(chi)."""
    _, m_inv = _chi_matrix_m(n)
    dim4 = 4**n
    return (m_inv @ vectorize(e)).reshape(dim4, dim4, order="F")


def chi_to_superop(chi: np.ndarray, n: int) -> np.ndarray:
    m, _ = _chi_matrix_m(n)
    dim = 2**n
    return (m @ vectorize(chi)).reshape(dim * dim, dim * dim, order="F")


def average_gate_fidelity(e_measured: np.ndarray, target, n: int, *, daggered: bool = True) -> float:
    """(2^n + Tr(E_ideal^dag E)) / (2^n (2^n + 1)); the adjoint placement
    makes the identity channel score exactly one.

    ``target`` is a unitary matrix or a superoperator. ``daggered=False``
    evaluates the plain product trace; the two agree for unitary targets.
    """
    dim = 2**n
    target = np.asarray(target)
    e_ideal = np.kron(target.conj(), target) if target.shape == (dim, dim) else target
    prod = e_ideal.conj().T @ e_measured if daggered else e_ideal @ e_measured
    return float((dim + np.real(np.trace(prod))) / (dim * (dim + 1)))


def _phase_vector(phases: np.ndarray, n: int) -> np.ndarray:
    dim = 2**n
    r = np.ones(dim, complex)
    for q in range(n):
        for x in range(dim):
            if (x >> q) & 1:
                r[x] *= np.exp(1j * phases[q])
    return r


def compensate_local_phases(
    e_measured: np.ndarray, u_target: np.ndarray, n: int, *, grid: int = 32
) -> tuple[np.ndarray, float]:
    """Maximize the fidelity over per-qubit z rotations appended to the target.

    Coarse grid search followed by a simplex refinement; returns the argmax
    phases (rad, one per qubit) and the compensated fidelity.
    """
    dim = 2**n
    e4 = e_measured.reshape(dim, dim, dim, dim)
    g_mat = np.einsum("ik,jl,ijkl->ij", u_target, u_target.conj(), e4)

    def trace_term(phases):
        r = _phase_vector(np.asarray(phases), n)
        return np.real(np.einsum("i,j,ij->", r, r.conj(), g_mat))

    def fid(phases):
        return (dim + trace_term(phases)) / (dim * (dim + 1))

    pts = np.linspace(0.0, 2.0 * np.pi, grid, endpoint=False)
    best, best_val = None, -np.inf
    for combo in itertools.product(pts, repeat=n):
        val = trace_term(combo)
        if val > best_val:
            best, best_val = np.array(combo), val
    res = minimize(lambda p: -fid(p), best, method="Nelder-Mead",
                   options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 4000})
    phases = np.mod(res.x, 2.0 * np.pi)
    return phases, float(fid(phases))


@dataclass(frozen=True)
class ProcessEstimate:
    """Reconstructed channel with its Pauli-basis representation and score."""

    superop: np.ndarray
    chi: np.ndarray
    fidelity: float
    compensation_phases: np.ndarray
    raw_fidelity: float = float("nan")


def estimate_process(output_states_by_input: dict, u_target: np.ndarray, n: int) -> ProcessEstimate:
    """QPT against the ideal input set with local-phase-compensated scoring."""
    labels = tomography_input_states(n)
    ins = [ideal_input_state(l) for l in labels]
    outs = [output_states_by_input[l] for l in labels]
    e = process_tomography(ins, outs)
    chi = superop_to_chi(e, n)
    raw = average_gate_fidelity(e, u_target, n)
    phases, fid = compensate_local_phases(e, u_target, n)
    return ProcessEstimate(e, chi, fid, phases, raw)


# ----------------------------------------------------------------------
# readout misassignment


@dataclass(frozen=True)
class MisassignmentModel:
    """Probabilities of assigning the prepared state correctly."""

    f_g: float
    f_e: float

    def __post_init__(self):
        if not (0.5 < self.f_g <= 1.0 and 0.5 < self.f_e <= 1.0):
            raise ValueError("assignment fidelities must lie in (0.5, 1]")
        if self.f_g + self.f_e <= 1.0:
            raise ValueError("confusion matrix is singular")

    @property
    def confusion(self) -> np.ndarray:
        return np.array([[self.f_g, 1.0 - self.f_e], [1.0 - self.f_g, self.f_e]])


def apply_misassignment(p: np.ndarray, model: MisassignmentModel) -> np.ndarray:
    """Confuse every measured bit of a joint outcome distribution."""
    p = np.asarray(p, dtype=float)
    n = p.ndim
    c = model.confusion
    for q in range(n):
        p = np.moveaxis(np.tensordot(c, np.moveaxis(p, q, 0), axes=(1, 0)), 0, q)
    return p


def correct_misassignment(
    p_raw: np.ndarray, model: MisassignmentModel, *, violation_tol: float = 0.05
) -> np.ndarray:
    """Invert the confusion matrix on each measured bit.

    Small negative excursions (inversion on sampled data) are clipped and
    renormalized; anything beyond ``violation_tol`` is reported as
    inconsistent input.
    """
    p = np.asarray(p_raw, dtype=float)
    n = p.ndim
    total = p.sum()
    c_inv = np.linalg.inv(model.confusion)
    for q in range(n):
        p = np.moveaxis(np.tensordot(c_inv, np.moveaxis(p, q, 0), axes=(1, 0)), 0, q)
    violation = float(-p[p < 0].sum()) if np.any(p < 0) else 0.0
    if violation >= violation_tol:
        raise TomographyError(f"corrected distribution violates positivity by {violation:.3f}")
    if violation > 0:
        p = np.clip(p, 0.0, None)
        if p.sum() > 0:
            p *= total / p.sum()
    return p


def sample_distribution(p: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial frequencies over a (possibly sub-normalized) distribution.

    Missing mass (population outside the qubit subspace) is drawn as an
    extra bin and discarded, mirroring postselection-free counting.
    """
    flat = np.asarray(p, dtype=float).reshape(-1)
    flat = np.clip(flat, 0.0, None)
    rest = max(0.0, 1.0 - flat.sum())
    draws = rng.multinomial(shots, np.append(flat, rest) / (flat.sum() + rest))
    return (draws[:-1] / shots).reshape(np.asarray(p).shape)
