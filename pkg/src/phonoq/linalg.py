"""Dense complex linear algebra for small composite Hilbert spaces.

States and operators are plain complex ndarrays; :class:`SpaceLayout` carries
the subsystem dimensions (factor 0 is the transmon by convention).
Superoperators act on column-stacked density matrices, vec(rho)[d*j + i] =
rho[i, j], so vec(A X B) = (B.T kron A) vec(X).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_TOL = 1e-9


class DimensionError(ValueError):
    """Operands do not fit the declared space layout."""


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered subsystem dimensions of a composite space.

    Factor 0 is the transmon (dimension 2); the remaining factors are
    phonon modes at their truncation dimension.
    """

    factors: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(int(d) for d in self.factors))
        if not self.factors or any(d < 1 for d in self.factors):
            raise DimensionError(f"invalid factors {self.factors}")

    @property
    def total_dim(self) -> int:
        return prod(self.factors)

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    def basis_index(self, digits) -> int:
        """Flat basis index of per-factor occupation digits."""
        if len(digits) != self.n_factors:
            raise DimensionError("digit count does not match factors")
        idx = 0
        for d, dim in zip(digits, self.factors):
            if not 0 <= d < dim:
                raise DimensionError(f"digit {d} out of range for dim {dim}")
            idx = idx * dim + d
        return idx

    def digits(self, index: int) -> tuple[int, ...]:
        out = []
        for dim in reversed(self.factors):
            out.append(index % dim)
            index //= dim
        return tuple(reversed(out))

    def subspace_dim(self, targets) -> int:
        return prod(self.factors[t] for t in targets)


@dataclass(frozen=True)
class OperatorMatrix:
    layout: SpaceLayout
    entries: np.ndarray

    def __post_init__(self):
        d = self.layout.total_dim
        if self.entries.shape != (d, d):
            raise DimensionError(f"operator shape {self.entries.shape} != ({d}, {d})")


@dataclass(frozen=True)
class DensityMatrix:
    layout: SpaceLayout
    entries: np.ndarray

    def __post_init__(self):
        d = self.layout.total_dim
        if self.entries.shape != (d, d):
            raise DimensionError(f"state shape {self.entries.shape} != ({d}, {d})")

    def validate(self, eig_tol: float = EIGENVALUE_TOL) -> "DensityMatrix":
        """Raise if the matrix is not a physical state within tolerance."""
        m = self.entries
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {np.trace(m)} != 1")
        if np.linalg.eigvalsh(m).min() < -eig_tol:
            raise ValueError("density matrix has a negative eigenvalue")
        return self


@dataclass(frozen=True)
class SuperOperator:
    dim: int
    entries: np.ndarray

    def __post_init__(self):
        d2 = self.dim * self.dim
        if self.entries.shape != (d2, d2):
            raise DimensionError(f"superoperator shape {self.entries.shape} != ({d2}, {d2})")


def tensor_product(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    """Kronecker product; a's factors come before b's."""
    return OperatorMatrix(
        SpaceLayout(a.layout.factors + b.layout.factors),
        np.kron(a.entries, b.entries),
    )


def kron_all(*mats: np.ndarray) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def partial_trace(rho: np.ndarray, layout: SpaceLayout, keep) -> tuple[np.ndarray, SpaceLayout]:
    """Trace out every factor not in ``keep``; keep order follows the layout."""
    keep = sorted(set(keep))
    n = layout.n_factors
    if not keep or any(k < 0 or k >= n for k in keep):
        raise DimensionError(f"keep set {keep} invalid for {n} factors")
    dims = layout.factors
    t = rho.reshape(dims + dims)
    traced = 0
    for i in range(n):
        if i in keep:
            continue
        ax = i - traced
        rem = t.ndim // 2
        t = np.trace(t, axis1=ax, axis2=ax + rem)
        traced += 1
    d = prod(dims[k] for k in keep)
    return t.reshape(d, d), SpaceLayout(tuple(dims[k] for k in keep))


def reduced_density_matrix(state: DensityMatrix, keep) -> DensityMatrix:
    m, lay = partial_trace(state.entries, state.layout, keep)
    return DensityMatrix(lay, m)


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stacking: vec(rho)[d*j + i] = rho[i, j]."""
    return rho.reshape(-1, order="F")


def devectorize(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise DimensionError(f"vector length {v.size} is not a perfect square")
    return v.reshape(d, d, order="F")


def superop_from_unitary(u: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> U rho U^dagger."""
    return np.kron(u.conj(), u)


def superop_from_kraus(kraus) -> np.ndarray:
    d = kraus[0].shape[0]
    s = np.zeros((d * d, d * d), complex)
    for k in kraus:
        s += np.kron(k.conj(), k)
    return s


def apply_superop(e: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    if e.shape != (d * d, d * d):
        raise DimensionError(f"superoperator {e.shape} does not act on dim {d}")
    return devectorize(e @ vectorize(rho))


def embed_operator(op: np.ndarray, layout: SpaceLayout, targets) -> np.ndarray:
    """Embed an operator acting on the ``targets`` factors into the full space.

    ``op`` is given in the tensor basis of the target factors in layout order.
    """
    targets = tuple(targets)
    n = layout.n_factors
    others = [i for i in range(n) if i not in targets]
    d_sub = layout.subspace_dim(targets)
    if op.shape != (d_sub, d_sub):
        raise DimensionError(f"operator shape {op.shape} != target dim {d_sub}")
    rest = prod(layout.factors[i] for i in others) if others else 1
    full = np.kron(op, np.eye(rest, dtype=complex))
    perm = list(targets) + others  # current factor order of the kron above
    dims = [layout.factors[i] for i in perm]
    t = full.reshape(dims + dims)
    pos = [perm.index(i) for i in range(n)]
    t = t.transpose(pos + [n + p for p in pos])
    d = layout.total_dim
    return t.reshape(d, d)


def apply_unitary(u_sub: np.ndarray, rho: np.ndarray, layout: SpaceLayout, targets) -> np.ndarray:
    u = embed_operator(u_sub, layout, targets) if len(targets) != layout.n_factors else u_sub
    return u @ rho @ u.conj().T


def apply_local_superop(s: np.ndarray, rho: np.ndarray, layout: SpaceLayout, targets) -> np.ndarray:
    """Apply a superoperator defined on a factor subset to the full state.

    Contracts without forming the full-dimension superoperator; the subset
    vectorization uses the same column-stacking convention as the dense path.
    """
    targets = tuple(targets)
    n = layout.n_factors
    dims = layout.factors
    d_sub = layout.subspace_dim(targets)
    if s.shape != (d_sub * d_sub, d_sub * d_sub):
        raise DimensionError("superoperator does not match target subspace")
    others = [i for i in range(n) if i not in targets]
    perm = list(targets) + others
    t = rho.reshape(dims + dims)
    t = t.transpose(perm + [n + p for p in perm])
    d_env = prod(dims[i] for i in others) if others else 1
    t = t.reshape(d_sub, d_env, d_sub, d_env)
    # vec index of the subspace is col*d_sub + row
    t = t.transpose(2, 0, 1, 3).reshape(d_sub * d_sub, d_env * d_env)
    t = s @ t
    # back to (sub_row, env_row, sub_col, env_col), then per-factor axes
    t = t.reshape(d_sub, d_sub, d_env, d_env).transpose(1, 2, 0, 3)
    t = t.reshape([dims[i] for i in perm] + [dims[i] for i in perm])
    inv = [perm.index(i) for i in range(n)]
    t = t.transpose(inv + [n + i for i in inv])
    d = layout.total_dim
    return t.reshape(d, d)


def is_hermitian(m: np.ndarray, tol: float = HERMITICITY_TOL) -> bool:
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def random_density_matrix(d: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


# single-qubit constants
SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|
SIGMA_PLUS = SIGMA_MINUS.conj().T

PAULIS = {"I": SIGMA_I, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}


def destroy(dim: int) -> np.ndarray:
    """Bosonic lowering operator truncated to ``dim`` levels."""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def number_op(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def ket(layout: SpaceLayout, digits) -> np.ndarray:
    v = np.zeros(layout.total_dim, complex)
    v[layout.basis_index(digits)] = 1.0
    return v


def projector(v: np.ndarray) -> np.ndarray:
    return np.outer(v, v.conj())
