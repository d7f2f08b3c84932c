"""Dense complex linear algebra for small Hilbert spaces.

Operators and density matrices are thin immutable wrappers around numpy
arrays with validity checks (shape, trace, Hermiticity, positivity) applied
at construction.  Dimensions are capped at ``MAX_DIM`` so the dense
eigenvalue checks stay trivial; two levels suffice for Ramsey/echo work and
three for spectroscopy of the 1-2 transition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, StateError

log = logging.getLogger(__name__)

MAX_DIM = 5

TRACE_REAL_TOL = 1e-9
TRACE_IMAG_TOL = 1e-12
HERMITICITY_TOL = 1e-10
MIN_EIGENVALUE = -1e-9
KET_NORM_TOL = 1e-12


def _as_complex_matrix(entries) -> np.ndarray:
    mat = np.array(entries, dtype=np.complex128)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {mat.shape}")
    dim = mat.shape[0]
    if not 2 <= dim <= MAX_DIM:
        raise DimensionError(f"dimension must be in [2, {MAX_DIM}], got {dim}")
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True, eq=False)
class Operator:
    """A dense complex dim x dim matrix on a small Hilbert space."""

    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _as_complex_matrix(self.entries))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def dagger(self) -> "Operator":
        return Operator(self.entries.conj().T)

    def hermiticity_defect(self) -> float:
        """Largest entrywise deviation from self-adjointness."""
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A physical state: unit trace, Hermitian, positive semidefinite.

    Construction raises :class:`StateError` if any invariant is violated
    beyond tolerance, which is how integrator failures surface.
    """

    op: Operator

    def __post_init__(self):
        if not isinstance(self.op, Operator):
            object.__setattr__(self, "op", Operator(self.op))
        mat = self.op.entries
        tr = complex(np.trace(mat))
        if abs(tr.real - 1.0) > TRACE_REAL_TOL or abs(tr.imag) > TRACE_IMAG_TOL:
            raise StateError(f"trace {tr:.6e} is not 1 within tolerance")
        defect = float(np.max(np.abs(mat - mat.conj().T)))
        if defect > HERMITICITY_TOL:
            raise StateError(f"not Hermitian: max deviation {defect:.3e}")
        lowest = float(np.linalg.eigvalsh(0.5 * (mat + mat.conj().T)).min())
        if lowest < MIN_EIGENVALUE:
            raise StateError(f"not positive semidefinite: min eigenvalue {lowest:.3e}")

    @property
    def entries(self) -> np.ndarray:
        return self.op.entries

    @property
    def dim(self) -> int:
        return self.op.dim


def annihilation_op(dim: int) -> Operator:
    """Truncated ladder operator: entry (i, i+1) equals sqrt(i+1)."""
    if dim < 2:
        raise DimensionError(f"annihilation operator needs dim >= 2, got {dim}")
    mat = np.zeros((dim, dim), dtype=np.complex128)
    mat[np.arange(dim - 1), np.arange(1, dim)] = np.sqrt(np.arange(1, dim))
    return Operator(mat)


def number_op(dim: int) -> Operator:
    """Diagonal occupation-number operator diag(0, 1, ..., dim-1)."""
    if dim < 2:
        raise DimensionError(f"number operator needs dim >= 2, got {dim}")
    return Operator(np.diag(np.arange(dim, dtype=np.complex128)))


def basis_ket(dim: int, level: int) -> np.ndarray:
    """Unit vector for the given level."""
    if not 0 <= level < dim:
        raise DimensionError(f"level {level} outside 0..{dim - 1}")
    ket = np.zeros(dim, dtype=np.complex128)
    ket[level] = 1.0
    return ket


def dm_pure(ket) -> DensityMatrix:
    """Density matrix of a pure state |psi><psi|.

    The input is renormalized (with a logged warning) if its norm differs
    from 1 by more than ``KET_NORM_TOL``; a zero vector is rejected.
    """
    vec = np.asarray(ket, dtype=np.complex128).ravel()
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise StateError("cannot form a state from the zero vector")
    if abs(norm - 1.0) > KET_NORM_TOL:
        log.warning("ket norm %.12g differs from 1; renormalizing", norm)
    vec = vec / norm
    return DensityMatrix(Operator(np.outer(vec, vec.conj())))


def expectation(rho: DensityMatrix, a: Operator) -> complex:
    """tr(rho A)."""
    if rho.dim != a.dim:
        raise DimensionError(f"dimension mismatch: state {rho.dim}, operator {a.dim}")
    return complex(np.trace(rho.entries @ a.entries))


def apply_unitary(rho: DensityMatrix, u: np.ndarray) -> DensityMatrix:
    """Conjugate a state by a unitary: rho -> U rho U^dagger."""
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (rho.dim, rho.dim):
        raise DimensionError(f"unitary shape {u.shape} does not match dim {rho.dim}")
    return DensityMatrix(Operator(u @ rho.entries @ u.conj().T))
