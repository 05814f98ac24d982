"""Truncated multi-mode bosonic Fock spaces and their ladder operators.

States are occupation vectors ``(n_1, ..., n_n)`` with every ``n_i`` at most
the per-mode cutoff and, optionally, the total occupation at most
``total_cutoff``. They are enumerated by total occupation first and then
lexicographically, so the basis order is deterministic and number sectors
occupy contiguous index ranges.

Creation operators are the adjoint of the annihilation operator restricted
to the basis, so a state whose occupation would leave the cutoff is mapped
to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionCapError, NumericalError

DEFAULT_MAX_DIM = 20000
HERMITIAN_RTOL = 1e-12


def _count_states(n_modes, per_mode_cutoff, total_cutoff):
    """Number of occupation vectors satisfying both cutoffs."""
    if total_cutoff is None:
        return (per_mode_cutoff + 1) ** n_modes
    counts = np.zeros(total_cutoff + 1, dtype=object)
    counts[0] = 1
    for _ in range(n_modes):
        new = np.zeros_like(counts)
        for n in range(min(per_mode_cutoff, total_cutoff) + 1):
            new[n:] += counts[: total_cutoff + 1 - n]
        counts = new
    return int(sum(counts))


def _vectors_with_total(n_modes, total, cap):
    """Occupation vectors with a fixed total, in lexicographic order."""
    if n_modes == 1:
        if total <= cap:
            yield (total,)
        return
    for first in range(min(total, cap) + 1):
        rest = total - first
        if rest > cap * (n_modes - 1):
            continue
        for tail in _vectors_with_total(n_modes - 1, rest, cap):
            yield (first,) + tail


@dataclass(frozen=True)
class FockBasis:
    """Ordered basis of occupation vectors.

    ``states[i]`` is the occupation vector of basis index ``i`` and
    ``index`` is the inverse map.
    """

    n_modes: int
    per_mode_cutoff: int
    total_cutoff: int | None
    states: tuple
    index: dict = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def occupations(self) -> np.ndarray:
        """Integer array of shape (dim, n_modes)."""
        return np.array(self.states, dtype=np.int64).reshape(self.dim, self.n_modes)

    @property
    def totals(self) -> np.ndarray:
        return self.occupations.sum(axis=1)

    @property
    def rotation_invariant(self) -> bool:
        """True if unitary mode rotations map the truncated space to itself.

        This holds when only the total occupation is capped, or when there is
        a single mode.
        """
        if self.n_modes == 1:
            return True
        return self.total_cutoff is not None and self.per_mode_cutoff >= self.total_cutoff

    def sector_indices(self) -> dict:
        """Map total occupation -> array of basis indices in that sector."""
        totals = self.totals
        return {int(k): np.flatnonzero(totals == k) for k in np.unique(totals)}


def build_basis(n_modes, per_mode_cutoff, total_cutoff=None, max_dim=DEFAULT_MAX_DIM) -> FockBasis:
    """Enumerate the truncated Fock basis.

    Raises DimensionCapError before enumerating if the basis would contain
    more than ``max_dim`` states.
    """
    if n_modes < 1:
        raise ValueError(f"n_modes must be >= 1, got {n_modes}")
    if per_mode_cutoff < 0:
        raise ValueError(f"per_mode_cutoff must be >= 0, got {per_mode_cutoff}")
    if total_cutoff is not None and total_cutoff < 0:
        raise ValueError(f"total_cutoff must be >= 0, got {total_cutoff}")
    size = _count_states(n_modes, per_mode_cutoff, total_cutoff)
    if size > max_dim:
        raise DimensionCapError(
            f"basis with n_modes={n_modes}, per_mode_cutoff={per_mode_cutoff}, "
            f"total_cutoff={total_cutoff} has {size} states, cap is {max_dim}"
        )
    top = n_modes * per_mode_cutoff if total_cutoff is None else min(total_cutoff, n_modes * per_mode_cutoff)
    states = []
    for total in range(top + 1):
        states.extend(_vectors_with_total(n_modes, total, per_mode_cutoff))
    states = tuple(states)
    index = {s: i for i, s in enumerate(states)}
    return FockBasis(n_modes, per_mode_cutoff, total_cutoff, states, index)


@dataclass(frozen=True)
class Operator:
    """Dense matrix on a Fock basis with a provenance label.

    When ``hermitian`` is set the matrix is checked on construction.
    """

    basis: FockBasis
    matrix: np.ndarray
    hermitian: bool = False
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(f"matrix shape {m.shape} does not match basis dimension {self.basis.dim}")
        object.__setattr__(self, "matrix", m)
        if self.hermitian:
            defect = hermiticity_defect(m)
            scale = max(1.0, float(np.abs(m).max(initial=0.0)))
            if defect > HERMITIAN_RTOL * scale:
                raise NumericalError(f"operator '{self.label}' is not Hermitian: defect {defect:.3e}")

    @property
    def dim(self) -> int:
        return self.basis.dim

    def dag(self) -> "Operator":
        return Operator(self.basis, self.matrix.conj().T, self.hermitian, f"({self.label})^dag")

    def zero_fraction(self) -> float:
        return float(np.mean(self.matrix == 0))

    def sparse(self) -> sp.csr_matrix:
        """CSR copy of the matrix, useful for very sparse ladder operators."""
        return sp.csr_matrix(self.matrix)

    def storage_hint(self) -> str:
        """'sparse' when more than a quarter of the entries vanish."""
        return "sparse" if self.zero_fraction() > 0.25 else "dense"


def hermiticity_defect(m) -> float:
    m = np.asarray(m)
    return float(np.abs(m - m.conj().T).max(initial=0.0))


def as_matrix(op) -> np.ndarray:
    """Accept an Operator or array-like and return a complex ndarray."""
    if isinstance(op, Operator):
        return op.matrix
    return np.asarray(op, dtype=complex)


def ladder_operator(basis: FockBasis, mode: int, kind: str = "annihilate") -> Operator:
    """Annihilation, creation or number operator of one mode."""
    if not 0 <= mode < basis.n_modes:
        raise ValueError(f"mode {mode} out of range for {basis.n_modes} modes")
    d = basis.dim
    if kind == "number":
        occ = basis.occupations[:, mode]
        return Operator(basis, np.diag(occ.astype(complex)), True, f"N_{mode}")
    a = np.zeros((d, d), dtype=complex)
    for col, state in enumerate(basis.states):
        n = state[mode]
        if n == 0:
            continue
        lowered = state[:mode] + (n - 1,) + state[mode + 1 :]
        a[basis.index[lowered], col] = np.sqrt(n)
    if kind == "annihilate":
        return Operator(basis, a, False, f"a_{mode}")
    if kind == "create":
        return Operator(basis, a.conj().T, False, f"a_{mode}^dag")
    raise ValueError(f"unknown ladder operator kind '{kind}'")


def total_number(basis: FockBasis) -> Operator:
    return Operator(basis, np.diag(basis.totals.astype(complex)), True, "N_tot")


def occupation_projector(basis: FockBasis, number_op, threshold: int, int_tol: float = 1e-6) -> Operator:
    """Spectral projector 1{N <= threshold} of a number-like operator.

    The operator may be non-diagonal (a rotated mode occupation); its
    eigenvalues must be integers within ``int_tol``.
    """
    n = as_matrix(number_op)
    if hermiticity_defect(n) > HERMITIAN_RTOL * max(1.0, float(np.abs(n).max(initial=0.0))):
        raise NumericalError("number operator is not Hermitian")
    vals, vecs = np.linalg.eigh(n)
    off = np.abs(vals - np.round(vals))
    if off.max(initial=0.0) > int_tol:
        bad = vals[np.argmax(off)]
        raise NumericalError(f"number operator has non-integer eigenvalue {bad!r}")
    keep = vals <= threshold + 0.5
    v = vecs[:, keep]
    proj = v @ v.conj().T
    proj = 0.5 * (proj + proj.conj().T)
    label = getattr(number_op, "label", "N")
    return Operator(basis, proj, True, f"1[{label}<={threshold}]")


def fock_projector(basis: FockBasis, max_occupation: int) -> Operator:
    """Diagonal projector onto states with every mode occupation <= max_occupation."""
    mask = (basis.occupations <= max_occupation).all(axis=1)
    return Operator(basis, np.diag(mask.astype(complex)), True, f"P_fock<={max_occupation}")


def total_number_projector(basis: FockBasis, max_total: int) -> Operator:
    mask = basis.totals <= max_total
    return Operator(basis, np.diag(mask.astype(complex)), True, f"P_Ntot<={max_total}")


def number_sector_blocks(basis: FockBasis, operator, tol: float = 1e-10) -> list:
    """Split a number-conserving operator into (total, block) pairs."""
    m = as_matrix(operator)
    n_tot = basis.totals.astype(float)
    comm = n_tot[:, None] * m - m * n_tot[None, :]
    cnorm = float(np.linalg.norm(comm, 2)) if comm.size else 0.0
    if cnorm > tol * max(1.0, float(np.abs(m).max(initial=0.0))):
        raise NumericalError(f"operator does not conserve total number: ||[A, N_tot]|| = {cnorm:.3e}")
    return [(k, m[np.ix_(idx, idx)]) for k, idx in basis.sector_indices().items()]


def assemble_sector_blocks(basis: FockBasis, blocks) -> np.ndarray:
    """Inverse of number_sector_blocks."""
    out = np.zeros((basis.dim, basis.dim), dtype=complex)
    sectors = basis.sector_indices()
    for k, block in blocks:
        idx = sectors[k]
        out[np.ix_(idx, idx)] = block
    return out
