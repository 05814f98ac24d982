"""Bose-Hubbard type Hamiltonians on truncated Fock spaces.

Internally the on-site part uses the form

    eta * sum_x N_x + (U/2) * sum_x (N_x^2 - eta' N_x),

and the hopping part is ``-J sum_<x,y> (a_x^dag a_y + h.c.)``. The form with
a chemical potential, ``(U/2) sum (N^2 - N) - mu sum N``, is converted on
input with ``eta' = 1`` and ``eta = -mu``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NumericalError
from .fock import FockBasis, Operator, ladder_operator, occupation_projector, fock_projector

CHECK_TOL = 1e-10


@dataclass(frozen=True)
class LatticeSpec:
    D: int
    L: int
    boundary: str
    sites: tuple
    adjacency: tuple

    @property
    def n_sites(self) -> int:
        return len(self.sites)


def square_lattice(D: int, L: int, boundary: str = "open") -> LatticeSpec:
    """Hypercubic lattice with coordinates 1..L in each direction.

    Sites are ordered lexicographically and every nearest-neighbour pair is
    listed once as ``(i, j)`` with ``i < j``.
    """
    if D < 1 or L < 1:
        raise ValueError("D and L must be positive")
    if boundary not in ("open", "periodic"):
        raise ValueError(f"unknown boundary '{boundary}'")
    sites = tuple(itertools.product(range(1, L + 1), repeat=D))
    index = {s: i for i, s in enumerate(sites)}
    pairs = set()
    for s in sites:
        for axis in range(D):
            nxt = list(s)
            nxt[axis] += 1
            if nxt[axis] > L:
                if boundary == "open":
                    continue
                nxt[axis] = 1
            i, j = index[s], index[tuple(nxt)]
            if i != j:
                pairs.add((min(i, j), max(i, j)))
    return LatticeSpec(D, L, boundary, sites, tuple(sorted(pairs)))


@dataclass(frozen=True)
class BoseHubbardParams:
    """Bose-Hubbard couplings in either parametrization.

    Give ``mu`` for the chemical-potential form, or ``eta`` and
    ``eta_prime`` for the shifted on-site form.
    """

    J: float
    U: float
    mu: float | None = None
    eta: float | None = None
    eta_prime: float | None = None

    def __post_init__(self):
        main = self.mu is not None
        appendix = self.eta is not None or self.eta_prime is not None
        if main == appendix:
            raise ValueError("give either mu or (eta, eta_prime), not both or neither")
        if appendix and (self.eta is None or self.eta_prime is None):
            raise ValueError("both eta and eta_prime are required")
        if not self.U >= 0:
            raise ValueError(f"U must be nonnegative, got {self.U}")

    @property
    def is_main_form(self) -> bool:
        return self.mu is not None

    def onsite(self) -> tuple:
        """Return (eta, eta_prime) for this parameter set."""
        if self.is_main_form:
            return -self.mu, 1.0
        return self.eta, self.eta_prime


def convert_parametrization(params: BoseHubbardParams) -> BoseHubbardParams:
    """Switch between the (J, U, mu) and (J, U, eta, eta') forms.

    Both give the same matrix: the linear coefficient of N is
    ``eta - U*eta'/2 = -mu - U/2``.
    """
    if params.is_main_form:
        return BoseHubbardParams(params.J, params.U, eta=-params.mu, eta_prime=1.0)
    mu = 0.5 * params.U * (params.eta_prime - 1.0) - params.eta
    return BoseHubbardParams(params.J, params.U, mu=mu)


@dataclass(frozen=True)
class MeanFieldParams:
    mu: float
    U: float
    psi: complex = 0.0

    def __post_init__(self):
        if not self.U > 0:
            raise ValueError(f"U must be positive, got {self.U}")


@dataclass(frozen=True)
class AubryAndreParams:
    t: float
    p: int
    L: int

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("L must be at least 2")
        if not 0 <= self.p < self.L:
            raise ValueError(f"flux index p must satisfy 0 <= p < L, got p={self.p}, L={self.L}")

    @property
    def gamma(self) -> float:
        return 2 * np.pi * self.p / self.L


def _check_sites(lattice: LatticeSpec, basis: FockBasis):
    if basis.n_modes != lattice.n_sites:
        raise ValueError(f"basis has {basis.n_modes} modes but lattice has {lattice.n_sites} sites")


def annihilators(basis: FockBasis) -> list:
    return [ladder_operator(basis, i, "annihilate").matrix for i in range(basis.n_modes)]


def quadratic_hamiltonian(basis: FockBasis, h) -> np.ndarray:
    """Second quantization of a single-particle matrix: sum_xy h[x, y] a_x^dag a_y."""
    h = np.asarray(h, dtype=complex)
    a = annihilators(basis)
    out = np.zeros((basis.dim, basis.dim), dtype=complex)
    for x, y in zip(*np.nonzero(h)):
        out += h[x, y] * (a[x].conj().T @ a[y])
    return out


def hopping_matrix(lattice: LatticeSpec, J: float, eta: float) -> np.ndarray:
    """Single-particle matrix ``eta*I - J*adjacency``."""
    h = eta * np.eye(lattice.n_sites)
    for i, j in lattice.adjacency:
        h[i, j] -= J
        h[j, i] -= J
    return h


def interaction(basis: FockBasis, U: float, eta_prime: float) -> np.ndarray:
    """Diagonal on-site term (U/2) sum_x (N_x^2 - eta' N_x)."""
    occ = basis.occupations.astype(float)
    return np.diag((0.5 * U * (occ**2 - eta_prime * occ)).sum(axis=1).astype(complex))


def _hermitian(basis, m, label):
    m = 0.5 * (m + m.conj().T)
    return Operator(basis, m, True, label)


def build_bose_hubbard(lattice: LatticeSpec, params: BoseHubbardParams, basis: FockBasis) -> Operator:
    _check_sites(lattice, basis)
    eta, eta_p = params.onsite()
    h0 = quadratic_hamiltonian(basis, hopping_matrix(lattice, params.J, eta))
    return _hermitian(basis, h0 + interaction(basis, params.U, eta_p), "H_BH")


def build_mean_field(params: MeanFieldParams, basis: FockBasis) -> Operator:
    """Single-site model -mu N + U N(N-1)/2 - conj(psi) a - psi a^dag + |psi|^2."""
    if basis.n_modes != 1:
        raise ValueError("mean-field model lives on a single mode")
    n = basis.occupations[:, 0].astype(float)
    a = ladder_operator(basis, 0, "annihilate").matrix
    psi = complex(params.psi)
    diag = -params.mu * n + 0.5 * params.U * n * (n - 1) + abs(psi) ** 2
    m = np.diag(diag.astype(complex)) - np.conj(psi) * a - psi * a.conj().T
    return _hermitian(basis, m, f"H_MF(psi={psi})")


@dataclass(frozen=True)
class NormalModeSystem:
    """Open-boundary sine modes of the quadratic part.

    ``phi[k, x]`` is mode ``k`` evaluated on site ``x``; ``b[k]`` is the
    mode annihilator ``sum_x phi[k, x] a_x`` on the Fock basis.
    """

    phi: np.ndarray
    energies: np.ndarray
    b: tuple
    Lambda: np.ndarray
    modes: tuple

    def number_operators(self) -> list:
        return [bk.conj().T @ bk for bk in self.b]


def normal_mode_transform(lattice: LatticeSpec, J: float, eta: float, basis: FockBasis) -> NormalModeSystem:
    if lattice.boundary != "open":
        raise ValueError("sine normal modes require an open boundary")
    _check_sites(lattice, basis)
    if not basis.rotation_invariant:
        raise ValueError("mode rotations need a basis capped only by total occupation")
    D, L = lattice.D, lattice.L
    modes = lattice.sites
    sites = np.array(lattice.sites, dtype=float)
    phi = np.empty((len(modes), len(modes)))
    energies = np.empty(len(modes))
    for m, k in enumerate(modes):
        k = np.array(k, dtype=float)
        phi[m] = (2.0 / (L + 1)) ** (D / 2) * np.prod(np.sin(np.pi * k * sites / (L + 1)), axis=1)
        energies[m] = eta - 2 * J * np.cos(np.pi * k / (L + 1)).sum()
    lam = np.einsum("kx,qx,rx,sx->kqrs", phi, phi, phi, phi)
    a = annihilators(basis)
    b = tuple(sum(phi[m, x] * a[x] for x in range(len(a))) for m in range(len(modes)))
    return NormalModeSystem(phi, energies, b, lam, modes)


def superfluid_projector(modes: NormalModeSystem, basis: FockBasis, M_prime: int) -> np.ndarray:
    """Product of spectral projectors 1{N^b_k <= M'} over all modes."""
    proj = np.eye(basis.dim, dtype=complex)
    for k, nk in enumerate(modes.number_operators()):
        proj = proj @ occupation_projector(basis, nk, M_prime).matrix
    return 0.5 * (proj + proj.conj().T)


def build_superfluid_truncation(lattice, params: BoseHubbardParams, M_prime: int, basis: FockBasis) -> Operator:
    """H_0 + Pi V Pi with Pi projecting every normal mode to occupation <= M'."""
    eta, eta_p = params.onsite()
    if eta - 2 * lattice.D * abs(params.J) <= 0:
        warnings.warn("eta - 2D|J| <= 0: the quadratic part is not strictly positive", stacklevel=2)
    modes = normal_mode_transform(lattice, params.J, eta, basis)
    h0 = quadratic_hamiltonian(basis, hopping_matrix(lattice, params.J, eta))
    proj = superfluid_projector(modes, basis, M_prime)
    v = interaction(basis, params.U, eta_p)
    return _hermitian(basis, h0 + proj @ v @ proj, f"H_SF(M'={M_prime})")


def build_mott_truncation(lattice, params: BoseHubbardParams, M: int, basis: FockBasis) -> Operator:
    """Pi_M (hopping + eta N) Pi_M + V with Pi_M the per-site Fock projector."""
    _check_sites(lattice, basis)
    eta, eta_p = params.onsite()
    h0 = quadratic_hamiltonian(basis, hopping_matrix(lattice, params.J, eta))
    proj = fock_projector(basis, M).matrix
    v = interaction(basis, params.U, eta_p)
    return _hermitian(basis, proj @ h0 @ proj + v, f"H_MI(M={M})")


class AubryAndreModel(NamedTuple):
    hamiltonian: Operator
    energies: np.ndarray
    mode_matrix: np.ndarray


def aubry_andre_single_particle(params: AubryAndreParams) -> np.ndarray:
    """Position-space single-particle matrix on the L x L torus.

    Site ``(j1, j2)`` with coordinates in 0..L-1 has index ``j1*L + j2``.
    """
    L, t, g = params.L, params.t, params.gamma
    n = L * L
    h = np.eye(n, dtype=complex)
    idx = lambda j1, j2: (j1 % L) * L + (j2 % L)
    for j1 in range(L):
        for j2 in range(L):
            here = idx(j1, j2)
            right = idx(j1 + 1, j2)
            up = idx(j1, j2 + 1)
            h[right, here] += t * np.exp(1j * j2 * g)
            h[here, right] += t * np.exp(-1j * j2 * g)
            h[up, here] += t
            h[here, up] += t
    return h


def aubry_andre_blocks(params: AubryAndreParams) -> tuple:
    """Fourier blocks h_k over j2 for each k1 = 2 pi m / L.

    Returns (k1 values, list of L x L blocks). The j2 hopping wraps
    periodically, which for L = 2 doubles the off-diagonal entry.
    """
    L, t, g = params.L, params.t, params.gamma
    ks = 2 * np.pi * np.arange(L) / L
    blocks = []
    for k in ks:
        hk = np.diag(1 + 2 * t * np.cos(np.arange(L) * g + k)).astype(complex)
        for i in range(L):
            hk[(i + 1) % L, i] += t
            hk[i, (i + 1) % L] += t
        blocks.append(hk)
    return ks, blocks


def build_aubry_andre(params: AubryAndreParams, basis: FockBasis) -> AubryAndreModel:
    """Aubry-Andre Hamiltonian with its independently computed mode energies.

    ``energies[m, i]`` is the i-th eigenvalue of the block with
    ``k1 = 2 pi m / L``. The Fock-space matrix is checked against
    ``sum eps b^dag b`` for the composed Fourier-then-block rotation.
    """
    L = params.L
    if basis.n_modes != L * L:
        raise ValueError(f"basis has {basis.n_modes} modes, torus has {L * L} sites")
    h_pos = aubry_andre_single_particle(params)
    ks, blocks = aubry_andre_blocks(params)

    # c_{j2,k} = L^{-1/2} sum_{j1} e^{i k j1} a_{(j1,j2)}
    fourier = np.zeros((L * L, L * L), dtype=complex)
    for m, k in enumerate(ks):
        for j2 in range(L):
            for j1 in range(L):
                fourier[m * L + j2, j1 * L + j2] = np.exp(1j * k * j1) / np.sqrt(L)
    energies = np.empty((L, L))
    rot = np.zeros((L * L, L * L), dtype=complex)
    for m, hk in enumerate(blocks):
        eps, u = np.linalg.eigh(hk)
        energies[m] = eps
        rot[m * L : (m + 1) * L, m * L : (m + 1) * L] = u.conj().T
    mode_matrix = rot @ fourier

    h_mode = mode_matrix @ h_pos @ mode_matrix.conj().T
    if np.abs(h_mode - np.diag(energies.reshape(-1))).max() > CHECK_TOL:
        raise NumericalError("Fourier block diagonalization does not reproduce the position-space hopping")

    h_fock = quadratic_hamiltonian(basis, h_pos)
    if basis.rotation_invariant:
        a = annihilators(basis)
        rebuilt = np.zeros_like(h_fock)
        for m, eps in enumerate(energies.reshape(-1)):
            bm = sum(mode_matrix[m, x] * a[x] for x in range(len(a)))
            rebuilt += eps * (bm.conj().T @ bm)
        if np.abs(rebuilt - h_fock).max() > CHECK_TOL:
            raise NumericalError("sum eps b^dag b does not match the Fock-space Aubry-Andre matrix")
    h = _hermitian(basis, h_fock, f"H_AA(t={params.t},p={params.p},L={L})")
    return AubryAndreModel(h, energies, mode_matrix)
