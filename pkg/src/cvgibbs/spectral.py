"""Spectral gaps, comparison operators and perturbation audits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.sparse.csgraph import connected_components

from .errors import NumericalError, SpectralCollisionError
from .filters import FilterFunction
from .fock import FockBasis, as_matrix, hermiticity_defect
from .hamiltonians import MeanFieldParams, build_mean_field
from .lindblad import (
    SELFADJOINT,
    SuperOperator,
    _jump_list,
    build_generator,
    cosh_tail,
    cosh_weight,
    derivation_factors,
    spectral_decompose,
)

KERNEL_TOL = 1e-8


@dataclass(frozen=True)
class GapReport:
    gap: float
    kernel_dimension: int
    lowest: np.ndarray
    degenerate_kernel: bool
    degenerate_gap: bool

    def to_dict(self) -> dict:
        return {
            "gap": self.gap,
            "kernel_dimension": self.kernel_dimension,
            "lowest": [float(v) for v in self.lowest],
            "degenerate_kernel": self.degenerate_kernel,
            "degenerate_gap": self.degenerate_gap,
        }


def _hs_matrix(generator) -> np.ndarray:
    if isinstance(generator, SuperOperator):
        if generator.picture != SELFADJOINT:
            raise ValueError("spectral_gap needs the self-adjoint picture")
        return generator.matrix
    return np.asarray(generator)


def block_eigvalsh(m, drop_tol: float = 1e-13) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix, split along its sparsity pattern.

    Entries below ``drop_tol`` times the largest entry are treated as zero
    when finding blocks; number-conserving generators split into one block
    per occupation difference.
    """
    m = 0.5 * (m + m.conj().T)
    pattern = sp.csr_matrix(np.abs(m) > drop_tol * float(np.abs(m).max(initial=0.0)))
    n_blocks, labels = connected_components(pattern, directed=False)
    if n_blocks == 1:
        return np.linalg.eigvalsh(m)
    vals = [np.linalg.eigvalsh(m[np.ix_(idx, idx)]) for idx in (np.flatnonzero(labels == b) for b in range(n_blocks))]
    return np.sort(np.concatenate(vals))


def spectral_gap(generator, kernel_tol: float = KERNEL_TOL, use_blocks: bool = True) -> GapReport:
    """Second-smallest eigenvalue of -L for a self-adjoint generator."""
    m = _hs_matrix(generator)
    scale = max(1.0, float(np.abs(m).max()))
    if hermiticity_defect(m) > 1e-8 * scale:
        raise NumericalError("generator is not Hermitian in the self-adjoint picture")
    try:
        vals = block_eigvalsh(m) if use_blocks else np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed on {m.shape[0]}-dim generator: {exc}") from exc
    neg = np.sort(-vals)
    kdim = int(np.sum(np.abs(neg) <= kernel_tol * scale))
    gap = float(neg[1]) if len(neg) > 1 else 0.0
    deg_gap = len(neg) > 2 and abs(neg[2] - neg[1]) <= kernel_tol * scale
    return GapReport(gap, max(kdim, 1), neg[:10], kdim > 1, bool(deg_gap))


@dataclass(frozen=True)
class LadderBlock:
    operator: SuperOperator
    nu_plus: float
    nu_minus: float

    def kappa(self, k) -> float:
        return ladder_block_eigenvalue(self.nu_plus, self.nu_minus, k)


def ladder_block_eigenvalue(nu_plus, nu_minus, k) -> float:
    """kappa_k = (nu+ - nu-)^2 k / 2 - nu+ (nu- - nu+)."""
    return 0.5 * (nu_plus - nu_minus) ** 2 * k - nu_plus * (nu_minus - nu_plus)


def ladder_block_operator(nu_plus: float, nu_minus: float, basis: FockBasis) -> LadderBlock:
    """X -> (nu+ - nu-)^2 (N X + X N)/2 - nu+ (nu- - nu+) X on one mode."""
    if basis.n_modes != 1:
        raise ValueError("ladder-block operator is single-mode")
    n = basis.occupations[:, 0].astype(float)
    diag = 0.5 * (nu_plus - nu_minus) ** 2 * (n[:, None] + n[None, :]) - nu_plus * (nu_minus - nu_plus)
    mat = np.diag(diag.reshape(-1, order="F").astype(complex))
    op = SuperOperator(basis, mat, SELFADJOINT, np.nan, np.inf, "", "", "ladder-block")
    return LadderBlock(op, nu_plus, nu_minus)


@dataclass(frozen=True)
class ComparisonReport:
    min_eig_forward: float
    min_eig_reverse: float
    excluded_levels: int
    holds: bool


def interior_indices(basis: FockBasis, exclude_top: int) -> np.ndarray:
    """Column-stacked indices of |n><m| with n, m <= cutoff - exclude_top."""
    occ = basis.occupations[:, 0]
    keep = occ <= basis.per_mode_cutoff - exclude_top
    d = basis.dim
    return np.flatnonzero((keep[:, None] & keep[None, :]).reshape(-1, order="F")), d


def comparison_defect(L_qou: SuperOperator, L_lb: SuperOperator, exclude_top: int = 2, tol: float = 1e-8) -> ComparisonReport:
    """Quadratic-form comparison of two single-mode self-adjoint generators.

    ``min_eig_forward`` is the smallest eigenvalue of (-L_qou) - L_lb on the
    interior block, i.e. the comparison -L >= L_LB between the positive
    generator and the ladder block. ``min_eig_reverse`` is the smallest
    eigenvalue of L_qou - L_lb read literally. Rows involving the top
    ``exclude_top`` occupation levels are dropped.
    """
    basis = L_qou.basis
    idx, _ = interior_indices(basis, exclude_top)
    a = L_qou.matrix[np.ix_(idx, idx)]
    b = L_lb.matrix[np.ix_(idx, idx)]
    fwd = np.linalg.eigvalsh(0.5 * ((-a - b) + (-a - b).conj().T))[0]
    rev = np.linalg.eigvalsh(0.5 * ((a - b) + (a - b).conj().T))[0]
    return ComparisonReport(float(fwd), float(rev), exclude_top, bool(fwd >= -tol or rev >= -tol))


def derivation_superoperator(lt, mt) -> np.ndarray:
    """Matrix of X -> lt X - X mt on column-stacked operators."""
    d = lt.shape[0]
    ident = np.eye(d)
    return np.kron(ident, lt) - np.kron(mt.T, ident)


@dataclass(frozen=True)
class PerturbationAudit:
    delta: float
    gap_base: float
    gap_perturbed: float
    bound_value: float
    satisfied: bool
    status: str
    quad_error: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _fock_derivation_parts(H, jumps, filt):
    spec = spectral_decompose(H)
    fv, fw, nu = derivation_factors(spec, filt)
    mats, _ = _jump_list(jumps)
    return spec, fv, fw, nu, [spec.to_eigen(a) for a in mats]


def gap_perturbation_bound(H_base, H_pert, jumps, filt: FilterFunction, rtol: float = 1e-8) -> PerturbationAudit:
    """Check gap(L~) >= (sqrt(gap(L)) - sqrt(Delta))^2.

    Delta integrates the squared operator norm of the difference of the two
    derivations (as d^2 x d^2 matrices) against 1/(beta cosh(2 pi t/beta)).
    """
    beta = filt.beta
    base = _fock_derivation_parts(H_base, jumps, filt)
    pert = _fock_derivation_parts(H_pert, jumps, filt)

    def parts(data, t):
        spec, fv, fw, nu, eig = data
        phase = np.exp(1j * nu * t)
        out = []
        for a in eig:
            out.append((spec.to_fock(fv * phase * a), spec.to_fock(fw * phase * a)))
        return out

    def integrand(t):
        total = 0.0
        for (l0, m0), (l1, m1) in zip(parts(base, t), parts(pert, t)):
            diff = derivation_superoperator(l1 - l0, m1 - m0)
            total += np.linalg.norm(diff, 2) ** 2
        return total * cosh_weight(t, beta)

    # crude sup bound on the integrand numerator for the tail
    sup = 0.0
    for (_, fv0, fw0, _, e0), (_, fv1, fw1, _, e1) in [(base, pert)]:
        for a0, a1 in zip(e0, e1):
            sup += (
                np.linalg.norm(np.abs(fv0 * a0)) + np.linalg.norm(np.abs(fv1 * a1))
                + np.linalg.norm(np.abs(fw0 * a0)) + np.linalg.norm(np.abs(fw1 * a1))
            ) ** 2
    tol = 1e-12
    T = beta / (2 * np.pi) * np.log(max(2.0, 4 * sup / (np.pi * tol)))
    delta, err = integrate.quad(integrand, -T, T, epsabs=tol, epsrel=rtol, limit=400, points=[0.0])
    err += sup * cosh_tail(beta, T)
    if err > 1e-6:
        delta, err2 = integrate.quad(integrand, -2 * T, 2 * T, epsabs=tol, epsrel=rtol, limit=1000, points=[0.0])
        err = err2 + sup * cosh_tail(beta, 2 * T)

    g0 = spectral_gap(build_generator(H_base, jumps, filt, picture=SELFADJOINT)).gap
    g1 = spectral_gap(build_generator(H_pert, jumps, filt, picture=SELFADJOINT)).gap
    delta = max(float(delta), 0.0)
    if g0 > delta:
        bound = (np.sqrt(g0) - np.sqrt(delta)) ** 2
        ok = g1 >= bound - 1e-8
        status = "satisfied" if ok else "violated"
    else:
        bound, ok, status = float("nan"), True, "inconclusive"
    return PerturbationAudit(delta, g0, g1, float(bound), bool(ok), status, float(err))


@dataclass(frozen=True)
class FiniteRankReport:
    remainders: list
    qq_norms: list
    ranks: list
    projector: np.ndarray = field(repr=False)
    s: float = 0.0

    @property
    def max_qq_norm(self) -> float:
        return max(self.qq_norms, default=0.0)


def conjugated_jump(A, H, filt: FilterFunction, s: float, spec=None) -> np.ndarray:
    """e^{sH} L e^{-sH} with L the dressed jump, in the Fock frame."""
    spec = spectral_decompose(H) if spec is None else spec
    lv = spec.snapped
    nu = lv[:, None] - lv[None, :]
    return spec.to_fock(filt.scaled(nu, s) * spec.to_eigen(A))


def touched_projector(H0, R, tol=1e-10) -> np.ndarray:
    """Sum of H0 eigenprojectors whose range meets the support of R."""
    spec = spectral_decompose(H0)
    r = as_matrix(R)
    proj = np.zeros_like(r)
    for p in spec.projectors():
        if np.linalg.norm(r @ p) > tol or np.linalg.norm(p @ r) > tol:
            proj += p
    return proj


def finite_rank_remainder(H0, R, jumps, filt: FilterFunction, s: float, P=None, rank_tol: float = 1e-8) -> FiniteRankReport:
    """Remainder of the conjugated dressed jumps under a finite-rank perturbation.

    R must be supported in the range of a projector P commuting with H0. The
    returned remainders are ``e^{sH}L(H)e^{-sH} - e^{sH0}L(H0)e^{-sH0}``; on the
    complement Q = 1 - P they should vanish.
    """
    h0 = as_matrix(H0)
    r = as_matrix(R)
    p = touched_projector(h0, r) if P is None else as_matrix(P)
    scale = max(1.0, float(np.abs(h0).max()))
    if np.linalg.norm(p @ h0 - h0 @ p, 2) > 1e-10 * scale:
        raise NumericalError("projector does not commute with H0")
    if np.abs(r - p @ r @ p).max(initial=0.0) > 1e-12 * max(1.0, float(np.abs(r).max(initial=0.0))):
        raise NumericalError("R is not supported in the range of P")
    h = h0 + r
    q = np.eye(len(h0)) - p
    spec0 = spectral_decompose(h0)
    spec1 = spectral_decompose(h)
    _collision_guard(h, h0, p, q, spec1.cluster_tol)
    rem, qq, ranks = [], [], []
    for a in _jump_list(jumps)[0]:
        diff = conjugated_jump(a, h, filt, s, spec1) - conjugated_jump(a, h0, filt, s, spec0)
        rem.append(diff)
        qq.append(float(np.linalg.norm(q @ diff @ q, 2)))
        sv = np.linalg.svd(diff, compute_uv=False)
        ranks.append(int(np.sum(sv > rank_tol)))
    return FiniteRankReport(rem, qq, ranks, p, s)


def _restricted_eigs(h, proj):
    vals, vecs = np.linalg.eigh(proj)
    basis = vecs[:, vals > 0.5]
    if basis.shape[1] == 0:
        return np.array([])
    return np.linalg.eigvalsh(basis.conj().T @ h @ basis)


def _collision_guard(h, h0, p, q, tol):
    ep = _restricted_eigs(h, p)
    eq = _restricted_eigs(h0, q)
    if len(ep) and len(eq):
        gaps = np.abs(ep[:, None] - eq[None, :])
        if gaps.min() <= tol:
            i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
            raise SpectralCollisionError(
                f"perturbed level {ep[i]:.12g} collides with an unperturbed level {eq[j]:.12g}; "
                "jitter the perturbation by ~1e-6"
            )


@dataclass(frozen=True)
class MeanFieldAudit:
    rows: list
    separation_ok: bool
    all_pass: bool


def meanfield_eigen_audit(params: MeanFieldParams, basis: FockBasis, r=None, n_values=None, margin: int = 4) -> MeanFieldAudit:
    """Check eigenvalue and eigenvector perturbation bounds per level n.

    Eigenvalue: |E_n - E_n^0| < r sqrt(n+1) with r = 2|psi|(1 + 1e-6) by
    default. Eigenvector: || |E_n> - |n> || <= 32 |psi| / (U sqrt(n+1)) with
    the phase fixed by <n|E_n> >= 0.
    """
    psi = abs(complex(params.psi))
    U, mu = params.U, params.mu
    if psi >= U / 16:
        raise ValueError("audit needs |psi| < U/16")
    r = 2 * psi * (1 + 1e-6) if r is None else r
    n_min = int(np.ceil(3 + 4 * mu / U))
    n_max = basis.per_mode_cutoff - margin
    if n_values is None:
        n_values = range(max(n_min, 0), n_max + 1)
    for n in n_values:
        if n < n_min or n > n_max:
            raise ValueError(f"n={n} outside the admissible range [{n_min}, {n_max}]")
    H = build_mean_field(params, basis).matrix
    energies, vecs = np.linalg.eigh(H)
    e0 = lambda n: -mu * n + 0.5 * U * n * (n - 1) + psi**2
    rows = []
    for n in n_values:
        overlaps = np.abs(vecs[n, :])
        order = np.argsort(overlaps)[::-1]
        best = order[0]
        ambiguous = len(order) > 1 and overlaps[order[0]] - overlaps[order[1]] <= 1e-3
        v = vecs[:, best]
        phase = v[n] / abs(v[n]) if abs(v[n]) > 0 else 1.0
        v = v / phase
        ket = np.zeros_like(v)
        ket[n] = 1.0
        e_dev = abs(energies[best] - e0(n))
        v_dev = float(np.linalg.norm(v - ket))
        e_bound = r * np.sqrt(n + 1)
        v_bound = 32 * psi / (U * np.sqrt(n + 1))
        rows.append(
            {
                "n": int(n),
                "E_n": float(energies[best]),
                "E0_n": float(e0(n)),
                "eigenvalue_deviation": float(e_dev),
                "eigenvalue_bound": float(e_bound),
                "eigenvalue_ok": bool(e_dev < e_bound or (psi == 0 and e_dev == 0)),
                "eigenvector_deviation": v_dev,
                "eigenvector_bound": float(v_bound),
                "eigenvector_ok": bool(v_dev <= v_bound + 1e-12),
                "ambiguous": bool(ambiguous),
            }
        )
    sep_ok = True
    ns = list(n_values)
    for i, n in enumerate(ns):
        for m in ns[i + 1 :]:
            if abs(e0(m) - e0(n)) < U / 4 * (m + n + 1) - 1e-12:
                sep_ok = False
    ok = sep_ok and all(row["eigenvalue_ok"] and row["eigenvector_ok"] and not row["ambiguous"] for row in rows)
    return MeanFieldAudit(rows, sep_ok, ok)


def random_eigenspace_perturbation(H0, rng, n_levels: int = 1, scale: float = 0.1, max_level: int | None = None) -> np.ndarray:
    """Random Hermitian R supported on ``n_levels`` eigenspaces of H0.

    The eigenspaces are drawn among the lowest ``max_level`` clusters (all
    by default), so R commutes with the projector onto their sum.
    """
    spec = spectral_decompose(H0)
    projs = spec.projectors()
    pool = len(projs) if max_level is None else min(max_level, len(projs))
    chosen = rng.choice(pool, size=min(n_levels, pool), replace=False)
    p = sum(projs[i] for i in chosen)
    d = p.shape[0]
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = p @ (g + g.conj().T) @ p
    return scale * r / max(np.linalg.norm(r, 2), 1e-300)
