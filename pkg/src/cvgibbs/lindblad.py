"""Frequency-domain construction of Gibbs-sampler generators.

Everything is assembled in the eigenbasis of H, where Bohr-frequency
components of a jump are simply its matrix entries, and then rotated back
to the Fock basis.

Superoperators act on column-stacked operators: ``vec(X)[i + d*j] = X[i, j]``.
Two pictures are supported. ``schrodinger`` is the Lindbladian acting on
density matrices; ``selfadjoint_hs`` is its similarity transform
``X -> s^{-1/4} L(s^{1/4} X s^{1/4}) s^{-1/4}`` with ``s`` the Gibbs state,
which is Hermitian for KMS filters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import expit

from . import kernels
from .errors import DimensionCapError, KMSViolationError, NumericalError
from .filters import FilterFunction, default_grid, kms_audit
from .fock import FockBasis, Operator, as_matrix, hermiticity_defect, ladder_operator

DEFAULT_MAX_SUPEROP_DIM = 4900
SCHRODINGER = "schrodinger"
SELFADJOINT = "selfadjoint_hs"


def vec(x) -> np.ndarray:
    return np.asarray(x).reshape(-1, order="F")


def unvec(v, d) -> np.ndarray:
    return np.asarray(v).reshape(d, d, order="F")


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigen-decomposition of H with degenerate levels grouped into clusters.

    ``energies`` are the raw ascending eigenvalues; ``levels`` holds the mean
    energy of each cluster and ``cluster_ids[i]`` the cluster of eigenvector i.
    """

    energies: np.ndarray
    vectors: np.ndarray
    cluster_tol: float
    cluster_ids: np.ndarray
    levels: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def snapped(self) -> np.ndarray:
        """Eigenvalues replaced by their cluster means."""
        return self.levels[self.cluster_ids]

    def projectors(self) -> list:
        out = []
        for c in range(len(self.levels)):
            v = self.vectors[:, self.cluster_ids == c]
            out.append(v @ v.conj().T)
        return out

    def to_eigen(self, x) -> np.ndarray:
        return self.vectors.conj().T @ as_matrix(x) @ self.vectors

    def to_fock(self, x) -> np.ndarray:
        return self.vectors @ np.asarray(x) @ self.vectors.conj().T


def default_cluster_tol(energies) -> float:
    return 1e-9 * max(1.0, float(np.abs(energies).max(initial=0.0)))


def spectral_decompose(H, cluster_tol=None) -> SpectralDecomposition:
    """Diagonalize H and group eigenvalues by greedy ascending merge.

    A new cluster starts whenever an eigenvalue exceeds the first member of
    the current cluster by more than ``cluster_tol``.
    """
    m = as_matrix(H)
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if hermiticity_defect(m) > 1e-10 * scale:
        raise NumericalError("spectral_decompose needs a Hermitian matrix")
    try:
        energies, vectors = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed (dim {m.shape[0]}, max entry {scale:.3e}): {exc}") from exc
    tol = default_cluster_tol(energies) if cluster_tol is None else float(cluster_tol)
    ids = np.empty(len(energies), dtype=int)
    current, start = 0, energies[0] if len(energies) else 0.0
    for i, e in enumerate(energies):
        if e - start > tol:
            current += 1
            start = e
        ids[i] = current
    levels = np.array([energies[ids == c].mean() for c in range(current + 1)])
    return SpectralDecomposition(energies, vectors, tol, ids, levels)


@dataclass(frozen=True)
class BohrFrequencySet:
    """Distinct Bohr frequencies with the (E, E') level pairs producing each."""

    frequencies: np.ndarray
    pairs: dict

    def __contains__(self, nu) -> bool:
        return bool(np.any(np.abs(self.frequencies - nu) <= 1e-9 * max(1.0, abs(nu))))


def bohr_frequencies(spec: SpectralDecomposition) -> BohrFrequencySet:
    lv = spec.levels
    diffs = (lv[:, None] - lv[None, :]).ravel()
    order = np.argsort(diffs, kind="stable")
    freqs, pairs = [], {}
    n = len(lv)
    for flat in order:
        nu = diffs[flat]
        if not freqs or nu - freqs[-1] > spec.cluster_tol:
            freqs.append(nu)
            pairs[len(freqs) - 1] = []
        pairs[len(freqs) - 1].append((float(lv[flat // n]), float(lv[flat % n])))
    return BohrFrequencySet(np.array(freqs), pairs)


def frequency_components(A, spec: SpectralDecomposition) -> list:
    """List of (nu, A_nu) in the Fock frame, with A_nu = sum_{E - E' = nu} P_E A P_E'."""
    at = spec.to_eigen(A)
    lv = spec.snapped
    nu = lv[:, None] - lv[None, :]
    out = []
    for f in bohr_frequencies(spec).frequencies:
        mask = np.abs(nu - f) <= spec.cluster_tol
        if np.any(mask & (at != 0)):
            out.append((float(f), spec.to_fock(np.where(mask, at, 0))))
    return out


def dressed_jump(A, filt: FilterFunction, spec: SpectralDecomposition, shift: float = 0.0) -> np.ndarray:
    """sum_nu f(nu) e^{shift*nu} A_nu in the Fock frame."""
    lv = spec.snapped
    nu = lv[:, None] - lv[None, :]
    return spec.to_fock(filt.scaled(nu, shift) * spec.to_eigen(A))


def _weight_params(sigma_E, spec):
    if np.isinf(sigma_E):
        return kernels.WEIGHT_ONE, 0.0
    if sigma_E == 0:
        return kernels.WEIGHT_INDICATOR, spec.cluster_tol
    if sigma_E < 0:
        raise ValueError("sigma_E must be nonnegative")
    return kernels.WEIGHT_GAUSSIAN, 1.0 / (8.0 * sigma_E**2)


def _pair_weight(delta, mode, param):
    if mode == kernels.WEIGHT_ONE:
        return np.ones_like(delta)
    if mode == kernels.WEIGHT_GAUSSIAN:
        return np.exp(-delta * delta * param)
    return (np.abs(delta) <= param).astype(float)


def _sech_half(x):
    """1 / (2 cosh x) without overflow."""
    e = np.exp(-np.abs(x))
    return e / (1.0 + e * e)


def coherent_coefficients(nu, beta, mode, param):
    """Weighted (i/2) tanh(beta*nu/4) factor of the coherent term, entrywise."""
    return 0.5j * np.tanh(beta * nu / 4) * _pair_weight(nu, mode, param)


def coherent_term(jumps, filt: FilterFunction, spec: SpectralDecomposition, sigma_E=np.inf) -> Operator | np.ndarray:
    """Hermitian operator B of the coherent part, in the Fock frame.

    In the eigenbasis ``B[i, k] = (i/2) tanh(beta (E_i - E_k)/4) w(E_i - E_k) (L^dag L)[i, k]``
    summed over jumps, with ``L = sum_nu f(nu) A_nu``.
    """
    mats = [as_matrix(a) for a in jumps]
    check_adjoint_closed(mats)
    lv = spec.snapped
    nu = lv[:, None] - lv[None, :]
    mode, param = _weight_params(sigma_E, spec)
    fv = filt(nu)
    b = np.zeros_like(nu, dtype=complex)
    for a in mats:
        lf = fv * spec.to_eigen(a)
        b += lf.conj().T @ lf
    b = spec.to_fock(coherent_coefficients(nu, filt.beta, mode, param) * b)
    defect = hermiticity_defect(b)
    if defect > 1e-10 * max(1.0, float(np.abs(b).max(initial=0.0))):
        raise NumericalError(f"coherent term is not Hermitian: defect {defect:.3e}")
    basis = next((a.basis for a in jumps if isinstance(a, Operator)), None)
    b = 0.5 * (b + b.conj().T)
    return Operator(basis, b, True, "B") if basis is not None else b


def check_adjoint_closed(mats, rtol=1e-12):
    for a in mats:
        target = a.conj().T
        scale = max(1.0, float(np.abs(a).max(initial=0.0)))
        if not any(np.abs(b - target).max(initial=0.0) <= rtol * scale for b in mats):
            raise ValueError("jump set is not closed under adjoints")


def ladder_jumps(basis: FockBasis) -> list:
    """{a_i, a_i^dag} for every mode."""
    out = []
    for i in range(basis.n_modes):
        out.append(ladder_operator(basis, i, "annihilate"))
        out.append(ladder_operator(basis, i, "create"))
    return out


def change_frame(m, v) -> np.ndarray:
    """Superoperator m acting in a frame with basis vectors v, expressed in the outer frame.

    If ``X_outer = v X v^dag`` then the result maps ``vec(X_outer)`` to
    ``vec(v m(X) v^dag)``.
    """
    d = v.shape[0]
    if np.array_equal(v, np.eye(d)):
        return np.array(m, dtype=complex)
    t = np.asarray(m).reshape(d, d, d, d, order="F")
    t = np.tensordot(v, t, axes=(1, 0))
    t = np.tensordot(v.conj(), t, axes=(1, 1))
    t = np.tensordot(t, v.conj(), axes=(2, 1))
    t = np.tensordot(t, v, axes=(2, 1))
    return t.transpose(1, 0, 2, 3).reshape(d * d, d * d, order="F")


@dataclass(frozen=True)
class GeneratorRecipe:
    """Inputs needed to rebuild a generator in either picture."""

    spec: SpectralDecomposition
    jumps_eigen: tuple
    filt: FilterFunction
    sigma_E: float


@dataclass(frozen=True)
class SuperOperator:
    basis: FockBasis | None
    matrix: np.ndarray
    picture: str
    beta: float
    sigma_E: float
    filter_label: str
    jumps_label: str
    label: str = ""
    recipe: GeneratorRecipe | None = field(default=None, compare=False, repr=False)
    eigen_matrix: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def d(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def apply(self, x) -> np.ndarray:
        return unvec(self.matrix @ vec(as_matrix(x)), self.d)

    def hermiticity_defect(self) -> float:
        return hermiticity_defect(self.matrix)

    def trace_defect(self) -> float:
        """|| L^dag(I) ||, zero for a trace-preserving Schrodinger generator."""
        ident = vec(np.eye(self.d))
        return float(np.linalg.norm(self.matrix.conj().T @ ident))

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


def _assemble(recipe: GeneratorRecipe, picture: str) -> np.ndarray:
    spec, filt = recipe.spec, recipe.filt
    beta = filt.beta
    lv = spec.snapped
    d = len(lv)
    nu = np.ascontiguousarray(lv[:, None] - lv[None, :])
    mode, param = _weight_params(recipe.sigma_E, spec)
    x = beta * nu / 4
    if picture == SCHRODINGER:
        shift, coef = 0.0, -expit(-2 * x)
    elif picture == SELFADJOINT:
        shift, coef = beta / 4, -_sech_half(x)
    else:
        raise ValueError(f"unknown picture '{picture}'")
    coef = coef * _pair_weight(nu, mode, param)
    fv = filt(nu)
    gv = filt.scaled(nu, shift)
    out = np.zeros((d * d, d * d), dtype=complex)
    g = np.zeros((d, d), dtype=complex)
    for at in recipe.jumps_eigen:
        lf = fv * at
        kernels.weighted_kron_accumulate(out, np.ascontiguousarray(gv * at), nu, mode, param)
        g += (lf.conj().T @ lf) * coef
    ident = np.eye(d)
    out += np.kron(ident, g) + np.kron(g.conj(), ident)
    return out


def _jump_list(jumps):
    mats, labels = [], []
    for k, a in enumerate(jumps):
        mats.append(as_matrix(a))
        labels.append(getattr(a, "label", "") or f"A{k}")
    return mats, labels


def build_generator(
    H,
    jumps,
    filt: FilterFunction,
    sigma_E=np.inf,
    picture: str = SCHRODINGER,
    cluster_tol=None,
    max_superop_dim: int = DEFAULT_MAX_SUPEROP_DIM,
    spec: SpectralDecomposition | None = None,
) -> SuperOperator:
    """Gibbs-sampler generator for H with the given jumps and filter.

    ``sigma_E`` interpolates between the Davies generator (0, only equal
    Bohr frequencies couple) and the fully dressed form (inf).
    """
    hm = as_matrix(H)
    d = hm.shape[0]
    if d * d > max_superop_dim:
        raise DimensionCapError(f"superoperator dimension {d * d} exceeds cap {max_superop_dim}")
    if spec is None:
        spec = spectral_decompose(hm, cluster_tol)
    lv = spec.snapped
    nus = (lv[:, None] - lv[None, :]).ravel()
    audit = kms_audit(filt, np.concatenate([default_grid(filt.beta), nus, -nus]))
    if not audit.passed:
        raise KMSViolationError(
            f"filter {filt.label} violates KMS by {audit.max_violation:.3e} at nu={audit.worst_nu:.6g}"
        )
    mats, labels = _jump_list(jumps)
    check_adjoint_closed(mats)
    recipe = GeneratorRecipe(spec, tuple(spec.to_eigen(a) for a in mats), filt, float(sigma_E))
    m_eig = _assemble(recipe, picture)
    basis = H.basis if isinstance(H, Operator) else None
    return SuperOperator(
        basis=basis,
        matrix=change_frame(m_eig, spec.vectors),
        picture=picture,
        beta=filt.beta,
        sigma_E=float(sigma_E),
        filter_label=filt.label,
        jumps_label=",".join(labels),
        label=getattr(H, "label", ""),
        recipe=recipe,
        eigen_matrix=m_eig,
    )


def similarity_factors(spec: SpectralDecomposition, beta: float) -> np.ndarray:
    """Column-stacked exponents log((p_i p_j)^{1/4}) up to a constant, p the Gibbs weights."""
    e = spec.snapped - spec.snapped.min()
    s = -beta * e / 4
    return vec(s[:, None] + s[None, :])


def selfadjoint_form(generator: SuperOperator, H=None, beta=None, check: bool = True, seed: int = 0) -> SuperOperator:
    """Self-adjoint (KMS / Hilbert-Schmidt) picture of a Schrodinger generator.

    Generators built here are rebuilt directly from their recipe, which
    avoids dividing by small Gibbs weights. Other generators are transformed
    by the diagonal similarity in the eigenbasis of ``H``.
    """
    if generator.picture == SELFADJOINT:
        return generator
    if generator.recipe is not None:
        recipe = generator.recipe
        m_eig = _assemble(recipe, SELFADJOINT)
        spec = recipe.spec
        b = recipe.filt.beta
    else:
        if H is None or beta is None:
            raise ValueError("H and beta are required for generators without a recipe")
        spec = spectral_decompose(H)
        b = float(beta)
        s = similarity_factors(spec, b)
        spread = float(s.max() - s.min())
        if spread > np.log(1e12):
            raise NumericalError(
                f"Gibbs-state similarity has condition number exp({spread:.1f}); lower beta or the cutoff"
            )
        m = change_frame(generator.matrix, spec.vectors.conj().T)
        m_eig = m * np.exp(s[None, :] - s[:, None])
    out = SuperOperator(
        basis=generator.basis,
        matrix=change_frame(m_eig, spec.vectors),
        picture=SELFADJOINT,
        beta=b,
        sigma_E=generator.sigma_E,
        filter_label=generator.filter_label,
        jumps_label=generator.jumps_label,
        label=generator.label,
        recipe=generator.recipe,
        eigen_matrix=m_eig,
    )
    if check:
        _check_selfadjoint(out, generator, spec, b, seed)
    return out


def _check_selfadjoint(hs: SuperOperator, schr: SuperOperator, spec, beta, seed):
    scale = max(1.0, float(np.abs(hs.matrix).max()))
    defect = hs.hermiticity_defect()
    if defect > 1e-8 * scale:
        raise NumericalError(f"self-adjoint generator has Hermiticity defect {defect:.3e}")
    # iota_2(L(X)) = Lcal(iota_2(X)) in the eigenframe, iota_2 = entrywise (p_i p_j)^{1/4}
    s = similarity_factors(spec, beta)
    factor = np.exp(s - s.max())
    rng = np.random.default_rng(seed)
    d = hs.d
    x = rng.normal(size=d * d) + 1j * rng.normal(size=d * d)
    schr_eig = schr.eigen_matrix if schr.eigen_matrix is not None else change_frame(schr.matrix, spec.vectors.conj().T)
    lhs = factor * (hs.eigen_matrix @ x)
    rhs = schr_eig @ (factor * x)
    ref = np.linalg.norm(np.abs(schr_eig) @ np.abs(factor * x)) + 1e-300
    if np.linalg.norm(lhs - rhs) > 1e-8 * ref:
        raise NumericalError("self-adjoint picture fails the similarity check")


def number_diagonal_generator(h, filt: FilterFunction, basis: FockBasis) -> SuperOperator:
    """Closed-form self-adjoint generator for H = h(N) on one mode, jumps {a, a^dag}.

    X -> a^dag g+ X g+ a + a g- X g- a^dag - {A+ + A-, X}/2 with
    g+(N) = f(h(N+1)-h(N)) e^{beta(h(N+1)-h(N))/4},
    g-(N) = f(h(N-1)-h(N)) e^{beta(h(N-1)-h(N))/4},
    A+ = a a^dag |f(h(N+1)-h(N))|^2 and A- = N |f(h(N-1)-h(N))|^2.
    On the truncated space a a^dag vanishes on the top level, so A+ does too.
    """
    if basis.n_modes != 1:
        raise ValueError("number-diagonal generator needs a single mode")
    m = basis.per_mode_cutoff
    n = np.arange(m + 1)
    hv = np.array([h(k) for k in range(m + 2)], dtype=float)
    up = hv[1:] - hv[:-1]  # h(n+1) - h(n), n = 0..M
    down = np.concatenate([[0.0], hv[:-2] - hv[1:-1]])  # h(n-1) - h(n), n >= 1
    beta = filt.beta
    g_plus = np.diag(filt.scaled(up, beta / 4))
    g_minus = np.diag(np.where(n > 0, filt.scaled(down, beta / 4), 0))
    a = ladder_operator(basis, 0, "annihilate").matrix
    ad = a.conj().T
    a_plus = np.diag(np.diag(a @ ad) * np.abs(filt(up)) ** 2)
    a_minus = np.diag(n * np.where(n > 0, np.abs(filt(down)) ** 2, 0))
    lp = ad @ g_plus
    lm = a @ g_minus
    d = m + 1
    ident = np.eye(d)
    anti = -0.5 * (a_plus + a_minus)
    mat = (
        np.kron(lp.conj(), lp)
        + np.kron(lm.conj(), lm)
        + np.kron(ident, anti)
        + np.kron(anti.conj(), ident)
    )
    return SuperOperator(basis, mat, SELFADJOINT, beta, np.inf, filt.label, "a,a^dag", "h(N) closed form")


@dataclass(frozen=True)
class DirichletResult:
    direct: float
    quadrature: float
    quad_error: float
    tail_bound: float

    @property
    def residual(self) -> float:
        return abs(self.direct - self.quadrature)

    @property
    def agree(self) -> bool:
        return self.residual <= 1e-6 * max(1.0, abs(self.direct))


def cosh_weight(t, beta):
    """1 / (beta cosh(2 pi t / beta)), integrating to 1/2 over the real line."""
    u = 2 * np.pi * np.abs(t) / beta
    e = np.exp(-u)
    return 2 * e / (beta * (1 + e * e))


def derivation_factors(spec: SpectralDecomposition, filt: FilterFunction):
    """Entrywise f(nu) and f(nu) e^{beta nu / 2} over eigenframe index pairs, plus nu."""
    lv = spec.snapped
    nu = lv[:, None] - lv[None, :]
    return filt(nu), filt.scaled(nu, filt.beta / 2), nu


def cosh_tail(beta, T) -> float:
    """Weight mass of |t| > T."""
    return 2 * np.arctan(np.exp(-2 * np.pi * T / beta)) / np.pi


def dirichlet_form(x, H, jumps, filt: FilterFunction, generator: SuperOperator | None = None,
                   rtol: float = 1e-10) -> DirichletResult:
    """Dirichlet form of x computed as -<x, L x> and as the derivation integral.

    The derivation is ``d_t x = L_t x - x M_t`` with, in the eigenframe,
    ``L_t = (f(nu) e^{i nu t}) * A`` and ``M_t = L_t * e^{beta nu/2}``; the
    integral is weighted by 1/(beta cosh(2 pi t / beta)).
    """
    beta = filt.beta
    if generator is None:
        generator = build_generator(H, jumps, filt, picture=SELFADJOINT)
    elif generator.picture != SELFADJOINT:
        generator = selfadjoint_form(generator, H, beta)
    xm = as_matrix(x)
    direct = float(-np.real(np.vdot(vec(xm), generator.matrix @ vec(xm))))

    spec = generator.recipe.spec if generator.recipe is not None else spectral_decompose(H)
    xe = spec.to_eigen(xm)
    fv, fw, nu = derivation_factors(spec, filt)
    mats, _ = _jump_list(jumps)
    eig_jumps = [spec.to_eigen(a) for a in mats]
    bound = sum((np.linalg.norm(np.abs(fv * a)) + np.linalg.norm(np.abs(fw * a))) ** 2 for a in eig_jumps)
    bound *= np.linalg.norm(xm, 2) ** 2

    def integrand(t):
        phase = np.exp(1j * nu * t)
        total = 0.0
        for a in eig_jumps:
            lt = fv * phase * a
            mt = fw * phase * a
            dx = lt @ xe - xe @ mt
            total += np.vdot(dx, dx).real
        return total * cosh_weight(t, beta)

    tol = rtol * max(1.0, abs(direct))
    T = beta / (2 * np.pi) * np.log(max(2.0, 4 * bound / (np.pi * max(tol, 1e-300))))
    val, err = integrate.quad(integrand, -T, T, epsabs=tol, epsrel=rtol, limit=500, points=[0.0])
    return DirichletResult(direct, float(val), float(err), float(bound * cosh_tail(beta, T)))
