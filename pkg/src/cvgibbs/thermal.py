"""Gibbs states, semigroup evolution, mixing times and free energies."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import NumericalError
from .fock import FockBasis, Operator, as_matrix, fock_projector
from .hamiltonians import (
    BoseHubbardParams,
    LatticeSpec,
    build_bose_hubbard,
    build_mott_truncation,
    build_superfluid_truncation,
    hopping_matrix,
    interaction,
    normal_mode_transform,
    quadratic_hamiltonian,
    superfluid_projector,
)
from .lindblad import SuperOperator, selfadjoint_form, similarity_factors, spectral_decompose, unvec, vec
from .spectral import spectral_gap

MAX_SIMILARITY_LOG = math.log(1e12)


@dataclass(frozen=True)
class GibbsState:
    basis: FockBasis | None
    matrix: np.ndarray = field(repr=False)
    beta: float
    log_partition: float
    label: str
    energies: np.ndarray = field(repr=False)
    vectors: np.ndarray = field(repr=False)
    probabilities: np.ndarray = field(repr=False)

    @property
    def partition_function(self) -> float:
        return math.exp(self.log_partition) if self.log_partition < 700 else math.inf


def gibbs_state(H, beta: float, label: str | None = None) -> GibbsState:
    """exp(-beta H)/Z computed with the ground energy shifted out."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    m = as_matrix(H)
    energies, vectors = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = np.exp(-beta * (energies - energies[0]))
    z = w.sum()
    p = w / z
    rho = (vectors * p) @ vectors.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    basis = H.basis if isinstance(H, Operator) else None
    lab = label if label is not None else getattr(H, "label", "")
    return GibbsState(basis, rho, beta, float(np.log(z) - beta * energies[0]), lab, energies, vectors, p)


def trace_distance(rho, sigma) -> float:
    """Unnormalized trace norm ||rho - sigma||_1."""
    return float(np.linalg.svd(as_matrix(rho) - as_matrix(sigma), compute_uv=False).sum())


def fixed_point_residual(generator: SuperOperator, gibbs) -> float:
    """||L(sigma)||_1 / ||L|| with the spectral norm of the generator matrix."""
    sigma = gibbs.matrix if isinstance(gibbs, GibbsState) else as_matrix(gibbs)
    out = generator.apply(sigma)
    return float(np.linalg.svd(out, compute_uv=False).sum() / generator.norm())


class Propagator:
    """Reusable exp(tL) for one generator.

    Uses the eigendecomposition of the self-adjoint picture when the Gibbs
    weights are well conditioned, and scipy's expm on the Schrodinger
    matrix otherwise (``method`` records which).
    """

    def __init__(self, generator: SuperOperator, H=None, beta=None):
        self.generator = generator
        self.d = generator.d
        self.method = "spectral"
        if generator.recipe is not None:
            spec = generator.recipe.spec
            b = generator.recipe.filt.beta
        elif H is not None and beta is not None:
            spec, b = spectral_decompose(H), float(beta)
        else:
            spec = None
        if spec is None or self._spread(spec, b) > MAX_SIMILARITY_LOG or generator.picture != "schrodinger":
            if generator.picture != "schrodinger":
                raise ValueError("Propagator needs a Schrodinger-picture generator")
            self.method = "expm"
            return
        hs = selfadjoint_form(generator, H, b, check=False)
        self.spec = spec
        s = similarity_factors(spec, b)
        self.factor = np.exp(s - s.max())
        vals, vecs = np.linalg.eigh(0.5 * (hs.eigen_matrix + hs.eigen_matrix.conj().T))
        self.vals, self.vecs = vals, vecs

    @staticmethod
    def _spread(spec, beta):
        s = similarity_factors(spec, beta)
        return float(s.max() - s.min()) / 2

    def evolve(self, rho0, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be nonnegative")
        rho0 = as_matrix(rho0)
        if self.method == "expm":
            out = unvec(expm(t * self.generator.matrix) @ vec(rho0), self.d)
        else:
            x0 = vec(self.spec.to_eigen(rho0)) / self.factor
            coeff = self.vecs.conj().T @ x0
            xt = self.vecs @ (np.exp(self.vals * t) * coeff)
            out = self.spec.to_fock(unvec(self.factor * xt, self.d))
        out = 0.5 * (out + out.conj().T)
        tr_err = abs(np.trace(out) - np.trace(rho0))
        if tr_err > 1e-9:
            raise NumericalError(f"trace drift {tr_err:.3e} at t={t}")
        low = np.linalg.eigvalsh(out)[0]
        if low < -1e-9:
            raise NumericalError(f"positivity drift {low:.3e} at t={t}")
        return out


def evolve(generator: SuperOperator, rho0, t: float, propagator: Propagator | None = None) -> np.ndarray:
    prop = propagator if propagator is not None else Propagator(generator)
    return prop.evolve(rho0, t)


def warm_start_constant(rho, gibbs: GibbsState, min_weight: float = 1e-250) -> float:
    """Smallest c with rho <= c sigma: top eigenvalue of sigma^{-1/2} rho sigma^{-1/2}."""
    p = gibbs.probabilities
    if p.min() <= min_weight:
        raise NumericalError(f"Gibbs state is numerically rank deficient (min weight {p.min():.3e})")
    r = gibbs.vectors.conj().T @ as_matrix(rho) @ gibbs.vectors
    inv = 1 / np.sqrt(p)
    m = inv[:, None] * r * inv[None, :]
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[-1])


@dataclass(frozen=True)
class MixingRecord:
    eps: float
    t_mix: float
    bound: float
    warm_start: float
    gap: float
    times: np.ndarray = field(repr=False)
    distances: np.ndarray = field(repr=False)
    monotone: bool = True

    @property
    def within_bound(self) -> bool:
        return self.t_mix <= self.bound

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "t_mix": self.t_mix,
            "bound": self.bound,
            "warm_start": self.warm_start,
            "gap": self.gap,
            "monotone": self.monotone,
            "within_bound": self.within_bound,
        }


def mixing_time(generator: SuperOperator, rho_ini, eps: float, gap: float | None = None, c: float | None = None,
                gibbs: GibbsState | None = None, propagator: Propagator | None = None,
                n_log: int = 50, rtol: float = 1e-9) -> MixingRecord:
    """First time the trace distance to the Gibbs state drops to eps.

    The distance is nonincreasing along the semigroup, so the crossing is
    found by bracketing and bisection.
    """
    if not 0 < eps < 2:
        raise ValueError("eps must lie in (0, 2)")
    prop = propagator if propagator is not None else Propagator(generator)
    if gibbs is None:
        spec = generator.recipe.spec
        gibbs = gibbs_state(spec.to_fock(np.diag(spec.snapped)), generator.beta)
    sigma = gibbs.matrix
    if gap is None:
        gap = spectral_gap(selfadjoint_form(generator, check=False)).gap
    if c is None:
        c = warm_start_constant(rho_ini, gibbs)
    bound = 2 * math.log(c / eps) / gap if gap > 0 else math.inf
    dist = lambda t: trace_distance(prop.evolve(rho_ini, t), sigma)

    if dist(0.0) <= eps:
        t_mix = 0.0
    else:
        hi = bound if math.isfinite(bound) and bound > 0 else 1.0
        for _ in range(80):
            if dist(hi) <= eps:
                break
            hi *= 2
        else:
            raise NumericalError("trace distance never reached eps")
        lo = 0.0
        while hi - lo > rtol * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if dist(mid) <= eps:
                hi = mid
            else:
                lo = mid
        t_mix = hi
    t_end = max(t_mix, bound if math.isfinite(bound) else t_mix, 1e-12)
    times = np.unique(np.concatenate([np.linspace(0, t_end, n_log), [t_mix]]))
    dists = np.array([dist(t) for t in times])
    monotone = bool(np.all(np.diff(dists) <= 1e-8))
    return MixingRecord(float(eps), float(t_mix), float(bound), float(c), float(gap), times, dists, monotone)


@dataclass(frozen=True)
class ConvergenceStudy:
    model: str
    grid: np.ndarray
    distances: np.ndarray
    slope: float
    strictly_decreasing: bool
    monotone: bool
    reference: str

    def rows(self) -> list:
        return [{"truncation": int(m), "trace_distance": float(d)} for m, d in zip(self.grid, self.distances)]


def truncation_convergence_study(model: str, lattice: LatticeSpec, params: BoseHubbardParams, grid, beta: float,
                                 basis: FockBasis, noise: float = 1e-10) -> ConvergenceStudy:
    """Trace distance between truncated and reference Gibbs states across truncations.

    The reference is the full Bose-Hubbard matrix on ``basis`` (a proxy for
    the untruncated model). The slope is a least-squares fit of
    log(distance) against the truncation level over points above ``noise``.
    """
    ref = gibbs_state(build_bose_hubbard(lattice, params, basis), beta)
    grid = np.asarray(list(grid), dtype=int)
    dists = []
    for m in grid:
        if model == "SF":
            h = build_superfluid_truncation(lattice, params, int(m), basis)
        elif model == "MI":
            h = build_mott_truncation(lattice, params, int(m), basis)
        else:
            raise ValueError(f"unknown model '{model}'")
        dists.append(trace_distance(gibbs_state(h, beta).matrix, ref.matrix))
    dists = np.array(dists)
    fit = dists > noise
    slope = float(np.polyfit(grid[fit], np.log(dists[fit]), 1)[0]) if fit.sum() >= 2 else float("nan")
    strict = bool(np.all(np.diff(dists) < 0))
    mono = bool(np.all(np.diff(dists) <= noise))
    label = f"H_BH on n_modes={basis.n_modes}, per_mode={basis.per_mode_cutoff}, total={basis.total_cutoff}"
    return ConvergenceStudy(model, grid, dists, slope, strict, mono, label)


def exact_free_energy(beta: float, H=None, energies=None) -> float:
    """-log Tr exp(-beta H) / beta, or the closed form for independent modes.

    With ``energies`` (single-particle energies eps_k) the result is
    ``sum_k log(1 - exp(-beta eps_k)) / beta``, which needs every eps_k > 0.
    """
    if (H is None) == (energies is None):
        raise ValueError("give exactly one of H or energies")
    if energies is not None:
        eps = np.asarray(energies, dtype=float)
        if np.any(eps <= 0):
            raise ValueError("closed form needs all mode energies positive")
        return float(np.sum(np.log1p(-np.exp(-beta * eps))) / beta)
    vals = np.linalg.eigvalsh(as_matrix(H))
    return float(-(np.log(np.sum(np.exp(-beta * (vals - vals[0])))) - beta * vals[0]) / beta)


def hoeffding_shots(value_range: float, eps: float, delta: float, grid_L: int) -> int:
    """Shots per grid point so that every point, hence the average, is within eps w.p. 1 - delta."""
    if value_range == 0:
        return 1
    return int(math.ceil(value_range**2 * math.log(2 * grid_L / delta) / (2 * eps**2)))


def hoeffding_envelope(value_range: float, total_samples: int, delta: float) -> float:
    """Half-width t with P(|mean - E| >= t) <= delta for the pooled sample mean."""
    return value_range * math.sqrt(math.log(2 / delta) / (2 * total_samples))


@dataclass(frozen=True)
class FreeEnergyResult:
    estimate: float
    riemann: float
    exact: float
    grid_L: int
    M: int | None
    M_prime: int | None
    shots: int | None
    seed: int | None
    hoeffding_shots: int
    envelope: float
    value_range: float
    points: list = field(repr=False)

    @property
    def error(self) -> float:
        return abs(self.estimate - self.exact)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "points"}
        out["error"] = self.error
        return out


def thermo_integration_estimate(H0, V, beta: float, grid_L: int, observable=None, path=None,
                                shots: int | None = None, seed: int | None = None,
                                target_eps: float = 1e-2, target_delta: float = 0.05,
                                workers: int = 1, M=None, M_prime=None) -> FreeEnergyResult:
    """Left Riemann sum of Tr(sigma(H0 + s*path) * observable) over s = k/L.

    ``path`` defaults to V and ``observable`` to V. The observable must be
    diagonal in the Fock basis; with ``shots`` each trace is replaced by the
    mean of ``shots`` computational-basis draws from the Gibbs state, using
    the seed sequence (seed, k) for grid point k.
    """
    if grid_L < 1:
        raise ValueError("grid_L must be >= 1")
    if shots is not None and seed is None:
        raise ValueError("sampling needs a seed")
    h0, v = as_matrix(H0), as_matrix(V)
    path = v if path is None else as_matrix(path)
    obs = v if observable is None else as_matrix(observable)
    values = np.real(np.diag(obs))
    sampling = shots is not None
    if sampling and np.abs(obs - np.diag(np.diag(obs))).max(initial=0.0) > 1e-12:
        raise ValueError("sampling needs an observable diagonal in the Fock basis")
    value_range = float(values.max() - values.min()) if len(values) else 0.0

    def task(k):
        s = k / grid_L
        g = gibbs_state(h0 + s * path, beta)
        mean = float(np.real(np.trace(g.matrix @ obs)))
        row = {"k": k, "s": s, "expectation": mean}
        if sampling:
            p = np.clip(np.real(np.diag(g.matrix)), 0, None)
            p /= p.sum()
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), k]))
            counts = rng.multinomial(shots, p)
            row["sampled"] = float(counts @ values / shots)
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(task, range(grid_L)))
    else:
        points = [task(k) for k in range(grid_L)]
    riemann = float(np.mean([p["expectation"] for p in points]))
    estimate = float(np.mean([p["sampled"] for p in points])) if sampling else riemann
    exact = exact_free_energy(beta, H=h0 + v) - exact_free_energy(beta, H=h0)
    envelope = hoeffding_envelope(value_range, grid_L * shots, target_delta) if sampling else 0.0
    return FreeEnergyResult(
        estimate, riemann, exact, grid_L, M, M_prime, shots, seed,
        hoeffding_shots(value_range, target_eps, target_delta, grid_L), envelope, value_range, points,
    )


def romberg_free_energy(H0, V, beta: float, levels: int = 6, observable=None, path=None) -> tuple:
    """Romberg-refined integral of Tr(sigma(H0 + s*path) * observable) over [0, 1].

    Trapezoid rules on 2^k panels (k = 0..levels) are combined by Richardson
    extrapolation. Returns (value, difference of the last two diagonal
    entries) so callers can judge convergence.
    """
    h0, v = as_matrix(H0), as_matrix(V)
    path = v if path is None else as_matrix(path)
    obs = v if observable is None else as_matrix(observable)
    cache = {}

    def g(s):
        if s not in cache:
            cache[s] = float(np.real(np.trace(gibbs_state(h0 + s * path, beta).matrix @ obs)))
        return cache[s]

    table = [[0.5 * (g(0.0) + g(1.0))]]
    for k in range(1, levels + 1):
        n = 2**k
        mids = sum(g((2 * j + 1) / n) for j in range(n // 2))
        row = [0.5 * table[-1][0] + mids / n]
        for m in range(1, k + 1):
            row.append(row[m - 1] + (row[m - 1] - table[-1][m - 1]) / (4**m - 1))
        table.append(row)
    return table[-1][-1], abs(table[-1][-1] - table[-2][-1])


@dataclass(frozen=True)
class FreeEnergyProblem:
    """Matrices of a Bose-Hubbard free-energy computation on one basis."""

    H0: np.ndarray
    V: np.ndarray
    path: np.ndarray
    observable: np.ndarray
    M: int
    M_prime: int | None


def free_energy_problem(lattice: LatticeSpec, params: BoseHubbardParams, basis: FockBasis, M: int,
                        M_prime: int | None = None) -> FreeEnergyProblem:
    """H0 = quadratic part, V = interaction, path from SF(M') or V itself, observable Pi_M V Pi_M."""
    eta, eta_p = params.onsite()
    h0 = quadratic_hamiltonian(basis, hopping_matrix(lattice, params.J, eta))
    v = interaction(basis, params.U, eta_p)
    if M_prime is None:
        path = v
    else:
        modes = normal_mode_transform(lattice, params.J, eta, basis)
        pi = superfluid_projector(modes, basis, M_prime)
        path = pi @ v @ pi
    pm = fock_projector(basis, M).matrix
    return FreeEnergyProblem(h0, v, path, pm @ v @ pm, M, M_prime)
