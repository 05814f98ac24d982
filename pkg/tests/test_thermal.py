import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvgibbs.errors import NumericalError
from cvgibbs.filters import metropolis
from cvgibbs.fock import build_basis
from cvgibbs.hamiltonians import (
    BoseHubbardParams,
    MeanFieldParams,
    build_mean_field,
    hopping_matrix,
    normal_mode_transform,
    quadratic_hamiltonian,
    square_lattice,
)
from cvgibbs.lindblad import SELFADJOINT, build_generator, ladder_jumps
from cvgibbs.thermal import (
    Propagator,
    evolve,
    exact_free_energy,
    fixed_point_residual,
    free_energy_problem,
    gibbs_state,
    hoeffding_envelope,
    hoeffding_shots,
    mixing_time,
    romberg_free_energy,
    thermo_integration_estimate,
    trace_distance,
    truncation_convergence_study,
    warm_start_constant,
)

BH = BoseHubbardParams(0.2, 1.0, eta=1.5, eta_prime=1.0)


def number_op(M):
    return np.diag(np.arange(M + 1).astype(complex))


def ket(d, n):
    x = np.zeros((d, d), dtype=complex)
    x[n, n] = 1.0
    return x


@pytest.fixture(scope="module")
def qou():
    basis = build_basis(1, 10)
    h = number_op(10)
    return h, build_generator(h, ladder_jumps(basis), metropolis(1.0))


def test_gibbs_geometric():
    g = gibbs_state(number_op(30), 1.0)
    p = np.real(np.diag(g.matrix))
    assert np.allclose(p[1:] / p[:-1], np.exp(-1.0), rtol=1e-12)
    assert g.partition_function == pytest.approx((1 - np.exp(-31)) / (1 - np.exp(-1)), rel=1e-13)


def test_gibbs_large_beta_is_ground_state():
    g = gibbs_state(number_op(5) + 0.5 * np.eye(6), 80.0)
    assert trace_distance(g.matrix, ket(6, 0)) <= 1e-14
    assert g.log_partition == pytest.approx(-40.0, abs=1e-12)


def test_gibbs_rejects_nonpositive_beta():
    with pytest.raises(ValueError):
        gibbs_state(number_op(3), 0.0)


def test_trace_distance_extremes():
    assert trace_distance(ket(3, 1), ket(3, 1)) == 0
    assert trace_distance(ket(3, 0), ket(3, 2)) == pytest.approx(2.0)


def test_fixed_point_residual_mean_field():
    basis = build_basis(1, 10)
    h = build_mean_field(MeanFieldParams(0.0, 2.0, 0.05), basis)
    gen = build_generator(h, ladder_jumps(basis), metropolis(1.0), sigma_E=1.0)
    assert fixed_point_residual(gen, gibbs_state(h, 1.0)) <= 1e-12


def test_gibbs_is_kernel_direction():
    basis = build_basis(1, 8)
    h = build_mean_field(MeanFieldParams(0.0, 2.0, 0.05), basis)
    hs = build_generator(h, ladder_jumps(basis), metropolis(1.0), picture=SELFADJOINT)
    vals, vecs = np.linalg.eigh(hs.matrix)
    kernel = vecs[:, -1]
    g = gibbs_state(h, 1.0)
    root = (g.vectors * np.sqrt(g.probabilities)) @ g.vectors.conj().T
    assert abs(np.vdot(root.reshape(-1, order="F"), kernel)) >= 1 - 1e-8


def test_evolve_at_zero(qou):
    _, gen = qou
    rho = ket(11, 3)
    assert np.abs(evolve(gen, rho, 0.0) - rho).max() <= 1e-12


def test_evolve_long_time(qou):
    h, gen = qou
    out = evolve(gen, ket(11, 3), 200.0)
    assert trace_distance(out, gibbs_state(h, 1.0).matrix) <= 1e-8


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_semigroup_property(t1, t2):
    basis = build_basis(1, 6)
    gen = build_generator(number_op(6), ladder_jumps(basis), metropolis(1.0))
    prop = Propagator(gen)
    rho = ket(7, 2)
    two_step = prop.evolve(prop.evolve(rho, t1), t2)
    assert np.abs(prop.evolve(rho, t1 + t2) - two_step).max() <= 1e-8


def test_spectral_and_expm_paths_agree(qou):
    _, gen = qou
    bare = dataclasses.replace(gen, recipe=None)
    fallback = Propagator(bare)
    assert fallback.method == "expm"
    assert Propagator(gen).method == "spectral"
    rho = ket(11, 4)
    assert np.abs(fallback.evolve(rho, 1.7) - evolve(gen, rho, 1.7)).max() <= 1e-10


def test_evolve_rejects_negative_time(qou):
    with pytest.raises(ValueError):
        evolve(qou[1], ket(11, 0), -1.0)


def test_warm_start_constants():
    h = number_op(12)
    g = gibbs_state(h, 1.0)
    assert warm_start_constant(g.matrix, g) == pytest.approx(1.0, abs=1e-12)
    assert warm_start_constant(ket(13, 0), g) == pytest.approx(g.partition_function, abs=1e-10)
    mixed = np.eye(13) / 13
    assert warm_start_constant(mixed, g) == pytest.approx(1 / (13 * g.probabilities.min()), rel=1e-10)


def test_warm_start_rank_deficient():
    g = gibbs_state(number_op(40), 30.0)
    with pytest.raises(NumericalError):
        warm_start_constant(ket(41, 0), g)


def test_mixing_zero_when_already_close(qou):
    h, gen = qou
    g = gibbs_state(h, 1.0)
    start = trace_distance(ket(11, 0), g.matrix)
    rec = mixing_time(gen, ket(11, 0), min(1.5, start + 0.01), gibbs=g)
    assert rec.t_mix == 0.0


def test_mixing_from_excited_state(qou):
    h, gen = qou
    rec = mixing_time(gen, ket(11, 2), 1e-3)
    assert 0 < rec.t_mix <= rec.bound
    assert rec.monotone
    assert trace_distance(evolve(gen, ket(11, 2), rec.t_mix), gibbs_state(h, 1.0).matrix) <= 1e-3 + 1e-9


def test_mixing_monotone_in_eps(qou):
    _, gen = qou
    a = mixing_time(gen, ket(11, 0), 0.02)
    b = mixing_time(gen, ket(11, 0), 0.01)
    assert b.t_mix > a.t_mix
    assert b.bound > a.bound


def test_sf_convergence_study():
    lat = square_lattice(1, 2)
    basis = build_basis(2, 6, total_cutoff=6)
    study = truncation_convergence_study("SF", lat, BH, range(0, 7), 1.0, basis)
    assert study.strictly_decreasing
    assert study.distances[-1] <= 1e-12
    kappa = 1.0 * (1.5 - 2 * 0.2)
    assert study.slope <= -kappa / 4


def test_mi_convergence_study():
    lat = square_lattice(1, 2)
    basis = build_basis(2, 6, total_cutoff=6)
    study = truncation_convergence_study("MI", lat, BH, range(1, 7), 1.0, basis)
    assert study.strictly_decreasing
    assert study.distances[-1] <= 1e-12


def test_convergence_study_unknown_model():
    with pytest.raises(ValueError):
        truncation_convergence_study("XX", square_lattice(1, 2), BH, [1], 1.0, build_basis(2, 2, total_cutoff=2))


def test_free_energy_single_mode():
    assert exact_free_energy(1.0, energies=[1.0]) == pytest.approx(math.log(1 - math.exp(-1)), rel=1e-15)
    assert exact_free_energy(1.0, energies=[1.0]) == pytest.approx(-0.45868, abs=1e-5)


def test_free_energy_per_mode_truncation_exact_tail():
    # on a product basis in the normal-mode frame the truncation error is exactly
    # -sum_k log(1 - e^{-beta eps_k (M+1)}) / beta
    eps = np.array([2.0, 4.0])
    M = 6
    basis = build_basis(2, M)
    h = np.diag((basis.occupations @ eps).astype(complex))
    err = exact_free_energy(1.0, H=h) - exact_free_energy(1.0, energies=eps)
    assert err == pytest.approx(-np.sum(np.log1p(-np.exp(-eps * (M + 1)))), rel=1e-6)


@pytest.mark.parametrize("N", [6, 10])
def test_free_energy_dense_vs_closed_form(N):
    lat = square_lattice(1, 2)
    basis = build_basis(2, N, total_cutoff=N)
    h = quadratic_hamiltonian(basis, hopping_matrix(lat, 1.0, 3.0))
    eps = normal_mode_transform(lat, 1.0, 3.0, basis).energies
    err = exact_free_energy(1.0, H=h) - exact_free_energy(1.0, energies=eps)
    # states dropped by a total cutoff have some mode above ceil((N+1)/n)
    tail = np.sum(np.exp(-eps * math.ceil((N + 1) / len(eps))))
    assert 0 <= err <= -math.log1p(-tail)


def test_free_energy_needs_positive_modes():
    with pytest.raises(ValueError):
        exact_free_energy(1.0, energies=[1.0, 0.0])
    with pytest.raises(ValueError):
        exact_free_energy(1.0)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=2, max_size=6), st.floats(0.2, 3.0))
def test_free_energy_beta_scaling(levels, beta):
    # dF/dbeta = S/beta^2 >= 0, so F(2 beta) >= F(beta) with equality iff the spectrum is trivial
    h = np.diag(np.array([0.0] + levels, dtype=complex))
    f1, f2 = exact_free_energy(beta, H=h), exact_free_energy(2 * beta, H=h)
    assert f2 >= f1 - 1e-12


def test_free_energy_beta_scaling_edge_cases():
    assert exact_free_energy(2.0, energies=[1.0]) > exact_free_energy(1.0, energies=[1.0])
    one_level = np.array([[0.7]])
    assert exact_free_energy(2.0, H=one_level) == exact_free_energy(1.0, H=one_level) == pytest.approx(0.7)


def test_thermo_integration_zero_interaction():
    h0 = number_op(5)
    res = thermo_integration_estimate(h0, np.zeros((6, 6)), 1.0, 10)
    assert res.estimate == 0
    assert res.exact == 0


def test_thermo_integration_needs_seed():
    with pytest.raises(ValueError):
        thermo_integration_estimate(number_op(3), number_op(3), 1.0, 4, shots=10)


@pytest.fixture(scope="module")
def bh6():
    lat = square_lattice(1, 2)
    basis = build_basis(2, 6, total_cutoff=6)
    return free_energy_problem(lat, BH, basis, 6)


def test_sampled_estimate_approaches_riemann(bh6):
    res = thermo_integration_estimate(bh6.H0, bh6.V, 1.0, 20, observable=bh6.observable, path=bh6.path,
                                      shots=10**6, seed=5)
    vals = np.real(np.diag(bh6.observable))
    sigma_bound = (vals.max() - vals.min()) / 2 / math.sqrt(20 * 10**6)
    assert abs(res.estimate - res.riemann) <= 3 * sigma_bound


def test_sampling_is_reproducible(bh6):
    a = thermo_integration_estimate(bh6.H0, bh6.V, 1.0, 8, observable=bh6.observable, shots=100, seed=9)
    b = thermo_integration_estimate(bh6.H0, bh6.V, 1.0, 8, observable=bh6.observable, shots=100, seed=9, workers=3)
    assert a.estimate == b.estimate


def test_riemann_error_is_first_order(bh6):
    errs = []
    grids = [25, 50, 100, 200]
    for L in grids:
        errs.append(thermo_integration_estimate(bh6.H0, bh6.V, 1.0, L, observable=bh6.observable).error)
    slope = np.polyfit(np.log(grids), np.log(errs), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.1)


def test_romberg_matches_exact(bh6):
    value, diff = romberg_free_energy(bh6.H0, bh6.V, 1.0, levels=6, observable=bh6.V)
    exact = exact_free_energy(1.0, H=bh6.H0 + bh6.V) - exact_free_energy(1.0, H=bh6.H0)
    assert abs(value - exact) <= 1e-6
    assert diff <= 1e-6


def test_hoeffding_counts():
    assert hoeffding_shots(0.0, 0.01, 0.05, 10) == 1
    n = hoeffding_shots(28.0, 0.01, 0.05, 200)
    assert n == math.ceil(28.0**2 * math.log(2 * 200 / 0.05) / (2 * 0.01**2))
    assert hoeffding_envelope(28.0, n * 200, 0.05) < 0.01
