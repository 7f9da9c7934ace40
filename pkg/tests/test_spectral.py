import math

import numpy as np
import pytest

from lerouxgas import equilibrium, lattice, spectral


def test_two_state_hyperplane():
    m = spectral.build_hyperplane(2, 1, 1)
    assert m.dim == 2
    assert np.array_equal(m.K.toarray(), np.array([[-1.0, 1.0], [1.0, -1.0]]))
    assert spectral.spectral_gap(m) == pytest.approx(2.0, abs=1e-12)


def test_six_state_hyperplane_rows_sum_zero():
    m = spectral.build_hyperplane(3, 1, 0)
    assert m.dim == 6
    assert np.max(np.abs(np.asarray(m.K.sum(axis=1)).ravel())) < 1e-14


@pytest.mark.parametrize("l", range(2, 7))
def test_generator_symmetric_nonnegative_offdiag(l):
    for (N, Z) in equilibrium.feasible_pairs(l):
        m = spectral.build_hyperplane(l, N, Z)
        K = m.K.toarray()
        assert np.allclose(K, K.T, atol=0)
        off = K - np.diag(np.diag(K))
        assert np.all(off >= 0)
        assert np.max(np.abs(K.sum(axis=1))) < 1e-14


def test_build_rejects_infeasible_and_oversized():
    with pytest.raises(ValueError, match="infeasible"):
        spectral.build_hyperplane(3, 1, 1)
    with pytest.raises(ValueError, match="exceeds"):
        spectral.build_hyperplane(12, 4, 0, max_dim=100)


def test_dirichlet_form_examples(rng):
    m = spectral.build_hyperplane(2, 1, 1)
    assert spectral.dirichlet_form(m, np.ones(2)) == 0.0
    assert spectral.dirichlet_form(m, np.array([1.0, -1.0])) == pytest.approx(2.0)
    for l, N, Z in [(4, 1, 1), (5, 2, 1)]:
        m = spectral.build_hyperplane(l, N, Z)
        for _ in range(5):
            f = rng.normal(size=m.dim)
            quad = float(-f @ (m.K @ f)) / m.dim
            assert spectral.dirichlet_form(m, f) == pytest.approx(quad, abs=1e-12)


def test_entropy_functional():
    m = spectral.build_hyperplane(4, 2, 0)
    d = m.dim
    assert spectral.entropy_functional(m, np.ones(d)) == 0.0
    point = np.zeros(d)
    point[3] = d
    assert spectral.entropy_functional(m, point) == pytest.approx(math.log(d), rel=1e-12)
    h = np.ones(d)
    h[0], h[1] = 1.5, 0.5
    assert spectral.entropy_functional(m, h) > 0
    with pytest.raises(ValueError):
        spectral.entropy_functional(m, -np.ones(d))
    with pytest.raises(ValueError):
        spectral.entropy_functional(m, 2 * np.ones(d))


@pytest.mark.parametrize("l", range(2, 7))
def test_gap_equals_single_particle_walk_gap(l):
    expected = spectral.segment_walk_gap(l)
    for (N, Z) in equilibrium.feasible_pairs(l):
        m = spectral.build_hyperplane(l, N, Z)
        gap = spectral.spectral_gap(m)
        if gap is None:
            assert m.dim == 1
            continue
        assert abs(gap - expected) < 1e-10


def test_gap_l2_window():
    for l in range(3, 9):
        g = spectral.segment_walk_gap(l) * l * l
        assert 7.8 <= g <= 10.4


def test_gap_multiplicity_reported():
    gap, mult = spectral.spectral_gap(spectral.build_hyperplane(2, 1, 1), return_multiplicity=True)
    assert gap == pytest.approx(2.0) and mult == 1
    gap, mult = spectral.spectral_gap(spectral.build_hyperplane(4, 2, 0), return_multiplicity=True)
    assert gap == pytest.approx(spectral.segment_walk_gap(4), abs=1e-10)
    assert mult >= 1
    assert spectral.spectral_gap(spectral.build_hyperplane(3, 3, 0)) is None  # one-point hyperplane


def test_lsi_two_state_search_matches_scan():
    m = spectral.build_hyperplane(2, 1, 1)
    t = np.linspace(1e-6, 2 - 1e-6, 200001)
    H = 0.5 * (t * np.log(t) + (2 - t) * np.log(2 - t))
    D = 0.5 * (np.sqrt(t) - np.sqrt(2 - t)) ** 2
    keep = D > 1e-12
    scan = float(np.max(H[keep] / D[keep]))
    ratio, h = spectral.lsi_ratio_search(m, trials=6, seed=0)
    assert abs(ratio - scan) < 1e-3
    assert np.all(h >= 0) and np.mean(h) == pytest.approx(1.0, abs=1e-9)


def test_lsi_ratio_band_small_l():
    ratios = {}
    for l in (3, 4, 5):
        N = l // 3
        for Z in (0, 1):
            if not lattice.feasible(l, N, Z):
                continue
            m = spectral.build_hyperplane(l, N, Z)
            ratio, _ = spectral.lsi_ratio_search(m, trials=6, seed=3)
            ratios[(l, N, Z)] = ratio / l**2
    vals = list(ratios.values())
    assert max(vals) / min(vals) < 3.0


def test_random_densities_never_violate_searched_constant(rng):
    m = spectral.build_hyperplane(5, 1, 0)
    ratio, _ = spectral.lsi_ratio_search(m, trials=8, seed=1)
    aleph = ratio / 25.0
    for _ in range(500):
        h = rng.dirichlet(np.ones(m.dim)) * m.dim
        H = spectral.entropy_functional(m, h)
        D = spectral.dirichlet_form(m, np.sqrt(h))
        assert H <= aleph * 25.0 * D * (1 + 1e-9) + 1e-12


def test_entropy_decomposition_identity_exact(rng):
    for l, N, Z in [(4, 2, 0), (5, 2, 1), (6, 2, 0)]:
        m = spectral.build_hyperplane(l, N, Z)
        for _ in range(10):
            h = rng.dirichlet(np.ones(m.dim)) * m.dim
            lhs, rhs = spectral.entropy_decomposition_sides(m, h)
            assert abs(lhs - rhs) < 1e-12


def test_conditional_moment_gamma_zero_is_one():
    assert spectral.conditional_exp_moment(6, 2, 0, equilibrium.OBS_PSI, 0.0, 0) == 1.0
    assert spectral.conditional_exp_moment(6, 2, 0, equilibrium.OBS_PSI, 0.0, 1) == 1.0


def test_conditional_moment_monotone_in_gamma():
    vals = [
        spectral.conditional_exp_moment(8, 3, 1, equilibrium.OBS_PSI, g, 1)
        for g in (0.0, 0.2, 0.5, 1.0)
    ]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_certified_gamma0_small_l():
    g8 = spectral.certify_gamma0(8, equilibrium.OBS_PSI)
    g10 = spectral.certify_gamma0(10, equilibrium.OBS_PSI)
    assert g8 > 0 and g10 > 0
    # the certificate is tight: slightly above it, some hyperplane exceeds sqrt 2
    worst = max(
        spectral.max_conditional_moment(8, equilibrium.OBS_PSI, g8 * 1.05, mode)
        for mode in (0, 1)
    )
    assert worst > math.sqrt(2.0)
    worst_at = max(
        spectral.max_conditional_moment(8, equilibrium.OBS_PSI, g8, mode) for mode in (0, 1)
    )
    assert worst_at <= math.sqrt(2.0) + 1e-9


def test_weight_functions_means():
    b0, b1 = spectral._weight_functions()
    s = np.linspace(0, 1, 200001)
    assert np.trapezoid(b0(s), s) == pytest.approx(0.0, abs=1e-9)
    assert np.trapezoid(b1(s), s) == pytest.approx(1.0, abs=1e-9)
