import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from lerouxgas import blocks, dynamics, equilibrium, lattice


def test_params_validation():
    with pytest.raises(ValueError):
        dynamics.DynamicsParams(8, 1.5)
    p = dynamics.DynamicsParams.from_beta(128, 0.4)
    assert p.sigma == pytest.approx(128 ** -0.4)


def test_bond_rate_examples():
    p = dynamics.DynamicsParams(100, 0.1)
    assert dynamics.bond_rate(lattice.from_string("++"), 0, p) == 0.0
    assert dynamics.bond_rate(lattice.from_string("-+"), 0, p) == pytest.approx(1200.0)
    assert dynamics.bond_rate(lattice.from_string("0-"), 0, p) == pytest.approx(1000.0)


def test_generator_matrix_small():
    states, G = dynamics.generator_matrix(dynamics.DynamicsParams(2, 0.5))
    assert states.shape == (9, 2)
    assert np.max(np.abs(np.asarray(G.sum(axis=1)).ravel())) == 0.0
    with pytest.raises(ValueError):
        dynamics.generator_matrix(dynamics.DynamicsParams(9, 0.5))


def test_gibbs_stationarity_exact():
    p = dynamics.DynamicsParams(3, 0.5)
    states, G = dynamics.generator_matrix(p)
    pi = dynamics.gibbs_vector(states, 1 / 3, 0.0)
    assert np.abs(G.T @ pi).sum() < 1e-12


def test_generator_restricts_to_hyperplanes():
    # conservation makes G block diagonal over (N, Z) classes
    p = dynamics.DynamicsParams(4, 0.3)
    states, G = dynamics.generator_matrix(p)
    N = (states == 0).sum(axis=1)
    Z = states.sum(axis=1)
    G = G.toarray()
    for c in range(len(states)):
        coupled = np.nonzero(G[c])[0]
        assert np.all(N[coupled] == N[c]) and np.all(Z[coupled] == Z[c])
        assert abs(G[c].sum()) < 1e-12


def test_simulate_t0_and_conservation():
    p = dynamics.DynamicsParams(16, 0.3)
    init = lattice.from_string("+0-+0-+0-+0-+0-+")
    rec0 = dynamics.simulate(p, init, T=0.0, seed=1)
    assert len(rec0.times) == 1 and np.array_equal(rec0.snapshots[0], init)
    rec = dynamics.simulate(p, init, T=0.5, snapshots=25, seed=1)
    ref = lattice.conserved(init)
    for snap in rec.snapshots:
        assert lattice.conserved(snap) == ref


def test_simulate_reproducible_and_stream_independent():
    p = dynamics.DynamicsParams(32, 0.3)
    init = equilibrium.sample_gibbs(1 / 3, 0.0, 32, np.random.default_rng(0))
    a = dynamics.simulate(p, init, T=0.3, snapshots=10, seed=7, replica=0)
    b = dynamics.simulate(p, init, T=0.3, snapshots=10, seed=7, replica=0)
    c = dynamics.simulate(p, init, T=0.3, snapshots=10, seed=7, replica=1)
    assert np.array_equal(a.snapshots, b.snapshots) and a.events == b.events
    assert not np.array_equal(a.snapshots, c.snapshots)


def test_absorbing_frozen_state():
    p = dynamics.DynamicsParams(8, 0.3)
    rec = dynamics.simulate(p, np.zeros(8, dtype=np.int8), T=1.0, snapshots=4, seed=0)
    assert rec.absorbing and rec.events == 0
    assert np.all(rec.snapshots == 0)


def test_event_budget_marks_incomplete():
    p = dynamics.DynamicsParams(32, 0.3)
    init = equilibrium.sample_gibbs(1 / 3, 0.0, 32, np.random.default_rng(3))
    rec = dynamics.simulate(p, init, T=1.0, snapshots=10, seed=3, max_events=50)
    assert not rec.complete and rec.events == 50


def test_rate_tree_consistency_after_many_events():
    p = dynamics.DynamicsParams(64, 0.3)
    init = equilibrium.sample_gibbs(1 / 3, 0.0, 64, np.random.default_rng(5))
    rec = dynamics.simulate(p, init, T=25.0, snapshots=5, seed=5)
    assert rec.events > 1_000_000
    assert rec.tree_drift <= 1e-9


def test_two_site_alternating_event_rate():
    # both bonds active: W = (2n + n^2 s) + n^2 s at n = 2, sigma = 0.25
    p = dynamics.DynamicsParams(2, 0.25)
    init = lattice.from_string("-+")
    swap = lattice.from_string("+-")
    W0 = dynamics.bond_rate(init, 0, p) + dynamics.bond_rate(init, 1, p)
    Wswap = dynamics.bond_rate(swap, 0, p) + dynamics.bond_rate(swap, 1, p)
    assert W0 == Wswap  # both orientations present on the 2-torus
    T = 400.0
    rec = dynamics.simulate(p, init, T=T, snapshots=1, seed=9)
    expected = W0 * T
    assert abs(rec.events - expected) < 4 * math.sqrt(expected)


def test_single_event_distribution_matches_generator(rng):
    p = dynamics.DynamicsParams(4, 0.5)
    init = lattice.from_string("+0-0")
    states, G = dynamics.generator_matrix(p)
    row = np.asarray(G[lattice.code_of(init)].todense()).ravel().copy()
    row[lattice.code_of(init)] = 0.0
    probs = row / row.sum()
    draws = 20_000
    counts = np.zeros_like(probs)
    for _ in range(draws):
        spins = init.copy()
        dynamics.step_once(p, spins, rng)
        counts[lattice.code_of(spins)] += 1
    for target in np.nonzero(probs)[0]:
        pj = probs[target]
        se = math.sqrt(pj * (1 - pj) / draws)
        assert abs(counts[target] / draws - pj) < 4 * se
    assert counts[probs == 0].sum() == 0


def test_dynkin_consistency_small_n():
    # E[f(X_T)] from replicas vs exp(T G) f applied by the exact matrix
    p = dynamics.DynamicsParams(4, 0.5)
    T = 0.1
    init = lattice.from_string("+0-0")
    states, G = dynamics.generator_matrix(p)
    f = states[:, 0].astype(float)  # spin at site 0
    exact = spla.expm_multiply(G * T, f)[lattice.code_of(init)]
    draws = 20_000
    vals = np.empty(draws)
    for r in range(draws):
        rec = dynamics.simulate(p, init, T=T, snapshots=1, seed=1234, replica=r)
        vals[r] = float(rec.snapshots[-1][0])
    se = float(np.std(vals, ddof=1) / math.sqrt(draws))
    assert abs(vals.mean() - exact) < 4 * se


def test_equilibrium_marginals_preserved():
    # product initial law stays stationary: site marginals at T within 4 s.e.,
    # with replicas (independent by construction) as the sampling unit
    rho, u = 0.4, 0.15
    n, reps, T = 128, 200, 0.2
    p = dynamics.DynamicsParams.from_beta(n, 0.4)
    fracs = np.zeros((reps, 3))
    for r in range(reps):
        init = equilibrium.sample_gibbs(rho, u, n, np.random.default_rng(1000 + r))
        rec = dynamics.simulate(p, init, T=T, snapshots=1, seed=77, replica=r)
        final = rec.snapshots[-1]
        for k, s in enumerate((-1, 0, 1)):
            fracs[r, k] = np.mean(final == s)
    marg = equilibrium.gibbs_marginal(rho, u)
    for k, prob in enumerate(marg):
        se = float(np.std(fracs[:, k], ddof=1) / math.sqrt(reps))
        assert abs(float(np.mean(fracs[:, k])) - prob) < 4 * se


def test_event_count_scaling():
    # expected events per unit time is Theta(n^3 sigma) along beta = 0.4
    ns = [128, 256, 512]
    events = []
    for n in ns:
        p = dynamics.DynamicsParams.from_beta(n, 0.4)
        init = equilibrium.sample_gibbs(1 / 3, 0.0, n, np.random.default_rng(n))
        rec = dynamics.simulate(p, init, T=0.05, snapshots=1, seed=42)
        events.append(rec.events)
    x = np.log([n**3 * float(n) ** -0.4 for n in ns])
    y = np.log(events)
    slope = np.polyfit(x, y, 1)[0]
    assert abs(slope - 1.0) < 0.15


def test_sample_initial_profile():
    spins = dynamics.sample_initial_profile(lambda x: np.ones_like(x), lambda x: np.zeros_like(x), 64, seed=0)
    assert np.all(spins == 0)
    with pytest.raises(ValueError, match="x ="):
        dynamics.sample_initial_profile(lambda x: 0.8 + 0 * x, lambda x: 0.4 + 0 * x, 64, seed=0)


def test_initial_profile_block_averages_converge():
    # law of large numbers: block field error halves (or better) from n=256 to 2048
    def rho0(x):
        return 0.4 + 0.2 * np.sin(2 * np.pi * x)

    def u0(x):
        return 0.1 * np.cos(2 * np.pi * x)

    kern = blocks.default_kernel()
    errs = {}
    for n in (256, 2048):
        spins = dynamics.sample_initial_profile(rho0, u0, n, seed=123)
        l = max(8, n // 32)
        eta_hat = blocks.grid_field((spins == 0).astype(float), l, kern, 0)
        xi_hat = blocks.grid_field(spins.astype(float), l, kern, 0)
        x = np.arange(n) / n
        errs[n] = float(np.mean(np.abs(eta_hat - rho0(x)) + np.abs(xi_hat - u0(x))))
    assert errs[2048] < errs[256] / 2


def test_record_save_load_roundtrip(tmp_path):
    p = dynamics.DynamicsParams(16, 0.3)
    init = equilibrium.sample_gibbs(1 / 3, 0.0, 16, np.random.default_rng(0))
    rec = dynamics.simulate(p, init, T=0.1, snapshots=5, seed=3)
    rec.save(tmp_path / "run", fmt="binary")
    back = dynamics.TrajectoryRecord.load(tmp_path / "run")
    assert np.array_equal(back.snapshots, rec.snapshots)
    assert back.events == rec.events
    rec.save(tmp_path / "runcsv", fmt="csv")
    header = (tmp_path / "runcsv" / "snapshots.csv").read_text().splitlines()[0]
    assert header == "time,site,spin"
