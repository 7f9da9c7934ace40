"""Exact numerics on microcanonical hyperplanes of a segment.

The symmetric stirring generator on a segment of l sites with free boundary
swaps unequal neighbours at rate one and conserves the colour counts, so it
restricts to each hyperplane Omega^l_{N,Z}.  The uniform measure there is
reversible (the generator matrix is symmetric).  This module builds those
matrices exactly and measures: the spectral gap, the entropy-versus-Dirichlet
(logarithmic Sobolev) ratio, the entropy decomposition identity used by the
induction on l, and conditional exponential moments of kernel-weighted block
observables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import equilibrium, lattice
from .blocks import default_kernel


@dataclass
class HyperplaneModel:
    """Enumerated hyperplane with its symmetric exchange generator."""

    l: int
    N: int
    Z: int
    states: np.ndarray  # (dim, l) int8
    K: sp.csr_matrix  # free-boundary stirring generator, symmetric

    @property
    def dim(self) -> int:
        return self.states.shape[0]


def build_hyperplane(l: int, N: int, Z: int, max_dim: int = 200_000) -> HyperplaneModel:
    """Exact sparse generator on Omega^l_{N,Z}; refuses oversized hyperplanes."""
    size = equilibrium.hyperplane_size(l, N, Z)
    if size == 0:
        raise ValueError(f"infeasible (N, Z) = ({N}, {Z}) on {l} sites")
    if size > max_dim:
        raise ValueError(f"hyperplane dimension {size} exceeds the limit {max_dim}")
    states = equilibrium.enumerate_hyperplane(l, N, Z)
    # radix code -> row index lookup
    codes = (states.astype(np.int64) + 1) @ (3 ** np.arange(l, dtype=np.int64))
    lookup = -np.ones(3**l, dtype=np.int64)
    lookup[codes] = np.arange(size)
    rows, cols, data = [], [], []
    diag = np.zeros(size)
    idx = np.arange(size)
    for j in range(l - 1):
        dj = states[:, j].astype(np.int64)
        djp = states[:, j + 1].astype(np.int64)
        active = dj != djp
        target_codes = codes + (djp - dj) * 3**j + (dj - djp) * 3 ** (j + 1)
        t = lookup[target_codes[active]]
        rows.append(idx[active])
        cols.append(t)
        data.append(np.ones(int(active.sum())))
        diag -= active.astype(float)
    rows.append(idx)
    cols.append(idx)
    data.append(diag)
    K = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsr()
    return HyperplaneModel(l=l, N=N, Z=Z, states=states, K=K)


def dirichlet_form(m: HyperplaneModel, f: np.ndarray) -> float:
    """(1/2) sum_bonds E[(f(swapped) - f)^2] under the uniform measure.

    Equals -<f, K f> with the uniform inner product.
    """
    return float(-f @ (m.K @ f)) / m.dim


def entropy_functional(m: HyperplaneModel, h: np.ndarray) -> float:
    """E(h log h) of a density (h >= 0, E h = 1), with 0 log 0 = 0."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValueError("density must be nonnegative")
    mean = float(np.mean(h))
    if abs(mean - 1.0) > 1e-9:
        raise ValueError(f"density must have uniform-measure mean 1 (got {mean})")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(h > 0, h * np.log(np.maximum(h, 1e-300)), 0.0)
    return float(np.mean(terms))


def spectral_gap(m: HyperplaneModel, return_multiplicity: bool = False):
    """Smallest nonzero eigenvalue of -K (None on one-point hyperplanes)."""
    if m.dim == 1:
        return (None, 0) if return_multiplicity else None
    if m.dim <= 1500:
        vals = np.linalg.eigvalsh(-m.K.toarray())
    else:
        k = min(8, m.dim - 1)
        vals = spla.eigsh(-m.K.asfptype(), k=k, which="SM", return_eigenvectors=False)
        vals = np.sort(vals)
    pos = vals[vals > 1e-9]
    gap = float(pos[0])
    if return_multiplicity:
        mult = int(np.sum(np.abs(pos - gap) < 1e-8))
        return gap, mult
    return gap


def segment_walk_gap(l: int) -> float:
    """Spectral gap 2(1 - cos(pi/l)) of the rate-1 walk on the free segment."""
    return 2.0 * (1.0 - math.cos(math.pi / l))


# ---------------------------------------------------------------------------
# log-Sobolev ratio
# ---------------------------------------------------------------------------

def _lsi_ratio_of_g(m: HyperplaneModel, g: np.ndarray) -> float:
    """H(h)/D(sqrt h) for h = g^2 / E g^2 (scale invariant in g)."""
    s = float(np.mean(g * g))
    h = g * g / s
    D = dirichlet_form(m, g / math.sqrt(s))
    if D < 1e-14:
        return 0.0
    return entropy_functional(m, h) / D


def lsi_ratio_search(
    m: HyperplaneModel, trials: int = 8, steps: int = 400, seed: int = 0
):
    """Estimate sup_h H(h)/D(sqrt h) by random restarts plus local ascent.

    Densities are parametrized as h = g^2/E(g^2); restarts draw h from a
    Dirichlet distribution and L-BFGS maximizes the (nonconvex) ratio.
    Returns (best ratio, maximizing density).
    """
    rng = np.random.default_rng(seed)
    d = m.dim
    if d == 1:
        return 0.0, np.ones(1)
    K = m.K

    def neg_ratio_and_grad(g):
        s = float(g @ g) / d
        sqrt_s = math.sqrt(s)
        f = g / sqrt_s  # E f^2 = 1
        h = f * f
        with np.errstate(divide="ignore", invalid="ignore"):
            logh = np.where(h > 0, np.log(np.maximum(h, 1e-300)), 0.0)
        H = float(np.mean(h * logh))
        Kf = K @ f
        D = float(-f @ Kf) / d
        if D < 1e-13:
            return 0.0, np.zeros_like(g)
        # dH/df and dD/df at fixed normalization, then project out the
        # rescaling direction (ratio is scale invariant)
        dH = 2.0 * f * (logh + 1.0) / d
        dD = -2.0 * Kf / d
        grad_f = (dH * D - H * dD) / (D * D)
        grad_f -= f * float(f @ grad_f) / d  # tangent to the sphere E f^2 = 1
        return -(H / D), -grad_f / sqrt_s

    best = -np.inf
    best_h = np.ones(d)
    for trial in range(trials):
        if trial == 0:
            h0 = rng.dirichlet(np.ones(d)) * d
        elif trial == 1:
            h0 = np.full(d, 1e-3)
            h0[rng.integers(d)] = d - 1e-3 * (d - 1)
        else:
            h0 = rng.dirichlet(np.full(d, rng.uniform(0.2, 2.0))) * d
        g0 = np.sqrt(h0 + 1e-12)
        res = scipy.optimize.minimize(
            neg_ratio_and_grad, g0, jac=True, method="L-BFGS-B",
            options={"maxiter": steps},
        )
        cand = -float(res.fun)
        if cand > best:
            best = cand
            s = float(np.mean(res.x**2))
            best_h = res.x**2 / s
    return best, best_h


def entropy_decomposition_sides(m: HyperplaneModel, h: np.ndarray) -> tuple[float, float]:
    """Both sides of the conditional entropy decomposition over site 1.

    H(h) = E^1[ q(c) * H_c(h / q(c)) ] + E^1[ q(c) log q(c) ] where q(c) is
    the conditional mean of h given the first spin equals c and H_c the
    conditional entropy.  Holds exactly for any density; returns (lhs, rhs).
    """
    lhs = entropy_functional(m, h)
    rhs = 0.0
    first = m.states[:, 0]
    for c in (-1, 0, 1):
        mask = first == c
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        p_c = cnt / m.dim
        q_c = float(np.mean(h[mask]))
        if q_c <= 0:
            continue
        h1 = h[mask] / q_c
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(h1 > 0, h1 * np.log(np.maximum(h1, 1e-300)), 0.0)
        rhs += p_c * q_c * float(np.mean(terms))
        rhs += p_c * q_c * math.log(q_c)
    return lhs, rhs


# ---------------------------------------------------------------------------
# conditional exponential moments of weighted block observables
# ---------------------------------------------------------------------------

def _weight_functions():
    """Canonical b functions on [0, 1]: the kernel (mean 1) and its derivative (mean 0)."""
    kern = default_kernel()

    def b_mean_one(s):
        return 2.0 * kern.a(2.0 * np.asarray(s, dtype=float) - 1.0)

    def b_mean_zero(s):
        return kern.da(2.0 * np.asarray(s, dtype=float) - 1.0)

    return b_mean_zero, b_mean_one


def weighted_statistics(l: int, v: equilibrium.LocalObservable, mode: int):
    """Per-configuration statistic of the exponential moment lemma, all of 3^l.

    mode 0: <b0, v>_l with the mean-zero weight b0;
    mode 1: <b1, v>_l - Ups(<b1, w>_l) with the mean-one weight b1, w the
    conserved pair field and Ups the equilibrium expectation of v (clamped to
    the domain triangle).
    Returns (values, group) where group[c] indexes the (N, Z) class of
    configuration c.
    """
    if v.window != 2:
        raise ValueError("statistics defined for window-2 observables")
    configs = lattice.all_configurations(l)
    b0, b1 = _weight_functions()
    bond_w = (b0 if mode == 0 else b1)((np.arange(l - 1) + 1.0) / l)
    site_w = b1((np.arange(l) + 0.5) / l)
    left = configs[:, :-1].astype(np.int64) + 1
    right = configs[:, 1:].astype(np.int64) + 1
    vvals = v.table[left, right]
    stat = vvals @ bond_w / l
    if mode == 1:
        eta = (configs == 0).astype(float)
        xi = configs.astype(float)
        rho_w = eta @ site_w / l
        u_w = xi @ site_w / l
        rc, uc, _ = equilibrium.clamp_to_domain(rho_w, u_w)
        if v.name == "psi":
            ups = equilibrium.upsilon_psi(rc, uc)
        elif v.name == "phi":
            ups = equilibrium.upsilon_phi(rc, uc)
        else:
            raise ValueError("mode 1 supports the psi and phi observables")
        stat = stat - ups
    N = (configs == 0).sum(axis=1)
    Z = configs.sum(axis=1, dtype=np.int64)
    group = N * (2 * l + 1) + (Z + l)
    return stat, group


def conditional_exp_moment(
    l: int, N: int, Z: int, v: equilibrium.LocalObservable, gamma: float, mode: int
) -> float:
    """Exact E[exp(gamma * l * stat^2) | (N, Z)] on one hyperplane."""
    if not lattice.feasible(l, N, Z):
        raise ValueError(f"infeasible (N, Z) = ({N}, {Z}) on {l} sites")
    stat, group = weighted_statistics(l, v, mode)
    gid = N * (2 * l + 1) + (Z + l)
    sel = group == gid
    return float(np.mean(np.exp(gamma * l * stat[sel] ** 2)))


def max_conditional_moment(l: int, v, gamma: float, mode: int, _cache={}) -> float:
    """max over all feasible (N, Z) of the conditional exponential moment."""
    key = (l, v.name, mode)
    if key not in _cache:
        stat, group = weighted_statistics(l, v, mode)
        order = np.argsort(group, kind="stable")
        _cache[key] = (stat[order], group[order])
    stat, group = _cache[key]
    starts = np.concatenate([[0], np.where(np.diff(group) != 0)[0] + 1])
    counts = np.diff(np.concatenate([starts, [len(group)]]))
    w = np.exp(gamma * l * stat**2)
    sums = np.add.reduceat(w, starts)
    return float(np.max(sums / counts))


def certify_gamma0(
    l: int, v, modes=(0, 1), bound: float = math.sqrt(2.0), tol: float = 1e-4
) -> float:
    """Largest gamma with max_(N,Z) moment <= bound in every requested mode.

    Bisection; the moment is increasing in gamma and equals 1 at gamma = 0,
    so a positive certificate always exists.
    """
    def worst(gamma):
        return max(max_conditional_moment(l, v, gamma, mode) for mode in modes)

    hi = 1.0
    while worst(hi) <= bound:
        hi *= 2.0
        if hi > 1e6:
            return hi
    lo = 0.0
    while hi - lo > tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if worst(mid) <= bound:
            lo = mid
        else:
            hi = mid
    return lo
