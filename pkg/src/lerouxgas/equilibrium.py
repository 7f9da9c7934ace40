"""Product (Gibbs) and microcanonical measures and exact local expectations.

The one-site marginals are p(0) = rho, p(+-1) = (1 - rho +- u)/2 with
parameters in the triangle D = {rho + |u| <= 1, 0 <= rho <= 1}.  Conditioning
the product measure on the conserved pair (N, Z) of a block gives the uniform
distribution on the hyperplane, because product weights depend on the spin
counts only; microcanonical sampling and expectations below exploit that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import lattice


def in_domain(rho, u, tol: float = 0.0) -> bool:
    """Whether (rho, u) lies in the parameter triangle D (with slack tol)."""
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    return bool(np.all(rho >= -tol) and np.all(rho + np.abs(u) <= 1.0 + tol))


def clamp_to_domain(rho, u):
    """Project (rho, u) onto D; returns (rho_c, u_c, max displacement).

    rho is clipped to [0, 1] and u to |u| <= 1 - rho.  Block averages can
    exit D by O(1/l) because the smoothing kernel is not a probability over
    the discrete window; the clamp magnitude is reported so callers can log it.
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    rho_c = np.clip(rho, 0.0, 1.0)
    lim = 1.0 - rho_c
    u_c = np.clip(u, -lim, lim)
    mag = float(np.max(np.hypot(rho_c - rho, u_c - u))) if rho.size else 0.0
    return rho_c, u_c, mag


def gibbs_marginal(rho: float, u: float) -> tuple[float, float, float]:
    """One-site probabilities (p(-1), p(0), p(+1)) of the Gibbs measure."""
    if not in_domain(rho, u):
        raise ValueError(f"(rho, u) = ({rho}, {u}) outside the domain rho + |u| <= 1")
    return (1.0 - rho - u) / 2.0, rho, (1.0 - rho + u) / 2.0


@dataclass(frozen=True)
class LocalObservable:
    """Observable of a window of m consecutive spins.

    For m <= 2 a lookup table indexed by spin+1 is used so fields over whole
    configurations vectorize; wider windows evaluate through `fn`.
    """

    name: str
    window: int
    table: np.ndarray | None = None
    fn: Callable[..., float] | None = None

    def values(self, spins: np.ndarray) -> np.ndarray:
        """Per-site values v_j = v(w_j, ..., w_{j+m-1}) with periodic wrap."""
        if self.table is not None:
            if self.window == 1:
                return self.table[spins.astype(np.int64) + 1]
            left = spins.astype(np.int64) + 1
            right = np.roll(spins, -1).astype(np.int64) + 1
            return self.table[left, right]
        n = len(spins)
        ext = np.concatenate([spins, spins[: self.window - 1]])
        return np.array([self.fn(*ext[j : j + self.window]) for j in range(n)], dtype=float)

    def value_at(self, window_spins) -> float:
        if self.table is not None:
            idx = tuple(int(s) + 1 for s in window_spins)
            return float(self.table[idx])
        return float(self.fn(*window_spins))


OBS_ETA = LocalObservable("eta", 1, table=np.array([0.0, 1.0, 0.0]))
OBS_XI = LocalObservable("xi", 1, table=np.array([-1.0, 0.0, 1.0]))
OBS_PSI = LocalObservable("psi", 2, table=lattice.PSI.astype(float))
OBS_PHI = LocalObservable("phi", 2, table=lattice.PHI.astype(float))
OBS_PSI_S = LocalObservable("psi_s", 2, table=lattice.PSI_S.astype(float))
OBS_PHI_S = LocalObservable("phi_s", 2, table=lattice.PHI_S.astype(float))


def upsilon(v: LocalObservable, rho: float, u: float) -> float:
    """Exact product-measure expectation of v by enumeration over 3^m tuples."""
    if v.window > 4:
        raise ValueError("exact enumeration supports windows up to 4 sites")
    p = np.array(gibbs_marginal(rho, u))
    total = 0.0
    for tup in np.ndindex(*([3] * v.window)):
        spins = tuple(t - 1 for t in tup)
        w = math.prod(p[t] for t in tup)
        total += w * v.value_at(spins)
    return total


def upsilon_psi(rho, u):
    """Closed form of E(psi) = rho*u (validated against enumeration)."""
    return np.asarray(rho) * np.asarray(u)


def upsilon_phi(rho, u):
    """Closed form of E(phi) = rho + u^2 - 1 (validated against enumeration)."""
    return np.asarray(rho) + np.asarray(u) ** 2 - 1.0


def hyperplane_size(l: int, N: int, Z: int) -> int:
    """Number of configurations with the conserved pair (N, Z); 0 if infeasible."""
    if not lattice.feasible(l, N, Z):
        return 0
    N0, npl, nmi = lattice.hyperplane_counts(l, N, Z)
    return math.factorial(l) // (math.factorial(N0) * math.factorial(npl) * math.factorial(nmi))


def enumerate_hyperplane(l: int, N: int, Z: int) -> np.ndarray:
    """All configurations on l sites with conserved pair (N, Z), radix order.

    Returns an (count, l) int8 matrix (empty for infeasible (N, Z)).
    """
    if l > 14:
        raise ValueError("enumeration limited to l <= 14")
    if not lattice.feasible(l, N, Z):
        return np.empty((0, l), dtype=np.int8)
    configs = lattice.all_configurations(l)
    eta = (configs == 0).sum(axis=1)
    ssum = configs.sum(axis=1, dtype=np.int64)
    return configs[(eta == N) & (ssum == Z)]


def feasible_pairs(l: int) -> list[tuple[int, int]]:
    """All (N, Z) with a nonempty hyperplane on l sites."""
    out = []
    for N in range(l + 1):
        for Z in range(-(l - N), l - N + 1):
            if lattice.feasible(l, N, Z):
                out.append((N, Z))
    return out


def sample_microcanonical(l: int, N: int, Z: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the (N, Z) hyperplane: a shuffle of the fixed multiset."""
    N0, npl, nmi = lattice.hyperplane_counts(l, N, Z)
    base = np.concatenate([
        np.zeros(N0, dtype=np.int8),
        np.ones(npl, dtype=np.int8),
        -np.ones(nmi, dtype=np.int8),
    ])
    return rng.permutation(base)


class Expectation(NamedTuple):
    value: float
    stderr: float


def microcanonical_expectation(
    v: LocalObservable,
    l: int,
    N: int,
    Z: int,
    offset: int = 0,
    mc_samples: int = 20000,
    seed: int = 0,
) -> Expectation:
    """Average of v at a fixed offset under the uniform hyperplane measure.

    Exact by enumeration for l <= 12; beyond that falls back to Monte Carlo
    over uniform shuffles and reports the standard error.  The observable is
    evaluated on the segment without wrap, so offset + window must fit.
    """
    if offset + v.window > l:
        raise ValueError("observable window exceeds the segment")
    if hyperplane_size(l, N, Z) == 0:
        raise ValueError(f"infeasible (N, Z) = ({N}, {Z}) on {l} sites")
    if l <= 12:
        configs = enumerate_hyperplane(l, N, Z)
        vals = _window_values(v, configs, offset)
        return Expectation(float(np.mean(vals)), 0.0)
    rng = np.random.default_rng(seed)
    draws = np.empty(mc_samples)
    for i in range(mc_samples):
        draws[i] = v.value_at(sample_microcanonical(l, N, Z, rng)[offset : offset + v.window])
    return Expectation(float(np.mean(draws)), float(np.std(draws, ddof=1) / math.sqrt(mc_samples)))


def _window_values(v: LocalObservable, configs: np.ndarray, offset: int) -> np.ndarray:
    if v.table is not None and v.window == 1:
        return v.table[configs[:, offset].astype(np.int64) + 1]
    if v.table is not None and v.window == 2:
        return v.table[
            configs[:, offset].astype(np.int64) + 1,
            configs[:, offset + 1].astype(np.int64) + 1,
        ]
    return np.array([v.value_at(row[offset : offset + v.window]) for row in configs])


def export_upsilon_csv(path, v: LocalObservable, rho_grid=None, u_grid=None) -> None:
    """Expectation table (rho, u, upsilon) over a grid of valid parameters."""
    rho_grid = np.linspace(0.05, 0.9, 12) if rho_grid is None else rho_grid
    u_grid = np.linspace(-0.8, 0.8, 13) if u_grid is None else u_grid
    with open(path, "w") as fh:
        fh.write("rho,u,upsilon\n")
        for rho in rho_grid:
            for u in u_grid:
                if not in_domain(rho, u):
                    continue
                fh.write(f"{float(rho)!r},{float(u)!r},{upsilon(v, float(rho), float(u))!r}\n")


def sample_gibbs(rho, u, n: int, rng: np.random.Generator) -> np.ndarray:
    """Independent sites with (possibly site-dependent) marginals pi_{rho,u}."""
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (n,))
    u = np.broadcast_to(np.asarray(u, dtype=float), (n,))
    p_minus = (1.0 - rho - u) / 2.0
    p_zero = rho
    draw = rng.random(n)
    spins = np.where(draw < p_minus, -1, np.where(draw < p_minus + p_zero, 0, 1))
    return spins.astype(np.int8)
