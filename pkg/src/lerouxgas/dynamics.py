"""Exact continuous-time simulation of the speeded-up exchange dynamics.

The generator of the size-n system is n*L + n^2*sigma*K: every bond (j, j+1)
exchanges its spins at rate n*r + n^2*sigma*s with the asymmetric rates r and
stirring rates s from `lattice`.  Simulation is an exact event-driven chain
(no time discretization): waiting times are exponential in the total rate and
bonds are selected from a cumulative-sum binary tree, so an event costs
O(log n) including the three bond-rate updates it triggers.

The inner loop is JIT-compiled when numba is available and falls back to the
identical pure-Python code otherwise.  Randomness comes from a counter-based
Philox stream keyed by (seed, replica); uniforms are handed to the kernel in
batches, which keeps trajectories reproducible bit-for-bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import equilibrium, lattice

try:  # pragma: no cover - exercised implicitly by every simulation
    from numba import njit

    _jit = njit(cache=True, nogil=True)
except ImportError:  # pragma: no cover
    def _jit(f):
        return f

_BUFFER = 1 << 16
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class DynamicsParams:
    """Torus size and viscosity; sigma may be tied to n through beta."""

    n: int
    sigma: float
    beta: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("torus size must be at least 2")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError(f"sigma = {self.sigma} outside (0, 1)")

    @classmethod
    def from_beta(cls, n: int, beta: float = 0.4) -> "DynamicsParams":
        return cls(n=n, sigma=float(n) ** (-beta), beta=beta)


def bond_rate(spins: np.ndarray, j: int, p: DynamicsParams) -> float:
    """Total jump rate n*r + n^2*sigma*s of the bond (j, j+1 mod n)."""
    n = p.n
    a = int(spins[j]) + 1
    b = int(spins[(j + 1) % n]) + 1
    return n * float(lattice.RATE_R[a, b]) + n * n * p.sigma * float(lattice.RATE_S[a, b])


def rate_table(p: DynamicsParams) -> np.ndarray:
    """3x3 table of bond rates indexed by (left spin + 1, right spin + 1)."""
    return p.n * lattice.RATE_R.astype(np.float64) + p.n**2 * p.sigma * lattice.RATE_S.astype(np.float64)


# ---------------------------------------------------------------------------
# cumulative-sum tree + event kernel
# ---------------------------------------------------------------------------

def _tree_size(n: int) -> int:
    P = 1
    while P < n:
        P *= 2
    return P


def build_tree(spins: np.ndarray, wtable: np.ndarray) -> tuple[np.ndarray, int]:
    """Heap-layout cumulative tree: leaves at [P, P+n), parents are child sums."""
    n = len(spins)
    P = _tree_size(n)
    tree = np.zeros(2 * P, dtype=np.float64)
    d = spins.astype(np.int64) + 1
    tree[P : P + n] = wtable[d, np.roll(d, -1)]
    for k in range(P - 1, 0, -1):
        tree[k] = tree[2 * k] + tree[2 * k + 1]
    return tree, P


@_jit
def _run_interval(spins, tree, P, n, wtable, t, t_end, u_time, u_site, idx, events, max_events):
    """Advance the chain to t_end or until a buffer/budget limit is hit.

    Returns (t, idx, events, status) with status 0 = reached t_end,
    1 = uniform buffer exhausted, 2 = absorbing (zero total rate),
    3 = event budget exhausted.
    """
    nbuf = u_time.shape[0]
    while True:
        W = tree[1]
        if W <= 0.0:
            return t_end, idx, events, 2
        if idx >= nbuf:
            return t, idx, events, 1
        if events >= max_events:
            return t, idx, events, 3
        u = u_time[idx]
        if u < 1e-300:
            u = 1e-300
        dt = -math.log(u) / W
        if t + dt >= t_end:
            idx += 1
            return t_end, idx, events, 0
        t += dt
        target = u_site[idx] * W
        idx += 1
        # descend the tree
        k = 1
        while k < P:
            k *= 2
            left = tree[k]
            if target >= left:
                target -= left
                k += 1
        j = k - P
        if j >= n:
            j = n - 1
        jp = j + 1
        if jp == n:
            jp = 0
        s = spins[j]
        spins[j] = spins[jp]
        spins[jp] = s
        # re-rate the three affected bonds
        jm = j - 1
        if jm < 0:
            jm = n - 1
        for b in (jm, j, jp):
            bp = b + 1
            if bp == n:
                bp = 0
            w = wtable[spins[b] + 1, spins[bp] + 1]
            k = P + b
            tree[k] = w
            k //= 2
            while k >= 1:
                tree[k] = tree[2 * k] + tree[2 * k + 1]
                k //= 2
        events += 1


@dataclass
class TrajectoryRecord:
    """Snapshots of one trajectory on a fixed macroscopic time grid."""

    params: DynamicsParams
    seed: int
    replica: int
    times: np.ndarray
    snapshots: np.ndarray  # (len(times), n) int8
    events: int
    absorbing: bool = False
    complete: bool = True
    tree_drift: float = 0.0

    def conserved(self) -> tuple[int, int]:
        return lattice.conserved(self.snapshots[0])

    def save(self, outdir: str | Path, fmt: str = "binary") -> None:
        """Write params/seed echo plus snapshots (flat binary npz or CSV)."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        echo = {
            "n": self.params.n,
            "sigma": self.params.sigma,
            "beta": self.params.beta,
            "seed": self.seed,
            "replica": self.replica,
            "events": self.events,
            "absorbing": self.absorbing,
            "complete": self.complete,
            "format": fmt,
        }
        (outdir / "params.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
        if fmt == "binary":
            np.savez_compressed(outdir / "snapshots.npz", times=self.times, snapshots=self.snapshots)
        elif fmt == "csv":
            with open(outdir / "snapshots.csv", "w") as fh:
                fh.write("time,site,spin\n")
                for t, row in zip(self.times, self.snapshots):
                    for j, s in enumerate(row):
                        fh.write(f"{t!r},{j},{int(s)}\n")
        else:
            raise ValueError(f"unknown snapshot format {fmt!r}")

    @classmethod
    def load(cls, outdir: str | Path) -> "TrajectoryRecord":
        outdir = Path(outdir)
        echo = json.loads((outdir / "params.json").read_text())
        data = np.load(outdir / "snapshots.npz")
        return cls(
            params=DynamicsParams(echo["n"], echo["sigma"], echo.get("beta")),
            seed=echo["seed"],
            replica=echo["replica"],
            times=data["times"],
            snapshots=data["snapshots"],
            events=echo["events"],
            absorbing=echo["absorbing"],
            complete=echo["complete"],
        )


def _stream(seed: int, replica: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, replica & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def simulate(
    p: DynamicsParams,
    init: np.ndarray,
    T: float,
    snapshots: int = 200,
    seed: int = 0,
    replica: int = 0,
    max_events: int | None = None,
    rebuild_every: int = 1_000_000,
) -> TrajectoryRecord:
    """Run the chain to macroscopic time T, sampling `snapshots`+1 grid states.

    The record is reproducible given (seed, replica).  A frozen state (all
    spins equal, zero total rate) is flagged absorbing and time jumps to the
    next snapshot; exceeding max_events leaves the remaining snapshots at the
    last reached state and marks the record incomplete.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    spins = np.array(init, dtype=np.int8).copy()
    if len(spins) != p.n:
        raise ValueError("initial configuration does not match the torus size")
    times = np.linspace(0.0, T, snapshots + 1) if T > 0 else np.array([0.0])
    grid = np.empty((len(times), p.n), dtype=np.int8)
    grid[0] = spins
    if T == 0:
        return TrajectoryRecord(p, seed, replica, times, grid, 0, absorbing=False)

    wtable = rate_table(p)
    tree, P = build_tree(spins, wtable)
    rng = _stream(seed, replica)
    u_time = rng.random(_BUFFER)
    u_site = rng.random(_BUFFER)
    idx = 0
    events = 0
    next_rebuild = rebuild_every
    budget = max_events if max_events is not None else np.iinfo(np.int64).max
    t = 0.0
    absorbing = False
    complete = True
    for k in range(1, len(times)):
        while True:
            t, idx, events, status = _run_interval(
                spins, tree, P, p.n, wtable, t, times[k], u_time, u_site, idx, events, budget
            )
            if status == 1:
                u_time = rng.random(_BUFFER)
                u_site = rng.random(_BUFFER)
                idx = 0
                continue
            if status == 2:
                absorbing = True
                t = times[k]
            if status == 3:
                complete = False
                t = times[k]
            break
        if events >= next_rebuild:
            tree, P = build_tree(spins, wtable)
            next_rebuild = events + rebuild_every
        grid[k] = spins
        if not complete:
            grid[k:] = spins
            break
    d = spins.astype(np.int64) + 1
    fresh = wtable[d, np.roll(d, -1)]
    denom = max(float(np.max(fresh)), 1.0)
    drift = float(np.max(np.abs(tree[P : P + p.n] - fresh))) / denom
    return TrajectoryRecord(
        p, seed, replica, times, grid, events,
        absorbing=absorbing, complete=complete, tree_drift=drift,
    )


def step_once(p: DynamicsParams, spins: np.ndarray, rng: np.random.Generator):
    """One exact event: returns (bond index, waiting time) or None if frozen."""
    wtable = rate_table(p)
    d = spins.astype(np.int64) + 1
    w = wtable[d, np.roll(d, -1)]
    W = float(w.sum())
    if W <= 0.0:
        return None
    dt = rng.exponential(1.0 / W)
    j = int(np.searchsorted(np.cumsum(w), rng.random() * W, side="right"))
    j = min(j, p.n - 1)
    k = (j + 1) % p.n
    spins[j], spins[k] = spins[k], spins[j]
    return j, dt


# ---------------------------------------------------------------------------
# exact generator matrix on the full state space (small n)
# ---------------------------------------------------------------------------

def generator_matrix(p: DynamicsParams) -> tuple[np.ndarray, sp.csr_matrix]:
    """States (3^n, n) in radix order and the sparse generator of n*L + n^2*sigma*K.

    Restricted to n <= 8 (3^n states); larger sizes are refused.
    """
    n = p.n
    if n > 8:
        raise ValueError(f"generator matrix limited to n <= 8 (3^n states); got n = {n}")
    states = lattice.all_configurations(n)
    m = states.shape[0]
    codes = np.arange(m, dtype=np.int64)
    digits = states.astype(np.int64) + 1
    wtable = rate_table(p)
    rows, cols, data = [], [], []
    diag = np.zeros(m)
    for j in range(n):
        jp = (j + 1) % n
        dj, djp = digits[:, j], digits[:, jp]
        w = wtable[dj, djp]
        active = w > 0
        target = codes + (djp - dj) * 3**j + (dj - djp) * 3**jp
        rows.append(codes[active])
        cols.append(target[active])
        data.append(w[active])
        diag -= w
    rows.append(codes)
    cols.append(codes)
    data.append(diag)
    G = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
    ).tocsr()
    return states, G


def gibbs_vector(states: np.ndarray, rho: float, u: float) -> np.ndarray:
    """Product-measure probabilities of each state row."""
    p = np.array(equilibrium.gibbs_marginal(rho, u))
    return np.prod(p[states.astype(np.int64) + 1], axis=1)


def evolve_expectation(G: sp.csr_matrix, f: np.ndarray, T: float) -> np.ndarray:
    """(e^{T G} f) for a function f on states, via sparse expm action."""
    return spla.expm_multiply(G * T, f)


def sample_initial_profile(rho0, u0, n: int, seed: int = 0, replica: int = 0) -> np.ndarray:
    """Independent sites with marginals pi_{rho0(j/n), u0(j/n)}.

    rho0/u0 may be callables on the unit torus or arrays of length n; any
    site where the profile leaves the domain D is reported by its x.
    """
    x = np.arange(n) / n
    rho = np.asarray(rho0(x) if callable(rho0) else rho0, dtype=float)
    u = np.asarray(u0(x) if callable(u0) else u0, dtype=float)
    rho = np.broadcast_to(rho, (n,))
    u = np.broadcast_to(u, (n,))
    bad = (rho < 0) | (rho > 1) | (rho + np.abs(u) > 1 + 1e-12)
    if np.any(bad):
        xbad = float(x[np.argmax(bad)])
        raise ValueError(f"initial profile leaves the domain rho + |u| <= 1 at x = {xbad}")
    return equilibrium.sample_gibbs(rho, u, n, _stream(seed, replica))
