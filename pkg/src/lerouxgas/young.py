"""Empirical Young measures and compensated-compactness diagnostics.

A simulated ensemble of block-average fields induces, on each space-time
cell, a sample population of states (rho, u): the empirical surrogate of the
Young measure nu(t, x; dv).  The diagnostics below quantify how far nu is
from the structure the limit theory forces:

* tartar_defect: <nu, S1 F2 - S2 F1> - (<nu,S1><nu,F2> - <nu,S2><nu,F1>),
  zero for point masses (factorization) and for true limit measures;
* dirac defect: g(a) = <nu, Fbar_a>/<nu, Sbar_a> satisfies g(a) = a + <nu,u>
  exactly when nu is a point mass, so max_a |g(a) - a - <nu,u>| measures the
  distance from Dirac structure;
* per-cell variances: the operational Dirac test (variance -> 0);
* the measure-valued entropy inequality evaluated through cell moments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import clamp_to_domain
from .pde import EntropyPair, TestFunction


@dataclass
class EmpiricalYoungMeasure:
    """Per-cell sample populations of (rho, u) with equal weights.

    Cells partition [0, T] x torus; `start[i, j] : start[i, j] + count[i, j]`
    indexes the contiguous slice of `samples` (m, 2) holding cell (i, j).
    """

    t_edges: np.ndarray
    x_edges: np.ndarray
    samples: np.ndarray
    start: np.ndarray
    count: np.ndarray
    clamp_max: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.t_edges) - 1, len(self.x_edges) - 1

    def cell(self, it: int, ix: int) -> np.ndarray:
        s = self.start[it, ix]
        return self.samples[s : s + self.count[it, ix]]

    def cell_area(self) -> np.ndarray:
        dt = np.diff(self.t_edges)[:, None]
        dx = np.diff(self.x_edges)[None, :]
        return dt * dx

    def cell_mean(self, fn) -> np.ndarray:
        """Per-cell mean of fn(rho, u), shape (n_tcells, n_xcells)."""
        vals = fn(self.samples[:, 0], self.samples[:, 1])
        return self._reduce(vals)

    def _reduce(self, vals: np.ndarray) -> np.ndarray:
        nt, nx = self.shape
        flat_start = self.start.ravel()
        sums = np.add.reduceat(vals, flat_start)
        empty = self.count.ravel() == 0
        out = np.where(empty, np.nan, sums / np.maximum(self.count.ravel(), 1))
        return out.reshape(nt, nx)


def build_young_measure(
    fields: list,
    n_tcells: int = 10,
    n_xcells: int = 16,
    min_samples: int = 30,
) -> EmpiricalYoungMeasure:
    """Pool ensemble fields into per-cell populations.

    Each field is (times, x, rho, u) with rho/u of shape (len(times), len(x)),
    or any object with those attributes (eta_hat/xi_hat fields included).
    Samples are clamped onto the domain triangle; the clamp size is recorded.
    Cells with fewer than min_samples points are refused by name.
    """
    parts = []
    t_lo, t_hi = np.inf, -np.inf
    for fobj in fields:
        if isinstance(fobj, tuple):
            times, x, rho, u = fobj
        else:
            times, x = fobj.times, fobj.x
            rho, u = fobj["eta_hat"], fobj["xi_hat"]
        t_lo = min(t_lo, float(times[0]))
        t_hi = max(t_hi, float(times[-1]))
        parts.append((np.asarray(times, dtype=float), np.asarray(x, dtype=float), rho, u))
    t_edges = np.linspace(t_lo, t_hi, n_tcells + 1)
    x_edges = np.linspace(0.0, 1.0, n_xcells + 1)

    ids = []
    sam = []
    clamp = 0.0
    for times, x, rho, u in parts:
        it = np.clip(np.searchsorted(t_edges, times, side="right") - 1, 0, n_tcells - 1)
        ix = np.clip(np.searchsorted(x_edges, x % 1.0, side="right") - 1, 0, n_xcells - 1)
        cell = (it[:, None] * n_xcells + ix[None, :]).ravel()
        rc, uc, mag = clamp_to_domain(rho, u)
        clamp = max(clamp, mag)
        ids.append(cell)
        sam.append(np.column_stack([rc.ravel(), uc.ravel()]))
    ids = np.concatenate(ids)
    sam = np.concatenate(sam, axis=0)
    order = np.argsort(ids, kind="stable")
    ids = ids[order]
    sam = sam[order]
    count = np.bincount(ids, minlength=n_tcells * n_xcells)
    if np.any(count < min_samples):
        bad = int(np.argmin(count))
        raise ValueError(
            f"cell (t={bad // n_xcells}, x={bad % n_xcells}) has {count[bad]} < {min_samples} samples"
        )
    start = np.concatenate([[0], np.cumsum(count)[:-1]])
    return EmpiricalYoungMeasure(
        t_edges=t_edges,
        x_edges=x_edges,
        samples=sam,
        start=start.reshape(n_tcells, n_xcells),
        count=count.reshape(n_tcells, n_xcells),
        clamp_max=clamp,
    )


def cell_statistics(ym: EmpiricalYoungMeasure) -> dict[str, np.ndarray]:
    """Per-cell first and second moments of (rho, u)."""
    m_r = ym.cell_mean(lambda r, u: r)
    m_u = ym.cell_mean(lambda r, u: u)
    v_r = ym.cell_mean(lambda r, u: r * r) - m_r**2
    v_u = ym.cell_mean(lambda r, u: u * u) - m_u**2
    cov = ym.cell_mean(lambda r, u: r * u) - m_r * m_u
    return {"mean_rho": m_r, "mean_u": m_u, "var_rho": v_r, "var_u": v_u, "cov": cov}


def _phi_cell_integrals(ym: EmpiricalYoungMeasure, fn, sub: int = 8) -> np.ndarray:
    """int int_cell fn dt dx for each cell, by midpoint subgrid quadrature."""
    nt, nx = ym.shape
    out = np.empty((nt, nx))
    for i in range(nt):
        tq = ym.t_edges[i] + (np.arange(sub) + 0.5) / sub * (ym.t_edges[i + 1] - ym.t_edges[i])
        for j in range(nx):
            xq = ym.x_edges[j] + (np.arange(sub) + 0.5) / sub * (ym.x_edges[j + 1] - ym.x_edges[j])
            vals = fn(tq[:, None], xq[None, :])
            out[i, j] = vals.mean() * (ym.t_edges[i + 1] - ym.t_edges[i]) * (
                ym.x_edges[j + 1] - ym.x_edges[j]
            )
    return out


def tartar_defect(
    ym: EmpiricalYoungMeasure, p1: EntropyPair, p2: EntropyPair, phi: TestFunction | None = None
) -> float:
    """phi-weighted integral of the per-cell factorization defect.

    phi = None means phi identically 1.  Point-mass cells give zero exactly.
    """
    d = tartar_defect_field(ym, p1, p2)
    if phi is None:
        w = ym.cell_area()
    else:
        w = _phi_cell_integrals(ym, phi.phi)
    return float(np.sum(w * d))


def tartar_defect_field(ym: EmpiricalYoungMeasure, p1: EntropyPair, p2: EntropyPair) -> np.ndarray:
    m = ym.cell_mean
    s1f2 = m(lambda r, u: p1.S(r, u) * p2.F(r, u))
    s2f1 = m(lambda r, u: p2.S(r, u) * p1.F(r, u))
    return (
        s1f2
        - s2f1
        - m(p1.S) * m(p2.F)
        + m(p2.S) * m(p1.F)
    )


def family_moment_tables(ym: EmpiricalYoungMeasure, a_grid: np.ndarray) -> dict[str, np.ndarray]:
    """Per-cell moments against Sbar_b = |rho + b u - b^2| for every b in a_grid.

    Returns J*[b, cell...] tables plus the plain cell moments needed to
    assemble factorization defects of (S_a, F_a) x (Sbar_b, Fbar_b) pairs for
    the whole (a, b) grid by algebra instead of per-pair passes.
    """
    r = ym.samples[:, 0]
    u = ym.samples[:, 1]
    nt, nx = ym.shape
    nb = len(a_grid)
    J = {k: np.empty((nb, nt, nx)) for k in ("J0", "J1", "J2", "J3", "J4")}
    for ib, b in enumerate(a_grid):
        sb = np.abs(r + b * u - b * b)
        J["J0"][ib] = ym._reduce(sb)
        J["J1"][ib] = ym._reduce(u * sb)
        J["J2"][ib] = ym._reduce(r * sb)
        J["J3"][ib] = ym._reduce(u * r * sb)
        J["J4"][ib] = ym._reduce(u * u * sb)
    J["m_u"] = ym.cell_mean(lambda rr, uu: uu)
    J["m_r"] = ym.cell_mean(lambda rr, uu: rr)
    J["m_ur"] = ym.cell_mean(lambda rr, uu: uu * rr)
    J["m_uu"] = ym.cell_mean(lambda rr, uu: uu * uu)
    return J


def tartar_family_stat(ym: EmpiricalYoungMeasure, a_grid: np.ndarray, tables=None) -> float:
    """max over (a, b) of the L1-aggregated factorization defect.

    Pairs: (S_a, F_a) linear against (Sbar_b, Fbar_b) generalized, a and b on
    the same grid.  Per cell the defect is signed; the aggregate integrates
    its absolute value over cells (cancellation across cells would otherwise
    mask a genuinely non-factorizing measure).
    """
    J = tables if tables is not None else family_moment_tables(ym, a_grid)
    area = ym.cell_area()[None, None, :, :]
    a = a_grid[:, None, None, None]
    b = a_grid[None, :, None, None]
    J0, J1, J2 = J["J0"][None], J["J1"][None], J["J2"][None]
    J3, J4 = J["J3"][None], J["J4"][None]
    fbar = b * J0 + J1
    ufbar = b * J1 + J4
    rfbar = b * J2 + J3
    s1f2 = rfbar + a * ufbar - a * a * fbar
    s2f1 = J3 + a * (J2 + J4) - a**3 * J0
    m_s1 = J["m_r"][None, None] + a * J["m_u"][None, None] - a * a
    m_f1 = J["m_ur"][None, None] + a * (J["m_r"][None, None] + J["m_uu"][None, None]) - a**3
    defect = s1f2 - s2f1 - (m_s1 * fbar - J0 * m_f1)
    agg = np.sum(np.abs(defect) * area, axis=(2, 3))
    return float(np.max(agg))


def dirac_g(cell: np.ndarray, a: float, tol: float = 1e-10):
    """g(a) = <Fbar_a>/<Sbar_a> on one cell; None flags the degenerate branch.

    Degeneracy means the measure concentrates on the line rho + a u - a^2 = 0.
    """
    r, u = cell[:, 0], cell[:, 1]
    sb = np.abs(r + a * u - a * a)
    den = float(np.mean(sb))
    if den < tol:
        return None
    return a + float(np.mean(u * sb)) / den


def dirac_defect(ym: EmpiricalYoungMeasure, a_grid: np.ndarray, tables=None) -> np.ndarray:
    """Per-cell max over the a-grid of |g(a) - a - <u>| (degenerate a skipped)."""
    J = tables if tables is not None else family_moment_tables(ym, a_grid)
    with np.errstate(invalid="ignore", divide="ignore"):
        g_minus = J["J1"] / J["J0"] - J["m_u"][None]
    g_minus = np.where(J["J0"] > 1e-10, np.abs(g_minus), 0.0)
    return np.max(g_minus, axis=0)


def mv_entropy_residual(ym: EmpiricalYoungMeasure, pair: EntropyPair, phi: TestFunction) -> float:
    """Measure-valued entropy inequality through cell moments; >= -tol for
    measure-valued entropy solutions.

    int int (d_t phi <nu, S> + d_x phi <nu, F>) + int phi(0) <nu(0), S>,
    with <nu(0), .> read from the first time row of cells.
    """
    tt = np.linspace(ym.t_edges[0], ym.t_edges[-1], 24)
    if np.any(phi.phi(tt[:, None], np.linspace(0, 1, 64)[None, :]) < -1e-12):
        raise ValueError("test function must be nonnegative")
    mS = ym.cell_mean(pair.S)
    mF = ym.cell_mean(pair.F)
    bulk = float(
        np.sum(_phi_cell_integrals(ym, phi.dphi_dt) * mS)
        + np.sum(_phi_cell_integrals(ym, phi.dphi_dx) * mF)
    )
    # initial slice from the first time-cell row
    x_mid = 0.5 * (ym.x_edges[:-1] + ym.x_edges[1:])
    dx = np.diff(ym.x_edges)
    phi0 = phi.phi(np.array([[ym.t_edges[0]]]), x_mid[None, :])[0]
    initial = float(np.sum(phi0 * mS[0] * dx))
    return bulk + initial
