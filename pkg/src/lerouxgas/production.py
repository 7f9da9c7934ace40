"""Entropy-production decomposition of simulated trajectories.

For a C^2 entropy/flux pair (S, F) and the vector block field w(t,x) =
(eta_hat, xi_hat), the generator action on S(w(x)) splits exactly into

    G S(w(x)) = -d_x F(w(x)) + A1 + A2 + B1 + B2 + C1 + C2

with A1/A2 the kernel Taylor defects of the asymmetric/symmetric parts
(exact generator increment minus the smooth transport term), B1/B2 exact
x-derivatives of the flux-replacement and viscous inner fields, and C1/C2
the Hessian correction terms split off those derivatives:

    A1 = n L S(w)        + grad S . d_x flux_hat
    A2 = n^2 s K S(w)    - s grad S . d_x^2 w
    B1 = d_x { grad S . (Ups(w) - flux_hat) },   C1 = -(d_x w)' H (Ups(w) - flux_hat)
    B2 = d_x { s grad S . d_x w },               C2 = -s (d_x w)' H (d_x w)

Ups is the exact equilibrium expectation of the bond fluxes, (rho u,
rho + u^2 - 1).  Everything is computed from snapshot configurations only;
the martingale contribution is recovered as the residual of the identity in
weak (test-function paired) form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dfield

import numpy as np

from . import lattice
from .blocks import WeightKernel, grid_field
from .equilibrium import clamp_to_domain, upsilon_phi, upsilon_psi
from .pde import EntropyPair, TestFunction


# ---------------------------------------------------------------------------
# discrete negative Sobolev norm
# ---------------------------------------------------------------------------

def _check_uniform(times: np.ndarray) -> float:
    d = np.diff(times)
    if len(d) == 0 or not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
        raise ValueError("dual norms require a uniform time grid")
    return float(times[-1] - times[0])


def _reflected_weights(n_t: int, n_x: int, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Fourier weights on the even-reflected (period 2T) time grid.

    Returns (w, wx2): w[k, m] = 1/(1 + (pi k/T)^2 + (2 pi m)^2) and the
    squared spatial frequencies (2 pi m)^2.
    """
    k = np.arange(2 * n_t)
    k_eff = np.minimum(k, 2 * n_t - k)
    m = np.arange(n_x)
    m_eff = np.minimum(m, n_x - m)
    wt = (np.pi * k_eff / T) ** 2
    wx2 = (2.0 * np.pi * m_eff) ** 2
    w = 1.0 / (1.0 + wt[:, None] + wx2[None, :])
    return w, wx2


def _reflect_fft(field: np.ndarray) -> np.ndarray:
    """Power spectrum |FFT|^2 / (samples)^2 of the even time reflection."""
    K = field.shape[0] - 1
    ext = np.concatenate([field, field[K - 1 : 0 : -1]], axis=0) if K >= 2 else np.concatenate([field, field], axis=0)
    fhat = np.fft.fft2(ext) / ext.size
    return np.abs(fhat) ** 2


def dual_norm(field: np.ndarray, times: np.ndarray) -> float:
    """H^{-1} norm of a space-time field over [0, T] x torus.

    Even reflection in t to period 2T, 2-D DFT, then
    sqrt( T * sum w(k, m) |ghat|^2 ) with w = 1/(1 + (pi k/T)^2 + (2 pi m)^2).
    With w = 1 this convention reproduces the space-time L^2 norm.
    """
    T = _check_uniform(times)
    w, _ = _reflected_weights(field.shape[0] - 1, field.shape[1], T)
    return float(np.sqrt(T * np.sum(w * _reflect_fft(field))))


def l2_norm(field: np.ndarray, times: np.ndarray) -> float:
    T = _check_uniform(times)
    return float(np.sqrt(T * np.sum(_reflect_fft(field))))


def dual_norm_dx(inner: np.ndarray, times: np.ndarray) -> float:
    """H^{-1} norm of d_x(inner), applying the derivative spectrally.

    This is the pairing form: sup over phi of int d_x phi * inner, realized
    with the same reflected Fourier weights.
    """
    T = _check_uniform(times)
    w, wx2 = _reflected_weights(inner.shape[0] - 1, inner.shape[1], T)
    return float(np.sqrt(T * np.sum(w * wx2[None, :] * _reflect_fft(inner))))


# ---------------------------------------------------------------------------
# term fields
# ---------------------------------------------------------------------------

@dataclass
class TermFields:
    """All decomposition fields of one record on the snapshot grid."""

    times: np.ndarray
    n: int
    l: int
    sigma: float
    pair_tag: str
    fields: dict = dfield(default_factory=dict)
    clamp_max: float = 0.0

    def __getitem__(self, key):
        return self.fields[key]

    def to_csv(self, path, names=("A1", "A2", "B1_inner", "B2_inner", "C1", "C2")) -> None:
        """Per-term fields for plotting, one row per (t, x)."""
        with open(path, "w") as fh:
            fh.write("t,x," + ",".join(names) + "\n")
            for it, t in enumerate(self.times):
                for ix in range(self.n):
                    vals = ",".join(repr(float(self.fields[k][it, ix])) for k in names)
                    fh.write(f"{t!r},{ix / self.n!r},{vals}\n")


def _site_bond_values(snaps: np.ndarray):
    """Per-snapshot site observables and bond quantities (vectorized)."""
    d = snaps.astype(np.int64) + 1
    dn = np.roll(d, -1, axis=1)
    eta = 1.0 - np.abs(snaps.astype(np.float64))
    xi = snaps.astype(np.float64)
    return {
        "eta": eta,
        "xi": xi,
        "psi": lattice.PSI.astype(float)[d, dn],
        "phi": lattice.PHI.astype(float)[d, dn],
        "r": lattice.RATE_R.astype(float)[d, dn],
        "s": lattice.RATE_S.astype(float)[d, dn],
        "deta": eta - np.roll(eta, -1, axis=1),
        "dxi": xi - np.roll(xi, -1, axis=1),
    }


def decompose(record, pair: EntropyPair, l: int, kernel: WeightKernel) -> TermFields:
    """Evaluate every term of the identity on the record's snapshot grid.

    Needs closed-form grad_S, grad_F and hess_S on the pair.  States are
    clamped onto the domain triangle before evaluating the pair (the clamp
    magnitude is recorded); with the ensembles used here it is zero.
    """
    if pair.grad_S is None or pair.hess_S is None or pair.grad_F is None:
        raise ValueError("decompose needs closed-form gradients on the entropy pair")
    n = record.params.n
    sigma = record.params.sigma
    snaps = record.snapshots
    obs = _site_bond_values(snaps)
    out = TermFields(times=record.times.copy(), n=n, l=l, sigma=sigma, pair_tag=pair.tag)
    f = out.fields

    f["eta_hat"] = grid_field(obs["eta"], l, kernel, 0)
    f["xi_hat"] = grid_field(obs["xi"], l, kernel, 0)
    f["psi_hat"] = grid_field(obs["psi"], l, kernel, 0)
    f["phi_hat"] = grid_field(obs["phi"], l, kernel, 0)
    f["dx_eta_hat"] = grid_field(obs["eta"], l, kernel, 1)
    f["dx_xi_hat"] = grid_field(obs["xi"], l, kernel, 1)
    f["dx_psi_hat"] = grid_field(obs["psi"], l, kernel, 1)
    f["dx_phi_hat"] = grid_field(obs["phi"], l, kernel, 1)
    f["dxx_eta_hat"] = grid_field(obs["eta"], l, kernel, 2)
    f["dxx_xi_hat"] = grid_field(obs["xi"], l, kernel, 2)

    rho, u, clamp = clamp_to_domain(f["eta_hat"], f["xi_hat"])
    out.clamp_max = clamp
    S0 = pair.S(rho, u)
    F0 = pair.F(rho, u)
    gS_r, gS_u = pair.grad_S(rho, u)
    gF_r, gF_u = pair.grad_F(rho, u)
    S_rr, S_ru, S_uu = pair.hess_S(rho, u)
    f["S"] = S0
    f["F"] = F0

    # exact generator increments, summed over the bonds seen by each window
    kern_a = kernel.a(np.arange(-l - 1, l + 2) / l)  # a(k/l), k = -l-1 .. l+1
    A1 = np.zeros_like(S0)
    A2 = np.zeros_like(S0)
    for k in range(-l, l + 2):
        Dk = (kern_a[k + l + 1] - kern_a[k + l]) / l  # (a(k/l) - a((k-1)/l)) / l
        if Dk == 0.0:
            continue
        r_k = np.roll(obs["r"], k, axis=1)
        s_k = np.roll(obs["s"], k, axis=1)
        rho_s = np.maximum(rho - Dk * np.roll(obs["deta"], k, axis=1), 0.0)
        u_s = u - Dk * np.roll(obs["dxi"], k, axis=1)
        inc = pair.S(rho_s, u_s) - S0
        A1 += r_k * inc
        A2 += s_k * inc
    f["A1"] = n * A1 + (gS_r * f["dx_psi_hat"] + gS_u * f["dx_phi_hat"])
    f["A2"] = n * n * sigma * A2 - sigma * (gS_r * f["dxx_eta_hat"] + gS_u * f["dxx_xi_hat"])

    # flux replacement defect with the exact equilibrium expectation
    g1 = upsilon_psi(rho, u) - f["psi_hat"]
    g2 = upsilon_phi(rho, u) - f["phi_hat"]
    f["B1_inner"] = gS_r * g1 + gS_u * g2
    f["B2_inner"] = sigma * (gS_r * f["dx_eta_hat"] + gS_u * f["dx_xi_hat"])
    hess_e = S_rr * f["dx_eta_hat"] + S_ru * f["dx_xi_hat"]
    hess_x = S_ru * f["dx_eta_hat"] + S_uu * f["dx_xi_hat"]
    f["C1"] = -(hess_e * g1 + hess_x * g2)
    f["C2"] = -sigma * (hess_e * f["dx_eta_hat"] + hess_x * f["dx_xi_hat"])

    # pointwise forms of the B terms and of d_x F, for the exact identity
    dg1 = (u * f["dx_eta_hat"] + rho * f["dx_xi_hat"]) - f["dx_psi_hat"]
    dg2 = (f["dx_eta_hat"] + 2.0 * u * f["dx_xi_hat"]) - f["dx_phi_hat"]
    f["B1"] = -f["C1"] + gS_r * dg1 + gS_u * dg2
    f["B2"] = -f["C2"] + sigma * (gS_r * f["dxx_eta_hat"] + gS_u * f["dxx_xi_hat"])
    f["dx_F"] = gF_r * f["dx_eta_hat"] + gF_u * f["dx_xi_hat"]
    return out


def generator_action(record, pair: EntropyPair, l: int, kernel: WeightKernel) -> np.ndarray:
    """Exact G S(w(x)) field, summing rate * increment over all bonds."""
    n = record.params.n
    sigma = record.params.sigma
    obs = _site_bond_values(record.snapshots)
    rho, u, _ = clamp_to_domain(
        grid_field(obs["eta"], l, kernel, 0), grid_field(obs["xi"], l, kernel, 0)
    )
    S0 = pair.S(rho, u)
    kern_a = kernel.a(np.arange(-l - 1, l + 2) / l)
    total = np.zeros_like(S0)
    for k in range(-l, l + 2):
        Dk = (kern_a[k + l + 1] - kern_a[k + l]) / l
        if Dk == 0.0:
            continue
        w_k = n * np.roll(obs["r"], k, axis=1) + n * n * sigma * np.roll(obs["s"], k, axis=1)
        rho_s = np.maximum(rho - Dk * np.roll(obs["deta"], k, axis=1), 0.0)
        u_s = u - Dk * np.roll(obs["dxi"], k, axis=1)
        total += w_k * (pair.S(rho_s, u_s) - S0)
    return total


# ---------------------------------------------------------------------------
# weak-form pairings
# ---------------------------------------------------------------------------

def _grids(tf: TermFields):
    tt = tf.times[:, None]
    xx = (np.arange(tf.n) / tf.n)[None, :]
    return tt, xx


def quad_xt(field: np.ndarray, times: np.ndarray) -> float:
    """int int field dx dt: trapezoid in t, exact mean on the periodic grid."""
    return float(np.trapezoid(field.mean(axis=1), times))


def pairings(tf: TermFields, phi: TestFunction) -> dict[str, float]:
    """All term pairings <term, phi> plus the weak-form production pairing.

    The production pairing is
        X = -int int (d_t phi S + d_x phi F) - int phi(0) S(0) + int phi(T) S(T),
    the distributional pairing of d_t S + d_x F with phi.  B terms pair
    through their inner field against -d_x phi; the martingale pairing is the
    residual X - sum(all terms).
    """
    tt, xx = _grids(tf)
    pv = phi.phi(tt, xx)
    pt = phi.dphi_dt(tt, xx)
    px = phi.dphi_dx(tt, xx)
    times = tf.times
    X = (
        -quad_xt(pt * tf["S"] + px * tf["F"], times)
        - float(np.mean(pv[0] * tf["S"][0]))
        + float(np.mean(pv[-1] * tf["S"][-1]))
    )
    out = {
        "X": X,
        "A1": quad_xt(pv * tf["A1"], times),
        "A2": quad_xt(pv * tf["A2"], times),
        "B1": -quad_xt(px * tf["B1_inner"], times),
        "B2": -quad_xt(px * tf["B2_inner"], times),
        "C1": quad_xt(pv * tf["C1"], times),
        "C2": quad_xt(pv * tf["C2"], times),
    }
    out["martingale"] = out["X"] - sum(out[k] for k in ("A1", "A2", "B1", "B2", "C1", "C2"))
    return out


def entropy_production_pairing(tf: TermFields, phi: TestFunction) -> float:
    return pairings(tf, phi)["X"]


@dataclass
class DecompositionReport:
    """Norm summary of one record's decomposition (JSON/CSV exportable)."""

    n: int
    sigma: float
    l: int
    pair_tag: str
    sup_A1: float
    sup_A2: float
    B1_hm1: float
    B2_hm1: float
    C1_l1: float
    C2_l1: float
    clamp_max: float
    pairings: list = dfield(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def report(tf: TermFields, test_functions=()) -> DecompositionReport:
    times = tf.times
    return DecompositionReport(
        n=tf.n,
        sigma=tf.sigma,
        l=tf.l,
        pair_tag=tf.pair_tag,
        sup_A1=float(np.max(np.abs(tf["A1"]))),
        sup_A2=float(np.max(np.abs(tf["A2"]))),
        B1_hm1=dual_norm_dx(tf["B1_inner"], times),
        B2_hm1=dual_norm_dx(tf["B2_inner"], times),
        C1_l1=quad_xt(np.abs(tf["C1"]), times),
        C2_l1=quad_xt(np.abs(tf["C2"]), times),
        clamp_max=tf.clamp_max,
        pairings=[pairings(tf, phi) for phi in test_functions],
    )


# ---------------------------------------------------------------------------
# a priori bounds
# ---------------------------------------------------------------------------

def replacement_field(tf: TermFields, which: str = "psi") -> np.ndarray:
    """v_hat - Ups(w_hat) for the bond observable v in {psi, phi}."""
    rho, u, _ = clamp_to_domain(tf["eta_hat"], tf["xi_hat"])
    if which == "psi":
        return tf["psi_hat"] - upsilon_psi(rho, u)
    if which == "phi":
        return tf["phi_hat"] - upsilon_phi(rho, u)
    raise ValueError("which must be 'psi' or 'phi'")


def apriori_check(term_fields: list[TermFields], which: str = "psi"):
    """(replacement_mse, gradient_energy) with standard errors over replicas.

    replacement_mse = E int int |v_hat - Ups(w_hat)|^2, gradient_energy =
    E int int |d_x v_hat|^2 for the chosen window-2 observable.
    """
    mse = []
    grad = []
    for tf in term_fields:
        times = tf.times
        mse.append(quad_xt(replacement_field(tf, which) ** 2, times))
        grad.append(quad_xt(tf[f"dx_{which}_hat"] ** 2, times))
    mse = np.asarray(mse)
    grad = np.asarray(grad)
    m = len(term_fields)
    sem = 0.0 if m < 2 else float(np.std(mse, ddof=1) / np.sqrt(m))
    seg = 0.0 if m < 2 else float(np.std(grad, ddof=1) / np.sqrt(m))
    return (float(mse.mean()), sem), (float(grad.mean()), seg)


def conserved_gradient_energy(term_fields: list[TermFields]) -> tuple[float, float]:
    """E int int |d_x w_hat|^2 for the conserved 2-vector, with standard error."""
    vals = [
        quad_xt(tf["dx_eta_hat"] ** 2 + tf["dx_xi_hat"] ** 2, tf.times) for tf in term_fields
    ]
    vals = np.asarray(vals)
    se = 0.0 if len(vals) < 2 else float(np.std(vals, ddof=1) / np.sqrt(len(vals)))
    return float(vals.mean()), se
