"""The Leroux system: fluxes, wave speeds, entropy pairs, reference solvers.

The macroscopic equations for (rho, u) on the unit torus are

    d_t rho + d_x (rho u)     = 0
    d_t u   + d_x (rho + u^2) = 0,

strictly hyperbolic on {rho >= 0} away from the origin.  Entropy/flux pairs
(S, F) solve F'_rho = u S'_rho + S'_u and F'_u = rho S'_rho + 2u S'_u;
equivalently S solves the wave equation rho S''_rr + u S''_ru - S''_uu = 0.

Reference entropy solutions come from a first-order conservative scheme:
Rusanov (local Lax-Friedrichs) or a centered flux with explicit viscosity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .blocks import default_kernel
from .equilibrium import clamp_to_domain


def macro_flux(rho, u):
    """Flux vector (rho*u, rho + u^2)."""
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    return rho * u, rho + u * u


def char_speeds(rho, u):
    """Eigenvalues (lam, mu) of the Jacobian [[u, rho], [1, 2u]].

    lam = u + (sqrt(u^2+4 rho) + u)/2,  mu = u - (sqrt(u^2+4 rho) - u)/2;
    lam >= mu with equality only at the degenerate origin.  rho < 0 is
    rejected (complex speeds).
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(rho < 0):
        raise ValueError("char_speeds requires rho >= 0")
    root = np.sqrt(u * u + 4.0 * rho)
    return u + 0.5 * (root + u), u - 0.5 * (root - u)


def max_speed(rho, u) -> float:
    lam, mu = char_speeds(np.maximum(rho, 0.0), u)
    return float(np.max(np.maximum(np.abs(lam), np.abs(mu))))


@dataclass(frozen=True)
class EntropyPair:
    """Entropy/flux evaluators with gradient and Hessian of the entropy.

    S, F: arrays in, arrays out.  grad_S returns (S_rho, S_u); hess_S returns
    (S_rr, S_ru, S_uu).  `kink` marks the non-differentiability line of the
    generalized (absolute-value) family; residual checks near it are flagged.
    """

    S: Callable
    F: Callable
    grad_S: Callable | None = None
    grad_F: Callable | None = None
    hess_S: Callable | None = None
    tag: str = "custom"
    convex: bool = False
    kink: Callable | None = None

    def on_state(self, rho, u):
        return self.S(rho, u), self.F(rho, u)


def entropy_family(a: float, kind: str = "linear") -> EntropyPair:
    """One-parameter families S_a = rho + a u - a^2, F_a = (a+u) S_a.

    kind="linear" is a genuine (affine, weakly convex) pair; kind="absolute"
    takes |S_a| and is a generalized pair, non-differentiable on the
    characteristic line rho + a u - a^2 = 0.
    """
    a = float(a)

    def Sa(rho, u):
        return np.asarray(rho, dtype=float) + a * np.asarray(u, dtype=float) - a * a

    if kind == "linear":
        return EntropyPair(
            S=Sa,
            F=lambda rho, u: (a + np.asarray(u, dtype=float)) * Sa(rho, u),
            grad_S=lambda rho, u: (np.ones_like(np.asarray(rho, dtype=float)), np.full_like(np.asarray(u, dtype=float), a)),
            grad_F=lambda rho, u: (
                a + np.asarray(u, dtype=float),
                np.asarray(rho, dtype=float) + 2.0 * a * np.asarray(u, dtype=float),
            ),
            hess_S=lambda rho, u: (np.zeros_like(np.asarray(rho, dtype=float)),) * 3,
            tag=f"linear-family({a})",
            convex=True,
        )
    if kind == "absolute":
        def sgn(rho, u):
            return np.sign(Sa(rho, u))

        return EntropyPair(
            S=lambda rho, u: np.abs(Sa(rho, u)),
            F=lambda rho, u: (a + np.asarray(u, dtype=float)) * np.abs(Sa(rho, u)),
            grad_S=lambda rho, u: (sgn(rho, u), a * sgn(rho, u)),
            grad_F=lambda rho, u: (
                (a + np.asarray(u, dtype=float)) * sgn(rho, u),
                np.abs(Sa(rho, u)) + (a + np.asarray(u, dtype=float)) * a * sgn(rho, u),
            ),
            hess_S=lambda rho, u: (np.zeros_like(np.asarray(rho, dtype=float)),) * 3,
            tag=f"absolute-family({a})",
            convex=True,
            kink=Sa,
        )
    raise ValueError(f"unknown family kind {kind!r}")


def global_entropy() -> EntropyPair:
    """The globally convex pair S = rho log rho + u^2/2, F = u rho + u rho log rho + 2u^3/3.

    rho log rho is extended by 0 at rho = 0; rho < 0 is rejected.  The Hessian
    diag(1/rho, 1) is positive definite for rho > 0.
    """

    def xlogx(r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("global entropy pair requires rho >= 0")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r > 0.0, r * np.log(np.maximum(r, 1e-300)), 0.0)
        return out

    def logr(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(np.maximum(r, 1e-300))

    return EntropyPair(
        S=lambda rho, u: xlogx(rho) + 0.5 * np.asarray(u, dtype=float) ** 2,
        F=lambda rho, u: np.asarray(u, dtype=float) * (np.asarray(rho, dtype=float) + xlogx(rho))
        + 2.0 * np.asarray(u, dtype=float) ** 3 / 3.0,
        grad_S=lambda rho, u: (logr(rho) + 1.0, np.asarray(u, dtype=float)),
        grad_F=lambda rho, u: (
            2.0 * np.asarray(u, dtype=float) + np.asarray(u, dtype=float) * logr(rho),
            np.asarray(rho, dtype=float) + xlogx(rho) + 2.0 * np.asarray(u, dtype=float) ** 2,
        ),
        hess_S=lambda rho, u: (
            1.0 / np.maximum(np.asarray(rho, dtype=float), 1e-300),
            np.zeros_like(np.asarray(rho, dtype=float)),
            np.ones_like(np.asarray(u, dtype=float)),
        ),
        tag="global-convex",
        convex=True,
    )


def entropy_residual(pair: EntropyPair, rho: float, u: float, step: float = 1e-5):
    """Residuals (rel1, rel2, wave) of the entropy relations at one state.

    rel1 = F'_rho - u S'_rho - S'_u, rel2 = F'_u - rho S'_rho - 2u S'_u and
    wave = rho S''_rr + u S''_ru - S''_uu.  Closed-form derivatives are used
    when registered on the pair, otherwise central differences with `step`.
    Evaluation on the kink line of a generalized pair is refused.
    """
    if pair.kink is not None and abs(float(pair.kink(rho, u))) < 10 * step:
        raise ValueError("state lies on the non-differentiability line of the pair")

    def d(fn, wrt):
        if wrt == 0:
            return (fn(rho + step, u) - fn(rho - step, u)) / (2 * step)
        return (fn(rho, u + step) - fn(rho, u - step)) / (2 * step)

    if pair.grad_S is not None:
        S_r, S_u = (float(g) for g in pair.grad_S(rho, u))
    else:
        S_r, S_u = float(d(pair.S, 0)), float(d(pair.S, 1))
    if pair.grad_F is not None:
        F_r, F_u = (float(g) for g in pair.grad_F(rho, u))
    else:
        F_r, F_u = float(d(pair.F, 0)), float(d(pair.F, 1))
    if pair.hess_S is not None:
        S_rr, S_ru, S_uu = (float(h) for h in pair.hess_S(rho, u))
    else:
        S_rr = float((pair.S(rho + step, u) - 2 * pair.S(rho, u) + pair.S(rho - step, u)) / step**2)
        S_uu = float((pair.S(rho, u + step) - 2 * pair.S(rho, u) + pair.S(rho, u - step)) / step**2)
        S_ru = float(
            (
                pair.S(rho + step, u + step)
                - pair.S(rho + step, u - step)
                - pair.S(rho - step, u + step)
                + pair.S(rho - step, u - step)
            )
            / (4 * step**2)
        )
    rel1 = F_r - u * S_r - S_u
    rel2 = F_u - rho * S_r - 2 * u * S_u
    wave = rho * S_rr + u * S_ru - S_uu
    return rel1, rel2, wave


# ---------------------------------------------------------------------------
# finite-volume reference solvers
# ---------------------------------------------------------------------------

@dataclass
class PdeField:
    """Solution samples on uniform grids in t and x (cell centers)."""

    times: np.ndarray
    x: np.ndarray
    rho: np.ndarray  # (n_times, nx)
    u: np.ndarray
    scheme: str = "rusanov"
    cfl_used: float = 0.0
    negative_rho_clips: int = 0

    def mass(self) -> tuple[np.ndarray, np.ndarray]:
        return self.rho.mean(axis=1), self.u.mean(axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,x,rho,u\n")
            for it, t in enumerate(self.times):
                for ix, xx in enumerate(self.x):
                    fh.write(f"{t!r},{xx!r},{self.rho[it, ix]!r},{self.u[it, ix]!r}\n")


def _rusanov_step(rho, u, dt, dx):
    lam, mu = char_speeds(np.maximum(rho, 0.0), u)
    sr = np.maximum(np.abs(lam), np.abs(mu))
    c = np.maximum(sr, np.roll(sr, -1))  # interface i+1/2 between cells i, i+1
    f1, f2 = macro_flux(rho, u)
    F1 = 0.5 * (f1 + np.roll(f1, -1)) - 0.5 * c * (np.roll(rho, -1) - rho)
    F2 = 0.5 * (f2 + np.roll(f2, -1)) - 0.5 * c * (np.roll(u, -1) - u)
    rho_new = rho - dt / dx * (F1 - np.roll(F1, 1))
    u_new = u - dt / dx * (F2 - np.roll(F2, 1))
    return rho_new, u_new


def _viscous_step(rho, u, dt, dx, sigma_pde):
    f1, f2 = macro_flux(rho, u)
    F1 = 0.5 * (f1 + np.roll(f1, -1)) - sigma_pde * (np.roll(rho, -1) - rho) / dx
    F2 = 0.5 * (f2 + np.roll(f2, -1)) - sigma_pde * (np.roll(u, -1) - u) / dx
    rho_new = rho - dt / dx * (F1 - np.roll(F1, 1))
    u_new = u - dt / dx * (F2 - np.roll(F2, 1))
    return rho_new, u_new


def solve_reference(
    init: Callable | tuple,
    T: float,
    nx: int,
    scheme: str = "rusanov",
    sigma_pde: float | None = None,
    cfl: float = 0.45,
    n_times: int = 200,
) -> PdeField:
    """Conservative first-order solve of the Cauchy problem on the torus.

    init is either a callable x -> (rho, u) or a pair of arrays of length nx.
    scheme "rusanov" uses the local Lax-Friedrichs flux; "viscous" a centered
    flux plus explicit sigma_pde * d_x^2 with the diffusive stability bound.
    Aborts if rho drops below -1e-8 (cell index reported); tiny negatives are
    projected to zero and counted.
    """
    if nx < 64:
        raise ValueError("nx >= 64 required")
    if scheme == "viscous" and (sigma_pde is None or sigma_pde <= 0):
        raise ValueError("viscous scheme needs sigma_pde > 0")
    x = (np.arange(nx) + 0.5) / nx
    if callable(init):
        rho0, u0 = init(x)
        rho = np.broadcast_to(np.asarray(rho0, dtype=float), (nx,)).copy()
        u = np.broadcast_to(np.asarray(u0, dtype=float), (nx,)).copy()
    else:
        rho = np.asarray(init[0], dtype=float).copy()
        u = np.asarray(init[1], dtype=float).copy()
    dx = 1.0 / nx
    times = np.linspace(0.0, T, n_times + 1)
    out_rho = np.empty((len(times), nx))
    out_u = np.empty((len(times), nx))
    out_rho[0], out_u[0] = rho, u
    t = 0.0
    clips = 0
    cfl_used = 0.0
    for k in range(1, len(times)):
        while t < times[k] - 1e-14:
            c = max(max_speed(rho, u), 1e-12)
            dt = cfl * dx / c
            if scheme == "viscous":
                dt = min(dt, 0.4 * dx * dx / sigma_pde, 1.6 * sigma_pde / c**2)
            dt = min(dt, times[k] - t)
            cfl_used = max(cfl_used, dt * c / dx)
            if scheme == "rusanov":
                rho, u = _rusanov_step(rho, u, dt, dx)
            else:
                rho, u = _viscous_step(rho, u, dt, dx, sigma_pde)
            if np.any(rho < -1e-8):
                bad = int(np.argmin(rho))
                raise FloatingPointError(
                    f"rho = {rho[bad]:.3e} < -1e-8 in cell {bad} at t = {t:.4f} ({scheme})"
                )
            neg = rho < 0.0
            if np.any(neg):
                clips += int(np.sum(neg))
                rho = np.where(neg, 0.0, rho)
            t += dt
        out_rho[k], out_u[k] = rho, u
        t = times[k]
    return PdeField(times, x, out_rho, out_u, scheme=scheme, cfl_used=cfl_used, negative_rho_clips=clips)


def riemann_init(rho_l: float, u_l: float, rho_r: float, u_r: float, x0: float = 0.5):
    """Two-front torus Riemann data: left state on [0, x0), right on [x0, 1)."""

    def init(x):
        left = x < x0
        return np.where(left, rho_l, rho_r), np.where(left, u_l, u_r)

    return init


def l1_distance(field_a: PdeField, field_b: PdeField) -> float:
    """Space-time L1 distance of (rho, u), restricting to the coarser grid."""
    if len(field_a.x) % len(field_b.x) == 0:
        fine, coarse = field_a, field_b
    elif len(field_b.x) % len(field_a.x) == 0:
        fine, coarse = field_b, field_a
    else:
        raise ValueError("grid sizes must be nested")
    r = len(fine.x) // len(coarse.x)
    rho_f = fine.rho.reshape(fine.rho.shape[0], -1, r).mean(axis=2)
    u_f = fine.u.reshape(fine.u.shape[0], -1, r).mean(axis=2)
    if len(fine.times) != len(coarse.times):
        raise ValueError("time grids must match")
    err = np.abs(rho_f - coarse.rho) + np.abs(u_f - coarse.u)
    return float(np.trapezoid(err.mean(axis=1), fine.times))


# ---------------------------------------------------------------------------
# space-time test functions and the weak entropy inequality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """Nonnegative C^2 space-time bump with analytic partial derivatives."""

    ct: float
    cx: float
    rt: float
    rx: float

    def _parts(self, t, x):
        kern = default_kernel()
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        dxp = (x - self.cx + 0.5) % 1.0 - 0.5  # periodic displacement
        at = kern.a((t - self.ct) / self.rt)
        ax = kern.a(dxp / self.rx)
        dat = kern.da((t - self.ct) / self.rt) / self.rt
        dax = kern.da(dxp / self.rx) / self.rx
        return at, ax, dat, dax

    def phi(self, t, x):
        at, ax, _, _ = self._parts(t, x)
        return 0.5625 * at * ax  # (3/4)^2 normalizes the peak to 1

    def dphi_dt(self, t, x):
        at, ax, dat, _ = self._parts(t, x)
        return 0.5625 * dat * ax

    def dphi_dx(self, t, x):
        at, ax, _, dax = self._parts(t, x)
        return 0.5625 * at * dax


def test_function_bank(count: int, T: float) -> list[TestFunction]:
    """Deterministic bank of bumps supported in [0, T) x torus.

    Centers sweep the domain; every bump vanishes before t = T, and the first
    few see t = 0 (their support would extend to negative times).
    """
    bank = []
    i = 0
    while len(bank) < count:
        frac_t = (0.15 + 0.6 * ((i * 0.37) % 1.0))
        cx = (0.13 + i * 0.41) % 1.0
        rt = T * (0.25 + 0.15 * ((i * 0.73) % 1.0))
        rx = 0.12 + 0.1 * ((i * 0.53) % 1.0)
        ct = frac_t * T
        if ct + rt >= 0.98 * T:  # keep support away from t = T
            ct = 0.98 * T - rt
        bank.append(TestFunction(ct=ct, cx=cx, rt=rt, rx=rx))
        i += 1
    return bank


def weak_entropy_residual(times, x, rho, u, pair: EntropyPair, phi: TestFunction) -> float:
    """Integrated entropy inequality for a (t, x) field; >= -tol for entropy solutions.

    Returns int int (d_t phi S + d_x phi F) dx dt + int phi(0, .) S(., 0) dx by
    trapezoid quadrature in t and exact mean in x.  States are clamped onto
    the domain triangle before evaluating (S, F).
    """
    tt = np.asarray(times, dtype=float)[:, None]
    xx = np.asarray(x, dtype=float)[None, :]
    pv = phi.phi(tt, xx)
    if np.any(pv < -1e-12):
        raise ValueError("test function must be nonnegative")
    rc, uc, _ = clamp_to_domain(rho, u)
    S = pair.S(rc, uc)
    F = pair.F(rc, uc)
    integrand = phi.dphi_dt(tt, xx) * S + phi.dphi_dx(tt, xx) * F
    bulk = float(np.trapezoid(integrand.mean(axis=1), np.asarray(times, dtype=float)))
    initial = float(np.mean(phi.phi(times[0], xx[0]) * S[0]))
    return bulk + initial
