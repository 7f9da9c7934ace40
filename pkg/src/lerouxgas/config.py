"""Experiment configuration: parsing, validation, defaults.

Config files are plain ``key = value`` lines (# comments allowed).  All
physics constants live here, never in code: the viscosity law sigma = n^-beta,
the block size window, the initial profile, grid sizes, replica counts.

Validation enforces the standing assumptions by name:
  condition (A): n^{-1/2} << sigma << 1 (beta in (0, 1/2) for sweeps);
  condition (B): the block window n^{2/3} sigma^{1/3} < l < n sigma is nonempty;
  condition (C): the initial profile lies in the domain triangle D.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .blocks import choose_block_size

MODES = ("simulate", "pde", "sweep", "spectral", "lemma-check", "diagnose")

DEFAULTS = {
    "mode": "simulate",
    "n": [256],
    "beta": 0.4,
    "sigma": None,  # explicit sigma overrides beta for single runs
    "T": 0.5,
    "snapshots": 200,
    "replicas": 50,
    "seed": 1,
    "profile": "riemann:0.6,0.25,0.3,-0.2,0.5",
    "t_cells": 10,
    "x_cells": 16,
    "nx_pde": 2048,
    "l_min": 3,
    "l_max": 8,
    "threads": 1,
    "out": "runs/out",
}


@dataclass
class Profile:
    """Initial macroscopic profile (rho0, u0) on the unit torus."""

    kind: str
    params: tuple

    def __call__(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float) % 1.0
        if self.kind == "constant":
            rho, u = self.params
            return np.full_like(x, rho), np.full_like(x, u)
        if self.kind == "riemann":
            rho_l, u_l, rho_r, u_r, x0 = self.params
            left = x < x0
            return np.where(left, rho_l, rho_r), np.where(left, u_l, u_r)
        if self.kind == "bump":
            rho0, u0, amp, width = self.params
            envelope = amp * np.exp(-((x - 0.5) ** 2) / (2 * width**2))
            return rho0 + envelope, np.full_like(x, u0)
        raise ValueError(f"unknown profile kind {self.kind!r}")

    def check_domain(self, samples: int = 4096) -> None:
        x = np.arange(samples) / samples
        rho, u = self(x)
        bad = (rho < 0) | (rho + np.abs(u) > 1.0 + 1e-12)
        if np.any(bad):
            raise ValueError(
                f"profile leaves the domain rho + |u| <= 1 at x = {float(x[np.argmax(bad)])}"
            )

    @classmethod
    def parse(cls, text: str) -> "Profile":
        kind, _, rest = text.partition(":")
        kind = kind.strip()
        params = tuple(float(v) for v in rest.split(",")) if rest else ()
        arity = {"constant": 2, "riemann": 5, "bump": 4}
        if kind not in arity:
            raise ValueError(f"unknown profile kind {kind!r}")
        if len(params) != arity[kind]:
            raise ValueError(f"{kind} profile needs {arity[kind]} parameters, got {len(params)}")
        return cls(kind, params)


@dataclass
class ExperimentConfig:
    mode: str
    n: list[int]
    beta: float
    sigma: float | None
    T: float
    snapshots: int
    replicas: int
    seed: int
    profile: Profile
    t_cells: int
    x_cells: int
    nx_pde: int
    l_min: int
    l_max: int
    threads: int
    out: Path
    warnings: list[str] = field(default_factory=list)

    def sigma_of(self, n: int) -> float:
        return self.sigma if self.sigma is not None else float(n) ** (-self.beta)

    def block_size(self, n: int) -> int:
        return choose_block_size(n, self.sigma_of(n))

    def resolved(self) -> dict:
        """Config echo with every derived quantity (sigma(n), l(n)) explicit."""
        return {
            "mode": self.mode,
            "n": list(self.n),
            "beta": self.beta,
            "sigma": self.sigma,
            "T": self.T,
            "snapshots": self.snapshots,
            "replicas": self.replicas,
            "seed": self.seed,
            "profile": {"kind": self.profile.kind, "params": list(self.profile.params)},
            "t_cells": self.t_cells,
            "x_cells": self.x_cells,
            "nx_pde": self.nx_pde,
            "l_min": self.l_min,
            "l_max": self.l_max,
            "threads": self.threads,
            "out": str(self.out),
            "derived": {
                str(n): {"sigma": self.sigma_of(n), "l": self.block_size(n)} for n in self.n
            },
            "warnings": self.warnings,
        }


def parse_config_file(path: str | Path) -> dict:
    """Read ``key = value`` lines; lists are comma separated."""
    raw = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line {line!r} (expected key = value)")
        key, _, val = line.partition("=")
        raw[key.strip()] = val.strip()
    return raw


def validate_config(raw: dict) -> ExperimentConfig:
    """Normalize, fill defaults, and check conditions (A)/(B)/(C) by name."""
    merged = dict(DEFAULTS)
    merged.update({k: v for k, v in raw.items() if v is not None})
    mode = str(merged["mode"])
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    n_val = merged["n"]
    if isinstance(n_val, str):
        n_list = [int(v) for v in n_val.split(",")]
    elif isinstance(n_val, int):
        n_list = [n_val]
    else:
        n_list = [int(v) for v in n_val]
    beta = float(merged["beta"])
    sigma = merged["sigma"]
    sigma = None if sigma in (None, "", "none") else float(sigma)
    profile = merged["profile"]
    if isinstance(profile, str):
        profile = Profile.parse(profile)

    warnings = []
    if sigma is not None and not 0.0 < sigma < 1.0:
        raise ValueError(f"condition (A): sigma = {sigma} outside (0, 1)")
    if sigma is None:
        if not 0.0 < beta:
            raise ValueError("condition (A): beta must be positive so that sigma < 1")
        if beta >= 0.5:
            warnings.append(
                f"condition (A): beta = {beta} >= 1/2 violates n^(-1/2) << sigma asymptotically"
            )
    cfg = ExperimentConfig(
        mode=mode,
        n=n_list,
        beta=beta,
        sigma=sigma,
        T=float(merged["T"]),
        snapshots=int(merged["snapshots"]),
        replicas=int(merged["replicas"]),
        seed=int(merged["seed"]),
        profile=profile,
        t_cells=int(merged["t_cells"]),
        x_cells=int(merged["x_cells"]),
        nx_pde=int(merged["nx_pde"]),
        l_min=int(merged["l_min"]),
        l_max=int(merged["l_max"]),
        threads=int(merged["threads"]),
        out=Path(merged["out"]),
        warnings=warnings,
    )
    if cfg.T <= 0:
        raise ValueError("T must be positive")
    if cfg.mode in ("simulate", "sweep", "diagnose"):
        profile.check_domain()  # condition (C)
        for n in cfg.n:
            s = cfg.sigma_of(n)
            if not 0.0 < s < 1.0:
                raise ValueError(f"condition (A): sigma({n}) = {s:.4g} outside (0, 1)")
            try:
                cfg.block_size(n)
            except ValueError as exc:
                raise ValueError(f"condition (B): {exc}") from None
    return cfg
