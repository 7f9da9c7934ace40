"""Kernel-weighted mesoscopic block averages and their spatial derivatives.

A local observable v with per-site values v_j is smoothed at macroscopic
position x through a fixed C^2 window a supported on [-1, 1]:

    vhat(x)      = (1/l)   sum_j a((n x - j)/l)   v_j
    d_x vhat(x)  = (n/l^2) sum_j a'((n x - j)/l)  v_j
    d_x^2 vhat(x)= (n^2/l^3) sum_j a''((n x - j)/l) v_j

On the canonical grid x_i = i/n the kernel argument is lattice-aligned, so a
snapshot's field is a circular correlation with a precomputed weight table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .equilibrium import LocalObservable


@dataclass(frozen=True)
class WeightKernel:
    """Evaluators of the window a and its first two derivatives."""

    a: callable
    da: callable
    dda: callable
    name: str = "kernel"

    def tables(self, l: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values of a, a', a'' at the lattice offsets k/l, k = -l..l."""
        k = np.arange(-l, l + 1) / l
        return self.a(k), self.da(k), self.dda(k)


def _bump(x):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    c = np.cos(np.pi * x)
    return np.where(inside, (1.0 + c) ** 2 / 3.0, 0.0)


def _bump_d1(x):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    c, s = np.cos(np.pi * x), np.sin(np.pi * x)
    return np.where(inside, -2.0 * np.pi * (1.0 + c) * s / 3.0, 0.0)


def _bump_d2(x):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    c, s = np.cos(np.pi * x), np.sin(np.pi * x)
    return np.where(inside, 2.0 * np.pi**2 * (s**2 - c * (1.0 + c)) / 3.0, 0.0)


def default_kernel() -> WeightKernel:
    """The canonical window a(x) = (1 + cos pi x)^2 / 3 on [-1, 1].

    Even, unit mass, C^2 with a = a' = a'' = 0 at the support edges.
    """
    return WeightKernel(_bump, _bump_d1, _bump_d2, name="cos-squared")


def choose_block_size(n: int, sigma: float) -> int:
    """Mesoscopic block size inside the open window (n^{2/3} sigma^{1/3}, n sigma).

    Takes the rounded geometric mean of the two ends, clamped strictly inside.
    The window is nonempty iff n sigma^2 > 1; otherwise raise and tell the
    caller to increase n or sigma.
    """
    lower = n ** (2.0 / 3.0) * sigma ** (1.0 / 3.0)
    upper = n * sigma
    if lower >= upper:
        raise ValueError(
            f"empty block-size window for n = {n}, sigma = {sigma:.4g} "
            f"(need n sigma^2 > 1; got {n * sigma * sigma:.4g}); raise n or sigma"
        )
    l = int(round(np.sqrt(lower * upper)))
    l = max(l, int(np.floor(lower)) + 1)
    l = min(l, int(np.ceil(upper)) - 1)
    if not lower < l < upper:
        raise ValueError(f"no integer block size strictly inside ({lower:.3f}, {upper:.3f})")
    return l


def block_average(spins: np.ndarray, v: LocalObservable, x: float, l: int, kernel: WeightKernel) -> float:
    """Exact block average of v at an arbitrary torus point x."""
    n = len(spins)
    if not 1 <= l < n / 2:
        raise ValueError("need 1 <= l < n/2")
    vals = v.values(spins)
    pos = x * n
    js = np.arange(int(np.ceil(pos - l)), int(np.floor(pos + l)) + 1)
    w = kernel.a((pos - js) / l)
    return float(np.dot(w, vals[js % n]) / l)


def block_derivative(
    spins: np.ndarray, v: LocalObservable, x: float, l: int, kernel: WeightKernel, order: int = 1
) -> float:
    """Exact d_x or d_x^2 of the block average at x."""
    n = len(spins)
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    vals = v.values(spins)
    pos = x * n
    js = np.arange(int(np.ceil(pos - l)), int(np.floor(pos + l)) + 1)
    arg = (pos - js) / l
    if order == 1:
        return float(np.dot(kernel.da(arg), vals[js % n]) * n / l**2)
    return float(np.dot(kernel.dda(arg), vals[js % n]) * n**2 / l**3)


def _correlate(values: np.ndarray, table: np.ndarray, l: int) -> np.ndarray:
    """(sum_k table[k] * values[..., i-k]) for i on the lattice grid."""
    out = np.zeros_like(values, dtype=np.float64)
    for k in range(-l, l + 1):
        w = table[k + l]
        if w != 0.0:
            out += w * np.roll(values, k, axis=-1)
    return out


def grid_field(values: np.ndarray, l: int, kernel: WeightKernel, order: int = 0) -> np.ndarray:
    """Block field (or its x-derivative) of per-site values on the grid i/n.

    `values` may be (n,) or stacked (..., n); the site axis is last.
    """
    n = values.shape[-1]
    w0, w1, w2 = kernel.tables(l)
    if order == 0:
        return _correlate(values, w0, l) / l
    if order == 1:
        return _correlate(values, w1, l) * n / l**2
    if order == 2:
        return _correlate(values, w2, l) * n**2 / l**3
    raise ValueError("order must be 0, 1 or 2")


@dataclass
class SpaceTimeField:
    """Block fields of chosen observables over a snapshot grid.

    data maps names like "eta_hat", "dx_eta_hat" to (n_times, n) arrays on
    the canonical grid x_i = i/n.
    """

    times: np.ndarray
    n: int
    l: int
    data: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def __getitem__(self, key: str) -> np.ndarray:
        return self.data[key]

    def to_csv(self, path) -> None:
        names = sorted(self.data)
        with open(path, "w") as fh:
            fh.write("t,x," + ",".join(names) + "\n")
            for it, t in enumerate(self.times):
                for ix in range(self.n):
                    row = ",".join(repr(float(self.data[k][it, ix])) for k in names)
                    fh.write(f"{t!r},{ix / self.n!r},{row}\n")

    def to_npz(self, path) -> None:
        """Compact binary layout: times, n, l plus one array per field name."""
        np.savez_compressed(path, times=self.times, n=self.n, l=self.l, **self.data)

    @classmethod
    def from_npz(cls, path) -> "SpaceTimeField":
        data = dict(np.load(path))
        times = data.pop("times")
        n = int(data.pop("n"))
        l = int(data.pop("l"))
        return cls(times=times, n=n, l=l, data=data)


def snapshot_fields(
    record,
    observables: Sequence[LocalObservable],
    l: int,
    kernel: WeightKernel,
    derivatives: Sequence[str] = (),
    second_derivatives: Sequence[str] = (),
    times: np.ndarray | None = None,
) -> SpaceTimeField:
    """Deterministic block fields of a trajectory record.

    `derivatives` / `second_derivatives` name observables whose d_x / d_x^2
    fields are wanted in addition to the plain hats.  If `times` is given it
    must be a subset of the record's snapshot grid.
    """
    if times is None:
        idx = np.arange(len(record.times))
    else:
        idx = np.searchsorted(record.times, times)
        ok = (idx < len(record.times)) & np.isclose(record.times[np.minimum(idx, len(record.times) - 1)], times)
        if not np.all(ok):
            missing = np.asarray(times)[~ok]
            raise ValueError(f"snapshot missing for time(s) {missing}")
    snaps = record.snapshots[idx]
    out = SpaceTimeField(times=record.times[idx].copy(), n=record.params.n, l=l)
    for v in observables:
        vals = np.stack([v.values(s) for s in snaps]).astype(np.float64)
        out.data[f"{v.name}_hat"] = grid_field(vals, l, kernel, order=0)
        if v.name in derivatives:
            out.data[f"dx_{v.name}_hat"] = grid_field(vals, l, kernel, order=1)
        if v.name in second_derivatives:
            out.data[f"dxx_{v.name}_hat"] = grid_field(vals, l, kernel, order=2)
    return out
