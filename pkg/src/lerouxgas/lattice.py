"""Spin configurations on the discrete torus and the local rate/flux observables.

Sites carry spins in {-1, 0, +1}.  The two conserved one-site observables are
the hole indicator eta = 1 - |w| and the spin itself xi = w; their sums over
the torus are invariant under every nearest-neighbour exchange.

Configurations are plain numpy int8 arrays of length n with periodic index
arithmetic; all functions here are pure.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

SPINS = (-1, 0, 1)

#: asymmetric exchange rates r(left, right), indexed by spin+1
RATE_R = np.zeros((3, 3), dtype=np.int64)
for _a in SPINS:
    for _b in SPINS:
        # r = 1{left=-1}(1 - 1{right=-1}) + 1{right=+1}(1 - 1{left=+1})
        RATE_R[_a + 1, _b + 1] = (_a == -1) * (1 - (_b == -1)) + (_b == 1) * (1 - (_a == 1))

#: symmetric (stirring) rates s(left, right) = 1{left != right}
RATE_S = np.zeros((3, 3), dtype=np.int64)
for _a in SPINS:
    for _b in SPINS:
        RATE_S[_a + 1, _b + 1] = int(_a != _b)


def local_observables(s: int) -> tuple[int, int]:
    """Return (eta, xi) = (1 - |s|, s) for a single spin."""
    return 1 - abs(s), s


def rate_r(left: int, right: int) -> int:
    """Totally asymmetric exchange rate of the ordered bond (left, right)."""
    return int(RATE_R[left + 1, right + 1])


def rate_s(left: int, right: int) -> int:
    """Symmetric exchange rate: 1 if the spins differ, else 0."""
    return int(RATE_S[left + 1, right + 1])


def rate_r_conserved_form(left: int, right: int) -> Fraction:
    """The asymmetric rate written in the conserved variables, exactly.

    r = (1/4)(1-eta-xi)(1+eta'+xi') + (1/4)(1+eta-xi)(1-eta'+xi')
    with (eta, xi) of the left spin and primes on the right spin.  Equals
    rate_r on all nine spin pairs; kept as a Fraction so the nine-case
    equality can be asserted without tolerance.
    """
    eta, xi = local_observables(left)
    etp, xip = local_observables(right)
    q = Fraction(1, 4)
    return q * (1 - eta - xi) * (1 + etp + xip) + q * (1 + eta - xi) * (1 - etp + xip)


# instantaneous fluxes across a bond (left, right); product forms
PSI = np.zeros((3, 3), dtype=np.int64)
PHI = np.zeros((3, 3), dtype=np.int64)
PSI_S = np.zeros((3, 3), dtype=np.int64)
PHI_S = np.zeros((3, 3), dtype=np.int64)
for _a in SPINS:
    for _b in SPINS:
        _ea, _xa = local_observables(_a)
        _eb, _xb = local_observables(_b)
        _r = RATE_R[_a + 1, _b + 1]
        PSI[_a + 1, _b + 1] = _r * (_ea - _eb)
        PHI[_a + 1, _b + 1] = _r * (_xa - _xb)
        PSI_S[_a + 1, _b + 1] = _ea - _eb
        PHI_S[_a + 1, _b + 1] = _xa - _xb


def micro_flux(spins: np.ndarray, j: int) -> tuple[int, int, int, int]:
    """Fluxes (psi, phi, psi_s, phi_s) across the bond (j, j+1 mod n)."""
    n = len(spins)
    a = int(spins[j]) + 1
    b = int(spins[(j + 1) % n]) + 1
    return int(PSI[a, b]), int(PHI[a, b]), int(PSI_S[a, b]), int(PHI_S[a, b])


def micro_flux_closed_form(left: int, right: int) -> tuple[Fraction, Fraction, int, int]:
    """Expanded closed forms of the bond fluxes, exact rationals.

    psi = (1/2){eta xi' + eta' xi} + (1/2){eta - eta'}
    phi = (1/2){eta + eta' - 2 + 2 xi xi'} + (1/2){xi' eta - xi eta'} + {xi - xi'}
    and the symmetric fluxes are the plain discrete gradients.
    """
    eta, xi = local_observables(left)
    etp, xip = local_observables(right)
    h = Fraction(1, 2)
    psi = h * (eta * xip + etp * xi) + h * (eta - etp)
    phi = h * (eta + etp - 2 + 2 * xi * xip) + h * (xip * eta - xi * etp) + (xi - xip)
    return psi, phi, eta - etp, xi - xip


def exchange(spins: np.ndarray, j: int) -> np.ndarray:
    """Swap the spins at sites j and j+1 (mod n); returns a new array."""
    n = len(spins)
    out = spins.copy()
    k = (j + 1) % n
    out[j], out[k] = spins[k], spins[j]
    return out


def eta_field(spins: np.ndarray) -> np.ndarray:
    return 1 - np.abs(spins.astype(np.int64))


def xi_field(spins: np.ndarray) -> np.ndarray:
    return spins.astype(np.int64)


def conserved(spins: np.ndarray) -> tuple[int, int]:
    """Conserved pair (N, Z) = (number of zero spins, total spin)."""
    return int(np.sum(eta_field(spins))), int(np.sum(xi_field(spins)))


def feasible(l: int, N: int, Z: int) -> bool:
    """Whether the hyperplane {sum eta = N, sum xi = Z} on l sites is nonempty.

    Requires 0 <= N <= l, |Z| <= l - N and l - N + Z even (the plus/minus
    counts (l-N±Z)/2 must be nonnegative integers).
    """
    if not 0 <= N <= l:
        return False
    if abs(Z) > l - N:
        return False
    return (l - N + Z) % 2 == 0


def hyperplane_counts(l: int, N: int, Z: int) -> tuple[int, int, int]:
    """Counts (n_zero, n_plus, n_minus) realizing (N, Z); raises if infeasible."""
    if not feasible(l, N, Z):
        raise ValueError(f"no configuration on {l} sites has (N, Z) = ({N}, {Z})")
    n_plus = (l - N + Z) // 2
    n_minus = (l - N - Z) // 2
    return N, n_plus, n_minus


_CHAR = {-1: "-", 0: "0", 1: "+"}
_SPIN = {v: k for k, v in _CHAR.items()}


def to_string(spins: np.ndarray) -> str:
    """Serialize over the alphabet {-,0,+}, site 0 first."""
    return "".join(_CHAR[int(s)] for s in spins)


def from_string(text: str) -> np.ndarray:
    try:
        return np.array([_SPIN[c] for c in text], dtype=np.int8)
    except KeyError as exc:
        raise ValueError(f"invalid spin character {exc.args[0]!r}") from None


def all_configurations(l: int) -> np.ndarray:
    """All 3^l spin sequences on l sites as an (3^l, l) int8 matrix.

    Row c holds the base-3 digits of c minus one, least significant site
    first, so row order is the canonical radix order used throughout.
    """
    codes = np.arange(3 ** l)
    out = np.empty((3 ** l, l), dtype=np.int8)
    for j in range(l):
        out[:, j] = (codes // 3 ** j) % 3 - 1
    return out


def code_of(spins: np.ndarray) -> int:
    """Radix index of a configuration in the all_configurations order."""
    digits = np.asarray(spins, dtype=np.int64) + 1
    return int(np.sum(digits * 3 ** np.arange(len(digits))))
