"""Laplace-averaged spreading of a localized state on a finite box.

For ``H = Q diag(lam) Q^T`` and the initial state at the centre site, the
Laplace time average with weight ``(2/t) exp(-2s/t)`` of
``|<exp(-isH) delta_0, delta_n>|^2`` is

    sum_{k,j} Q_0k Q_0j Q_nk Q_nj / (1 + t^2 (lam_k - lam_j)^2 / 4),

so moments are exact at every ``t`` given one eigendecomposition.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .substitution import SequenceWindow
from .transfer import DEFAULT_POTENTIAL, PotentialMap

#: averaged probability allowed on the two boundary sites
EDGE_MASS = 1e-6


class InsufficientRange(ValueError):
    pass


@dataclass
class LatticeHamiltonian:
    """``(H u)(n) = u(n+1) + u(n-1) + V(n) u(n)`` on ``[-N, N]`` with Dirichlet ends."""

    half_width: int
    diagonal: np.ndarray

    def __post_init__(self):
        self.diagonal = np.asarray(self.diagonal, dtype=float)
        if self.diagonal.shape != (2 * self.half_width + 1,):
            raise ValueError("diagonal must have 2N+1 entries")

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.half_width, self.half_width + 1)

    def matrix(self) -> np.ndarray:
        size = len(self.diagonal)
        h = np.diag(self.diagonal)
        i = np.arange(size - 1)
        h[i, i + 1] = h[i + 1, i] = 1.0
        return h

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix())


def build_hamiltonian(window: SequenceWindow, pot: PotentialMap = DEFAULT_POTENTIAL
                      ) -> LatticeHamiltonian:
    """Box Hamiltonian on a window covering ``[-N, N]``."""
    if window.start > 0 or window.stop <= 0 or window.start + window.stop != 1:
        raise ValueError("window must cover [-N, N] symmetrically")
    return LatticeHamiltonian(-window.start, pot.values(window.letters))


def free_hamiltonian(N: int) -> LatticeHamiltonian:
    return LatticeHamiltonian(N, np.zeros(2 * N + 1))


def averaged_probabilities(H: LatticeHamiltonian, t: float) -> np.ndarray:
    """Laplace-time-averaged occupation of every site, starting from site 0."""
    if t <= 0:
        raise ValueError("t must be positive")
    lam, q = H.eig
    a = q * q[H.half_width]  # a[n, k] = Q_nk Q_0k
    w = 1.0 / (1.0 + (0.5 * t * (lam[:, None] - lam[None, :])) ** 2)
    return np.einsum("nk,nk->n", a @ w, a)


def averaged_moment(H: LatticeHamiltonian, p: float, t: float) -> float:
    """``<|X|^p>(t)`` under the Laplace time average."""
    if p <= 0:
        raise ValueError("p must be positive")
    prob = averaged_probabilities(H, t)
    return float(np.abs(H.sites) ** p @ prob)


def edge_mass(prob: np.ndarray) -> float:
    return float(prob[0] + prob[-1])


@dataclass
class TransportSeries:
    p: float
    samples: list[tuple[float, float]]
    beta_minus: float
    beta_plus: float
    boundary_flag: bool
    t_cap: float | None = None
    edge: list[float] = field(default_factory=list)


def t_grid(t_min: float = 1.0, t_max: float = 1e3, per_decade: int = 16) -> np.ndarray:
    count = int(round(np.log10(t_max / t_min) * per_decade)) + 1
    return np.geomspace(t_min, t_max, count)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("PDSPEC_THREADS", "1")))
    except ValueError:
        return 1


def moment_series(H: LatticeHamiltonian, p: float, ts) -> TransportSeries:
    """Moments over an increasing ``t`` grid, truncated before the first ``t``
    where the boundary sites hold more than ``EDGE_MASS``."""
    ts = np.asarray(ts, dtype=float)
    if np.any(np.diff(ts) <= 0):
        raise ValueError("t grid must be strictly increasing")
    H.eig  # one decomposition, shared read-only by the workers
    r = np.abs(H.sites) ** p
    samples, edges, cap = [], [], None
    nw = _workers()
    with ThreadPoolExecutor(nw) as pool:
        for lo in range(0, len(ts), nw):
            chunk = ts[lo: lo + nw]
            for t, pr in zip(chunk, pool.map(lambda t: averaged_probabilities(H, t), chunk)):
                e = edge_mass(pr)
                if e > EDGE_MASS:
                    cap = float(t)
                    break
                samples.append((float(t), float(r @ pr)))
                edges.append(e)
            if cap is not None:
                break
    try:
        bm, bp = beta_exponents(samples, p)
    except InsufficientRange:
        bm = bp = float("nan")
    return TransportSeries(p, samples, bm, bp, cap is not None, cap, edges)


def beta_exponents(samples, p: float, window: float = 2.0, min_points: int = 3
                   ) -> tuple[float, float]:
    """Smallest and largest log-log slope of the moment, divided by ``p``, over
    sliding windows spanning a factor ``window`` in ``t``.

    These are finite-time stand-ins for the liminf and limsup exponents.
    """
    s = np.asarray(samples, dtype=float)
    if len(s) < 6 or s[-1, 0] / s[0, 0] < 100 * (1 - 1e-9):
        raise InsufficientRange("need at least 6 samples over 2 decades of t")
    lt, lm = np.log(s[:, 0]), np.log(s[:, 1])
    slopes = []
    for i in range(len(s)):
        # shortest run of samples starting at i that spans the factor
        j = np.searchsorted(lt, lt[i] + np.log(window) * (1 - 1e-9)) + 1
        if j > len(s):
            break
        j = max(j, i + min_points)
        if j <= len(s):
            slopes.append(np.polyfit(lt[i:j], lm[i:j], 1)[0] / p)
    if not slopes:
        raise InsufficientRange(f"no window spans a factor {window} with {min_points} points")
    return float(min(slopes)), float(max(slopes))


def compare_guarneri(beta: float, alpha: float) -> dict:
    """Whether a transport exponent proxy respects the lower bound ``alpha``."""
    margin = beta - alpha
    return {"pass": bool(margin >= 0), "margin": margin, "beta": beta, "alpha": alpha}
