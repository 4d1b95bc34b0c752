"""Truncated norms of generalized eigenfunctions and their power-law growth."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import substitution as subs
from .bounds import ConstantsLedger, Tally
from .transfer import (DEFAULT_POTENTIAL, NicState, PotentialMap, solution_values,
                       word_transfer)


class HypothesisViolation(ValueError):
    """The square or bounded-trace hypothesis of the two-block step fails."""


class DegenerateFit(ValueError):
    pass


def _partial_sums(sq: np.ndarray) -> np.ndarray:
    """``S[k] = sq[1] + ... + sq[k]`` with ``S[0] = 0``; ``sq[0]`` is ignored."""
    s = np.zeros_like(sq)
    np.cumsum(sq[..., 1:], axis=-1, out=s[..., 1:])
    return s


def _truncate(sq: np.ndarray, L) -> np.ndarray:
    """``[sum_{n<=[L]} sq[n] + (L - [L]) sq[[L]+1]]^(1/2)`` along the last axis."""
    L = np.asarray(L, dtype=float)
    fl = np.floor(L).astype(int)
    frac = L - fl
    s = _partial_sums(sq)
    nxt = np.minimum(fl + 1, sq.shape[-1] - 1)
    tail = np.where(frac > 0, np.take(sq, nxt, axis=-1), 0.0)
    return np.sqrt(np.take(s, fl, axis=-1) + frac * tail)


def u_norms(u: np.ndarray, L) -> np.ndarray:
    """``||u||_L`` from the values ``u(0) .. u(N)`` (last axis)."""
    return _truncate(u**2, L)


def U_norms(u: np.ndarray, L) -> np.ndarray:
    """Same truncation applied to ``||U(n)||^2 = u(n)^2 + u(n-1)^2``."""
    sq = np.zeros_like(u)
    sq[..., 1:] = u[..., 1:] ** 2 + u[..., :-1] ** 2
    return _truncate(sq, L)


def _needed(L) -> int:
    return int(np.floor(np.max(L))) + 1


def truncated_norm(E: float, nic: NicState, L: float,
                   pot: PotentialMap = DEFAULT_POTENTIAL) -> float:
    if L <= 0:
        raise ValueError("L must be positive")
    u = solution_values(E, nic, _needed(L), pot)
    return float(u_norms(u, L))


def square_condition(start: int, period: int, l: int) -> bool:
    """Sites ``start+1 .. start+l+2*period-1`` carry a potential of period ``period``.

    Site ``i`` of the solution sees the letter at position ``i - 1``.
    """
    w = subs.fixed_point_window(start, l + 2 * period - 1).letters
    return w[period:] == w[: len(w) - period]


def find_square_start(period: int, l: int, limit: int | None = None) -> int:
    """Smallest ``start >= 0`` satisfying :func:`square_condition`, scanning
    positions aligned to ``period``."""
    limit = limit if limit is not None else 16 * period
    for s in range(0, limit + 1, period):
        if square_condition(s, period, l):
            return s
    raise HypothesisViolation(f"no square of period {period} found below {limit}")


def two_block_margin(E: float, nic: NicState, n_k: int, l: int, C: float,
                     pot: PotentialMap = DEFAULT_POTENTIAL, start: int | None = None) -> float:
    """``log`` of ``||U||_{window of l+2n_k} / (D ||U||_{window of l})`` on a square window.

    The windows are the sites ``start+1 ..``; with ``start = 0`` they are the
    ordinary truncated norms.  ``start=None`` takes the first square window.
    """
    if not 1 <= l <= n_k:
        raise ValueError("need 1 <= l <= n_k")
    if start is None:
        start = find_square_start(n_k, l)
    elif not square_condition(start, n_k, l):
        raise HypothesisViolation(f"sites from {start + 1} are not a square of period {n_k}")
    period = subs.fixed_point_window(start, n_k).letters
    tr = float(word_transfer(E, period, pot).trace())
    if abs(tr) > C:
        raise HypothesisViolation(f"|trace| = {abs(tr):.6g} exceeds C = {C}")
    D = math.hypot(1.0, 0.5 / C)
    u = solution_values(E, nic, start + l + 2 * n_k + 1, pot)
    sq = np.zeros_like(u)
    sq[1:] = u[1:] ** 2 + u[:-1] ** 2
    inner = sq[start + 1: start + l + 1].sum()
    outer = sq[start + 1: start + l + 2 * n_k + 1].sum()
    return 0.5 * math.log(outer / inner) - math.log(D)


def check_two_block_step(E: float, nic: NicState, n_k: int, l: int, C: float,
                         pot: PotentialMap = DEFAULT_POTENTIAL, start: int | None = None) -> bool:
    return two_block_margin(E, nic, n_k, l, C, pot, start) >= 0


def three_scale_margin(u: np.ndarray, n: int, D: float) -> np.ndarray:
    """``log ||U||_{2^{n+2}} - log(D ||U||_{2^{n-1}})`` for precomputed solutions."""
    if n < 1:
        raise ValueError("n must be positive")
    return np.log(U_norms(u, 2.0 ** (n + 2))) - np.log(D * U_norms(u, 2.0 ** (n - 1)))


def check_three_scale_inequality(E: float, nic: NicState, n: int, D: float,
                                 pot: PotentialMap = DEFAULT_POTENTIAL) -> bool:
    u = solution_values(E, nic, 2 ** (n + 2) + 1, pot)
    return bool(three_scale_margin(u, n, D) >= 0)


@dataclass
class NormProfile:
    energy: float
    nic: NicState
    samples: list[tuple[float, float]]
    gamma1_emp: float
    gamma2_emp: float
    fit_window: tuple[float, float]
    alpha_emp: float = field(init=False)

    def __post_init__(self):
        self.alpha_emp = alpha_from_gammas(self.gamma1_emp, self.gamma2_emp)


def _is_cube_dyadic(L: float) -> bool:
    m = math.log2(L)
    return abs(m - round(m)) < 1e-12 and round(m) % 3 == 0


def fit_power_exponents(samples, fit_window) -> tuple[float, float]:
    """Lower and upper empirical growth exponents of ``L -> ||u||_L``.

    The lower one is the least-squares log-log slope over the samples at
    ``L = 8**n``; the upper one is the steepest chord between any two samples.
    """
    lo, hi = fit_window
    pts = np.array([(L, v) for L, v in samples if lo <= L <= hi], dtype=float)
    if len(pts) < 8:
        raise ValueError(f"need at least 8 samples in the fit window, got {len(pts)}")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(y) == 0:
        raise DegenerateFit("all norms equal")
    cube = np.array([_is_cube_dyadic(L) for L in pts[:, 0]])
    if cube.sum() < 2:
        raise ValueError("need at least two samples at L = 8**n in the fit window")
    g1 = float(np.polyfit(x[cube], y[cube], 1)[0])
    dx = x[None, :] - x[:, None]
    dy = y[None, :] - y[:, None]
    g2 = float(np.max(dy[dx > 0] / dx[dx > 0]))
    return g1, g2


def alpha_from_gammas(gamma1: float, gamma2: float) -> float:
    """``2 g1 / (g1 + g2)``, in ``(0, 1]`` for ``0 < g1 <= g2``."""
    if not 0 < gamma1 <= gamma2:
        raise ValueError(f"need 0 < gamma1 <= gamma2, got {gamma1}, {gamma2}")
    return 2 * gamma1 / (gamma1 + gamma2)


def dyadic_grid(m_max: int = 15, m_min: int = 0) -> np.ndarray:
    return 2.0 ** np.arange(m_min, m_max + 1)


def norm_profile(E: float, nic: NicState, L_list=None,
                 pot: PotentialMap = DEFAULT_POTENTIAL,
                 fit_window: tuple[float, float] = (8.0, 2.0**15)) -> NormProfile:
    L = np.asarray(dyadic_grid() if L_list is None else L_list, dtype=float)
    if np.any(np.diff(L) <= 0):
        raise ValueError("L_list must be strictly increasing")
    with np.errstate(over="ignore", invalid="ignore"):
        u = solution_values(E, nic, _needed(L), pot)
        norms = u_norms(u, L)
    if not np.all(np.isfinite(norms)):
        raise OverflowError(f"solution at E={E} overflows before L={L[-1]:g}; "
                            "E is far from the spectrum")
    samples = [(float(a), float(b)) for a, b in zip(L, norms)]
    g1, g2 = fit_power_exponents(samples, fit_window)
    return NormProfile(float(E), nic, samples, g1, g2, fit_window)


@dataclass
class GrowthAudit:
    three_scale: Tally
    chained: Tally
    cubic: Tally
    corollary: Tally
    upper: Tally
    lower: Tally
    lower_all: Tally
    ordering: Tally

    def as_dict(self) -> dict:
        return {k: v.as_dict() for k, v in vars(self).items()}


def audit(energies, nics, ledger: ConstantsLedger, pot: PotentialMap = DEFAULT_POTENTIAL,
          n_max: int = 10, m_max: int = 15, corollary_from: int = 9,
          lower_from: int = 9) -> GrowthAudit:
    """Lower-bound chain and two-sided envelope over every (energy, NIC) pair.

    The lower envelope is an asymptotic statement: ``lower`` tallies it from
    ``L = 2**lower_from`` on, by default the same range as the corollary, while
    ``lower_all`` tallies every dyadic ``L`` from 1.  At ``L = 1`` it must fail
    for the NIC with ``u(1) = 0``.
    """
    E = np.asarray(energies, dtype=float)
    u = solution_values(E, nics, max(2 ** (n_max + 2), 2**m_max) + 1, pot)
    out = GrowthAudit(*(Tally() for _ in range(8)))
    for n in range(1, n_max + 1):
        for v in three_scale_margin(u, n, ledger.D).ravel():
            out.three_scale.add(float(v))
    for n in range(1, m_max // 3 + 1):
        # ||U||_{8^n} >= D^n, with ||U||_1 = 1 under NIC
        v = np.log(U_norms(u, 8.0**n)) - n * math.log(ledger.D)
        for x in v.ravel():
            out.chained.add(float(x))
        # ||u||_{8^n} >= C1 (8^n)^gamma = C1 D^n
        v = np.log(u_norms(u, 8.0**n)) - math.log(ledger.C1) - n * 3 * ledger.gamma * math.log(2)
        for x in v.ravel():
            out.cubic.add(float(x))
    for m in range(corollary_from, m_max + 1):
        L = 2.0**m
        v = np.log(u_norms(u, L)) - math.log(ledger.C1 * L ** (ledger.gamma / 2))
        for x in v.ravel():
            out.corollary.add(float(x))
    for m in range(0, m_max + 1):
        L = 2.0**m
        with np.errstate(divide="ignore"):  # ||u||_1 = 0 when u(1) = 0
            lu = np.log(u_norms(u, L))
        for x in (ledger.gamma2 * math.log(L) - lu).ravel():
            out.upper.add(float(x))
        for x in (lu - math.log(ledger.C1 * L**ledger.gamma1)).ravel():
            out.lower_all.add(float(x))
            if m >= lower_from:
                out.lower.add(float(x))
        # ||u||_L^2 <= ||U||_L^2 <= 2||u||_L^2 + u(0)^2 at integer L
        uu, UU = u_norms(u, L) ** 2, U_norms(u, L) ** 2
        gap = np.minimum(UU - uu, 2 * uu + u[..., 0] ** 2 - UU)
        for x in (gap / np.maximum(UU, 1.0) + 1e-12).ravel():
            out.ordering.add(float(x))
    return out
