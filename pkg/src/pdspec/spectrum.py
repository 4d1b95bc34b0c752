"""Trace-bounded band approximants of the spectrum.

The level-``n`` approximant is ``{E : |x_n(E)| <= bound}``.  For ``bound = 2``
this is the spectrum of the periodic operator with period word ``a_n``; its
edges are the periodic and antiperiodic Bloch eigenvalues, which seed every
other computation here.  Between consecutive band centres ``x_n`` is monotone up
to a single gap extremum, so each edge for any bound is a bracketed root.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import substitution as subs
from .transfer import DEFAULT_POTENTIAL, BlockTransfers, PotentialMap

#: bisection iterations cap; 200 halvings exhausts double precision on any bracket
MAX_HALVINGS = 200
#: energies whose transfer norms exceed this are treated as numerically unresolved
COND_CAP = 1e8


class CoarseGridWarning(UserWarning):
    """Some bands are narrower than three cells of the requested scan grid."""


@dataclass(frozen=True)
class Band:
    lo: float
    hi: float
    level: int
    bound: float = 2.0
    edge_tol: float = 1e-10

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty band [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass
class SpectrumEstimate:
    bands: list[Band]
    total_measure: float
    C_emp: float
    n_max: int
    samples: np.ndarray = field(default_factory=lambda: np.empty(0))


def level_trace(E, n: int, pot: PotentialMap = DEFAULT_POTENTIAL) -> np.ndarray:
    return BlockTransfers(E, pot)[n].trace()


def periodic_edges(n: int, pot: PotentialMap = DEFAULT_POTENTIAL) -> np.ndarray:
    """Sorted ``(2**n, 2)`` array of the level-``n`` bands for bound 2.

    Band ``j`` runs between the ``2j``-th and ``2j+1``-th of the merged sorted
    periodic/antiperiodic eigenvalues of the period-``a_n`` operator.
    """
    v = pot.values(subs.block_word("a", n))
    q = len(v)
    ev = []
    for phase in (1.0, -1.0):
        h = np.diag(v)
        for i in range(q):
            j = (i + 1) % q
            w = phase if i == q - 1 else 1.0
            h[i, j] += w
            h[j, i] += w
        ev.append(np.linalg.eigvalsh(h))
    return np.sort(np.concatenate(ev)).reshape(q, 2)


def bisect_roots(f, a, b, tol: float) -> np.ndarray:
    """Vectorized bisection for brackets ``[a, b]`` with ``f(a)`` and ``f(b)`` of
    opposite (or zero) sign."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    sa = np.sign(f(a))
    for _ in range(MAX_HALVINGS):
        if np.all(np.abs(b - a) <= tol):
            break
        m = 0.5 * (a + b)
        same = np.sign(f(m)) == sa
        a = np.where(same, m, a)
        b = np.where(same, b, m)
    return 0.5 * (a + b)


def golden_max(f, a, b, tol: float) -> np.ndarray:
    """Vectorized golden-section search for the maximum of a unimodal ``f``."""
    r = (np.sqrt(5.0) - 1) / 2
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    c = b - r * (b - a)
    d = a + r * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(MAX_HALVINGS):
        if np.all(np.abs(b - a) <= tol):
            break
        left = fc > fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c, d = b - r * (b - a), a + r * (b - a)
        fc, fd = f(c), f(d)
    return 0.5 * (a + b)


def _crossing_centres(f, lo, hi, tol):
    """Roots of ``f`` in each ``[lo, hi]``; midpoint where no sign change is visible."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    ok = np.sign(f(lo)) * np.sign(f(hi)) < 0
    roots = bisect_roots(f, lo, np.where(ok, hi, lo), tol)
    return np.where(ok, roots, 0.5 * (lo + hi)), ok


def _outer_point(f, start: float, step: float) -> float:
    d = abs(step)
    while f(np.array(start + np.sign(step) * d)) <= 0:
        d *= 2
    return start + np.sign(step) * d


def approximate_bands(n: int, bound: float = 2.0, search_lo: float | None = None,
                      search_hi: float | None = None, grid: int = 4096,
                      edge_tol: float = 1e-10,
                      pot: PotentialMap = DEFAULT_POTENTIAL) -> list[Band]:
    """Maximal energy intervals with ``|x_n(E)| <= bound``, clipped to the search window.

    ``grid`` is a points-per-unit resolution; it only drives the coarse-grid
    warning, the bands themselves come from the eigenvalue seeds.
    """
    if search_lo is None:
        search_lo = pot.lo - 2.5
    if search_hi is None:
        search_hi = pot.hi + 2.5
    if not search_lo < search_hi:
        raise ValueError("search_lo must be below search_hi")
    if grid < 2 or bound <= 0:
        raise ValueError("need grid >= 2 and bound > 0")

    seeds = periodic_edges(n, pot)
    if bound == 2.0:
        lo, hi = seeds[:, 0], seeds[:, 1]
    else:
        x = lambda E: level_trace(E, n, pot)
        excess = lambda E: np.abs(x(E)) - bound
        c, _ = _crossing_centres(x, seeds[:, 0], seeds[:, 1], edge_tol)
        g = golden_max(lambda E: np.abs(x(E)), c[:-1], c[1:], edge_tol)
        left = _outer_point(excess, seeds[0, 0], -1.0)
        right = _outer_point(excess, seeds[-1, 1], 1.0)
        gl = np.concatenate([[left], g])
        gr = np.concatenate([g, [right]])
        lo = np.where(excess(gl) > 0, bisect_roots(excess, gl, c, edge_tol), gl)
        hi = np.where(excess(gr) > 0, bisect_roots(excess, c, gr, edge_tol), gr)

    merged: list[list[float]] = []
    for a, b in zip(lo, hi):
        if merged and a <= merged[-1][1] + edge_tol:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    bands = []
    for a, b in merged:
        a, b = max(a, search_lo), min(b, search_hi)
        if a <= b:
            bands.append(Band(float(a), float(b), n, bound, edge_tol))

    cell = 1.0 / grid
    thin = sum(bd.width < 3 * cell for bd in bands)
    if thin:
        warnings.warn(f"{thin} of {len(bands)} level-{n} bands are narrower than 3 grid "
                      f"cells ({cell:.3g}); a plain grid scan would miss them",
                      CoarseGridWarning, stacklevel=2)
    return bands


def band_measure(bands) -> float:
    return float(sum(b.hi - b.lo for b in bands))


def band_centers(bands, pot: PotentialMap = DEFAULT_POTENTIAL,
                 tol: float = 0.0) -> np.ndarray:
    """Energies where ``x_level`` vanishes, one per periodic band inside ``bands``.

    There ``x_{level+1} = -2`` and every later trace equals 2, so each centre
    lies in the spectrum itself, not only in the approximant.  Merged bands
    contribute one centre per constituent periodic band.
    """
    out = []
    for level in sorted({b.level for b in bands}):
        sel = [b for b in bands if b.level == level]
        seeds = periodic_edges(level, pot)
        lo = np.array([b.lo for b in sel])
        hi = np.array([b.hi for b in sel])
        inside = np.array([np.any((lo <= a) & (c <= hi)) for a, c in seeds], dtype=bool)
        seeds = seeds[inside]
        f = lambda E: level_trace(E, level, pot)
        c, ok = _crossing_centres(f, seeds[:, 0], seeds[:, 1], tol)
        out.append(c[ok])
    return np.sort(np.concatenate(out)) if out else np.empty(0)


def orbit_extremes(E, n_max: int, pot: PotentialMap = DEFAULT_POTENTIAL):
    """``(max_n log|x_n|, max_n log||M_n||)`` over ``n <= n_max`` for each energy."""
    table = BlockTransfers(np.asarray(E, dtype=float), pot)
    lx = np.stack([table[n].log_abs_trace() for n in range(n_max + 1)])
    ln = np.stack([table[n].log_norm() for n in range(n_max + 1)])
    return lx.max(axis=0), ln.max(axis=0)


def well_conditioned(E, n_max: int, pot: PotentialMap = DEFAULT_POTENTIAL,
                     cond_cap: float = COND_CAP) -> np.ndarray:
    """Mask of energies whose block transfers stay below ``cond_cap`` up to ``n_max``.

    Traces of larger matrices lose all digits to cancellation in double precision.
    """
    _, ln = orbit_extremes(E, n_max, pot)
    return ln <= np.log(cond_cap)


def _trace_targets(k: int) -> np.ndarray:
    return 2 * np.cos(np.pi * (np.arange(k) + 0.5) / k)


def band_samples(bands, samples_per_band: int = 1,
                 pot: PotentialMap = DEFAULT_POTENTIAL) -> np.ndarray:
    """Energies where ``x_level`` hits Chebyshev-spaced targets in ``(-2, 2)``.

    A single sample is the band centre ``x_level = 0``; further targets are not
    guaranteed to be spectral.
    """
    if samples_per_band < 1:
        raise ValueError("samples_per_band must be positive")
    if samples_per_band == 1:
        return band_centers(bands, pot)
    out = []
    for t in _trace_targets(samples_per_band):
        for level in sorted({b.level for b in bands}):
            sel = [b for b in bands if b.level == level]
            f = lambda E: level_trace(E, level, pot) - t
            c, ok = _crossing_centres(f, [b.lo for b in sel], [b.hi for b in sel], 0.0)
            out.append(c[ok])
    return np.sort(np.concatenate(out))


def estimate_trace_bound(samples, n_max: int, samples_per_band: int = 1,
                         pot: PotentialMap = DEFAULT_POTENTIAL,
                         cond_cap: float = COND_CAP) -> float:
    """Largest ``|x_n(E)|``, ``n <= n_max``, over sampled energies; never below 2.

    ``samples`` is a list of bands or an array of energies.  Energies whose
    transfers exceed ``cond_cap`` are skipped as unresolved.  The value bounds a
    finite-range surrogate of ``limsup |x_n|``, including early transients.
    """
    n_eval = n_max
    if len(samples) and isinstance(samples[0], Band):
        level = max(b.level for b in samples)
        if n_max < level:
            raise ValueError("n_max must reach the band level")
        E = band_samples(samples, samples_per_band, pot)
        if samples_per_band == 1:
            # past a centre the orbit is exactly -2, 2, 2, ...; evaluating it in
            # floating point only measures the rounding of the centre
            n_eval = level
    else:
        E = np.asarray(samples, dtype=float)
    if E.size == 0:
        return 2.0
    lx, ln = orbit_extremes(E, n_eval, pot)
    keep = ln <= np.log(cond_cap)
    if not np.any(keep):
        return 2.0
    return float(max(2.0, np.exp(lx[keep].max())))


def select_audit_energies(centres, count: int, n_max: int,
                          pot: PotentialMap = DEFAULT_POTENTIAL,
                          cond_cap: float = COND_CAP) -> np.ndarray:
    """``count`` well-conditioned energies spread across the spectrum.

    Sorted resolved centres are cut into ``count`` contiguous groups; each group
    contributes its member with the smallest trace excursion.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    E = np.sort(np.asarray(centres, dtype=float))
    if count == 0:
        return np.empty(0)
    lx, ln = orbit_extremes(E, n_max, pot)
    keep = ln <= np.log(cond_cap)
    E, lx = E[keep], lx[keep]
    if len(E) < count:
        raise ValueError(f"only {len(E)} resolved energies, {count} requested")
    picks = [g[np.argmin(lg)] for g, lg in zip(np.array_split(E, count), np.array_split(lx, count))]
    return np.array(picks)


def in_spectrum_heuristic(E: float, n_max: int, C: float,
                          pot: PotentialMap = DEFAULT_POTENTIAL) -> bool:
    """``max_{n <= n_max} |x_n(E)| <= C``."""
    if C < 2:
        raise ValueError("C must be at least 2")
    table = BlockTransfers(float(E), pot)
    return bool(all(table[n].log_abs_trace() <= np.log(C) for n in range(n_max + 1)))


def nesting_violations(outer: list[Band], inner: list[Band]) -> list[Band]:
    """Bands of ``inner`` meeting no band of ``outer``."""
    lo = np.array([b.lo for b in outer])
    hi = np.array([b.hi for b in outer])
    return [b for b in inner if not np.any((lo <= b.hi) & (hi >= b.lo))]


def estimate_spectrum(level: int = 10, bound: float = 2.0, n_max: int = 20,
                      audit_count: int = 20, pot: PotentialMap = DEFAULT_POTENTIAL,
                      grid: int = 4096, edge_tol: float = 1e-10) -> SpectrumEstimate:
    """Bands at ``level``, audit energies drawn from their centres, and ``C_emp``."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseGridWarning)
        bands = approximate_bands(level, bound, grid=grid, edge_tol=edge_tol, pot=pot)
    centres = band_centers(bands, pot)
    resolved = int(np.sum(well_conditioned(centres, n_max, pot))) if centres.size else 0
    samples = select_audit_energies(centres, min(audit_count, resolved), n_max, pot)
    return SpectrumEstimate(bands, band_measure(bands),
                            estimate_trace_bound(samples, n_max, pot=pot), n_max, samples)
