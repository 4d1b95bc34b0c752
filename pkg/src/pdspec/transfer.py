"""Transfer matrices of the period doubling Schrodinger operator.

All routines accept a scalar energy or a numpy array of energies; matrices then
carry a leading batch shape.  Off the spectrum, products grow doubly
exponentially with the block level, so every matrix keeps a log scale factor
next to its entries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import substitution as subs

#: entries above this magnitude are folded into ``scale_log``
RESCALE = 1e100
#: ``TraceOrbit.overflowed_at`` trips once ``|x_n|`` passes this value
TRACE_OVERFLOW = 1e150
#: largest entry for which the determinant projection stays below ~1e-12 relative;
#: past it the rounding noise in ``det`` would exceed the drift being removed
UNIMODULAR_CAP = 1e2


@dataclass(frozen=True)
class PotentialMap:
    """Values taken by the potential on the letters ``a`` and ``b``."""

    value_a: float = -4.0
    value_b: float = 1.0
    # only the constant (free / periodic) test potentials set this
    allow_equal: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.value_a) and np.isfinite(self.value_b)):
            raise ValueError("potential values must be finite")
        if self.value_a == self.value_b and not self.allow_equal:
            raise ValueError("value_a and value_b must differ")

    @classmethod
    def constant(cls, v: float = 0.0) -> "PotentialMap":
        return cls(v, v, allow_equal=True)

    def __getitem__(self, letter: str) -> float:
        if letter == "a":
            return self.value_a
        if letter == "b":
            return self.value_b
        raise KeyError(letter)

    def values(self, w: str) -> np.ndarray:
        codes = np.frombuffer(w.encode("ascii"), dtype=np.uint8)
        return np.where(codes == ord("a"), self.value_a, self.value_b).astype(float)

    @property
    def lo(self) -> float:
        return min(self.value_a, self.value_b)

    @property
    def hi(self) -> float:
        return max(self.value_a, self.value_b)


DEFAULT_POTENTIAL = PotentialMap()


@dataclass(frozen=True)
class NicState:
    """Normalized initial conditions ``u(0)**2 + u(1)**2 == 1``."""

    u0: float
    u1: float

    def __post_init__(self):
        if abs(self.u0**2 + self.u1**2 - 1.0) > 1e-12:
            raise ValueError(f"initial conditions not normalized: {self.u0}, {self.u1}")

    @classmethod
    def from_angle(cls, theta: float) -> "NicState":
        return cls(float(np.cos(theta)), float(np.sin(theta)))


def nic_circle(count: int = 8) -> list[NicState]:
    """``count`` equally spaced initial conditions ``(cos t, sin t)``, ``t = j*pi/count``."""
    return [NicState.from_angle(j * np.pi / count) for j in range(count)]


def _renorm(entries: np.ndarray, scale: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = np.abs(entries).max(axis=(-2, -1))
    big = (m > RESCALE) | ((m < 1 / RESCALE) & (m > 0))
    if np.any(big):
        f = np.where(big, m, 1.0)
        entries = entries / f[..., None, None]
        scale = scale + np.log(f)
    return entries, scale


class Transfer2:
    """A (batch of) 2x2 unimodular matrices stored as ``exp(scale_log) * entries``."""

    __slots__ = ("entries", "scale_log")

    def __init__(self, entries, scale_log=None):
        entries = np.asarray(entries, dtype=float)
        if entries.shape[-2:] != (2, 2):
            raise ValueError(f"expected (..., 2, 2) entries, got {entries.shape}")
        if scale_log is None:
            scale_log = np.zeros(entries.shape[:-2])
        self.entries, self.scale_log = _renorm(entries, np.asarray(scale_log, dtype=float))

    @classmethod
    def identity(cls, shape=()) -> "Transfer2":
        return cls(np.broadcast_to(np.eye(2), tuple(shape) + (2, 2)).copy())

    @property
    def shape(self) -> tuple:
        return self.entries.shape[:-2]

    def __matmul__(self, other: "Transfer2") -> "Transfer2":
        return Transfer2(self.entries @ other.entries, self.scale_log + other.scale_log)

    def __getitem__(self, idx) -> "Transfer2":
        return Transfer2(self.entries[idx], self.scale_log[idx])

    def __repr__(self) -> str:
        return f"Transfer2(entries={self.entries!r}, scale_log={self.scale_log!r})"

    def unscaled(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.entries * np.exp(self.scale_log)[..., None, None]

    def trace(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.trace(self.entries, axis1=-2, axis2=-1) * np.exp(self.scale_log)

    def log_abs_trace(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(np.trace(self.entries, axis1=-2, axis2=-1))) + self.scale_log

    def det(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.linalg.det(self.entries) * np.exp(2 * self.scale_log)

    def det_residual(self) -> np.ndarray:
        """``|det - 1|`` relative to the squared entry magnitude, evaluated in scaled form."""
        mag = np.abs(self.entries).max(axis=(-2, -1)) ** 2
        with np.errstate(under="ignore"):
            target = np.exp(-2 * self.scale_log)
        return np.abs(np.linalg.det(self.entries) - target) / np.maximum(mag, target)

    def unimodular(self) -> "Transfer2":
        """Copy rescaled to determinant exactly 1 wherever that determinant is
        resolvable, i.e. unscaled entries below ``UNIMODULAR_CAP``.

        Recursions that reuse a factor twice double its determinant error at
        every level; the exact matrices are unimodular, so only drift is removed.
        """
        e = self.entries
        d = e[..., 0, 0] * e[..., 1, 1] - e[..., 0, 1] * e[..., 1, 0]
        m = np.abs(e).max(axis=(-2, -1))
        ok = (self.scale_log == 0) & (m < UNIMODULAR_CAP) & (d > 0.5)
        f = np.sqrt(np.where(ok, d, 1.0))
        return Transfer2(e / f[..., None, None], self.scale_log)

    def log_norm(self) -> np.ndarray:
        """Log of the spectral norm, from the closed-form 2x2 singular values.

        A mantissa that cancelled to exactly zero has lost every digit; it is
        reported as ``inf`` since a unimodular matrix has norm at least 1.
        """
        sn = spectral_norm(self.entries)
        with np.errstate(divide="ignore"):
            return np.where(sn > 0, np.log(sn) + self.scale_log, np.inf)

    def norm(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_norm())


def spectral_norm(a: np.ndarray) -> np.ndarray:
    """Largest singular value of (a batch of) 2x2 matrices."""
    a = np.asarray(a, dtype=float)
    m = np.abs(a).max(axis=(-2, -1))
    safe = np.where(m > 0, m, 1.0)
    a = a / safe[..., None, None]
    fro2 = (a**2).sum(axis=(-2, -1))
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    disc = np.sqrt(np.maximum(fro2**2 - 4 * det**2, 0.0))
    return safe * np.sqrt((fro2 + disc) / 2)


def rel_diff(s: Transfer2, t: Transfer2, floor: float = 1e-12) -> np.ndarray:
    """Entrywise difference relative to the larger of the two magnitudes.

    Both operands are brought to the larger of their two scales first, so the
    comparison stays meaningful after overflow.
    """
    ref = np.maximum(s.scale_log, t.scale_log)
    with np.errstate(under="ignore"):
        a = s.entries * np.exp(s.scale_log - ref)[..., None, None]
        b = t.entries * np.exp(t.scale_log - ref)[..., None, None]
    mag = np.maximum(np.abs(a).max(axis=(-2, -1)), np.abs(b).max(axis=(-2, -1)))
    with np.errstate(under="ignore"):
        fl = floor * np.exp(-ref)
    return np.abs(a - b).max(axis=(-2, -1)) / np.maximum(mag, fl)


def local_transfer(E, v: float) -> Transfer2:
    """One-site transfer ``[[E - v, -1], [1, 0]]``."""
    E = np.asarray(E, dtype=float)
    m = np.empty(E.shape + (2, 2))
    m[..., 0, 0] = E - v
    m[..., 0, 1] = -1.0
    m[..., 1, 0] = 1.0
    m[..., 1, 1] = 0.0
    return Transfer2(m)


def word_transfer(E, w: str, pot: PotentialMap = DEFAULT_POTENTIAL) -> Transfer2:
    """Transfer across ``w``; the last letter's matrix is the leftmost factor."""
    E = np.asarray(E, dtype=float)
    step = {c: local_transfer(E, pot[c]) for c in set(w)}
    t = Transfer2.identity(E.shape)
    for c in w:
        t = step[c] @ t
    return t


class BlockTransfers:
    """Memoized ``M_n = M_E(a_n)`` for one energy (or energy batch) and potential.

    Uses ``M_0 = T(a)``, ``M_1 = T(b) T(a)`` and ``M_{n+1} = M_{n-1}^2 M_n``.
    Instances are not shared across threads; build one per evaluation context.
    """

    def __init__(self, E, pot: PotentialMap = DEFAULT_POTENTIAL):
        self.energy = np.asarray(E, dtype=float)
        self.pot = pot
        ta = local_transfer(self.energy, pot.value_a)
        self._m = [ta, local_transfer(self.energy, pot.value_b) @ ta]

    def __getitem__(self, n: int) -> Transfer2:
        if n < 0:
            raise IndexError(n)
        m = self._m
        while len(m) <= n:
            prev = m[-2]
            m.append((prev @ (prev @ m[-1])).unimodular())
        return m[n]

    def b_block(self, n: int) -> Transfer2:
        """``M_E(b_n)``: ``T(b)`` for n = 0, otherwise ``M_{n-1}^2``."""
        if n == 0:
            return local_transfer(self.energy, self.pot.value_b)
        return self[n - 1] @ self[n - 1]

    def z(self, n: int) -> Transfer2:
        """``Z_n = M_{n-1} M_n`` for ``n >= 1``."""
        if n < 1:
            raise IndexError(n)
        return self[n - 1] @ self[n]

    def traces(self, n_max: int) -> np.ndarray:
        """``x_0 .. x_{n_max}`` stacked on the first axis."""
        return np.stack([self[n].trace() for n in range(n_max + 1)])


def block_transfer(E, n: int, pot: PotentialMap = DEFAULT_POTENTIAL) -> Transfer2:
    """``M_n`` by the block recursion."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return BlockTransfers(E, pot)[n]


def prefix_transfer(E, m: int, pot: PotentialMap = DEFAULT_POTENTIAL,
                    table: BlockTransfers | None = None) -> Transfer2:
    """``M(m)``, the transfer across the first ``m`` letters of the fixed point.

    ``M(m) = M_{n_1} M_{n_2} ... M_{n_k}`` with ``n_1 < ... < n_k`` the binary
    exponents of ``m``; the order is certified against the prefix string.
    """
    exps = subs.prefix_block_decomposition(m)
    if table is None:
        table = BlockTransfers(E, pot)
    t = table[exps[0]]
    for n in exps[1:]:
        t = t @ table[n]
    return t


@dataclass
class TraceOrbit:
    energy: float
    xs: np.ndarray
    ys: np.ndarray
    log_abs_xs: np.ndarray
    overflowed_at: int | None = None

    @cached_property
    def max_log_abs(self) -> float:
        return float(np.max(self.log_abs_xs))


def trace_orbit(E: float, n_max: int, pot: PotentialMap = DEFAULT_POTENTIAL) -> TraceOrbit:
    """Traces ``x_n = tr M_E(a_n)`` and ``y_n = tr M_E(b_n)`` for ``n <= n_max``.

    ``y_n`` is taken from the matrix ``M_{n-1}^2`` directly, so the identity
    ``y_n = x_{n-1}^2 - 2`` is a check rather than a definition.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    table = BlockTransfers(float(E), pot)
    xs = np.array([float(table[n].trace()) for n in range(n_max + 1)])
    logs = np.array([float(table[n].log_abs_trace()) for n in range(n_max + 1)])
    ys = np.array([float(table.b_block(n).trace()) for n in range(n_max + 1)])
    over = np.nonzero(logs > np.log(TRACE_OVERFLOW))[0]
    return TraceOrbit(float(E), xs, ys, logs, int(over[0]) if over.size else None)


def site_potentials(length: int, pot: PotentialMap = DEFAULT_POTENTIAL) -> np.ndarray:
    """Potential on the fixed-point letters at positions ``0 .. length-1``."""
    return pot.values(subs.fixed_point_window(0, length).letters)


def solution_values(E, nics, length: int, pot: PotentialMap = DEFAULT_POTENTIAL) -> np.ndarray:
    """``u(0) .. u(length)`` for every energy and initial condition.

    The step ``U(j) -> U(j+1)`` uses the potential of letter ``j - 1``, matching
    ``U(m+1) = M(m) U(1)``.  The result has shape
    ``E.shape + (len(nics),) + (length + 1,)``; the nic axis is dropped when a
    single ``NicState`` is passed.
    """
    single = isinstance(nics, NicState)
    nics = [nics] if single else list(nics)
    u0 = np.array([s.u0 for s in nics])
    u1 = np.array([s.u1 for s in nics])
    E = np.asarray(E, dtype=float)[..., None]
    shape = np.broadcast_shapes(E.shape, u0.shape)
    w = site_potentials(max(length - 1, 0), pot)
    out = np.empty(shape + (length + 1,))
    prev = np.broadcast_to(u0, shape).astype(float)
    cur = np.broadcast_to(u1, shape).astype(float)
    out[..., 0] = prev
    if length >= 1:
        out[..., 1] = cur
    for j in range(1, length):
        prev, cur = cur, (E - w[j - 1]) * cur - prev
        out[..., j + 1] = cur
    return out[..., 0, :] if single else out


def solution_from_nic(E: float, nic: NicState, m: int,
                      pot: PotentialMap = DEFAULT_POTENTIAL) -> tuple[float, float]:
    """``(u(m), u(m+1))`` from ``U(m+1) = M(m) U(1)`` with ``U(1) = (u(1), u(0))``."""
    t = prefix_transfer(float(E), m, pot).unscaled()
    top, bottom = t @ np.array([nic.u1, nic.u0])
    return float(bottom), float(top)
