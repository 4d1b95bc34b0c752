"""Four-block propagation of transfer matrices across scales and the growth constants.

The state ``(I, M_{n+1}, M_n, Z_{n+1})`` with ``Z_n = M_{n-1} M_n`` is carried to
level ``n+1`` by a 4x4 matrix ``B_n`` whose entries are traces, and across ``k``
levels by ``D(n, k) = B_{n+k} ... B_{n+1}``.  Bounds on the entries of
``D(n, k)`` turn into power-law bounds on every prefix transfer matrix.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .transfer import DEFAULT_POTENTIAL, BlockTransfers, PotentialMap, prefix_transfer


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class BMatrix:
    entries: np.ndarray
    level: int

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.entries))


def b_matrix(x_prev: float, x_next: float, n: int) -> BMatrix:
    """``B_n`` built from ``x_{n-1}`` and ``x_{n+1}``."""
    b = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, x_prev],
        [0.0, 1.0, 0.0, 0.0],
        [1.0 - x_prev**2, x_next, x_prev, 0.0],
    ])
    return BMatrix(b, n)


def _traces(table: BlockTransfers, n_hi: int) -> np.ndarray:
    return np.array([float(table[m].trace()) for m in range(n_hi + 1)])


def d_product(E: float, n: int, k: int, pot: PotentialMap = DEFAULT_POTENTIAL,
              table: BlockTransfers | None = None) -> np.ndarray:
    """``D(n, k)``, with ``D(n, 0) = I`` and ``D(n, k+1) = B_{n+k+1} D(n, k)``."""
    if n < 0 or k < 0:
        raise ValueError("n and k must be nonnegative")
    table = table or BlockTransfers(float(E), pot)
    x = _traces(table, n + k + 1)
    d = np.eye(4)
    for j in range(n + 1, n + k + 1):
        d = b_matrix(x[j - 1], x[j + 1], j).entries @ d
    return d


def d_rows_step(d: np.ndarray, x_mid: float, x_far: float) -> np.ndarray:
    """``D(n, k+1)`` from ``D(n, k)`` row by row, with ``x_mid = x_{n+k}`` and
    ``x_far = x_{n+k+2}``."""
    out = np.empty_like(d)
    e1 = np.array([1.0, 0.0, 0.0, 0.0])
    out[0] = e1
    out[1] = -d[1] + x_mid * d[3]
    out[2] = d[1]
    out[3] = (1 - x_mid**2) * e1 + x_far * d[1] + x_mid * d[2]
    return out


@dataclass
class QuadState:
    blocks: np.ndarray  # (4, 2, 2): I, M_{n+1}, M_n, Z_{n+1}
    level: int
    energy: float


def quad_state(E: float, n: int, pot: PotentialMap = DEFAULT_POTENTIAL,
               table: BlockTransfers | None = None) -> QuadState:
    table = table or BlockTransfers(float(E), pot)
    m1, m0 = table[n + 1].unscaled(), table[n].unscaled()
    return QuadState(np.stack([np.eye(2), m1, m0, m0 @ m1]), n, float(E))


def verify_quad_propagation(E: float, n: int, k: int,
                            pot: PotentialMap = DEFAULT_POTENTIAL) -> float:
    """Largest relative residual of ``state(n+k) = D(n, k) state(n)`` over the four slots.

    Each slot is compared relative to the larger of its two sides.
    """
    table = BlockTransfers(float(E), pot)
    d = d_product(E, n, k, pot, table)
    lhs = quad_state(E, n + k, pot, table).blocks
    rhs = np.einsum("ij,jab->iab", d, quad_state(E, n, pot, table).blocks)
    scale = np.maximum(np.abs(lhs).max(axis=(1, 2)), np.abs(rhs).max(axis=(1, 2)))
    return float((np.abs(lhs - rhs).max(axis=(1, 2)) / np.maximum(scale, 1e-12)).max())


@dataclass(frozen=True)
class ConstantsLedger:
    C: float
    K: float
    J: float
    S: float
    kappa: float
    gamma2: float
    D: float
    gamma: float
    gamma1: float
    alpha: float
    C1: float = 1 / math.sqrt(2)

    def as_dict(self) -> dict:
        return asdict(self)


def constants_from_C(C: float, norm_sup=(1.0, 1.0, 1.0)) -> ConstantsLedger:
    """All growth constants from a trace bound ``C`` and the suprema of
    ``||M_0||``, ``||M_1||``, ``||Z_1||``; ``gamma`` takes its largest admissible value."""
    if not C >= 2:
        raise DomainError(f"trace bound C must be at least 2, got {C}")
    m0, m1, z1 = norm_sup
    if min(norm_sup) < 1:
        raise DomainError("norms of unimodular matrices are at least 1")
    K = C**2 + 2 * C + 1
    J = max(4.0, K, 4 * m0, 4 * m1, 4 * z1)
    S = J * (4 + 2 * C)
    kappa = 2 * math.log2(S)
    gamma2 = (2 * kappa + 1) / 2
    D = math.sqrt(1 + 1 / (4 * C**2))
    gamma = math.log2(D) / 3
    gamma1 = gamma / 2
    alpha = 2 * gamma1 / (gamma1 + gamma2)
    return ConstantsLedger(C, K, J, S, kappa, gamma2, D, gamma, gamma1, alpha)


def norm_suprema(energies, pot: PotentialMap = DEFAULT_POTENTIAL) -> tuple[float, float, float]:
    """Suprema of ``||M_0||``, ``||M_1||`` and ``||Z_1||`` over the given energies."""
    table = BlockTransfers(np.asarray(energies, dtype=float), pot)
    return (float(np.max(table[0].norm())), float(np.max(table[1].norm())),
            float(np.max(table.z(1).norm())))


def entry_bound_margin(E: float, n: int, k: int, K: float,
                       pot: PotentialMap = DEFAULT_POTENTIAL) -> float:
    """``k log K - log max|D(n,k)_ij|``; nonnegative when the bound holds."""
    d = d_product(E, n, k, pot)
    return k * math.log(K) - math.log(np.abs(d).max())


def check_entry_bounds(E: float, n: int, k: int, K: float,
                       pot: PotentialMap = DEFAULT_POTENTIAL) -> bool:
    """Every entry of ``D(n, k)`` is at most ``K**k`` in absolute value."""
    return bool(np.all(np.abs(d_product(E, n, k, pot)) <= K**k))


def block_growth_margin(E: float, n: int, J: float,
                        pot: PotentialMap = DEFAULT_POTENTIAL) -> float:
    """``(n+1) log J - log max(||M_{n+1}||, ||Z_{n+1}||)``."""
    table = BlockTransfers(float(E), pot)
    worst = max(float(table[n + 1].log_norm()), float(table.z(n + 1).log_norm()))
    return (n + 1) * math.log(J) - worst


def pair_bound_margin(E: float, n: int, k: int, S: float,
                      pot: PotentialMap = DEFAULT_POTENTIAL) -> float:
    """``(n+k) log S - log max(||M_n M_{n+k}||, ||M_n Z_{n+k}||)``, for ``k >= 1``."""
    if k < 1:
        raise ValueError("k must be positive")
    table = BlockTransfers(float(E), pot)
    worst = max(float((table[n] @ table[n + k]).log_norm()),
                float((table[n] @ table.z(n + k)).log_norm()))
    return (n + k) * math.log(S) - worst


def product_bound_margin(E: float, indices, S: float,
                         pot: PotentialMap = DEFAULT_POTENTIAL) -> float:
    """``(n_k + k - 2) log S - log ||M_{n_1} ... M_{n_k}||``."""
    idx = list(indices)
    if len(idx) < 2 or any(b <= a for a, b in zip(idx, idx[1:])) or idx[0] < 0:
        raise ValueError(f"need at least two strictly increasing indices, got {idx}")
    table = BlockTransfers(float(E), pot)
    prod = table[idx[0]]
    for i in idx[1:]:
        prod = prod @ table[i]
    return (idx[-1] + len(idx) - 2) * math.log(S) - float(prod.log_norm())


def check_product_bound(E: float, indices, S: float,
                        pot: PotentialMap = DEFAULT_POTENTIAL) -> bool:
    return product_bound_margin(E, indices, S, pot) >= 0


def prefix_norm_bound(m: int, S: float) -> float:
    """``m ** kappa`` with ``kappa = 2 log2 S``, the power-law cap on ``||M(m)||``."""
    if m < 2:
        raise ValueError("m must be at least 2")
    return m ** (2 * math.log2(S))


def prefix_norm_margin(E: float, m: int, S: float,
                       pot: PotentialMap = DEFAULT_POTENTIAL) -> float:
    return 2 * math.log2(S) * math.log(m) - float(prefix_transfer(float(E), m, pot).log_norm())


@dataclass
class Tally:
    passed: int = 0
    failed: int = 0
    worst_margin: float = math.inf

    def add(self, margin: float, tol: float = 0.0) -> None:
        if margin >= -tol:
            self.passed += 1
        else:
            self.failed += 1
        self.worst_margin = min(self.worst_margin, margin)

    def as_dict(self) -> dict:
        return {"pass": self.passed, "fail": self.failed, "worst_margin": self.worst_margin}


def audit(energies, ledger: ConstantsLedger, n_max: int = 6, k_max: int = 8,
          pot: PotentialMap = DEFAULT_POTENTIAL, prefix_m: int = 4096,
          seed: int = 0) -> dict[str, Tally]:
    """Run every scale-propagation check over ``energies``.

    Margins are in log units for the norm bounds and ``tol - residual`` for the
    identities, so a negative worst margin always means a failure.
    """
    rng = np.random.default_rng(seed)
    t = {name: Tally() for name in (
        "row_recursion", "row_shift", "det_B", "quad_propagation", "entry_bound",
        "block_growth", "pair_bound", "product_bound", "prefix_norm")}
    logK = math.log(ledger.K)
    for E in np.asarray(energies, dtype=float):
        table = BlockTransfers(float(E), pot)
        x = _traces(table, n_max + k_max + 3)
        for n in range(n_max + 1):
            b = b_matrix(x[n - 1], x[n + 1], n) if n >= 1 else None
            if b is not None:
                want = x[n - 1] ** 2
                t["det_B"].add(1e-9 - abs(b.det - want) / max(abs(want), 1e-12))
            d = np.eye(4)
            prev = None
            for k in range(k_max + 1):
                # D(n, k) -> D(n, k+1) by the matrix product and by the row rules
                nxt = b_matrix(x[n + k], x[n + k + 2], n + k + 1).entries @ d
                rows = d_rows_step(d, x[n + k], x[n + k + 2])
                scale = max(np.abs(nxt).max(), 1e-12)
                t["row_recursion"].add(1e-9 - np.abs(rows - nxt).max() / scale)
                if prev is not None:
                    t["row_shift"].add(1e-9 - np.abs(d[2] - prev[1]).max()
                                       / max(np.abs(prev[1]).max(), 1e-12))
                t["entry_bound"].add(k * logK - math.log(np.abs(d).max()))
                if k >= 1:
                    t["quad_propagation"].add(1e-7 - verify_quad_propagation(E, n, k, pot))
                    t["pair_bound"].add(pair_bound_margin(E, n, k, ledger.S, pot))
                prev, d = d, nxt
            t["block_growth"].add(block_growth_margin(E, n, ledger.J, pot))
        for _ in range(8):
            size = int(rng.integers(2, 6))
            idx = np.sort(rng.choice(11, size=size, replace=False))
            t["product_bound"].add(product_bound_margin(E, idx, ledger.S, pot))
        for m in np.unique(np.geomspace(2, prefix_m, 24).astype(int)):
            t["prefix_norm"].add(prefix_norm_margin(E, int(m), ledger.S, pot))
    return t
