"""Period doubling words and windows of the two-sided fixed point.

Words are plain ``str`` over the alphabet ``"ab"``.  The substitution is
``a -> ab``, ``b -> aa``; the two-sided fixed point is the limit of
``xi^{2n}(a) . xi^{2n}(a)`` with position 0 the first letter right of the dot.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

ALPHABET = ("a", "b")
RULE = {"a": "ab", "b": "aa"}

#: default cap on materialized letters
MAX_LETTERS = 2**22


class CapExceeded(MemoryError):
    """Requested word or window is longer than the configured letter cap."""


class AlignmentError(ValueError):
    """Window boundaries are not aligned with the requested n-partition."""


class DecompositionMismatch(AssertionError):
    """A prefix of the fixed point does not match its binary block decomposition."""


@dataclass(frozen=True)
class SequenceWindow:
    """Letters at positions ``start .. start+len-1`` of the translate ``T^shift`` of
    the fixed point, i.e. ``letters[i] == fixed_point(start + shift + i)``."""

    start: int
    letters: str
    shift: int = 0

    def __len__(self) -> int:
        return len(self.letters)

    @property
    def stop(self) -> int:
        return self.start + len(self.letters)


@dataclass(frozen=True)
class Block:
    label: str  # "a" or "b"
    offset: int  # absolute position of the first letter in the window's frame


def _check_letter(x: str) -> None:
    if x not in RULE:
        raise ValueError(f"not a letter of the alphabet: {x!r}")


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise CapExceeded(f"{n} letters requested, cap is {cap}")


def apply_substitution(w: str) -> str:
    """Image of ``w`` under the substitution; output length is ``2*len(w)``."""
    try:
        return "".join(RULE[c] for c in w)
    except KeyError as exc:
        raise ValueError(f"not a letter of the alphabet: {exc.args[0]!r}") from None


@lru_cache(maxsize=64)
def _block(letter: str, n: int) -> str:
    if n == 0:
        return letter
    a = _block("a", n - 1)
    return a + (_block("b", n - 1) if letter == "a" else a)


def block_word(letter: str, n: int, cap: int = MAX_LETTERS) -> str:
    """The block ``a_n = xi^n(a)`` or ``b_n = xi^n(b)``, built with
    ``a_n = a_{n-1} b_{n-1}`` and ``b_n = a_{n-1} a_{n-1}``."""
    _check_letter(letter)
    if n < 0:
        raise ValueError("n must be nonnegative")
    _check_cap(2**n, cap)
    return _block(letter, n)


def letter_of_image(letter: str, n: int, p: int) -> str:
    """Letter ``p`` of ``xi^n(letter)`` in O(n), without building the word.

    Each substitution step doubles length, so the bits of ``p`` (most significant
    first) select the left or right letter of each successive image.
    """
    if not 0 <= p < 2**n:
        raise IndexError(p)
    x = letter
    for k in range(n - 1, -1, -1):
        x = RULE[x][(p >> k) & 1]
    return x


def _left_exponent(j: int) -> int:
    """Smallest even exponent 2n with 2**(2n) >= j."""
    e = 0
    while 2**e < j:
        e += 2
    return e


def letter_at(p: int) -> str:
    """Letter of the two-sided fixed point at position ``p`` in O(log |p|)."""
    if p >= 0:
        return letter_of_image("a", max(p.bit_length(), 1), p)
    e = _left_exponent(-p)
    return letter_of_image("a", e, 2**e + p)


def fixed_point_window(start: int, length: int, cap: int = MAX_LETTERS) -> SequenceWindow:
    """Window of the two-sided fixed point at positions ``start .. start+length-1``."""
    if length < 0:
        raise ValueError("length must be nonnegative")
    _check_cap(length, cap)
    stop = start + length
    parts = []
    if start < 0:
        hi = min(stop, 0)
        e = _left_exponent(-start)
        if 2**e <= cap:
            parts.append(_block("a", e)[2**e + start : 2**e + hi])
        else:
            parts.append("".join(letter_at(p) for p in range(start, hi)))
    if stop > 0:
        lo = max(start, 0)
        n = (stop - 1).bit_length()
        if 2**n <= cap:
            parts.append(_block("a", n)[lo:stop])
        else:
            parts.append("".join(letter_at(p) for p in range(lo, stop)))
    return SequenceWindow(start, "".join(parts))


def shift_window(w: SequenceWindow, k: int) -> SequenceWindow:
    """The same positions read off the translate shifted by ``k`` more steps."""
    shift = w.shift + k
    letters = fixed_point_window(w.start + shift, len(w)).letters
    return SequenceWindow(w.start, letters, shift)


def n_partition(w: SequenceWindow, n: int) -> list[Block]:
    """Decompose an aligned window into ``a_n`` / ``b_n`` blocks.

    Labels are resolved by exact string comparison with both block words.
    """
    if n < 1:
        raise ValueError("n must be positive")
    size = 2**n
    if (w.start + w.shift) % size or len(w) % size:
        raise AlignmentError(
            f"window [{w.start}, {w.stop}) with shift {w.shift} is not aligned to 2**{n}"
        )
    a, b = _block("a", n), _block("b", n)
    blocks = []
    for i in range(0, len(w), size):
        chunk = w.letters[i : i + size]
        if chunk == a:
            label = "a"
        elif chunk == b:
            label = "b"
        else:
            raise AssertionError(f"chunk at offset {w.start + i} is neither a_{n} nor b_{n}")
        blocks.append(Block(label, w.start + i))
    return blocks


def partition_gaps(blocks: list[Block]) -> list[int]:
    """Numbers of ``a`` blocks strictly between consecutive ``b`` blocks."""
    where = [i for i, blk in enumerate(blocks) if blk.label == "b"]
    return [j - i - 1 for i, j in zip(where, where[1:])]


def check_partition_structure(w: SequenceWindow, n: int) -> bool:
    """``b_n`` blocks are isolated and separated by exactly one or three ``a_n`` blocks."""
    return all(g in (1, 3) for g in partition_gaps(n_partition(w, n)))


def check_block_agreement(n: int) -> bool:
    """``a_n`` and ``b_n`` agree everywhere except at their last letter."""
    if n < 1:
        raise ValueError("n must be positive")
    a, b = block_word("a", n), block_word("b", n)
    return a[:-1] == b[:-1] and a[-1] != b[-1]


@lru_cache(maxsize=8192)
def _certified(m: int) -> bool:
    exps = binary_exponents(m)
    prefix = fixed_point_window(0, m).letters
    return prefix == "".join(_block("a", n) for n in reversed(exps))


def binary_exponents(m: int) -> list[int]:
    """Exponents of the binary expansion of ``m``, increasing."""
    return [k for k in range(m.bit_length()) if (m >> k) & 1]


def prefix_block_decomposition(m: int, certify: bool = True) -> list[int]:
    """Exponents ``n_1 < ... < n_k`` with ``m = sum 2**n_i``.

    With ``certify`` the prefix of length ``m`` is checked to spell
    ``a_{n_k} a_{n_{k-1}} ... a_{n_1}``; this pins the factor order of the
    corresponding transfer-matrix product.
    """
    if m < 1:
        raise ValueError("m must be positive")
    if certify and not _certified(m):
        raise DecompositionMismatch(f"prefix of length {m} is not a_(n_k)...a_(n_1)")
    return binary_exponents(m)
