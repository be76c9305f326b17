"""
Bit-serial shift-add multiplier for Q1.7 activations and signed weight codes.

The multiplier operand m is a `bits`-bit two's-complement code representing
m / 2^(bits-1). Each 1-bit of its pattern issues one addition of the (shifted) activation;
the MSB carries negative weight. Runs of zeros are absorbed by shifting within the same
cycle, so a multiply occupies max(1, popcount) cycles. The product is floor-truncated to
Q1.7 and clamped to the int8 range.
"""
from dataclasses import dataclass

import numpy as np

from apps.core.exceptions import MultiplierRangeError

Q17_MIN = -128
Q17_MAX = 127


@dataclass(frozen=True)
class Q17Value:
    raw: int

    def __post_init__(self):
        if not Q17_MIN <= self.raw <= Q17_MAX:
            raise MultiplierRangeError(f"Q1.7 raw value {self.raw} outside [{Q17_MIN}, {Q17_MAX}]")

    @property
    def real(self) -> float:
        return self.raw / 128.0

    @classmethod
    def from_real(cls, value: float) -> 'Q17Value':
        return cls(int(np.clip(np.floor(value * 128.0), Q17_MIN, Q17_MAX)))


def multiplier_limit(bits: int) -> int:
    return 2 ** (bits - 1) - 1


def check_multiplier(m: int, bits: int):
    if bits not in (2, 4, 6, 8):
        raise MultiplierRangeError(f"multiplier width must be one of (2, 4, 6, 8), got {bits}")
    limit = multiplier_limit(bits)
    if not -limit <= m <= limit:
        raise MultiplierRangeError(f"multiplier {m} does not fit {bits} bits (|m| <= {limit})")


def pattern(m: int, bits: int) -> int:
    """Two's-complement bit pattern of `m` in `bits` bits."""
    return m & ((1 << bits) - 1)


def add_events(m: int, bits: int) -> int:
    """Additions issued for multiplier `m`: the popcount of its pattern."""
    return bin(pattern(m, bits)).count('1')


def multiplier_cycles(m: int, bits: int) -> int:
    return max(1, add_events(m, bits))


def shift_add_mac(a: Q17Value, m: int, bits: int) -> tuple[Q17Value, int]:
    """
    Multiply `a` by the `bits`-bit code `m`.

    Returns the truncated Q1.7 product and the cycle count.
    """
    check_multiplier(m, bits)
    code = pattern(m, bits)
    accumulator = 0
    for position in range(bits):
        if not (code >> position) & 1:
            continue
        term = a.raw << position
        accumulator += -term if position == bits - 1 else term
    # Python's >> on negative integers floors
    product = max(Q17_MIN, min(Q17_MAX, accumulator >> (bits - 1)))
    return Q17Value(product), max(1, bin(code).count('1'))


# Popcount of every byte value, for vectorised cycle counting
POPCOUNT_TABLE = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1).astype(np.int64)


def code_add_events(codes: np.ndarray, bits: int) -> np.ndarray:
    """Popcount of the two's-complement patterns of an integer code array."""
    patterns = (np.asarray(codes, dtype=np.int64) & ((1 << bits) - 1)).astype(np.uint8)
    return POPCOUNT_TABLE[patterns]


def code_cycles(codes: np.ndarray, bits: int) -> np.ndarray:
    return np.maximum(1, code_add_events(codes, bits))
