"""Fixed-point encoding of signed reals into Z_N plaintexts.

A real v becomes the integer round(v * 2^s) reduced mod N, with negatives
stored as N-complements.  Ciphertexts carry their scale exponent in the
clear (scale is protocol metadata, not data), so homomorphic sums stay
aligned and products track their combined scale.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from .bcp import Ciphertext


class EncodingOverflowError(Exception):
    """Raised when a value cannot be represented at the requested scale."""


class ScaleMismatchError(Exception):
    """Raised when an operation requires equal scales and gets unequal ones."""


@dataclass(frozen=True)
class FixedPointConfig:
    """Scaling policy for one run.

    scale_exp      f:   operand scale, raw = round(v * 2^f)
    quotient_exp   f_q: scale of division-protocol outputs
    value_bits     V:   encoded values must satisfy |v| < 2^V, so raw
                        magnitudes at scale s stay below 2^(s + V)
    """

    scale_exp: int = 24
    quotient_exp: int = 24
    value_bits: int = 16

    @property
    def bound_exp(self) -> int:
        """Raw-magnitude bound B at the base scale: |raw| < 2^B."""
        return self.scale_exp + self.value_bits

    def headroom_ok(self, n: int, mask_bits: int) -> bool:
        """Masked base-scale operands must keep clear of N/4."""
        return (1 << (self.bound_exp + mask_bits + 2)) < n // 4


@dataclass(frozen=True)
class ScaledCiphertext:
    """A ciphertext plus the public scale exponent of its plaintext."""

    ct: Ciphertext
    scale: int

    @property
    def key_id(self) -> str:
        return self.ct.key_id


def round_ratio(num: int, den: int) -> int:
    """Round num/den to the nearest integer, halves away from zero.

    Exact integer arithmetic; used everywhere a protocol rounds so that the
    plaintext twin reproduces the same values.
    """
    if den == 0:
        raise ZeroDivisionError("round_ratio denominator is zero")
    if den < 0:
        num, den = -num, -den
    if num >= 0:
        return (2 * num + den) // (2 * den)
    return -((-2 * num + den) // (2 * den))


def encode(value, scale_exp: int, n: int, *, value_bits: int | None = None) -> int:
    """Encode a signed real as round(value * 2^scale_exp) mod N.

    Rejects NaN/Inf and magnitudes beyond the configured bound: silent
    clamping would corrupt downstream gains.
    """
    if isinstance(value, float) and not math.isfinite(value):
        raise EncodingOverflowError(f"cannot encode non-finite value {value}")
    frac = Fraction(value) * (1 << scale_exp)
    raw = round_ratio(frac.numerator, frac.denominator)
    if value_bits is not None and abs(raw) >= (1 << (scale_exp + value_bits)):
        raise EncodingOverflowError(
            f"|{value}| * 2^{scale_exp} exceeds bound 2^{scale_exp + value_bits}")
    if abs(raw) >= n // 2:
        raise EncodingOverflowError("encoded magnitude exceeds N/2")
    return raw % n


def decode(raw: int, scale_exp: int, n: int) -> float:
    """Decode a Z_N plaintext back to a signed real (N-complement)."""
    if raw > n // 2:
        raw -= n
    return raw / (1 << scale_exp)


def decode_signed(raw: int, n: int) -> int:
    """N-complement to signed integer, without descaling."""
    return raw - n if raw > n // 2 else raw
