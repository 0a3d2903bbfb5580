"""Reduced-precision arithmetic emulation for the RF accelerator datapath.

Two floating-point formats are modelled bit-exactly:

* F16     - IEEE-754 binary16 (1 sign, 5 exponent, 10 mantissa bits).
            Carried by every data sample and most coefficients.
* MiniF10 - a 10-bit minifloat (1 sign, 5 exponent, 4 mantissa bits,
            bias 15, subnormals supported).  Used only for the
            fractional-delay filter coefficients; widening MiniF10 to
            F16 is exact.

Conversion uses the classic double <-> half bit-twiddling algorithm
(round-to-nearest-even, full subnormal support).  On top of the raw
conversions this module layers the accelerator's quantization policy:

* rounding is round-to-nearest-even everywhere;
* overflow saturates to the maximum finite magnitude (hardware MACs
  clamp instead of producing infinities);
* multiply-accumulate is computed in a widened (double) intermediate
  and quantized exactly once at the output.

All functions here are pure and operate on value types, so they are
safe to call from any number of concurrent contexts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "F16",
    "MiniF10",
    "ComplexSample",
    "quantize_f16",
    "quantize_f10",
    "cmac",
    "f16_bits_from_double",
    "f16_bits_to_double",
    "f10_bits_from_double",
    "f10_bits_to_double",
    "f10_bits_to_f16_bits",
    "quantize_f16_value",
    "quantize_f10_value",
    "quantize_f16_array",
    "f16_bits_to_double_array",
    "f16_ulp",
    "all_f10_values",
    "F16_MAX",
    "F10_MAX",
]

F16_MAX = 65504.0          # largest finite binary16 value
F10_MAX = 63488.0          # largest finite MiniF10 value (0x1EF)

_F16_SAT_BITS = 0x7BFF     # |F16_MAX| bit pattern
_F10_SAT_BITS = 0x1EF      # |F10_MAX| bit pattern


def _double_bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def _double_from_bits(bits: int) -> float:
    return struct.unpack("<d", struct.pack("<Q", bits & 0xFFFFFFFFFFFFFFFF))[0]


# ======================================================================
# Raw bit conversions, double <-> F16
# ======================================================================

def f16_bits_from_double(x: float) -> int:
    """Convert a double to binary16 bits with round-to-nearest-even.

    Overflow saturates to the max finite magnitude; NaN stays NaN with
    a truncated payload.  Returns an int in [0, 0xFFFF].
    """
    d = _double_bits(x)
    h_sgn = (d & 0x8000000000000000) >> 48
    d_exp = d & 0x7FF0000000000000
    if d_exp >= 0x40F0000000000000:
        if d_exp == 0x7FF0000000000000:
            d_sig = d & 0x000FFFFFFFFFFFFF
            if d_sig != 0:
                # NaN: keep a nonzero payload
                ret = 0x7C00 + (d_sig >> 42)
                if ret == 0x7C00:
                    ret += 1
                return h_sgn + ret
            return h_sgn + _F16_SAT_BITS  # signed infinity saturates
        return h_sgn + _F16_SAT_BITS      # overflow saturates
    if d_exp <= 0x3F00000000000000:
        if d_exp < 0x3E60000000000000:
            return h_sgn                  # underflow to signed zero
        # subnormal result
        d_exp >>= 52
        d_sig = 0x0010000000000000 + (d & 0x000FFFFFFFFFFFFF)
        d_sig >>= 1009 - d_exp
        if (d_sig & 0x000007FFFFFFFFFF) != 0x0000020000000000:
            d_sig += 0x0000020000000000
        return h_sgn + (d_sig >> 42)
    # normal result; mantissa carry may bump the exponent, and a carry
    # to the infinity pattern is treated as overflow (saturate)
    h_exp = (d_exp - 0x3F00000000000000) >> 42
    d_sig = d & 0x000FFFFFFFFFFFFF
    if (d_sig & 0x000007FFFFFFFFFF) != 0x0000020000000000:
        d_sig += 0x0000020000000000
    h_sig = (d_sig >> 42) + h_exp
    if h_sig >= 0x7C00:
        return h_sgn + _F16_SAT_BITS
    return h_sgn + h_sig


def f16_bits_to_double(h: int) -> float:
    """Widen binary16 bits to a double (exact)."""
    h &= 0xFFFF
    h_exp = h & 0x7C00
    d_sgn = (h >> 15) << 63
    if h_exp == 0:
        h_sig = h & 0x03FF
        if h_sig == 0:
            return _double_from_bits(d_sgn)
        # normalize the subnormal significand
        shift = 0
        h_sig <<= 1
        while (h_sig & 0x0400) == 0:
            h_sig <<= 1
            shift += 1
        d_exp = (1023 - 15 - shift) << 52
        d_sig = (h_sig & 0x03FF) << 42
        return _double_from_bits(d_sgn + d_exp + d_sig)
    if h_exp == 0x7C00:
        return _double_from_bits(d_sgn + 0x7FF0000000000000 + ((h & 0x03FF) << 42))
    return _double_from_bits(d_sgn + (((h & 0x7FFF) + 0xFC000) << 42))


# ======================================================================
# Raw bit conversions, double <-> MiniF10
# ======================================================================
# Same algorithm with the mantissa narrowed from 10 to 4 bits.  The
# exponent field width and bias match binary16, so the exponent-derived
# thresholds only move where the mantissa width enters:
#   result LSB at double bit 48 (52 - 4), halfway bit 2^47,
#   underflow-to-zero below 2^-19 (half of the min subnormal 2^-18).

def f10_bits_from_double(x: float) -> int:
    """Convert a double to MiniF10 bits with round-to-nearest-even.

    Overflow saturates to the max finite magnitude.  Returns an int in
    [0, 0x3FF].
    """
    d = _double_bits(x)
    h_sgn = (d & 0x8000000000000000) >> 54
    d_exp = d & 0x7FF0000000000000
    if d_exp >= 0x40F0000000000000:
        if d_exp == 0x7FF0000000000000:
            d_sig = d & 0x000FFFFFFFFFFFFF
            if d_sig != 0:
                ret = 0x1F0 + (d_sig >> 48)
                if ret == 0x1F0:
                    ret += 1
                return h_sgn + ret
            return h_sgn + _F10_SAT_BITS
        return h_sgn + _F10_SAT_BITS
    if d_exp <= 0x3F00000000000000:
        if d_exp < 0x3EC0000000000000:
            return h_sgn
        d_exp >>= 52
        d_sig = 0x0010000000000000 + (d & 0x000FFFFFFFFFFFFF)
        d_sig >>= 1009 - d_exp
        if (d_sig & 0x0001FFFFFFFFFFFF) != 0x0000800000000000:
            d_sig += 0x0000800000000000
        return h_sgn + (d_sig >> 48)
    h_exp = (d_exp - 0x3F00000000000000) >> 48
    d_sig = d & 0x000FFFFFFFFFFFFF
    if (d_sig & 0x0001FFFFFFFFFFFF) != 0x0000800000000000:
        d_sig += 0x0000800000000000
    h_sig = (d_sig >> 48) + h_exp
    if h_sig >= 0x1F0:
        return h_sgn + _F10_SAT_BITS
    return h_sgn + h_sig


def f10_bits_to_double(h: int) -> float:
    """Widen MiniF10 bits to a double (exact)."""
    h &= 0x3FF
    h_exp = h & 0x1F0
    d_sgn = (h >> 9) << 63
    if h_exp == 0:
        h_sig = h & 0x000F
        if h_sig == 0:
            return _double_from_bits(d_sgn)
        shift = 0
        h_sig <<= 1
        while (h_sig & 0x0010) == 0:
            h_sig <<= 1
            shift += 1
        d_exp = (1023 - 15 - shift) << 52
        d_sig = (h_sig & 0x000F) << 48
        return _double_from_bits(d_sgn + d_exp + d_sig)
    if h_exp == 0x1F0:
        return _double_from_bits(d_sgn + 0x7FF0000000000000 + ((h & 0x000F) << 48))
    return _double_from_bits(d_sgn + (((h & 0x1FF) + 0x3F00) << 48))


def f10_bits_to_f16_bits(h: int) -> int:
    """Widen MiniF10 bits to F16 bits (exact: same exponent bias, the
    4-bit mantissa zero-pads into the 10-bit one, subnormals included)."""
    h &= 0x3FF
    return ((h >> 9) << 15) | ((h & 0x1FF) << 6)


# ======================================================================
# Value-level quantizers (decoded doubles in, decoded doubles out)
# ======================================================================

def quantize_f16_value(x: float) -> float:
    """Round a double to the nearest F16 value and widen back."""
    return f16_bits_to_double(f16_bits_from_double(x))


def quantize_f10_value(x: float) -> float:
    """Round a double to the nearest MiniF10 value and widen back."""
    return f10_bits_to_double(f10_bits_from_double(x))


# ======================================================================
# Domain value types
# ======================================================================

@dataclass(frozen=True)
class F16:
    """A binary16 value carried as its 16-bit pattern."""

    bits: int

    def __post_init__(self):
        object.__setattr__(self, "bits", self.bits & 0xFFFF)

    @classmethod
    def from_real(cls, x: float) -> "F16":
        return cls(f16_bits_from_double(x))

    @property
    def value(self) -> float:
        return f16_bits_to_double(self.bits)

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class MiniF10:
    """A 10-bit minifloat value carried as its bit pattern."""

    bits: int

    def __post_init__(self):
        object.__setattr__(self, "bits", self.bits & 0x3FF)

    @classmethod
    def from_real(cls, x: float) -> "MiniF10":
        return cls(f10_bits_from_double(x))

    @property
    def value(self) -> float:
        return f10_bits_to_double(self.bits)

    def widen(self) -> F16:
        """Exact widening to F16 (no rounding)."""
        return F16(f10_bits_to_f16_bits(self.bits))

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class ComplexSample:
    """A quantized complex sample: F16 in-phase + F16 quadrature."""

    re: F16
    im: F16

    @classmethod
    def from_complex(cls, z: complex) -> "ComplexSample":
        return cls(F16.from_real(z.real), F16.from_real(z.imag))

    @property
    def value(self) -> complex:
        return complex(self.re.value, self.im.value)

    def __complex__(self) -> complex:
        return self.value


# ======================================================================
# Quantizing operations
# ======================================================================

def quantize_f16(x: float) -> F16:
    """Quantize a real value to F16.

    Parameters
    ----------
    x : float
        Finite real or signed infinity.

    Returns
    -------
    F16
        Nearest-even F16; magnitudes beyond the format maximum saturate
        to the max finite value.  Total over the reals.
    """
    return F16.from_real(x)


def quantize_f10(x: float) -> MiniF10:
    """Quantize a real value to MiniF10 (nearest-even, saturating)."""
    return MiniF10.from_real(x)


def cmac(acc: ComplexSample, a: ComplexSample, b: ComplexSample) -> ComplexSample:
    """Complex multiply-accumulate: acc + a * b.

    Products and sums are computed in double precision; each output
    component is quantized to F16 exactly once.

    Parameters
    ----------
    acc, a, b : ComplexSample

    Returns
    -------
    ComplexSample
        quantize(acc + a * b), saturating on overflow.
    """
    ar, ai = a.re.value, a.im.value
    br, bi = b.re.value, b.im.value
    re = acc.re.value + (ar * br - ai * bi)
    im = acc.im.value + (ar * bi + ai * br)
    return ComplexSample(F16.from_real(re), F16.from_real(im))


def f16_ulp(x: float) -> float:
    """Unit in the last place of the F16 grid around |x| (double result)."""
    v = abs(quantize_f16_value(x))
    if v >= F16_MAX:
        return 32.0
    nxt = f16_bits_to_double((f16_bits_from_double(v) & 0x7FFF) + 1)
    return nxt - v


def all_f10_values() -> list[tuple[int, float]]:
    """Every MiniF10 bit pattern with its decoded value (1024 entries)."""
    return [(bits, f10_bits_to_double(bits)) for bits in range(1024)]


# ======================================================================
# Array helpers (vectorized; bit-identical to the scalar paths)
# ======================================================================
# numpy's float64 -> float16 cast uses the same round-to-nearest-even
# algorithm as the scalar conversion above; only the overflow policy
# differs (numpy produces inf, the hardware saturates), so the fixup
# below clamps infinities produced from finite inputs.  The agreement
# is asserted exhaustively in the test suite.

def quantize_f16_array(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quantize a float64 array to the F16 grid.

    Returns
    -------
    (values, bits)
        values : float64 array of the decoded quantized values
        bits   : uint16 array of the corresponding bit patterns
    """
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore"):
        h = x.astype(np.float16)
    over = np.isinf(h)
    if over.any():
        h = np.where(over, np.copysign(np.float16(F16_MAX), h), h)
    return h.astype(np.float64), h.view(np.uint16).copy()


def f16_bits_to_double_array(bits: np.ndarray) -> np.ndarray:
    """Widen an array of F16 bit patterns to float64 (exact)."""
    return np.asarray(bits, dtype=np.uint16).view(np.float16).astype(np.float64)
