"""Per-node compute engines in quantized arithmetic.

Implements the five stages a sample stream passes through inside one
emulator node:

* digital RF generator (DRFG): programmable periodic I/Q source,
* fractional-delay correction (FDC): 4-tap FIR realizing the sub-sample
  part of a propagation delay, coefficients stored as MiniF10,
* output gain stage: lumped transmit/reflection gains per Eq-style
  direct-path combination,
* Doppler rotation: complex coefficient from a quarter-wave sine ROM,
  regenerated by a staged FSM and committed once every 256 cycles,
* receiver accumulation: balanced adder tree of gain-weighted inputs.

All arithmetic follows the mixed-precision MAC convention: operands are
decoded to double, the dot product or sum runs at double precision, and
each output component is quantized to F16 exactly once per stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple

from .errors import ConfigurationError
from .numerics import (
    ComplexSample,
    F16,
    MiniF10,
    quantize_f10,
    quantize_f16_value,
)

__all__ = [
    "DrfgConfig",
    "drfg_step",
    "FdcTaps",
    "lagrange4_taps",
    "make_fdc_taps",
    "make_fdc_taps_f16",
    "fdc_apply",
    "doppler_lut",
    "doppler_phase_step",
    "doppler_coefficient",
    "DopplerFsmState",
    "doppler_fsm_cycle",
    "StageGains",
    "apply_output_stage",
    "receiver_accumulate",
]

ZERO_SAMPLE = ComplexSample(F16(0), F16(0))

# ----------------------------------------------------------------------
# Digital RF generator
# ----------------------------------------------------------------------

DRFG_MAX_PERIOD = 2048
DRFG_MIN_DUTY = 0.03125  # 1/32


@dataclass(frozen=True)
class DrfgConfig:
    """Programmable periodic I/Q source.

    Parameters
    ----------
    period : int
        Repetition period in samples, 1 to 2048.
    duty_cycle : float
        Fraction of the period carrying non-zero samples, 3.125% to 100%.
    iq_pattern : tuple of ComplexSample
        One sample per active slot; slots ``duty_cycle * period`` onward
        emit zero.
    """

    period: int
    duty_cycle: float
    iq_pattern: Tuple[ComplexSample, ...]

    def __post_init__(self):
        if not 1 <= self.period <= DRFG_MAX_PERIOD:
            raise ConfigurationError(
                f"DRFG period {self.period} outside 1..{DRFG_MAX_PERIOD}")
        n_active = len(self.iq_pattern)
        if n_active < 1 or n_active > self.period:
            raise ConfigurationError(
                f"DRFG pattern holds {n_active} samples for period {self.period}")
        if round(self.duty_cycle * self.period) != n_active:
            raise ConfigurationError(
                "DRFG pattern length does not match duty cycle: "
                f"{n_active} active slots vs duty {self.duty_cycle} x {self.period}")
        if self.duty_cycle > 1.0 or self.duty_cycle < DRFG_MIN_DUTY - 1e-12:
            raise ConfigurationError(
                f"DRFG duty cycle {self.duty_cycle} outside "
                f"{DRFG_MIN_DUTY:.5f}..1.0")

    @classmethod
    def from_pattern(cls, period: int,
                     iq_pattern: Sequence[ComplexSample]) -> "DrfgConfig":
        """Build a config whose duty cycle is implied by the pattern length."""
        pattern = tuple(iq_pattern)
        duty = len(pattern) / period if period else 0.0
        return cls(period=period, duty_cycle=duty, iq_pattern=pattern)


def drfg_step(cfg: DrfgConfig, cycle: int) -> ComplexSample:
    """Sample the generator at a cycle index.

    Returns the programmed sample for slot ``cycle mod period`` when the
    slot lies inside the duty window, zero otherwise.
    """
    slot = cycle % cfg.period
    if slot < len(cfg.iq_pattern):
        return cfg.iq_pattern[slot]
    return ZERO_SAMPLE


# ----------------------------------------------------------------------
# Fractional-delay correction filter
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class FdcTaps:
    """4 FIR coefficients stored as MiniF10, widened to F16 in the MAC.

    Tap k multiplies the window sample at relative lag ``1 - k``: one
    sample of lead, the nominal sample, and two lags.
    """

    taps: Tuple[MiniF10, MiniF10, MiniF10, MiniF10]

    def __post_init__(self):
        if len(self.taps) != 4:
            raise ConfigurationError("FDC requires exactly 4 taps")

    @property
    def values(self) -> Tuple[float, float, float, float]:
        """Tap values after the exact MiniF10 -> F16 widening."""
        return tuple(t.widen().value for t in self.taps)

    @property
    def bits(self) -> Tuple[int, int, int, int]:
        return tuple(t.bits for t in self.taps)

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "FdcTaps":
        return cls(tuple(MiniF10(b) for b in bits))


def lagrange4_taps(mu: float) -> Tuple[float, float, float, float]:
    """Double-precision 4-point Lagrange fractional-delay coefficients.

    The interpolation nodes sit at relative lags (+1, 0, -1, -2) and the
    polynomial is evaluated at lag ``-mu``, so the filter output
    approximates the input delayed by ``mu`` samples, mu in [0, 1).
    """
    if not 0.0 <= mu < 1.0:
        raise ConfigurationError(f"fractional delay {mu} outside [0, 1)")
    x = -mu
    t0 = x * (x + 1.0) * (x + 2.0) / 6.0
    t1 = (x - 1.0) * (x + 1.0) * (x + 2.0) / -2.0
    t2 = (x - 1.0) * x * (x + 2.0) / 2.0
    t3 = (x - 1.0) * x * (x + 1.0) / -6.0
    return (t0, t1, t2, t3)


def make_fdc_taps(mu: float) -> FdcTaps:
    """Lagrange coefficients for ``mu``, quantized to MiniF10."""
    return FdcTaps(tuple(quantize_f10(t) for t in lagrange4_taps(mu)))


def make_fdc_taps_f16(mu: float) -> Tuple[F16, F16, F16, F16]:
    """Full-F16 variant of the tap set, for coefficient-precision studies."""
    return tuple(F16.from_real(t) for t in lagrange4_taps(mu))


def _tap_values(taps) -> Tuple[float, ...]:
    if isinstance(taps, FdcTaps):
        return taps.values
    return tuple(t.value if isinstance(t, (F16, MiniF10)) else float(t)
                 for t in taps)


def fdc_apply(window: Sequence[ComplexSample], taps) -> ComplexSample:
    """Quantized dot product of a 4-sample window with the tap set.

    Parameters
    ----------
    window : sequence of 4 ComplexSample
        Samples (x[n+1], x[n], x[n-1], x[n-2]), newest first.
    taps : FdcTaps or sequence of 4 F16
        Real coefficients; the MAC widens MiniF10 taps to F16 exactly.
    """
    tv = _tap_values(taps)
    if len(window) != 4 or len(tv) != 4:
        raise ConfigurationError("FDC window and tap set must have 4 entries")
    acc_re = 0.0
    acc_im = 0.0
    for t, w in zip(tv, window):
        acc_re += t * w.re.value
        acc_im += t * w.im.value
    return ComplexSample(F16.from_real(acc_re), F16.from_real(acc_im))


# ----------------------------------------------------------------------
# Doppler coefficient generation
# ----------------------------------------------------------------------
# Phase lives in a 32-bit accumulator measured in turns (1 turn = 2*pi).
# The sine ROM stores one quarter wave: entry k holds sin(pi*(k+1)/2048),
# so entry 1023 is exactly 1 and phase index 0 needs no ROM read.

LUT_DEPTH = 1024
PHASE_BITS = 32
DOPPLER_UPDATE_PERIOD = 256  # cycles between coefficient commits
DOPPLER_GEN_LATENCY = 32     # cycles to generate one coefficient
DOPPLER_MAX_OUTPUTS = 4

_PHASE_MASK = (1 << PHASE_BITS) - 1
# quantize the accumulator down to a 12-bit LUT index, round to nearest
_INDEX_SHIFT = PHASE_BITS - 12
_INDEX_HALF = 1 << (_INDEX_SHIFT - 1)


@lru_cache(maxsize=1)
def doppler_lut() -> Tuple[F16, ...]:
    """Quarter-wave sine ROM: 1024 F16 entries covering (0, pi/2]."""
    return tuple(F16.from_real(math.sin(math.pi * (k + 1) / 2048.0))
                 for k in range(LUT_DEPTH))


def _lut_sin(p: int) -> float:
    """sin(2*pi*p/4096) reconstructed from the quarter-wave ROM."""
    lut = doppler_lut()
    quadrant, r = divmod(p & 4095, 1024)
    if quadrant == 0:
        return 0.0 if r == 0 else lut[r - 1].value
    if quadrant == 1:
        return lut[1023 - r].value
    if quadrant == 2:
        return -0.0 if r == 0 else -lut[r - 1].value
    return -lut[1023 - r].value


def doppler_phase_step(freq_hz: float, update_rate_hz: float) -> int:
    """Per-commit phase increment in Q32 turns.

    ``update_rate_hz`` is the coefficient update rate (clock / 256).
    Negative frequencies wrap modulo 2**32, giving the two's-complement
    encoding the accumulator expects.
    """
    if update_rate_hz <= 0:
        raise ConfigurationError("doppler update rate must be positive")
    return round(freq_hz / update_rate_hz * 2.0**PHASE_BITS) & _PHASE_MASK


def doppler_coefficient(phase: int) -> ComplexSample:
    """Committed coefficient e^{-j*2*pi*phase/2**32} from the ROM."""
    p = ((phase + _INDEX_HALF) >> _INDEX_SHIFT) & 4095
    cos_v = _lut_sin((p + 1024) & 4095)
    sin_v = _lut_sin(p)
    return ComplexSample(F16.from_real(cos_v), F16.from_real(-sin_v))


UNIT_COEFF = ComplexSample(F16.from_real(1.0), F16.from_real(-0.0))


class DopplerFsmState:
    """Staged round-robin coefficient generator for up to 4 outputs.

    Each output owns a Q32 phase accumulator. Within every 256-cycle
    window the FSM spends 32 cycles per output (ascending index)
    computing the next coefficient from the ROM; all staged coefficients
    commit atomically when the window counter wraps.
    """

    def __init__(self, phase_steps: Sequence[int]):
        steps = [int(s) & _PHASE_MASK for s in phase_steps]
        if len(steps) > DOPPLER_MAX_OUTPUTS:
            raise ConfigurationError(
                f"{len(steps)} outputs on one Doppler FSM exceeds "
                f"{DOPPLER_MAX_OUTPUTS}; add a second FSM unit or reduce "
                "the Doppler update rate")
        self.steps = steps
        self.phase_acc = [0] * len(steps)
        self.pending: list = [UNIT_COEFF] * len(steps)
        self.committed = [UNIT_COEFF] * len(steps)
        self.cycle_ctr = 0

    @property
    def outputs(self) -> int:
        return len(self.steps)


def doppler_fsm_cycle(
    state: DopplerFsmState,
) -> Tuple[DopplerFsmState, Optional[Tuple[ComplexSample, ...]]]:
    """Advance the FSM one cycle.

    Returns the (mutated) state and, on the cycle the window counter
    wraps, the tuple of coefficients that just committed; ``None`` on
    every other cycle.
    """
    c = state.cycle_ctr
    slot, lane = divmod(c, DOPPLER_GEN_LATENCY)
    if lane == DOPPLER_GEN_LATENCY - 1 and slot < state.outputs:
        # last cycle of this output's generation slot: stage next coeff
        nxt = (state.phase_acc[slot] + state.steps[slot]) & _PHASE_MASK
        state.pending[slot] = doppler_coefficient(nxt)
    committed = None
    if c == DOPPLER_UPDATE_PERIOD - 1:
        for i in range(state.outputs):
            state.phase_acc[i] = (state.phase_acc[i] + state.steps[i]) & _PHASE_MASK
        state.committed = list(state.pending)
        committed = tuple(state.committed)
    state.cycle_ctr = (c + 1) % DOPPLER_UPDATE_PERIOD
    return state, committed


# ----------------------------------------------------------------------
# Output gain stage
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class StageGains:
    """Lumped output gains: local-source term and feedback term.

    ``g_t`` multiplies the node's own delayed source stream (zero on
    passive nodes); ``beta_rho`` multiplies the delayed combined input
    (zero on transmit-only nodes).
    """

    g_t: F16
    beta_rho: F16

    @classmethod
    def from_values(cls, g_t: float, beta_rho: float) -> "StageGains":
        return cls(F16.from_real(g_t), F16.from_real(beta_rho))


def apply_output_stage(v_delayed: ComplexSample, s1_delayed: ComplexSample,
                       gains: StageGains,
                       doppler_coeff: ComplexSample) -> ComplexSample:
    """One output sample: (g_t*s1 + beta_rho*v) rotated by the coefficient.

    The gain MAC quantizes each component once; the complex rotation
    quantizes each component of the product once.
    """
    gt = gains.g_t.value
    br = gains.beta_rho.value
    zr = quantize_f16_value(gt * s1_delayed.re.value + br * v_delayed.re.value)
    zi = quantize_f16_value(gt * s1_delayed.im.value + br * v_delayed.im.value)
    cr = doppler_coeff.re.value
    ci = doppler_coeff.im.value
    return ComplexSample(
        F16.from_real(zr * cr - zi * ci),
        F16.from_real(zr * ci + zi * cr),
    )


# ----------------------------------------------------------------------
# Receiver adder tree
# ----------------------------------------------------------------------

def receiver_accumulate(inputs: Sequence[ComplexSample],
                        g_rs: Sequence[F16]) -> ComplexSample:
    """Balanced-binary-tree sum of gain-weighted inputs.

    Leaf k is the quantized product g_rs[k]*inputs[k]; leaves are padded
    with zeros to the next power of two and summed pairwise, quantizing
    each component at every tree level. The fixed shape makes the result
    bit-reproducible regardless of how callers order equal-delay inputs.
    """
    if len(inputs) != len(g_rs):
        raise ConfigurationError(
            f"{len(inputs)} inputs but {len(g_rs)} receive gains")
    if not inputs:
        return ZERO_SAMPLE
    level = [
        (quantize_f16_value(g.value * x.re.value),
         quantize_f16_value(g.value * x.im.value))
        for g, x in zip(g_rs, inputs)
    ]
    width = 1
    while width < len(level):
        width *= 2
    level.extend([(0.0, 0.0)] * (width - len(level)))
    while len(level) > 1:
        level = [
            (quantize_f16_value(a[0] + b[0]), quantize_f16_value(a[1] + b[1]))
            for a, b in zip(level[::2], level[1::2])
        ]
    re, im = level[0]
    return ComplexSample(F16.from_real(re), F16.from_real(im))
