"""Golden-model tests: gain tables, geometry, signal ops, scene runs."""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfemu import golden_model as gm
from rfemu.errors import ConfigurationError, DomainError
from rfemu.golden_model import (
    SPEED_OF_LIGHT,
    AntennaPattern,
    GainTable,
    LinkParams,
    PathLossModel,
    RcsProfile,
    SphericalAngle,
    closing_speed,
    direction_angles,
    doppler_shift_hz,
    fractional_delay,
    golden_scene_run,
    intermediate_signal,
    output_signal,
    receive_signal,
)

# ----------------------------------------------------------------------
# Scene stub matching the documented duck-typed interface
# ----------------------------------------------------------------------


@dataclass
class _Obj:
    id: str
    role: str
    position: tuple
    velocity: tuple = (0.0, 0.0, 0.0)
    orientation: Optional[tuple] = None
    rcs: Optional[RcsProfile] = None
    antenna: AntennaPattern = field(default_factory=AntennaPattern.isotropic)
    waveform: Optional[np.ndarray] = None


@dataclass
class _Scene:
    objects: list
    links: list
    sample_rate_hz: float
    carrier_hz: float = 10e9
    path_loss: PathLossModel = field(default_factory=PathLossModel)


NO_LOSS = PathLossModel(exponent=0.0)


def _chirp(n=512, bw=0.25):
    t = np.arange(n)
    ph = 2 * np.pi * (-bw / 2 * t + bw * t**2 / (2 * n))
    return np.exp(1j * ph)


def _xcorr_lag_peak(r, ref):
    """Lag of the strongest cross-correlation peak, plus its magnitude."""
    n = len(r) + len(ref)
    R = np.fft.fft(r, 2 * n)
    S = np.fft.fft(ref, 2 * n)
    corr = np.abs(np.fft.ifft(R * np.conj(S)))[: len(r)]
    k = int(np.argmax(corr))
    return k, corr


# ----------------------------------------------------------------------
# Tables, path loss, geometry
# ----------------------------------------------------------------------

def test_gain_table_interpolates_and_wraps():
    t = GainTable([-math.pi / 2, 0.0, math.pi / 2], [0.5, 1.0, 0.5])
    assert t(SphericalAngle(0.0, 0.0)) == 1.0
    assert t(SphericalAngle(math.pi / 4, 0.0)) == pytest.approx(0.75)
    assert GainTable.constant(2.5)(SphericalAngle(1.0, -0.3)) == 2.5


def test_angle_validation():
    with pytest.raises(ConfigurationError):
        SphericalAngle(math.pi, 0.0)
    with pytest.raises(ConfigurationError):
        SphericalAngle(0.0, 2.0)


def test_antenna_rejects_negative_gain():
    with pytest.raises(ConfigurationError):
        AntennaPattern(GainTable.constant(-0.1), GainTable.constant(1.0))


def test_path_loss_reference_point_and_form():
    pl = PathLossModel(exponent=1.0, reference_distance=100.0, reference_gain=0.5)
    assert pl.rho_at_distance(100.0) == pytest.approx(0.5)
    assert pl.rho_at_distance(200.0) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        pl.rho(0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-9, 1e-2), st.floats(1.0, 4.0), st.floats(0.0, 2.0))
def test_path_loss_monotone_non_increasing(tau, factor, exponent):
    pl = PathLossModel(exponent=exponent)
    assert pl.rho(tau) >= pl.rho(tau * factor)


def test_direction_angles_cardinal():
    o = (0.0, 0.0, 0.0)
    assert direction_angles(o, (5, 0, 0)).azimuth == 0.0
    assert direction_angles(o, (0, 5, 0)).azimuth == pytest.approx(math.pi / 2)
    assert direction_angles(o, (-5, 0, 0)).azimuth == pytest.approx(-math.pi)
    assert direction_angles(o, (0, 0, 5)).elevation == pytest.approx(math.pi / 2)


def test_direction_angles_respect_orientation():
    # platform yawed +90 deg about z sees a world +y target on its nose
    half = math.sqrt(0.5)
    ang = direction_angles((0, 0, 0), (0, 7, 0), orientation=(half, 0, 0, half))
    assert ang.azimuth == pytest.approx(0.0, abs=1e-12)


def test_closing_speed_and_doppler_sign():
    # head-on approach at 5 m/s each: range shrinking at 10 m/s
    v = closing_speed((0, 0, 0), (5, 0, 0), (100, 0, 0), (-5, 0, 0))
    assert v == pytest.approx(10.0)
    assert doppler_shift_hz(10e9, v) > 0
    # receding
    assert closing_speed((0, 0, 0), (-5, 0, 0), (100, 0, 0), (5, 0, 0)) < 0


def test_link_params_require_positive_delay():
    a = SphericalAngle(0.0, 0.0)
    with pytest.raises(DomainError):
        LinkParams(tau=0.0, doppler_hz=0.0, theta_in=a, theta_out=a)


# ----------------------------------------------------------------------
# Signal operations
# ----------------------------------------------------------------------

def test_intermediate_signal_identity_and_cancellation():
    s = np.arange(10, dtype=complex)
    assert np.array_equal(intermediate_signal([s], [1.0]), s)
    assert np.all(intermediate_signal([s, s], [1.0, -1.0]) == 0)


def test_intermediate_signal_matches_loop_oracle():
    rng = np.random.default_rng(61)
    streams = [rng.normal(size=50) + 1j * rng.normal(size=50) for _ in range(3)]
    alphas = list(rng.normal(size=3))
    got = intermediate_signal(streams, alphas)
    want = np.array([sum(a * s[i] for a, s in zip(alphas, streams))
                     for i in range(50)])
    assert np.allclose(got, want, rtol=0, atol=1e-15)


def test_intermediate_signal_length_mismatch():
    with pytest.raises(ConfigurationError):
        intermediate_signal([np.zeros(4), np.zeros(5)], [1.0, 1.0])
    with pytest.raises(ConfigurationError):
        intermediate_signal([np.zeros(4)], [1.0, 2.0])


def test_receive_signal_basics():
    x = np.arange(8, dtype=complex) + 1.0
    assert np.array_equal(receive_signal([x], [1.0]), x)
    assert np.all(receive_signal([x, -x], [1.0, 1.0]) == 0)
    rng = np.random.default_rng(67)
    streams = [rng.normal(size=30) * 1j for _ in range(4)]
    gains = list(rng.normal(size=4))
    want = sum(g * s for g, s in zip(gains, streams))
    assert np.allclose(receive_signal(streams, gains), want, atol=1e-15)


def test_fractional_delay_integer_is_exact_shift():
    x = np.arange(20, dtype=complex)
    y = fractional_delay(x, 3)
    assert np.array_equal(y[3:], x[:-3])
    assert np.all(y[:3] == 0)


def _angle0():
    return SphericalAngle(0.0, 0.0)


def test_output_signal_integer_delay_pure_shift():
    fs = 1e6
    k = 7
    rng = np.random.default_rng(71)
    s1 = rng.normal(size=64) + 1j * rng.normal(size=64)
    link = LinkParams(tau=k / fs, doppler_hz=0.0,
                      theta_in=_angle0(), theta_out=_angle0())
    out = output_signal(s1, np.zeros(64), link, AntennaPattern.isotropic(),
                        None, NO_LOSS, fs)
    assert np.allclose(out[k:], s1[:-k], atol=1e-12)
    assert np.all(out[:k] == 0)


def test_output_signal_impulse_amplitude():
    fs = 1e6
    k = 12
    s1 = np.zeros(64, dtype=complex)
    s1[0] = 1.0
    pl = PathLossModel(exponent=1.0, reference_distance=1.0)
    link = LinkParams(tau=k / fs, doppler_hz=0.0,
                      theta_in=_angle0(), theta_out=_angle0())
    out = output_signal(s1, np.zeros(64), link,
                        AntennaPattern.isotropic(g_t=2.0), None, pl, fs)
    d = SPEED_OF_LIGHT * k / fs
    assert out[k] == pytest.approx(2.0 / d, rel=1e-12)
    assert np.count_nonzero(np.abs(out) > abs(out[k]) * 1e-9) == 1


def test_output_signal_half_sample_matches_convolution_oracle():
    fs = 1e6
    rng = np.random.default_rng(73)
    n = 400
    s1 = rng.normal(size=n) + 1j * rng.normal(size=n)
    tau = 20.5 / fs
    link = LinkParams(tau=tau, doppler_hz=0.0,
                      theta_in=_angle0(), theta_out=_angle0())
    out = output_signal(s1, np.zeros(n), link, AntennaPattern.isotropic(),
                        None, NO_LOSS, fs)
    # direct convolution oracle with the same 64-tap windowed sinc
    j = np.arange(64)
    h = np.sinc(j - 31.5) * np.kaiser(64, 8.0)
    ref = np.convolve(s1, h)
    want = np.zeros(n, dtype=complex)
    idx = np.arange(n) - 20 + 31
    ok = (idx >= 0) & (idx < ref.shape[0])
    want[ok] = ref[idx[ok]]
    scale = np.sqrt(np.mean(np.abs(s1) ** 2))
    assert np.max(np.abs(out - want)) <= 1e-6 * scale


def test_output_signal_applies_doppler_phase():
    fs = 1e6
    f_d = 1234.0
    n = 256
    s1 = np.ones(n, dtype=complex)
    link = LinkParams(tau=1 / fs, doppler_hz=f_d,
                      theta_in=_angle0(), theta_out=_angle0())
    out = output_signal(s1, np.zeros(n), link, AntennaPattern.isotropic(),
                        None, NO_LOSS, fs)
    t = np.arange(n)
    want = np.exp(-2j * np.pi * f_d * t / fs)
    want[0] = 0  # one-sample delay empties the first slot
    assert np.allclose(out, want, atol=1e-12)


# ----------------------------------------------------------------------
# Whole-scene runs
# ----------------------------------------------------------------------

def _two_node_scene(dist_m, fs, waveform, path_loss=NO_LOSS, carrier=10e9):
    tx = _Obj("tx", "transmitter", (0.0, 0.0, 0.0), waveform=waveform)
    rx = _Obj("rx", "receiver", (dist_m, 0.0, 0.0))
    return _Scene([tx, rx], [("tx", "rx")], fs, carrier, path_loss)


def test_scene_direct_path_10km_peak():
    fs = 215e6
    wave = np.zeros(8192, dtype=complex)
    wave[:512] = _chirp()
    scene = _two_node_scene(10_000.0, fs, wave)
    r = golden_scene_run(scene, 8192)
    lag, corr = _xcorr_lag_peak(r, wave[:512])
    assert lag == round(10_000.0 * fs / SPEED_OF_LIGHT)  # 7171


def test_scene_chain_delay_additivity():
    # with fs = c, one metre is one sample; unity gains, no loss
    fs = SPEED_OF_LIGHT
    wave = np.zeros(600, dtype=complex)
    wave[0] = 1.0
    tx = _Obj("tx", "transmitter", (0.0, 0.0, 0.0), waveform=wave)
    obj = _Obj("o1", "passive", (100.0, 0.0, 0.0), rcs=RcsProfile.isotropic())
    rx = _Obj("rx", "receiver", (100.0, 150.0, 0.0))
    scene = _Scene([tx, obj, rx], [("tx", "o1"), ("o1", "rx")], fs,
                   path_loss=NO_LOSS)
    r = golden_scene_run(scene, 600)
    peak = int(np.argmax(np.abs(r)))
    assert peak == 100 + 150
    assert abs(r[peak]) == pytest.approx(1.0, rel=1e-9)


def test_scene_feedback_echo_train():
    # tx -> o1 -> rx with an o1 <-> o2 loop; integer delays at fs = c
    # produce echoes at 250, 550, 850, ... with unity amplitudes
    fs = SPEED_OF_LIGHT
    wave = np.zeros(1000, dtype=complex)
    wave[0] = 1.0
    tx = _Obj("tx", "transmitter", (0.0, 0.0, 0.0), waveform=wave)
    o1 = _Obj("o1", "passive", (120.0, 0.0, 0.0), rcs=RcsProfile.isotropic())
    o2 = _Obj("o2", "passive", (120.0, 150.0, 0.0), rcs=RcsProfile.isotropic())
    rx = _Obj("rx", "receiver", (120.0, -130.0, 0.0))
    scene = _Scene([tx, o1, o2, rx],
                   [("tx", "o1"), ("o1", "o2"), ("o2", "o1"), ("o1", "rx")],
                   fs, path_loss=NO_LOSS)
    r = golden_scene_run(scene, 1000)
    mags = np.abs(r)
    for echo in (250, 550, 850):
        assert mags[echo] == pytest.approx(1.0, rel=1e-9)
    quiet = mags.copy()
    quiet[[250, 550, 850]] = 0
    assert np.max(quiet) < 1e-9


def test_scene_linearity():
    fs = 50e6
    rng = np.random.default_rng(79)
    wave = rng.normal(size=1024) + 1j * rng.normal(size=1024)
    c = 3.7 - 1.2j
    s1 = _two_node_scene(300.0, fs, wave, path_loss=PathLossModel())
    s2 = _two_node_scene(300.0, fs, c * wave, path_loss=PathLossModel())
    r1 = golden_scene_run(s1, 1024)
    r2 = golden_scene_run(s2, 1024)
    assert np.allclose(r2, c * r1, rtol=1e-12, atol=1e-15)


def test_scene_time_invariance_when_static():
    fs = 50e6
    rng = np.random.default_rng(83)
    burst = rng.normal(size=300) + 1j * rng.normal(size=300)
    k = 37
    w1 = np.zeros(1600, dtype=complex)
    w1[:300] = burst
    w2 = np.zeros(1600, dtype=complex)
    w2[k:k + 300] = burst
    r1 = golden_scene_run(_two_node_scene(1500.0, fs, w1), 1600)
    r2 = golden_scene_run(_two_node_scene(1500.0, fs, w2), 1600)
    assert np.allclose(r2[k:], r1[:-k], rtol=0, atol=1e-12)


def test_scene_amplitude_monotone_in_range():
    fs = 2.4e9
    wave = np.zeros(4096, dtype=complex)
    wave[0] = 1.0
    amps = []
    for d in (150.0, 180.0, 210.0, 240.0):
        tx = _Obj("tx", "transmitter", (0.0, 0.0, 0.0), waveform=wave)
        obj = _Obj("o", "passive", (d, 0.0, 0.0), rcs=RcsProfile.isotropic())
        rx = _Obj("rx", "receiver", (0.0, 0.0, 0.0))
        scene = _Scene([tx, obj, rx], [("tx", "o"), ("o", "rx")], fs,
                       path_loss=PathLossModel())
        r = golden_scene_run(scene, 4096)
        amps.append(np.max(np.abs(r)))
    assert all(a > b for a, b in zip(amps, amps[1:]))


def test_scene_sixteen_object_peaks():
    # monostatic geometry: 15 reflectors, 50 m apart from 2.2 km
    fs = 2.4e9
    ranges = [2200.0 + 50.0 * k for k in range(15)]
    duration = 48_000
    wave = np.zeros(duration, dtype=complex)
    wave[:512] = _chirp()
    objs = [_Obj("tx", "transmitter", (0.0, 0.0, 0.0), waveform=wave),
            _Obj("rx", "receiver", (0.0, 0.0, 0.0))]
    links = []
    for k, d in enumerate(ranges):
        objs.append(_Obj(f"o{k}", "passive", (d, 0.0, 0.0),
                         rcs=RcsProfile.isotropic()))
        links += [("tx", f"o{k}"), (f"o{k}", "rx")]
    scene = _Scene(objs, links, fs, path_loss=PathLossModel())
    r = golden_scene_run(scene, duration)
    _, corr = _xcorr_lag_peak(r, wave[:512])
    peaks = []
    for d in ranges:
        expect = 2 * d * fs / SPEED_OF_LIGHT
        lo, hi = int(expect) - 300, int(expect) + 300
        k = lo + int(np.argmax(corr[lo:hi]))
        assert abs(k - expect) <= 1.0
        peaks.append(corr[k])
    assert all(a > b for a, b in zip(peaks, peaks[1:]))


def test_scene_rejects_subsample_delay():
    fs = 1e6  # one sample spans ~300 m
    wave = np.zeros(64, dtype=complex)
    wave[0] = 1.0
    scene = _two_node_scene(100.0, fs, wave)
    with pytest.raises(DomainError):
        golden_scene_run(scene, 64)


def test_scene_requires_receiver_and_known_links():
    wave = np.zeros(64, dtype=complex)
    tx = _Obj("tx", "transmitter", (0.0, 0.0, 0.0), waveform=wave)
    o = _Obj("o", "passive", (50.0, 0.0, 0.0), rcs=RcsProfile.isotropic())
    with pytest.raises(ConfigurationError, match="no receiver"):
        golden_scene_run(_Scene([tx, o], [("tx", "o")], SPEED_OF_LIGHT), 64)
    rx = _Obj("rx", "receiver", (60.0, 0.0, 0.0))
    with pytest.raises(ConfigurationError, match="unknown object"):
        golden_scene_run(_Scene([tx, rx], [("tx", "ghost")], SPEED_OF_LIGHT), 64)
