"""DAQ model: 12-bit ADC, fixed-point digital downconversion, accumulation,
state discrimination, multi-channel demodulation and spectral test metrics.

Sample arrays may carry leading batch dimensions; time is always the last
axis.
"""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.signal.windows import blackmanharris

from .timing_fabric import TriggerEvent, _rng

ADC_BITS = 12
ADC_MIN = -(1 << (ADC_BITS - 1))
ADC_MAX = (1 << (ADC_BITS - 1)) - 1
ADC_RATE_HZ = 1e9
FPGA_CLOCK_PS = 4_000

TRIG_BITS = 16
TRIG_SCALE = (1 << (TRIG_BITS - 1)) - 1

ACC_MIN = -(1 << 31)
ACC_MAX = (1 << 31) - 1
MAX_WINDOW = 1 << 18

# DAQ pipeline at 250 MHz: mixer 1 clock, three-stage adder 3, discriminator 1
MIXER_FAST_LATENCY_PS = 1 * FPGA_CLOCK_PS
MIXER_GENERAL_LATENCY_PS = 3 * FPGA_CLOCK_PS
ACCUMULATOR_LATENCY_PS = 3 * FPGA_CLOCK_PS
DISCRIMINATOR_LATENCY_PS = 1 * FPGA_CLOCK_PS

# Measured DAQ performance vs input frequency: (MHz, SNR dB, THD dBc, ENOB)
DAQ_TEST_TABLE = (
    (19.9, 60.0, -65.5, 9.4),
    (49.0, 58.3, -65.0, 9.3),
    (98.0, 58.2, -65.6, 9.3),
    (148.0, 58.0, -62.9, 9.2),
    (198.0, 58.1, -64.0, 9.2),
    (248.0, 57.4, -61.9, 9.1),
    (298.0, 57.1, -59.6, 9.1),
    (348.0, 57.0, -57.1, 9.0),
    (398.0, 57.1, -63.9, 9.2),
)


class QubitState(IntEnum):
    GROUND = 0
    EXCITED = 1


@dataclass(frozen=True)
class IQSampleStream:
    i_codes: np.ndarray
    q_codes: np.ndarray
    sample_rate_hz: float = ADC_RATE_HZ
    start_timestamp_ps: int = 0

    def __post_init__(self):
        i = np.asarray(self.i_codes)
        q = np.asarray(self.q_codes)
        if i.shape != q.shape:
            raise ValueError("I and Q code arrays must have equal shape")
        if i.size and (min(i.min(), q.min()) < ADC_MIN or max(i.max(), q.max()) > ADC_MAX):
            raise ValueError("codes outside the 12-bit signed range")
        object.__setattr__(self, "i_codes", i.astype(np.int64))
        object.__setattr__(self, "q_codes", q.astype(np.int64))

    def __len__(self) -> int:
        return self.i_codes.shape[-1]


@dataclass(frozen=True)
class DemodConfig:
    if_frequency_hz: float = ADC_RATE_HZ / 4
    window_samples: int = 48
    rotation_rad: float = 0.0
    threshold: int = 0
    fast_path: bool = True
    sample_rate_hz: float = ADC_RATE_HZ

    def __post_init__(self):
        if self.fast_path and self.if_frequency_hz * 4 != self.sample_rate_hz:
            raise ValueError("the multiplier-free fast path requires an IF of exactly fs/4")
        if not 1 <= self.window_samples <= MAX_WINDOW:
            raise ValueError(f"window_samples must be in [1, {MAX_WINDOW}]")


@dataclass(frozen=True)
class AdcModel:
    full_scale_volts: float = 1.0
    input_band_hz: tuple[float, float] = (4.5e6, 400e6)
    # input frequency (Hz) -> SNR (dB) / THD (dBc), linearly interpolated
    snr_db: Mapping[float, float] = field(default_factory=dict)
    thd_dbc: Mapping[float, float] = field(default_factory=dict)
    # brick-wall FFT filter; exact only for records holding whole tone periods
    band_limit: bool = False

    def __post_init__(self):
        lo, hi = self.input_band_hz
        if not lo < hi:
            raise ValueError("input band low edge must be below high edge")
        if any(v <= 0 for v in self.snr_db.values()):
            raise ValueError("SNR values must be positive")

    @classmethod
    def from_test_table(cls, **kw) -> AdcModel:
        """ADC configured from the measured DAQ performance table."""
        return cls(snr_db={f * 1e6: s for f, s, _, _ in DAQ_TEST_TABLE},
                   thd_dbc={f * 1e6: t for f, _, t, _ in DAQ_TEST_TABLE}, **kw)

    @staticmethod
    def _interp(table: Mapping[float, float], f: float) -> float | None:
        if not table:
            return None
        xs = np.array(sorted(table))
        return float(np.interp(f, xs, [table[x] for x in xs]))

    def snr_at(self, f_hz: float) -> float | None:
        return self._interp(self.snr_db, f_hz)

    def thd_at(self, f_hz: float) -> float | None:
        return self._interp(self.thd_dbc, f_hz)


@dataclass(frozen=True)
class Digitized:
    stream: IQSampleStream
    clipped: bool


def dominant_frequency(x, sample_rate_hz: float) -> float:
    x = np.asarray(x, dtype=float).reshape(-1, np.shape(x)[-1])
    spec = np.abs(np.fft.rfft(x, axis=-1)).sum(axis=0)
    spec[0] = 0.0
    return float(np.argmax(spec) * sample_rate_hz / x.shape[-1])


def _band_limit(x: np.ndarray, band, fs: float) -> np.ndarray:
    spec = np.fft.rfft(x, axis=-1)
    f = np.fft.rfftfreq(x.shape[-1], 1.0 / fs)
    spec[..., (f < band[0]) | (f > band[1])] = 0.0
    return np.fft.irfft(spec, n=x.shape[-1], axis=-1)


def adc_digitize(i_volts, q_volts, model: AdcModel = AdcModel(), seed=None, *,
                 sample_rate_hz: float = ADC_RATE_HZ, tone_hz: float | None = None,
                 start_timestamp_ps: int = 0) -> Digitized:
    """Distort, add noise and quantize analog I/Q to 12-bit codes.

    The dominant input tone must lie inside the input band. The noise
    floor is sized so a full-scale sine at ``tone_hz`` (detected from the
    input when omitted) shows the configured SNR. THD, when
    configured, is produced by a memoryless cubic term calibrated on a
    full-scale tone.
    """
    rng = _rng(seed)
    out = []
    clipped = False
    fs_v = model.full_scale_volts
    ref = np.concatenate([np.ravel(i_volts), np.ravel(q_volts)])
    if tone_hz is None and (model.snr_db or model.thd_dbc) and np.any(ref):
        tone_hz = dominant_frequency(np.stack([np.asarray(i_volts), np.asarray(q_volts)]),
                                     sample_rate_hz)
    if tone_hz is not None and not model.input_band_hz[0] <= tone_hz <= model.input_band_hz[1]:
        raise ValueError(f"input tone at {tone_hz:g} Hz is outside the ADC input band")
    for v in (i_volts, q_volts):
        x = np.asarray(v, dtype=float) / fs_v
        if model.band_limit and x.shape[-1] > 1 and np.any(x):
            x = _band_limit(x, model.input_band_hz, sample_rate_hz)
        thd = model.thd_at(tone_hz) if tone_hz is not None else None
        if thd is not None:
            x = x - 4 * 10 ** (thd / 20) * x ** 3
        snr = model.snr_at(tone_hz) if tone_hz is not None else None
        if snr is not None:
            sigma = np.sqrt(0.5 / 10 ** (snr / 10))
            x = x + sigma * rng.standard_normal(x.shape)
        codes = np.rint(x * (1 << (ADC_BITS - 1)))
        clipped |= bool(np.any(codes < ADC_MIN) or np.any(codes > ADC_MAX))
        out.append(np.clip(codes, ADC_MIN, ADC_MAX).astype(np.int64))
    return Digitized(IQSampleStream(out[0], out[1], sample_rate_hz, start_timestamp_ps), clipped)


# -- digital mixer ------------------------------------------------------------------

def trig_tables(if_hz: float, sample_rate_hz: float, n: int, n0: int = 0):
    """16-bit signed cos/sin lookup values for samples ``n0 .. n0 + n - 1``."""
    ph = 2 * np.pi * if_hz * (n0 + np.arange(n)) / sample_rate_hz
    return (np.rint(TRIG_SCALE * np.cos(ph)).astype(np.int64),
            np.rint(TRIG_SCALE * np.sin(ph)).astype(np.int64))


def fs4_tables(n: int, n0: int = 0):
    """Exact cos/sin of pi*n/2: the {+1, 0, -1} coefficients of fs/4 mixing."""
    k = (n0 + np.arange(n)) % 4
    return np.array([1, 0, -1, 0])[k], np.array([0, 1, 0, -1])[k]


def _round_shift(x: np.ndarray, bits: int) -> np.ndarray:
    """Divide by 2**bits rounding half to even, in exact integer arithmetic."""
    if bits == 0:
        return x
    q, r = np.divmod(x, 1 << bits)
    half = 1 << (bits - 1)
    up = (r > half) | ((r == half) & (q % 2 == 1))
    return q + up


def mix(i_codes, q_codes, cos_tab, sin_tab, frac_bits: int = 0):
    """Multiply (I + jQ) by exp(-j w n) given integer cos/sin coefficient tables."""
    i = np.asarray(i_codes, dtype=np.int64)
    q = np.asarray(q_codes, dtype=np.int64)
    c = np.asarray(cos_tab, dtype=np.int64)
    s = np.asarray(sin_tab, dtype=np.int64)
    i_out = _round_shift(i * c + q * s, frac_bits)
    q_out = _round_shift(q * c - i * s, frac_bits)
    return i_out, q_out


def _mix_fast(i: np.ndarray, q: np.ndarray, n0: int = 0):
    # select and negate only: n%4 == 0: (I, Q), 1: (Q, -I), 2: (-I, -Q), 3: (-Q, I)
    k = (n0 + np.arange(i.shape[-1])) % 4
    i_out = np.where(k == 0, i, np.where(k == 1, q, np.where(k == 2, -i, -q)))
    q_out = np.where(k == 0, q, np.where(k == 1, -i, np.where(k == 2, -q, i)))
    return i_out, q_out


def digital_mix(stream: IQSampleStream, cfg: DemodConfig, n0: int = 0):
    """Digital downconversion of an IQ stream to baseband integers.

    The fast path (IF = fs/4) uses only selects and negations; the general
    path uses 16-bit trig tables and rounds the products back to input scale.
    """
    if cfg.sample_rate_hz != stream.sample_rate_hz:
        raise ValueError("stream and config sample rates differ")
    if cfg.fast_path:
        return _mix_fast(stream.i_codes, stream.q_codes, n0)
    c, s = trig_tables(cfg.if_frequency_hz, cfg.sample_rate_hz, len(stream), n0)
    return mix(stream.i_codes, stream.q_codes, c, s, TRIG_BITS - 1)


def mixer_latency_ps(cfg: DemodConfig) -> int:
    return MIXER_FAST_LATENCY_PS if cfg.fast_path else MIXER_GENERAL_LATENCY_PS


def daq_pipeline_latency(cfg: DemodConfig = DemodConfig()) -> dict[str, int]:
    return {"mixer": mixer_latency_ps(cfg), "accumulator": ACCUMULATOR_LATENCY_PS,
            "discriminator": DISCRIMINATOR_LATENCY_PS}


def accumulate(i_mixed, q_mixed, window_samples: int, drop_partial: bool = False):
    """Integer sums of mixed samples over consecutive, non-overlapping windows.

    Saturates to the 32-bit accumulator range. A trailing partial window is
    an error unless ``drop_partial``.
    """
    i = np.asarray(i_mixed, dtype=np.int64)
    q = np.asarray(q_mixed, dtype=np.int64)
    if window_samples < 1:
        raise ValueError("window_samples must be >= 1")
    if window_samples > MAX_WINDOW:
        raise ValueError(f"window_samples exceeds the accumulator cap of {MAX_WINDOW}")
    n = i.shape[-1]
    if window_samples > n:
        raise ValueError(f"window of {window_samples} samples exceeds stream length {n}")
    full = n // window_samples
    if full * window_samples != n and not drop_partial:
        raise ValueError(f"stream length {n} leaves a partial window of "
                         f"{n - full * window_samples} samples")
    shape = i.shape[:-1] + (full, window_samples)
    i_sum = i[..., : full * window_samples].reshape(shape).sum(axis=-1)
    q_sum = q[..., : full * window_samples].reshape(shape).sum(axis=-1)
    return np.clip(i_sum, ACC_MIN, ACC_MAX), np.clip(q_sum, ACC_MIN, ACC_MAX)


# -- state discrimination ------------------------------------------------------------

def rotate(i, q, angle_rad: float):
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    i = np.asarray(i, dtype=float)
    q = np.asarray(q, dtype=float)
    return i * c - q * s, i * s + q * c


def classify(i_sum, q_sum, rotation_rad: float, threshold: float) -> np.ndarray:
    """Vectorized state decision: excited iff rotated I > threshold."""
    ri, _ = rotate(i_sum, q_sum, rotation_rad)
    return ri > threshold


def discriminate(point, rotation_rad: float, threshold: float, *, timestamp_ps: int = 0,
                 source: str = "DAQ") -> tuple[QubitState, TriggerEvent | None]:
    """Decide the qubit state of one integrated point; excited emits a feedback trigger.

    A point exactly on the threshold is ground.
    """
    excited = bool(classify(point[0], point[1], rotation_rad, threshold))
    if not excited:
        return QubitState.GROUND, None
    return QubitState.EXCITED, TriggerEvent(timestamp_ps, source, "feedback", level=2)


def calibrate_discriminator(ground_point, excited_point) -> tuple[float, int]:
    """Rotation aligning ground->excited with +I, and the midpoint threshold."""
    g = complex(*ground_point)
    e = complex(*excited_point)
    if g == e:
        raise ValueError("ground and excited points coincide")
    rot = -float(np.angle(e - g))
    mid = (g + e) / 2
    ri, _ = rotate(mid.real, mid.imag, rot)
    return rot, int(np.rint(ri))


# -- multi-channel demodulation -----------------------------------------------------

# eight readout tones on an fs/64 grid around fs/4: whole cycles per 256-sample window
EIGHT_CHANNEL_PLAN_HZ = tuple(ADC_RATE_HZ / 4 + k * ADC_RATE_HZ / 64 for k in range(-4, 4))


def _boxcar_decimate(i: np.ndarray, q: np.ndarray):
    n = i.shape[-1] // 2 * 2
    return i[..., 0:n:2] + i[..., 1:n:2], q[..., 0:n:2] + q[..., 1:n:2]


def decimation_response(f_offset_hz, sample_rate_hz: float = ADC_RATE_HZ):
    """Gain of the two boxcar-and-halve stages for a baseband offset frequency."""
    w = 2 * np.pi * np.asarray(f_offset_hz) / sample_rate_hz
    return 4 * np.cos(w / 2) * np.cos(w)


def check_channel_plan(channels: Sequence[float], window_samples: int,
                       sample_rate_hz: float = ADC_RATE_HZ,
                       band: tuple[float, float] = (4.5e6, 400e6)) -> None:
    fs4 = sample_rate_hz / 4
    for f in channels:
        if not band[0] <= f <= band[1]:
            raise ValueError(f"channel {f} Hz outside the input band {band}")
        if abs(f - fs4) >= sample_rate_hz / 8:
            raise ValueError(f"channel {f} Hz falls outside the decimated band around fs/4")
    bin_width = sample_rate_hz / window_samples
    bad = [(a, b) for k, a in enumerate(channels) for b in channels[k + 1:]
           if abs(a - b) < 2 * bin_width]
    if bad:
        pairs = ", ".join(f"({a:g}, {b:g})" for a, b in bad)
        raise ValueError(f"channel spacing below {2 * bin_width:g} Hz for pairs {pairs}")


def multi_channel_demod(stream: IQSampleStream, channels: Sequence[float],
                        window_samples: int) -> np.ndarray:
    """Demodulate several readout tones through the shared fs/4 + double-decimation front end.

    Returns complex per-channel, per-window results scaled to match a
    full-rate demodulation ``sum_n x[n] exp(-j 2 pi f n / fs)``.
    """
    if window_samples % 4:
        raise ValueError("window_samples must be a multiple of the decimation factor 4")
    fs = stream.sample_rate_hz
    check_channel_plan(channels, window_samples, fs)
    i, q = _mix_fast(stream.i_codes, stream.q_codes)
    i, q = _boxcar_decimate(i, q)
    i, q = _boxcar_decimate(i, q)
    z = i + 1j * q
    m = np.arange(z.shape[-1])
    # each decimated sample sits 1.5 input samples after its first contributor
    t = 4 * m + 1.5
    n_win = len(stream) // window_samples
    w = window_samples // 4
    out = []
    for f in channels:
        off = f - fs / 4
        rot = z * np.exp(-2j * np.pi * off * t / fs)
        sums = rot[..., : n_win * w].reshape(rot.shape[:-1] + (n_win, w)).sum(axis=-1)
        out.append(sums * 4 / decimation_response(off, fs))
    return np.stack(out, axis=-2)


def full_rate_demod(stream: IQSampleStream, channels: Sequence[float],
                    window_samples: int) -> np.ndarray:
    """Reference per-channel demodulation at the full sample rate."""
    x = stream.i_codes + 1j * stream.q_codes
    n = np.arange(x.shape[-1])
    n_win = len(stream) // window_samples
    out = []
    for f in channels:
        y = x * np.exp(-2j * np.pi * f * n / stream.sample_rate_hz)
        out.append(y[..., : n_win * window_samples]
                   .reshape(y.shape[:-1] + (n_win, window_samples)).sum(axis=-1))
    return np.stack(out, axis=-2)


# -- spectral metrics ----------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumMetrics:
    snr_db: float
    thd_dbc: float
    sfdr_dbc: float
    enob_bits: float
    fundamental_bin: int
    fundamental_hz: float | None = None


_LOBE = 5


def spectrum_metrics(x, sample_rate_hz: float | None = None, n_harmonics: int = 6,
                     lobe_bins: int = _LOBE) -> SpectrumMetrics:
    """SNR, THD, SFDR and ENOB of a single-tone record.

    Uses a 4-term Blackman-Harris window. The fundamental is the largest
    non-DC bin; harmonics 2..``n_harmonics`` are folded by aliasing; noise
    is everything else, rescaled for the excluded bins. SFDR and THD are
    reported in dBc (negative), ENOB = (SNR - 1.76) / 6.02.
    """
    x = np.asarray(x)
    n = x.shape[-1]
    if x.ndim != 1 or n < 4096 or n & (n - 1):
        raise ValueError("record must be 1-D with a power-of-two length >= 4096")
    win = blackmanharris(n, sym=False)
    is_complex = np.iscomplexobj(x)
    if is_complex:
        p = np.abs(np.fft.fft((x - x.mean()) * win)) ** 2
    else:
        p = np.abs(np.fft.rfft((x - x.mean()) * win)) ** 2
    nb = p.size

    def lobe(k: int) -> np.ndarray:
        idx = np.arange(k - lobe_bins, k + lobe_bins + 1)
        return np.mod(idx, n) if is_complex else idx[(idx >= 0) & (idx < nb)]

    dc = lobe(0)
    masked = p.copy()
    masked[dc] = 0.0
    k0 = int(np.argmax(masked))
    positive = masked[masked > 0]
    if positive.size == 0 or masked[k0] <= 10 * np.median(positive):
        raise ValueError("no tone found in the record")
    used = np.zeros(nb, dtype=bool)
    used[dc] = True
    sig_idx = lobe(k0)
    p_sig = p[sig_idx].sum()
    used[sig_idx] = True
    p_harm = 0.0
    for h in range(2, n_harmonics + 1):
        kh = (h * k0) % n
        if not is_complex and kh > n // 2:
            kh = n - kh
        idx = lobe(kh)
        idx = idx[~used[idx]]
        p_harm += p[idx].sum()
        used[idx] = True
    noise_bins = ~used
    p_noise = p[noise_bins].sum() * nb / max(noise_bins.sum(), 1)
    # worst spur: largest lobe-sized power group outside fundamental and DC
    kernel = np.ones(2 * lobe_bins + 1)
    spur = masked.copy()
    spur[sig_idx] = 0.0
    if is_complex:
        grouped = np.real(np.fft.ifft(np.fft.fft(spur) * np.fft.fft(
            np.roll(np.r_[kernel, np.zeros(n - kernel.size)], -lobe_bins))))
    else:
        grouped = np.convolve(spur, kernel, mode="same")
    p_spur = max(grouped.max(), np.finfo(float).tiny)
    snr = 10 * np.log10(p_sig / p_noise)
    thd = 10 * np.log10(p_harm / p_sig) if p_harm > 0 else -np.inf
    return SpectrumMetrics(
        snr_db=float(snr),
        thd_dbc=float(thd),
        sfdr_dbc=float(10 * np.log10(p_spur / p_sig)),
        enob_bits=float((snr - 1.76) / 6.02),
        fundamental_bin=k0,
        fundamental_hz=None if sample_rate_hz is None else k0 * sample_rate_hz / n,
    )
