"""Arbitrary waveform generator model.

Waveforms are stored compressed as a table of pulse envelopes plus a
schedule of (envelope, start offset, scale) entries relative to a level-2
trigger, under an on-chip memory budget. Rendering expands the schedule to
14-bit DAC codes at 2 GSa/s. The module also covers IQ upconversion with
mixer imperfections, digital pre-compensation of those imperfections, and
the DAC power-up phase ambiguity with its calibration.
"""
from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .timing_fabric import TriggerEvent, _rng

DAC_BITS = 14
DAC_MIN = -(1 << (DAC_BITS - 1))
DAC_MAX = (1 << (DAC_BITS - 1)) - 1
DAC_RATE_HZ = 2e9
FPGA_CLOCK_PS = 4_000

BRAM_BUDGET_BITS = 30_000_000
SCHEDULE_ENTRY_BITS = 64

# waveform generator pipeline: 4 clocks at 250 MHz
AWG_DSP_LATENCY_PS = 4 * FPGA_CLOCK_PS

OUTPUT_FILTER_HZ = 530e6


class MemoryBudgetError(ValueError):
    def __init__(self, required_bits: int, available_bits: int):
        super().__init__(f"sequence needs {required_bits} bits but only "
                         f"{available_bits} bits of waveform memory are available")
        self.required_bits = required_bits
        self.available_bits = available_bits


class AmbiguousCorrelationError(ValueError):
    pass


class PrecompensationError(RuntimeError):
    def __init__(self, message: str, best: MixerCorrection):
        super().__init__(message)
        self.best = best


# -- sequences -----------------------------------------------------------------

@dataclass(frozen=True)
class PulseEnvelope:
    name: str
    samples: np.ndarray
    sample_rate_hz: float = DAC_RATE_HZ

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 1 or s.size < 1:
            raise ValueError(f"envelope {self.name!r} must be a non-empty 1-D sequence")
        if not np.all(np.asarray(s) == np.round(s)):
            raise ValueError(f"envelope {self.name!r} has non-integer codes")
        s = s.astype(np.int64)
        if s.min() < DAC_MIN or s.max() > DAC_MAX:
            raise ValueError(f"envelope {self.name!r} exceeds the 14-bit code range")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class ScheduleEntry:
    envelope: str
    offset_samples: int
    scale: float = 1.0
    phase_tag: str = ""

    def __post_init__(self):
        if self.offset_samples < 0:
            raise ValueError("offset_samples must be >= 0")
        if not -1.0 <= self.scale <= 1.0:
            raise ValueError(f"scale {self.scale} outside [-1, 1]")
        object.__setattr__(self, "offset_samples", int(self.offset_samples))


@dataclass(frozen=True)
class PulseSequence:
    envelopes: Mapping[str, PulseEnvelope] = field(default_factory=dict)
    schedule: tuple[ScheduleEntry, ...] = ()
    memory_budget_bits: int = BRAM_BUDGET_BITS

    def __post_init__(self):
        envs = self.envelopes
        if not isinstance(envs, Mapping):
            envs = {e.name: e for e in envs}
        object.__setattr__(self, "envelopes", dict(envs))
        object.__setattr__(self, "schedule", tuple(self.schedule))
        for i, entry in enumerate(self.schedule):
            if entry.envelope not in self.envelopes:
                raise KeyError(f"schedule[{i}] references undefined envelope {entry.envelope!r}")

    @property
    def stored_bits(self) -> int:
        env_bits = sum(len(e) for e in self.envelopes.values()) * DAC_BITS
        return env_bits + SCHEDULE_ENTRY_BITS * len(self.schedule)

    @property
    def length_samples(self) -> int:
        return max((e.offset_samples + len(self.envelopes[e.envelope]) for e in self.schedule),
                   default=0)


def gaussian_envelope(name: str, sigma_samples: float, amplitude: int = DAC_MAX,
                      truncate: float = 4.0) -> PulseEnvelope:
    half = int(np.ceil(truncate * sigma_samples))
    n = np.arange(-half, half + 1)
    return PulseEnvelope(name, np.rint(amplitude * np.exp(-0.5 * (n / sigma_samples) ** 2)))


def scaled_codes(samples: np.ndarray, scale: float) -> np.ndarray:
    """Scale in floating point, then round half to even."""
    return np.rint(samples * float(scale)).astype(np.int64)


def saturate(codes: np.ndarray) -> np.ndarray:
    return np.clip(codes, DAC_MIN, DAC_MAX)


def dense_waveform(seq: PulseSequence, duration_samples: int) -> np.ndarray:
    """Sum every scheduled envelope at its offset, then clamp to 14 bits.

    This is the uncompressed reference the renderer must reproduce.
    """
    acc = np.zeros(duration_samples, dtype=np.int64)
    for entry in seq.schedule:
        codes = scaled_codes(seq.envelopes[entry.envelope].samples, entry.scale)
        for j, c in enumerate(codes):
            n = entry.offset_samples + j
            if n < duration_samples:
                acc[n] += c
    return saturate(acc)


def compress_waveform(dense, min_gap: int = 1, memory_budget_bits: int = BRAM_BUDGET_BITS,
                      prefix: str = "seg") -> PulseSequence:
    """Split a dense code stream into deduplicated envelopes separated by idle time.

    Runs of non-zero samples separated by at least ``min_gap`` zeros become
    schedule entries; identical runs share one stored envelope.
    """
    x = np.asarray(dense, dtype=np.int64)
    nz = np.flatnonzero(x)
    envelopes: dict[bytes, PulseEnvelope] = {}
    schedule = []
    if nz.size:
        breaks = np.flatnonzero(np.diff(nz) > min_gap)
        starts = np.r_[nz[0], nz[breaks + 1]]
        stops = np.r_[nz[breaks], nz[-1]] + 1
        for a, b in zip(starts, stops):
            seg = x[a:b]
            key = seg.tobytes()
            if key not in envelopes:
                envelopes[key] = PulseEnvelope(f"{prefix}{len(envelopes)}", seg)
            schedule.append(ScheduleEntry(envelopes[key].name, int(a)))
    return PulseSequence({e.name: e for e in envelopes.values()}, tuple(schedule),
                         memory_budget_bits)


@dataclass(frozen=True)
class Rendered:
    codes: np.ndarray
    start_timestamp_ps: int
    latency_ps: int = AWG_DSP_LATENCY_PS
    sample_rate_hz: float = DAC_RATE_HZ

    def time_ps(self) -> np.ndarray:
        step = round(1e12 / self.sample_rate_hz)
        return self.start_timestamp_ps + self.latency_ps + step * np.arange(self.codes.size)


class Awg:
    """Waveform memory of one AWG channel.

    Sequences are immutable once loaded; :meth:`render` is a pure function
    of the handle and the trigger.
    """

    def __init__(self, memory_budget_bits: int = BRAM_BUDGET_BITS):
        self.memory_budget_bits = memory_budget_bits
        self._sequences: dict[int, PulseSequence] = {}

    @property
    def used_bits(self) -> int:
        return sum(s.stored_bits for s in self._sequences.values())

    def load_sequence(self, seq: PulseSequence) -> int:
        budget = min(seq.memory_budget_bits, self.memory_budget_bits)
        required = seq.stored_bits
        if required > budget - self.used_bits:
            raise MemoryBudgetError(required, budget - self.used_bits)
        handle = len(self._sequences)
        self._sequences[handle] = seq
        return handle

    def stored_bits(self, handle: int) -> int:
        return self._get(handle).stored_bits

    def _get(self, handle: int) -> PulseSequence:
        try:
            return self._sequences[handle]
        except (KeyError, TypeError):
            raise KeyError(f"unknown sequence handle {handle!r}") from None

    def render(self, handle: int, trigger: TriggerEvent, duration_samples: int) -> Rendered:
        seq = self._get(handle)
        if trigger.level != 2:
            raise ValueError("waveform output is gated by level-2 triggers only")
        acc = np.zeros(duration_samples, dtype=np.int64)
        for entry in seq.schedule:
            a = entry.offset_samples
            if a >= duration_samples:
                continue
            codes = scaled_codes(seq.envelopes[entry.envelope].samples, entry.scale)
            b = min(duration_samples, a + codes.size)
            acc[a:b] += codes[: b - a]
        return Rendered(saturate(acc), trigger.timestamp_ps)


# -- sequence files ----------------------------------------------------------------

def sequence_to_dict(seq: PulseSequence) -> dict:
    return {
        "envelopes": [{"name": e.name, "samples": [int(v) for v in e.samples]}
                      for e in seq.envelopes.values()],
        "schedule": [{"envelope": s.envelope, "offset_samples": s.offset_samples,
                      "scale": float(s.scale), "phase_tag": s.phase_tag} for s in seq.schedule],
        "memory_budget_bits": int(seq.memory_budget_bits),
    }


def sequence_from_dict(doc: Mapping) -> PulseSequence:
    envs = {e["name"]: PulseEnvelope(e["name"], np.asarray(e["samples"]))
            for e in doc.get("envelopes", [])}
    sched = tuple(ScheduleEntry(s["envelope"], s["offset_samples"], s.get("scale", 1.0),
                                s.get("phase_tag", "")) for s in doc.get("schedule", []))
    return PulseSequence(envs, sched, doc.get("memory_budget_bits", BRAM_BUDGET_BITS))


def save_sequence(seq: PulseSequence, path) -> None:
    path = Path(path)
    doc = sequence_to_dict(seq)
    if path.suffix == ".json":
        path.write_text(json.dumps(doc, indent=1))
    else:
        path.write_text(yaml.safe_dump(doc, sort_keys=False))


def read_sequence(path) -> PulseSequence:
    path = Path(path)
    text = path.read_text()
    doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    return sequence_from_dict(doc or {})


# -- DAC synchronization ---------------------------------------------------------------

DAC_OFFSETS = (-2, -1, 0, 1, 2)


def dac_power_up(n_channels: int, seed) -> np.ndarray:
    """Per-channel sample offsets left by the DAC clock dividers at power-up."""
    rng = _rng(seed)
    return rng.choice(np.array(DAC_OFFSETS), size=n_channels)


def shift_samples(x, offset: int) -> np.ndarray:
    """Delay ``x`` by ``offset`` samples (negative advances), zero filled."""
    x = np.asarray(x)
    out = np.zeros_like(x)
    if offset >= 0:
        out[offset:] = x[: x.size - offset]
    else:
        out[:offset] = x[-offset:]
    return out


def reference_edge(length: int = 64, position: int = 32, amplitude: int = 4096) -> np.ndarray:
    x = np.zeros(length, dtype=np.int64)
    x[position:] = amplitude
    return x


def measure_lag(x, reference) -> int:
    """Lag of ``x`` relative to ``reference`` in samples, from edge cross-correlation."""
    dx = np.diff(np.asarray(x, dtype=float))
    dr = np.diff(np.asarray(reference, dtype=float))
    if not np.any(dx) or not np.any(dr):
        raise AmbiguousCorrelationError("flat waveform: no edge to correlate")
    corr = np.correlate(dx, dr, mode="full")
    peak = corr.max()
    where = np.flatnonzero(np.isclose(corr, peak, rtol=1e-9, atol=0))
    if where.size != 1:
        raise AmbiguousCorrelationError(f"correlation peak is not unique ({where.size} maxima)")
    return int(where[0]) - (dr.size - 1)


def calibrate_dac_sync(channels: Sequence, reference=None) -> np.ndarray:
    """Integer sample corrections that align every channel to the reference edge.

    ``channels`` are the waveforms captured from each DAC while all render the
    same reference edge; ``reference`` defaults to the first channel.
    """
    ref = channels[0] if reference is None else reference
    return np.array([-measure_lag(ch, ref) for ch in channels], dtype=int)


# -- analog reconstruction and mixer -----------------------------------------------------

def reconstruct(codes, oversample: int = 4, cutoff_hz: float = OUTPUT_FILTER_HZ,
                sample_rate_hz: float = DAC_RATE_HZ) -> np.ndarray:
    """Zero-order hold followed by an ideal low-pass filter (circular, via FFT).

    Returns the analog waveform in full-scale units on a grid ``oversample``
    times finer than the DAC clock.
    """
    x = np.repeat(np.asarray(codes, dtype=float) / (DAC_MAX + 1), oversample)
    spec = np.fft.rfft(x)
    f = np.fft.rfftfreq(x.size, 1.0 / (sample_rate_hz * oversample))
    spec[f > cutoff_hz] = 0.0
    return np.fft.irfft(spec, n=x.size)


@dataclass(frozen=True)
class MixerParams:
    lo_frequency_hz: float = 2e9
    dc_offset_i: float = 0.0
    dc_offset_q: float = 0.0
    gain_imbalance: float = 0.0
    phase_skew_rad: float = 0.0

    def __post_init__(self):
        if abs(self.dc_offset_i) >= 1 or abs(self.dc_offset_q) >= 1:
            raise ValueError("DC offsets must be fractions of full scale (|d| < 1)")
        if not (-2 < self.gain_imbalance < 2):
            raise ValueError("gain imbalance must keep both channel gains positive")

    @property
    def is_ideal(self) -> bool:
        return (self.dc_offset_i == 0 and self.dc_offset_q == 0 and self.gain_imbalance == 0
                and self.phase_skew_rad == 0)


def upconvert(i_stream, q_stream, params: MixerParams, sample_rate_hz: float,
              t0: float = 0.0) -> np.ndarray:
    """Real RF output of an IQ mixer with DC offsets, gain imbalance and phase skew."""
    i = np.asarray(i_stream, dtype=float)
    q = np.asarray(q_stream, dtype=float)
    if i.shape != q.shape:
        raise ValueError("I and Q streams must have equal length")
    t = t0 + np.arange(i.shape[-1]) / sample_rate_hz
    wt = 2 * np.pi * params.lo_frequency_hz * t
    eps = params.gain_imbalance
    return ((1 + eps / 2) * (i + params.dc_offset_i) * np.cos(wt)
            - (1 - eps / 2) * (q + params.dc_offset_q) * np.sin(wt + params.phase_skew_rad))


@dataclass(frozen=True)
class MixerCorrection:
    """Digital pre-distortion: ``[i', q'] = matrix @ [i, q] + offsets``."""

    offset_i: float = 0.0
    offset_q: float = 0.0
    matrix: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))

    def apply(self, i, q):
        (a, b), (c, d) = self.matrix
        i = np.asarray(i, dtype=float)
        q = np.asarray(q, dtype=float)
        return a * i + b * q + self.offset_i, c * i + d * q + self.offset_q

    def then(self, other: MixerCorrection) -> MixerCorrection:
        """Correction equivalent to applying ``other`` first, then ``self``."""
        m1 = np.array(self.matrix)
        m2 = np.array(other.matrix)
        m = m1 @ m2
        off = m1 @ np.array([other.offset_i, other.offset_q]) + np.array([self.offset_i, self.offset_q])
        return MixerCorrection(float(off[0]), float(off[1]), tuple(map(tuple, m.tolist())))

    def is_identity(self, tol: float = 1e-6) -> bool:
        return (abs(self.offset_i) < tol and abs(self.offset_q) < tol
                and np.allclose(self.matrix, np.eye(2), atol=tol, rtol=0))


@dataclass(frozen=True)
class LeakageProbe:
    """Coherent single-sideband test tone used to measure mixer leakage."""

    if_hz: float = 100e6
    amplitude: float = 0.5
    sample_rate_hz: float = 8e9
    n_samples: int = 1 << 14

    def bin_of(self, f_hz: float) -> int:
        return int(round(f_hz * self.n_samples / self.sample_rate_hz))

    def snapped(self, f_hz: float) -> float:
        return self.bin_of(f_hz) * self.sample_rate_hz / self.n_samples


@dataclass(frozen=True)
class LeakageLevels:
    lo_dbc: float
    image_dbc: float


_DB_FLOOR = -400.0


def _db(power_ratio: float) -> float:
    return float(10 * np.log10(max(power_ratio, 10 ** (_DB_FLOOR / 10))))


def _leakage_powers(params: MixerParams, probe: LeakageProbe,
                    correction: MixerCorrection | None):
    f_if = probe.snapped(probe.if_hz)
    f_lo = probe.snapped(params.lo_frequency_hz)
    if not 0 < f_lo - f_if and f_lo + f_if < probe.sample_rate_hz / 2:
        raise ValueError("probe sample rate too low for the LO and sideband")
    n = np.arange(probe.n_samples)
    ph = 2 * np.pi * f_if * n / probe.sample_rate_hz
    i = probe.amplitude * np.cos(ph)
    q = probe.amplitude * np.sin(ph)
    if correction is not None:
        i, q = correction.apply(i, q)
    p = MixerParams(f_lo, params.dc_offset_i, params.dc_offset_q,
                    params.gain_imbalance, params.phase_skew_rad)
    spec = np.abs(np.fft.rfft(upconvert(i, q, p, probe.sample_rate_hz))) ** 2
    sig = spec[probe.bin_of(f_lo + f_if)]
    return spec[probe.bin_of(f_lo)], spec[probe.bin_of(f_lo - f_if)], sig


def leakage_levels(params: MixerParams, correction: MixerCorrection | None = None,
                   probe: LeakageProbe = LeakageProbe()) -> LeakageLevels:
    """LO and image levels (dBc) relative to the upper sideband, from an FFT."""
    lo, img, sig = _leakage_powers(params, probe, correction)
    return LeakageLevels(_db(lo / sig), _db(img / sig))


def analytic_leakage(params: MixerParams, amplitude: float = 0.5,
                     correction: MixerCorrection | None = None) -> LeakageLevels:
    """Closed-form LO and image levels of the mixer model for a SSB tone.

    The optional correction is folded in by linearity: the tone becomes
    ``A (a cos + b sin, c cos + d sin) + offsets``.
    """
    c = correction or MixerCorrection()
    (a, b), (cc, d) = c.matrix
    g1 = 1 + params.gain_imbalance / 2
    g2 = 1 - params.gain_imbalance / 2
    e = np.exp(1j * params.phase_skew_rad)
    # phasors of the I and Q drive at +IF: cos -> 1/2, sin -> -j/2
    i_pos = amplitude * (a - 1j * b) / 2
    q_pos = amplitude * (cc - 1j * d) / 2
    # cos(wt) carries I, -sin(wt + skew) carries Q; upper / lower sideband phasors
    usb = g1 * i_pos + 1j * g2 * e * q_pos
    lsb = g1 * np.conj(i_pos) + 1j * g2 * e * np.conj(q_pos)
    lo = g1 * (params.dc_offset_i + c.offset_i) + 1j * g2 * e * (params.dc_offset_q + c.offset_q)
    sig = abs(usb) ** 2
    return LeakageLevels(_db(abs(lo) ** 2 / sig), _db(abs(lsb) ** 2 / sig))


def analytic_correction(params: MixerParams) -> MixerCorrection:
    """Exact inverse of the mixer model (up to an overall gain)."""
    g1 = 1 + params.gain_imbalance / 2
    g2 = 1 - params.gain_imbalance / 2
    cd, sd = np.cos(params.phase_skew_rad), np.sin(params.phase_skew_rad)
    return MixerCorrection(-params.dc_offset_i, -params.dc_offset_q,
                           ((g2 * cd / g1, g2 * sd / g1), (0.0, 1.0)))


def _correction_from_vector(x) -> MixerCorrection:
    return MixerCorrection(float(x[0]), float(x[1]), ((float(x[2]), float(x[3])), (0.0, 1.0)))


def precompensate(params: MixerParams, existing: MixerCorrection | None = None,
                  probe: LeakageProbe = LeakageProbe(), max_iter: int = 200,
                  target_dbc: float = -50.0, tol: float = 1e-30) -> MixerCorrection:
    """Search offsets and an IQ gain/phase correction that null LO and image leakage.

    Derivative-free coordinate descent over (offset_i, offset_q, gain,
    cross-term); each coordinate step fits a parabola through three cost
    evaluations. The cost is LO-bin plus image-bin power from the probe FFT.
    When ``existing`` is given the search runs on the already-corrected
    chain and returns the additional correction.
    """
    base = existing

    def cost(x) -> float:
        corr = _correction_from_vector(x)
        if base is not None:
            corr = base.then(corr)
        lo, img, sig = _leakage_powers(params, probe, corr)
        return float((lo + img) / sig)

    x = np.array([0.0, 0.0, 1.0, 0.0])
    fx = cost(x)
    steps = np.array([1e-2, 1e-2, 1e-2, 1e-2])
    for _ in range(max_iter):
        prev = fx
        for k in range(4):
            h = steps[k]
            xm, xp = x.copy(), x.copy()
            xm[k] -= h
            xp[k] += h
            fm, fp = cost(xm), cost(xp)
            curv = fm + fp - 2 * fx
            if curv > 0:
                cand = x.copy()
                cand[k] -= h * (fp - fm) / (2 * curv)
                fc = cost(cand)
            else:
                cand, fc = (xm, fm) if fm < fp else (xp, fp)
            best = min((fc, 0), (fm, 1), (fp, 2), (fx, 3))
            if best[1] != 3:
                new = (cand, xm, xp)[best[1]]
                steps[k] = max(min(abs(new[k] - x[k]), 1e-2), 1e-12)
                x, fx = new, best[0]
            else:
                steps[k] = max(steps[k] / 4, 1e-12)
        if prev - fx <= tol or fx == 0:
            break
    corr = _correction_from_vector(x)
    levels = leakage_levels(params, corr if base is None else base.then(corr), probe)
    if max(levels.lo_dbc, levels.image_dbc) > target_dbc:
        raise PrecompensationError(
            f"pre-compensation stalled at LO {levels.lo_dbc:.1f} dBc, image "
            f"{levels.image_dbc:.1f} dBc (target {target_dbc} dBc)", corr)
    return corr
